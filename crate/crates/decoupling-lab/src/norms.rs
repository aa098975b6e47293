//! Norms on sampled sets and on the weighted ball.
//!
//! The weighted ball carries the weight `min(1, (R/|x|)^N)` with a large
//! decay power `N`: flat on `B_R`, a fast power tail outside.  The tail is
//! truncated where the weight falls below `1e-12`, i.e. at
//! `|x| = R * 10^{12/N}`, and the evaluation plans are sized for that
//! reach.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eval::EvalPlan;
use crate::geometry::{shell_grid, Geometry, PointBatch, SampledSet};
use crate::params::Params;
use crate::quadrature::pairwise_sum;
use crate::{Error, Result};

/// The weighted ball `B_R` with its quadrature resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedBall {
    pub radius: f64,
    pub decay_power: f64,
    pub shells: usize,
    pub angular: usize,
}

impl WeightedBall {
    pub fn for_params(p: &Params) -> Self {
        WeightedBall {
            radius: p.r,
            decay_power: 100.0,
            shells: 64,
            angular: if p.d == 2 { 128 } else { 24 },
        }
    }

    /// Radius beyond which the weight drops below `1e-12`.
    pub fn cutoff(&self) -> f64 {
        self.radius * 10f64.powf(12.0 / self.decay_power)
    }

    pub fn weight(&self, dist: f64) -> f64 {
        if dist <= self.radius {
            1.0
        } else {
            (self.radius / dist).powf(self.decay_power)
        }
    }

    /// Shell-grid sample of the ball out to the cutoff, with quadrature
    /// weights already multiplied by the decay weight.
    pub fn sample(&self, dim: usize) -> Result<(PointBatch, Vec<f64>)> {
        let origin = vec![0.0; dim];
        let (pts, mut wts) = shell_grid(dim, &origin, 0.0, self.cutoff(), self.shells, self.angular)?;
        for (i, w) in wts.iter_mut().enumerate() {
            let x = pts.point(i);
            let dist = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            *w *= self.weight(dist);
        }
        Ok((pts, wts))
    }
}

/// A computed norm with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    pub p_exp: f64,
    pub sample_count: usize,
}

/// `(sum_i w_i |v_i|^p)^(1/p)` over a sampled set.
pub fn lp_norm_on_set(set: &SampledSet, values: &[Complex64], p_exp: f64) -> Result<NormResult> {
    if set.is_empty() {
        return Err(Error::EmptySet("norm over an empty sampled set".into()));
    }
    if p_exp < 1.0 {
        return Err(Error::InvalidParams {
            name: "p",
            detail: format!("exponent {p_exp} below 1"),
        });
    }
    assert_eq!(values.len(), set.len());
    let terms: Vec<f64> = values
        .iter()
        .zip(&set.weights)
        .map(|(v, w)| w * v.norm().powf(p_exp))
        .collect();
    Ok(NormResult {
        value: pairwise_sum(&terms).powf(1.0 / p_exp),
        p_exp,
        sample_count: set.len(),
    })
}

/// Weighted-ball L^p norm of whatever the plan evaluates.  The plan's
/// reach must cover the ball cutoff.
pub fn lp_norm_weighted(plan: &EvalPlan, ball: &WeightedBall, p_exp: f64) -> Result<NormResult> {
    if plan.reach + 1e-9 < ball.cutoff() {
        return Err(Error::InvalidParams {
            name: "quadOrder",
            detail: format!(
                "plan reach {} below the weighted-ball cutoff {}",
                plan.reach,
                ball.cutoff()
            ),
        });
    }
    let (pts, wts) = ball.sample(plan.dim)?;
    let values = plan.evaluate_batch(&pts);
    let terms: Vec<f64> = values
        .iter()
        .zip(&wts)
        .map(|(v, w)| w * v.norm().powf(p_exp))
        .collect();
    Ok(NormResult {
        value: pairwise_sum(&terms).powf(1.0 / p_exp),
        p_exp,
        sample_count: pts.len(),
    })
}

/// Right side of the refined inequality at exponent `p`:
/// `M^{1/2 - 1/p} (sum_caps ||g_cap||_p^p)^{1/p}`, cap norms on the
/// weighted ball.  Returns the value and the per-cap norms.
pub fn rhs_refined_decoupling(
    p: &Params,
    geo: &Geometry,
    m: u32,
    ball: &WeightedBall,
    p_exp: f64,
) -> Result<(f64, Vec<NormResult>)> {
    if m == 0 {
        return Err(Error::EmptySet("census maximum is zero".into()));
    }
    let reach = ball.cutoff();
    let mut per_cap = Vec::with_capacity(geo.nonempty_caps.len());
    for &cap_id in &geo.nonempty_caps {
        let cube = geo.caps[cap_id].cubes[0];
        let plan = EvalPlan::for_cubes(p, &geo.cubes, &[cube], reach)?;
        per_cap.push(lp_norm_weighted(&plan, ball, p_exp)?);
    }
    let powered: Vec<f64> = per_cap.iter().map(|n| n.value.powf(p_exp)).collect();
    let sum = pairwise_sum(&powered).powf(1.0 / p_exp);
    let value = (m as f64).powf(0.5 - 1.0 / p_exp) * sum;
    Ok((value, per_cap))
}

/// The square-mean size of the frequency density:
/// `sqrt(cube_count * (2/R)^{d-1})`.
pub fn l2_density_norm(p: &Params, cube_count: usize) -> f64 {
    (cube_count as f64 * (2.0 / p.r).powi(p.d as i32 - 1)).sqrt()
}

/// Relative change of a weighted norm when the ball resolution doubles.
/// Small values certify the shell grid is fine enough.
pub fn weighted_norm_refinement_gap(
    p: &Params,
    geo: &Geometry,
    ball: &WeightedBall,
    p_exp: f64,
) -> Result<f64> {
    let cube = geo.caps[geo.nonempty_caps[0]].cubes[0];
    let plan = EvalPlan::for_cubes(p, &geo.cubes, &[cube], ball.cutoff())?;
    let coarse = lp_norm_weighted(&plan, ball, p_exp)?;
    let fine_ball = WeightedBall {
        shells: ball.shells * 2,
        angular: ball.angular * 2,
        ..ball.clone()
    };
    let fine = lp_norm_weighted(&plan, &fine_ball, p_exp)?;
    Ok((coarse.value - fine.value).abs() / fine.value)
}
