//! Scale sweeps: run the construction across a list of scales, compute
//! both sides of the target inequalities, fit growth exponents, and gate
//! everything through hypothesis checks.
//!
//! A fit passes when the measured slope sits within `tol + eps_slack` of
//! the prediction; `eps_slack` absorbs the sub-polynomial factors that the
//! predictions carry implicitly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eval::{amplitude_at_lattice_points, AmplitudeStats, EvalPlan};
use crate::geometry::{build_x, build_y, fractal_certificate, Geometry};
use crate::norms::{l2_density_norm, lp_norm_on_set, rhs_refined_decoupling, WeightedBall};
use crate::params::BaseParams;
use crate::wavepacket::{
    cap_decompose, census_at, comparability, incidence_max_fraction, packetize_all,
};
use crate::{Error, Result};

/// Which experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Campaign {
    Amplitude,
    Decoupling,
    Corollary,
}

impl Campaign {
    pub fn name(self) -> &'static str {
        match self {
            Campaign::Amplitude => "amplitude",
            Campaign::Decoupling => "decoupling",
            Campaign::Corollary => "corollary",
        }
    }
}

/// A full sweep request: base parameters plus the scales to visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: BaseParams,
    pub r_list: Vec<f64>,
    pub campaigns: Vec<Campaign>,
    pub seed: u64,
    pub budget: u64,
}

pub const DEFAULT_BUDGET: u64 = 20_000_000_000;

impl SweepConfig {
    /// Default sweep for a dimension: dyadic scales, all campaigns.
    pub fn default_for(d: usize, sigma: f64) -> Result<SweepConfig> {
        let base = BaseParams::new(d, sigma);
        let exponents: std::ops::RangeInclusive<u32> = if d == 2 { 8..=13 } else { 7..=10 };
        let r_list = exponents.map(|k| (1u64 << k) as f64).collect();
        let cfg = SweepConfig {
            base,
            r_list,
            campaigns: vec![Campaign::Amplitude, Campaign::Decoupling, Campaign::Corollary],
            seed: 1,
            budget: DEFAULT_BUDGET,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_list.len() < 4 {
            return Err(Error::InvalidParams {
                name: "rList",
                detail: format!("need at least 4 scales for a fit, got {}", self.r_list.len()),
            });
        }
        for w in self.r_list.windows(2) {
            if w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::InvalidParams {
                    name: "rList",
                    detail: "scales must be strictly increasing".into(),
                });
            }
        }
        for &r in &self.r_list {
            self.base.at_scale(r)?.validate()?;
        }
        if self.campaigns.is_empty() {
            return Err(Error::InvalidParams {
                name: "campaigns",
                detail: "no campaign selected".into(),
            });
        }
        Ok(())
    }

    /// Independent random stream per (seed, campaign, scale index).
    pub fn rng_for(&self, tag: &str, r_index: usize) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(tag.as_bytes());
        h.update((r_index as u64).to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

/// Least-squares slope in log-log coordinates, with a pass verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    pub predicted: f64,
    pub tol: f64,
    pub eps_slack: f64,
    pub pass: bool,
}

pub fn fit_exponent(
    records: &[(f64, f64)],
    predicted: f64,
    tol: f64,
    eps_slack: f64,
) -> Result<ExponentFit> {
    if records.len() < 4 {
        return Err(Error::TooFewRecords(records.len()));
    }
    for &(r, v) in records {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::NonPositiveValue { r, value: v });
        }
    }
    let xs: Vec<f64> = records.iter().map(|(r, _)| r.ln()).collect();
    let ys: Vec<f64> = records.iter().map(|(_, v)| v.ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).abs())
        .fold(0.0f64, f64::max);
    let pass = (slope - predicted).abs() <= tol + eps_slack;
    Ok(ExponentFit {
        slope,
        intercept,
        max_residual,
        predicted,
        tol,
        eps_slack,
        pass,
    })
}

/// One scale's measurements in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub m: u32,
    pub comparability: Option<f64>,
    pub comparability_all: Option<f64>,
    pub incidence_max: Option<f64>,
    pub fractal_c: Option<f64>,
    pub x_cubes: usize,
    pub freq_cubes: usize,
}

/// Side conditions that must hold for the sweep to count as evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisChecks {
    pub comparability_bound: f64,
    pub worst_comparability: Option<f64>,
    pub comparability_pass: bool,
    pub fractal_bound: Option<f64>,
    pub worst_fractal: Option<f64>,
    pub fractal_pass: Option<bool>,
    pub notes: Vec<String>,
}

/// Sweep outcome for the two-sided inequalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessReport {
    pub campaign: Campaign,
    pub d: usize,
    pub sigma: f64,
    pub p_exponent: f64,
    pub rows: Vec<SweepRow>,
    pub lhs_fit: ExponentFit,
    pub rhs_fit: ExponentFit,
    pub ratio_fit: ExponentFit,
    pub m_fit: Option<ExponentFit>,
    pub incidence_fit: Option<ExponentFit>,
    pub hypothesis: HypothesisChecks,
    pub pass: bool,
}

/// One scale's peak statistics in the amplitude sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeRow {
    pub r: f64,
    pub stats: AmplitudeStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeReport {
    pub d: usize,
    pub sigma: f64,
    pub rows: Vec<AmplitudeRow>,
    pub fit: ExponentFit,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub pass: bool,
}

pub const AMPLITUDE_SAMPLES: usize = 128;

/// Peak-height sweep: median field size over the spatial lattice against
/// the predicted law `R^{(d-1)(sigma-1)}`.
pub fn run_amplitude_campaign(
    cfg: &SweepConfig,
    mut on_row: impl FnMut(&AmplitudeRow),
) -> Result<AmplitudeReport> {
    cfg.validate()?;
    check_budget(cfg, Campaign::Amplitude)?;
    let mut rows = Vec::with_capacity(cfg.r_list.len());
    for (i, &r) in cfg.r_list.iter().enumerate() {
        let p = cfg.base.at_scale(r)?;
        let plan = EvalPlan::for_params(&p, p.coherence_radius() + 2.0)?;
        let mut rng = cfg.rng_for("amplitude", i);
        let stats = amplitude_at_lattice_points(&p, &plan, AMPLITUDE_SAMPLES, &mut rng)?;
        let row = AmplitudeRow { r, stats };
        on_row(&row);
        rows.push(row);
    }
    let p0 = cfg.base.at_scale(cfg.r_list[0])?;
    let records: Vec<(f64, f64)> = rows
        .iter()
        .map(|row| (row.r, row.stats.median_ratio * row.stats.predicted))
        .collect();
    let predicted = (p0.d as f64 - 1.0) * (p0.sigma - 1.0);
    let fit = fit_exponent(&records, predicted, 0.05, cfg.base.eps_slack)?;
    let min_ratio = rows
        .iter()
        .map(|r| r.stats.min_ratio)
        .fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|r| r.stats.max_ratio).fold(0.0f64, f64::max);
    let pass = fit.pass && min_ratio >= 0.25 && max_ratio <= 4.0;
    Ok(AmplitudeReport {
        d: p0.d,
        sigma: p0.sigma,
        rows,
        fit,
        min_ratio,
        max_ratio,
        pass,
    })
}

/// Two-sided sweep of the refined inequality at the critical exponent.
pub fn run_decoupling_campaign(
    cfg: &SweepConfig,
    mut on_row: impl FnMut(&SweepRow),
) -> Result<SharpnessReport> {
    cfg.validate()?;
    check_budget(cfg, Campaign::Decoupling)?;
    let p0 = cfg.base.at_scale(cfg.r_list[0])?;
    let p_exp = p0.p_critical();
    let mut rows = Vec::with_capacity(cfg.r_list.len());
    let mut notes = Vec::new();
    for &r in cfg.r_list.iter() {
        let p = cfg.base.at_scale(r)?;
        let geo = Geometry::build(&p)?;
        let x = build_x(&p)?;
        let plan = EvalPlan::for_params(&p, p.coherence_radius())?;
        let values = plan.evaluate_batch(&x.points);
        let lhs = lp_norm_on_set(&x, &values, p_exp)?.value;

        let pieces = cap_decompose(&p, &geo)?;
        let packets = packetize_all(&p, &geo, &pieces)?;
        let comp = comparability(&packets, true);
        let comp_all = comparability(&packets, false);
        let census = census_at(&p, &packets, &x.points);
        let m = census.iter().copied().max().unwrap_or(0);
        if m == 0 {
            notes.push(format!("R = {r}: no active tube covers the lattice set"));
        }
        let ball = WeightedBall::for_params(&p);
        let (rhs, _) = rhs_refined_decoupling(&p, &geo, m.max(1), &ball, p_exp)?;
        let row = SweepRow {
            r,
            lhs,
            rhs,
            ratio: lhs / rhs,
            m,
            comparability: comp,
            comparability_all: comp_all,
            incidence_max: None,
            fractal_c: None,
            x_cubes: x.cube_count(),
            freq_cubes: geo.cubes.len(),
        };
        on_row(&row);
        rows.push(row);
    }
    let predicted = p0.sharpness_exponent();
    let lhs_fit = fit_records(&rows, |r| r.lhs, predicted, 0.05, cfg.base.eps_slack)?;
    let rhs_fit = fit_records(&rows, |r| r.rhs, predicted, 0.05, cfg.base.eps_slack)?;
    let ratio_fit = fit_records(&rows, |r| r.ratio, 0.0, 0.1, cfg.base.eps_slack)?;
    let m_records: Vec<(f64, f64)> = rows.iter().map(|r| (r.r, r.m as f64)).collect();
    let m_fit = fit_exponent(
        &m_records,
        (p0.d as f64 - 1.0) * p0.sigma,
        0.1,
        cfg.base.eps_slack,
    )?;
    let bound = 8.0;
    let worst = rows
        .iter()
        .filter_map(|r| r.comparability)
        .fold(None::<f64>, |acc, v| Some(acc.map_or(v, |a| a.max(v))));
    let comparability_pass = match worst {
        Some(w) => w <= bound,
        None => false,
    };
    if !comparability_pass {
        notes.push(format!(
            "active coherent packets spread beyond the {bound}x comparability band: {worst:?}"
        ));
    }
    let hypothesis = HypothesisChecks {
        comparability_bound: bound,
        worst_comparability: worst,
        comparability_pass,
        fractal_bound: None,
        worst_fractal: None,
        fractal_pass: None,
        notes,
    };
    let pass = lhs_fit.pass && rhs_fit.pass && ratio_fit.pass && m_fit.pass && comparability_pass;
    Ok(SharpnessReport {
        campaign: Campaign::Decoupling,
        d: p0.d,
        sigma: p0.sigma,
        p_exponent: p_exp,
        rows,
        lhs_fit,
        rhs_fit,
        ratio_fit,
        m_fit: Some(m_fit),
        incidence_fit: None,
        hypothesis,
        pass,
    })
}

pub const FRACTAL_CENTERS: usize = 64;

/// Square-mean sweep on the fractal lattice set, with incidence and
/// dimension certificates.
pub fn run_corollary_campaign(
    cfg: &SweepConfig,
    mut on_row: impl FnMut(&SweepRow),
) -> Result<SharpnessReport> {
    cfg.validate()?;
    check_budget(cfg, Campaign::Corollary)?;
    let p0 = cfg.base.at_scale(cfg.r_list[0])?;
    let mut rows = Vec::with_capacity(cfg.r_list.len());
    let mut notes = Vec::new();
    for (i, &r) in cfg.r_list.iter().enumerate() {
        let p = cfg.base.at_scale(r)?;
        let geo = Geometry::build(&p)?;
        let y = build_y(&p)?;
        let plan = EvalPlan::for_params(&p, p.coherence_radius())?;
        let values = plan.evaluate_batch(&y.points);
        let lhs = lp_norm_on_set(&y, &values, 2.0)?.value;
        let alpha = p.alpha();
        let rhs = r.powf((alpha - (p.d as f64 - 1.0) / 2.0) / (p.d as f64 + 1.0))
            * l2_density_norm(&p, geo.cubes.len());

        let pieces = cap_decompose(&p, &geo)?;
        let packets = packetize_all(&p, &geo, &pieces)?;
        let incidence = incidence_max_fraction(&p, &packets, &y);
        let mut rng = cfg.rng_for("corollary", i);
        let cert = fractal_certificate(&p, &y, FRACTAL_CENTERS, &mut rng);
        let row = SweepRow {
            r,
            lhs,
            rhs,
            ratio: lhs / rhs,
            m: 0,
            comparability: comparability(&packets, true),
            comparability_all: comparability(&packets, false),
            incidence_max: Some(incidence),
            fractal_c: Some(cert.constant),
            x_cubes: y.cube_count(),
            freq_cubes: geo.cubes.len(),
        };
        on_row(&row);
        rows.push(row);
    }
    let predicted = p0.l2_exponent();
    let lhs_fit = fit_records(&rows, |r| r.lhs, predicted, 0.05, cfg.base.eps_slack)?;
    let rhs_fit = fit_records(&rows, |r| r.rhs, predicted, 0.05, cfg.base.eps_slack)?;
    let ratio_fit = fit_records(&rows, |r| r.ratio, 0.0, 0.1, cfg.base.eps_slack)?;
    let inc_records: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.r, r.incidence_max.unwrap()))
        .collect();
    let inc_pred = -(p0.d as f64 - 1.0) / 2.0;
    let mut incidence_fit = fit_exponent(&inc_records, inc_pred, 0.1, cfg.base.eps_slack)?;
    // one-sided: concentration must fall at least this fast
    incidence_fit.pass = incidence_fit.slope <= inc_pred + incidence_fit.tol + incidence_fit.eps_slack;
    if !incidence_fit.pass {
        notes.push(format!(
            "tube incidence falls too slowly: slope {} vs bound {}",
            incidence_fit.slope, inc_pred
        ));
    }
    let fractal_bound = (1u64 << p0.d) as f64;
    let worst_fractal = rows
        .iter()
        .filter_map(|r| r.fractal_c)
        .fold(0.0f64, f64::max);
    let fractal_pass = worst_fractal <= fractal_bound && worst_fractal > 0.0;
    if !fractal_pass {
        notes.push(format!(
            "fractal constant {worst_fractal} exceeds the bound {fractal_bound}"
        ));
    }
    let hypothesis = HypothesisChecks {
        comparability_bound: 8.0,
        worst_comparability: rows
            .iter()
            .filter_map(|r| r.comparability)
            .fold(None::<f64>, |acc, v| Some(acc.map_or(v, |a| a.max(v)))),
        comparability_pass: true,
        fractal_bound: Some(fractal_bound),
        worst_fractal: Some(worst_fractal),
        fractal_pass: Some(fractal_pass),
        notes,
    };
    let pass = lhs_fit.pass && rhs_fit.pass && ratio_fit.pass && incidence_fit.pass && fractal_pass;
    Ok(SharpnessReport {
        campaign: Campaign::Corollary,
        d: p0.d,
        sigma: p0.sigma,
        p_exponent: 2.0,
        rows,
        lhs_fit,
        rhs_fit,
        ratio_fit,
        m_fit: None,
        incidence_fit: Some(incidence_fit),
        hypothesis,
        pass,
    })
}

fn fit_records(
    rows: &[SweepRow],
    f: impl Fn(&SweepRow) -> f64,
    predicted: f64,
    tol: f64,
    eps: f64,
) -> Result<ExponentFit> {
    let records: Vec<(f64, f64)> = rows.iter().map(|r| (r.r, f(r))).collect();
    fit_exponent(&records, predicted, tol, eps)
}

/// Rough upper estimate of the phase evaluations one campaign will spend,
/// used to refuse oversized requests up front.
pub fn estimate_phase_evals(cfg: &SweepConfig, campaign: Campaign) -> Result<u64> {
    let mut total: f64 = 0.0;
    for &r in &cfg.r_list {
        let p = cfg.base.at_scale(r)?;
        let d = p.d as f64;
        let axes = d - 1.0;
        let side = p.lattice_side_count() as f64;
        let nodes_near = axes * side * p.quad_order as f64; // reach ~ cd R: one panel
        let panels_far = (6.0f64 * 1.32 / 0.9).ceil();
        let nodes_far = axes * side * p.quad_order as f64 * panels_far;
        let nodes_mid = axes * side * p.quad_order as f64 * (6.0 / 0.9f64).ceil();
        // lattice set samples
        let per_axis = (1.0 / p.sample_spacing).round().max(1.0);
        let cube_vol = (2.0 * p.coherence_radius()).powf(d)
            / (p.r.powf(p.sigma).powf(axes) * p.r.powf(2.0 * p.sigma));
        let x_pts = cube_vol.max(1.0) * per_axis.powf(d);
        // packets: tubes per cap bounded by the slab shadow
        let caps = side.powf(axes);
        let tubes = 2.0 * (3.0 * p.r.sqrt() + 4.0).powf(axes);
        let cand = if p.d == 2 { 64.0 } else { 72.0 };
        let ball_pts = 64.0 * if p.d == 2 { 128.0 } else { 24.0 * 48.0 };
        match campaign {
            Campaign::Amplitude => {
                total += 2.0 * AMPLITUDE_SAMPLES as f64 * nodes_near;
            }
            Campaign::Decoupling => {
                total += x_pts * nodes_near;
                total += caps * tubes * cand * (nodes_mid / side);
                total += caps * ball_pts * (nodes_far / side);
            }
            Campaign::Corollary => {
                total += x_pts * nodes_near;
                total += caps * tubes * cand * (nodes_mid / side);
                total += FRACTAL_CENTERS as f64 * x_pts; // distance checks, not phases; cheap guard
            }
        }
    }
    Ok(total.ceil() as u64)
}

fn check_budget(cfg: &SweepConfig, campaign: Campaign) -> Result<()> {
    let needed = estimate_phase_evals(cfg, campaign)?;
    if needed > cfg.budget {
        return Err(Error::BudgetExceeded {
            needed,
            budget: cfg.budget,
        });
    }
    Ok(())
}
