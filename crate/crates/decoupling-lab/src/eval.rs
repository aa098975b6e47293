//! Evaluation of the lattice field: the superposition of unit-amplitude
//! plane-wave integrals over the frequency cubes, with the quadratic phase
//! `x' . xi' + x_d |xi'|^2`.
//!
//! Two plan shapes are kept.  The full lattice is a product of identical
//! one-dimensional interval families, so the field factorizes into a product
//! of per-axis sums — linear instead of multiplicative cost in the cube
//! count.  Arbitrary cube subsets (a cap, a custom list) use the per-cube
//! tensor form.  Both share one per-point kernel, so serial and parallel
//! evaluation are bit-identical.
//!
//! Quadrature panels per cube axis scale with the evaluation radius: the
//! phase varies by up to `3 * reach * 2 / R` cycles across a cube axis, and
//! each composite panel of the base rule resolves about one cycle to full
//! precision.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{lattice_points, norm, FrequencyCube, PointBatch};
use crate::params::Params;
use crate::quadrature::panel_rule;
use crate::{parallel, Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[inline]
fn cis(turns: f64) -> Complex64 {
    let (s, c) = (TWO_PI * turns).sin_cos();
    Complex64::new(c, s)
}

/// Quadrature nodes for one 1-D family of intervals.
#[derive(Debug, Clone)]
pub struct AxisTable {
    pub nodes: Vec<f64>,
    pub nodes_sq: Vec<f64>,
    pub weights: Vec<f64>,
}

impl AxisTable {
    fn from_intervals(intervals: &[(f64, f64)], order: usize, panels: usize) -> Self {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for &(center, hw) in intervals {
            let (n, w) = panel_rule(center, hw, order, panels);
            nodes.extend(n);
            weights.extend(w);
        }
        let nodes_sq = nodes.iter().map(|v| v * v).collect();
        AxisTable {
            nodes,
            nodes_sq,
            weights,
        }
    }
}

#[derive(Debug, Clone)]
pub enum PlanKind {
    /// One shared axis table; the field is the product of the per-axis sums.
    Product { axis: AxisTable },
    /// Explicit cube list; per cube the product of its per-axis sums.
    Cubes { cubes: Vec<Vec<AxisTable>> },
}

/// A ready-to-run evaluation plan for one cube collection.
#[derive(Debug, Clone)]
pub struct EvalPlan {
    pub dim: usize,
    pub quad_order: usize,
    pub panels: usize,
    pub reach: f64,
    /// Exact value of the field at the origin: the total frequency measure.
    pub total_mass: f64,
    pub kind: PlanKind,
}

fn panels_for_reach(p: &Params, reach: f64) -> usize {
    let cycles = 6.0 * reach.max(0.0) / p.r;
    ((cycles / 0.9).ceil() as usize).max(1)
}

impl EvalPlan {
    /// Plan for the full lattice, valid out to `|x| <= reach`.
    pub fn for_params(p: &Params, reach: f64) -> Result<EvalPlan> {
        p.validate()?;
        let side = p.lattice_side_count();
        if side < 2 {
            return Err(Error::DegenerateLattice {
                r_sigma: p.r.powf(p.sigma),
            });
        }
        let hw = p.cube_half_width();
        let spacing = p.freq_spacing();
        let intervals: Vec<(f64, f64)> = (1..=side as i64)
            .map(|l| (l as f64 * spacing, hw))
            .collect();
        let panels = panels_for_reach(p, reach);
        let axis = AxisTable::from_intervals(&intervals, p.quad_order, panels);
        let axes = p.d - 1;
        let total_mass = (side as f64 * 2.0 * hw).powi(axes as i32);
        Ok(EvalPlan {
            dim: p.d,
            quad_order: p.quad_order,
            panels,
            reach,
            total_mass,
            kind: PlanKind::Product { axis },
        })
    }

    /// Plan for an explicit cube subset (`indices` into `cubes`).
    pub fn for_cubes(p: &Params, cubes: &[FrequencyCube], indices: &[usize], reach: f64) -> Result<EvalPlan> {
        p.validate()?;
        if indices.is_empty() {
            return Err(Error::EmptySet("cube subset for evaluation".into()));
        }
        let panels = panels_for_reach(p, reach);
        let axes = p.d - 1;
        let mut per_cube = Vec::with_capacity(indices.len());
        let mut total_mass = 0.0;
        for &ci in indices {
            let cube = &cubes[ci];
            let tables: Vec<AxisTable> = (0..axes)
                .map(|a| {
                    AxisTable::from_intervals(
                        &[(cube.center[a], cube.half_width)],
                        p.quad_order,
                        panels,
                    )
                })
                .collect();
            total_mass += (2.0 * cube.half_width).powi(axes as i32);
            per_cube.push(tables);
        }
        Ok(EvalPlan {
            dim: p.d,
            quad_order: p.quad_order,
            panels,
            reach,
            total_mass,
            kind: PlanKind::Cubes { cubes: per_cube },
        })
    }

    /// Phase evaluations performed per point, for budgets and throughput.
    pub fn phase_evals_per_point(&self) -> u64 {
        match &self.kind {
            PlanKind::Product { axis } => (self.dim as u64 - 1) * axis.nodes.len() as u64,
            PlanKind::Cubes { cubes } => cubes
                .iter()
                .map(|t| t.iter().map(|a| a.nodes.len() as u64).sum::<u64>())
                .sum(),
        }
    }

    #[inline]
    fn axis_sum(table: &AxisTable, xj: f64, xd: f64) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for ((&xi, &xi_sq), &w) in table
            .nodes
            .iter()
            .zip(&table.nodes_sq)
            .zip(&table.weights)
        {
            s += w * cis(xj * xi + xd * xi_sq);
        }
        s
    }

    /// Field value at one point.
    pub fn eval_point(&self, x: &[f64]) -> Complex64 {
        debug_assert_eq!(x.len(), self.dim);
        let xd = x[self.dim - 1];
        match &self.kind {
            PlanKind::Product { axis } => {
                let mut acc = Complex64::new(1.0, 0.0);
                for &xj in &x[..self.dim - 1] {
                    acc *= Self::axis_sum(axis, xj, xd);
                }
                acc
            }
            PlanKind::Cubes { cubes } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for tables in cubes {
                    let mut prod = Complex64::new(1.0, 0.0);
                    for (j, table) in tables.iter().enumerate() {
                        prod *= Self::axis_sum(table, x[j], xd);
                    }
                    acc += prod;
                }
                acc
            }
        }
    }

    /// Evaluate a batch of points, parallel when the feature is on.  The
    /// per-point kernel is shared with the serial path, so the two agree
    /// bitwise.
    pub fn evaluate_batch(&self, points: &PointBatch) -> Vec<Complex64> {
        parallel::map_indexed(points.len(), |i| self.eval_point(points.point(i)))
    }

    pub fn evaluate_batch_serial(&self, points: &PointBatch) -> Vec<Complex64> {
        parallel::map_indexed_serial(points.len(), |i| self.eval_point(points.point(i)))
    }
}

/// A point together with the field value there; the CLI's eval output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub point: Vec<f64>,
    pub re: f64,
    pub im: f64,
    pub abs: f64,
}

pub fn field_samples(plan: &EvalPlan, points: &PointBatch) -> Vec<FieldSample> {
    let values = plan.evaluate_batch(points);
    points
        .iter()
        .zip(values)
        .map(|(x, v)| FieldSample {
            point: x.to_vec(),
            re: v.re,
            im: v.im,
            abs: v.norm(),
        })
        .collect()
}

/// Independent reference evaluation: per-cube midpoint Riemann sums on an
/// `n^{d-1}` grid.  Shares no quadrature code with the plans.
pub fn oracle_evaluate(
    p: &Params,
    cubes: &[FrequencyCube],
    points: &PointBatch,
    nodes_per_axis: usize,
    budget: u64,
) -> Result<Vec<Complex64>> {
    let axes = p.d - 1;
    let needed = points.len() as u64
        * cubes.len() as u64
        * (nodes_per_axis as u64).pow(axes as u32);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let values = parallel::map_indexed(points.len(), |pi| {
        let x = points.point(pi);
        let xd = x[axes];
        let mut acc = Complex64::new(0.0, 0.0);
        for cube in cubes {
            let step = 2.0 * cube.half_width / nodes_per_axis as f64;
            let vol = step.powi(axes as i32);
            let mut k = vec![0usize; axes];
            loop {
                let mut turns = 0.0;
                for a in 0..axes {
                    let xi = cube.center[a] - cube.half_width + (k[a] as f64 + 0.5) * step;
                    turns += x[a] * xi + xd * xi * xi;
                }
                acc += vol * cis(turns);
                let mut a = axes;
                let mut done = false;
                loop {
                    if a == 0 {
                        done = true;
                        break;
                    }
                    a -= 1;
                    k[a] += 1;
                    if k[a] < nodes_per_axis {
                        break;
                    }
                    k[a] = 0;
                }
                if done {
                    break;
                }
            }
        }
        acc
    });
    Ok(values)
}

/// Peak statistics of the field over the spatial lattice inside the
/// coherence ball, against the predicted peak height
/// `R^{(d-1)(sigma-1)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeStats {
    pub predicted: f64,
    pub count: usize,
    pub min_ratio: f64,
    pub median_ratio: f64,
    pub max_ratio: f64,
    /// Fraction of sampled peaks with `|g| / predicted` in `[1/2, 2]`.
    pub within_factor_two: f64,
    /// Median ratio at distance one from the peaks, along a random unit
    /// direction; these points should sit well below the peak law.
    pub off_peak_median_ratio: f64,
}

pub fn amplitude_at_lattice_points(
    p: &Params,
    plan: &EvalPlan,
    count: usize,
    rng: &mut impl Rng,
) -> Result<AmplitudeStats> {
    let (_, centers) = lattice_points(p, 0.0);
    if centers.is_empty() {
        return Err(Error::EmptySet("spatial lattice in the coherence ball".into()));
    }
    let mut peaks = PointBatch::new(p.d);
    let mut off = PointBatch::new(p.d);
    for _ in 0..count {
        let c = centers.point(rng.gen_range(0..centers.len()));
        peaks.push(c);
        let dir: Vec<f64> = loop {
            let v: Vec<f64> = (0..p.d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = norm(&v);
            if n > 1e-3 && n <= 1.0 {
                break v.iter().map(|x| x / n).collect();
            }
        };
        let q: Vec<f64> = c.iter().zip(&dir).map(|(a, b)| a + b).collect();
        off.push(&q);
    }
    let predicted = p.r.powf((p.d as f64 - 1.0) * (p.sigma - 1.0));
    let mut ratios: Vec<f64> = plan
        .evaluate_batch(&peaks)
        .iter()
        .map(|v| v.norm() / predicted)
        .collect();
    let mut off_ratios: Vec<f64> = plan
        .evaluate_batch(&off)
        .iter()
        .map(|v| v.norm() / predicted)
        .collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    off_ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = ratios.len();
    let within = ratios.iter().filter(|r| **r >= 0.5 && **r <= 2.0).count();
    Ok(AmplitudeStats {
        predicted,
        count: n,
        min_ratio: ratios[0],
        median_ratio: ratios[n / 2],
        max_ratio: ratios[n - 1],
        within_factor_two: within as f64 / n as f64,
        off_peak_median_ratio: off_ratios[n / 2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Geometry;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(d: usize, sigma: f64, r: f64) -> Params {
        Params::new(d, sigma, r).unwrap()
    }

    #[test]
    fn origin_value_is_the_total_frequency_measure() {
        let p = params(2, 0.25, 256.0);
        let plan = EvalPlan::for_params(&p, p.coherence_radius()).unwrap();
        assert_relative_eq!(plan.total_mass, 0.0234375, max_relative = 1e-15);
        let mut pts = PointBatch::new(2);
        pts.push(&[0.0, 0.0]);
        let v = plan.evaluate_batch(&pts)[0];
        assert_relative_eq!(v.re, 0.0234375, max_relative = 1e-12);
        assert!(v.im.abs() < 1e-15);
    }

    #[test]
    fn product_and_cube_plans_agree() {
        for (d, r) in [(2usize, 512.0), (3, 256.0)] {
            let p = params(d, 0.25, r);
            let geo = Geometry::build(&p).unwrap();
            let all: Vec<usize> = (0..geo.cubes.len()).collect();
            let reach = p.r / 2.0;
            let prod = EvalPlan::for_params(&p, reach).unwrap();
            let cubes = EvalPlan::for_cubes(&p, &geo.cubes, &all, reach).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut pts = PointBatch::new(d);
            for _ in 0..40 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-reach..reach)).collect();
                pts.push(&x);
            }
            let a = prod.evaluate_batch(&pts);
            let b = cubes.evaluate_batch(&pts);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).norm() <= 1e-13 * plan_scale(&prod), "{u} vs {v}");
            }
        }
    }

    fn plan_scale(plan: &EvalPlan) -> f64 {
        plan.total_mass
    }

    #[test]
    fn matches_the_midpoint_oracle() {
        let p = params(2, 0.25, 64.0);
        let geo = Geometry::build(&p).unwrap();
        let plan = EvalPlan::for_params(&p, p.r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts = PointBatch::new(2);
        for _ in 0..12 {
            let x = loop {
                let c = [rng.gen_range(-p.r..p.r), rng.gen_range(-p.r..p.r)];
                if norm(&c) <= p.r {
                    break c;
                }
            };
            pts.push(&x);
        }
        let fast = plan.evaluate_batch(&pts);
        let slow = oracle_evaluate(&p, &geo.cubes, &pts, 20_000, u64::MAX).unwrap();
        for (u, v) in fast.iter().zip(&slow) {
            assert!(
                (u - v).norm() <= 1e-8 * plan.total_mass,
                "|{u} - {v}| = {}",
                (u - v).norm()
            );
        }
    }

    #[test]
    fn oracle_self_converges() {
        let p = params(2, 0.25, 64.0);
        let geo = Geometry::build(&p).unwrap();
        let mut pts = PointBatch::new(2);
        pts.push(&[3.7, -6.1]);
        pts.push(&[-7.9, 7.3]);
        let coarse = oracle_evaluate(&p, &geo.cubes, &pts, 20_000, u64::MAX).unwrap();
        let fine = oracle_evaluate(&p, &geo.cubes, &pts, 40_000, u64::MAX).unwrap();
        for (u, v) in coarse.iter().zip(&fine) {
            assert!((u - v).norm() <= 1e-10 * plan_mass(&p, &geo));
        }
    }

    fn plan_mass(p: &Params, geo: &Geometry) -> f64 {
        geo.cubes.len() as f64 * (2.0 * p.cube_half_width()).powi(p.d as i32 - 1)
    }

    #[test]
    fn oracle_guards_its_budget() {
        let p = params(2, 0.25, 64.0);
        let geo = Geometry::build(&p).unwrap();
        let mut pts = PointBatch::new(2);
        pts.push(&[0.0, 0.0]);
        assert!(matches!(
            oracle_evaluate(&p, &geo.cubes, &pts, 1000, 10),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn doubling_the_quadrature_order_changes_nothing() {
        // the panel count is sized for the requested reach; doubling the
        // base order must leave values unchanged to full precision
        for reach_div in [8.0, 2.0, 1.0] {
            let p = params(2, 0.25, 4096.0);
            let reach = p.r / reach_div;
            let plan8 = EvalPlan::for_params(&p, reach).unwrap();
            let mut p16 = p.clone();
            p16.quad_order = 16;
            let plan16 = EvalPlan::for_params(&p16, reach).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let mut pts = PointBatch::new(2);
            for _ in 0..30 {
                let x = loop {
                    let c = [rng.gen_range(-reach..reach), rng.gen_range(-reach..reach)];
                    if norm(&c) <= reach {
                        break c;
                    }
                };
                pts.push(&x);
            }
            let a = plan8.evaluate_batch(&pts);
            let b = plan16.evaluate_batch(&pts);
            for (u, v) in a.iter().zip(&b) {
                assert!(
                    (u - v).norm() <= 1e-8 * plan8.total_mass,
                    "reach R/{reach_div}: |{u} - {v}| = {}",
                    (u - v).norm()
                );
            }
        }
    }

    #[test]
    fn serial_and_batch_paths_agree_bitwise() {
        let p = params(2, 0.25, 1024.0);
        let plan = EvalPlan::for_params(&p, p.r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut pts = PointBatch::new(2);
        for _ in 0..200 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-p.r..p.r)).collect();
            pts.push(&x);
        }
        let a = plan.evaluate_batch(&pts);
        let b = plan.evaluate_batch_serial(&pts);
        for (u, v) in a.iter().zip(&b) {
            assert_eq!(u.re.to_bits(), v.re.to_bits());
            assert_eq!(u.im.to_bits(), v.im.to_bits());
        }
    }

    #[test]
    fn conjugate_symmetry_in_space() {
        // real frequency density: g(-x) = conj(g(x))
        let p = params(2, 0.3, 512.0);
        let plan = EvalPlan::for_params(&p, p.r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-200.0..200.0)).collect();
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let a = plan.eval_point(&x);
            let b = plan.eval_point(&neg);
            assert!((a - b.conj()).norm() <= 1e-14 * plan.total_mass.max(a.norm()));
        }
    }

    #[test]
    fn triangle_bound_holds_everywhere() {
        let p = params(2, 0.25, 2048.0);
        let plan = EvalPlan::for_params(&p, p.r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..200 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-p.r..p.r)).collect();
            let v = plan.eval_point(&x);
            assert!(v.norm() <= plan.total_mass * (1.0 + 1e-12));
        }
    }

    #[test]
    fn peaks_follow_the_amplitude_law() {
        let p = params(2, 0.25, 1024.0);
        let plan = EvalPlan::for_params(&p, p.coherence_radius()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let stats = amplitude_at_lattice_points(&p, &plan, 64, &mut rng).unwrap();
        assert!(stats.min_ratio >= 0.5, "min ratio {}", stats.min_ratio);
        assert!(stats.max_ratio <= 2.0, "max ratio {}", stats.max_ratio);
        assert_eq!(stats.within_factor_two, 1.0);
        assert!(stats.off_peak_median_ratio < stats.median_ratio);
    }
}
