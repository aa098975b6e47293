//! Frequency-side and space-side geometry: the lattice of small frequency
//! cubes, the cap tiling at scale `R^{-1/2}`, dual tubes, and the sampled
//! spatial sets the norms are taken over.
//!
//! Conventions, fixed once and used everywhere:
//! * frequency cubes sit at centers `l * R^{-sigma}`, integer `1 <= l_j < R^sigma`,
//!   with half-width `R^{-1}` per axis, inside the unit frequency box;
//! * caps are the half-open cells `[k R^{-1/2}, (k+1) R^{-1/2})` of the unit
//!   box, assigned cubes by center membership;
//! * tubes of a cap are the cells of a sheared lattice aligned with the
//!   paraboloid normal at the cap center: in coordinates
//!   `u' = x' + 2 xi_c x_d`, `u_d = x_d`, they are half-open boxes of cross
//!   side `R^{1/2}` and length `R`;
//! * spatial sets are unions of unit cubes centered at lattice points
//!   `(n_1 R^sigma, .., n_{d-1} R^sigma, n_d R^{2 sigma})`, each cube
//!   represented by a sub-grid of sample points with matching weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::params::Params;
use crate::quadrature::pairwise_sum;
use crate::{parallel, Error, Result};

/// Flat storage for a batch of d-dimensional points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointBatch {
    pub dim: usize,
    pub coords: Vec<f64>,
}

impl PointBatch {
    pub fn new(dim: usize) -> Self {
        PointBatch {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Self {
        assert_eq!(coords.len() % dim, 0);
        PointBatch { dim, coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim);
        self.coords.extend_from_slice(p);
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// One cube of the frequency lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCube {
    pub index: Vec<i64>,
    pub center: Vec<f64>,
    pub half_width: f64,
}

/// One cap: a half-open `R^{-1/2}`-cell of the unit frequency box together
/// with the lattice cubes whose centers fall inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Cap {
    pub index: Vec<i64>,
    pub base_min: Vec<f64>,
    pub side: f64,
    /// Indices into the cube list.  At most one entry for `sigma < 1/2`,
    /// since the lattice spacing exceeds the cap side.
    pub cubes: Vec<usize>,
}

impl Cap {
    pub fn center(&self) -> Vec<f64> {
        self.base_min.iter().map(|b| b + 0.5 * self.side).collect()
    }
}

/// Address of one tube within a cap's sheared tiling.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TubeIndex {
    pub cross: Vec<i32>,
    pub slab: i32,
}

/// One tube: a cell of the sheared tiling, recorded with its long axis (the
/// paraboloid normal at the cap center) and its distance from the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Tube {
    pub cap_id: usize,
    pub anchor: TubeIndex,
    pub axis: Vec<f64>,
    pub cross_side: f64,
    pub length: f64,
    pub min_dist: f64,
}

/// Unit normal of the paraboloid graph at base point `xi`.
pub fn paraboloid_normal(xi: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = xi.iter().map(|x| -2.0 * x).collect();
    v.push(1.0);
    let n = norm(&v);
    v.iter_mut().for_each(|c| *c /= n);
    v
}

/// Enumerate the frequency lattice cubes in lexicographic index order.
pub fn enumerate_cubes(p: &Params) -> Result<Vec<FrequencyCube>> {
    p.validate()?;
    let side = p.lattice_side_count();
    if side < 2 {
        return Err(Error::DegenerateLattice {
            r_sigma: p.r.powf(p.sigma),
        });
    }
    let axes = p.d - 1;
    let spacing = p.freq_spacing();
    let hw = p.cube_half_width();
    let mut cubes = Vec::with_capacity(side.pow(axes as u32));
    let mut idx = vec![1i64; axes];
    loop {
        let center: Vec<f64> = idx.iter().map(|&l| l as f64 * spacing).collect();
        cubes.push(FrequencyCube {
            index: idx.clone(),
            center,
            half_width: hw,
        });
        // odometer over {1..side}^axes, last axis fastest
        let mut a = axes;
        loop {
            if a == 0 {
                return Ok(cubes);
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] <= side as i64 {
                break;
            }
            idx[a] = 1;
        }
    }
}

/// Tile the unit frequency box by caps and assign each cube to the cap
/// containing its center.
pub fn build_caps(p: &Params, cubes: &[FrequencyCube]) -> Result<Vec<Cap>> {
    let axes = p.d - 1;
    let side = p.cap_side();
    let per_axis = (1.0 / side).ceil() as i64;
    let mut caps = Vec::with_capacity((per_axis as usize).pow(axes as u32));
    let mut idx = vec![0i64; axes];
    loop {
        caps.push(Cap {
            index: idx.clone(),
            base_min: idx.iter().map(|&k| k as f64 * side).collect(),
            side,
            cubes: Vec::new(),
        });
        let mut a = axes;
        let mut done = false;
        loop {
            if a == 0 {
                done = true;
                break;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < per_axis {
                break;
            }
            idx[a] = 0;
        }
        if done {
            break;
        }
    }
    // Center membership in half-open cells is a plain floor.
    let stride: Vec<i64> = {
        let mut s = vec![1i64; axes];
        for a in (0..axes.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * per_axis;
        }
        s
    };
    for (ci, cube) in cubes.iter().enumerate() {
        let mut flat = 0i64;
        let mut ok = true;
        for (&c, &st) in cube.center.iter().zip(&stride) {
            let k = (c / side).floor() as i64;
            if k < 0 || k >= per_axis {
                ok = false;
                break;
            }
            flat += k * st;
        }
        if !ok {
            return Err(Error::InvalidParams {
                name: "sigma",
                detail: "cube center escaped the unit frequency box".into(),
            });
        }
        caps[flat as usize].cubes.push(ci);
    }
    for cap in &caps {
        if cap.cubes.len() > 1 {
            return Err(Error::InvalidParams {
                name: "sigma",
                detail: format!(
                    "cap {:?} holds {} cubes; the lattice spacing must exceed the cap side",
                    cap.index,
                    cap.cubes.len()
                ),
            });
        }
    }
    Ok(caps)
}

/// Everything frequency-side for one parameter set.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub params: Params,
    pub cubes: Vec<FrequencyCube>,
    pub caps: Vec<Cap>,
    pub nonempty_caps: Vec<usize>,
}

impl Geometry {
    pub fn build(p: &Params) -> Result<Self> {
        let cubes = enumerate_cubes(p)?;
        let caps = build_caps(p, &cubes)?;
        let nonempty_caps: Vec<usize> = caps
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.cubes.is_empty())
            .map(|(i, _)| i)
            .collect();
        debug_assert_eq!(
            nonempty_caps.iter().map(|&i| caps[i].cubes.len()).sum::<usize>(),
            cubes.len()
        );
        Ok(Geometry {
            params: p.clone(),
            cubes,
            caps,
            nonempty_caps,
        })
    }
}

/// Index of the tube of `cap` containing `x`.  Every point has exactly one,
/// up to the half-open boundary convention.
pub fn tube_index_at(p: &Params, cap_center: &[f64], x: &[f64]) -> TubeIndex {
    let w = p.r.sqrt();
    let xd = x[p.d - 1];
    let cross: Vec<i32> = (0..p.d - 1)
        .map(|j| {
            let u = x[j] + 2.0 * cap_center[j] * xd;
            (u / w).floor() as i32
        })
        .collect();
    TubeIndex {
        cross,
        slab: (xd / p.r).floor() as i32,
    }
}

pub fn tube_contains(p: &Params, cap_center: &[f64], t: &TubeIndex, x: &[f64]) -> bool {
    tube_index_at(p, cap_center, x) == *t
}

/// Exact minimum of `|x|^2` over one sheared cell, by piecewise-quadratic
/// minimization in the `x_d` coordinate.
fn cell_min_norm_sq(
    cap_center: &[f64],
    cell_lo: &[f64],
    cell_hi: &[f64],
    xd_lo: f64,
    xd_hi: f64,
) -> f64 {
    let axes = cap_center.len();
    let f = |t: f64| -> f64 {
        let mut s = t * t;
        for j in 0..axes {
            let v = 2.0 * cap_center[j] * t;
            let dlo = cell_lo[j] - v;
            let dhi = v - cell_hi[j];
            let dist = dlo.max(dhi).max(0.0);
            s += dist * dist;
        }
        s
    };
    let mut brk = vec![xd_lo, xd_hi];
    for j in 0..axes {
        let s = 2.0 * cap_center[j];
        if s.abs() > 1e-300 {
            for edge in [cell_lo[j], cell_hi[j]] {
                let t = edge / s;
                if t > xd_lo && t < xd_hi {
                    brk.push(t);
                }
            }
        }
    }
    brk.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = f64::INFINITY;
    for w in brk.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        // on this segment each cross term is a fixed quadratic in t
        let mut q2 = 1.0;
        let mut q1 = 0.0;
        for j in 0..axes {
            let s = 2.0 * cap_center[j];
            let v = s * mid;
            if v < cell_lo[j] {
                q2 += s * s;
                q1 += -2.0 * s * cell_lo[j];
            } else if v > cell_hi[j] {
                q2 += s * s;
                q1 += -2.0 * s * cell_hi[j];
            }
        }
        best = best.min(f(a)).min(f(b));
        let vertex = -q1 / (2.0 * q2);
        if vertex > a && vertex < b {
            best = best.min(f(vertex));
        }
    }
    best
}

/// Enumerate the tubes of one cap that intersect the ball `B_R`.
pub fn build_tubes(p: &Params, cap_id: usize, cap: &Cap) -> Vec<Tube> {
    let r = p.r;
    let w = r.sqrt();
    let axes = p.d - 1;
    let center = cap.center();
    let axis = paraboloid_normal(&center);
    let mut tubes = Vec::new();
    for slab in [-1i32, 0] {
        let xd_lo = slab as f64 * r;
        let xd_hi = xd_lo + r;
        // reachable u-interval per axis, using xi >= 0
        let ranges: Vec<(i64, i64)> = (0..axes)
            .map(|j| {
                let s = 2.0 * center[j];
                let lo = -r + (s * xd_lo).min(s * xd_hi);
                let hi = r + (s * xd_lo).max(s * xd_hi);
                ((lo / w).floor() as i64, (hi / w).floor() as i64)
            })
            .collect();
        let mut a: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        'outer: loop {
            let cell_lo: Vec<f64> = a.iter().map(|&k| k as f64 * w).collect();
            let cell_hi: Vec<f64> = cell_lo.iter().map(|v| v + w).collect();
            let min_sq = cell_min_norm_sq(&center, &cell_lo, &cell_hi, xd_lo, xd_hi);
            if min_sq <= r * r * (1.0 + 1e-12) {
                tubes.push(Tube {
                    cap_id,
                    anchor: TubeIndex {
                        cross: a.iter().map(|&k| k as i32).collect(),
                        slab,
                    },
                    axis: axis.clone(),
                    cross_side: w,
                    length: r,
                    min_dist: min_sq.max(0.0).sqrt(),
                });
            }
            let mut ax = axes;
            loop {
                if ax == 0 {
                    break 'outer;
                }
                ax -= 1;
                a[ax] += 1;
                if a[ax] <= ranges[ax].1 {
                    break;
                }
                a[ax] = ranges[ax].0;
            }
        }
    }
    tubes
}

/// What a sampled set stands for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SetDescriptor {
    XLattice,
    YFractal,
    Ball,
    Custom(String),
}

/// A finite quadrature model of a spatial set: points, weights, and the
/// lattice bookkeeping needed by the census and incidence counts.
#[derive(Debug, Clone)]
pub struct SampledSet {
    pub dim: usize,
    pub points: PointBatch,
    pub weights: Vec<f64>,
    pub descriptor: SetDescriptor,
    pub alpha: Option<f64>,
    /// Flat `d`-tuples of lattice indices, one per unit cube.
    pub lattice_indices: Vec<i64>,
    pub lattice_centers: PointBatch,
    pub samples_per_cube: usize,
}

impl SampledSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cube_count(&self) -> usize {
        self.lattice_centers.len()
    }

    pub fn total_weight(&self) -> f64 {
        pairwise_sum(&self.weights)
    }
}

/// Spatial lattice points with `|x| <= cd * R - margin`, in lexicographic
/// index order.
pub fn lattice_points(p: &Params, margin: f64) -> (Vec<i64>, PointBatch) {
    let d = p.d;
    let r_adm = p.coherence_radius() - margin;
    let mut indices = Vec::new();
    let mut centers = PointBatch::new(d);
    if r_adm < 0.0 {
        return (indices, centers);
    }
    let spacings: Vec<f64> = (0..d).map(|a| p.spatial_spacing(a)).collect();
    let n_max: Vec<i64> = spacings.iter().map(|s| (r_adm / s).floor() as i64).collect();
    let mut n: Vec<i64> = n_max.iter().map(|m| -m).collect();
    if n_max.iter().any(|&m| m < 0) {
        return (indices, centers);
    }
    loop {
        let c: Vec<f64> = (0..d).map(|a| n[a] as f64 * spacings[a]).collect();
        if norm(&c) <= r_adm {
            indices.extend_from_slice(&n);
            centers.push(&c);
        }
        let mut a = d;
        loop {
            if a == 0 {
                return (indices, centers);
            }
            a -= 1;
            n[a] += 1;
            if n[a] <= n_max[a] {
                break;
            }
            n[a] = -n_max[a];
        }
    }
}

fn build_lattice_set(p: &Params, descriptor: SetDescriptor, alpha: Option<f64>) -> Result<SampledSet> {
    p.validate()?;
    let d = p.d;
    let per_axis = (1.0 / p.sample_spacing).round().max(1.0) as usize;
    let h = 1.0 / per_axis as f64;
    let offsets: Vec<f64> = (0..per_axis).map(|k| (k as f64 + 0.5) * h - 0.5).collect();
    let max_off = (0.5 - 0.5 * h) * (d as f64).sqrt();
    let (lattice_indices, lattice_centers) = lattice_points(p, max_off);
    if lattice_centers.is_empty() {
        return Err(Error::EmptySet(format!(
            "no unit cube fits inside the coherence ball at R = {}, cd = {}",
            p.r, p.cd
        )));
    }
    let weight = h.powi(d as i32);
    let samples_per_cube = per_axis.pow(d as u32);
    let mut points = PointBatch::new(d);
    let mut weights = Vec::with_capacity(lattice_centers.len() * samples_per_cube);
    let mut off_idx = vec![0usize; d];
    for c in lattice_centers.iter() {
        off_idx.iter_mut().for_each(|v| *v = 0);
        loop {
            let q: Vec<f64> = (0..d).map(|a| c[a] + offsets[off_idx[a]]).collect();
            points.push(&q);
            weights.push(weight);
            let mut a = d;
            let mut done = false;
            loop {
                if a == 0 {
                    done = true;
                    break;
                }
                a -= 1;
                off_idx[a] += 1;
                if off_idx[a] < per_axis {
                    break;
                }
                off_idx[a] = 0;
            }
            if done {
                break;
            }
        }
    }
    Ok(SampledSet {
        dim: d,
        points,
        weights,
        descriptor,
        alpha,
        lattice_indices,
        lattice_centers,
        samples_per_cube,
    })
}

/// The union of unit cubes around spatial lattice points inside the
/// coherence ball, as a sampled set.
pub fn build_x(p: &Params) -> Result<SampledSet> {
    build_lattice_set(p, SetDescriptor::XLattice, None)
}

/// Same point set as [`build_x`] but carrying its mass dimension
/// `alpha = d - (d+1) sigma`; see [`fractal_certificate`] for the check.
pub fn build_y(p: &Params) -> Result<SampledSet> {
    build_lattice_set(p, SetDescriptor::YFractal, Some(p.alpha()))
}

/// Measured fractal constant of a sampled set: the largest
/// `|B_r(c) cap Y| / r^alpha` over dyadic radii and a seeded mix of lattice
/// and uniform ball centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractalCertificate {
    pub alpha: f64,
    pub constant: f64,
    pub pass: bool,
    pub centers: usize,
    pub per_radius: Vec<(f64, f64)>,
}

pub fn fractal_certificate(
    p: &Params,
    set: &SampledSet,
    n_centers: usize,
    rng: &mut impl Rng,
) -> FractalCertificate {
    let alpha = set.alpha.unwrap_or_else(|| p.alpha());
    let d = p.d;
    let mut centers = PointBatch::new(d);
    let n_lattice = n_centers / 2;
    for _ in 0..n_lattice {
        let i = rng.gen_range(0..set.lattice_centers.len());
        centers.push(set.lattice_centers.point(i));
    }
    let rc = p.coherence_radius();
    while centers.len() < n_centers {
        let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-rc..rc)).collect();
        if norm(&c) <= rc {
            centers.push(&c);
        }
    }
    let mut radii = Vec::new();
    let mut r = 1.0f64;
    while r <= p.r / 2.0 {
        radii.push(r);
        r *= 2.0;
    }
    let per_center: Vec<Vec<f64>> = parallel::map_indexed(centers.len(), |ci| {
        let c = centers.point(ci);
        radii
            .iter()
            .map(|&rad| {
                let rad_sq = rad * rad;
                let mut inside = Vec::new();
                for (i, q) in set.points.iter().enumerate() {
                    let dist_sq: f64 = q.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    if dist_sq <= rad_sq {
                        inside.push(set.weights[i]);
                    }
                }
                pairwise_sum(&inside)
            })
            .collect()
    });
    let mut per_radius = Vec::with_capacity(radii.len());
    let mut constant: f64 = 0.0;
    for (ri, &rad) in radii.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for row in &per_center {
            worst = worst.max(row[ri] / rad.powf(alpha));
        }
        per_radius.push((rad, worst));
        constant = constant.max(worst);
    }
    let pass = constant <= (1u64 << d) as f64;
    FractalCertificate {
        alpha,
        constant,
        pass,
        centers: n_centers,
        per_radius,
    }
}

/// Midpoint shell grid over the ball `r_lo <= |x - center| <= r_hi`.
/// Weights carry the exact shell measures, so they sum to the annulus
/// volume.  Supports d = 2 and d = 3.
pub fn shell_grid(
    dim: usize,
    center: &[f64],
    r_lo: f64,
    r_hi: f64,
    shells: usize,
    angular: usize,
) -> Result<(PointBatch, Vec<f64>)> {
    if dim != 2 && dim != 3 {
        return Err(Error::InvalidParams {
            name: "d",
            detail: format!("shell quadrature supports d = 2 or 3, got {dim}"),
        });
    }
    let mut points = PointBatch::new(dim);
    let mut weights = Vec::new();
    let dr = (r_hi - r_lo) / shells as f64;
    for s in 0..shells {
        let a = r_lo + s as f64 * dr;
        let b = a + dr;
        let rm = 0.5 * (a + b);
        match dim {
            2 => {
                let area = std::f64::consts::PI * (b * b - a * a) / angular as f64;
                for k in 0..angular {
                    let th = (k as f64 + 0.5) * 2.0 * std::f64::consts::PI / angular as f64;
                    points.push(&[center[0] + rm * th.cos(), center[1] + rm * th.sin()]);
                    weights.push(area);
                }
            }
            _ => {
                // product grid in (cos theta, phi); radial moment is exact
                let n_pol = angular;
                let n_az = 2 * angular;
                let radial = (b * b * b - a * a * a) / 3.0;
                let dmu = 2.0 / n_pol as f64;
                let dphi = 2.0 * std::f64::consts::PI / n_az as f64;
                let wcell = radial * dmu * dphi;
                for i in 0..n_pol {
                    let mu = -1.0 + (i as f64 + 0.5) * dmu;
                    let sin_th = (1.0 - mu * mu).max(0.0).sqrt();
                    for k in 0..n_az {
                        let phi = (k as f64 + 0.5) * dphi;
                        points.push(&[
                            center[0] + rm * sin_th * phi.cos(),
                            center[1] + rm * sin_th * phi.sin(),
                            center[2] + rm * mu,
                        ]);
                        weights.push(wcell);
                    }
                }
            }
        }
    }
    Ok((points, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(d: usize, sigma: f64, r: f64) -> Params {
        Params::new(d, sigma, r).unwrap()
    }

    #[test]
    fn cube_enumeration_matches_hand_count() {
        let p = params(2, 0.25, 256.0);
        let cubes = enumerate_cubes(&p).unwrap();
        assert_eq!(cubes.len(), 3);
        let centers: Vec<f64> = cubes.iter().map(|c| c.center[0]).collect();
        assert_eq!(centers, vec![0.25, 0.5, 0.75]);
        assert!(cubes.iter().all(|c| (c.half_width - 1.0 / 256.0).abs() < 1e-18));

        let p = params(3, 0.25, 256.0);
        assert_eq!(enumerate_cubes(&p).unwrap().len(), 9);

        let p = params(2, 0.4, 1024.0);
        assert_eq!(enumerate_cubes(&p).unwrap().len(), 15);
    }

    #[test]
    fn cube_enumeration_rejects_degenerate_lattice() {
        // 16^0.25 = 2: only one interior lattice point per axis.
        let p = params(2, 0.25, 16.0);
        assert!(matches!(
            enumerate_cubes(&p),
            Err(Error::DegenerateLattice { .. })
        ));
    }

    #[test]
    fn cubes_are_disjoint_and_inside_the_unit_box() {
        for (d, sigma, r) in [(2, 0.25, 512.0), (3, 0.3, 300.0), (2, 0.45, 5000.0)] {
            let p = params(d, sigma, r);
            let cubes = enumerate_cubes(&p).unwrap();
            for c in &cubes {
                for (a, x) in c.center.iter().enumerate() {
                    assert!(*x > 0.0 && *x < 1.0, "axis {a} center {x} outside (0,1)");
                    assert!(x - c.half_width > 0.0);
                    assert!(x + c.half_width < 1.0);
                }
            }
            // disjoint: spacing exceeds the cube width
            let spacing = p.freq_spacing();
            assert!(spacing > 2.0 * p.cube_half_width());
            for pair in cubes.windows(2) {
                assert_ne!(pair[0].index, pair[1].index);
            }
        }
    }

    #[test]
    fn caps_tile_and_hold_at_most_one_cube() {
        let p = params(2, 0.25, 256.0);
        let geo = Geometry::build(&p).unwrap();
        assert_eq!(geo.caps.len(), 16);
        assert_eq!(geo.nonempty_caps.len(), 3);
        for cap in &geo.caps {
            assert!(cap.cubes.len() <= 1);
        }
        // each cube center really lies in its cap's half-open cell
        for &ci in &geo.nonempty_caps {
            let cap = &geo.caps[ci];
            let cube = &geo.cubes[cap.cubes[0]];
            for a in 0..p.d - 1 {
                assert!(cube.center[a] >= cap.base_min[a]);
                assert!(cube.center[a] < cap.base_min[a] + cap.side);
            }
        }
    }

    #[test]
    fn nonempty_cap_count_equals_cube_count_at_extreme_sigma() {
        let p = params(2, 0.49, (1u64 << 20) as f64);
        let geo = Geometry::build(&p).unwrap();
        assert_eq!(geo.nonempty_caps.len(), geo.cubes.len());
        assert_eq!(geo.cubes.len(), 891);
    }

    #[test]
    fn normal_at_vertex_points_up() {
        assert_eq!(paraboloid_normal(&[0.0]), vec![0.0, 1.0]);
        assert_eq!(paraboloid_normal(&[0.0, 0.0]), vec![0.0, 0.0, 1.0]);
        let n = paraboloid_normal(&[0.5]);
        assert!((norm(&n) - 1.0).abs() < 1e-15);
        assert!((n[0] + 2.0 * 0.5 * n[1]).abs() < 1e-15);
    }

    #[test]
    fn tube_tiling_covers_interior_points_once() {
        let p = params(2, 0.25, 1024.0);
        let geo = Geometry::build(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &ci in &geo.nonempty_caps {
            let cap = &geo.caps[ci];
            let center = cap.center();
            let tubes = build_tubes(&p, ci, cap);
            let by_index: std::collections::HashSet<_> =
                tubes.iter().map(|t| t.anchor.clone()).collect();
            assert_eq!(by_index.len(), tubes.len(), "duplicate tube anchors");
            for _ in 0..1000 {
                let x = loop {
                    let cand = [
                        rng.gen_range(-p.r..p.r),
                        rng.gen_range(-p.r..p.r),
                    ];
                    if norm(&cand) < p.r * (1.0 - 1e-9) {
                        break cand;
                    }
                };
                let idx = tube_index_at(&p, &center, &x);
                assert!(by_index.contains(&idx), "containing tube not enumerated");
                let hits = tubes
                    .iter()
                    .filter(|t| tube_contains(&p, &center, &t.anchor, &x))
                    .count();
                assert_eq!(hits, 1);
            }
        }
    }

    #[test]
    fn tube_counts_scale_like_sqrt_r_per_cap() {
        // d = 2: tubes per cap should stay within a fixed band around R^{1/2}.
        let mut ratios = Vec::new();
        for k in [8u32, 9, 10, 11] {
            let p = params(2, 0.25, (1u64 << k) as f64);
            let geo = Geometry::build(&p).unwrap();
            let ci = geo.nonempty_caps[0];
            let tubes = build_tubes(&p, ci, &geo.caps[ci]);
            ratios.push(tubes.len() as f64 / p.r.sqrt());
        }
        for r in &ratios {
            assert!(*r > 1.0 && *r < 30.0, "tube count ratio {r} out of band");
        }
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
        assert!(hi / lo < 2.0, "tube count not stable across the sweep: {ratios:?}");
    }

    #[test]
    fn inscribed_box_corners_are_covered() {
        for (d, sigma, r) in [(2usize, 0.25, 1024.0), (3, 0.25, 256.0)] {
            let p = params(d, sigma, r);
            let geo = Geometry::build(&p).unwrap();
            let s = p.r / 2.0 / (d as f64).sqrt();
            let corners: Vec<Vec<f64>> = (0..(1usize << d))
                .map(|mask| {
                    (0..d)
                        .map(|a| if mask >> a & 1 == 1 { s } else { -s })
                        .collect()
                })
                .collect();
            for &ci in &geo.nonempty_caps {
                let cap = &geo.caps[ci];
                let tubes = build_tubes(&p, ci, cap);
                let by_index: std::collections::HashSet<_> =
                    tubes.iter().map(|t| t.anchor.clone()).collect();
                for corner in &corners {
                    let idx = tube_index_at(&p, &cap.center(), corner);
                    assert!(by_index.contains(&idx));
                }
            }
        }
    }

    #[test]
    fn x_measure_matches_cube_count() {
        let p = params(2, 0.25, 1024.0);
        let x = build_x(&p).unwrap();
        assert!(!x.is_empty());
        let measure = x.total_weight();
        let expected = x.cube_count() as f64;
        assert!(
            (measure - expected).abs() <= 1e-9 * expected,
            "{measure} vs {expected}"
        );
        // every sample point stays inside the coherence ball
        for q in x.points.iter() {
            assert!(norm(q) <= p.coherence_radius() + 1e-9);
        }
        assert_eq!(x.len(), x.cube_count() * x.samples_per_cube);
    }

    #[test]
    fn origin_cube_is_always_present() {
        let p = params(2, 0.25, 256.0);
        let x = build_x(&p).unwrap();
        let d = p.d;
        let has_origin = x
            .lattice_indices
            .chunks_exact(d)
            .any(|idx| idx.iter().all(|&v| v == 0));
        assert!(has_origin);
    }

    #[test]
    fn unit_lattice_point_present_when_ball_is_large_enough() {
        for (d, r) in [(2usize, 1024.0), (2, 4096.0), (3, 1024.0)] {
            let p = params(d, 0.25, r);
            // premise: cd * R > d * R^{2 sigma}
            assert!(p.coherence_radius() > d as f64 * p.r.powf(2.0 * p.sigma));
            let x = build_x(&p).unwrap();
            let found = x
                .lattice_indices
                .chunks_exact(d)
                .any(|idx| idx.iter().all(|&v| v == 1));
            assert!(found, "lattice point (1,..,1) missing at d = {d}, R = {r}");
        }
    }

    #[test]
    fn x_cube_count_growth_matches_alpha() {
        // closed-form oracle: fit the counts themselves
        let mut records = Vec::new();
        for k in 8..=13u32 {
            let p = params(2, 0.25, (1u64 << k) as f64);
            let x = build_x(&p).unwrap();
            records.push(((1u64 << k) as f64, x.cube_count() as f64));
        }
        let fit = crate::experiments::fit_exponent(&records, 1.25, 0.05, 0.05).unwrap();
        assert!(fit.pass, "count slope {} vs 1.25", fit.slope);
    }

    #[test]
    fn x_cube_count_growth_near_sigma_half() {
        let mut records = Vec::new();
        for k in 8..=13u32 {
            let p = params(2, 0.49, (1u64 << k) as f64);
            let x = build_x(&p).unwrap();
            records.push(((1u64 << k) as f64, x.cube_count() as f64));
        }
        let fit = crate::experiments::fit_exponent(&records, 0.53, 0.1, 0.05).unwrap();
        assert!(fit.pass, "count slope {} vs 0.53", fit.slope);
    }

    #[test]
    fn y_carries_alpha_and_passes_the_fractal_check() {
        let p = params(2, 0.25, 1024.0);
        let y = build_y(&p).unwrap();
        assert!((y.alpha.unwrap() - 1.25).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cert = fractal_certificate(&p, &y, 48, &mut rng);
        assert!(cert.pass, "fractal constant {}", cert.constant);
        assert!(cert.constant <= 4.0);
        assert!(cert.constant > 0.0);
    }

    #[test]
    fn shell_grid_weights_sum_to_ball_volume() {
        let (_, w2) = shell_grid(2, &[0.0, 0.0], 0.0, 3.0, 32, 64).unwrap();
        let vol2: f64 = pairwise_sum(&w2);
        assert!((vol2 - std::f64::consts::PI * 9.0).abs() < 1e-9);

        let (_, w3) = shell_grid(3, &[1.0, -2.0, 0.5], 0.0, 2.0, 16, 12).unwrap();
        let vol3: f64 = pairwise_sum(&w3);
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 8.0;
        assert!((vol3 - exact).abs() < 1e-9 * exact);
    }
}
