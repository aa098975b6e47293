//! Cap pieces and their tube wave packets.
//!
//! The field splits over caps (each cap holds one frequency cube for
//! `sigma < 1/2`, so the cap piece is that cube's own field).  Each cap
//! piece is then localized along the tubes of the cap's sheared tiling; a
//! packet records the root-mean-square size of the piece on its tube.  A
//! packet is *active* when its magnitude clears a fixed fraction of the
//! largest packet magnitude anywhere, and *coherent* when its tube meets
//! the coherence ball `B_{cd R}`, where constructive interference
//! concentrates.
//!
//! The smooth tube weights form a partition of unity exact to rounding
//! (quintic smoothstep ramps, `s(t) + s(1-t) = 1`), so resumming the
//! weighted packets reproduces the cap piece up to quadrature error alone.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::eval::EvalPlan;
use crate::geometry::{
    build_tubes, norm, shell_grid, tube_index_at, Geometry, PointBatch, SampledSet, Tube,
    TubeIndex,
};
use crate::params::Params;
use crate::quadrature::pairwise_sum;
use crate::{parallel, Error, Result};

/// One cap's share of the field, with a plan valid on all of `B_R`.
#[derive(Debug, Clone)]
pub struct CapPiece {
    pub cap_id: usize,
    pub cube: usize,
    pub plan: EvalPlan,
}

/// Split the field into its nonempty-cap pieces.
pub fn cap_decompose(p: &Params, geo: &Geometry) -> Result<Vec<CapPiece>> {
    geo.nonempty_caps
        .iter()
        .map(|&cap_id| {
            let cube = geo.caps[cap_id].cubes[0];
            let plan = EvalPlan::for_cubes(p, &geo.cubes, &[cube], p.r)?;
            Ok(CapPiece { cap_id, cube, plan })
        })
        .collect()
}

/// One tube's packet of one cap piece.
#[derive(Debug, Clone, PartialEq)]
pub struct WavePacket {
    pub cap_id: usize,
    pub index: TubeIndex,
    pub magnitude: f64,
    pub min_dist: f64,
    pub active: bool,
    pub coherent: bool,
}

/// All packets of one cap, with an index lookup.
#[derive(Debug, Clone)]
pub struct CapPackets {
    pub cap_id: usize,
    pub cap_center: Vec<f64>,
    pub packets: Vec<WavePacket>,
    pub lookup: HashMap<TubeIndex, usize>,
}

/// Packets across all caps, thresholded against the global maximum.
#[derive(Debug, Clone)]
pub struct PacketSet {
    pub per_cap: Vec<CapPackets>,
    pub max_magnitude: f64,
    pub threshold: f64,
}

fn candidate_counts(d: usize) -> (usize, usize) {
    // (cross samples per axis, samples along the tube)
    if d == 2 {
        (4, 16)
    } else {
        (3, 8)
    }
}

fn packet_magnitudes(p: &Params, piece: &CapPiece, cap_center: &[f64], tubes: &[Tube]) -> Vec<f64> {
    let d = p.d;
    let axes = d - 1;
    let w = p.r.sqrt();
    let (n_cross, n_long) = candidate_counts(d);
    parallel::map_indexed(tubes.len(), |ti| {
        let t = &tubes[ti];
        let mut kept = Vec::new();
        let mut grid = vec![0usize; axes];
        loop {
            for k in 0..n_long {
                let xd = (t.anchor.slab as f64 + (k as f64 + 0.5) / n_long as f64) * p.r;
                let mut x = vec![0.0; d];
                x[d - 1] = xd;
                for j in 0..axes {
                    let u = (t.anchor.cross[j] as f64
                        + (grid[j] as f64 + 0.5) / n_cross as f64)
                        * w;
                    x[j] = u - 2.0 * cap_center[j] * xd;
                }
                if norm(&x) <= p.r {
                    kept.push(x);
                }
            }
            let mut a = axes;
            let mut done = false;
            loop {
                if a == 0 {
                    done = true;
                    break;
                }
                a -= 1;
                grid[a] += 1;
                if grid[a] < n_cross {
                    break;
                }
                grid[a] = 0;
            }
            if done {
                break;
            }
        }
        if kept.is_empty() {
            return 0.0;
        }
        let sq: Vec<f64> = kept
            .iter()
            .map(|x| piece.plan.eval_point(x).norm_sqr())
            .collect();
        (pairwise_sum(&sq) / sq.len() as f64).sqrt()
    })
}

/// Decompose every cap piece into tube packets and mark the active ones.
pub fn packetize_all(p: &Params, geo: &Geometry, pieces: &[CapPiece]) -> Result<PacketSet> {
    if pieces.is_empty() {
        return Err(Error::EmptySet("cap pieces".into()));
    }
    let rc = p.coherence_radius();
    let mut per_cap = Vec::with_capacity(pieces.len());
    let mut max_magnitude: f64 = 0.0;
    for piece in pieces {
        let cap = &geo.caps[piece.cap_id];
        let cap_center = cap.center();
        let tubes = build_tubes(p, piece.cap_id, cap);
        let mags = packet_magnitudes(p, piece, &cap_center, &tubes);
        let mut packets = Vec::with_capacity(tubes.len());
        let mut lookup = HashMap::with_capacity(tubes.len());
        for (t, &m) in tubes.iter().zip(&mags) {
            max_magnitude = max_magnitude.max(m);
            lookup.insert(t.anchor.clone(), packets.len());
            packets.push(WavePacket {
                cap_id: piece.cap_id,
                index: t.anchor.clone(),
                magnitude: m,
                min_dist: t.min_dist,
                active: false,
                coherent: t.min_dist <= rc,
            });
        }
        per_cap.push(CapPackets {
            cap_id: piece.cap_id,
            cap_center,
            packets,
            lookup,
        });
    }
    if max_magnitude <= 0.0 {
        return Err(Error::EmptySet("no packet carries any mass".into()));
    }
    let cut = p.packet_threshold * max_magnitude;
    for cap in &mut per_cap {
        for pk in &mut cap.packets {
            pk.active = pk.magnitude >= cut;
        }
    }
    Ok(PacketSet {
        per_cap,
        max_magnitude,
        threshold: p.packet_threshold,
    })
}

/// Largest-to-smallest magnitude ratio over active packets, optionally
/// restricted to coherent ones.
pub fn comparability(set: &PacketSet, coherent_only: bool) -> Option<f64> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for cap in &set.per_cap {
        for pk in &cap.packets {
            if pk.active && (!coherent_only || pk.coherent) {
                lo = lo.min(pk.magnitude);
                hi = hi.max(pk.magnitude);
            }
        }
    }
    if hi > 0.0 {
        Some(hi / lo)
    } else {
        None
    }
}

/// Number of active packets, per filter.
pub fn active_count(set: &PacketSet, coherent_only: bool) -> usize {
    set.per_cap
        .iter()
        .flat_map(|c| &c.packets)
        .filter(|pk| pk.active && (!coherent_only || pk.coherent))
        .count()
}

/// For each point, the number of caps whose active tube contains it.
pub fn census_at(p: &Params, set: &PacketSet, points: &PointBatch) -> Vec<u32> {
    parallel::map_indexed(points.len(), |i| {
        let x = points.point(i);
        let mut m = 0u32;
        for cap in &set.per_cap {
            let idx = tube_index_at(p, &cap.cap_center, x);
            if let Some(&pi) = cap.lookup.get(&idx) {
                if cap.packets[pi].active {
                    m += 1;
                }
            }
        }
        m
    })
}

/// Largest fraction of the set's lattice centers captured by any single
/// active tube.
pub fn incidence_max_fraction(p: &Params, set: &PacketSet, sampled: &SampledSet) -> f64 {
    let centers = &sampled.lattice_centers;
    let total = centers.len();
    if total == 0 {
        return 0.0;
    }
    let per_cap: Vec<f64> = parallel::map_indexed(set.per_cap.len(), |ci| {
        let cap = &set.per_cap[ci];
        let mut counts: HashMap<&TubeIndex, u32> = HashMap::new();
        for i in 0..total {
            let idx = tube_index_at(p, &cap.cap_center, centers.point(i));
            if let Some(&pi) = cap.lookup.get(&idx) {
                if cap.packets[pi].active {
                    *counts.entry(&cap.packets[pi].index).or_insert(0) += 1;
                }
            }
        }
        counts.values().copied().max().unwrap_or(0) as f64 / total as f64
    });
    per_cap.iter().cloned().fold(0.0, f64::max)
}

/// Quintic smoothstep: `s(0) = 0`, `s(1) = 1`, two vanishing derivatives at
/// both ends, and `s(t) + s(1 - t) = 1` to rounding.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

/// Smooth indicator of the 1-D cell `[lo, lo + width)`, ramping over
/// `overlap` centered on each cell edge.  Consecutive cells sum to one.
pub fn cell_bump(lo: f64, width: f64, overlap: f64, t: f64) -> f64 {
    let rise = smoothstep((t - (lo - 0.5 * overlap)) / overlap);
    let fall = smoothstep((t - (lo + width - 0.5 * overlap)) / overlap);
    rise - fall
}

/// Smooth weight of one tube at `x`; over the tube tiling of a cap these
/// sum to one.
pub fn tube_weight(p: &Params, cap_center: &[f64], anchor: &TubeIndex, x: &[f64]) -> f64 {
    let w = p.r.sqrt();
    let ov = 0.25 * w;
    let xd = x[p.d - 1];
    let mut out = cell_bump(anchor.slab as f64 * p.r, p.r, ov, xd);
    for j in 0..p.d - 1 {
        let u = x[j] + 2.0 * cap_center[j] * xd;
        out *= cell_bump(anchor.cross[j] as f64 * w, w, ov, u);
    }
    out
}

/// Resummation and size checks tying pieces, packets, and the full field
/// together on a shared point sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub points: usize,
    /// max |sum_caps g_cap - g| / g(0)
    pub cap_resum_max_err: f64,
    /// max |sum_tubes chi_T - 1| over the sample
    pub partition_defect: f64,
    /// max |sum_tubes chi_T g_cap - g_cap| / g(0), packets resummed per cap
    pub tube_resum_max_err: f64,
    pub census_max: u32,
    pub census_bound: usize,
    /// max |g| / g(0) over the sample; never above one
    pub peak_over_mass: f64,
}

pub fn structure_check(
    p: &Params,
    geo: &Geometry,
    plan: &EvalPlan,
    pieces: &[CapPiece],
    set: &PacketSet,
    points: &PointBatch,
) -> StructureReport {
    let full = plan.evaluate_batch(points);
    let per_piece: Vec<Vec<Complex64>> = pieces
        .iter()
        .map(|piece| piece.plan.evaluate_batch(points))
        .collect();
    let mut cap_resum_max_err: f64 = 0.0;
    let mut peak_over_mass: f64 = 0.0;
    for (i, v) in full.iter().enumerate() {
        let mut s = Complex64::new(0.0, 0.0);
        for piece_vals in &per_piece {
            s += piece_vals[i];
        }
        cap_resum_max_err = cap_resum_max_err.max((s - v).norm() / plan.total_mass);
        peak_over_mass = peak_over_mass.max(v.norm() / plan.total_mass);
    }
    // tube partition per cap: enumerate each point's own tube and its
    // neighbors; the smooth weights vanish beyond one cell of overlap
    let mut partition_defect: f64 = 0.0;
    let mut tube_resum_max_err: f64 = 0.0;
    for (pi, (piece, cap_packets)) in pieces.iter().zip(&set.per_cap).enumerate() {
        debug_assert_eq!(piece.cap_id, cap_packets.cap_id);
        let center = &cap_packets.cap_center;
        let vals = &per_piece[pi];
        for (i, x) in points.iter().enumerate() {
            let home = tube_index_at(p, center, x);
            let mut chi = 0.0;
            for_neighbors(&home, p.d, |idx| {
                chi += tube_weight(p, center, &idx, x);
            });
            partition_defect = partition_defect.max((chi - 1.0).abs());
            tube_resum_max_err = tube_resum_max_err
                .max(((chi - 1.0) * vals[i]).norm() / plan.total_mass);
        }
    }
    let census = census_at(p, set, points);
    StructureReport {
        points: points.len(),
        cap_resum_max_err,
        partition_defect,
        tube_resum_max_err,
        census_max: census.iter().copied().max().unwrap_or(0),
        census_bound: geo.nonempty_caps.len(),
        peak_over_mass,
    }
}

fn for_neighbors(home: &TubeIndex, d: usize, mut f: impl FnMut(TubeIndex)) {
    let axes = d - 1;
    let mut offs = vec![-1i32; axes + 1];
    loop {
        let idx = TubeIndex {
            cross: (0..axes).map(|j| home.cross[j] + offs[j]).collect(),
            slab: home.slab + offs[axes],
        };
        f(idx);
        let mut a = axes + 1;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            offs[a] += 1;
            if offs[a] <= 1 {
                break;
            }
            offs[a] = -1;
        }
    }
}

/// Local near-orthogonality of the cap pieces: on balls of radius
/// `sqrt(R)`, compare the square integral of the field with the sum over
/// caps of the square integrals of the pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub trials: usize,
    pub band_lo: f64,
    pub band_hi: f64,
    pub in_band_fraction: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

pub fn local_orthogonality_check(
    p: &Params,
    plan: &EvalPlan,
    pieces: &[CapPiece],
    trials: usize,
    rng: &mut impl Rng,
) -> Result<OrthogonalityReport> {
    let rho = p.r.sqrt();
    let max_center = p.r / 2.0 - rho;
    if max_center <= 0.0 {
        return Err(Error::InvalidParams {
            name: "r",
            detail: "R too small for sqrt(R)-ball sampling".into(),
        });
    }
    let mut ratios = Vec::with_capacity(trials);
    for _ in 0..trials {
        let c: Vec<f64> = loop {
            let cand: Vec<f64> = (0..p.d)
                .map(|_| rng.gen_range(-max_center..max_center))
                .collect();
            if norm(&cand) <= max_center {
                break cand;
            }
        };
        let (pts, wts) = shell_grid(p.d, &c, 0.0, rho, 8, if p.d == 2 { 32 } else { 8 })?;
        let full = plan.evaluate_batch(&pts);
        let num_terms: Vec<f64> = full
            .iter()
            .zip(&wts)
            .map(|(v, w)| w * v.norm_sqr())
            .collect();
        let num = pairwise_sum(&num_terms);
        let mut den = 0.0;
        for piece in pieces {
            let vals = piece.plan.evaluate_batch(&pts);
            let terms: Vec<f64> = vals
                .iter()
                .zip(&wts)
                .map(|(v, w)| w * v.norm_sqr())
                .collect();
            den += pairwise_sum(&terms);
        }
        if den > 0.0 {
            ratios.push(num / den);
        }
    }
    if ratios.is_empty() {
        return Err(Error::EmptySet("orthogonality trials".into()));
    }
    let (lo, hi) = (0.25, 4.0);
    let in_band = ratios.iter().filter(|r| **r >= lo && **r <= hi).count();
    Ok(OrthogonalityReport {
        trials: ratios.len(),
        band_lo: lo,
        band_hi: hi,
        in_band_fraction: in_band as f64 / ratios.len() as f64,
        min_ratio: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        max_ratio: ratios.iter().cloned().fold(0.0, f64::max),
    })
}
