//! Acceptance gate: one test per primary criterion, each printing a single
//! verdict line (run with `--nocapture` to see them live).

use decoupling_lab::eval::{oracle_evaluate, EvalPlan};
use decoupling_lab::experiments::{
    estimate_phase_evals, run_amplitude_campaign, run_corollary_campaign, run_decoupling_campaign,
    Campaign, SweepConfig, DEFAULT_BUDGET,
};
use decoupling_lab::geometry::{norm, Geometry, PointBatch};
use decoupling_lab::record::{make_payload, ReportBody, ResultRecord, RunMeta};
use decoupling_lab::wavepacket::{
    cap_decompose, local_orthogonality_check, packetize_all, structure_check,
};
use decoupling_lab::Params;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, name: &str, checks: &[(&str, bool)]) {
    let ok = checks.iter().all(|(_, b)| *b);
    println!("criterion {n} ({name}): {}", if ok { "PASS" } else { "FAIL" });
    for (label, b) in checks {
        assert!(*b, "criterion {n} ({name}) failed: {label}");
    }
}

fn ball_points(d: usize, radius: f64, count: usize, seed: u64) -> PointBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = PointBatch::new(d);
    while pts.len() < count {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-radius..radius)).collect();
        if norm(&x) <= radius {
            pts.push(&x);
        }
    }
    pts
}

#[test]
fn criterion_1_peak_amplitude_law() {
    let mut checks = Vec::new();
    for sigma in [0.25, 0.4] {
        let cfg = SweepConfig::default_for(2, sigma).unwrap();
        let rep = run_amplitude_campaign(&cfg, |_| {}).unwrap();
        let slope_ok = rep.fit.pass;
        let band_ok = rep.min_ratio >= 0.5 && rep.max_ratio <= 2.0;
        checks.push((
            if sigma == 0.25 {
                "plane sweep, low density: slope and factor-2 band"
            } else {
                "plane sweep, high density: slope and factor-2 band"
            },
            slope_ok && band_ok && rep.pass,
        ));
    }
    verdict(1, "peak amplitude law", &checks);
}

#[test]
fn criterion_2_refined_inequality_plane() {
    let cfg = SweepConfig::default_for(2, 0.25).unwrap();
    let rep = run_decoupling_campaign(&cfg, |_| {}).unwrap();
    let m_fit = rep.m_fit.as_ref().unwrap();
    verdict(
        2,
        "refined inequality, plane",
        &[
            ("lhs growth matches the sharp exponent", rep.lhs_fit.pass),
            ("rhs growth matches the sharp exponent", rep.rhs_fit.pass),
            ("two sides stay within a stable ratio", rep.ratio_fit.slope.abs() <= 0.1),
            (
                "coherent active packets comparable within 8x",
                rep.hypothesis.comparability_pass,
            ),
            ("overlap count grows like the cap density", m_fit.pass),
            ("campaign verdict", rep.pass),
        ],
    );
}

#[test]
fn criterion_3_refined_inequality_space() {
    let cfg = SweepConfig::default_for(3, 0.25).unwrap();
    let rep = run_decoupling_campaign(&cfg, |_| {}).unwrap();
    verdict(
        3,
        "refined inequality, space",
        &[
            (
                "lhs slope within 0.15 of the prediction",
                (rep.lhs_fit.slope - rep.lhs_fit.predicted).abs() <= 0.15,
            ),
            (
                "rhs slope within 0.15 of the prediction",
                (rep.rhs_fit.slope - rep.rhs_fit.predicted).abs() <= 0.15,
            ),
            (
                "coherent active packets comparable within 8x",
                rep.hypothesis.comparability_pass,
            ),
            ("campaign verdict", rep.pass),
        ],
    );
}

#[test]
fn criterion_4_fractal_square_mean() {
    let cfg = SweepConfig::default_for(2, 0.25).unwrap();
    let rep = run_corollary_campaign(&cfg, |_| {}).unwrap();
    let inc = rep.incidence_fit.as_ref().unwrap();
    let fractal_ok = rep
        .hypothesis
        .worst_fractal
        .map(|c| c > 0.0 && c <= 4.0)
        .unwrap_or(false);
    verdict(
        4,
        "fractal square mean",
        &[
            ("lhs growth matches the corollary exponent", rep.lhs_fit.pass),
            ("rhs growth matches the corollary exponent", rep.rhs_fit.pass),
            ("two sides stay within a stable ratio", rep.ratio_fit.slope.abs() <= 0.1),
            ("tube incidence thins out at the dual rate", inc.slope <= -0.4),
            ("measured fractal constant within its bound", fractal_ok),
            ("campaign verdict", rep.pass),
        ],
    );
}

#[test]
fn criterion_5_reference_quadrature() {
    // independent midpoint oracle vs the production plans, inside the
    // coherence ball where the campaigns sample
    let mut checks = Vec::new();
    for (d, nodes, n_pts) in [(2usize, 10_000usize, 20usize), (3, 2_000, 20)] {
        let p = Params::new(d, 0.25, 64.0).unwrap();
        let geo = Geometry::build(&p).unwrap();
        let plan = EvalPlan::for_params(&p, p.coherence_radius()).unwrap();
        let pts = ball_points(d, p.coherence_radius(), n_pts, 1000 + d as u64);
        let fast = plan.evaluate_batch(&pts);
        let slow = oracle_evaluate(&p, &geo.cubes, &pts, nodes, u64::MAX).unwrap();
        let worst = fast
            .iter()
            .zip(&slow)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        checks.push((
            if d == 2 { "plane oracle within 1e-6" } else { "space oracle within 1e-6" },
            worst <= 1e-6 * plan.total_mass,
        ));
    }
    let p = Params::new(2, 0.25, 256.0).unwrap();
    let plan = EvalPlan::for_params(&p, p.coherence_radius()).unwrap();
    let mut origin = PointBatch::new(2);
    origin.push(&[0.0, 0.0]);
    let g0 = plan.evaluate_batch(&origin)[0];
    checks.push((
        "origin value equals the closed form",
        (g0.re - 0.0234375).abs() <= 1e-12 && g0.im.abs() <= 1e-12,
    ));
    verdict(5, "reference quadrature", &checks);
}

#[test]
fn criterion_6_packet_structure() {
    let p = Params::new(2, 0.25, 4096.0).unwrap();
    let geo = Geometry::build(&p).unwrap();
    let plan = EvalPlan::for_params(&p, p.r).unwrap();
    let pieces = cap_decompose(&p, &geo).unwrap();
    let set = packetize_all(&p, &geo, &pieces).unwrap();
    let pts = ball_points(2, p.r - p.r.sqrt(), 400, 2024);
    let rep = structure_check(&p, &geo, &plan, &pieces, &set, &pts);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ortho = local_orthogonality_check(&p, &plan, &pieces, 200, &mut rng).unwrap();
    verdict(
        6,
        "packet structure",
        &[
            ("cap pieces resum to the field", rep.cap_resum_max_err <= 1e-10),
            ("tube weights partition exactly", rep.partition_defect <= 1e-12),
            ("weighted packets resum to each piece", rep.tube_resum_max_err <= 1e-8),
            (
                "overlap census bounded by the cap count",
                rep.census_max as usize <= rep.census_bound,
            ),
            ("field never exceeds its origin value", rep.peak_over_mass <= 1.0 + 1e-12),
            (
                "95% of sqrt(R)-balls in the orthogonality band",
                ortho.in_band_fraction >= 0.95,
            ),
        ],
    );
}

#[test]
fn criterion_7_determinism_and_cache() {
    let mut cfg = SweepConfig::default_for(2, 0.25).unwrap();
    cfg.r_list = vec![256.0, 512.0, 1024.0, 2048.0];
    cfg.seed = 7;
    let run = || {
        let rep = run_corollary_campaign(&cfg, |_| {}).unwrap();
        make_payload(
            Campaign::Corollary,
            decoupling_lab::config::config_hash(&cfg),
            &cfg,
            ReportBody::Sharpness(rep),
        )
    };
    let first = run();
    let second = run();
    let payloads_equal = serde_json::to_vec(&first).unwrap() == serde_json::to_vec(&second).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let cache = decoupling_lab::cache::Cache::at(dir.path().join("cache"));
    let record = ResultRecord::new(first.clone(), RunMeta::default());
    cache.store(&record).unwrap();
    let back = cache
        .lookup(&first.config_hash, Campaign::Corollary.name())
        .unwrap();
    let cache_ok = back == record && back.payload_bytes() == record.payload_bytes();

    let p = Params::new(2, 0.25, 1024.0).unwrap();
    let plan = EvalPlan::for_params(&p, p.r).unwrap();
    let pts = ball_points(2, p.r, 500, 31);
    let par = plan.evaluate_batch(&pts);
    let ser = plan.evaluate_batch_serial(&pts);
    let bitwise = par
        .iter()
        .zip(&ser)
        .all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits());

    verdict(
        7,
        "determinism and cache",
        &[
            ("identical seeded runs serialize identically", payloads_equal),
            ("cache round trip preserves the payload", cache_ok),
            ("parallel and serial evaluation agree bitwise", bitwise),
        ],
    );
}

#[test]
fn criterion_8_throughput_and_budget() {
    let p = Params::new(2, 0.25, 4096.0).unwrap();
    let plan = EvalPlan::for_params(&p, p.r).unwrap();
    let pts = ball_points(2, p.r, 10_000, 77);
    let work = plan.phase_evals_per_point() * pts.len() as u64;
    let mut best = 0.0f64;
    for _ in 0..3 {
        let t = std::time::Instant::now();
        let v = plan.evaluate_batch_serial(&pts);
        let rate = work as f64 / t.elapsed().as_secs_f64();
        assert!(v.len() == pts.len());
        best = best.max(rate);
    }
    let cfg = SweepConfig::default_for(2, 0.25).unwrap();
    let est = estimate_phase_evals(&cfg, Campaign::Decoupling).unwrap();
    verdict(
        8,
        "throughput and budget",
        &[
            (
                "serial rate at least 1e7 phase evaluations per second",
                best >= 1e7,
            ),
            (
                "default sweep estimate fits the default budget",
                est < DEFAULT_BUDGET,
            ),
        ],
    );
}
