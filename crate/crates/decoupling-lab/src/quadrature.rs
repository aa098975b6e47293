//! Gauss-Legendre rules, panel composition, and deterministic summation.

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// found by Newton iteration from the usual cosine initial guess.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..64 {
            let (p, d) = legendre_with_deriv(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre rule on `[center - half_width, center + half_width]`,
/// split into `panels` equal panels of `order` points each.  Weights sum to
/// the interval length exactly up to rounding.
pub fn panel_rule(center: f64, half_width: f64, order: usize, panels: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(panels >= 1);
    let (gn, gw) = gauss_legendre(order);
    let lo = center - half_width;
    let panel_w = 2.0 * half_width / panels as f64;
    let mut nodes = Vec::with_capacity(order * panels);
    let mut weights = Vec::with_capacity(order * panels);
    for p in 0..panels {
        let a = lo + p as f64 * panel_w;
        let mid = a + 0.5 * panel_w;
        for q in 0..order {
            nodes.push(mid + 0.5 * panel_w * gn[q]);
            weights.push(0.5 * panel_w * gw[q]);
        }
    }
    (nodes, weights)
}

/// Pairwise (cascade) summation.  The tree shape depends only on the slice
/// length, so results are bit-for-bit reproducible regardless of how the
/// terms were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const CUTOFF: usize = 32;
    if xs.len() <= CUTOFF {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
