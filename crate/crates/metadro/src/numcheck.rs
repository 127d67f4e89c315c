//! Numerical check helpers: central finite differences against arbitrary
//! scalar functions. Independent of the tape; used by tests and examples to
//! cross-check gradients.

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_diff_grad<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut buf = x.to_vec();
    for i in 0..x.len() {
        buf[i] = x[i] + h;
        let fp = f(&buf);
        buf[i] = x[i] - h;
        let fm = f(&buf);
        buf[i] = x[i];
        g.push((fp - fm) / (2.0 * h));
    }
    g
}

/// Maximum relative error between two gradient vectors.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
