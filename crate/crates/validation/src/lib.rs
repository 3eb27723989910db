//! Helpers for the acceptance suite in `tests/acceptance.rs`.

use std::io::Write;

/// Step used for every central difference.
pub const FD_STEP: f64 = 1e-4;

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// ||a - b|| / max(||a||, ||b||), zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient blocks differ in length");
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 { 0.0 } else { norm(&diff) / scale }
}

/// Central-difference gradient of `f` at `x`.
pub fn central_diff(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + FD_STEP;
            let up = f(&y);
            y[i] = x[i] - FD_STEP;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Formats the verdict line for criterion `n`.
pub fn verdict(n: u32, ok: bool, detail: &str) -> String {
    format!("criterion {n}: {} - {detail}\n", if ok { "PASS" } else { "FAIL" })
}

/// Writes the verdict to the real stdout, bypassing the test harness's
/// output capture, then fails the test when `ok` is false.
pub fn report(n: u32, ok: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(verdict(n, ok, detail).as_bytes());
    let _ = out.flush();
    assert!(ok, "criterion {n} failed: {detail}");
}
