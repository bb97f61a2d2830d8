//! Central finite differences and the relative-error measure used by the
//! gradient checks.

pub const FD_STEP: f64 = 1e-4;

/// Below this magnitude a step-1e-4 difference quotient in f64 is dominated by
/// roundoff (about ε·|L|/h), so the comparison becomes absolute.
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + FD_STEP;
            let up = f(&p);
            p[i] = x[i] - FD_STEP;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Maximum and 95th-percentile relative error over all coordinates.
pub fn error_summary(analytic: &[f64], numeric: &[f64]) -> (f64, f64) {
    assert_eq!(analytic.len(), numeric.len());
    let mut errs: Vec<f64> = analytic.iter().zip(numeric).map(|(&a, &n)| rel_err(a, n)).collect();
    errs.sort_by(|a, b| a.total_cmp(b));
    let max = *errs.last().expect("non-empty gradient");
    let p95 = errs[((errs.len() as f64) * 0.95).ceil() as usize - 1];
    (max, p95)
}
