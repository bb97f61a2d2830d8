use super::ProjectionError;

/// Number of sample distances in `(0, 3·spread]`.
pub const CURVE_SAMPLES: usize = 300;
const MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveFit {
    pub a: f64,
    pub b: f64,
    /// Sum of squared errors over the samples.
    pub sse: f64,
    pub converged: bool,
}

/// Low-dimensional membership curve `1 / (1 + a·d^(2b))`.
pub fn curve_value(a: f64, b: f64, d: f64) -> f64 {
    1.0 / (1.0 + a * d.powf(2.0 * b))
}

fn samples(min_dist: f64, spread: f64) -> Vec<(f64, f64)> {
    (1..=CURVE_SAMPLES)
        .map(|i| {
            let d = 3.0 * spread * i as f64 / CURVE_SAMPLES as f64;
            let y = if d <= min_dist {
                1.0
            } else {
                (-(d - min_dist) / spread).exp()
            };
            (d, y)
        })
        .collect()
}

fn sse(pts: &[(f64, f64)], a: f64, b: f64) -> f64 {
    pts.iter()
        .map(|&(d, y)| {
            let r = curve_value(a, b, d) - y;
            r * r
        })
        .sum()
}

/// Least-squares fit of the membership curve to the piecewise target
/// (1 up to `min_dist`, exponential decay with scale `spread` beyond).
///
/// Levenberg–Marquardt from `(a, b) = (1, 1)` with a fixed iteration cap. If the
/// cap is hit before the step stalls, the best point found is returned with
/// `converged = false`.
pub fn fit_curve(min_dist: f64, spread: f64) -> Result<CurveFit, ProjectionError> {
    if !(min_dist >= 0.0 && spread > 0.0 && min_dist < spread) {
        return Err(ProjectionError::InvalidConfig(format!(
            "curve fit needs 0 <= min_dist < spread, got min_dist={min_dist}, spread={spread}"
        )));
    }
    let pts = samples(min_dist, spread);
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut err = sse(&pts, a, b);
    let mut lambda = 1e-3;
    let mut converged = false;

    for _ in 0..MAX_ITER {
        // normal equations J^T J and J^T r
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(d, y) in &pts {
            let u = d.powf(2.0 * b);
            let den = 1.0 + a * u;
            let f = 1.0 / den;
            let r = f - y;
            let da = -u / (den * den);
            let db = -a * u * 2.0 * d.ln() / (den * den);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        if ga.abs().max(gb.abs()) < 1e-14 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let (m11, m22) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = m11 * m22 - jab * jab;
            let step_a = -(m22 * ga - jab * gb) / det;
            let step_b = -(m11 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            if na > 0.0 && nb > 0.0 && det.is_finite() && det != 0.0 {
                let new_err = sse(&pts, na, nb);
                if new_err <= err {
                    let stalled = (err - new_err) <= 1e-15 * err.max(1e-300)
                        && step_a.abs().max(step_b.abs()) < 1e-12;
                    a = na;
                    b = nb;
                    err = new_err;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if stalled {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: local minimum to working precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    Ok(CurveFit {
        a,
        b,
        sse: err,
        converged,
    })
}
