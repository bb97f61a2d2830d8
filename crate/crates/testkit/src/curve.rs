//! Least-squares fit of `1/(1 + a·d^{2b})` by pattern search on `(log a, b)`.

pub fn curve_oracle(min_dist: f64, spread: f64) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = (1..=300)
        .map(|i| {
            let d = 3.0 * spread * i as f64 / 300.0;
            (d, if d <= min_dist { 1.0 } else { (-(d - min_dist) / spread).exp() })
        })
        .collect();
    let sse = |la: f64, b: f64| -> f64 {
        let a = la.exp();
        pts.iter()
            .map(|&(d, y)| (1.0 / (1.0 + a * d.powf(2.0 * b)) - y).powi(2))
            .sum()
    };
    let (mut la, mut b, mut step) = (0.0f64, 1.0f64, 0.5f64);
    let mut best = sse(la, b);
    while step > 1e-10 {
        let mut moved = false;
        for (dla, db) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            if b + db <= 0.0 {
                continue;
            }
            let e = sse(la + dla, b + db);
            if e < best {
                best = e;
                la += dla;
                b += db;
                moved = true;
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    (la.exp(), b)
}
