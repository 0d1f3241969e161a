//! Monotone cubic (Fritsch–Carlson) interpolation for tabulated radial fields.

use crate::error::{Error, Result};

/// C^1 piecewise-cubic interpolant that preserves monotonicity of the data.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>, // node derivatives
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<MonotoneCubic> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::Parameter(
                "tabulated field needs at least two (r, value) samples".into(),
            ));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter(
                "tabulated field abscissae must be strictly increasing".into(),
            ));
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        d[0] = endpoint_slope(h[0], h.get(1).copied().unwrap_or(h[0]), delta[0], *delta.get(1).unwrap_or(&delta[0]));
        d[n - 1] = endpoint_slope(
            h[n - 2],
            if n >= 3 { h[n - 3] } else { h[n - 2] },
            delta[n - 2],
            if n >= 3 { delta[n - 3] } else { delta[n - 2] },
        );
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] <= 0.0 {
                d[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        // clamp endpoint slopes to keep monotonicity
        for (i, dd) in d.iter_mut().enumerate() {
            let dl = if i > 0 { delta[i - 1] } else { delta[0] };
            let dr = if i < n - 1 { delta[i] } else { delta[n - 2] };
            if dl * dr > 0.0 {
                let bound = 3.0 * dl.abs().min(dr.abs());
                if dd.abs() > bound {
                    *dd = bound * dd.signum();
                }
            }
        }
        Ok(MonotoneCubic { x, y, d })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn eval(&self, r: f64) -> f64 {
        let n = self.x.len();
        let r = r.clamp(self.x[0], self.x[n - 1]);
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&r).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let h = self.x[i + 1] - self.x[i];
        let t = (r - self.x[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }
}

fn endpoint_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    // one-sided three-point estimate with monotonicity clamp
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}
