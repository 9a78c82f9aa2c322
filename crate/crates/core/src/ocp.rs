//! Tabulated open-circuit potentials with monotone cubic interpolation.

use crate::dual::Scalar;
use crate::error::{Error, Result};

/// Open-circuit potential U(c) sampled on an increasing stoichiometry grid.
///
/// The interpolant is the Fritsch-Carlson piecewise cubic Hermite (PCHIP):
/// it reproduces the samples, has a continuous first derivative and does
/// not overshoot monotone data.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpCurve {
    c: Vec<f64>,
    u: Vec<f64>,
    slopes: Vec<f64>,
}

impl OcpCurve {
    pub fn new(c: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if c.len() != u.len() {
            return Err(Error::domain(
                "ocp",
                "stoichiometry and potential lengths differ",
            ));
        }
        if c.len() < 2 {
            return Err(Error::domain("ocp", "at least two samples are required"));
        }
        if c.iter().chain(&u).any(|v| !v.is_finite()) {
            return Err(Error::domain("ocp", "samples must be finite"));
        }
        if c[0] < 0.0 || c[c.len() - 1] > 1.0 {
            return Err(Error::domain("ocp", "stoichiometries must lie in [0, 1]"));
        }
        if c.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain(
                "ocp",
                "stoichiometries must be strictly increasing",
            ));
        }
        let slopes = pchip_slopes(&c, &u);
        Ok(Self { c, u, slopes })
    }

    /// Samples `f` at `n` evenly spaced stoichiometries on `[lo, hi]`.
    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain("ocp", "at least two samples are required"));
        }
        let c: Vec<f64> = (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect();
        let u = c.iter().map(|&x| f(x)).collect();
        Self::new(c, u)
    }

    pub fn stoichiometries(&self) -> &[f64] {
        &self.c
    }

    pub fn potentials(&self) -> &[f64] {
        &self.u
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.c[0], self.c[self.c.len() - 1])
    }

    pub fn contains(&self, c: f64) -> bool {
        let (lo, hi) = self.domain();
        c >= lo && c <= hi
    }

    /// Potential and slope dU/dc at `c`.
    pub fn eval(&self, c: f64) -> Result<(f64, f64)> {
        if !self.contains(c) {
            let (lo, hi) = self.domain();
            return Err(Error::Range {
                what: "ocp stoichiometry".into(),
                value: c,
                min: lo,
                max: hi,
            });
        }
        Ok(self.eval_extended(c))
    }

    /// Like [`OcpCurve::eval`] but continues linearly past the table ends.
    ///
    /// Used inside residual evaluations, where Newton iterates may step
    /// briefly outside the table; accepted states are checked separately.
    pub fn eval_extended(&self, c: f64) -> (f64, f64) {
        let n = self.c.len();
        if c <= self.c[0] {
            return (self.u[0] + self.slopes[0] * (c - self.c[0]), self.slopes[0]);
        }
        if c >= self.c[n - 1] {
            return (
                self.u[n - 1] + self.slopes[n - 1] * (c - self.c[n - 1]),
                self.slopes[n - 1],
            );
        }
        let k = match self.c.partition_point(|&x| x <= c) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let h = self.c[k + 1] - self.c[k];
        let t = (c - self.c[k]) / h;
        let (y0, y1) = (self.u[k], self.u[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let dvalue = (6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1;
        (value, dvalue / h)
    }

    pub(crate) fn apply<S: Scalar>(&self, c: S) -> S {
        let (u, du) = self.eval_extended(c.value());
        c.chain(u, du)
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

// non-centred three-point end condition, shape preserving
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Synthetic graphite-like negative electrode potential.
///
/// Strictly decreasing, with a low-slope plateau around c = 0.35..0.6.
pub fn synthetic_negative(c: f64) -> f64 {
    0.085
        + 0.7 * (-30.0 * c).exp()
        + 0.05 * (1.0 - ((c - 0.2) / 0.05).tanh())
        + 0.025 * (1.0 - ((c - 0.7) / 0.06).tanh())
}

/// Synthetic layered-oxide positive electrode potential.
///
/// Strictly decreasing, with a shallow plateau around c = 0.65.
pub fn synthetic_positive(c: f64) -> f64 {
    4.45 - 0.9 * c + 0.034 * ((c - 0.65) / 0.04).tanh() + 0.3 * (-(c - 0.15) / 0.03).exp()
        - 0.3 * ((c - 1.0) / 0.03).exp()
}

/// Positive and negative OCP tables sampled from the synthetic curves.
pub fn synthetic_curves() -> (OcpCurve, OcpCurve) {
    let pos = OcpCurve::from_fn(0.0, 1.0, 201, synthetic_positive).expect("valid table");
    let neg = OcpCurve::from_fn(0.0, 1.0, 201, synthetic_negative).expect("valid table");
    (pos, neg)
}
