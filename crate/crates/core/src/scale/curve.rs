//! Piecewise-linear interpolant of a sampled curve with O(1) range maxima
//! and exact integrals.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Curve {
    t: Vec<f64>,
    v: Vec<f64>,
    /// Sparse table: `max[k][i] = max v[i .. i + 2^k]`.
    max: Vec<Vec<f64>>,
    /// Trapezoid integral from the first knot to each knot.
    cum: Vec<f64>,
}

impl Curve {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if t.is_empty() || t.len() != v.len() {
            return Err(Error::Domain(
                "curve needs matching non-empty knots and values".into(),
            ));
        }
        let n = v.len();
        let mut max = vec![v.clone()];
        let mut k = 1;
        while (1 << k) <= n {
            let prev = &max[k - 1];
            let half = 1 << (k - 1);
            let row = (0..=n - (1 << k))
                .map(|i| prev[i].max(prev[i + half]))
                .collect();
            max.push(row);
            k += 1;
        }
        let mut cum = Vec::with_capacity(n);
        cum.push(0.0);
        for i in 1..n {
            cum.push(cum[i - 1] + 0.5 * (v[i] + v[i - 1]) * (t[i] - t[i - 1]));
        }
        Ok(Curve { t, v, max, cum })
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn start(&self) -> f64 {
        self.t[0]
    }

    pub fn end(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    /// Index `i` with `t[i] <= x < t[i+1]`, clamped to the last interval.
    pub fn interval(&self, x: f64) -> usize {
        let n = self.t.len();
        if n < 2 {
            return 0;
        }
        match self.t.partition_point(|&ti| ti <= x) {
            0 => 0,
            p => (p - 1).min(n - 2),
        }
    }

    /// Interpolated value; `x` must lie in `[start, end]`.
    pub fn at(&self, x: f64) -> f64 {
        if self.t.len() == 1 {
            return self.v[0];
        }
        let i = self.interval(x);
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        if x == t0 {
            return self.v[i];
        }
        if x == t1 {
            return self.v[i + 1];
        }
        let w = (x - t0) / (t1 - t0);
        self.v[i] + w * (self.v[i + 1] - self.v[i])
    }

    fn range_max(&self, lo: usize, hi: usize) -> f64 {
        // inclusive knot range
        if lo > hi {
            return f64::NEG_INFINITY;
        }
        let len = hi - lo + 1;
        let k = usize::BITS as usize - 1 - len.leading_zeros() as usize;
        self.max[k][lo].max(self.max[k][hi + 1 - (1 << k)])
    }

    /// Exact maximum of the interpolant over `[a, b] ⊂ [start, end]`.
    pub fn max_on(&self, a: f64, b: f64) -> f64 {
        let mut m = self.at(a).max(self.at(b));
        let lo = self.t.partition_point(|&ti| ti <= a);
        let hi = self.t.partition_point(|&ti| ti < b);
        if hi > lo {
            m = m.max(self.range_max(lo, hi - 1));
        }
        m
    }

    /// Exact integral of the interpolant from `start` to `x`.
    pub fn integral_to(&self, x: f64) -> f64 {
        if self.t.len() == 1 {
            return 0.0;
        }
        let i = self.interval(x);
        let vx = self.at(x);
        self.cum[i] + 0.5 * (self.v[i] + vx) * (x - self.t[i])
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.integral_to(b) - self.integral_to(a)
    }
}
