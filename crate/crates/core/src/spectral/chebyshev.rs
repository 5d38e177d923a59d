use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Chebyshev–Gauss–Lobatto collocation of degree `m`.
///
/// Nodes are `x_j = cos(πj/m)`, `j = 0..=m`, so `x_0 = 1` and `x_m = -1`.
/// Coefficient vectors represent `f = Σ a_k T_k` with no halving convention.
pub struct Chebyshev {
    m: usize,
    x: Vec<f64>,
    /// `cos(π j k / m)` for `j in 0..=m`, `k in 0..=m+2`.
    cos: Vec<f64>,
    /// `∫_{-1}^{1} T_k`, `k in 0..=m`.
    moments: Vec<f64>,
}

impl Chebyshev {
    pub fn get(m: usize) -> Arc<Chebyshev> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Chebyshev>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("chebyshev cache poisoned");
        map.entry(m)
            .or_insert_with(|| Arc::new(Chebyshev::new(m)))
            .clone()
    }

    fn new(m: usize) -> Self {
        assert!(m >= 2, "Chebyshev degree must be at least 2");
        let x = (0..=m).map(|j| (PI * j as f64 / m as f64).cos()).collect();
        let cols = m + 3;
        let mut cos = vec![0.0; (m + 1) * cols];
        for j in 0..=m {
            for k in 0..cols {
                // reduce the angle index exactly before calling cos
                let r = (j * k) % (2 * m);
                cos[j * cols + k] = (PI * r as f64 / m as f64).cos();
            }
        }
        let moments = (0..=m)
            .map(|k| {
                if k % 2 == 1 {
                    0.0
                } else {
                    2.0 / (1.0 - (k * k) as f64)
                }
            })
            .collect();
        Chebyshev { m, x, cos, moments }
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    fn c(&self, j: usize, k: usize) -> f64 {
        self.cos[j * (self.m + 3) + k]
    }

    /// Node values to coefficients (discrete cosine transform).
    pub fn coeffs(&self, values: &[f64]) -> Vec<f64> {
        let m = self.m;
        debug_assert_eq!(values.len(), m + 1);
        let mut a = vec![0.0; m + 1];
        for (k, ak) in a.iter_mut().enumerate() {
            let mut s = 0.5 * (values[0] * self.c(0, k) + values[m] * self.c(m, k));
            for (j, v) in values.iter().enumerate().take(m).skip(1) {
                s += v * self.c(j, k);
            }
            *ak = 2.0 * s / m as f64;
        }
        a[0] *= 0.5;
        a[m] *= 0.5;
        a
    }

    /// Evaluate a coefficient vector (length up to `m + 3`) at the nodes.
    pub fn values(&self, coeffs: &[f64]) -> Vec<f64> {
        assert!(coeffs.len() <= self.m + 3);
        (0..=self.m)
            .map(|j| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * self.c(j, k))
                    .sum()
            })
            .collect()
    }

    /// Coefficients of the derivative (same length as the input).
    pub fn deriv_coeffs(a: &[f64]) -> Vec<f64> {
        let n = a.len();
        let mut d = vec![0.0; n + 1];
        for k in (1..n).rev() {
            d[k - 1] = d[k + 1] + 2.0 * k as f64 * a[k];
        }
        d[0] *= 0.5;
        d.truncate(n);
        d
    }

    /// Coefficients of `∫_{-1}^x f`, one degree higher than the input.
    pub fn cumulative_coeffs(a: &[f64]) -> Vec<f64> {
        let n = a.len();
        let get = |k: usize| if k < n { a[k] } else { 0.0 };
        let mut b = vec![0.0; n + 1];
        for (k, bk) in b.iter_mut().enumerate().skip(1) {
            let prev = if k == 1 { 2.0 * get(0) } else { get(k - 1) };
            *bk = (prev - get(k + 1)) / (2.0 * k as f64);
        }
        let at_minus_one: f64 = b
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, v)| if k % 2 == 0 { *v } else { -*v })
            .sum();
        b[0] = -at_minus_one;
        b
    }

    /// Multiply by `T_2 = 2x² − 1`.
    fn mul_t2(a: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + 2];
        for (k, &ak) in a.iter().enumerate() {
            out[k + 2] += 0.5 * ak;
            let low = (k as isize - 2).unsigned_abs();
            out[low] += 0.5 * ak;
        }
        out
    }

    /// Multiply by `1 − x² = (T_0 − T_2)/2`, exactly.
    pub fn mul_one_minus_x2(a: &[f64]) -> Vec<f64> {
        let t2 = Self::mul_t2(a);
        let mut out: Vec<f64> = t2.iter().map(|v| -0.5 * v).collect();
        for (k, &ak) in a.iter().enumerate() {
            out[k] += 0.5 * ak;
        }
        out
    }

    /// Coefficients of `values − values[0]`; derivatives of constants come
    /// out exactly zero.
    fn offset_coeffs(&self, values: &[f64]) -> Vec<f64> {
        let c = values.first().copied().unwrap_or(0.0);
        let shifted: Vec<f64> = values.iter().map(|v| v - c).collect();
        self.coeffs(&shifted)
    }

    pub fn derivative(&self, values: &[f64]) -> Vec<f64> {
        self.values(&Self::deriv_coeffs(&self.offset_coeffs(values)))
    }

    pub fn second_derivative(&self, values: &[f64]) -> Vec<f64> {
        let a = self.offset_coeffs(values);
        self.values(&Self::deriv_coeffs(&Self::deriv_coeffs(&a)))
    }

    /// Clenshaw–Curtis integral of node values over [-1, 1].
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.coeffs(values)
            .iter()
            .zip(&self.moments)
            .map(|(a, w)| a * w)
            .sum()
    }

    /// Node values of `∫_{-1}^x f`.
    pub fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        let b = Self::cumulative_coeffs(&self.coeffs(values));
        self.values(&b)
    }
}
