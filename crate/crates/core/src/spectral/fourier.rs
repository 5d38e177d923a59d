use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Pseudospectral operators on an `n × n` uniform grid over `[0, 2π)²`.
///
/// Grid values are stored row-major with `x` along the fast axis:
/// `index = iy * n + ix`.
pub struct Fourier2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Signed integer wavenumber for each index along one axis.
    k: Vec<f64>,
}

impl Fourier2 {
    /// Shared plan for grid size `n`; plans are cached per size.
    pub fn get(n: usize) -> Arc<Fourier2> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Fourier2>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("fft cache poisoned");
        map.entry(n)
            .or_insert_with(|| Arc::new(Fourier2::new(n)))
            .clone()
    }

    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let k = (0..n)
            .map(|i| {
                if i < n / 2 {
                    i as f64
                } else {
                    i as f64 - n as f64
                }
            })
            .collect();
        Fourier2 {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            k,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Signed wavenumber at axis index `i`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        self.k[i]
    }

    /// Node coordinate at axis index `i`.
    pub fn node(&self, i: usize) -> f64 {
        2.0 * PI * i as f64 / self.n as f64
    }

    /// Quadrature weight of a single node: `(2π/n)²`.
    pub fn cell_area(&self) -> f64 {
        let h = 2.0 * PI / self.n as f64;
        h * h
    }

    fn transpose(&self, a: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                a.swap(i * n + j, j * n + i);
            }
        }
    }

    fn process_2d(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        plan.process(buf);
        self.transpose(buf);
        plan.process(buf);
        self.transpose(buf);
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.len());
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.process_2d(&mut buf, &self.fwd);
        buf
    }

    /// Inverse transform normalized by `1/n²`, real part only.
    pub fn inverse(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut buf = spec.to_vec();
        self.process_2d(&mut buf, &self.inv);
        let norm = 1.0 / self.len() as f64;
        buf.iter().map(|c| c.re * norm).collect()
    }

    /// Unnormalized inverse transform keeping the complex result.
    pub fn inverse_raw(&self, spec: &[Complex64]) -> Vec<Complex64> {
        let mut buf = spec.to_vec();
        self.process_2d(&mut buf, &self.inv);
        buf
    }

    fn nyquist(&self, i: usize) -> bool {
        self.n.is_multiple_of(2) && i == self.n / 2
    }

    /// Multiply each mode by `f(kx, ky)`.
    pub fn apply<F: Fn(f64, f64) -> Complex64>(&self, spec: &[Complex64], f: F) -> Vec<Complex64> {
        let n = self.n;
        let mut out = spec.to_vec();
        for iy in 0..n {
            for ix in 0..n {
                out[iy * n + ix] *= f(self.k[ix], self.k[iy]);
            }
        }
        out
    }

    /// Flat Laplacian `∂xx + ∂yy` (non-positive spectrum).
    pub fn laplacian_spec(&self, spec: &[Complex64]) -> Vec<Complex64> {
        self.apply(spec, |kx, ky| Complex64::new(-(kx * kx + ky * ky), 0.0))
    }

    pub fn laplacian(&self, values: &[f64]) -> Vec<f64> {
        self.inverse(&self.laplacian_spec(&self.forward(values)))
    }

    /// First derivatives `(∂x f, ∂y f)`; the Nyquist mode is dropped.
    pub fn gradient_spec(&self, spec: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.n;
        let mut dx = spec.to_vec();
        let mut dy = spec.to_vec();
        for iy in 0..n {
            for ix in 0..n {
                let idx = iy * n + ix;
                let kx = if self.nyquist(ix) { 0.0 } else { self.k[ix] };
                let ky = if self.nyquist(iy) { 0.0 } else { self.k[iy] };
                dx[idx] *= Complex64::new(0.0, kx);
                dy[idx] *= Complex64::new(0.0, ky);
            }
        }
        (dx, dy)
    }

    /// Second derivatives `(∂xx f, ∂xy f, ∂yy f)`.
    pub fn hessian_spec(
        &self,
        spec: &[Complex64],
    ) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
        let n = self.n;
        let mut xx = spec.to_vec();
        let mut xy = spec.to_vec();
        let mut yy = spec.to_vec();
        for iy in 0..n {
            for ix in 0..n {
                let idx = iy * n + ix;
                let kx = self.k[ix];
                let ky = self.k[iy];
                let kxo = if self.nyquist(ix) { 0.0 } else { kx };
                let kyo = if self.nyquist(iy) { 0.0 } else { ky };
                xx[idx] *= -kx * kx;
                xy[idx] *= -kxo * kyo;
                yy[idx] *= -ky * ky;
            }
        }
        (xx, xy, yy)
    }

    /// Two-thirds dealiasing: zero every mode with `|kx|` or `|ky|` above `n/3`.
    pub fn dealias(&self, spec: &mut [Complex64]) {
        let n = self.n;
        let cut = (n / 3) as f64;
        for iy in 0..n {
            for ix in 0..n {
                if self.k[ix].abs() > cut || self.k[iy].abs() > cut {
                    spec[iy * n + ix] = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    /// Mean of grid values.
    pub fn mean(values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
