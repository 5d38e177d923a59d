//! Flat square torus `[0,2π)²` with metric `h (dx² + dy²)`, `h = 1 + Δ₀φ`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use super::CurvatureNorms;
use crate::error::{Error, Result};
use crate::spectral::Fourier2;

/// Kähler potential on an `n × n` periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPotential {
    n: usize,
    phi: Vec<f64>,
}

pub const MIN_RESOLUTION: usize = 8;
pub const MAX_RESOLUTION: usize = 1024;

impl TorusPotential {
    pub fn new(n: usize, phi: Vec<f64>) -> Result<Self> {
        if !n.is_power_of_two() || !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&n) {
            return Err(Error::BadParams(format!(
                "torus resolution {n} must be a power of two in [{MIN_RESOLUTION}, {MAX_RESOLUTION}]"
            )));
        }
        if phi.len() != n * n {
            return Err(Error::BadParams(format!(
                "expected {} values, got {}",
                n * n,
                phi.len()
            )));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadParams("potential has non-finite values".into()));
        }
        Ok(TorusPotential { n, phi })
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n * n])
    }

    /// Build from a function of `(x, y)` sampled on the grid, gauge fixed.
    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let h = 2.0 * PI / n as f64;
        let mut phi: Vec<f64> = (0..n * n)
            .map(|idx| f((idx % n) as f64 * h, (idx / n) as f64 * h))
            .collect();
        remove_mean(&mut phi);
        Self::new(n, phi)
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub(crate) fn fourier(&self) -> Arc<Fourier2> {
        Fourier2::get(self.n)
    }

    /// Shift by whole grid cells: `φ(x, y) → φ(x + px·h, y + py·h)`.
    pub fn translated(&self, px: usize, py: usize) -> Self {
        let n = self.n;
        let phi = (0..n * n)
            .map(|idx| {
                let (ix, iy) = (idx % n, idx / n);
                self.phi[((iy + py) % n) * n + (ix + px) % n]
            })
            .collect();
        TorusPotential { n, phi }
    }
}

pub(crate) fn remove_mean(v: &mut [f64]) {
    let mean = Fourier2::mean(v);
    v.iter_mut().for_each(|x| *x -= mean);
}

/// `h = 1 + Δ₀φ` with the positivity check.
pub(crate) fn density(p: &TorusPotential, floor: f64) -> Result<Vec<f64>> {
    let f = p.fourier();
    let lap = f.laplacian(&p.phi);
    let h: Vec<f64> = lap.iter().map(|l| 1.0 + l).collect();
    let min = h.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > floor) {
        return Err(Error::NonKahler { min, floor });
    }
    Ok(h)
}

/// Evaluated geometry of one torus state.
pub(crate) struct TorusEval {
    pub f: Arc<Fourier2>,
    /// Effective density `scale · h`.
    pub h: Vec<f64>,
    pub s: Vec<f64>,
}

impl TorusEval {
    pub fn new(p: &TorusPotential, scale: f64, floor: f64) -> Result<Self> {
        let f = p.fourier();
        let h: Vec<f64> = density(p, floor)?.into_iter().map(|v| scale * v).collect();
        let log_h: Vec<f64> = h.iter().map(|v| v.ln()).collect();
        let lap = f.laplacian(&log_h);
        let s = lap.iter().zip(&h).map(|(l, hv)| -l / hv).collect();
        Ok(TorusEval { f, h, s })
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.f.cell_area() * values.iter().zip(&self.h).map(|(v, h)| v * h).sum::<f64>()
    }

    pub fn volume(&self) -> f64 {
        self.f.cell_area() * self.h.iter().sum::<f64>()
    }

    pub fn laplacian_g(&self, values: &[f64]) -> Vec<f64> {
        let lap = self.f.laplacian(values);
        lap.iter().zip(&self.h).map(|(l, h)| l / h).collect()
    }

    pub fn calabi_energy(&self) -> f64 {
        let sq: Vec<f64> = self.s.iter().map(|s| s * s).collect();
        self.integrate(&sq)
    }

    /// Pointwise `|∇S|_g` and `|∇²S|_g`, plus `Δ_g S` and the trace-free
    /// Hessian norm squared.
    fn derivative_fields(&self) -> DerivativeFields {
        let f = &self.f;
        let s_hat = f.forward(&self.s);
        let (sx, sy) = f.gradient_spec(&s_hat);
        let (sxx, sxy, syy) = f.hessian_spec(&s_hat);
        let (sx, sy) = (f.inverse(&sx), f.inverse(&sy));
        let (sxx, sxy, syy) = (f.inverse(&sxx), f.inverse(&sxy), f.inverse(&syy));
        let (hx, hy) = f.gradient_spec(&f.forward(&self.h));
        let (hx, hy) = (f.inverse(&hx), f.inverse(&hy));

        let len = self.s.len();
        let mut out = DerivativeFields {
            grad: Vec::with_capacity(len),
            hess: Vec::with_capacity(len),
            lap: Vec::with_capacity(len),
            tracefree_sq: Vec::with_capacity(len),
        };
        for i in 0..len {
            let h = self.h[i];
            // Christoffel symbols of a conformal metric e^{2w}δ, w = ½ log h
            let wx = 0.5 * hx[i] / h;
            let wy = 0.5 * hy[i] / h;
            let wdot = wx * sx[i] + wy * sy[i];
            let hxx = sxx[i] - 2.0 * wx * sx[i] + wdot;
            let hyy = syy[i] - 2.0 * wy * sy[i] + wdot;
            let hxy = sxy[i] - wy * sx[i] - wx * sy[i];
            let hess_sq = (hxx * hxx + 2.0 * hxy * hxy + hyy * hyy) / (h * h);
            let lap = (sxx[i] + syy[i]) / h;
            out.grad.push(((sx[i] * sx[i] + sy[i] * sy[i]) / h).sqrt());
            out.hess.push(hess_sq.sqrt());
            out.lap.push(lap);
            out.tracefree_sq.push((hess_sq - 0.5 * lap * lap).max(0.0));
        }
        out
    }

    pub fn norms(&self) -> CurvatureNorms {
        let d = self.derivative_fields();
        CurvatureNorms::from_fields(&self.s, &d.lap, &d.grad, &d.hess)
    }

    pub fn extremality_residual(&self) -> f64 {
        let d = self.derivative_fields();
        (0.5 * self.integrate(&d.tracefree_sq)).sqrt()
    }

    /// Solve `Δ_g f = rhs` spectrally; returns `f` with zero grid mean and
    /// the normwise backward error of the solve.
    pub fn poisson(&self, rhs: &[f64]) -> (Vec<f64>, f64) {
        let f = &self.f;
        let weighted: Vec<f64> = rhs.iter().zip(&self.h).map(|(r, h)| r * h).collect();
        let spec = f.forward(&weighted);
        let sol = f.apply(&spec, |kx, ky| {
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(-1.0 / k2, 0.0)
            }
        });
        let sol = f.inverse(&sol);
        let check = self.laplacian_g(&sol);
        let residual = check
            .iter()
            .zip(rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let kmax = (f.n() / 2) as f64;
        let hmin = self.h.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        let op_norm = 2.0 * kmax * kmax / hmin;
        (
            sol.clone(),
            crate::diagnostics::backward_error(residual, op_norm, &sol, rhs),
        )
    }
}

struct DerivativeFields {
    grad: Vec<f64>,
    hess: Vec<f64>,
    lap: Vec<f64>,
    tracefree_sq: Vec<f64>,
}
