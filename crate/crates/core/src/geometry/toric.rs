//! S¹-invariant metrics on the sphere in symplectic coordinates.
//!
//! The symplectic potential is `u = u₀ + v` on the moment interval [-1, 1],
//! with the Guillemin part `u₀ = ½[(1+x)log(1+x) + (1−x)log(1−x)]` handled
//! analytically. Writing `ψ = 1/u″ = (1−x²)·w`, `w = 1/(1 + (1−x²)v″)`,
//! only the smooth factor `w` is ever differentiated numerically.

use std::sync::Arc;

use super::CurvatureNorms;
use crate::error::{Error, Result};
use crate::spectral::Chebyshev;

/// Smooth correction `v` at the Chebyshev–Gauss–Lobatto nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ToricPotential {
    m: usize,
    v: Vec<f64>,
}

pub const MIN_RESOLUTION: usize = 8;
pub const MAX_RESOLUTION: usize = 512;

impl ToricPotential {
    pub fn new(m: usize, v: Vec<f64>) -> Result<Self> {
        if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&m) {
            return Err(Error::BadParams(format!(
                "toric resolution {m} must lie in [{MIN_RESOLUTION}, {MAX_RESOLUTION}]"
            )));
        }
        if v.len() != m + 1 {
            return Err(Error::BadParams(format!(
                "expected {} values, got {}",
                m + 1,
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::BadParams("potential has non-finite values".into()));
        }
        Ok(ToricPotential { m, v })
    }

    pub fn zero(m: usize) -> Result<Self> {
        Self::new(m, vec![0.0; m + 1])
    }

    /// Sample `f` at the nodes and remove the affine part.
    pub fn from_fn(m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let ch = Chebyshev::get(m.max(2));
        let mut v: Vec<f64> = ch.nodes().iter().map(|&x| f(x)).collect();
        if v.len() == m + 1 {
            remove_affine(&ch, &mut v);
        }
        Self::new(m, v)
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub(crate) fn chebyshev(&self) -> Arc<Chebyshev> {
        Chebyshev::get(self.m)
    }

    /// `v(x) → v(−x)`; the nodes are symmetric so this is a reversal.
    pub fn reflected(&self) -> Self {
        let mut v = self.v.clone();
        v.reverse();
        ToricPotential { m: self.m, v }
    }
}

/// Affine functions do not change `u″`; drop the `T_0`, `T_1` components.
pub(crate) fn remove_affine(ch: &Chebyshev, v: &mut [f64]) {
    let a = ch.coeffs(v);
    for (vj, &x) in v.iter_mut().zip(ch.nodes()) {
        *vj -= a[0] + a[1] * x;
    }
}

/// `1 + (1−x²)v″` with the positivity check.
pub(crate) fn density(p: &ToricPotential, floor: f64) -> Result<Vec<f64>> {
    let ch = p.chebyshev();
    let v2 = ch.second_derivative(&p.v);
    let d: Vec<f64> = ch
        .nodes()
        .iter()
        .zip(&v2)
        .map(|(x, v2)| 1.0 + (1.0 - x * x) * v2)
        .collect();
    let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > floor) {
        return Err(Error::NonKahler { min, floor });
    }
    Ok(d)
}

/// Evaluated unit-scale geometry plus the metric scale factor.
pub(crate) struct ToricEval {
    pub ch: Arc<Chebyshev>,
    pub scale: f64,
    pub w: Vec<f64>,
    /// `ψ = 1/u″` and `ψ′`.
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
    /// Unit-scale scalar curvature and its first two derivatives.
    pub s: Vec<f64>,
    pub ds: Vec<f64>,
    pub d2s: Vec<f64>,
}

impl ToricEval {
    pub fn new(p: &ToricPotential, scale: f64, floor: f64) -> Result<Self> {
        let ch = p.chebyshev();
        let density = density(p, floor)?;
        let x = ch.nodes();
        // Differentiate only the deviation w − 1 = −(1−x²)v″/density, which
        // is exactly zero on the round state.
        let dev: Vec<f64> = density.iter().map(|d| (1.0 - d) / d).collect();
        let w: Vec<f64> = dev.iter().map(|d| 1.0 + d).collect();
        let dc = Chebyshev::deriv_coeffs(&ch.coeffs(&dev));
        let dw = ch.values(&dc);
        let d2w = ch.values(&Chebyshev::deriv_coeffs(&dc));
        let mut psi = Vec::with_capacity(w.len());
        let mut dpsi = Vec::with_capacity(w.len());
        let mut s_dev = Vec::with_capacity(w.len());
        for j in 0..w.len() {
            let q = 1.0 - x[j] * x[j];
            psi.push(q * w[j]);
            dpsi.push(-2.0 * x[j] * w[j] + q * dw[j]);
            // Abreu: S = −ψ″ = 2w + 4x w′ − (1−x²) w″
            s_dev.push(2.0 * dev[j] + 4.0 * x[j] * dw[j] - q * d2w[j]);
        }
        let s = s_dev.iter().map(|d| 2.0 + d).collect();
        let sc = Chebyshev::deriv_coeffs(&ch.coeffs(&s_dev));
        let ds = ch.values(&sc);
        let d2s = ch.values(&Chebyshev::deriv_coeffs(&sc));
        Ok(ToricEval {
            ch,
            scale,
            w,
            psi,
            dpsi,
            s,
            ds,
            d2s,
        })
    }

    /// Scalar curvature of the scaled metric.
    pub fn scalar(&self) -> Vec<f64> {
        self.s.iter().map(|s| s / self.scale).collect()
    }

    /// Topological average from boundary data: `ψ′(±1) = ∓2 w(±1)`.
    pub fn average_scalar(&self) -> f64 {
        let m = self.w.len() - 1;
        let dpsi_right = -2.0 * self.w[0];
        let dpsi_left = 2.0 * self.w[m];
        (dpsi_left - dpsi_right) / 2.0 / self.scale
    }

    /// `∫ f dμ` with `dμ = scale · dx`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.scale * self.ch.integrate(values)
    }

    pub fn volume(&self) -> f64 {
        self.integrate(&vec![1.0; self.s.len()])
    }

    pub fn laplacian_g(&self, f: &[f64]) -> Vec<f64> {
        let ch = &self.ch;
        let flux: Vec<f64> = self
            .psi
            .iter()
            .zip(ch.derivative(f))
            .map(|(p, d)| p * d)
            .collect();
        ch.derivative(&flux)
            .into_iter()
            .map(|v| v / self.scale)
            .collect()
    }

    pub fn calabi_energy(&self) -> f64 {
        let sbar = self.average_scalar();
        let sq: Vec<f64> = self
            .scalar()
            .iter()
            .map(|s| (s - sbar) * (s - sbar))
            .collect();
        self.integrate(&sq)
    }

    /// Unit-scale Hessian components `(a, b)`: `|∇²S|² = a² + b²`,
    /// `ΔS = a + b`, with `a = ψS″ + ½ψ′S′`, `b = ½ψ′S′`.
    fn hessian_parts(&self, j: usize) -> (f64, f64) {
        let b = 0.5 * self.dpsi[j] * self.ds[j];
        (self.psi[j] * self.d2s[j] + b, b)
    }

    pub fn norms(&self) -> CurvatureNorms {
        let a = self.scale;
        let n = self.s.len();
        let s = self.scalar();
        let mut lap = Vec::with_capacity(n);
        let mut grad = Vec::with_capacity(n);
        let mut hess = Vec::with_capacity(n);
        for j in 0..n {
            let (ha, hb) = self.hessian_parts(j);
            lap.push((ha + hb) / (a * a));
            grad.push((self.psi[j].max(0.0)).sqrt() * self.ds[j].abs() / a.powf(1.5));
            hess.push((ha * ha + hb * hb).sqrt() / (a * a));
        }
        CurvatureNorms::from_fields(&s, &lap, &grad, &hess)
    }

    /// `sqrt(½ ∫ |∇²S|₀²)`; in this reduction `|∇²S|₀² = ½(ψS″)²`.
    pub fn extremality_residual(&self) -> f64 {
        let a = self.scale;
        let tf: Vec<f64> = (0..self.s.len())
            .map(|j| {
                let (ha, hb) = self.hessian_parts(j);
                0.5 * (ha - hb) * (ha - hb) / a.powi(4)
            })
            .collect();
        (0.5 * self.integrate(&tf)).sqrt()
    }
}
