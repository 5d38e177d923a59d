//! Kähler metrics on two symmetric reductions of complex dimension one and
//! the pointwise geometry of each.
//!
//! Conventions shared by every module: `Δ₀` is the flat Laplacian with
//! non-positive spectrum, `S` is the Riemannian scalar curvature (twice the
//! Gauss curvature, so the flat torus has `S = 0` and the round sphere
//! `S = 2`), and `|Rm| = |S|/2`.

pub mod toric;
pub mod torus;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use toric::ToricEval;
pub use toric::ToricPotential;
use torus::TorusEval;
pub use torus::TorusPotential;

/// Default positivity floor for the metric density.
pub const POSITIVITY_FLOOR: f64 = 1e-8;

/// Ratio `|Rm| / |S|` in complex dimension one.
pub const C_Q: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Torus,
    Toric1d,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Torus => "torus",
            Backend::Toric1d => "toric1d",
        }
    }

    pub fn parse(s: &str) -> Option<Backend> {
        match s {
            "torus" => Some(Backend::Torus),
            "toric1d" => Some(Backend::Toric1d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Torus(TorusPotential),
    Toric(ToricPotential),
}

impl Potential {
    pub fn backend(&self) -> Backend {
        match self {
            Potential::Torus(_) => Backend::Torus,
            Potential::Toric(_) => Backend::Toric1d,
        }
    }

    pub fn resolution(&self) -> usize {
        match self {
            Potential::Torus(p) => p.resolution(),
            Potential::Toric(p) => p.resolution(),
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            Potential::Torus(p) => p.values(),
            Potential::Toric(p) => p.values(),
        }
    }
}

/// A point of the flow. `scale` multiplies the metric (`g → scale·g`) and is
/// 1 for every state the flow produces from presets.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricState {
    pub potential: Potential,
    pub t: f64,
    pub scale: f64,
}

impl MetricState {
    pub fn new(potential: Potential, t: f64) -> Self {
        MetricState {
            potential,
            t,
            scale: 1.0,
        }
    }

    pub fn torus(p: TorusPotential) -> Self {
        Self::new(Potential::Torus(p), 0.0)
    }

    pub fn toric(p: ToricPotential) -> Self {
        Self::new(Potential::Toric(p), 0.0)
    }

    /// Flat torus at resolution `n`.
    pub fn flat(n: usize) -> Result<Self> {
        Ok(Self::torus(TorusPotential::zero(n)?))
    }

    /// Round sphere at resolution `m`.
    pub fn round(m: usize) -> Result<Self> {
        Ok(Self::toric(ToricPotential::zero(m)?))
    }

    pub fn backend(&self) -> Backend {
        self.potential.backend()
    }

    pub fn resolution(&self) -> usize {
        self.potential.resolution()
    }

    /// The same potential with the metric multiplied by `a`.
    pub fn rescaled(&self, a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::BadParams(format!(
                "scale factor {a} must be positive"
            )));
        }
        Ok(MetricState {
            scale: self.scale * a,
            ..self.clone()
        })
    }

    pub(crate) fn eval(&self) -> Result<Eval> {
        self.eval_with_floor(POSITIVITY_FLOOR)
    }

    pub(crate) fn eval_with_floor(&self, floor: f64) -> Result<Eval> {
        Ok(match &self.potential {
            Potential::Torus(p) => Eval::Torus(TorusEval::new(p, self.scale, floor)?),
            Potential::Toric(p) => Eval::Toric(ToricEval::new(p, self.scale, floor)?),
        })
    }
}

/// Real function sampled on a backend grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub backend: Backend,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(backend: Backend, values: Vec<f64>) -> Self {
        ScalarField { backend, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Sup-norms of curvature along with the two smoothing-estimate probes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureNorms {
    /// `sup |S|`
    pub o: f64,
    /// `sup |∇̄∇S|`, the single component `|g^{zz̄} S_{,zz̄}| = ½|Δ_g S|`
    pub p: f64,
    /// `sup |Rm|`
    pub q: f64,
    /// `sup |∇Rm|`
    pub grad_rm: f64,
    /// `sup |∇²Rm|`
    pub hess_rm: f64,
}

impl CurvatureNorms {
    fn from_fields(s: &[f64], lap: &[f64], grad: &[f64], hess: &[f64]) -> Self {
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let o = sup(s);
        CurvatureNorms {
            o,
            p: 0.5 * sup(lap),
            q: C_Q * o,
            grad_rm: C_Q * sup(grad),
            hess_rm: C_Q * sup(hess),
        }
    }
}

pub(crate) enum Eval {
    Torus(TorusEval),
    Toric(ToricEval),
}

impl Eval {
    pub fn backend(&self) -> Backend {
        match self {
            Eval::Torus(_) => Backend::Torus,
            Eval::Toric(_) => Backend::Toric1d,
        }
    }

    pub fn scalar(&self) -> Vec<f64> {
        match self {
            Eval::Torus(e) => e.s.clone(),
            Eval::Toric(e) => e.scalar(),
        }
    }

    pub fn average_scalar(&self) -> f64 {
        match self {
            Eval::Torus(_) => 0.0,
            Eval::Toric(e) => e.average_scalar(),
        }
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        match self {
            Eval::Torus(e) => e.integrate(values),
            Eval::Toric(e) => e.integrate(values),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Eval::Torus(e) => e.volume(),
            Eval::Toric(e) => e.volume(),
        }
    }

    pub fn calabi_energy(&self) -> f64 {
        match self {
            Eval::Torus(e) => e.calabi_energy(),
            Eval::Toric(e) => e.calabi_energy(),
        }
    }

    pub fn laplacian_g(&self, f: &[f64]) -> Vec<f64> {
        match self {
            Eval::Torus(e) => e.laplacian_g(f),
            Eval::Toric(e) => e.laplacian_g(f),
        }
    }

    pub fn norms(&self) -> CurvatureNorms {
        match self {
            Eval::Torus(e) => e.norms(),
            Eval::Toric(e) => e.norms(),
        }
    }

    pub fn extremality_residual(&self) -> f64 {
        match self {
            Eval::Torus(e) => e.extremality_residual(),
            Eval::Toric(e) => e.extremality_residual(),
        }
    }
}

/// `h = 1 + Δ₀φ`, failing with `NonKahler` at or below `floor`.
pub fn conformal_factor(p: &TorusPotential, floor: f64) -> Result<ScalarField> {
    Ok(ScalarField::new(Backend::Torus, torus::density(p, floor)?))
}

pub fn scalar_curvature(s: &MetricState) -> Result<ScalarField> {
    let e = s.eval()?;
    Ok(ScalarField::new(e.backend(), e.scalar()))
}

/// Class-determined average of the scalar curvature.
pub fn average_scalar(s: &MetricState) -> Result<f64> {
    match &s.potential {
        Potential::Torus(_) => Ok(0.0),
        Potential::Toric(_) => Ok(s.eval()?.average_scalar()),
    }
}

pub fn volume(s: &MetricState) -> Result<f64> {
    Ok(s.eval()?.volume())
}

/// `∫ S dV`; topological (0 on the torus, 4 on the unit-scale sphere in `dx`).
pub fn total_scalar(s: &MetricState) -> Result<f64> {
    let e = s.eval()?;
    Ok(e.integrate(&e.scalar()))
}

/// `∫ (S − S̄)² dV`.
pub fn calabi_energy(s: &MetricState) -> Result<f64> {
    Ok(s.eval()?.calabi_energy())
}

pub fn laplacian_g(s: &MetricState, f: &ScalarField) -> Result<ScalarField> {
    if f.backend != s.backend() || f.values.len() != s.potential.values().len() {
        return Err(Error::BadParams(
            "field does not match the state grid".into(),
        ));
    }
    let e = s.eval()?;
    Ok(ScalarField::new(e.backend(), e.laplacian_g(&f.values)))
}

pub fn curvature_norms(s: &MetricState) -> Result<CurvatureNorms> {
    Ok(s.eval()?.norms())
}
