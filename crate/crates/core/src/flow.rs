//! Semi-implicit spectral integration of the Calabi flow.
//!
//! Torus: `∂φ/∂t = S − S̄` with the bi-Laplacian `−Δ₀²` implicit.
//! Toric: `∂v/∂t = σ (S − S̄)` with `σ = TORIC_FLOW_SIGN` and the exact
//! polynomial operator `L v = ((1−x²)² v″)″` implicit; `L` is the
//! linearization of `S − 2` at the round state.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector, LU};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{self, DiagnosticsSample, VectorFieldSpec};
use crate::error::{Error, Result};
use crate::geometry::{
    toric, torus, Backend, MetricState, Potential, ScalarField, ToricPotential, TorusPotential,
    POSITIVITY_FLOOR,
};
use crate::spectral::Chebyshev;
use crate::trace::{RunStats, Termination, Trace, TraceSource};

/// Sign relating the symplectic-potential flow to the Kähler-potential flow.
/// Fixed by the energy-decrease experiment kept in the tests.
pub const TORIC_FLOW_SIGN: f64 = -1.0;

/// Accepted steps in a row before the step size grows.
pub const GROW_AFTER: u32 = 4;
pub const GROW_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub backend: Backend,
    /// Torus grid side `N` or toric Chebyshev degree `M`.
    pub resolution: usize,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub sample_interval: f64,
    /// Allowed per-step increase of the Calabi energy.
    #[serde(default)]
    pub energy_tol: f64,
    /// Stop once the Calabi energy falls strictly below this value.
    #[serde(default)]
    pub stop_energy: f64,
    /// Flow time between checkpoints; none when absent.
    #[serde(default)]
    pub checkpoint_interval: Option<f64>,
    #[serde(default = "default_floor")]
    pub positivity_floor: f64,
}

fn default_floor() -> f64 {
    POSITIVITY_FLOOR
}

impl FlowConfig {
    /// Reasonable defaults for a backend at a resolution.
    pub fn new(backend: Backend, resolution: usize) -> Self {
        FlowConfig {
            backend,
            resolution,
            dt_init: 1e-3,
            dt_min: 1e-10,
            dt_max: 0.05,
            t_end: 1.0,
            sample_interval: 0.1,
            energy_tol: 0.0,
            stop_energy: 0.0,
            checkpoint_interval: None,
            positivity_floor: POSITIVITY_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadConfig(msg));
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return bad(format!(
                "need 0 < dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            ));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!(
                "t_end must be positive and finite, got {}",
                self.t_end
            ));
        }
        if !(self.sample_interval > 0.0) {
            return bad("sample_interval must be positive".into());
        }
        if !(self.energy_tol >= 0.0) || !(self.stop_energy >= 0.0) {
            return bad("energy_tol and stop_energy must be non-negative".into());
        }
        if let Some(c) = self.checkpoint_interval {
            if !(c > 0.0) {
                return bad("checkpoint_interval must be positive".into());
            }
        }
        if !(self.positivity_floor >= 0.0) {
            return bad("positivity_floor must be non-negative".into());
        }
        let ok = match self.backend {
            Backend::Torus => {
                self.resolution.is_power_of_two()
                    && (torus::MIN_RESOLUTION..=torus::MAX_RESOLUTION).contains(&self.resolution)
            }
            Backend::Toric1d => {
                (toric::MIN_RESOLUTION..=toric::MAX_RESOLUTION).contains(&self.resolution)
            }
        };
        if !ok {
            return bad(format!(
                "resolution {} unsupported for backend {}",
                self.resolution,
                self.backend.name()
            ));
        }
        Ok(())
    }

    /// 64-bit hash of the canonical (key-sorted) JSON form.
    pub fn config_hash(&self) -> u64 {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: FlowConfig = toml::from_str(text).map_err(|e| Error::BadConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// The candidate state (returned even when rejected).
    pub new_state: MetricState,
    pub dt_used: f64,
    pub accepted: bool,
    pub energy_delta: f64,
    /// Step size to try next: `dt` if accepted, `dt/2` otherwise.
    pub suggested_dt: f64,
    pub energy: f64,
    pub total_scalar: f64,
    pub volume: f64,
}

/// Time derivative of the evolving potential.
pub fn rhs(s: &MetricState) -> Result<ScalarField> {
    let e = s.eval()?;
    let sbar = e.average_scalar();
    let sign = match s.backend() {
        Backend::Torus => 1.0,
        Backend::Toric1d => TORIC_FLOW_SIGN,
    };
    let values = e
        .scalar()
        .iter()
        .map(|v| sign * (v - sbar) / s.scale)
        .collect();
    Ok(ScalarField::new(s.backend(), values))
}

/// [`rhs`] plus the potential-level Lie derivative along `Re X`.
///
/// On the torus a constant field `a∂x + b∂y` adds the transport term
/// `a φ_x + b φ_y`. The toric generator acts trivially on invariant
/// potentials, so there the result equals [`rhs`].
pub fn modified_rhs(s: &MetricState, x: VectorFieldSpec) -> Result<ScalarField> {
    let mut base = rhs(s)?;
    if x.backend() != s.backend() {
        return Err(Error::BadParams(
            "vector field does not match the state backend".into(),
        ));
    }
    if let (Potential::Torus(p), VectorFieldSpec::Torus { a, b }) = (&s.potential, x) {
        if a != 0.0 || b != 0.0 {
            let t = transport(p, a, b);
            base.values.iter_mut().zip(&t).for_each(|(r, t)| *r += t);
        }
    }
    Ok(base)
}

fn transport(p: &TorusPotential, a: f64, b: f64) -> Vec<f64> {
    let f = p.fourier();
    let (dx, dy) = f.gradient_spec(&f.forward(p.values()));
    let (dx, dy) = (f.inverse(&dx), f.inverse(&dy));
    dx.iter().zip(&dy).map(|(x, y)| a * x + b * y).collect()
}

/// L² norm of `∂̄X` for `X = ∇^{1,0} S`; zero exactly on extremal states.
pub fn extremality_residual(s: &MetricState) -> Result<f64> {
    Ok(s.eval()?.extremality_residual())
}

type SharedMatrix = Arc<DMatrix<f64>>;

/// Node-space matrix of `L v = ((1−x²)² v″)″`, exact on polynomials.
fn toric_operator(m: usize) -> SharedMatrix {
    static CACHE: OnceLock<Mutex<HashMap<usize, SharedMatrix>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("operator cache poisoned");
    map.entry(m)
        .or_insert_with(|| {
            let ch = Chebyshev::get(m);
            let mut op = DMatrix::zeros(m + 1, m + 1);
            let mut e = vec![0.0; m + 1];
            for j in 0..=m {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[j] = 1.0;
                let col = apply_toric_operator(&ch, &e);
                for (i, v) in col.into_iter().enumerate() {
                    op[(i, j)] = v;
                }
            }
            Arc::new(op)
        })
        .clone()
}

pub(crate) fn apply_toric_operator(ch: &Chebyshev, v: &[f64]) -> Vec<f64> {
    let m = ch.degree();
    let d2 = Chebyshev::deriv_coeffs(&Chebyshev::deriv_coeffs(&ch.coeffs(v)));
    let weighted = Chebyshev::mul_one_minus_x2(&Chebyshev::mul_one_minus_x2(&d2));
    let mut out = Chebyshev::deriv_coeffs(&Chebyshev::deriv_coeffs(&weighted));
    out.truncate(m + 1);
    ch.values(&out)
}

/// Stateful stepper; caches the factorized implicit operator per step size.
pub struct Stepper {
    floor: f64,
    energy_tol: f64,
    dt_min: f64,
    lu_cache: Vec<(u64, usize, LU<f64, nalgebra::Dyn, nalgebra::Dyn>)>,
}

impl Default for Stepper {
    fn default() -> Self {
        Stepper {
            floor: POSITIVITY_FLOOR,
            energy_tol: 0.0,
            dt_min: 0.0,
            lu_cache: Vec::new(),
        }
    }
}

impl Stepper {
    pub fn new(cfg: &FlowConfig) -> Self {
        Stepper {
            floor: cfg.positivity_floor,
            energy_tol: cfg.energy_tol,
            dt_min: cfg.dt_min,
            lu_cache: Vec::new(),
        }
    }

    /// One semi-implicit step of the plain flow.
    pub fn step(&mut self, s: &MetricState, dt: f64) -> Result<StepResult> {
        self.step_modified(s, dt, VectorFieldSpec::zero(s.backend()))
    }

    /// One semi-implicit step of the flow modified by a holomorphic field.
    pub fn step_modified(
        &mut self,
        s: &MetricState,
        dt: f64,
        field: VectorFieldSpec,
    ) -> Result<StepResult> {
        if !(dt > 0.0) || dt < self.dt_min {
            return Err(Error::StepTooSmall {
                dt,
                dt_min: self.dt_min,
            });
        }
        if field.backend() != s.backend() {
            return Err(Error::BadParams(
                "vector field does not match the state backend".into(),
            ));
        }
        let old = s.eval_with_floor(self.floor)?;
        let ca_old = old.calabi_energy();
        let potential = self.advance(s, dt, field)?;
        let new_state = MetricState {
            potential,
            t: s.t + dt,
            scale: s.scale,
        };
        let new = new_state.eval_with_floor(self.floor)?;
        let energy = new.calabi_energy();
        let energy_delta = energy - ca_old;
        let accepted = energy_delta <= self.energy_tol;
        Ok(StepResult {
            total_scalar: new.integrate(&new.scalar()),
            volume: new.volume(),
            new_state,
            dt_used: dt,
            accepted,
            energy_delta,
            suggested_dt: if accepted { dt } else { 0.5 * dt },
            energy,
        })
    }

    fn advance(&mut self, s: &MetricState, dt: f64, field: VectorFieldSpec) -> Result<Potential> {
        // The flow of scale·g runs at rate 1/scale² in unit-scale time.
        let dt_eff = dt / (s.scale * s.scale);
        match &s.potential {
            Potential::Torus(p) => {
                let unit = MetricState::new(s.potential.clone(), s.t);
                let e = unit.eval_with_floor(self.floor)?;
                let f = p.fourier();
                let mut explicit: Vec<f64> = e.scalar().iter().map(|v| dt_eff * v).collect();
                if let VectorFieldSpec::Torus { a, b } = field {
                    if a != 0.0 || b != 0.0 {
                        let t = transport(p, a, b);
                        explicit.iter_mut().zip(&t).for_each(|(x, t)| *x += dt * t);
                    }
                }
                let mut ex = f.forward(&explicit);
                f.dealias(&mut ex);
                let upd = f.apply(&ex, |kx, ky| {
                    let k2 = kx * kx + ky * ky;
                    Complex64::new(1.0 / (1.0 + dt_eff * k2 * k2), 0.0)
                });
                let mut spec = f.forward(p.values());
                spec.iter_mut().zip(&upd).for_each(|(a, u)| *a += u);
                spec[0] = Complex64::new(0.0, 0.0);
                Ok(Potential::Torus(TorusPotential::new(
                    p.resolution(),
                    f.inverse(&spec),
                )?))
            }
            Potential::Toric(p) => {
                let m = p.resolution();
                let unit = MetricState::new(s.potential.clone(), s.t);
                let e = unit.eval_with_floor(self.floor)?;
                let sbar = e.average_scalar();
                let ch = p.chebyshev();
                let lv = apply_toric_operator(&ch, p.values());
                let b: Vec<f64> = e
                    .scalar()
                    .iter()
                    .zip(p.values())
                    .zip(&lv)
                    .map(|((sv, v), l)| v + dt_eff * (TORIC_FLOW_SIGN * (sv - sbar) + l))
                    .collect();
                let lu = self.implicit_lu(m, dt_eff);
                let sol = lu
                    .solve(&DVector::from_vec(b))
                    .ok_or(Error::SolverFailure { residual: f64::NAN })?;
                let mut v: Vec<f64> = sol.iter().cloned().collect();
                toric::remove_affine(&ch, &mut v);
                Ok(Potential::Toric(ToricPotential::new(m, v)?))
            }
        }
    }

    fn implicit_lu(&mut self, m: usize, dt: f64) -> &LU<f64, nalgebra::Dyn, nalgebra::Dyn> {
        let key = dt.to_bits();
        if let Some(pos) = self
            .lu_cache
            .iter()
            .position(|(k, mm, _)| *k == key && *mm == m)
        {
            return &self.lu_cache[pos].2;
        }
        let op = toric_operator(m);
        let a = DMatrix::identity(m + 1, m + 1) + op.as_ref() * dt;
        if self.lu_cache.len() >= 8 {
            self.lu_cache.remove(0);
        }
        self.lu_cache.push((key, m, a.lu()));
        &self.lu_cache.last().expect("just pushed").2
    }
}

/// One plain-flow step with default tolerances.
pub fn step(s: &MetricState, dt: f64) -> Result<StepResult> {
    Stepper::default().step(s, dt)
}

/// Adaptive controller state; everything needed to resume bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunControl {
    pub dt: f64,
    pub streak: u32,
    /// Index of the next scheduled sample (`t_start + k·sample_interval`).
    pub next_sample: u64,
    /// Index of the next scheduled checkpoint.
    pub next_checkpoint: u64,
    pub steps: u64,
}

/// A resumable snapshot of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: MetricState,
    pub config_hash: u64,
    pub t_start: f64,
    pub vol0: f64,
    pub control: RunControl,
    pub stats: RunStats,
    pub samples: Vec<DiagnosticsSample>,
}

/// Run the adaptive loop from `s0`.
pub fn run(cfg: &FlowConfig, s0: &MetricState) -> Result<Trace> {
    run_with(cfg, s0, &mut |_| Ok(()))
}

/// Run, handing every checkpoint to `sink`.
pub fn run_with(
    cfg: &FlowConfig,
    s0: &MetricState,
    sink: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<Trace> {
    run_to_end(cfg, s0, sink).map(|(tr, _)| tr)
}

/// As [`run_with`], also returning the last accepted state.
pub fn run_to_end(
    cfg: &FlowConfig,
    s0: &MetricState,
    sink: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<(Trace, MetricState)> {
    cfg.validate()?;
    if s0.backend() != cfg.backend || s0.resolution() != cfg.resolution {
        return Err(Error::BadConfig(format!(
            "initial state ({} at {}) does not match the configuration ({} at {})",
            s0.backend().name(),
            s0.resolution(),
            cfg.backend.name(),
            cfg.resolution
        )));
    }
    let first = diagnostics::sample(s0, None)?;
    let ckpt = Checkpoint {
        state: s0.clone(),
        config_hash: cfg.config_hash(),
        t_start: s0.t,
        vol0: first.vol,
        control: RunControl {
            dt: cfg.dt_init,
            streak: 0,
            next_sample: 1,
            next_checkpoint: 1,
            steps: 0,
        },
        stats: RunStats::default(),
        samples: vec![first],
    };
    drive(cfg, ckpt, sink)
}

/// Continue a run from a checkpoint written under the same configuration.
pub fn resume(
    cfg: &FlowConfig,
    ckpt: Checkpoint,
    sink: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<Trace> {
    resume_to_end(cfg, ckpt, sink).map(|(tr, _)| tr)
}

/// As [`resume`], also returning the last accepted state.
pub fn resume_to_end(
    cfg: &FlowConfig,
    ckpt: Checkpoint,
    sink: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<(Trace, MetricState)> {
    cfg.validate()?;
    if ckpt.config_hash != cfg.config_hash() {
        return Err(Error::SchemaMismatch(
            "checkpoint was written under a different configuration".into(),
        ));
    }
    if ckpt.state.backend() != cfg.backend || ckpt.state.resolution() != cfg.resolution {
        return Err(Error::SchemaMismatch(
            "checkpoint backend or resolution differs from configuration".into(),
        ));
    }
    drive(cfg, ckpt, sink)
}

fn drive(
    cfg: &FlowConfig,
    ckpt: Checkpoint,
    sink: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<(Trace, MetricState)> {
    let Checkpoint {
        mut state,
        config_hash,
        t_start,
        vol0,
        mut control,
        mut stats,
        mut samples,
    } = ckpt;
    let mut stepper = Stepper::new(cfg);
    let end_tol = 1e-12 * cfg.t_end.abs().max(1.0);
    let sample_time = |k: u64| t_start + k as f64 * cfg.sample_interval;
    let checkpoint_time = |k: u64| cfg.checkpoint_interval.map(|c| t_start + k as f64 * c);

    let mut ca = samples.last().map(|s| s.ca).unwrap_or(0.0);
    let termination = loop {
        if ca < cfg.stop_energy {
            break Termination::StopEnergy;
        }
        if state.t >= cfg.t_end - end_tol {
            break Termination::Completed;
        }
        let h = control.dt.min(cfg.t_end - state.t);
        let result = stepper.step(&state, h);
        match result {
            Ok(r) if r.accepted => {
                let prev = std::mem::replace(&mut state, r.new_state);
                ca = r.energy;
                control.steps += 1;
                stats.accepted += 1;
                let topo = samples[0].sbar * samples[0].vol;
                stats.max_gauss_bonnet_error = stats
                    .max_gauss_bonnet_error
                    .max((r.total_scalar - topo).abs());
                stats.max_volume_drift = stats.max_volume_drift.max((r.volume - vol0).abs() / vol0);
                control.streak += 1;
                if control.streak >= GROW_AFTER {
                    control.dt = (control.dt * GROW_FACTOR).min(cfg.dt_max);
                    control.streak = 0;
                }

                let finishing = ca < cfg.stop_energy || state.t >= cfg.t_end - end_tol;
                if state.t >= sample_time(control.next_sample) - end_tol || finishing {
                    let smp = match diagnostics::sample(&state, Some((&prev, h))) {
                        Ok(s) => s,
                        Err(e) => {
                            warn!("diagnostics failed at t = {}: {e}", state.t);
                            break Termination::Error;
                        }
                    };
                    info!(
                        "t = {:.6} dt = {:.3e} Ca = {:.6e} Q = {:.4e}",
                        smp.t, h, smp.ca, smp.q
                    );
                    samples.push(smp);
                    while sample_time(control.next_sample) <= state.t + end_tol {
                        control.next_sample += 1;
                    }
                }
                if let Some(tc) = checkpoint_time(control.next_checkpoint) {
                    if state.t >= tc - end_tol && !finishing {
                        while checkpoint_time(control.next_checkpoint)
                            .is_some_and(|c| c <= state.t + end_tol)
                        {
                            control.next_checkpoint += 1;
                        }
                        sink(&Checkpoint {
                            state: state.clone(),
                            config_hash,
                            t_start,
                            vol0,
                            control,
                            stats,
                            samples: samples.clone(),
                        })?;
                    }
                }
            }
            Ok(r) => {
                debug!(
                    "rejected step dt = {h:.3e}, energy change {:.3e}",
                    r.energy_delta
                );
                stats.rejected += 1;
                control.streak = 0;
                control.dt = r.suggested_dt;
                if control.dt < cfg.dt_min {
                    warn!(
                        "energy increase persists at dt_min; stopping at t = {}",
                        state.t
                    );
                    break Termination::Error;
                }
            }
            Err(Error::NonKahler { min, .. }) => {
                debug!("left the Kähler cone at dt = {h:.3e} (min density {min:.3e})");
                stats.rejected += 1;
                control.streak = 0;
                control.dt = 0.5 * h;
                if control.dt < cfg.dt_min {
                    warn!(
                        "left the Kähler cone at dt_min; stopping at t = {}",
                        state.t
                    );
                    break Termination::LeftCone;
                }
            }
            Err(e) => {
                warn!("step failed at t = {}: {e}", state.t);
                break Termination::Error;
            }
        }
    };

    if samples.last().is_some_and(|s| s.t < state.t) {
        match diagnostics::sample(&state, None) {
            Ok(s) => samples.push(s),
            Err(e) => warn!("final diagnostics failed at t = {}: {e}", state.t),
        }
    }

    let trace = Trace {
        source: TraceSource::Flow(cfg.backend),
        resolution: cfg.resolution,
        config_hash,
        t_start,
        t_end: state.t,
        termination,
        stats,
        samples,
    };
    Ok((trace, state))
}

#[cfg(test)]
mod tests;
