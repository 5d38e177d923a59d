//! Per-state and cross-step diagnostics.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{Backend, Eval, MetricState, Potential, ToricPotential, TorusPotential};
use crate::spectral::{Chebyshev, Fourier2};
use crate::trace::Trace;

/// Tolerance on the normwise backward error of the Poisson solve in [`futaki`].
pub const POISSON_TOL: f64 = 1e-10;

/// One timestamped record of a flow trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsSample {
    pub t: f64,
    pub o: f64,
    pub p: f64,
    pub q: f64,
    pub ca: f64,
    pub vol: f64,
    pub sbar: f64,
    /// `∫ S dV`
    pub total_s: f64,
    /// `sup |∇Rm|`
    pub grad_rm: f64,
    /// `sup |∇²Rm|`
    pub hess_rm: f64,
    pub evo_residual: Option<f64>,
    pub futaki: Option<f64>,
    pub dhat: Option<f64>,
}

impl DiagnosticsSample {
    /// A sample carrying only the curvature curves, as used by synthetic traces.
    pub fn curves(t: f64, o: f64, p: f64, q: f64) -> Self {
        DiagnosticsSample {
            t,
            o,
            p,
            q,
            ca: 0.0,
            vol: 1.0,
            sbar: 0.0,
            total_s: 0.0,
            grad_rm: 0.0,
            hess_rm: 0.0,
            evo_residual: None,
            futaki: None,
            dhat: None,
        }
    }
}

/// A fixed holomorphic vector field of the backend, by basis coefficients.
///
/// Torus: `a ∂x + b ∂y`. Toric: `c ∇x`, the gradient of the moment
/// coordinate (its `J`-rotation is the S¹ generator).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VectorFieldSpec {
    Torus { a: f64, b: f64 },
    Toric { c: f64 },
}

impl VectorFieldSpec {
    pub fn backend(&self) -> Backend {
        match self {
            VectorFieldSpec::Torus { .. } => Backend::Torus,
            VectorFieldSpec::Toric { .. } => Backend::Toric1d,
        }
    }

    pub fn zero(backend: Backend) -> Self {
        match backend {
            Backend::Torus => VectorFieldSpec::Torus { a: 0.0, b: 0.0 },
            Backend::Toric1d => VectorFieldSpec::Toric { c: 0.0 },
        }
    }

    pub fn basis(backend: Backend) -> Vec<Self> {
        match backend {
            Backend::Torus => vec![
                VectorFieldSpec::Torus { a: 1.0, b: 0.0 },
                VectorFieldSpec::Torus { a: 0.0, b: 1.0 },
            ],
            Backend::Toric1d => vec![VectorFieldSpec::Toric { c: 1.0 }],
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            VectorFieldSpec::Torus { a, b } => a == 0.0 && b == 0.0,
            VectorFieldSpec::Toric { c } => c == 0.0,
        }
    }

    fn check(&self, backend: Backend) -> Result<()> {
        let finite = match *self {
            VectorFieldSpec::Torus { a, b } => a.is_finite() && b.is_finite(),
            VectorFieldSpec::Toric { c } => c.is_finite(),
        };
        if !finite {
            return Err(Error::BadParams(
                "vector field coefficients must be finite".into(),
            ));
        }
        if self.backend() != backend {
            return Err(Error::BadParams(
                "vector field does not match the state backend".into(),
            ));
        }
        Ok(())
    }
}

/// The canonical constant-curvature state on the same grid and scale.
pub fn fixed_point_like(s: &MetricState) -> Result<MetricState> {
    let potential = match &s.potential {
        Potential::Torus(p) => Potential::Torus(TorusPotential::zero(p.resolution())?),
        Potential::Toric(p) => Potential::Toric(ToricPotential::zero(p.resolution())?),
    };
    Ok(MetricState {
        potential,
        t: s.t,
        scale: s.scale,
    })
}

/// Fill a sample for `s`; the evolution residual needs the preceding state
/// and the step that produced `s`.
pub fn sample(s: &MetricState, prev: Option<(&MetricState, f64)>) -> Result<DiagnosticsSample> {
    let e = s.eval()?;
    let norms = e.norms();
    let scalar = e.scalar();
    let evo_residual = match prev {
        Some((p, dt)) => Some(evolution_residual(p, s, dt)?),
        None => None,
    };
    let v = VectorFieldSpec::basis(s.backend())[0];
    Ok(DiagnosticsSample {
        t: s.t,
        o: norms.o,
        p: norms.p,
        q: norms.q,
        ca: e.calabi_energy(),
        vol: e.volume(),
        sbar: e.average_scalar(),
        total_s: e.integrate(&scalar),
        grad_rm: norms.grad_rm,
        hess_rm: norms.hess_rm,
        evo_residual,
        futaki: Some(futaki_with(&e, s, v)?),
        dhat: Some(dhat_proxy(s, &fixed_point_like(s)?)?),
    })
}

/// Average the potentials of two states on the same grid.
fn midpoint(a: &MetricState, b: &MetricState) -> Result<MetricState> {
    let avg = |x: &[f64], y: &[f64]| -> Vec<f64> {
        x.iter().zip(y).map(|(p, q)| 0.5 * (p + q)).collect()
    };
    let potential = match (&a.potential, &b.potential) {
        (Potential::Torus(p), Potential::Torus(q)) if p.resolution() == q.resolution() => {
            Potential::Torus(TorusPotential::new(
                p.resolution(),
                avg(p.values(), q.values()),
            )?)
        }
        (Potential::Toric(p), Potential::Toric(q)) if p.resolution() == q.resolution() => {
            Potential::Toric(ToricPotential::new(
                p.resolution(),
                avg(p.values(), q.values()),
            )?)
        }
        _ => return Err(Error::BadParams("states live on different grids".into())),
    };
    Ok(MetricState {
        potential,
        t: 0.5 * (a.t + b.t),
        scale: a.scale,
    })
}

/// Right-hand side of the scalar-curvature evolution identity in complex
/// dimension one, evaluated at a state: `−Δ²S − S·ΔS` on the torus. In
/// symplectic coordinates the moment map drifts along the flow, which adds
/// the transport term `−|∇S|²`.
pub(crate) fn curvature_evolution(e: &Eval) -> Vec<f64> {
    let s = e.scalar();
    let lap = e.laplacian_g(&s);
    let bilap = e.laplacian_g(&lap);
    let mut out: Vec<f64> = (0..s.len()).map(|i| -bilap[i] - s[i] * lap[i]).collect();
    if let Eval::Toric(t) = e {
        let a = t.scale;
        for (j, o) in out.iter_mut().enumerate() {
            *o -= t.psi[j] * t.ds[j] * t.ds[j] / (a * a * a);
        }
    }
    out
}

/// Grid max of `|(S_next − S_prev)/dt − E(S_mid)|` where `E` is the
/// curvature evolution identity evaluated at the midpoint state.
pub fn evolution_residual(prev: &MetricState, next: &MetricState, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::BadParams(format!("dt must be positive, got {dt}")));
    }
    let s0 = prev.eval()?.scalar();
    let s1 = next.eval()?.scalar();
    let mid = midpoint(prev, next)?;
    let rhs = curvature_evolution(&mid.eval()?);
    Ok(s0
        .iter()
        .zip(&s1)
        .zip(&rhs)
        .map(|((a, b), r)| ((b - a) / dt - r).abs())
        .fold(0.0, f64::max))
}

/// Empirical constants of the smoothing estimate
/// `sup|∇^l Rm|(t) ≤ C (K + t^{-1/2})^{1 + l/2}`, for `l = 1, 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingFit {
    pub c1: f64,
    pub c2: f64,
    /// `max P / O^α` over the samples, for the given `α`.
    pub interpolation_ratio: f64,
    pub alpha: f64,
}

/// Fit the smoothing constants on a trace; flow time is measured from the
/// first sample. Fails if `Q` exceeds `k` anywhere.
pub fn smoothing_probe(tr: &Trace, k: f64, alpha: f64) -> Result<SmoothingFit> {
    if !(k > 0.0) {
        return Err(Error::BadParams(
            "curvature bound K must be positive".into(),
        ));
    }
    let t0 = tr.samples.first().map(|s| s.t).unwrap_or(0.0);
    let mut fit = SmoothingFit {
        c1: 0.0,
        c2: 0.0,
        interpolation_ratio: 0.0,
        alpha,
    };
    for s in &tr.samples {
        if s.q > k {
            return Err(Error::Domain(format!(
                "sup|Rm| = {} exceeds K = {k} at t = {}",
                s.q, s.t
            )));
        }
        if s.o > 0.0 {
            fit.interpolation_ratio = fit.interpolation_ratio.max(s.p / s.o.powf(alpha));
        }
        let tau = s.t - t0;
        if tau <= 0.0 {
            continue;
        }
        let base = k + tau.powf(-0.5);
        fit.c1 = fit.c1.max(s.grad_rm / base.powf(1.5));
        fit.c2 = fit.c2.max(s.hess_rm / base.powi(2));
    }
    Ok(fit)
}

/// Futaki invariant `∫ V(f) dV`, with `Δ_g f = S − S̄` and `∫ e^f dV = vol`.
pub fn futaki(s: &MetricState, v: VectorFieldSpec) -> Result<f64> {
    let e = s.eval()?;
    futaki_with(&e, s, v)
}

fn futaki_with(e: &Eval, s: &MetricState, v: VectorFieldSpec) -> Result<f64> {
    v.check(s.backend())?;
    let f = normalized_scalar_potential(e)?;
    match (e, v) {
        (Eval::Torus(t), VectorFieldSpec::Torus { a, b }) => {
            let (fx, fy) = t.f.gradient_spec(&t.f.forward(&f));
            let (fx, fy) = (t.f.inverse(&fx), t.f.inverse(&fy));
            let vf: Vec<f64> = fx.iter().zip(&fy).map(|(x, y)| a * x + b * y).collect();
            Ok(t.integrate(&vf))
        }
        (Eval::Toric(t), VectorFieldSpec::Toric { c }) => {
            // V(f) = c g(∇x, ∇f) = c ψ f′ / scale
            let df = t.ch.derivative(&f);
            let vf: Vec<f64> = df
                .iter()
                .zip(&t.psi)
                .map(|(d, p)| c * p * d / t.scale)
                .collect();
            Ok(t.integrate(&vf))
        }
        _ => unreachable!("backend checked above"),
    }
}

/// Solve `Δ_g f = S − S̄`, then shift so that `∫ e^f dV = vol`.
pub(crate) fn normalized_scalar_potential(e: &Eval) -> Result<Vec<f64>> {
    let s = e.scalar();
    // Discrete mean rather than the topological S̄: the solve then sees a
    // right-hand side in the exact range of the discrete operator.
    let sbar = e.integrate(&s) / e.volume();
    let rhs: Vec<f64> = s.iter().map(|v| v - sbar).collect();
    let (mut f, residual) = match e {
        Eval::Torus(t) => t.poisson(&rhs),
        Eval::Toric(t) => toric_poisson(t, &rhs),
    };
    if !(residual <= POISSON_TOL) {
        return Err(Error::SolverFailure { residual });
    }
    let ef: Vec<f64> = f.iter().map(|v| v.exp()).collect();
    let shift = (e.volume() / e.integrate(&ef)).ln();
    f.iter_mut().for_each(|v| *v += shift);
    Ok(f)
}

/// Chebyshev collocation solve of `Δ_g f = rhs` with `∫ f dx = 0`.
///
/// The discrete operator annihilates constants and its range has zero
/// Clenshaw–Curtis mean, so the square system is bordered by a constant
/// column (absorbing any mean mismatch of `rhs`) and the mean row. The
/// reported residual is the size of that mismatch.
fn toric_poisson(t: &crate::geometry::toric::ToricEval, rhs: &[f64]) -> (Vec<f64>, f64) {
    let m = t.ch.degree();
    let n = m + 1;
    let mut a = DMatrix::zeros(n + 1, n + 1);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        for (i, v) in t.laplacian_g(&e).into_iter().enumerate() {
            a[(i, j)] = v;
        }
        a[(n, j)] = t.ch.integrate(&e);
        a[(j, n)] = 1.0;
        e[j] = 0.0;
    }
    let mut b = DVector::zeros(n + 1);
    b.rows_mut(0, n).copy_from_slice(rhs);
    let lu = a.clone().lu();
    let Some(mut sol) = lu.solve(&b) else {
        return (vec![0.0; n], f64::INFINITY);
    };
    // Iterative refinement; the bordered matrix is poorly conditioned.
    for _ in 0..3 {
        let r = &b - &a * &sol;
        match lu.solve(&r) {
            Some(d) => sol += d,
            None => break,
        }
    }
    let f: Vec<f64> = sol.rows(0, n).iter().copied().collect();
    let check = t.laplacian_g(&f);
    let residual = check
        .iter()
        .zip(rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let op_norm = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    (
        f,
        backward_error(residual, op_norm, &sol.as_slice()[..n], rhs),
    )
}

/// Normwise backward error `‖r‖ / (‖A‖‖x‖ + ‖b‖)` in the max norm.
pub(crate) fn backward_error(residual: f64, op_norm: f64, x: &[f64], b: &[f64]) -> f64 {
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let denom = op_norm * sup(x) + sup(b);
    if denom == 0.0 {
        residual
    } else {
        residual / denom
    }
}

/// Discrete automorphism-reduced distance between two states: the minimum
/// over translations (torus) or the reflection (toric) of an order-2
/// Sobolev norm of the gauge-fixed potential difference.
pub fn dhat_proxy(s: &MetricState, reference: &MetricState) -> Result<f64> {
    match (&s.potential, &reference.potential) {
        (Potential::Torus(a), Potential::Torus(b)) if a.resolution() == b.resolution() => {
            Ok(torus_dhat(a, b))
        }
        (Potential::Toric(a), Potential::Toric(b)) if a.resolution() == b.resolution() => {
            Ok(toric_dhat(a, b))
        }
        _ => Err(Error::BadParams(
            "d̂ needs two states on the same backend and grid".into(),
        )),
    }
}

fn sobolev_weight(kx: f64, ky: f64) -> f64 {
    let w = 1.0 + kx * kx + ky * ky;
    w * w
}

/// Gauge-fixed spectrum: the mean mode is dropped.
fn torus_spectrum(f: &Fourier2, p: &TorusPotential) -> Vec<Complex64> {
    let mut spec = f.forward(p.values());
    spec[0] = Complex64::new(0.0, 0.0);
    spec
}

/// `‖φ(· + shift) − r‖²_{H²}` for a continuous shift in grid units.
fn shifted_norm_sq(f: &Fourier2, a: &[Complex64], b: &[Complex64], sx: f64, sy: f64) -> f64 {
    let n = f.n();
    let step = 2.0 * std::f64::consts::PI / n as f64;
    let mut acc = 0.0;
    for iy in 0..n {
        for ix in 0..n {
            let (kx, ky) = (f.wavenumber(ix), f.wavenumber(iy));
            let phase = Complex64::from_polar(1.0, step * (kx * sx + ky * sy));
            let d = a[iy * n + ix] * phase - b[iy * n + ix];
            acc += sobolev_weight(kx, ky) * d.norm_sqr();
        }
    }
    let nn = (n * n) as f64;
    acc * (2.0 * std::f64::consts::PI).powi(2) / (nn * nn)
}

fn torus_dhat(s: &TorusPotential, r: &TorusPotential) -> f64 {
    let f = s.fourier();
    let n = f.n();
    let a = torus_spectrum(&f, s);
    let b = torus_spectrum(&f, r);

    // Cross-correlation over all grid shifts in one inverse transform.
    let cross: Vec<Complex64> = (0..n * n)
        .map(|i| {
            let (kx, ky) = (f.wavenumber(i % n), f.wavenumber(i / n));
            a[i] * b[i].conj() * sobolev_weight(kx, ky)
        })
        .collect();
    let corr = f.inverse_raw(&cross);
    let best = (0..n * n)
        .max_by(|&i, &j| corr[i].re.total_cmp(&corr[j].re).then(j.cmp(&i)))
        .unwrap_or(0);
    let (px, py) = ((best % n) as f64, (best / n) as f64);

    // Exact evaluation at the best grid shift.
    let shifted = s.translated(best % n, best / n);
    let sa = torus_spectrum(&f, &shifted);
    let mut best_val = shifted_norm_sq(&f, &sa, &b, 0.0, 0.0);

    // Parabolic refinement along each axis around the best grid shift.
    let at = |sx: f64, sy: f64| shifted_norm_sq(&f, &a, &b, sx, sy);
    let vertex = |m: f64, c: f64, p: f64| {
        let denom = m - 2.0 * c + p;
        if denom > 0.0 {
            (0.5 * (m - p) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    let c0 = at(px, py);
    let dx = vertex(at(px - 1.0, py), c0, at(px + 1.0, py));
    let dy = vertex(at(px, py - 1.0), c0, at(px, py + 1.0));
    if dx != 0.0 || dy != 0.0 {
        let refined = at(px + dx, py + dy);
        if refined < best_val {
            best_val = refined;
        }
    }
    best_val.max(0.0).sqrt()
}

fn toric_sobolev(ch: &Chebyshev, w: &[f64]) -> f64 {
    let c = ch.coeffs(w);
    let dc = Chebyshev::deriv_coeffs(&c);
    let d1 = ch.values(&dc);
    let d2 = ch.values(&Chebyshev::deriv_coeffs(&dc));
    let dens: Vec<f64> = (0..w.len())
        .map(|j| w[j] * w[j] + d1[j] * d1[j] + d2[j] * d2[j])
        .collect();
    ch.integrate(&dens).max(0.0).sqrt()
}

fn toric_dhat(s: &ToricPotential, r: &ToricPotential) -> f64 {
    let ch = s.chebyshev();
    let gauge = |v: &[f64]| {
        let mut v = v.to_vec();
        crate::geometry::toric::remove_affine(&ch, &mut v);
        v
    };
    let target = gauge(r.values());
    [s.clone(), s.reflected()]
        .iter()
        .map(|cand| {
            let g = gauge(cand.values());
            let diff: Vec<f64> = g.iter().zip(&target).map(|(a, b)| a - b).collect();
            toric_sobolev(&ch, &diff)
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests;
