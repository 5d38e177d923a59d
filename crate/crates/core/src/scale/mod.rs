//! Regularity-scale calculus on traces: curvature scale, Dini derivatives,
//! doubling segments, the growth bound, the backward barrier and blowup-rate
//! statistics.
//!
//! Every curve is read through its piecewise-linear interpolant, so window
//! suprema and integrals are exact on the interpolant.

mod curve;
pub mod synth;

pub use curve::Curve;
pub use synth::{synth_trace, SynthKind};

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsSample;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::trace::Trace;

/// Relative bisection tolerance of [`curvature_scale`].
pub const BISECTION_TOL: f64 = 1e-10;
/// Default bound on `Q²(T − t)` for the type-I flag.
pub const TYPE_I_THRESHOLD: f64 = 1e3;
/// Grid step and range of the exponent scan in [`blowup_rates`].
pub const LAMBDA_STEP: f64 = 0.01;
pub const LAMBDA_MAX: f64 = 20.0;

/// A sampled quantity of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    O,
    P,
    Q,
    Ca,
    Vol,
    GradRm,
    HessRm,
}

impl Field {
    pub fn of(self, s: &DiagnosticsSample) -> f64 {
        match self {
            Field::O => s.o,
            Field::P => s.p,
            Field::Q => s.q,
            Field::Ca => s.ca,
            Field::Vol => s.vol,
            Field::GradRm => s.grad_rm,
            Field::HessRm => s.hess_rm,
        }
    }
}

pub fn curve(tr: &Trace, field: Field) -> Result<Curve> {
    if tr.is_empty() {
        return Err(Error::Domain("trace has no samples".into()));
    }
    Curve::new(tr.times(), tr.samples.iter().map(|s| field.of(s)).collect())
}

fn check_inside(c: &Curve, t: f64) -> Result<()> {
    if !(t >= c.start() && t <= c.end()) {
        return Err(Error::Domain(format!(
            "t = {t} outside the trace [{}, {}]",
            c.start(),
            c.end()
        )));
    }
    Ok(())
}

/// `F(t₀) = sup{s > 0 : sup_{[t₀−s, t₀]} Q² ≤ 1/s}`, where windows leaving
/// the trace count as failing. The result is therefore at most
/// `t₀ − t_start` and is finite on every finite trace.
pub fn curvature_scale(tr: &Trace, t0: f64) -> Result<f64> {
    let q = curve(tr, Field::Q)?;
    check_inside(&q, t0)?;
    Ok(scale_on(&q, t0))
}

pub(crate) fn scale_on(q: &Curve, t0: f64) -> f64 {
    let span = t0 - q.start();
    if span <= 0.0 {
        return 0.0;
    }
    let holds = |s: f64| {
        let m = q.max_on((t0 - s).max(q.start()), t0);
        m * m * s <= 1.0
    };
    if holds(span) {
        return span;
    }
    let (mut lo, mut hi) = (0.0, span);
    while hi - lo > BISECTION_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Curvature scale at every sample time.
pub fn curvature_scale_all(tr: &Trace, exec: Exec) -> Result<Vec<f64>> {
    let q = curve(tr, Field::Q)?;
    Ok(par::map(exec, q.times(), |&t| scale_on(&q, t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dini {
    pub lower: f64,
    pub upper: f64,
}

/// Forward offsets of the Dini ladder, in units of the local knot spacing.
pub const DINI_LADDER: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

/// Lower and upper forward Dini estimates of `field` at `t`.
pub fn dini(tr: &Trace, field: Field, t: f64) -> Result<Dini> {
    let c = curve(tr, field)?;
    check_inside(&c, t)?;
    if c.times().len() < 2 {
        return Err(Error::Domain(
            "Dini estimates need at least two samples".into(),
        ));
    }
    let i = c.interval(t);
    let h = c.times()[i + 1] - c.times()[i];
    let reach = t + DINI_LADDER[DINI_LADDER.len() - 1] * h;
    if reach > c.end() {
        return Err(Error::Domain(format!(
            "t = {t} too close to the trace end for the Dini ladder"
        )));
    }
    let f0 = c.at(t);
    let quotients = DINI_LADDER.iter().map(|k| (c.at(t + k * h) - f0) / (k * h));
    let (lower, upper) = quotients.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
        (lo.min(q), hi.max(q))
    });
    Ok(Dini { lower, upper })
}

/// One doubling of `Q` relative to the base value of its positive run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublingSegment {
    pub start: f64,
    pub end: f64,
    /// `Q(end) = 2^level · Q(run start)`.
    pub level: u32,
    pub integral_p: f64,
}

/// First-crossing segmentation `s_i = inf{t : Q(t) = 2^i Q(s_0)}` within each
/// maximal run of positive `Q`.
pub fn doubling_stats(tr: &Trace) -> Result<Vec<DoublingSegment>> {
    let q = curve(tr, Field::Q)?;
    let p = curve(tr, Field::P)?;
    let (t, v) = (q.times(), q.values());
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        if v[i] <= 0.0 {
            i += 1;
            continue;
        }
        let run_start = i;
        while i + 1 < v.len() && v[i + 1] > 0.0 {
            i += 1;
        }
        let run_end = i;
        i += 1;

        let base = v[run_start];
        let mut level = 1u32;
        let mut seg_start = t[run_start];
        for k in run_start..run_end {
            loop {
                let target = base * 2f64.powi(level as i32);
                if v[k + 1] < target {
                    break;
                }
                let tc = if v[k] >= target {
                    t[k]
                } else {
                    t[k] + (target - v[k]) / (v[k + 1] - v[k]) * (t[k + 1] - t[k])
                };
                let tc = tc.max(seg_start);
                out.push(DoublingSegment {
                    start: seg_start,
                    end: tc,
                    level,
                    integral_p: p.integral(seg_start, tc),
                });
                seg_start = tc;
                level += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub anchor: f64,
    /// Rescaling factor `A = Q(anchor)`.
    pub scale: f64,
    /// Whether the anchor has the unit look-back with `Q ≤ 2` after rescaling.
    pub precondition_met: bool,
    pub eps0: f64,
    pub holds: bool,
    /// Largest admissible `ε₀`; `None` when every `ε₀` works.
    pub eps0_max: Option<f64>,
    /// Where `ε₀_max` is attained.
    pub critical_time: Option<f64>,
}

/// Check `Q(K) ≤ 2^{∫₀^K P dt / ε₀ + 1}` after normalizing `Q(0) = 1`.
///
/// The anchor is the earliest knot whose look-back `[t − Q(t)⁻², t]` lies in
/// the trace with `Q ≤ 2Q(t)` on it; without one the first positive knot is
/// used and `precondition_met` is false. The bound is tested at knots.
pub fn growth_bound_check(tr: &Trace, eps0: f64) -> Result<GrowthReport> {
    if !(eps0 > 0.0) {
        return Err(Error::BadParams(format!(
            "eps0 must be positive, got {eps0}"
        )));
    }
    let q = curve(tr, Field::Q)?;
    let p = curve(tr, Field::P)?;
    let (t, v) = (q.times(), q.values());
    let admissible = |i: usize| {
        let look = v[i].powi(-2);
        t[i] - look >= q.start() && q.max_on(t[i] - look, t[i]) <= 2.0 * v[i]
    };
    let anchor = (0..v.len())
        .filter(|&i| v[i] > 0.0)
        .find(|&i| admissible(i));
    let (a_idx, precondition_met) = match anchor {
        Some(i) => (i, true),
        None => match v.iter().position(|&x| x > 0.0) {
            Some(i) => (i, false),
            None => {
                return Err(Error::Domain(
                    "Q never positive; no normalization available".into(),
                ))
            }
        },
    };
    let a = v[a_idx];
    let t0 = t[a_idx];
    let mut eps0_max = f64::INFINITY;
    let mut critical_time = None;
    for k in a_idx + 1..v.len() {
        let excess = (v[k] / a).log2() - 1.0;
        if excess > 0.0 {
            let ratio = p.integral(t0, t[k]) / excess;
            if ratio < eps0_max {
                eps0_max = ratio;
                critical_time = Some(t[k]);
            }
        }
    }
    Ok(GrowthReport {
        anchor: t0,
        scale: a,
        precondition_met,
        eps0,
        holds: eps0 <= eps0_max,
        eps0_max: eps0_max.is_finite().then_some(eps0_max),
        critical_time,
    })
}

/// Corpus calibration: the smallest `ε₀_max` over the traces.
///
/// Traces with `Q ≡ 0` (flat runs) constrain nothing and are skipped.
pub fn calibrate_eps0(traces: &[Trace], exec: Exec) -> Result<Option<f64>> {
    let reports = par::map(exec, traces, |tr| growth_bound_check(tr, 1.0));
    let mut best: Option<f64> = None;
    for (tr, r) in traces.iter().zip(reports) {
        let r = match r {
            Err(Error::Domain(_)) if tr.samples.iter().all(|s| !(s.q > 0.0)) => continue,
            r => r?,
        };
        if let Some(e) = r.eps0_max {
            best = Some(best.map_or(e, |b: f64| b.min(e)));
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum BarrierVerdict {
    /// Smallest `barrier − Q` over the checked knots.
    Holds {
        margin: f64,
    },
    Violated {
        first: f64,
        times: Vec<f64>,
    },
    Inapplicable {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub t0: f64,
    pub q0: f64,
    pub verdict: BarrierVerdict,
    /// `F(t₀) ≥ 1/(5 Q(t₀)²)`.
    pub scale_bound_holds: bool,
}

/// Check `Q(t) < 2/√(Q(t₀)⁻² + t − t₀)` on `[t₀ − Q(t₀)⁻², t₀]`.
///
/// The window is rescaled internally to `[−1, 0]` with `A = Q(t₀)`; the
/// precondition `|S| ≤ 1` there reads `O ≤ Q(t₀)` in trace units.
pub fn barrier_check(tr: &Trace, t0: f64) -> Result<BarrierReport> {
    let q = curve(tr, Field::Q)?;
    let o = curve(tr, Field::O)?;
    check_inside(&q, t0)?;
    let q0 = q.at(t0);
    if !(q0 > 0.0) {
        return Err(Error::Domain(format!("Q({t0}) = {q0} is not positive")));
    }
    let start = t0 - q0.powi(-2);
    if start < q.start() {
        return Err(Error::Domain(format!(
            "window [{start}, {t0}] starts before the trace at {}",
            q.start()
        )));
    }
    let f = scale_on(&q, t0);
    let scale_bound_holds = f >= 1.0 / (5.0 * q0 * q0);
    let o_max = o.max_on(start, t0);
    let verdict = if o_max > q0 {
        BarrierVerdict::Inapplicable {
            reason: format!("sup O = {o_max} exceeds Q(t0) = {q0} on the window"),
        }
    } else {
        let barrier = |t: f64| 2.0 / (q0.powi(-2) + t - t0).sqrt();
        let mut checked: Vec<f64> = q
            .times()
            .iter()
            .copied()
            .filter(|&t| t > start && t < t0)
            .collect();
        checked.push(t0);
        let mut times = Vec::new();
        let mut margin = f64::INFINITY;
        for t in checked {
            let gap = barrier(t) - q.at(t);
            if gap <= 0.0 {
                times.push(t);
            }
            margin = margin.min(gap);
        }
        match times.first() {
            Some(&first) => BarrierVerdict::Violated { first, times },
            None => BarrierVerdict::Holds { margin },
        }
    };
    Ok(BarrierReport {
        t0,
        q0,
        verdict,
        scale_bound_holds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupRates {
    pub t_sing: f64,
    pub alpha: f64,
    /// `sup P·(T − t)`
    pub sup_pt: f64,
    /// `sup O^α Q^{2−α}·(T − t)`
    pub sup_oq: f64,
    /// `sup Q·√(T − t)`
    pub sup_qroot: f64,
    /// `sup Q²·(T − t)`
    pub sup_q2t: f64,
    pub type1: bool,
    /// Smallest grid `λ` with `Q·(T − t)^λ` non-increasing; `None` if none
    /// up to [`LAMBDA_MAX`].
    pub lambda: Option<f64>,
}

/// Rate statistics over the samples before `t_sing`.
pub fn blowup_rates(tr: &Trace, t_sing: f64, alpha: f64) -> Result<BlowupRates> {
    blowup_rates_with(tr, t_sing, alpha, TYPE_I_THRESHOLD)
}

pub fn blowup_rates_with(
    tr: &Trace,
    t_sing: f64,
    alpha: f64,
    threshold: f64,
) -> Result<BlowupRates> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::BadParams(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let tail: Vec<&DiagnosticsSample> = tr.samples.iter().filter(|s| s.t < t_sing).collect();
    if tail.is_empty() {
        return Err(Error::Domain(format!("no samples before T = {t_sing}")));
    }
    let sup = |f: &dyn Fn(&DiagnosticsSample, f64) -> f64| {
        tail.iter()
            .map(|s| f(s, t_sing - s.t))
            .fold(0.0f64, f64::max)
    };
    let sup_pt = sup(&|s, d| s.p * d);
    let sup_oq = sup(&|s, d| s.o.powf(alpha) * s.q.powf(2.0 - alpha) * d);
    let sup_qroot = sup(&|s, d| s.q * d.sqrt());
    let sup_q2t = sup(&|s, d| s.q * s.q * d);

    let nonincreasing = |lambda: f64| {
        tail.windows(2).all(|w| {
            let a = w[0].q * (t_sing - w[0].t).powf(lambda);
            let b = w[1].q * (t_sing - w[1].t).powf(lambda);
            b <= a + 1e-9 * a.abs().max(b.abs())
        })
    };
    let steps = (LAMBDA_MAX / LAMBDA_STEP).round() as usize;
    let lambda = (0..=steps)
        .map(|k| k as f64 * LAMBDA_STEP)
        .find(|&l| nonincreasing(l));

    Ok(BlowupRates {
        t_sing,
        alpha,
        sup_pt,
        sup_oq,
        sup_qroot,
        sup_q2t,
        type1: sup_q2t <= threshold,
        lambda,
    })
}

/// Image of a trace under `g ↦ A·g(t/A² + t₀)`: time `t ↦ A²(t − t₀)`.
pub fn rescale_trace(tr: &Trace, a: f64, t0: f64) -> Result<Trace> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::BadParams(format!(
            "rescale factor must be positive, got {a}"
        )));
    }
    let a2 = a * a;
    let time = |t: f64| a2 * (t - t0);
    let samples = tr
        .samples
        .iter()
        .map(|s| DiagnosticsSample {
            t: time(s.t),
            o: s.o / a,
            p: s.p / a2,
            q: s.q / a,
            ca: s.ca / a,
            vol: s.vol * a,
            sbar: s.sbar / a,
            total_s: s.total_s,
            grad_rm: s.grad_rm / (a * a.sqrt()),
            hess_rm: s.hess_rm / a2,
            evo_residual: s.evo_residual.map(|r| r / (a2 * a)),
            futaki: s.futaki.map(|f| f * a),
            dhat: s.dhat,
        })
        .collect();
    Ok(Trace {
        t_start: time(tr.t_start),
        t_end: time(tr.t_end),
        samples,
        ..tr.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub alpha: f64,
    pub eps0: f64,
    pub t_sing: Option<f64>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            alpha: 0.5,
            eps0: 1.0,
            t_sing: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub samples: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub times: Vec<f64>,
    pub curvature_scale: Vec<f64>,
    pub doubling: Vec<DoublingSegment>,
    pub growth: Option<GrowthReport>,
    /// Barrier at the time of maximal `Q`.
    pub barrier: Option<BarrierReport>,
    pub rates: Option<BlowupRates>,
    /// Reasons for any section left empty.
    pub notes: Vec<String>,
}

/// Run every analysis on a trace.
pub fn analyze(tr: &Trace, opts: &AnalyzeOptions, exec: Exec) -> Result<ScaleReport> {
    tr.validate()?;
    let mut notes = Vec::new();
    let curvature_scale = if tr.is_empty() {
        Vec::new()
    } else {
        curvature_scale_all(tr, exec)?
    };
    let doubling = if tr.is_empty() {
        Vec::new()
    } else {
        doubling_stats(tr)?
    };
    let growth = match growth_bound_check(tr, opts.eps0) {
        Ok(g) => Some(g),
        Err(e) => {
            notes.push(format!("growth bound: {e}"));
            None
        }
    };
    let peak = tr
        .samples
        .iter()
        .max_by(|a, b| a.q.total_cmp(&b.q))
        .map(|s| s.t);
    let barrier = match peak.map(|t| barrier_check(tr, t)) {
        Some(Ok(b)) => Some(b),
        Some(Err(e)) => {
            notes.push(format!("barrier: {e}"));
            None
        }
        None => None,
    };
    let rates = match opts.t_sing {
        Some(ts) => match blowup_rates(tr, ts, opts.alpha) {
            Ok(r) => Some(r),
            Err(e) => {
                notes.push(format!("blowup rates: {e}"));
                None
            }
        },
        None => None,
    };
    Ok(ScaleReport {
        samples: tr.len(),
        t_start: tr.t_start,
        t_end: tr.t_end,
        times: tr.times(),
        curvature_scale,
        doubling,
        growth,
        barrier,
        rates,
        notes,
    })
}
