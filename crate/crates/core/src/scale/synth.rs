//! Synthetic traces with analytically known statistics.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsSample;
use crate::error::{Error, Result};
use crate::trace::Trace;

/// Closest approach `T − t` of the geometric grids, relative to the span.
pub const SINGULAR_APPROACH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    /// `Q ≡ c` on a uniform grid.
    Constant { c: f64, t_start: f64, t_end: f64 },
    /// `Q = (T − t)^{−1/2}` on a grid accumulating at `T`.
    TypeI { t_sing: f64, t_start: f64 },
    /// `Q = (T − t)^{−p}`.
    PowerLaw {
        t_sing: f64,
        t_start: f64,
        exponent: f64,
    },
    /// Piecewise-linear `Q` through `(t, Q)` knots.
    Sawtooth { knots: Vec<(f64, f64)> },
    /// `Q = 1 + a(1 + sin(1/(t − t*)))` for `t > t*`, uniform grid on
    /// `[t*, t* + span]`.
    Oscillatory {
        center: f64,
        amplitude: f64,
        span: f64,
    },
    /// `Q = 1` on `[−1, 0]`, then `Q = 2^{p₀t/e + 1}` on `(0, 1]` with
    /// `P ≡ p₀ = N e`: the growth bound is tight at every knot.
    Saturating { doublings: u32, eps0: f64 },
    /// `Q = f·2/√(q₀⁻² + t)` on `[−2q₀⁻², 0)` (argument clamped below at
    /// `q₀⁻²/100`), and `Q(0) = q₀`.
    Barrier { q0: f64, factor: f64 },
}

fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// `T − (T − t_start)·r^k`, ending at `T − SINGULAR_APPROACH·(T − t_start)`.
fn geometric(t_sing: f64, t_start: f64, n: usize) -> Vec<f64> {
    let span = t_sing - t_start;
    (0..n)
        .map(|k| t_sing - span * SINGULAR_APPROACH.powf(k as f64 / (n - 1) as f64))
        .collect()
}

/// Build the trace for `kind` with about `n` samples (`n ≥ 2`; sawtooth uses
/// its own knots).
pub fn synth_trace(kind: &SynthKind, n: usize) -> Result<Trace> {
    let bad = |m: &str| Err(Error::BadParams(m.to_string()));
    if n < 2 {
        return bad("a synthetic trace needs at least two samples");
    }
    let curves = |t: Vec<f64>, q: &dyn Fn(f64) -> f64| -> Vec<DiagnosticsSample> {
        t.into_iter()
            .map(|t| DiagnosticsSample::curves(t, 0.0, 0.0, q(t)))
            .collect()
    };
    let samples = match *kind {
        SynthKind::Constant { c, t_start, t_end } => {
            if !(c >= 0.0 && t_end > t_start) {
                return bad("constant trace needs c ≥ 0 and t_end > t_start");
            }
            curves(uniform(t_start, t_end, n), &|_| c)
        }
        SynthKind::TypeI { t_sing, t_start } => {
            if !(t_sing > t_start) {
                return bad("type-I trace needs t_sing > t_start");
            }
            curves(geometric(t_sing, t_start, n), &|t| (t_sing - t).powf(-0.5))
        }
        SynthKind::PowerLaw {
            t_sing,
            t_start,
            exponent,
        } => {
            if !(t_sing > t_start && exponent > 0.0) {
                return bad("power-law trace needs t_sing > t_start and a positive exponent");
            }
            curves(geometric(t_sing, t_start, n), &|t| {
                (t_sing - t).powf(-exponent)
            })
        }
        SynthKind::Sawtooth { ref knots } => {
            if knots.len() < 2 || knots.iter().any(|k| !(k.1 >= 0.0)) {
                return bad("sawtooth needs at least two knots with non-negative values");
            }
            knots
                .iter()
                .map(|&(t, q)| DiagnosticsSample::curves(t, 0.0, 0.0, q))
                .collect()
        }
        SynthKind::Oscillatory {
            center,
            amplitude,
            span,
        } => {
            if !(amplitude > 0.0 && span > 0.0) {
                return bad("oscillatory trace needs positive amplitude and span");
            }
            curves(uniform(center, center + span, n), &|t| {
                if t > center {
                    1.0 + amplitude * (1.0 + (1.0 / (t - center)).sin())
                } else {
                    1.0 + amplitude
                }
            })
        }
        SynthKind::Saturating { doublings, eps0 } => {
            if !(eps0 > 0.0) || doublings == 0 {
                return bad("saturating trace needs eps0 > 0 and at least one doubling");
            }
            let p0 = doublings as f64 * eps0;
            let mut t = uniform(-1.0, 0.0, n);
            t.extend(uniform(0.0, 1.0, n + 1).into_iter().skip(1));
            t.into_iter()
                .map(|t| {
                    let q = if t <= 0.0 {
                        1.0
                    } else {
                        (p0 * t / eps0 + 1.0).exp2()
                    };
                    DiagnosticsSample::curves(t, 0.0, p0, q)
                })
                .collect()
        }
        SynthKind::Barrier { q0, factor } => {
            if !(q0 > 0.0 && factor > 0.0) {
                return bad("barrier trace needs positive q0 and factor");
            }
            let w = q0.powi(-2);
            curves(uniform(-2.0 * w, 0.0, n), &|t| {
                if t == 0.0 {
                    q0
                } else {
                    factor * 2.0 / (w + t).max(0.01 * w).sqrt()
                }
            })
        }
    };
    Trace::synthetic(samples)
}

impl SynthKind {
    /// Number of variants; `random_of_kind` takes an index below this.
    pub const KINDS: usize = 7;

    /// A seeded random kind, used for oracle sweeps.
    pub fn random(seed: u64) -> SynthKind {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = rng.gen_range(0..Self::KINDS);
        Self::draw(kind, &mut rng)
    }

    /// Random parameters for the variant with index `kind % KINDS`, in
    /// declaration order.
    pub fn random_of_kind(kind: usize, seed: u64) -> SynthKind {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::draw(kind % Self::KINDS, &mut rng)
    }

    fn draw(kind: usize, rng: &mut ChaCha8Rng) -> SynthKind {
        match kind {
            0 => SynthKind::Constant {
                c: rng.gen_range(0.1..5.0),
                t_start: rng.gen_range(-2.0..0.0),
                t_end: rng.gen_range(0.5..3.0),
            },
            1 => SynthKind::TypeI {
                t_sing: rng.gen_range(0.5..2.0),
                t_start: rng.gen_range(-1.0..0.0),
            },
            2 => SynthKind::PowerLaw {
                t_sing: rng.gen_range(0.5..2.0),
                t_start: rng.gen_range(-1.0..0.0),
                exponent: rng.gen_range(0.2..1.5),
            },
            3 => {
                let count = rng.gen_range(3..30);
                let mut t = rng.gen_range(-1.0..0.0);
                let knots = (0..count)
                    .map(|_| {
                        t += rng.gen_range(0.01..0.5);
                        (t, rng.gen_range(0.0..6.0))
                    })
                    .collect();
                SynthKind::Sawtooth { knots }
            }
            4 => SynthKind::Oscillatory {
                center: rng.gen_range(-1.0..1.0),
                amplitude: rng.gen_range(0.1..3.0),
                span: rng.gen_range(0.5..2.0),
            },
            5 => SynthKind::Saturating {
                doublings: rng.gen_range(1..6),
                eps0: rng.gen_range(0.1..2.0),
            },
            _ => SynthKind::Barrier {
                q0: rng.gen_range(0.5..5.0),
                factor: rng.gen_range(0.3..1.5),
            },
        }
    }
}
