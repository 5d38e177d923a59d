//! Named initial conditions and the run manifest that selects one.
//!
//! Random shapes are drawn once per seed as continuous functions and then
//! sampled, so the same preset at two resolutions is the same metric. The
//! amplitude of a preset is `max |potential|` on a fixed reference grid
//! (64² points on the torus, the 65 Chebyshev nodes of degree 64 on the
//! toric interval), independent of the run resolution.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::geometry::{Backend, MetricState, ToricPotential, TorusPotential};
use crate::spectral::{Chebyshev, Fourier2};

/// Largest `max(|kx|, |ky|)` of the band-limited random preset.
pub const RANDOM_MAX_MODE: i32 = 3;
/// Mode shell `max(|kx|, |ky|) ∈ ROUGH_BAND` of the rough preset.
pub const ROUGH_BAND: (i32, i32) = (5, 8);
/// Chebyshev degrees used by the toric perturbation.
pub const TORIC_DEGREES: (usize, usize) = (2, 6);

const TORUS_REFERENCE: usize = 64;
const TORIC_REFERENCE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    /// `φ = 0` on the torus.
    Flat,
    /// The Guillemin metric (`v = 0`) on the sphere.
    Round,
    /// Torus, all modes with `max(|kx|, |ky|) ≤ 3`.
    Random { seed: u64, amplitude: f64 },
    /// Torus, modes in the shell `ROUGH_BAND` only.
    Rough { seed: u64, amplitude: f64 },
    /// Sphere, Chebyshev degrees 2..=6 added to the Guillemin potential.
    Perturbed { seed: u64, amplitude: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Mode {
    kx: f64,
    ky: f64,
    a: f64,
    b: f64,
}

/// A unit-amplitude random shape; `value` and `laplacian` are exact.
#[derive(Debug, Clone)]
struct TorusShape {
    modes: Vec<Mode>,
    norm: f64,
}

impl TorusShape {
    fn new(seed: u64, band: (i32, i32)) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut modes = Vec::new();
        // one representative of each ±k pair
        for ky in 0..=band.1 {
            for kx in -band.1..=band.1 {
                let shell = kx.abs().max(ky);
                if (ky == 0 && kx <= 0) || shell < band.0 {
                    continue;
                }
                modes.push(Mode {
                    kx: kx as f64,
                    ky: ky as f64,
                    a: rng.gen_range(-1.0..1.0),
                    b: rng.gen_range(-1.0..1.0),
                });
            }
        }
        let mut shape = TorusShape { modes, norm: 1.0 };
        shape.norm = reference_grid()
            .map(|(x, y)| shape.raw(x, y).abs())
            .fold(0.0, f64::max);
        shape
    }

    fn raw(&self, x: f64, y: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let th = m.kx * x + m.ky * y;
                m.a * th.cos() + m.b * th.sin()
            })
            .sum()
    }

    fn value(&self, x: f64, y: f64) -> f64 {
        self.raw(x, y) / self.norm
    }

    fn laplacian(&self, x: f64, y: f64) -> f64 {
        let s: f64 = self
            .modes
            .iter()
            .map(|m| {
                let th = m.kx * x + m.ky * y;
                -(m.kx * m.kx + m.ky * m.ky) * (m.a * th.cos() + m.b * th.sin())
            })
            .sum();
        s / self.norm
    }

    /// Amplitude at which `min (1 + Δφ)` on the reference grid reaches 0.
    fn threshold(&self) -> f64 {
        let worst = reference_grid()
            .map(|(x, y)| -self.laplacian(x, y))
            .fold(0.0, f64::max);
        1.0 / worst
    }
}

fn reference_grid() -> impl Iterator<Item = (f64, f64)> {
    let h = 2.0 * PI / TORUS_REFERENCE as f64;
    (0..TORUS_REFERENCE * TORUS_REFERENCE).map(move |i| {
        (
            (i % TORUS_REFERENCE) as f64 * h,
            (i / TORUS_REFERENCE) as f64 * h,
        )
    })
}

#[derive(Debug, Clone)]
struct ToricShape {
    coeffs: Vec<f64>,
    norm: f64,
}

impl ToricShape {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = vec![0.0; TORIC_DEGREES.1 + 1];
        for c in &mut coeffs[TORIC_DEGREES.0..] {
            *c = rng.gen_range(-1.0..1.0);
        }
        let ch = Chebyshev::get(TORIC_REFERENCE);
        let mut shape = ToricShape { coeffs, norm: 1.0 };
        shape.norm = ch
            .nodes()
            .iter()
            .map(|&x| shape.raw(x).abs())
            .fold(0.0, f64::max);
        shape
    }

    fn raw(&self, x: f64) -> f64 {
        // Clenshaw
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = c + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs[0] + x * b1 - b2
    }

    fn value(&self, x: f64) -> f64 {
        self.raw(x) / self.norm
    }

    /// Amplitude at which `min (1 + (1−x²) v″)` on the reference nodes reaches 0.
    fn threshold(&self) -> f64 {
        let ch = Chebyshev::get(TORIC_REFERENCE);
        let v: Vec<f64> = ch.nodes().iter().map(|&x| self.value(x)).collect();
        let d2 = ch.second_derivative(&v);
        let worst = ch
            .nodes()
            .iter()
            .zip(&d2)
            .map(|(x, d)| -(1.0 - x * x) * d)
            .fold(0.0, f64::max);
        1.0 / worst
    }
}

impl Preset {
    pub fn backend(&self) -> Backend {
        match self {
            Preset::Flat | Preset::Random { .. } | Preset::Rough { .. } => Backend::Torus,
            Preset::Round | Preset::Perturbed { .. } => Backend::Toric1d,
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            Preset::Flat | Preset::Round => 0.0,
            Preset::Random { amplitude, .. }
            | Preset::Rough { amplitude, .. }
            | Preset::Perturbed { amplitude, .. } => amplitude,
        }
    }

    /// Amplitude at which the initial metric degenerates; `∞` for the
    /// unperturbed presets.
    pub fn left_cone_threshold(&self) -> f64 {
        match *self {
            Preset::Flat | Preset::Round => f64::INFINITY,
            Preset::Random { seed, .. } => TorusShape::new(seed, (1, RANDOM_MAX_MODE)).threshold(),
            Preset::Rough { seed, .. } => TorusShape::new(seed, ROUGH_BAND).threshold(),
            Preset::Perturbed { seed, .. } => ToricShape::new(seed).threshold(),
        }
    }

    /// Parameter checks; amplitudes at or above the left-cone threshold are
    /// refused unless `allow_over_amplitude`.
    pub fn validate(&self, allow_over_amplitude: bool) -> Result<()> {
        let a = self.amplitude();
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::BadConfig(format!(
                "amplitude {a} must be finite and non-negative"
            )));
        }
        let limit = self.left_cone_threshold();
        if a >= limit && !allow_over_amplitude {
            return Err(Error::BadConfig(format!(
                "amplitude {a} is at or above the left-cone threshold {limit:.6} of this preset \
                 (set allow_over_amplitude to run it anyway)"
            )));
        }
        Ok(())
    }

    /// Sample the preset at `resolution`.
    pub fn state(&self, resolution: usize) -> Result<MetricState> {
        match *self {
            Preset::Flat => MetricState::flat(resolution),
            Preset::Round => MetricState::round(resolution),
            Preset::Random { seed, amplitude } => torus_state(
                &TorusShape::new(seed, (1, RANDOM_MAX_MODE)),
                amplitude,
                resolution,
            ),
            Preset::Rough { seed, amplitude } => {
                if resolution < 4 * ROUGH_BAND.1 as usize {
                    return Err(Error::BadParams(format!(
                        "rough preset needs N >= {} to resolve its modes",
                        4 * ROUGH_BAND.1
                    )));
                }
                torus_state(&TorusShape::new(seed, ROUGH_BAND), amplitude, resolution)
            }
            Preset::Perturbed { seed, amplitude } => {
                let shape = ToricShape::new(seed);
                if resolution < TORIC_DEGREES.1 {
                    return Err(Error::BadParams(format!(
                        "perturbed preset needs M >= {}",
                        TORIC_DEGREES.1
                    )));
                }
                let p = ToricPotential::from_fn(resolution, |x| amplitude * shape.value(x))?;
                Ok(MetricState::toric(p))
            }
        }
    }
}

fn torus_state(shape: &TorusShape, amplitude: f64, n: usize) -> Result<MetricState> {
    let p = TorusPotential::from_fn(n, |x, y| amplitude * shape.value(x, y))?;
    // the modes are mean-free, so gauge fixing only removes roundoff
    debug_assert!(Fourier2::mean(p.values()).abs() < 1e-12);
    Ok(MetricState::torus(p))
}

fn default_false() -> bool {
    false
}

/// One run: a flow configuration file plus an initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Flow configuration (TOML); relative paths are taken from the manifest's directory.
    pub config: PathBuf,
    pub initial: Preset,
    /// Output directory; defaults to `<output root>/<manifest stem>`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_false")]
    pub allow_over_amplitude: bool,
}

impl RunManifest {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let m: RunManifest = toml::from_str(text).map_err(|e| Error::BadConfig(e.to_string()))?;
        m.initial.validate(m.allow_over_amplitude)?;
        Ok(m)
    }

    /// Read a manifest and resolve its relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if m.config.is_relative() {
            m.config = base.join(&m.config);
        }
        if let Some(out) = m.output.as_mut().filter(|o| o.is_relative()) {
            *out = base.join(&*out);
        }
        Ok(m)
    }

    /// The initial state for `cfg`, after checking the preset fits its backend.
    pub fn initial_state(&self, cfg: &FlowConfig) -> Result<MetricState> {
        if self.initial.backend() != cfg.backend {
            return Err(Error::BadConfig(format!(
                "preset is for backend {}, configuration is for {}",
                self.initial.backend().name(),
                cfg.backend.name()
            )));
        }
        self.initial.validate(self.allow_over_amplitude)?;
        self.initial.state(cfg.resolution)
    }
}
