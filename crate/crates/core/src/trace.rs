//! Trajectory records: the input to all scale analysis.

use crate::diagnostics::DiagnosticsSample;
use crate::error::{Error, Result};
use crate::geometry::Backend;

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    StopEnergy,
    /// Metric positivity was lost even at `dt_min`: a numerical event.
    LeftCone,
    Error,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::StopEnergy => "stop_energy",
            Termination::LeftCone => "left_cone",
            Termination::Error => "error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "completed" => Termination::Completed,
            "stop_energy" => Termination::StopEnergy,
            "left_cone" => Termination::LeftCone,
            "error" => Termination::Error,
            _ => return None,
        })
    }
}

/// Where the samples came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceSource {
    Flow(Backend),
    Synthetic,
}

impl TraceSource {
    pub fn name(self) -> &'static str {
        match self {
            TraceSource::Flow(b) => b.name(),
            TraceSource::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "synthetic" {
            return Some(TraceSource::Synthetic);
        }
        Backend::parse(s).map(TraceSource::Flow)
    }
}

/// Step bookkeeping of a run, including the worst conservation errors seen
/// over every accepted state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunStats {
    pub accepted: u64,
    pub rejected: u64,
    /// `max |∫S dV − topological value|`
    pub max_gauss_bonnet_error: f64,
    /// `max |vol − vol₀| / vol₀`
    pub max_volume_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub source: TraceSource,
    pub resolution: usize,
    pub config_hash: u64,
    pub t_start: f64,
    pub t_end: f64,
    pub termination: Termination,
    pub stats: RunStats,
    pub samples: Vec<DiagnosticsSample>,
}

impl Trace {
    /// A synthetic trace spanning its samples.
    pub fn synthetic(samples: Vec<DiagnosticsSample>) -> Result<Self> {
        let tr = Trace {
            source: TraceSource::Synthetic,
            resolution: 0,
            config_hash: 0,
            t_start: samples.first().map(|s| s.t).unwrap_or(0.0),
            t_end: samples.last().map(|s| s.t).unwrap_or(0.0),
            termination: Termination::Completed,
            stats: RunStats::default(),
            samples,
        };
        tr.validate()?;
        Ok(tr)
    }

    /// Times must be finite and strictly increasing.
    pub fn validate(&self) -> Result<()> {
        for w in self.samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Domain(format!(
                    "sample times not strictly increasing at t = {}",
                    w[1].t
                )));
            }
        }
        if self.samples.iter().any(|s| !s.t.is_finite()) {
            return Err(Error::Domain("non-finite sample time".into()));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_time(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    pub fn last_time(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }
}
