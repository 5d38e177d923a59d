//! Output layout and machine-readable error classes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use calabi_core::trace::Trace;

pub const TRACE_FILE: &str = "trace.txt";
pub const FINAL_STATE_FILE: &str = "final.state";
pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const REPORT_FILE: &str = "report.json";

/// Class of the first library error in the chain, or a CLI-level class.
pub fn error_class(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(c) = cause.downcast_ref::<calabi_core::Error>() {
            return c.class();
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "usage"
}

pub fn checkpoint_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(CHECKPOINT_DIR)
        .join(format!("ckpt-{index:04}.ckpt"))
}

/// What `run` prints and stores next to the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub output: PathBuf,
    pub backend: String,
    pub resolution: usize,
    pub config_hash: String,
    pub termination: String,
    pub t_end: f64,
    pub samples: usize,
    pub initial_ca: f64,
    pub final_ca: f64,
    pub accepted: u64,
    pub rejected: u64,
    pub max_gauss_bonnet_error: f64,
    pub max_volume_drift: f64,
}

impl RunSummary {
    pub fn new(output: &Path, tr: &Trace) -> Self {
        RunSummary {
            output: output.to_path_buf(),
            backend: tr.source.name().to_string(),
            resolution: tr.resolution,
            config_hash: format!("{:016x}", tr.config_hash),
            termination: tr.termination.name().to_string(),
            t_end: tr.t_end,
            samples: tr.len(),
            initial_ca: tr.samples.first().map_or(f64::NAN, |s| s.ca),
            final_ca: tr.samples.last().map_or(f64::NAN, |s| s.ca),
            accepted: tr.stats.accepted,
            rejected: tr.stats.rejected,
            max_gauss_bonnet_error: tr.stats.max_gauss_bonnet_error,
            max_volume_drift: tr.stats.max_volume_drift,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{}: {} at t = {:.6}, final Ca = {:.6e} (initial {:.6e}), {} samples, {} accepted / {} rejected steps",
            self.output.display(),
            self.termination,
            self.t_end,
            self.final_ca,
            self.initial_ca,
            self.samples,
            self.accepted,
            self.rejected
        )
    }
}
