use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use log::info;

use calabi_core::flow::{resume_to_end, run_to_end, FlowConfig};
use calabi_core::presets::RunManifest;
use calabi_core::trace::{Termination, Trace};
use calabi_core::trace_io;

use crate::output::{self, RunSummary};

#[derive(clap::Args, Debug)]
pub struct RunArgs {
    /// Run manifest (TOML): `config`, `[initial]` preset, optional `output`.
    pub manifest: PathBuf,

    /// Output directory, overriding the manifest.
    #[arg(short, long)]
    pub output: Option<PathBuf>,

    /// Continue from a checkpoint written by an earlier run of this manifest.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

/// Output directory of a manifest: explicit, else `<root>/<manifest stem>`.
pub fn output_dir(manifest_path: &Path, manifest: &RunManifest, root: &Path) -> PathBuf {
    manifest.output.clone().unwrap_or_else(|| {
        let stem = manifest_path
            .file_stem()
            .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
        root.join(stem)
    })
}

pub struct Finished {
    pub summary: RunSummary,
    pub trace: Trace,
}

/// Execute one manifest; shared by `run` and `sweep`.
pub fn execute(
    manifest_path: &Path,
    out: Option<&Path>,
    root: &Path,
    resume: Option<&Path>,
) -> Result<Finished> {
    let manifest = RunManifest::load(manifest_path)
        .with_context(|| format!("reading manifest {}", manifest_path.display()))?;
    let cfg = trace_io::read_config(&manifest.config)
        .with_context(|| format!("reading config {}", manifest.config.display()))?;
    let dir = out.map_or_else(
        || output_dir(manifest_path, &manifest, root),
        Path::to_path_buf,
    );
    let s0 = manifest.initial_state(&cfg)?;

    fs::create_dir_all(dir.join(output::CHECKPOINT_DIR))
        .with_context(|| format!("creating {}", dir.display()))?;
    trace_io::write_config(&cfg, dir.join(output::CONFIG_FILE))?;

    let mut written = 0;
    let mut sink = |c: &calabi_core::flow::Checkpoint| {
        written += 1;
        let path = output::checkpoint_path(&dir, written);
        info!("checkpoint at t = {:.6} → {}", c.state.t, path.display());
        trace_io::write_checkpoint(c, path)
    };
    let (trace, state) = match resume {
        Some(p) => {
            let c = trace_io::read_checkpoint(p, &cfg)
                .with_context(|| format!("reading checkpoint {}", p.display()))?;
            resume_to_end(&cfg, c, &mut sink)?
        }
        None => run_to_end(&cfg, &s0, &mut sink)?,
    };
    trace_io::write_trace(&trace, dir.join(output::TRACE_FILE))?;
    trace_io::write_state(&state, dir.join(output::FINAL_STATE_FILE))?;
    let summary = RunSummary::new(&dir, &trace);
    fs::write(
        dir.join(output::SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    check_termination(&cfg, &trace)?;
    Ok(Finished { summary, trace })
}

/// A run that stopped on an internal error is a failure; stopping at the
/// energy floor or at a left-cone event is a result.
fn check_termination(cfg: &FlowConfig, tr: &Trace) -> Result<()> {
    if tr.termination == Termination::Error {
        bail!(
            "flow stopped on an unrecoverable step failure at t = {} (t_end {}); trace written",
            tr.t_end,
            cfg.t_end
        );
    }
    Ok(())
}

pub fn cmd_run(args: &RunArgs, root: &Path) -> Result<ExitCode> {
    let done = execute(
        &args.manifest,
        args.output.as_deref(),
        root,
        args.resume.as_deref(),
    )?;
    println!("{}", done.summary.line());
    Ok(ExitCode::SUCCESS)
}
