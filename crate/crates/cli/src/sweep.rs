use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use calabi_core::par::Exec;
use calabi_core::presets::RunManifest;
use calabi_core::scale::calibrate_eps0;
use calabi_core::trace::Termination;

use crate::output::{self, RunSummary};
use crate::run::{execute, output_dir};

#[derive(clap::Args, Debug)]
pub struct SweepArgs {
    /// Glob of run manifests, e.g. 'manifests/*.toml'.
    pub pattern: String,

    /// Concurrent runs (0 = one per core).
    #[arg(short, long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Serialize)]
struct SweepEntry {
    manifest: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    runs: Vec<SweepEntry>,
    convergent: usize,
    /// Largest ε₀ for which the growth bound holds on every convergent run;
    /// absent when no run constrains it.
    eps0_max: Option<f64>,
}

fn run_all(manifests: &[PathBuf], root: &Path, jobs: usize) -> Vec<Result<crate::run::Finished>> {
    let one = |m: &PathBuf| execute(m, None, root, None);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if jobs != 1 {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build();
            if let Ok(pool) = pool {
                return pool.install(|| manifests.par_iter().map(one).collect());
            }
        }
    }
    let _ = jobs;
    manifests.iter().map(one).collect()
}

pub fn cmd_sweep(args: &SweepArgs, root: &Path, exec: Exec) -> Result<ExitCode> {
    let mut manifests: Vec<PathBuf> = glob::glob(&args.pattern)
        .with_context(|| format!("bad glob `{}`", args.pattern))?
        .collect::<std::result::Result<_, _>>()?;
    manifests.sort();
    if manifests.is_empty() {
        bail!(calabi_core::Error::BadParams(format!(
            "no manifests match `{}`",
            args.pattern
        )));
    }
    // workers share only the filesystem: one output directory each
    let mut seen: HashMap<PathBuf, &PathBuf> = HashMap::new();
    for m in &manifests {
        let manifest =
            RunManifest::load(m).with_context(|| format!("reading manifest {}", m.display()))?;
        let dir = output_dir(m, &manifest, root);
        if let Some(other) = seen.insert(dir.clone(), m) {
            bail!(calabi_core::Error::BadConfig(format!(
                "{} and {} both write to {}",
                other.display(),
                m.display(),
                dir.display()
            )));
        }
    }

    let results = run_all(&manifests, root, args.jobs);
    let mut entries = Vec::new();
    let mut convergent = Vec::new();
    let mut failures = 0;
    for (m, r) in manifests.iter().zip(results) {
        match r {
            Ok(done) => {
                println!("{}", done.summary.line());
                if matches!(
                    done.trace.termination,
                    Termination::Completed | Termination::StopEnergy
                ) {
                    convergent.push(done.trace);
                }
                entries.push(SweepEntry {
                    manifest: m.clone(),
                    summary: Some(done.summary),
                    error: None,
                });
            }
            Err(e) => {
                failures += 1;
                let msg = format!("error[{}]: {e:#}", output::error_class(&e));
                eprintln!("{}: {msg}", m.display());
                entries.push(SweepEntry {
                    manifest: m.clone(),
                    summary: None,
                    error: Some(msg),
                });
            }
        }
    }
    let eps0_max = if convergent.is_empty() {
        None
    } else {
        calibrate_eps0(&convergent, exec)?
    };
    let summary = SweepSummary {
        runs: entries,
        convergent: convergent.len(),
        eps0_max,
    };
    fs::create_dir_all(root)?;
    let path = root.join("sweep.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
    println!(
        "{} runs, {} convergent, {} failed; corpus ε₀_max = {} ({})",
        manifests.len(),
        summary.convergent,
        failures,
        eps0_max.map_or("unconstrained".into(), |e| format!("{e:.6}")),
        path.display()
    );
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
