use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};

use calabi_core::par::Exec;
use calabi_core::scale::synth::{synth_trace, SynthKind};
use calabi_core::scale::{analyze, AnalyzeOptions, ScaleReport};
use calabi_core::trace::Trace;
use calabi_core::trace_io;

use crate::output;

#[derive(clap::Args, Debug)]
pub struct AnalyzeArgs {
    /// Trace file written by `run` or `synth`.
    pub trace: PathBuf,

    /// Output directory [default: `<trace dir>/analysis`].
    #[arg(short, long)]
    pub output: Option<PathBuf>,

    /// Interpolation exponent α for the blowup statistics.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,

    /// ε₀ used by the growth-bound check.
    #[arg(long, default_value_t = 1.0)]
    pub eps0: f64,

    /// Candidate singular time for the blowup statistics.
    #[arg(long)]
    pub t_sing: Option<f64>,
}

#[derive(clap::Args, Debug)]
pub struct SynthArgs {
    /// Kind as JSON, e.g. '{"kind":"type_i","t_sing":1.0,"t_start":0.0}'.
    pub spec: String,

    /// Approximate number of samples.
    #[arg(short = 'n', long, default_value_t = 400)]
    pub samples: usize,

    /// Trace file to write.
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Tab-separated `t value` columns, one file per quantity.
fn series(tr: &Trace, report: &ScaleReport) -> Vec<(&'static str, String)> {
    let column = |name: &str, values: &mut dyn Iterator<Item = (f64, f64)>| {
        let mut s = format!("# t\t{name}\n");
        for (t, v) in values {
            let _ = writeln!(s, "{t:?}\t{v:?}");
        }
        s
    };
    let pick = |f: fn(&calabi_core::diagnostics::DiagnosticsSample) -> f64| {
        tr.samples.iter().map(move |s| (s.t, f(s)))
    };
    vec![
        ("ca.tsv", column("ca", &mut pick(|s| s.ca))),
        ("o.tsv", column("o", &mut pick(|s| s.o))),
        ("p.tsv", column("p", &mut pick(|s| s.p))),
        ("q.tsv", column("q", &mut pick(|s| s.q))),
        (
            "f.tsv",
            column(
                "f",
                &mut report
                    .times
                    .iter()
                    .copied()
                    .zip(report.curvature_scale.iter().copied()),
            ),
        ),
    ]
}

pub fn default_output(trace: &Path) -> PathBuf {
    trace.parent().unwrap_or(Path::new(".")).join("analysis")
}

pub fn cmd_analyze(args: &AnalyzeArgs, exec: Exec) -> Result<ExitCode> {
    let tr = trace_io::read_trace(&args.trace)
        .with_context(|| format!("reading {}", args.trace.display()))?;
    let opts = AnalyzeOptions {
        alpha: args.alpha,
        eps0: args.eps0,
        t_sing: args.t_sing,
    };
    let report = analyze(&tr, &opts, exec)?;
    let dir = args
        .output
        .clone()
        .unwrap_or_else(|| default_output(&args.trace));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    trace_io::write_report(&report, dir.join(output::REPORT_FILE))?;
    for (name, text) in series(&tr, &report) {
        fs::write(dir.join(name), text)?;
    }
    println!(
        "{}: {} samples, {} doubling segments, growth bound {}, type-I {}",
        dir.display(),
        report.samples,
        report.doubling.len(),
        report
            .growth
            .as_ref()
            .map_or("n/a".into(), |g| g.holds.to_string()),
        report
            .rates
            .as_ref()
            .map_or("n/a".into(), |r| r.type1.to_string()),
    );
    for n in &report.notes {
        println!("  note: {n}");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<ExitCode> {
    let kind: SynthKind = serde_json::from_str(&args.spec)
        .map_err(|e| calabi_core::Error::BadParams(format!("synthetic kind: {e}")))?;
    let tr = synth_trace(&kind, args.samples)?;
    if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    trace_io::write_trace(&tr, &args.output)?;
    println!(
        "{}: {} samples on [{}, {}]",
        args.output.display(),
        tr.len(),
        tr.t_start,
        tr.t_end
    );
    Ok(ExitCode::SUCCESS)
}
