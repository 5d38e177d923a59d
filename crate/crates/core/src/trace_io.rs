//! Versioned, lossless text formats for traces, states and checkpoints;
//! JSON for reports and TOML for configurations.
//!
//! Trace file (version 1):
//!
//! ```text
//! calabi-trace 1
//! source torus
//! resolution 64
//! config_hash 00000000deadbeef
//! t_start 0.0
//! t_end 1.5
//! termination completed
//! stats 120 3 1.2e-15 4.4e-16
//! columns t o p q ca vol sbar total_s grad_rm hess_rm evo_residual futaki dhat
//! <one whitespace-separated record per sample>
//! end 42
//! ```
//!
//! Floats use the shortest representation that parses back to the same
//! bits; absent optional values are written `none`. The `end` trailer carries
//! the record count, so truncation is always detected.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::diagnostics::DiagnosticsSample;
use crate::error::{Error, Result};
use crate::flow::{Checkpoint, FlowConfig, RunControl};
use crate::geometry::{Backend, MetricState, Potential, ToricPotential, TorusPotential};
use crate::scale::ScaleReport;
use crate::trace::{RunStats, Termination, Trace, TraceSource};

pub const TRACE_MAGIC: &str = "calabi-trace";
pub const CHECKPOINT_MAGIC: &str = "calabi-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

/// Column order of trace records.
pub const COLUMNS: [&str; 13] = [
    "t",
    "o",
    "p",
    "q",
    "ca",
    "vol",
    "sbar",
    "total_s",
    "grad_rm",
    "hess_rm",
    "evo_residual",
    "futaki",
    "dhat",
];

fn float(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), float)
}

fn corrupt(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::CorruptFile(format!("line {line}: {msg}"))
}

/// Line cursor over a text file with positioned errors.
struct Lines<'a> {
    text: &'a str,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            text,
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l)
            }
            None => Err(corrupt(self.last + 1, "unexpected end of file")),
        }
    }

    /// The value after `key` on the next line.
    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            _ if line == key => Ok(""),
            _ => Err(corrupt(
                self.last,
                format!("expected `{key}`, found `{line}`"),
            )),
        }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T> {
        s.parse()
            .map_err(|_| corrupt(self.last, format!("bad {what} `{s}`")))
    }

    fn float(&self, s: &str) -> Result<f64> {
        self.parse(s, "number")
    }

    fn opt(&self, s: &str) -> Result<Option<f64>> {
        if s == "none" {
            Ok(None)
        } else {
            self.float(s).map(Some)
        }
    }

    fn floats(&self, s: &str, n: usize) -> Result<Vec<f64>> {
        let v = s
            .split_whitespace()
            .map(|x| self.float(x))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != n {
            return Err(corrupt(
                self.last,
                format!("expected {n} numbers, found {}", v.len()),
            ));
        }
        Ok(v)
    }

    fn header(&mut self, magic: &str) -> Result<()> {
        let line = self.next_line()?;
        let Some((m, v)) = line.split_once(' ') else {
            return Err(corrupt(1, format!("not a {magic} file")));
        };
        if m != magic {
            return Err(corrupt(1, format!("not a {magic} file")));
        }
        let found: u32 = self.parse(v, "version")?;
        if found != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found,
                expected: FORMAT_VERSION,
            });
        }
        // Every file ends with a newline-terminated `end <count>` line;
        // anything else is truncation, whatever the body looks like.
        let complete = self.text.ends_with('\n')
            && self
                .text
                .lines()
                .rev()
                .find(|l| !l.trim().is_empty())
                .is_some_and(|l| l.starts_with("end "));
        if !complete {
            return Err(Error::CorruptFile(
                "truncated: missing `end` trailer".into(),
            ));
        }
        Ok(())
    }

    fn end(&mut self, count: usize) -> Result<()> {
        let n: usize = {
            let v = self.field("end")?;
            self.parse(v, "record count")?
        };
        if n != count {
            return Err(corrupt(
                self.last,
                format!("trailer says {n} records, found {count}"),
            ));
        }
        if let Some((i, l)) = self.inner.find(|(_, l)| !l.trim().is_empty()) {
            return Err(corrupt(i + 1, format!("content after trailer: `{l}`")));
        }
        Ok(())
    }
}

fn sample_record(s: &DiagnosticsSample) -> String {
    [
        float(s.t),
        float(s.o),
        float(s.p),
        float(s.q),
        float(s.ca),
        float(s.vol),
        float(s.sbar),
        float(s.total_s),
        float(s.grad_rm),
        float(s.hess_rm),
        opt(s.evo_residual),
        opt(s.futaki),
        opt(s.dhat),
    ]
    .join(" ")
}

fn parse_sample(lines: &Lines, line: &str) -> Result<DiagnosticsSample> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != COLUMNS.len() {
        return Err(corrupt(
            lines.last,
            format!("expected {} fields, found {}", COLUMNS.len(), f.len()),
        ));
    }
    Ok(DiagnosticsSample {
        t: lines.float(f[0])?,
        o: lines.float(f[1])?,
        p: lines.float(f[2])?,
        q: lines.float(f[3])?,
        ca: lines.float(f[4])?,
        vol: lines.float(f[5])?,
        sbar: lines.float(f[6])?,
        total_s: lines.float(f[7])?,
        grad_rm: lines.float(f[8])?,
        hess_rm: lines.float(f[9])?,
        evo_residual: lines.opt(f[10])?,
        futaki: lines.opt(f[11])?,
        dhat: lines.opt(f[12])?,
    })
}

fn stats_line(s: &RunStats) -> String {
    format!(
        "{} {} {} {}",
        s.accepted,
        s.rejected,
        float(s.max_gauss_bonnet_error),
        float(s.max_volume_drift)
    )
}

fn parse_stats(lines: &Lines, v: &str) -> Result<RunStats> {
    let f: Vec<&str> = v.split_whitespace().collect();
    if f.len() != 4 {
        return Err(corrupt(lines.last, "stats needs four fields"));
    }
    Ok(RunStats {
        accepted: lines.parse(f[0], "count")?,
        rejected: lines.parse(f[1], "count")?,
        max_gauss_bonnet_error: lines.float(f[2])?,
        max_volume_drift: lines.float(f[3])?,
    })
}

fn parse_hash(lines: &Lines, v: &str) -> Result<u64> {
    u64::from_str_radix(v, 16).map_err(|_| corrupt(lines.last, format!("bad hash `{v}`")))
}

fn write_samples(out: &mut String, samples: &[DiagnosticsSample]) {
    for s in samples {
        out.push_str(&sample_record(s));
        out.push('\n');
    }
}

fn read_samples(lines: &mut Lines, n: usize) -> Result<Vec<DiagnosticsSample>> {
    (0..n)
        .map(|_| {
            let l = lines.next_line()?;
            parse_sample(lines, l)
        })
        .collect()
}

pub fn trace_to_string(tr: &Trace) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{TRACE_MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(out, "source {}", tr.source.name());
    let _ = writeln!(out, "resolution {}", tr.resolution);
    let _ = writeln!(out, "config_hash {:016x}", tr.config_hash);
    let _ = writeln!(out, "t_start {}", float(tr.t_start));
    let _ = writeln!(out, "t_end {}", float(tr.t_end));
    let _ = writeln!(out, "termination {}", tr.termination.name());
    let _ = writeln!(out, "stats {}", stats_line(&tr.stats));
    let _ = writeln!(out, "columns {}", COLUMNS.join(" "));
    write_samples(&mut out, &tr.samples);
    let _ = writeln!(out, "end {}", tr.samples.len());
    out
}

pub fn trace_from_str(text: &str) -> Result<Trace> {
    let mut l = Lines::new(text);
    l.header(TRACE_MAGIC)?;
    let v = l.field("source")?;
    let source = TraceSource::parse(v)
        .ok_or_else(|| Error::SchemaMismatch(format!("unknown source `{v}`")))?;
    let v = l.field("resolution")?;
    let resolution = l.parse(v, "resolution")?;
    let v = l.field("config_hash")?;
    let config_hash = parse_hash(&l, v)?;
    let v = l.field("t_start")?;
    let t_start = l.float(v)?;
    let v = l.field("t_end")?;
    let t_end = l.float(v)?;
    let v = l.field("termination")?;
    let termination = Termination::parse(v)
        .ok_or_else(|| corrupt(l.last, format!("unknown termination `{v}`")))?;
    let v = l.field("stats")?;
    let stats = parse_stats(&l, v)?;
    let v = l.field("columns")?;
    if v.split_whitespace().ne(COLUMNS.iter().copied()) {
        return Err(Error::SchemaMismatch(format!(
            "columns `{v}` differ from `{}`",
            COLUMNS.join(" ")
        )));
    }
    let mut samples = Vec::new();
    loop {
        let line = l.next_line()?;
        if let Some(rest) = line.strip_prefix("end ") {
            let n: usize = l.parse(rest, "record count")?;
            if n != samples.len() {
                return Err(corrupt(
                    l.last,
                    format!("trailer says {n} records, found {}", samples.len()),
                ));
            }
            if let Some((i, x)) = l.inner.find(|(_, x)| !x.trim().is_empty()) {
                return Err(corrupt(i + 1, format!("content after trailer: `{x}`")));
            }
            break;
        }
        samples.push(parse_sample(&l, line)?);
    }
    let tr = Trace {
        source,
        resolution,
        config_hash,
        t_start,
        t_end,
        termination,
        stats,
        samples,
    };
    tr.validate()
        .map_err(|e| Error::CorruptFile(e.to_string()))?;
    Ok(tr)
}

/// Write via a temporary sibling and rename, so readers never see a partial file.
fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.partial",
        path.extension().and_then(|e| e.to_str()).unwrap_or("tmp")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    String::from_utf8(bytes)
        .map_err(|_| Error::CorruptFile(format!("{} is not UTF-8", path.display())))
}

pub fn write_trace(tr: &Trace, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &trace_to_string(tr))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace> {
    trace_from_str(&read_text(path.as_ref())?)
}

fn state_lines(out: &mut String, s: &MetricState) {
    let _ = writeln!(out, "backend {}", s.backend().name());
    let _ = writeln!(out, "resolution {}", s.resolution());
    let _ = writeln!(out, "t {}", float(s.t));
    let _ = writeln!(out, "scale {}", float(s.scale));
    let values = s.potential.values();
    let _ = writeln!(out, "potential {}", values.len());
    for chunk in values.chunks(8) {
        let row: Vec<String> = chunk.iter().map(|v| float(*v)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

fn read_state_lines(l: &mut Lines, expected: Option<Backend>) -> Result<MetricState> {
    let v = l.field("backend")?;
    let backend =
        Backend::parse(v).ok_or_else(|| corrupt(l.last, format!("unknown backend `{v}`")))?;
    if let Some(e) = expected {
        if e != backend {
            return Err(Error::SchemaMismatch(format!(
                "state is for backend {}, expected {}",
                backend.name(),
                e.name()
            )));
        }
    }
    let v = l.field("resolution")?;
    let resolution: usize = l.parse(v, "resolution")?;
    let v = l.field("t")?;
    let t = l.float(v)?;
    let v = l.field("scale")?;
    let scale = l.float(v)?;
    let v = l.field("potential")?;
    let count: usize = l.parse(v, "value count")?;
    let mut values = Vec::with_capacity(count);
    while values.len() < count {
        let line = l.next_line()?;
        let row = l.floats(line, line.split_whitespace().count())?;
        if row.is_empty() || values.len() + row.len() > count {
            return Err(corrupt(
                l.last,
                "potential values do not match the declared count",
            ));
        }
        values.extend(row);
    }
    let bad = |e: Error| Error::CorruptFile(format!("invalid state: {e}"));
    let potential = match backend {
        Backend::Torus => Potential::Torus(TorusPotential::new(resolution, values).map_err(bad)?),
        Backend::Toric1d => Potential::Toric(ToricPotential::new(resolution, values).map_err(bad)?),
    };
    if !(scale > 0.0) {
        return Err(corrupt(l.last, "scale must be positive"));
    }
    Ok(MetricState {
        potential,
        t,
        scale,
    })
}

pub fn state_to_string(s: &MetricState) -> String {
    let mut out = format!("{CHECKPOINT_MAGIC} {FORMAT_VERSION}\nkind state\n");
    state_lines(&mut out, s);
    out.push_str("end 0\n");
    out
}

pub fn state_from_str(text: &str, expected: Option<Backend>) -> Result<MetricState> {
    let mut l = Lines::new(text);
    l.header(CHECKPOINT_MAGIC)?;
    let kind = l.field("kind")?;
    if kind != "state" {
        return Err(Error::SchemaMismatch(format!(
            "expected a state file, found `{kind}`"
        )));
    }
    let s = read_state_lines(&mut l, expected)?;
    l.end(0)?;
    Ok(s)
}

/// Save a bare metric state.
pub fn write_state(s: &MetricState, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &state_to_string(s))
}

/// Load a bare metric state, optionally insisting on a backend.
pub fn read_state(path: impl AsRef<Path>, expected: Option<Backend>) -> Result<MetricState> {
    state_from_str(&read_text(path.as_ref())?, expected)
}

pub fn checkpoint_to_string(c: &Checkpoint) -> String {
    let mut out = format!("{CHECKPOINT_MAGIC} {FORMAT_VERSION}\nkind run\n");
    state_lines(&mut out, &c.state);
    let k = &c.control;
    let _ = writeln!(out, "config_hash {:016x}", c.config_hash);
    let _ = writeln!(out, "t_start {}", float(c.t_start));
    let _ = writeln!(out, "vol0 {}", float(c.vol0));
    let _ = writeln!(
        out,
        "control {} {} {} {} {}",
        float(k.dt),
        k.streak,
        k.next_sample,
        k.next_checkpoint,
        k.steps
    );
    let _ = writeln!(out, "stats {}", stats_line(&c.stats));
    let _ = writeln!(out, "columns {}", COLUMNS.join(" "));
    let _ = writeln!(out, "samples {}", c.samples.len());
    write_samples(&mut out, &c.samples);
    let _ = writeln!(out, "end {}", c.samples.len());
    out
}

pub fn checkpoint_from_str(text: &str, expected: Option<Backend>) -> Result<Checkpoint> {
    let mut l = Lines::new(text);
    l.header(CHECKPOINT_MAGIC)?;
    let kind = l.field("kind")?;
    if kind != "run" {
        return Err(Error::SchemaMismatch(format!(
            "expected a run checkpoint, found `{kind}`"
        )));
    }
    let state = read_state_lines(&mut l, expected)?;
    let v = l.field("config_hash")?;
    let config_hash = parse_hash(&l, v)?;
    let v = l.field("t_start")?;
    let t_start = l.float(v)?;
    let v = l.field("vol0")?;
    let vol0 = l.float(v)?;
    let v = l.field("control")?;
    let f: Vec<&str> = v.split_whitespace().collect();
    if f.len() != 5 {
        return Err(corrupt(l.last, "control needs five fields"));
    }
    let control = RunControl {
        dt: l.float(f[0])?,
        streak: l.parse(f[1], "count")?,
        next_sample: l.parse(f[2], "count")?,
        next_checkpoint: l.parse(f[3], "count")?,
        steps: l.parse(f[4], "count")?,
    };
    let v = l.field("stats")?;
    let stats = parse_stats(&l, v)?;
    let v = l.field("columns")?;
    if v.split_whitespace().ne(COLUMNS.iter().copied()) {
        return Err(Error::SchemaMismatch(format!(
            "columns `{v}` differ from `{}`",
            COLUMNS.join(" ")
        )));
    }
    let v = l.field("samples")?;
    let n: usize = l.parse(v, "sample count")?;
    let samples = read_samples(&mut l, n)?;
    l.end(n)?;
    Ok(Checkpoint {
        state,
        config_hash,
        t_start,
        vol0,
        control,
        stats,
        samples,
    })
}

pub fn write_checkpoint(c: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &checkpoint_to_string(c))
}

/// Load a run checkpoint and check it belongs to `cfg`.
pub fn read_checkpoint(path: impl AsRef<Path>, cfg: &FlowConfig) -> Result<Checkpoint> {
    let c = checkpoint_from_str(&read_text(path.as_ref())?, Some(cfg.backend))?;
    if c.state.resolution() != cfg.resolution {
        return Err(Error::SchemaMismatch(format!(
            "checkpoint resolution {} differs from configured {}",
            c.state.resolution(),
            cfg.resolution
        )));
    }
    if c.config_hash != cfg.config_hash() {
        return Err(Error::SchemaMismatch(
            "checkpoint was written under a different configuration".into(),
        ));
    }
    Ok(c)
}

pub fn report_to_string(r: &ScaleReport) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("reports serialize");
    s.push('\n');
    s
}

pub fn write_report(r: &ScaleReport, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &report_to_string(r))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ScaleReport> {
    serde_json::from_str(&read_text(path.as_ref())?).map_err(|e| Error::CorruptFile(e.to_string()))
}

pub fn read_config(path: impl AsRef<Path>) -> Result<FlowConfig> {
    FlowConfig::from_toml_str(&read_text(path.as_ref())?)
}

pub fn write_config(cfg: &FlowConfig, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &cfg.to_toml_string())
}
