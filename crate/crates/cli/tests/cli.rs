use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn calabi(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calabi"))
        .args(args)
        .env("CALABI_OUT", root)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_TORUS: &str = "backend = \"torus\"\nresolution = 16\ndt_init = 1e-3\ndt_min = 1e-10\n\
dt_max = 0.05\nt_end = 0.5\nsample_interval = 0.05\ncheckpoint_interval = 0.1\n";

/// A scratch directory holding the small config and the given manifests.
fn workspace(manifests: &[(&str, &str)]) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("cfg")).unwrap();
    fs::write(dir.path().join("cfg/small.toml"), SMALL_TORUS).unwrap();
    for (name, initial) in manifests {
        fs::write(
            dir.path().join(name),
            format!("config = \"cfg/small.toml\"\n\n[initial]\n{initial}\n"),
        )
        .unwrap();
    }
    let out = dir.path().join("out");
    (dir, out)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_lists_the_subcommands() {
    let o = calabi(Path::new("."), &["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for sub in ["run", "analyze", "verify", "sweep", "CALABI_OUT"] {
        assert!(text.contains(sub), "missing {sub} in help:\n{text}");
    }
}

#[test]
fn flat_preset_runs_with_zero_energy() {
    let (dir, out) = workspace(&[("flat.toml", "preset = \"flat\"")]);
    let o = calabi(
        &out,
        &["run", dir.path().join("flat.toml").to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = json(&out.join("flat/summary.json"));
    assert_eq!(summary["final_ca"], 0.0);
    assert_eq!(summary["termination"], "completed");
    assert!(stdout(&o).contains("final Ca = 0"));
    for f in ["trace.txt", "final.state", "config.toml"] {
        assert!(out.join("flat").join(f).exists(), "{f}");
    }
}

#[test]
fn seeded_runs_write_identical_traces_and_resume_exactly() {
    let (dir, out) = workspace(&[("r.toml", "preset = \"random\"\nseed = 7\namplitude = 0.05")]);
    let m = dir.path().join("r.toml");
    let a = out.join("a");
    let b = out.join("b");
    for o in [&a, &b] {
        let r = calabi(
            &out,
            &["run", m.to_str().unwrap(), "-o", o.to_str().unwrap()],
        );
        assert!(r.status.success(), "{}", stderr(&r));
    }
    let reference = fs::read(a.join("trace.txt")).unwrap();
    assert_eq!(reference, fs::read(b.join("trace.txt")).unwrap());

    let ckpt = a.join("checkpoints/ckpt-0002.ckpt");
    assert!(ckpt.exists());
    let c = out.join("c");
    let r = calabi(
        &out,
        &[
            "run",
            m.to_str().unwrap(),
            "-o",
            c.to_str().unwrap(),
            "--resume",
            ckpt.to_str().unwrap(),
        ],
    );
    assert!(r.status.success(), "{}", stderr(&r));
    assert_eq!(reference, fs::read(c.join("trace.txt")).unwrap());
}

#[test]
fn over_amplitude_is_refused_unless_overridden() {
    let (dir, out) = workspace(&[
        (
            "over.toml",
            "preset = \"random\"\nseed = 7\namplitude = 0.5",
        ),
        (
            "forced.toml",
            "preset = \"random\"\nseed = 7\namplitude = 0.5",
        ),
    ]);
    let o = calabi(
        &out,
        &["run", dir.path().join("over.toml").to_str().unwrap()],
    );
    assert!(!o.status.success());
    assert!(
        stderr(&o).starts_with("error[bad_config]"),
        "{}",
        stderr(&o)
    );
    assert!(stderr(&o).contains("left-cone threshold"));

    let forced = dir.path().join("forced.toml");
    let text = fs::read_to_string(&forced).unwrap();
    fs::write(&forced, format!("allow_over_amplitude = true\n{text}")).unwrap();
    let o = calabi(&out, &["run", forced.to_str().unwrap()]);
    // past validation, the initial metric itself is degenerate
    assert!(
        stderr(&o).starts_with("error[non_kahler]"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn analyze_emits_reports_and_series() {
    let (dir, out) = workspace(&[
        ("flat.toml", "preset = \"flat\""),
        (
            "conv.toml",
            "preset = \"random\"\nseed = 3\namplitude = 0.04",
        ),
    ]);
    for m in ["flat.toml", "conv.toml"] {
        let o = calabi(&out, &["run", dir.path().join(m).to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }

    let flat = out.join("flat/trace.txt");
    let o = calabi(&out, &["analyze", flat.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&out.join("flat/analysis/report.json"));
    assert_eq!(report["doubling"].as_array().unwrap().len(), 0);

    let conv = out.join("conv/trace.txt");
    let o = calabi(&out, &["analyze", conv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ca = fs::read_to_string(out.join("conv/analysis/ca.tsv")).unwrap();
    let values: Vec<f64> = ca
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(values.len() > 5);
    assert!(
        values.windows(2).all(|w| w[1] <= w[0]),
        "Ca series not monotone"
    );
    for f in ["o.tsv", "p.tsv", "q.tsv", "f.tsv"] {
        let text = fs::read_to_string(out.join("conv/analysis").join(f)).unwrap();
        assert_eq!(text.lines().count(), values.len() + 1, "{f}");
    }

    // idempotent: identical report bytes on a second pass
    let first = fs::read(out.join("conv/analysis/report.json")).unwrap();
    let o = calabi(&out, &["analyze", conv.to_str().unwrap(), "--sequential"]);
    assert!(o.status.success());
    assert_eq!(
        first,
        fs::read(out.join("conv/analysis/report.json")).unwrap()
    );
}

#[test]
fn type_i_synthetic_trace_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t1.txt");
    let o = calabi(
        dir.path(),
        &[
            "synth",
            "{\"kind\":\"type_i\",\"t_sing\":1.0,\"t_start\":0.0}",
            "-o",
            trace.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report_dir = dir.path().join("rep");
    let o = calabi(
        dir.path(),
        &[
            "analyze",
            trace.to_str().unwrap(),
            "--t-sing",
            "1.0",
            "-o",
            report_dir.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&report_dir.join("report.json"));
    assert_eq!(report["rates"]["type1"], true);
    assert!((report["rates"]["sup_qroot"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let bad = calabi(
        dir.path(),
        &[
            "synth",
            "{\"kind\":\"sphere\"}",
            "-o",
            trace.to_str().unwrap(),
        ],
    );
    assert!(stderr(&bad).starts_with("error[bad_params]"));
}

#[test]
fn analyze_reports_read_errors_by_class() {
    let dir = tempfile::tempdir().unwrap();
    let missing = calabi(
        dir.path(),
        &["analyze", dir.path().join("none.txt").to_str().unwrap()],
    );
    assert!(stderr(&missing).starts_with("error[io]"));
    let truncated = dir.path().join("cut.txt");
    fs::write(&truncated, "calabi-trace 1\nsource torus\n").unwrap();
    let o = calabi(dir.path(), &["analyze", truncated.to_str().unwrap()]);
    assert!(
        stderr(&o).starts_with("error[corrupt_file]"),
        "{}",
        stderr(&o)
    );
    fs::write(&truncated, "calabi-trace 9\n").unwrap();
    let o = calabi(dir.path(), &["analyze", truncated.to_str().unwrap()]);
    assert!(
        stderr(&o).starts_with("error[version_mismatch]"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn verify_reports_per_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let o = calabi(dir.path(), &["verify", "1,9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(
        text.lines().filter(|l| l.starts_with("[PASS]")).count(),
        2,
        "{text}"
    );
    let o = calabi(dir.path(), &["verify", "nonsense"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error[bad_params]"));
}

#[test]
fn sweep_runs_manifests_and_calibrates() {
    let (dir, out) = workspace(&[
        ("s1.toml", "preset = \"random\"\nseed = 1\namplitude = 0.03"),
        ("s2.toml", "preset = \"random\"\nseed = 2\namplitude = 0.03"),
        ("s3.toml", "preset = \"flat\""),
    ]);
    let pattern = format!("{}/s*.toml", dir.path().display());
    let o = calabi(&out, &["sweep", &pattern, "--jobs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = json(&out.join("sweep.json"));
    assert_eq!(summary["runs"].as_array().unwrap().len(), 3);
    assert_eq!(summary["convergent"], 3);
    for s in ["s1", "s2", "s3"] {
        assert!(out.join(s).join("trace.txt").exists());
    }
    // a sweep with a failing manifest still reports the others and exits nonzero
    fs::write(
        dir.path().join("s4.toml"),
        "config = \"cfg/small.toml\"\n[initial]\npreset = \"round\"\n",
    )
    .unwrap();
    let o = calabi(&out, &["sweep", &pattern, "--jobs", "1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("error[bad_config]"));
    let summary = json(&out.join("sweep.json"));
    assert_eq!(summary["runs"].as_array().unwrap().len(), 4);
}

#[test]
fn sweep_refuses_shared_output_directories() {
    let (dir, out) = workspace(&[]);
    for name in ["a.toml", "b.toml"] {
        fs::write(
            dir.path().join(name),
            "config = \"cfg/small.toml\"\noutput = \"same\"\n[initial]\npreset = \"flat\"\n",
        )
        .unwrap();
    }
    let o = calabi(
        &out,
        &["sweep", &format!("{}/*.toml", dir.path().display())],
    );
    assert!(!o.status.success());
    assert!(
        stderr(&o).starts_with("error[bad_config]"),
        "{}",
        stderr(&o)
    );
}
