use super::*;
use crate::diagnostics::DiagnosticsSample;
use crate::geometry::total_scalar;

fn trace(knots: &[(f64, f64)]) -> Trace {
    Trace::synthetic(
        knots
            .iter()
            .map(|&(t, q)| DiagnosticsSample::curves(t, 0.0, 0.0, q))
            .collect(),
    )
    .unwrap()
}

#[test]
fn scan_brackets_known_scales() {
    // constant Q = 2: F = 1/4 once the trace is long enough
    let tr = trace(&[(0.0, 2.0), (1.0, 2.0)]);
    let (scan, cell) = scan_scale(&tr, 1.0, 1000);
    assert!(scan <= 0.25 && 0.25 < scan + cell);
    // short trace: the whole span
    let (scan, _) = scan_scale(&tr, 0.1, 1000);
    assert!((scan - 0.1).abs() < 1e-15);
    assert_eq!(scan_scale(&tr, 0.0, 10), (0.0, 0.0));
    // a spike inside the window limits the scale
    let tr = trace(&[(0.0, 0.1), (0.5, 0.1), (0.6, 10.0), (0.7, 0.1), (3.0, 0.1)]);
    let (scan, cell) = scan_scale(&tr, 3.0, 30_000);
    let f = curvature_scale(&tr, 3.0).unwrap();
    assert!(scan <= f + 1e-12 && f < scan + cell, "{scan} {f}");
}

#[test]
fn log_fit_recovers_exponentials() {
    let samples: Vec<_> = (0..40)
        .map(|i| {
            let t = 0.1 * i as f64;
            let mut s = DiagnosticsSample::curves(t, 0.0, 0.0, 0.0);
            s.ca = 3.0 * (-2.5 * t).exp();
            s
        })
        .collect();
    let tr = Trace::synthetic(samples).unwrap();
    let fit = last_decade_fit(&tr).unwrap();
    assert!((fit.slope + 2.5).abs() < 1e-10);
    assert!((fit.r2 - 1.0).abs() < 1e-12);
    assert_eq!(fit.points, 10);
}

#[test]
fn topological_totals_match_the_geometry() {
    assert_eq!(
        total_scalar(&MetricState::flat(16).unwrap()).unwrap().abs(),
        0.0
    );
    let t = total_scalar(&MetricState::round(32).unwrap()).unwrap();
    assert!(
        (t - topological_total(Backend::Toric1d)).abs() < 1e-12,
        "{t}"
    );
}

#[test]
fn suites_and_selections() {
    assert_eq!(select("all").unwrap(), (1..=11).collect::<Vec<_>>());
    assert_eq!(select("oracles").unwrap(), vec![6, 7, 8, 9]);
    assert_eq!(select("2, 11").unwrap(), vec![2, 11]);
    assert!(select("12").is_err());
    assert!(select("everything").is_err());
    let mut all: Vec<u8> = ["identities", "oracles", "convergence", "persistence"]
        .iter()
        .flat_map(|s| select(s).unwrap())
        .collect();
    all.sort();
    assert_eq!(all, select("all").unwrap());
}

#[test]
fn unknown_criterion_is_a_failure_not_a_panic() {
    let o = Verifier::new(Exec::Sequential).check(42);
    assert!(!o.passed);
    assert!(o.detail.contains("bad_params"));
}

#[test]
fn quick_criteria_pass() {
    let v = Verifier::new(Exec::Parallel);
    for id in [1, 9] {
        let o = v.check(id);
        assert!(o.passed, "{o}");
    }
}
