use num_complex::Complex64;

use super::*;
use crate::geometry::{calabi_energy, scalar_curvature};
use crate::spectral::Fourier2;
use crate::testutil::{bumped_toric, random_torus};

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn torus_state(n: usize, f: impl Fn(f64, f64) -> f64) -> MetricState {
    MetricState::torus(TorusPotential::from_fn(n, f).unwrap())
}

/// Continuous translation `φ ↦ φ(· + (sx, sy))` by a Fourier phase.
fn translate(s: &MetricState, sx: f64, sy: f64) -> MetricState {
    let Potential::Torus(p) = &s.potential else {
        unreachable!()
    };
    let f = p.fourier();
    let spec = f.apply(&f.forward(p.values()), |kx, ky| {
        Complex64::from_polar(1.0, kx * sx + ky * sy)
    });
    MetricState {
        potential: Potential::Torus(TorusPotential::new(p.resolution(), f.inverse(&spec)).unwrap()),
        ..s.clone()
    }
}

/// Tiny-step explicit Euler reference for the plain flow.
fn explicit_reference(s: &MetricState, dt: f64, substeps: usize) -> MetricState {
    let mut cur = s.clone();
    let h = dt / substeps as f64;
    for _ in 0..substeps {
        let r = rhs(&cur).unwrap();
        let v: Vec<f64> = cur
            .potential
            .values()
            .iter()
            .zip(&r.values)
            .map(|(p, r)| p + h * r)
            .collect();
        let potential = match &cur.potential {
            Potential::Torus(p) => {
                Potential::Torus(TorusPotential::new(p.resolution(), v).unwrap())
            }
            Potential::Toric(p) => {
                let mut v = v;
                toric::remove_affine(&p.chebyshev(), &mut v);
                Potential::Toric(ToricPotential::new(p.resolution(), v).unwrap())
            }
        };
        cur = MetricState {
            potential,
            t: cur.t + h,
            scale: cur.scale,
        };
    }
    cur
}

#[test]
fn rhs_vanishes_at_fixed_points() {
    for s in [
        MetricState::flat(32).unwrap(),
        MetricState::round(32).unwrap(),
    ] {
        assert!(rhs(&s).unwrap().max_abs() <= 1e-12);
    }
}

#[test]
fn torus_rhs_matches_closed_form() {
    let eps = 0.1;
    let s = torus_state(64, |x, _| eps * x.cos());
    let r = rhs(&s).unwrap();
    let f = Fourier2::get(64);
    for iy in 0..64 {
        for ix in 0..64 {
            let x = f.node(ix);
            let h = 1.0 - eps * x.cos();
            let d2 = (eps * x.cos() * h - eps * eps * x.sin() * x.sin()) / (h * h);
            assert!((r.values[iy * 64 + ix] - (-d2 / h)).abs() < 1e-8);
        }
    }
}

#[test]
fn toric_operator_is_exact_on_polynomials() {
    // v = x⁴: ((1−x²)² · 12x²)″ = 24 − 288x² + 360x⁴
    let ch = Chebyshev::get(16);
    let v: Vec<f64> = ch.nodes().iter().map(|x| x.powi(4)).collect();
    let lv = apply_toric_operator(&ch, &v);
    for (x, l) in ch.nodes().iter().zip(&lv) {
        let exact = 24.0 - 288.0 * x * x + 360.0 * x.powi(4);
        assert!((l - exact).abs() < 1e-10, "{l} vs {exact}");
    }
}

#[test]
fn toric_operator_linearizes_the_scalar_curvature() {
    let m = 32;
    let eps = 1e-6;
    let base = |x: f64| x.powi(4) + 0.5 * x.powi(3) - 0.3 * x.powi(5);
    let s = MetricState::toric(ToricPotential::from_fn(m, |x| eps * base(x)).unwrap());
    let sc = scalar_curvature(&s).unwrap().values;
    let Potential::Toric(p) = &s.potential else {
        unreachable!()
    };
    let lv = apply_toric_operator(&p.chebyshev(), p.values());
    for (a, l) in sc.iter().zip(&lv) {
        assert!(((a - 2.0) - l).abs() < 1e-8, "{} vs {l}", a - 2.0);
    }
}

/// Directional derivative of the Calabi energy along `σ (S − S̄)`.
fn energy_slope(s: &MetricState, sigma: f64) -> f64 {
    let e = s.eval().unwrap();
    let sbar = e.average_scalar();
    let dir: Vec<f64> = e.scalar().iter().map(|v| sigma * (v - sbar)).collect();
    let probe = |d: f64| {
        let Potential::Toric(p) = &s.potential else {
            unreachable!()
        };
        let v: Vec<f64> = p
            .values()
            .iter()
            .zip(&dir)
            .map(|(a, b)| a + d * b)
            .collect();
        calabi_energy(&MetricState::toric(
            ToricPotential::new(p.resolution(), v).unwrap(),
        ))
        .unwrap()
    };
    let h = 1e-6;
    (probe(h) - probe(-h)) / (2.0 * h)
}

#[test]
fn toric_flow_sign_decreases_energy() {
    // The experiment fixing TORIC_FLOW_SIGN: only one sign is a descent direction.
    for amp in [0.02, 0.05, 0.1] {
        let s = bumped_toric(64, amp);
        let down = energy_slope(&s, TORIC_FLOW_SIGN);
        let up = energy_slope(&s, -TORIC_FLOW_SIGN);
        assert!(down < 0.0 && up > 0.0, "amp {amp}: {down} / {up}");
    }
}

#[test]
fn fixed_points_are_stationary_under_step() {
    for s in [
        MetricState::flat(16).unwrap(),
        MetricState::round(16).unwrap(),
    ] {
        for dt in [1e-4, 0.1, 10.0] {
            let r = step(&s, dt).unwrap();
            assert!(r.accepted);
            assert_eq!(r.energy_delta, 0.0);
            assert!(max_diff(r.new_state.potential.values(), s.potential.values()) <= 1e-14);
        }
    }
}

#[test]
fn small_step_decreases_energy_like_the_explicit_reference() {
    for s in [random_torus(32, 3, 0.005), bumped_toric(64, 0.05)] {
        let dt = 1e-5;
        let r = step(&s, dt).unwrap();
        assert!(r.accepted && r.energy_delta < 0.0);
        let reference = explicit_reference(&s, dt, 200);
        let ref_delta = calabi_energy(&reference).unwrap() - calabi_energy(&s).unwrap();
        assert!(
            (r.energy_delta - ref_delta).abs() < 0.05 * ref_delta.abs(),
            "{:?}: {} vs {ref_delta}",
            s.backend(),
            r.energy_delta
        );
    }
}

#[test]
fn large_step_on_large_perturbation_is_rejected() {
    let s = random_torus(32, 1, 0.04);
    let r = Stepper::default().step(&s, 5.0);
    match r {
        Ok(r) => {
            assert!(!r.accepted, "energy change {}", r.energy_delta);
            assert!(r.energy_delta > 0.0);
            assert_eq!(r.suggested_dt, 2.5);
        }
        Err(e) => assert!(matches!(e, Error::NonKahler { .. }), "{e}"),
    }
}

#[test]
fn step_rejects_tiny_steps() {
    let cfg = FlowConfig::new(Backend::Torus, 16);
    let mut st = Stepper::new(&cfg);
    let s = MetricState::flat(16).unwrap();
    assert!(matches!(
        st.step(&s, 1e-12),
        Err(Error::StepTooSmall { .. })
    ));
    assert!(matches!(st.step(&s, -1.0), Err(Error::StepTooSmall { .. })));
}

/// One step of size `dt` against two of size `dt/2`.
fn halving_gap(s: &MetricState, dt: f64) -> f64 {
    let one = step(s, dt).unwrap().new_state;
    let half = step(&step(s, 0.5 * dt).unwrap().new_state, 0.5 * dt)
        .unwrap()
        .new_state;
    max_diff(one.potential.values(), half.potential.values())
}

#[test]
fn one_step_error_is_second_order() {
    for s in [random_torus(32, 2, 0.005), bumped_toric(64, 0.05)] {
        let a = halving_gap(&s, 2e-6);
        let b = halving_gap(&s, 1e-6);
        let ratio = a / b;
        assert!(
            (3.5..4.5).contains(&ratio),
            "{:?}: ratio {ratio}",
            s.backend()
        );
    }
}

#[test]
fn modified_rhs_adds_transport() {
    let s = random_torus(32, 5, 0.005);
    let plain = rhs(&s).unwrap();
    assert_eq!(
        modified_rhs(&s, VectorFieldSpec::zero(Backend::Torus)).unwrap(),
        plain
    );
    let m = modified_rhs(&s, VectorFieldSpec::Torus { a: 0.3, b: -0.2 }).unwrap();
    let Potential::Torus(p) = &s.potential else {
        unreachable!()
    };
    let t = transport(p, 0.3, -0.2);
    let expect: Vec<f64> = plain.values.iter().zip(&t).map(|(a, b)| a + b).collect();
    assert!(max_diff(&m.values, &expect) < 1e-15);

    let round = MetricState::round(16).unwrap();
    assert_eq!(
        modified_rhs(&round, VectorFieldSpec::Toric { c: 1.0 }).unwrap(),
        rhs(&round).unwrap()
    );
    assert!(modified_rhs(&round, VectorFieldSpec::Torus { a: 1.0, b: 0.0 }).is_err());
}

/// Gap between modified-flow stepping and plain stepping followed by a
/// translation along the field.
fn commutation_gap(s: &MetricState, a: f64, b: f64, dt: f64) -> f64 {
    let x = VectorFieldSpec::Torus { a, b };
    let modified = Stepper::default()
        .step_modified(s, dt, x)
        .unwrap()
        .new_state;
    let plain = translate(&step(s, dt).unwrap().new_state, a * dt, b * dt);
    max_diff(modified.potential.values(), plain.potential.values())
}

#[test]
fn modified_flow_commutes_with_translation() {
    let s = random_torus(32, 6, 0.005);
    let g1 = commutation_gap(&s, 0.7, -0.4, 2e-3);
    let g2 = commutation_gap(&s, 0.7, -0.4, 1e-3);
    assert!(g1 < 1e-5, "{g1}");
    assert!((3.0..5.0).contains(&(g1 / g2)), "ratio {}", g1 / g2);
}

#[test]
fn rescaled_states_flow_on_the_rescaled_clock() {
    // Flowing A·g for A²·t equals flowing g for t, rescaled.
    for s in [random_torus(32, 2, 0.005), bumped_toric(64, 0.05)] {
        let a = 2.0;
        let big = s.rescaled(a).unwrap();
        let r1 = step(&s, 1e-3).unwrap().new_state;
        let r2 = step(&big, a * a * 1e-3).unwrap().new_state;
        assert!(max_diff(r1.potential.values(), r2.potential.values()) < 1e-14);
    }
}

#[test]
fn config_validation_and_hash() {
    let cfg = FlowConfig::new(Backend::Torus, 32);
    cfg.validate().unwrap();
    let back = FlowConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.config_hash(), cfg.config_hash());

    let mut other = cfg.clone();
    other.dt_init = 2e-3;
    assert_ne!(other.config_hash(), cfg.config_hash());

    for broken in [
        FlowConfig {
            dt_min: 1.0,
            ..cfg.clone()
        },
        FlowConfig {
            t_end: 0.0,
            ..cfg.clone()
        },
        FlowConfig {
            resolution: 48,
            ..cfg.clone()
        },
        FlowConfig {
            backend: Backend::Toric1d,
            resolution: 4,
            ..cfg.clone()
        },
        FlowConfig {
            checkpoint_interval: Some(-1.0),
            ..cfg.clone()
        },
    ] {
        assert!(
            matches!(broken.validate(), Err(Error::BadConfig(_))),
            "{broken:?}"
        );
    }
    assert!(matches!(
        FlowConfig::from_toml_str("backend = \"torus\""),
        Err(Error::BadConfig(_))
    ));
}

#[test]
fn run_from_fixed_point() {
    let mut cfg = FlowConfig::new(Backend::Torus, 16);
    cfg.t_end = 0.5;
    let tr = run(&cfg, &MetricState::flat(16).unwrap()).unwrap();
    assert_eq!(tr.termination, Termination::Completed);
    assert!(tr.samples.iter().all(|s| s.ca == 0.0));
    assert!((tr.t_end - 0.5).abs() < 1e-12);
    assert_eq!(tr.samples.len(), 6);
}

#[test]
fn run_decreases_energy_and_conserves() {
    for (cfg, s) in [
        (
            FlowConfig {
                t_end: 0.5,
                sample_interval: 0.02,
                ..FlowConfig::new(Backend::Torus, 32)
            },
            random_torus(32, 1, 0.008),
        ),
        (
            FlowConfig {
                t_end: 0.2,
                sample_interval: 0.01,
                ..FlowConfig::new(Backend::Toric1d, 64)
            },
            bumped_toric(64, 0.05),
        ),
    ] {
        let tr = run(&cfg, &s).unwrap();
        assert_eq!(tr.termination, Termination::Completed);
        tr.validate().unwrap();
        for w in tr.samples.windows(2) {
            assert!(w[1].ca <= w[0].ca);
        }
        let last = tr.samples.last().unwrap();
        assert!(last.ca < 0.5 * tr.samples[0].ca);
        assert!(tr.stats.max_gauss_bonnet_error <= 1e-8, "{:?}", tr.stats);
        assert!(tr.stats.max_volume_drift <= 1e-8, "{:?}", tr.stats);
        assert!(tr.samples[1..].iter().all(|s| s.evo_residual.is_some()));
    }
}

#[test]
fn run_stops_on_energy() {
    let cfg = FlowConfig {
        t_end: 50.0,
        stop_energy: 1e-6,
        ..FlowConfig::new(Backend::Torus, 16)
    };
    let tr = run(&cfg, &random_torus(16, 2, 0.005)).unwrap();
    assert_eq!(tr.termination, Termination::StopEnergy);
    assert!(tr.samples.last().unwrap().ca < 1e-6);
}

#[test]
fn run_rejects_mismatched_state() {
    let cfg = FlowConfig::new(Backend::Torus, 32);
    assert!(matches!(
        run(&cfg, &MetricState::flat(16).unwrap()),
        Err(Error::BadConfig(_))
    ));
    assert!(matches!(
        run(&cfg, &MetricState::round(32).unwrap()),
        Err(Error::BadConfig(_))
    ));
}

#[test]
fn runs_are_deterministic_and_resume_exactly() {
    let cfg = FlowConfig {
        t_end: 0.3,
        sample_interval: 0.05,
        checkpoint_interval: Some(0.1),
        ..FlowConfig::new(Backend::Torus, 16)
    };
    let s = random_torus(16, 4, 0.008);
    let mut checkpoints = Vec::new();
    let a = run_with(&cfg, &s, &mut |c| {
        checkpoints.push(c.clone());
        Ok(())
    })
    .unwrap();
    let b = run(&cfg, &s).unwrap();
    assert_eq!(a, b);
    assert_eq!(checkpoints.len(), 2);
    for c in checkpoints {
        let resumed = resume(&cfg, c, &mut |_| Ok(())).unwrap();
        assert_eq!(resumed, a);
    }
}

#[test]
fn resume_checks_the_configuration() {
    let cfg = FlowConfig {
        t_end: 0.2,
        checkpoint_interval: Some(0.1),
        ..FlowConfig::new(Backend::Torus, 16)
    };
    let mut first = None;
    run_with(&cfg, &random_torus(16, 1, 0.005), &mut |c| {
        first.get_or_insert_with(|| c.clone());
        Ok(())
    })
    .unwrap();
    let other = FlowConfig {
        t_end: 0.3,
        ..cfg.clone()
    };
    assert!(matches!(
        resume(&other, first.unwrap(), &mut |_| Ok(())),
        Err(Error::SchemaMismatch(_))
    ));
}
