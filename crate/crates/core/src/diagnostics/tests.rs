use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::geometry::{conformal_factor, scalar_curvature, POSITIVITY_FLOOR};
use crate::testutil::{bumped_toric, random_torus};

/// States `φ ∓ δ·φ_t` around `s`; their scalar-curvature difference
/// quotient is a centred derivative of `S` along the flow.
fn straddle(s: &MetricState, delta: f64) -> (MetricState, MetricState) {
    let rate = crate::flow::rhs(s).unwrap();
    let shift = |sign: f64| {
        let v: Vec<f64> = s
            .potential
            .values()
            .iter()
            .zip(&rate.values)
            .map(|(p, r)| p + sign * delta * r)
            .collect();
        let potential = match &s.potential {
            Potential::Torus(p) => {
                Potential::Torus(TorusPotential::new(p.resolution(), v).unwrap())
            }
            Potential::Toric(p) => {
                Potential::Toric(ToricPotential::new(p.resolution(), v).unwrap())
            }
        };
        MetricState {
            potential,
            t: s.t + sign * delta,
            scale: s.scale,
        }
    };
    (shift(-1.0), shift(1.0))
}

#[test]
fn evolution_residual_vanishes_at_fixed_points() {
    for s in [
        MetricState::flat(16).unwrap(),
        MetricState::round(16).unwrap(),
    ] {
        let r = evolution_residual(&s, &s, 0.01).unwrap();
        assert!(r < 1e-12, "{r}");
    }
}

#[test]
fn evolution_identity_matches_centred_differences() {
    let delta = 1e-5;
    for s in [random_torus(32, 4, 0.005), bumped_toric(64, 0.05)] {
        let (a, b) = straddle(&s, delta);
        let size = curvature_evolution(&s.eval().unwrap())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let r = evolution_residual(&a, &b, 2.0 * delta).unwrap();
        assert!(size > 1e-3, "probe too weak: {size}");
        assert!(
            r < 1e-5 * size,
            "{:?}: residual {r} vs size {size}",
            s.backend()
        );
    }
}

#[test]
fn evolution_identity_holds_on_rescaled_states() {
    let delta = 1e-5;
    for s in [random_torus(32, 2, 0.005), bumped_toric(64, 0.05)] {
        let s = s.rescaled(3.0).unwrap();
        let (a, b) = straddle(&s, delta);
        let size = curvature_evolution(&s.eval().unwrap())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let r = evolution_residual(&a, &b, 2.0 * delta).unwrap();
        assert!(
            r < 1e-5 * size,
            "{:?}: residual {r} vs size {size}",
            s.backend()
        );
    }
}

#[test]
fn evolution_residual_rejects_bad_input() {
    let s = MetricState::flat(16).unwrap();
    assert!(matches!(
        evolution_residual(&s, &s, 0.0),
        Err(Error::BadParams(_))
    ));
    let other = MetricState::flat(32).unwrap();
    assert!(matches!(
        evolution_residual(&s, &other, 0.1),
        Err(Error::BadParams(_))
    ));
}

#[test]
fn futaki_vanishes_on_exact_states() {
    for v in VectorFieldSpec::basis(Backend::Torus) {
        assert!(futaki(&MetricState::flat(16).unwrap(), v).unwrap().abs() < 1e-14);
    }
    assert!(
        futaki(
            &MetricState::round(16).unwrap(),
            VectorFieldSpec::Toric { c: 1.0 }
        )
        .unwrap()
        .abs()
            < 1e-14
    );
}

#[test]
fn futaki_vanishes_on_generic_states() {
    for seed in 0..4 {
        let s = random_torus(32, seed, 0.008);
        for v in VectorFieldSpec::basis(Backend::Torus) {
            let f = futaki(&s, v).unwrap();
            assert!(f.abs() <= 1e-8, "seed {seed}: {f}");
        }
    }
    let f = futaki(&bumped_toric(64, 0.05), VectorFieldSpec::Toric { c: 1.0 }).unwrap();
    assert!(f.abs() <= 1e-8, "{f}");
}

#[test]
fn futaki_is_linear_in_the_field() {
    let s = random_torus(32, 7, 0.008);
    let fa = futaki(&s, VectorFieldSpec::Torus { a: 1.0, b: 0.0 }).unwrap();
    let fb = futaki(&s, VectorFieldSpec::Torus { a: 0.0, b: 1.0 }).unwrap();
    let fab = futaki(&s, VectorFieldSpec::Torus { a: 2.0, b: -3.0 }).unwrap();
    assert!((fab - (2.0 * fa - 3.0 * fb)).abs() < 1e-12);
}

#[test]
fn futaki_rejects_mismatched_fields() {
    let s = MetricState::flat(16).unwrap();
    assert!(matches!(
        futaki(&s, VectorFieldSpec::Toric { c: 1.0 }),
        Err(Error::BadParams(_))
    ));
    assert!(matches!(
        futaki(
            &s,
            VectorFieldSpec::Torus {
                a: f64::NAN,
                b: 0.0
            }
        ),
        Err(Error::BadParams(_))
    ));
}

#[test]
fn scalar_potential_solves_poisson_and_is_normalized() {
    for s in [random_torus(32, 1, 0.008), bumped_toric(64, 0.05)] {
        let e = s.eval().unwrap();
        let f = normalized_scalar_potential(&e).unwrap();
        let lap = e.laplacian_g(&f);
        let sc = e.scalar();
        let sbar = e.integrate(&sc) / e.volume();
        assert!((sbar - e.average_scalar()).abs() < 1e-8);
        let size = sc.iter().fold(1.0f64, |m, v| m.max((v - sbar).abs()));
        for (l, v) in lap.iter().zip(&sc) {
            assert!((l - (v - sbar)).abs() < 1e-8 * size, "{l} vs {}", v - sbar);
        }
        let ef: Vec<f64> = f.iter().map(|v| v.exp()).collect();
        assert!((e.integrate(&ef) - e.volume()).abs() < 1e-12 * e.volume());
    }
}

#[test]
fn dhat_basic_properties() {
    let s = random_torus(32, 2, 0.008);
    assert!(dhat_proxy(&s, &s).unwrap() < 1e-12);

    // A grid translate of the reference is at distance zero.
    let Potential::Torus(p) = &s.potential else {
        unreachable!()
    };
    let moved = MetricState::torus(p.translated(5, 11));
    assert!(dhat_proxy(&moved, &s).unwrap() <= 1e-8);

    // Invariance under translating the evolving state.
    let r = random_torus(32, 9, 0.008);
    let d0 = dhat_proxy(&s, &r).unwrap();
    let d1 = dhat_proxy(&moved, &r).unwrap();
    assert!((d0 - d1).abs() < 1e-9 * d0.max(1.0), "{d0} vs {d1}");

    // The infimum never exceeds the untranslated norm.
    let f = p.fourier();
    let Potential::Torus(q) = &r.potential else {
        unreachable!()
    };
    let raw = shifted_norm_sq(&f, &torus_spectrum(&f, p), &torus_spectrum(&f, q), 0.0, 0.0).sqrt();
    assert!(d0 <= raw + 1e-12);
}

#[test]
fn dhat_finds_sub_grid_translations() {
    let n = 32;
    let shift = 0.4 * 2.0 * std::f64::consts::PI / n as f64;
    let f = |x: f64, y: f64| 0.02 * (x.cos() + (2.0 * y).sin() + (x + y).cos());
    let a = MetricState::torus(TorusPotential::from_fn(n, f).unwrap());
    let b = MetricState::torus(TorusPotential::from_fn(n, |x, y| f(x + shift, y)).unwrap());
    let d = dhat_proxy(&a, &b).unwrap();
    let plain = dhat_proxy(&a, &MetricState::flat(n).unwrap()).unwrap();
    assert!(d < 0.05 * plain, "{d} vs {plain}");
}

#[test]
fn toric_dhat_uses_the_reflection() {
    let s = bumped_toric(64, 0.05);
    let Potential::Toric(p) = &s.potential else {
        unreachable!()
    };
    let r = MetricState::toric(p.reflected());
    assert!(dhat_proxy(&r, &s).unwrap() < 1e-12);
    assert!(dhat_proxy(&s, &MetricState::round(64).unwrap()).unwrap() > 1e-3);
    assert!(matches!(
        dhat_proxy(&s, &MetricState::flat(32).unwrap()),
        Err(Error::BadParams(_))
    ));
}

/// `‖∂̄X‖²` for `X = ∇^{1,0}S` on the torus, from complex derivatives:
/// `(∂̄X)^z_{z̄} = ∂_{z̄}((2/h) ∂_{z̄} S)`, measured against `h dx dy`.
fn torus_dbar_oracle(s: &MetricState) -> f64 {
    let Potential::Torus(p) = &s.potential else {
        unreachable!()
    };
    let f = p.fourier();
    let h = conformal_factor(p, POSITIVITY_FLOOR).unwrap().values;
    let sc = scalar_curvature(s).unwrap().values;
    let dbar = |re: &[f64], im: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let (rx, ry) = f.gradient_spec(&f.forward(re));
        let (ix, iy) = f.gradient_spec(&f.forward(im));
        let (rx, ry, ix, iy) = (
            f.inverse(&rx),
            f.inverse(&ry),
            f.inverse(&ix),
            f.inverse(&iy),
        );
        let z: Vec<Complex64> = (0..re.len())
            .map(|k| 0.5 * Complex64::new(rx[k] - iy[k], ry[k] + ix[k]))
            .collect();
        (
            z.iter().map(|c| c.re).collect(),
            z.iter().map(|c| c.im).collect(),
        )
    };
    let zero = vec![0.0; sc.len()];
    let (gr, gi) = dbar(&sc, &zero);
    let xr: Vec<f64> = gr.iter().zip(&h).map(|(g, h)| 2.0 * g / h).collect();
    let xi: Vec<f64> = gi.iter().zip(&h).map(|(g, h)| 2.0 * g / h).collect();
    let (tr, ti) = dbar(&xr, &xi);
    let dens: Vec<f64> = (0..sc.len())
        .map(|k| (tr[k] * tr[k] + ti[k] * ti[k]) * h[k])
        .collect();
    dens.iter().sum::<f64>() * f.cell_area()
}

#[test]
fn extremality_residual_matches_complex_oracle() {
    for seed in 0..3 {
        let s = random_torus(64, seed, 0.005);
        let r = s.eval().unwrap().extremality_residual();
        let o = torus_dbar_oracle(&s).sqrt();
        assert!(r > 1e-4);
        assert!((r - o).abs() < 1e-8 * o, "seed {seed}: {r} vs {o}");
    }
}

#[test]
fn extremality_residual_zero_only_on_extremal_states() {
    assert!(
        MetricState::flat(16)
            .unwrap()
            .eval()
            .unwrap()
            .extremality_residual()
            < 1e-14
    );
    assert!(
        MetricState::round(16)
            .unwrap()
            .eval()
            .unwrap()
            .extremality_residual()
            < 1e-14
    );
    assert!(
        bumped_toric(64, 0.05)
            .eval()
            .unwrap()
            .extremality_residual()
            > 1e-3
    );
}

#[test]
fn sample_fills_every_field() {
    let s = random_torus(32, 1, 0.005);
    let smp = sample(&s, None).unwrap();
    assert!(smp.evo_residual.is_none());
    assert!(smp.futaki.unwrap().abs() < 1e-8);
    assert!(smp.dhat.unwrap() > 0.0);
    assert!(smp.q > 0.0 && smp.o >= smp.q);
    assert!(smp.total_s.abs() < 1e-10);
}

#[test]
fn smoothing_probe_fits_constants() {
    let samples: Vec<DiagnosticsSample> = (0..5)
        .map(|i| {
            let t = 0.1 * i as f64;
            let mut s = DiagnosticsSample::curves(t, 2.0, 1.0, 0.5);
            s.grad_rm = 0.3;
            s.hess_rm = 0.2;
            s
        })
        .collect();
    let tr = Trace::synthetic(samples).unwrap();
    let fit = smoothing_probe(&tr, 1.0, 0.5).unwrap();
    // The ratio is largest at the last sample, where the base is smallest.
    let base = 1.0 + 0.4f64.powf(-0.5);
    assert!((fit.c1 - 0.3 / base.powf(1.5)).abs() < 1e-12);
    assert!((fit.c2 - 0.2 / base.powi(2)).abs() < 1e-12);
    assert!((fit.interpolation_ratio - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    assert!(matches!(
        smoothing_probe(&tr, 0.1, 0.5),
        Err(Error::Domain(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dhat_symmetric_and_nonnegative(seed_a in 0u64..500, seed_b in 0u64..500, amp in 0.001f64..0.02) {
        let a = random_torus(16, seed_a, amp);
        let b = random_torus(16, seed_b, amp);
        let ab = dhat_proxy(&a, &b).unwrap();
        let ba = dhat_proxy(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1e-6));
    }
}
