use crate::geometry::{MetricState, ToricPotential, TorusPotential};

/// Deterministic multi-mode torus state with amplitude scale `amp`.
pub fn random_torus(n: usize, seed: u64, amp: f64) -> MetricState {
    let coeffs: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|i| {
            let s = (seed as f64 + 1.0) * (i as f64 + 1.0);
            (
                (s * 0.77).sin(),
                (s * 1.31).cos(),
                1.0 + (i % 3) as f64,
                (i / 3) as f64,
            )
        })
        .collect();
    let p = TorusPotential::from_fn(n, |x, y| {
        coeffs
            .iter()
            .map(|(a, b, kx, ky)| amp * (a * (kx * x + ky * y).cos() + b * (ky * x - kx * y).sin()))
            .sum()
    })
    .unwrap();
    MetricState::torus(p)
}

/// A non-symmetric polynomial perturbation of the round sphere.
pub fn bumped_toric(m: usize, amp: f64) -> MetricState {
    let p = ToricPotential::from_fn(m, |x| amp * (x.powi(4) + 0.5 * x.powi(3) - 0.3 * x.powi(5)))
        .unwrap();
    MetricState::toric(p)
}
