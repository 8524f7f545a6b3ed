use proptest::prelude::*;
use rode_density::analysis::{fit_error_vs_difference, hellinger_values, lp_distance_values};
use rode_density::density::linspace;
use statrs::distribution::{ContinuousCDF, Normal};

fn gauss(x: f64, mu: f64, sigma: f64) -> f64 {
    (-0.5 * ((x - mu) / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

#[test]
fn l1_between_shifted_gaussians() {
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    // step 1e-3
    let grid = linspace(-10.0, 12.0, 22_001);
    for delta in [0.1, 0.5, 1.0, 2.0] {
        let f: Vec<f64> = grid.iter().map(|&x| gauss(x, 0.0, 1.0)).collect();
        let g: Vec<f64> = grid.iter().map(|&x| gauss(x, delta, 1.0)).collect();
        let l1 = lp_distance_values(&grid, &f, &g, 1.0, 1e-6).unwrap();
        let exact = 4.0 * std_normal.cdf(delta / 2.0) - 2.0;
        assert!((l1 - exact).abs() < 1e-4, "delta {delta}: {l1} vs {exact}");
    }
}

#[test]
fn l2_between_gaussians() {
    // ‖φ_0 − φ_δ‖₂² = (1 − e^{−δ²/4}) / √π for unit variances
    let grid = linspace(-10.0, 12.0, 22_001);
    let delta: f64 = 1.3;
    let f: Vec<f64> = grid.iter().map(|&x| gauss(x, 0.0, 1.0)).collect();
    let g: Vec<f64> = grid.iter().map(|&x| gauss(x, delta, 1.0)).collect();
    let l2 = lp_distance_values(&grid, &f, &g, 2.0, 1e-6).unwrap();
    let exact = ((1.0 - (-delta * delta / 4.0).exp()) / std::f64::consts::PI.sqrt()).sqrt();
    assert!((l2 - exact).abs() < 1e-6, "{l2} vs {exact}");
}

#[test]
fn constant_sequences_have_no_slope() {
    let pairs: Vec<(f64, f64)> = (0..8).map(|_| (0.1, 0.2)).collect();
    assert!(fit_error_vs_difference(1.0, &pairs).is_err());
}

proptest! {
    /// `H² ≤ TV ≤ √2 H`, and `H` matches the Gaussian closed form.
    #[test]
    fn hellinger_and_total_variation(
        mu in -2.0f64..2.0,
        s1 in 0.5f64..2.0,
        s2 in 0.5f64..2.0,
    ) {
        let grid = linspace(-16.0, 16.0, 16_001);
        let f: Vec<f64> = grid.iter().map(|&x| gauss(x, 0.0, s1)).collect();
        let g: Vec<f64> = grid.iter().map(|&x| gauss(x, mu, s2)).collect();
        let tv = 0.5 * lp_distance_values(&grid, &f, &g, 1.0, 1e-6).unwrap();
        let h = hellinger_values(&grid, &f, &g, 1e-6).unwrap();
        let bc = (2.0 * s1 * s2 / (s1 * s1 + s2 * s2)).sqrt() * (-mu * mu / (4.0 * (s1 * s1 + s2 * s2))).exp();
        prop_assert!((h * h - (1.0 - bc)).abs() < 1e-6, "H² {} vs {}", h * h, 1.0 - bc);
        prop_assert!(h * h <= tv + 1e-9);
        prop_assert!(tv <= 2f64.sqrt() * h + 1e-9);
    }

    /// The fitted slope is the exponent linking error and difference.
    #[test]
    fn regression_recovers_power_law(alpha in 0.5f64..2.0, q in 0.2f64..0.8, c in 0.1f64..10.0) {
        let pairs: Vec<(f64, f64)> = (1..40).map(|n| {
            let d = q.powi(n);
            (d, c * d.powf(alpha))
        }).collect();
        let fit = fit_error_vs_difference(0.5, &pairs).unwrap();
        prop_assert!((fit.alpha - alpha).abs() < 1e-9);
        prop_assert!((fit.beta - c).abs() < 1e-8 * c);
    }
}
