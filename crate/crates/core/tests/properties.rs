use proptest::prelude::*;
use rode_density::series::{advise_truncation, recur_coefficients, AdvisorInput, SeriesPair};

/// The recursion summed over every `m` with zero-padded coefficient sequences.
fn padded_recursion(a: &[f64], b: &[f64], x0: f64, x1: f64, order: usize) -> Vec<f64> {
    let mut x = vec![x0, x1];
    for n in 0..order - 1 {
        let mut acc = 0.0;
        for m in 0..=n {
            let k = n - m;
            let ak = if k < a.len() { a[k] } else { 0.0 };
            let bk = if k < b.len() { b[k] } else { 0.0 };
            acc += (m + 1) as f64 * ak * x[m + 1] + bk * x[m];
        }
        x.push(-acc / ((n + 2) * (n + 1)) as f64);
    }
    x
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 0..6)
}

proptest! {
    #[test]
    fn sparse_sum_is_bitwise_the_padded_sum(
        a in coeffs(),
        b in coeffs(),
        x0 in -2.0f64..2.0,
        x1 in -2.0f64..2.0,
        order in 1usize..30,
    ) {
        let fast = recur_coefficients(&a, &b, x0, x1, order).unwrap();
        let slow = padded_recursion(&a, &b, x0, x1, order);
        prop_assert_eq!(fast.len(), order + 1);
        for (f, s) in fast.iter().zip(&slow) {
            prop_assert_eq!(f.to_bits(), s.to_bits());
        }
    }

    #[test]
    fn fundamental_pair_starts_at_identity(
        a in coeffs(),
        b in coeffs(),
        t0 in -3.0f64..3.0,
        order in 1usize..25,
    ) {
        let pair = SeriesPair::from_coefficients(t0, &a, &b, order).unwrap();
        prop_assert_eq!(pair.eval(t0), (1.0, 0.0));
        prop_assert_eq!(pair.s0.len(), order + 1);
    }

    #[test]
    fn truncation_keeps_leading_coefficients(a in coeffs(), b in coeffs(), order in 2usize..25) {
        let full = SeriesPair::from_coefficients(0.0, &a, &b, order).unwrap();
        let lower = SeriesPair::from_coefficients(0.0, &a, &b, order - 1).unwrap();
        prop_assert_eq!(full.truncate(order - 1), lower);
    }

    #[test]
    fn advised_order_grows_as_epsilon_shrinks(
        bounds in prop::collection::vec(0.0f64..5.0, 1..4),
        y0 in 0.0f64..3.0,
        y1 in 0.0f64..3.0,
        rho_frac in 0.05f64..0.9,
        eps in 1e-8f64..1e-1,
        shrink in 1.0f64..1e3,
    ) {
        let (r, s) = (2.0, 1.5);
        let input = |epsilon: f64| AdvisorInput {
            bounds_a: &bounds,
            bounds_b: &bounds,
            y0_norm: y0,
            y1_norm: y1,
            r,
            rho: rho_frac * s,
            s,
            epsilon,
        };
        let coarse = advise_truncation(&input(eps)).unwrap();
        let fine = advise_truncation(&input(eps / shrink)).unwrap();
        prop_assert!(fine.order >= coarse.order);
    }
}
