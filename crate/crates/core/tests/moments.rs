use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rode_density::config::RunConfig;
use rode_density::poly::{
    mean_and_variance, polynomial_mean_and_variance, symbolic_series, InputVariable,
    SparsePolynomial, DEFAULT_TERM_BUDGET,
};
use rode_density::series::{
    recur_coefficients, CoefficientEntry, CoefficientModel, ProblemSpec, Sequence, Which,
};
use rode_density::{DistributionSpec, Family};

fn value_of(v: &InputVariable, a: &[f64], b: &[f64]) -> f64 {
    match v.sequence {
        Sequence::A => a[v.index],
        Sequence::B => b[v.index],
    }
}

#[test]
fn symbolic_coefficients_match_numeric_recursion() {
    let spec = RunConfig::preset("example1").unwrap().problem;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for which in [Which::S0, Which::S1] {
        let sym = symbolic_series(&spec, 4, which, DEFAULT_TERM_BUDGET).unwrap();
        assert_eq!(sym.variables.len(), 3);
        for _ in 0..100 {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            spec.sample_coefficients(3, &mut rng, &mut a, &mut b);
            let values: Vec<f64> = sym.variables.iter().map(|v| value_of(v, &a, &b)).collect();
            let (x0, x1) = if which == Which::S0 {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            };
            let numeric = recur_coefficients(&a, &b, x0, x1, 4).unwrap();
            for (p, x) in sym.coeffs.iter().zip(&numeric) {
                assert!(
                    (p.eval(&values) - x).abs() < 1e-12,
                    "{} vs {x}",
                    p.eval(&values)
                );
            }
        }
    }
}

/// `E` and `Var` of `S0^{10}(1.5)` for Example 1 against 10^6 direct realizations.
#[test]
fn s0_moments_match_sampling() {
    let spec = RunConfig::preset("example1").unwrap().problem;
    let sym = symbolic_series(&spec, 10, Which::S0, DEFAULT_TERM_BUDGET).unwrap();
    let (mean, var) = mean_and_variance(&sym, 1.5, DEFAULT_TERM_BUDGET).unwrap();

    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            spec.sample_coefficients(9, &mut rng, &mut a, &mut b);
            let x = recur_coefficients(&a, &b, 1.0, 0.0, 10).unwrap();
            x.iter().rev().fold(0.0, |acc, c| acc * 1.5 + c)
        })
        .collect();
    let m = draws.iter().sum::<f64>() / n as f64;
    let central = |k: i32| draws.iter().map(|v| (v - m).powi(k)).sum::<f64>() / n as f64;
    let (v, m4) = (central(2), central(4));
    let se_mean = (v / n as f64).sqrt();
    let se_var = ((m4 - v * v) / n as f64).sqrt();
    assert!(
        (mean - m).abs() < 3.0 * se_mean,
        "mean {mean} vs {m} ± {se_mean}"
    );
    assert!(
        (var - v).abs() < 3.0 * se_var,
        "var {var} vs {v} ± {se_var}"
    );
}

/// `S1^3(t) = t − A_0 t²/2` with `A_0 ~ U(0,1)`: variance `t⁴/48`.
#[test]
fn hand_computed_variance() {
    let spec = ProblemSpec {
        t0: 0.0,
        a: CoefficientModel::explicit(vec![CoefficientEntry::Random(
            DistributionSpec::untruncated(Family::Uniform { a: 0.0, b: 1.0 }).unwrap(),
        )]),
        b: CoefficientModel::zero(),
        y0: DistributionSpec::untruncated(Family::Normal {
            mu: 0.0,
            sigma: 1.0,
        })
        .unwrap(),
        y1: DistributionSpec::point(0.0),
        radius: None,
    };
    let sym = symbolic_series(&spec, 2, Which::S1, DEFAULT_TERM_BUDGET).unwrap();
    for t in [0.3, 1.0, 1.7] {
        let (mean, var) = mean_and_variance(&sym, t, DEFAULT_TERM_BUDGET).unwrap();
        assert!((mean - (t - t * t / 4.0)).abs() < 1e-12);
        assert!((var - t.powi(4) / 48.0).abs() < 1e-12, "{var}");
    }
}

fn uniform_moment(lo: f64, hi: f64, k: i32) -> f64 {
    (hi.powi(k + 1) - lo.powi(k + 1)) / ((k + 1) as f64 * (hi - lo))
}

proptest! {
    #[test]
    fn univariate_polynomial_moments(
        coeffs in prop::collection::vec(-3.0f64..3.0, 1..6),
        lo in -2.0f64..2.0,
        width in 0.1f64..3.0,
    ) {
        let hi = lo + width;
        let law = DistributionSpec::untruncated(Family::Uniform { a: lo, b: hi }).unwrap();
        let vars = vec![InputVariable { sequence: Sequence::A, index: 0, law }];
        let mut p = SparsePolynomial::zero(1);
        let mut power = SparsePolynomial::constant(1, 1.0);
        for &c in &coeffs {
            p.add_scaled(&power, c);
            power = power.mul_variable(0);
        }
        let (mean, var) = polynomial_mean_and_variance(&p, &vars, DEFAULT_TERM_BUDGET).unwrap();
        let d = coeffs.len();
        let m1: f64 = (0..d).map(|k| coeffs[k] * uniform_moment(lo, hi, k as i32)).sum();
        let m2: f64 = (0..d)
            .flat_map(|j| (0..d).map(move |k| (j, k)))
            .map(|(j, k)| coeffs[j] * coeffs[k] * uniform_moment(lo, hi, (j + k) as i32))
            .sum();
        let scale = m2.abs().max(1.0);
        prop_assert!((mean - m1).abs() < 1e-10 * scale);
        prop_assert!((var - (m2 - m1 * m1).max(0.0)).abs() < 1e-9 * scale);
        prop_assert!(var >= 0.0);
    }

    /// Independent inputs: the moments do not depend on how the variables are numbered.
    #[test]
    fn variable_order_does_not_matter(c in prop::collection::vec(-2.0f64..2.0, 4)) {
        let u = DistributionSpec::untruncated(Family::Uniform { a: 0.0, b: 1.0 }).unwrap();
        let g = DistributionSpec::untruncated(Family::Gamma { shape: 2.0, rate: 2.0 }).unwrap();
        let build = |x: usize, y: usize| {
            let one = SparsePolynomial::constant(2, 1.0);
            let mut p = one.scale(c[0]);
            p.add_scaled(&one.mul_variable(x), c[1]);
            p.add_scaled(&one.mul_variable(y).mul_variable(y), c[2]);
            p.add_scaled(&one.mul_variable(x).mul_variable(y), c[3]);
            p
        };
        let vars = |first: &DistributionSpec, second: &DistributionSpec| vec![
            InputVariable { sequence: Sequence::A, index: 0, law: first.clone() },
            InputVariable { sequence: Sequence::B, index: 0, law: second.clone() },
        ];
        let (m1, v1) = polynomial_mean_and_variance(&build(0, 1), &vars(&u, &g), DEFAULT_TERM_BUDGET).unwrap();
        let (m2, v2) = polynomial_mean_and_variance(&build(1, 0), &vars(&g, &u), DEFAULT_TERM_BUDGET).unwrap();
        prop_assert!((m1 - m2).abs() < 1e-12 * m1.abs().max(1.0));
        prop_assert!((v1 - v2).abs() < 1e-12 * v1.abs().max(1.0));
    }
}
