//! Sparse multivariate polynomials over independent random inputs, and exact
//! mean and variance of the truncated fundamental series.

use std::collections::BTreeMap;

use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::series::{Coef, ProblemSpec, Sequence, Which};

/// Default cap on the number of terms of any intermediate polynomial.
pub const DEFAULT_TERM_BUDGET: usize = 1_000_000;

/// Exponent vector, one entry per declared variable.
pub type Monomial = Box<[u16]>;

/// `Σ c_α Z^α` with no zero coefficients stored; terms are kept in
/// lexicographic order of their exponent vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparsePolynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl SparsePolynomial {
    pub fn zero(nvars: usize) -> Self {
        SparsePolynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars].into_boxed_slice(), c);
        p
    }

    /// The monomial `Z_var`.
    pub fn variable(nvars: usize, var: usize) -> Self {
        assert!(var < nvars, "variable {var} out of range");
        let mut e = vec![0u16; nvars];
        e[var] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e.into_boxed_slice(), 1.0);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u16], f64)> {
        self.terms.iter().map(|(e, &c)| (&e[..], c))
    }

    /// True when the polynomial has no term in any variable.
    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&k| k == 0))
    }

    /// Largest exponent of each variable.
    pub fn max_exponents(&self) -> Vec<u16> {
        let mut out = vec![0u16; self.nvars];
        for e in self.terms.keys() {
            for (o, &k) in out.iter_mut().zip(e.iter()) {
                *o = (*o).max(k);
            }
        }
        out
    }

    fn add_term(&mut self, e: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(e) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    /// `self += c · other`.
    pub fn add_scaled(&mut self, other: &SparsePolynomial, c: f64) {
        debug_assert_eq!(self.nvars, other.nvars);
        if c == 0.0 {
            return;
        }
        for (e, &v) in &other.terms {
            self.add_term(e.clone(), c * v);
        }
    }

    pub fn scale(&self, c: f64) -> SparsePolynomial {
        let mut out = Self::zero(self.nvars);
        out.add_scaled(self, c);
        out
    }

    /// `self · Z_var`.
    pub fn mul_variable(&self, var: usize) -> SparsePolynomial {
        let terms = self
            .terms
            .iter()
            .map(|(e, &c)| {
                let mut e = e.clone();
                e[var] += 1;
                (e, c)
            })
            .collect();
        SparsePolynomial {
            nvars: self.nvars,
            terms,
        }
    }

    /// Product, failing when the result would exceed `budget` terms.
    pub fn mul(&self, other: &SparsePolynomial, budget: usize) -> Result<SparsePolynomial> {
        debug_assert_eq!(self.nvars, other.nvars);
        let mut out = Self::zero(self.nvars);
        for (e1, &c1) in &self.terms {
            for (e2, &c2) in &other.terms {
                let e: Monomial = e1.iter().zip(e2.iter()).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2);
            }
            if out.len() > budget {
                return Err(Error::Budget {
                    terms: out.len(),
                    budget,
                });
            }
        }
        Ok(out)
    }

    /// Value at `values[var]`.
    pub fn eval(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, &c)| {
                e.iter().zip(values).fold(
                    c,
                    |acc, (&k, &v)| if k == 0 { acc } else { acc * v.powi(k as i32) },
                )
            })
            .sum()
    }

    /// `E[P]` for independent variables, given `moments[var][k] = E[Z_var^k]`.
    pub fn expectation(&self, moments: &[Vec<f64>]) -> f64 {
        self.terms
            .iter()
            .map(|(e, &c)| {
                e.iter().zip(moments).fold(
                    c,
                    |acc, (&k, m)| if k == 0 { acc } else { acc * m[k as usize] },
                )
            })
            .sum()
    }
}

/// A random coefficient appearing as a polynomial variable.
#[derive(Debug, Clone, PartialEq)]
pub struct InputVariable {
    pub sequence: Sequence,
    pub index: usize,
    pub law: DistributionSpec,
}

/// Coefficient polynomials of `S0^{N0}` or `S1^{N0}` over the random inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicSeries {
    pub t0: f64,
    pub which: Which,
    /// Variables in the order the sampler draws them.
    pub variables: Vec<InputVariable>,
    pub coeffs: Vec<SparsePolynomial>,
}

impl SymbolicSeries {
    /// `Σ coeffs_n (t−t0)^n` as one polynomial.
    pub fn at(&self, t: f64) -> SparsePolynomial {
        let nvars = self.variables.len();
        let h = t - self.t0;
        let mut out = SparsePolynomial::zero(nvars);
        let mut hp = 1.0;
        for c in &self.coeffs {
            out.add_scaled(c, hp);
            hp *= h;
        }
        out
    }
}

/// Runs the series recursion over polynomials; random `A_n`, `B_n` become
/// degree-one monomials, deterministic ones stay constants.
pub fn symbolic_series(
    spec: &ProblemSpec,
    n0: usize,
    which: Which,
    budget: usize,
) -> Result<SymbolicSeries> {
    if n0 < 1 {
        return Err(Error::Spec(format!(
            "control order must be at least 1, got {n0}"
        )));
    }
    let inputs = spec.random_inputs(n0);
    let nvars = inputs.len();
    let var_of = |seq: Sequence, idx: usize| {
        inputs
            .iter()
            .position(|v| v.sequence == seq && v.index == idx)
    };
    let coef = |seq: Sequence, k: usize| -> Option<Result<(f64, Option<usize>)>> {
        let model = match seq {
            Sequence::A => &spec.a,
            Sequence::B => &spec.b,
        };
        if model.length().is_some_and(|l| k >= l) {
            return None;
        }
        Some(match model.coef(k) {
            Coef::Const(c) if c == 0.0 => return None,
            Coef::Const(c) => Ok((c, None)),
            Coef::Random(_) => var_of(seq, k)
                .map(|v| (1.0, Some(v)))
                .ok_or_else(|| Error::Numerical(format!("missing variable for {seq:?}_{k}"))),
        })
    };

    let (x0, x1) = match which {
        Which::S0 => (1.0, 0.0),
        Which::S1 => (0.0, 1.0),
    };
    let mut x = vec![
        SparsePolynomial::constant(nvars, x0),
        SparsePolynomial::constant(nvars, x1),
    ];
    for n in 0..n0 - 1 {
        let mut acc = SparsePolynomial::zero(nvars);
        for m in 0..=n {
            let k = n - m;
            for (seq, xi, weight) in [(Sequence::A, m + 1, (m + 1) as f64), (Sequence::B, m, 1.0)] {
                if let Some(c) = coef(seq, k) {
                    let (c, var) = c?;
                    match var {
                        None => acc.add_scaled(&x[xi], weight * c),
                        Some(v) => acc.add_scaled(&x[xi].mul_variable(v), weight),
                    }
                }
            }
            if acc.len() > budget {
                return Err(Error::Budget {
                    terms: acc.len(),
                    budget,
                });
            }
        }
        x.push(acc.scale(-1.0 / ((n + 2) * (n + 1)) as f64));
    }
    let variables = inputs
        .into_iter()
        .map(|v| InputVariable {
            sequence: v.sequence,
            index: v.index,
            law: v.law.clone(),
        })
        .collect();
    Ok(SymbolicSeries {
        t0: spec.t0,
        which,
        variables,
        coeffs: x,
    })
}

/// Raw-moment table `E[Z_v^k]` for `k ≤ max_exp[v]`.
fn moment_table(variables: &[InputVariable], max_exp: &[u16]) -> Result<Vec<Vec<f64>>> {
    variables
        .iter()
        .zip(max_exp)
        .map(|(v, &k)| (0..=k as i32).map(|j| v.law.raw_moment(j)).collect())
        .collect()
}

/// `(E[P], Var[P])` for `P = Σ coeffs_n (t−t0)^n`, using independence of the inputs.
pub fn mean_and_variance(series: &SymbolicSeries, t: f64, budget: usize) -> Result<(f64, f64)> {
    let p = series.at(t);
    polynomial_mean_and_variance(&p, &series.variables, budget)
}

/// `(E[P], Var[P])` of one polynomial over independent inputs.
pub fn polynomial_mean_and_variance(
    p: &SparsePolynomial,
    variables: &[InputVariable],
    budget: usize,
) -> Result<(f64, f64)> {
    if p.is_constant() {
        return Ok((p.terms().map(|(_, c)| c).sum(), 0.0));
    }
    let p2 = p.mul(p, budget)?;
    let moments = moment_table(variables, &p2.max_exponents())?;
    let mean = p.expectation(&moments);
    let second = p2.expectation(&moments);
    let var = second - mean * mean;
    let tol = 1e-12 * second.abs().max(1.0);
    if var < -tol {
        return Err(Error::Numerical(format!(
            "negative variance {var:e} (E[P²] = {second:e}, E[P] = {mean:e})"
        )));
    }
    Ok((mean, var.max(0.0)))
}
