//! Truncated Fröbenius series for `X'' + A(t) X' + B(t) X = 0`.
//!
//! With `A(t) = Σ A_n (t−t0)^n`, `B(t) = Σ B_n (t−t0)^n` and
//! `X(t) = Σ X_n (t−t0)^n`, the coefficients satisfy
//!
//! ```text
//! X_{n+2} = −1/((n+2)(n+1)) Σ_{m=0}^{n} [(m+1) A_{n−m} X_{m+1} + B_{n−m} X_m]
//! ```
//!
//! Every solution is `Y0·S0 + Y1·S1`, where `S0`, `S1` start from `(1, 0)` and `(0, 1)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::error::{spec_err, Error, Result};
use crate::expr::Expression;

/// One coefficient: a constant or a random law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientEntry {
    Const(f64),
    Random(DistributionSpec),
}

impl CoefficientEntry {
    fn as_coef(&self) -> Coef<'_> {
        match self {
            CoefficientEntry::Const(c) => Coef::Const(*c),
            CoefficientEntry::Random(d) => match d.as_point_mass() {
                Some(c) => Coef::Const(c),
                None => Coef::Random(d),
            },
        }
    }
}

/// Value of a coefficient at one index.
#[derive(Debug, Clone, Copy)]
pub enum Coef<'a> {
    Const(f64),
    Random(&'a DistributionSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientKind {
    /// Finitely many coefficients; all later ones are zero.
    Explicit(Vec<CoefficientEntry>),
    /// `head` overrides the first indices; later indices follow `rule(n)`.
    Rule {
        head: Vec<CoefficientEntry>,
        rule: Expression,
    },
    /// `head` overrides the first indices; later indices are iid draws of `family`.
    Iid {
        head: Vec<CoefficientEntry>,
        family: DistributionSpec,
    },
}

/// Law of the coefficient sequence `(A_n)` or `(B_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoefficientModel", into = "RawCoefficientModel")]
pub struct CoefficientModel {
    kind: CoefficientKind,
    /// Highest index that may be nonzero.
    degree_bound: Option<usize>,
    /// `‖·‖∞` bounds per index for the truncation advisor.
    sup_norm_bounds: Option<Vec<f64>>,
}

impl CoefficientModel {
    pub fn new(
        kind: CoefficientKind,
        degree_bound: Option<usize>,
        sup_norm_bounds: Option<Vec<f64>>,
    ) -> Result<Self> {
        if let (CoefficientKind::Explicit(entries), Some(d)) = (&kind, degree_bound) {
            if entries.len() > d + 1 {
                return spec_err(format!(
                    "explicit coefficient list has {} entries but degree_bound is {d}",
                    entries.len()
                ));
            }
        }
        let model = CoefficientModel {
            kind,
            degree_bound,
            sup_norm_bounds,
        };
        if let Some(bounds) = &model.sup_norm_bounds {
            for (i, &bound) in bounds.iter().enumerate() {
                if !(bound >= 0.0 && bound.is_finite()) {
                    return spec_err(format!(
                        "sup_norm_bounds[{i}] = {bound} must be finite and nonnegative"
                    ));
                }
                if let Some(natural) = model.natural_bound(i) {
                    if natural > bound * (1.0 + 1e-12) {
                        return spec_err(format!(
                            "sup_norm_bounds[{i}] = {bound} does not dominate the coefficient's support (needs ≥ {natural})"
                        ));
                    }
                }
            }
        }
        Ok(model)
    }

    /// Finitely many constants, highest index last.
    pub fn constants(values: &[f64]) -> Self {
        Self::explicit(values.iter().map(|&v| CoefficientEntry::Const(v)).collect())
    }

    pub fn explicit(entries: Vec<CoefficientEntry>) -> Self {
        Self::new(CoefficientKind::Explicit(entries), None, None).expect("no bound to violate")
    }

    pub fn zero() -> Self {
        Self::constants(&[])
    }

    pub fn kind(&self) -> &CoefficientKind {
        &self.kind
    }

    pub fn degree_bound(&self) -> Option<usize> {
        self.degree_bound
    }

    pub fn sup_norm_bounds(&self) -> Option<&[f64]> {
        self.sup_norm_bounds.as_deref()
    }

    /// Number of leading indices that may be nonzero; `None` for infinite sequences.
    pub fn length(&self) -> Option<usize> {
        let natural = match &self.kind {
            CoefficientKind::Explicit(e) => Some(e.len()),
            _ => None,
        };
        match (natural, self.degree_bound) {
            (Some(n), Some(d)) => Some(n.min(d + 1)),
            (Some(n), None) => Some(n),
            (None, Some(d)) => Some(d + 1),
            (None, None) => None,
        }
    }

    /// Coefficient at index `n`.
    pub fn coef(&self, n: usize) -> Coef<'_> {
        if self.degree_bound.is_some_and(|d| n > d) {
            return Coef::Const(0.0);
        }
        match &self.kind {
            CoefficientKind::Explicit(entries) => entries
                .get(n)
                .map_or(Coef::Const(0.0), CoefficientEntry::as_coef),
            CoefficientKind::Rule { head, rule } => match head.get(n) {
                Some(e) => e.as_coef(),
                None => Coef::Const(rule.eval(n as f64)),
            },
            CoefficientKind::Iid { head, family } => match head.get(n) {
                Some(e) => e.as_coef(),
                None => match family.as_point_mass() {
                    Some(c) => Coef::Const(c),
                    None => Coef::Random(family),
                },
            },
        }
    }

    /// True when no index carries randomness.
    pub fn is_deterministic(&self) -> bool {
        let head_det =
            |h: &[CoefficientEntry]| h.iter().all(|e| matches!(e.as_coef(), Coef::Const(_)));
        match &self.kind {
            CoefficientKind::Explicit(e) => head_det(&e[..self.length().unwrap_or(0).min(e.len())]),
            CoefficientKind::Rule { head, .. } => head_det(head),
            CoefficientKind::Iid { head, family } => {
                let reaches_family = self.degree_bound.is_none_or(|d| d >= head.len());
                head_det(head) && (!reaches_family || family.as_point_mass().is_some())
            }
        }
    }

    /// `‖coef_n‖∞` implied by the model itself, when finite.
    fn natural_bound(&self, n: usize) -> Option<f64> {
        match self.coef(n) {
            Coef::Const(c) => Some(c.abs()),
            Coef::Random(d) if d.is_bounded() => Some(d.sup_abs()),
            Coef::Random(_) => None,
        }
    }

    /// Indices below `count` whose law is unbounded.
    pub fn unbounded_indices(&self, count: usize) -> Vec<usize> {
        (0..count)
            .filter(|&n| matches!(self.coef(n), Coef::Random(d) if !d.is_bounded()))
            .collect()
    }

    /// Sup-norm bounds for the first `count` indices: the declared ones when
    /// present, otherwise derived from bounded supports.
    pub fn advisor_bounds(&self, count: usize) -> Result<Vec<f64>> {
        if let Some(b) = &self.sup_norm_bounds {
            return Ok(b.clone());
        }
        let count = self.length().map_or(count, |l| l.min(count)).max(1);
        (0..count)
            .map(|n| {
                self.natural_bound(n).ok_or_else(|| {
                    Error::Spec(format!(
                        "coefficient {n} is unbounded; declare sup_norm_bounds to use the advisor"
                    ))
                })
            })
            .collect()
    }
}

/// Serialized form: `{kind, entries?, rule?, family?, degree_bound?, sup_norm_bounds?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCoefficientModel {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<CoefficientEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<Expression>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<DistributionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree_bound: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup_norm_bounds: Option<Vec<f64>>,
}

impl TryFrom<RawCoefficientModel> for CoefficientModel {
    type Error = Error;

    fn try_from(raw: RawCoefficientModel) -> Result<Self> {
        let kind = match raw.kind.as_str() {
            "explicit" => {
                if raw.rule.is_some() || raw.family.is_some() {
                    return spec_err("explicit coefficients take only `entries`");
                }
                CoefficientKind::Explicit(raw.entries)
            }
            "rule" => {
                let rule = raw
                    .rule
                    .ok_or_else(|| Error::Spec("rule coefficients need `rule`".into()))?;
                if raw.family.is_some() {
                    return spec_err("rule coefficients do not take `family`");
                }
                CoefficientKind::Rule {
                    head: raw.entries,
                    rule,
                }
            }
            "iid" => {
                let family = raw
                    .family
                    .ok_or_else(|| Error::Spec("iid coefficients need `family`".into()))?;
                if raw.rule.is_some() {
                    return spec_err("iid coefficients do not take `rule`");
                }
                CoefficientKind::Iid {
                    head: raw.entries,
                    family,
                }
            }
            other => {
                return spec_err(format!(
                    "unknown coefficient kind `{other}` (explicit, rule, iid)"
                ))
            }
        };
        CoefficientModel::new(kind, raw.degree_bound, raw.sup_norm_bounds)
    }
}

impl From<CoefficientModel> for RawCoefficientModel {
    fn from(m: CoefficientModel) -> Self {
        let (kind, entries, rule, family) = match m.kind {
            CoefficientKind::Explicit(e) => ("explicit", e, None, None),
            CoefficientKind::Rule { head, rule } => ("rule", head, Some(rule), None),
            CoefficientKind::Iid { head, family } => ("iid", head, None, Some(family)),
        };
        RawCoefficientModel {
            kind: kind.to_string(),
            entries,
            rule,
            family,
            degree_bound: m.degree_bound,
            sup_norm_bounds: m.sup_norm_bounds,
        }
    }
}

/// Full description of the random initial value problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default)]
    pub t0: f64,
    #[serde(rename = "A")]
    pub a: CoefficientModel,
    #[serde(rename = "B")]
    pub b: CoefficientModel,
    #[serde(rename = "Y0")]
    pub y0: DistributionSpec,
    #[serde(rename = "Y1")]
    pub y1: DistributionSpec,
    /// Radius of the domain of analyticity of `A` and `B` around `t0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

/// Which member of the fundamental pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Which {
    S0,
    S1,
}

/// Which coefficient sequence an input belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sequence {
    A,
    B,
}

/// A random coefficient of the problem.
#[derive(Debug, Clone, Copy)]
pub struct RandomInput<'a> {
    pub sequence: Sequence,
    pub index: usize,
    pub law: &'a DistributionSpec,
}

impl ProblemSpec {
    /// Checks the problem and logs a warning for unbounded coefficient laws
    /// among the first `count` indices.
    pub fn validate(&self, count: usize) -> Result<()> {
        if !self.t0.is_finite() {
            return spec_err("t0 must be finite");
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return spec_err(format!("radius must be positive, got {r}"));
            }
        }
        for (name, model) in [("A", &self.a), ("B", &self.b)] {
            let unbounded = model.unbounded_indices(count);
            if !unbounded.is_empty() {
                log::warn!(
                    "{name} coefficients at indices {unbounded:?} have unbounded laws; \
                     a mean-square solution may not exist"
                );
            }
            if let CoefficientKind::Rule { rule, head } = &model.kind {
                for n in head.len()..count {
                    let v = rule.eval(n as f64);
                    if !v.is_finite() {
                        return spec_err(format!("{name} rule `{rule}` is not finite at n = {n}"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        self.a.is_deterministic() && self.b.is_deterministic()
    }

    /// Number of entries of `A` (and `B`) needed for order `n`: indices `0..=n−2`.
    fn coefficient_count(order: usize) -> usize {
        order.saturating_sub(1)
    }

    /// Random coefficients that order `order` depends on, in draw order
    /// (index ascending, `A` before `B` at each index).
    pub fn random_inputs(&self, order: usize) -> Vec<RandomInput<'_>> {
        let mut out = Vec::new();
        for n in 0..Self::coefficient_count(order) {
            for (sequence, model) in [(Sequence::A, &self.a), (Sequence::B, &self.b)] {
                if let Coef::Random(law) = model.coef(n) {
                    out.push(RandomInput {
                        sequence,
                        index: n,
                        law,
                    });
                }
            }
        }
        out
    }

    /// Draws `A_0..A_{count−1}`, `B_0..B_{count−1}` into the buffers, index by
    /// index with `A` before `B`, skipping deterministic entries. Draws for a
    /// larger `count` extend those for a smaller one from the same generator state.
    pub fn sample_coefficients<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
        a: &mut Vec<f64>,
        b: &mut Vec<f64>,
    ) {
        let la = self.a.length().map_or(count, |l| l.min(count));
        let lb = self.b.length().map_or(count, |l| l.min(count));
        a.clear();
        b.clear();
        for n in 0..la.max(lb) {
            if n < la {
                a.push(match self.a.coef(n) {
                    Coef::Const(c) => c,
                    Coef::Random(d) => d.sample(rng),
                });
            }
            if n < lb {
                b.push(match self.b.coef(n) {
                    Coef::Const(c) => c,
                    Coef::Random(d) => d.sample(rng),
                });
            }
        }
    }

    /// Coefficients of a deterministic problem, or `None` when some are random.
    pub fn deterministic_coefficients(&self, count: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        if !self.is_deterministic() {
            return None;
        }
        let constants = |model: &CoefficientModel| -> Vec<f64> {
            let len = model.length().map_or(count, |l| l.min(count));
            (0..len)
                .map(|n| match model.coef(n) {
                    Coef::Const(c) => c,
                    Coef::Random(_) => unreachable!("deterministic model"),
                })
                .collect()
        };
        Some((constants(&self.a), constants(&self.b)))
    }
}

/// Coefficients `X_0..X_N` of the truncated series around `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPair {
    pub t0: f64,
    pub order: usize,
    pub s0: Vec<f64>,
    pub s1: Vec<f64>,
}

impl SeriesPair {
    /// Fundamental pair for realised coefficient vectors (zero beyond their length).
    pub fn from_coefficients(t0: f64, a: &[f64], b: &[f64], order: usize) -> Result<Self> {
        let s0 = recur_coefficients(a, b, 1.0, 0.0, order)?;
        let s1 = recur_coefficients(a, b, 0.0, 1.0, order)?;
        if s0.iter().chain(&s1).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "series coefficients overflowed at order {order}"
            )));
        }
        Ok(SeriesPair { t0, order, s0, s1 })
    }

    /// `(S0^N(t), S1^N(t))`.
    #[inline]
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let h = t - self.t0;
        (horner(&self.s0, h), horner(&self.s1, h))
    }

    /// Both series truncated at a lower order.
    pub fn truncate(&self, order: usize) -> SeriesPair {
        let k = order.min(self.order) + 1;
        SeriesPair {
            t0: self.t0,
            order: order.min(self.order),
            s0: self.s0[..k].to_vec(),
            s1: self.s1[..k].to_vec(),
        }
    }
}

#[inline]
pub fn horner(coeffs: &[f64], h: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * h + c)
}

/// `X_0..X_N` from the recursion. `a` and `b` are zero beyond their length;
/// only the indices where either is nonzero are summed, in ascending `m`, which
/// reproduces the zero-padded full sum bit for bit.
pub fn recur_coefficients(
    a: &[f64],
    b: &[f64],
    x0: f64,
    x1: f64,
    order: usize,
) -> Result<Vec<f64>> {
    if order < 1 {
        return spec_err(format!("truncation order must be at least 1, got {order}"));
    }
    let width = a.len().max(b.len());
    let mut x = Vec::with_capacity(order + 1);
    x.push(x0);
    x.push(x1);
    for n in 0..order - 1 {
        let m_lo = (n + 1).saturating_sub(width);
        let mut acc = 0.0;
        for m in m_lo..=n {
            let k = n - m;
            let ak = a.get(k).copied().unwrap_or(0.0);
            let bk = b.get(k).copied().unwrap_or(0.0);
            acc += (m + 1) as f64 * ak * x[m + 1] + bk * x[m];
        }
        x.push(-acc / ((n + 2) * (n + 1)) as f64);
    }
    Ok(x)
}

/// Realises the random coefficients from `rng` and builds the fundamental pair
/// of order `order`.
pub fn realize_series_pair<R: Rng + ?Sized>(
    spec: &ProblemSpec,
    order: usize,
    rng: &mut R,
) -> Result<SeriesPair> {
    let count = ProblemSpec::coefficient_count(order);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    spec.sample_coefficients(count, rng, &mut a, &mut b);
    SeriesPair::from_coefficients(spec.t0, &a, &b, order)
}

/// `(S0^N(t), S1^N(t))` by Horner's rule.
pub fn eval_series(p: &SeriesPair, t: f64) -> (f64, f64) {
    p.eval(t)
}

/// Inputs of the truncation-order advisor.
#[derive(Debug, Clone)]
pub struct AdvisorInput<'a> {
    pub bounds_a: &'a [f64],
    pub bounds_b: &'a [f64],
    pub y0_norm: f64,
    pub y1_norm: f64,
    pub r: f64,
    pub rho: f64,
    pub s: f64,
    pub epsilon: f64,
}

/// Intermediate quantities of the advisor.
#[derive(Debug, Clone, PartialEq)]
pub struct Advice {
    pub u: f64,
    pub c_u: f64,
    pub n: usize,
    pub k: f64,
    /// Smallest order whose root-mean-square truncation error bound is below epsilon.
    pub order: usize,
}

/// Truncation order guaranteeing `‖X^N(t) − X(t)‖₂ < ε` at `ρ = |t − t0|`.
pub fn advise_truncation(input: &AdvisorInput<'_>) -> Result<Advice> {
    let AdvisorInput {
        bounds_a,
        bounds_b,
        y0_norm,
        y1_norm,
        r,
        rho,
        s,
        epsilon,
    } = *input;
    if bounds_a.is_empty() || bounds_b.is_empty() {
        return spec_err("advisor needs at least one bound for each of A and B");
    }
    if !(0.0 <= rho && rho < s && s < r && r.is_finite()) {
        return spec_err(format!(
            "advisor needs 0 ≤ rho < s < r < ∞, got rho={rho}, s={s}, r={r}"
        ));
    }
    if !(epsilon > 0.0) {
        return spec_err(format!("epsilon must be positive, got {epsilon}"));
    }
    if bounds_a
        .iter()
        .chain(bounds_b)
        .any(|b| !(b.is_finite() && *b >= 0.0))
    {
        return spec_err("sup-norm bounds must be finite and nonnegative");
    }
    if !(y0_norm >= 0.0 && y1_norm >= 0.0) {
        return spec_err("initial-condition norms must be nonnegative");
    }

    let u = 0.5 * (r + s);
    let c_u = bounds_a
        .iter()
        .enumerate()
        .chain(bounds_b.iter().enumerate())
        .map(|(i, &b)| b * u.powi(i as i32))
        .fold(0.0, f64::max);

    let step2 = |n: f64| {
        n * s / ((n + 2.0) * u) + c_u * s / (n + 2.0) + c_u * s * s / ((n + 2.0) * (n + 1.0))
    };
    let mut n = 0usize;
    while step2(n as f64) >= 1.0 {
        n += 1;
        if n > 100_000_000 {
            return Err(Error::Numerical(
                "advisor step 2 found no admissible n".into(),
            ));
        }
    }

    let mut h = vec![y0_norm, y1_norm];
    for m in 0..n.saturating_sub(1) {
        let mf = m as f64;
        let next = (mf / ((mf + 2.0) * u) + c_u / (mf + 2.0)) * h[m + 1]
            + c_u / ((mf + 2.0) * (mf + 1.0)) * h[m];
        h.push(next);
    }
    let k = h
        .iter()
        .take(n + 1)
        .enumerate()
        .map(|(m, hm)| hm * s.powi(m as i32))
        .fold(0.0, f64::max);

    let order = if rho == 0.0 || k == 0.0 {
        0
    } else {
        let v = (k / (epsilon * (1.0 - rho / s))).ln() / (s / rho).ln() - 1.0;
        if v < 0.0 {
            0
        } else {
            v.floor() as usize + 1
        }
    };
    Ok(Advice {
        u,
        c_u,
        n,
        k,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Family;
    use crate::rng::RngStream;

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|i| i as f64).product()
    }

    #[test]
    fn first_step_matches_hand_values() {
        let x = recur_coefficients(&[4.0], &[2.0], 1.0, 0.0, 2).unwrap();
        assert_eq!(x[2], -1.0);
        let x = recur_coefficients(&[4.0], &[2.0], 0.0, 1.0, 2).unwrap();
        assert_eq!(x[2], -2.0);
        assert!(recur_coefficients(&[], &[], 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn cosine_coefficients() {
        let x = recur_coefficients(&[], &[1.0], 1.0, 0.0, 8).unwrap();
        for (n, v) in x.iter().enumerate() {
            let want = if n % 2 == 0 {
                (-1f64).powi(n as i32 / 2) / factorial(n)
            } else {
                0.0
            };
            assert!((v - want).abs() < 1e-14, "n={n}: {v} vs {want}");
        }
    }

    #[test]
    fn fast_path_equals_padded_sum() {
        let a = [4.0, 0.3];
        let b = [1.7, 1.0];
        let fast = recur_coefficients(&a, &b, 1.0, 0.0, 25).unwrap();
        let mut pa = a.to_vec();
        pa.resize(30, 0.0);
        let mut pb = b.to_vec();
        pb.resize(30, 0.0);
        let full = recur_coefficients(&pa, &pb, 1.0, 0.0, 25).unwrap();
        assert_eq!(
            fast.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            full.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn airy_pattern() {
        // X'' + t X = 0: S0 nonzero only at multiples of 3
        let x = recur_coefficients(&[], &[0.0, 1.0], 1.0, 0.0, 24).unwrap();
        for (n, v) in x.iter().enumerate() {
            assert_eq!(*v != 0.0, n % 3 == 0, "index {n}");
        }
        // S0_{3k} = (−1)^k / Π_{j=1..k} (3j)(3j−1)
        let mut want = 1.0;
        for k in 1..=8 {
            want *= -1.0 / ((3 * k) * (3 * k - 1)) as f64;
            assert!((x[3 * k] - want).abs() < 1e-15 * want.abs().max(1e-300));
        }
    }

    fn zero_spec() -> ProblemSpec {
        ProblemSpec {
            t0: 0.0,
            a: CoefficientModel::explicit(vec![CoefficientEntry::Random(DistributionSpec::point(
                0.0,
            ))]),
            b: CoefficientModel::explicit(vec![CoefficientEntry::Random(DistributionSpec::point(
                0.0,
            ))]),
            y0: DistributionSpec::untruncated(Family::Normal {
                mu: 2.0,
                sigma: 1.0,
            })
            .unwrap(),
            y1: DistributionSpec::point(0.0),
            radius: None,
        }
    }

    #[test]
    fn zero_dynamics_pair() {
        let spec = zero_spec();
        assert!(spec.is_deterministic());
        let p = realize_series_pair(&spec, 6, &mut RngStream::new(1, 0).rng()).unwrap();
        assert_eq!(p.s0, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.s1, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(eval_series(&p, 3.0), (1.0, 3.0));
    }

    #[test]
    fn cosine_pair_evaluates_to_trig() {
        let p = SeriesPair::from_coefficients(0.0, &[], &[1.0], 20).unwrap();
        let (c, s) = p.eval(0.5);
        assert!((c - 0.5f64.cos()).abs() < 1e-12);
        assert!((s - 0.5f64.sin()).abs() < 1e-12);
        let shifted = SeriesPair::from_coefficients(2.0, &[0.1, 0.2], &[1.0, 3.0], 12).unwrap();
        assert_eq!(shifted.eval(2.0), (1.0, 0.0));
    }

    #[test]
    fn nested_draws_extend() {
        let spec = ProblemSpec {
            t0: 0.0,
            a: CoefficientModel::new(
                CoefficientKind::Iid {
                    head: vec![],
                    family: DistributionSpec::untruncated(Family::Beta {
                        alpha: 11.0,
                        beta: 15.0,
                    })
                    .unwrap(),
                },
                None,
                None,
            )
            .unwrap(),
            b: CoefficientModel::new(
                CoefficientKind::Rule {
                    head: vec![CoefficientEntry::Const(0.0)],
                    rule: Expression::parse("1/n^2").unwrap(),
                },
                None,
                None,
            )
            .unwrap(),
            y0: DistributionSpec::untruncated(Family::Normal {
                mu: 0.0,
                sigma: 1.0,
            })
            .unwrap(),
            y1: DistributionSpec::point(0.0),
            radius: Some(1.0),
        };
        let (mut a4, mut b4, mut a6, mut b6) = (vec![], vec![], vec![], vec![]);
        spec.sample_coefficients(4, &mut RngStream::new(3, 1).rng(), &mut a4, &mut b4);
        spec.sample_coefficients(6, &mut RngStream::new(3, 1).rng(), &mut a6, &mut b6);
        assert_eq!(&a6[..4], &a4[..]);
        assert_eq!(b6, vec![0.0, 1.0, 0.25, 1.0 / 9.0, 1.0 / 16.0, 1.0 / 25.0]);
        assert_eq!(spec.random_inputs(6).len(), 5);
    }

    #[test]
    fn advisor_zero_bounds() {
        let (rho, s, r, eps) = (0.5, 1.0, 2.0, 1e-3);
        let adv = advise_truncation(&AdvisorInput {
            bounds_a: &[0.0],
            bounds_b: &[0.0],
            y0_norm: 1.0,
            y1_norm: 0.0,
            r,
            rho,
            s,
            epsilon: eps,
        })
        .unwrap();
        assert_eq!(adv.c_u, 0.0);
        assert_eq!(adv.n, 0);
        assert_eq!(adv.k, 1.0);
        let direct = ((1.0 / (eps * (1.0 - rho / s))).ln() / (s / rho).ln()).ceil() as usize - 1;
        assert_eq!(adv.order, direct);
    }

    #[test]
    fn advisor_rejects_bad_radii() {
        let base = AdvisorInput {
            bounds_a: &[1.0],
            bounds_b: &[1.0],
            y0_norm: 1.0,
            y1_norm: 1.0,
            r: 2.0,
            rho: 0.5,
            s: 1.0,
            epsilon: 1e-3,
        };
        assert!(advise_truncation(&AdvisorInput {
            rho: 1.0,
            ..base.clone()
        })
        .is_err());
        assert!(advise_truncation(&AdvisorInput {
            s: 2.5,
            ..base.clone()
        })
        .is_err());
        assert!(advise_truncation(&AdvisorInput {
            bounds_a: &[],
            ..base.clone()
        })
        .is_err());
        assert!(advise_truncation(&AdvisorInput {
            epsilon: 0.0,
            ..base
        })
        .is_err());
    }

    #[test]
    fn sup_bounds_must_dominate() {
        let e = vec![
            CoefficientEntry::Const(4.0),
            CoefficientEntry::Random(
                DistributionSpec::untruncated(Family::Uniform { a: 0.0, b: 1.0 }).unwrap(),
            ),
        ];
        assert!(CoefficientModel::new(
            CoefficientKind::Explicit(e.clone()),
            None,
            Some(vec![4.0, 0.5])
        )
        .is_err());
        let m = CoefficientModel::new(CoefficientKind::Explicit(e), Some(1), Some(vec![4.0, 1.0]))
            .unwrap();
        assert_eq!(m.advisor_bounds(5).unwrap(), vec![4.0, 1.0]);
        assert!(CoefficientModel::new(
            CoefficientKind::Explicit(vec![CoefficientEntry::Const(1.0); 3]),
            Some(1),
            None
        )
        .is_err());
    }
}
