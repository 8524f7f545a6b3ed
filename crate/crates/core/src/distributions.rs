//! Univariate laws: seeded sampling, densities and raw moments.
//!
//! Every law may be restricted to an interval `[lo, hi]`; the restricted
//! density is the base density divided by the probability the base law puts
//! on the interval.

use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::Distribution as _;
use serde::{Deserialize, Serialize};
use statrs::function::{beta as sbeta, erf, gamma as sgamma};

use crate::error::{spec_err, Error, Result};
use crate::expr::Expression;
use crate::quad::{integrate, QuadOptions};
use crate::rng::RngStream;

/// Knots of the tabulated inverse CDF used to sample user-defined densities.
pub const CUSTOM_CDF_KNOTS: usize = 100_000;

/// Below this contained probability, truncated laws are sampled by inverse CDF
/// instead of rejection from the base law.
const REJECTION_MIN_MASS: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Uniform {
        a: f64,
        b: f64,
    },
    Normal {
        mu: f64,
        sigma: f64,
    },
    /// `rate` is the inverse scale: density `∝ y^(shape-1) e^(-rate y)`.
    Gamma {
        shape: f64,
        rate: f64,
    },
    Beta {
        alpha: f64,
        beta: f64,
    },
    Exponential {
        rate: f64,
    },
    Bernoulli {
        p: f64,
    },
    Poisson {
        lambda: f64,
    },
    PointMass {
        c: f64,
    },
    /// Unnormalised density given as an expression in one variable; it is
    /// normalised numerically over its support.
    Custom {
        density: Expression,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Uniform { .. } => "uniform",
            Family::Normal { .. } => "normal",
            Family::Gamma { .. } => "gamma",
            Family::Beta { .. } => "beta",
            Family::Exponential { .. } => "exponential",
            Family::Bernoulli { .. } => "bernoulli",
            Family::Poisson { .. } => "poisson",
            Family::PointMass { .. } => "point_mass",
            Family::Custom { .. } => "custom",
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            Family::Uniform { a, b } => vec![a, b],
            Family::Normal { mu, sigma } => vec![mu, sigma],
            Family::Gamma { shape, rate } => vec![shape, rate],
            Family::Beta { alpha, beta } => vec![alpha, beta],
            Family::Exponential { rate } => vec![rate],
            Family::Bernoulli { p } => vec![p],
            Family::Poisson { lambda } => vec![lambda],
            Family::PointMass { c } => vec![c],
            Family::Custom { .. } => vec![],
        }
    }

    fn is_continuous(&self) -> bool {
        !matches!(
            self,
            Family::Bernoulli { .. } | Family::Poisson { .. } | Family::PointMass { .. }
        )
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Family::Uniform { a, b } => a.is_finite() && b.is_finite() && a < b,
            Family::Normal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
            Family::Gamma { shape, rate } => {
                shape.is_finite() && rate.is_finite() && shape > 0.0 && rate > 0.0
            }
            Family::Beta { alpha, beta } => {
                alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0
            }
            Family::Exponential { rate } => rate.is_finite() && rate > 0.0,
            Family::Bernoulli { p } => (0.0..=1.0).contains(&p),
            Family::Poisson { lambda } => lambda.is_finite() && lambda > 0.0,
            Family::PointMass { c } => c.is_finite(),
            Family::Custom { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            spec_err(format!(
                "invalid parameters {:?} for the {} law",
                self.params(),
                self.name()
            ))
        }
    }

    /// Support of the untruncated law.
    fn base_support(&self) -> (f64, f64) {
        match *self {
            Family::Uniform { a, b } => (a, b),
            Family::Gamma { .. } | Family::Exponential { .. } | Family::Poisson { .. } => {
                (0.0, f64::INFINITY)
            }
            Family::Beta { .. } | Family::Bernoulli { .. } => (0.0, 1.0),
            Family::PointMass { c } => (c, c),
            Family::Normal { .. } | Family::Custom { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Base density for the standard continuous families; `None` for custom
    /// and discrete laws.
    fn base_pdf(&self, y: f64) -> f64 {
        match *self {
            Family::Uniform { a, b } => {
                if (a..=b).contains(&y) {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Family::Normal { mu, sigma } => {
                let z = (y - mu) / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
            }
            Family::Gamma { shape, rate } => {
                if y < 0.0 {
                    0.0
                } else if y == 0.0 {
                    match shape.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => rate,
                        _ => 0.0,
                    }
                } else {
                    (shape * rate.ln() + (shape - 1.0) * y.ln()
                        - rate * y
                        - sgamma::ln_gamma(shape))
                    .exp()
                }
            }
            Family::Beta { alpha, beta } => {
                if !(0.0..=1.0).contains(&y) {
                    0.0
                } else if y == 0.0 || y == 1.0 {
                    let e = if y == 0.0 { alpha } else { beta };
                    match e.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => (-sbeta::ln_beta(alpha, beta)).exp(),
                        _ => 0.0,
                    }
                } else {
                    ((alpha - 1.0) * y.ln() + (beta - 1.0) * (-y).ln_1p()
                        - sbeta::ln_beta(alpha, beta))
                    .exp()
                }
            }
            Family::Exponential { rate } => {
                if y < 0.0 {
                    0.0
                } else {
                    rate * (-rate * y).exp()
                }
            }
            Family::Custom { ref density } => density.eval(y),
            _ => 0.0,
        }
    }

    fn base_cdf(&self, y: f64) -> Option<f64> {
        Some(match *self {
            Family::Uniform { a, b } => ((y - a) / (b - a)).clamp(0.0, 1.0),
            Family::Normal { mu, sigma } => 0.5 * erf::erfc(-(y - mu) / (sigma * SQRT_2)),
            Family::Gamma { shape, rate } => {
                if y <= 0.0 {
                    0.0
                } else if y.is_infinite() {
                    1.0
                } else {
                    sgamma::gamma_lr(shape, rate * y)
                }
            }
            Family::Beta { alpha, beta } => {
                if y <= 0.0 {
                    0.0
                } else if y >= 1.0 {
                    1.0
                } else {
                    sbeta::beta_reg(alpha, beta, y)
                }
            }
            Family::Exponential { rate } => {
                if y <= 0.0 {
                    0.0
                } else {
                    -(-rate * y).exp_m1()
                }
            }
            _ => return None,
        })
    }

    fn base_quantile(&self, p: f64) -> Option<f64> {
        Some(match *self {
            Family::Uniform { a, b } => a + p * (b - a),
            Family::Normal { mu, sigma } => mu + sigma * SQRT_2 * erf::erf_inv(2.0 * p - 1.0),
            Family::Exponential { rate } => -(-p).ln_1p() / rate,
            _ => return None,
        })
    }

    fn base_pmf(&self, k: f64) -> f64 {
        match *self {
            Family::Bernoulli { p } => {
                if k == 1.0 {
                    p
                } else if k == 0.0 {
                    1.0 - p
                } else {
                    0.0
                }
            }
            Family::Poisson { lambda } => {
                if k < 0.0 || k.fract() != 0.0 {
                    0.0
                } else {
                    (k * lambda.ln() - lambda - sgamma::ln_gamma(k + 1.0)).exp()
                }
            }
            Family::PointMass { c } => {
                if k == c {
                    1.0
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }

    /// Closed-form raw moment of the untruncated law.
    fn base_raw_moment(&self, k: u32) -> Option<f64> {
        if k == 0 {
            return Some(1.0);
        }
        Some(match *self {
            Family::Uniform { a, b } => {
                let k1 = (k + 1) as i32;
                (b.powi(k1) - a.powi(k1)) / ((k + 1) as f64 * (b - a))
            }
            Family::Normal { mu, sigma } => {
                // m_j = mu m_{j-1} + (j-1) sigma^2 m_{j-2}
                let (mut prev, mut cur) = (1.0, mu);
                for j in 2..=k {
                    let next = mu * cur + (j - 1) as f64 * sigma * sigma * prev;
                    prev = cur;
                    cur = next;
                }
                cur
            }
            Family::Gamma { shape, rate } => (0..k).map(|i| (shape + i as f64) / rate).product(),
            Family::Beta { alpha, beta } => (0..k)
                .map(|i| (alpha + i as f64) / (alpha + beta + i as f64))
                .product(),
            Family::Exponential { rate } => (1..=k).map(|i| i as f64 / rate).product(),
            Family::Bernoulli { p } => p,
            Family::Poisson { lambda } => touchard(k, lambda),
            Family::PointMass { c } => c.powi(k as i32),
            Family::Custom { .. } => return None,
        })
    }
}

/// Touchard polynomial `T_k(λ) = Σ_j S(k, j) λ^j`, the k-th raw moment of Poisson(λ).
pub fn touchard(k: u32, lambda: f64) -> f64 {
    let k = k as usize;
    // row of Stirling numbers of the second kind
    let mut row = vec![0.0f64; k + 1];
    row[0] = 1.0;
    for n in 1..=k {
        for j in (1..=n).rev() {
            row[j] = j as f64 * row[j] + row[j - 1];
        }
        row[0] = 0.0;
    }
    row.iter().rev().fold(0.0, |acc, s| acc * lambda + s)
}

#[derive(Debug)]
struct CustomTable {
    knots: Vec<f64>,
    cdf: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Sampler {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Normal(rand_distr::Normal<f64>),
    Gamma(rand_distr::Gamma<f64>),
    Beta(rand_distr::Beta<f64>),
    Exponential(rand_distr::Exp<f64>),
    Bernoulli(f64),
    Poisson(rand_distr::Poisson<f64>),
    Point(f64),
    /// values with their cumulative probabilities (last entry is 1)
    Table(Arc<Vec<(f64, f64)>>),
    /// inverse CDF restricted to `[F(lo), F(hi)]`
    InverseCdf {
        p_lo: f64,
        p_hi: f64,
    },
    /// bisection on the base CDF restricted to `[F(lo), F(hi)]`
    CdfBisection {
        p_lo: f64,
        p_hi: f64,
    },
    Custom(Arc<OnceLock<CustomTable>>),
}

/// A validated univariate law, optionally truncated to `[lo, hi]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct DistributionSpec {
    family: Family,
    truncation: Option<(f64, f64)>,
    /// effective support after truncation
    support: (f64, f64),
    /// probability the base law assigns to the support (normalising constant
    /// of the custom density)
    mass: f64,
    sampler: Sampler,
}

impl PartialEq for DistributionSpec {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family && self.truncation == other.truncation
    }
}

impl DistributionSpec {
    pub fn new(family: Family, truncation: Option<(f64, f64)>) -> Result<Self> {
        family.validate()?;
        let base = family.base_support();
        let support = match truncation {
            None => base,
            Some((lo, hi)) => {
                if lo.is_nan() || hi.is_nan() || lo >= hi {
                    return spec_err(format!(
                        "truncation interval [{lo}, {hi}] must satisfy lo < hi"
                    ));
                }
                (lo.max(base.0), hi.min(base.1))
            }
        };
        if support.0 > support.1 {
            return spec_err(format!(
                "truncation {:?} does not meet the support of the {} law",
                truncation,
                family.name()
            ));
        }

        let (mass, sampler) = match &family {
            Family::PointMass { c } => (1.0, Sampler::Point(*c)),
            Family::Bernoulli { .. } | Family::Poisson { .. } if truncation.is_some() => {
                let table = discrete_table(&family, support)?;
                let mass = table.1;
                (mass, Sampler::Table(Arc::new(table.0)))
            }
            Family::Bernoulli { p } => (1.0, Sampler::Bernoulli(*p)),
            Family::Poisson { lambda } => (
                1.0,
                Sampler::Poisson(
                    rand_distr::Poisson::new(*lambda).map_err(|e| Error::Spec(e.to_string()))?,
                ),
            ),
            Family::Custom { density } => {
                let z = integrate(
                    |y| density.eval(y),
                    support.0,
                    support.1,
                    QuadOptions::default(),
                )?;
                if !(z.is_finite() && z > 0.0) {
                    return spec_err(format!(
                        "custom density `{density}` has non-positive or infinite integral {z}"
                    ));
                }
                (z, Sampler::Custom(Arc::new(OnceLock::new())))
            }
            Family::Uniform { .. } if truncation.is_some() => (
                (support.1 - support.0) / (base.1 - base.0),
                Sampler::Uniform {
                    lo: support.0,
                    hi: support.1,
                },
            ),
            cont => {
                let (p_lo, p_hi) = (
                    cont.base_cdf(support.0).expect("standard family"),
                    cont.base_cdf(support.1).expect("standard family"),
                );
                let mass = if truncation.is_some() {
                    p_hi - p_lo
                } else {
                    1.0
                };
                if !(mass > 0.0) {
                    return spec_err(format!(
                        "truncation {:?} holds no probability of the {} law",
                        truncation,
                        cont.name()
                    ));
                }
                let sampler = if truncation.is_some() && mass < REJECTION_MIN_MASS {
                    if cont.base_quantile(0.5).is_some() {
                        Sampler::InverseCdf { p_lo, p_hi }
                    } else {
                        Sampler::CdfBisection { p_lo, p_hi }
                    }
                } else {
                    direct_sampler(cont)?
                };
                (mass, sampler)
            }
        };

        Ok(DistributionSpec {
            family,
            truncation,
            support,
            mass,
            sampler,
        })
    }

    pub fn untruncated(family: Family) -> Result<Self> {
        Self::new(family, None)
    }

    pub fn point(c: f64) -> Self {
        Self::new(Family::PointMass { c }, None).expect("finite point mass")
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn truncation(&self) -> Option<(f64, f64)> {
        self.truncation
    }

    /// Support after truncation.
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Probability the base law assigns to the truncation interval.
    pub fn contained_mass(&self) -> f64 {
        match self.family {
            Family::Custom { .. } => 1.0,
            _ => self.mass,
        }
    }

    pub fn is_continuous(&self) -> bool {
        self.family.is_continuous()
    }

    pub fn is_bounded(&self) -> bool {
        self.support.0.is_finite() && self.support.1.is_finite()
    }

    /// Degenerate law with all mass at one point.
    pub fn as_point_mass(&self) -> Option<f64> {
        match self.family {
            Family::PointMass { c } => Some(c),
            Family::Bernoulli { p } if self.truncation.is_none() && (p == 0.0 || p == 1.0) => {
                Some(p)
            }
            _ => None,
        }
    }

    /// Essential supremum of `|Z|`.
    pub fn sup_abs(&self) -> f64 {
        self.support.0.abs().max(self.support.1.abs())
    }

    /// Draws one value.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.sampler {
            Sampler::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Sampler::Point(c) => *c,
            Sampler::Bernoulli(p) => f64::from(u8::from(rng.random::<f64>() < *p)),
            Sampler::Table(table) => {
                let u: f64 = rng.random();
                let idx = table.partition_point(|&(_, c)| c <= u).min(table.len() - 1);
                table[idx].0
            }
            Sampler::InverseCdf { p_lo, p_hi } => {
                let u = p_lo + (p_hi - p_lo) * rng.random::<f64>();
                self.family
                    .base_quantile(u)
                    .expect("inverse CDF sampler on family with quantile")
                    .clamp(self.support.0, self.support.1)
            }
            Sampler::CdfBisection { p_lo, p_hi } => {
                let u = p_lo + (p_hi - p_lo) * rng.random::<f64>();
                let (mut lo, mut hi) = self.support;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.family.base_cdf(mid).expect("cdf") < u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
            Sampler::Custom(cell) => {
                let table = cell.get_or_init(|| self.build_custom_table());
                let u: f64 = rng.random();
                let i = table
                    .cdf
                    .partition_point(|&c| c <= u)
                    .clamp(1, table.cdf.len() - 1);
                let (c0, c1) = (table.cdf[i - 1], table.cdf[i]);
                let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
                table.knots[i - 1] + w * (table.knots[i] - table.knots[i - 1])
            }
            direct => loop {
                let y = match direct {
                    Sampler::Normal(d) => d.sample(rng),
                    Sampler::Gamma(d) => d.sample(rng),
                    Sampler::Beta(d) => d.sample(rng),
                    Sampler::Exponential(d) => d.sample(rng),
                    Sampler::Poisson(d) => d.sample(rng),
                    _ => unreachable!("handled above"),
                };
                if self.truncation.is_none() || (self.support.0..=self.support.1).contains(&y) {
                    break y;
                }
            },
        }
    }

    /// Draws one value from a seeded stream, starting at the stream origin.
    pub fn sample_stream(&self, stream: &RngStream) -> f64 {
        self.sample(&mut stream.rng())
    }

    fn build_custom_table(&self) -> CustomTable {
        let n = CUSTOM_CDF_KNOTS;
        let (lo, hi) = self.support;
        let knots: Vec<f64> = if lo.is_finite() && hi.is_finite() {
            (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()
        } else {
            // y = tan(u) spreads knots over the whole line
            let (ulo, uhi) = (lo.atan(), hi.atan());
            let eps = 1e-9;
            (0..n)
                .map(|i| {
                    let u = (ulo + eps) + (uhi - ulo - 2.0 * eps) * i as f64 / (n - 1) as f64;
                    u.tan()
                })
                .collect()
        };
        let mut cdf = Vec::with_capacity(n);
        cdf.push(0.0);
        let mut prev = self.pdf(knots[0]);
        for w in knots.windows(2) {
            let cur = self.pdf(w[1]);
            let last = *cdf.last().unwrap();
            cdf.push(last + 0.5 * (prev + cur) * (w[1] - w[0]));
            prev = cur;
        }
        let total = *cdf.last().unwrap();
        for c in &mut cdf {
            *c /= total;
        }
        CustomTable { knots, cdf }
    }

    /// Density at `y`; zero outside the (truncated) support. No check that the
    /// law is continuous; use [`DistributionSpec::density`] for the checked form.
    #[inline]
    pub fn pdf(&self, y: f64) -> f64 {
        if y < self.support.0 || y > self.support.1 {
            return 0.0;
        }
        self.family.base_pdf(y) / self.mass
    }

    /// Density at `y`; errors on discrete laws.
    pub fn density(&self, y: f64) -> Result<f64> {
        if !self.is_continuous() {
            return Err(Error::Unsupported(format!(
                "the {} law has no density",
                self.family.name()
            )));
        }
        Ok(self.pdf(y))
    }

    /// Probability mass at `k` for discrete laws (after truncation).
    pub fn pmf(&self, k: f64) -> Result<f64> {
        if self.is_continuous() {
            return Err(Error::Unsupported(format!(
                "the {} law has no probability mass function",
                self.family.name()
            )));
        }
        if k < self.support.0 || k > self.support.1 {
            return Ok(0.0);
        }
        Ok(self.family.base_pmf(k) / self.mass)
    }

    /// Atoms `(value, probability)` of a discrete law, cut where the remaining
    /// tail mass is below `tail`.
    pub fn atoms(&self, tail: f64) -> Result<Vec<(f64, f64)>> {
        match self.family {
            Family::PointMass { c } => Ok(vec![(c, 1.0)]),
            Family::Bernoulli { .. } => [0.0, 1.0]
                .iter()
                .map(|&k| self.pmf(k).map(|p| (k, p)))
                .filter(|r| !matches!(r, Ok((_, p)) if *p == 0.0))
                .collect(),
            Family::Poisson { .. } => {
                let mut out = Vec::new();
                let mut acc = 0.0;
                let mut k = self.support.0.max(0.0).ceil();
                while k <= self.support.1 && acc < 1.0 - tail {
                    let p = self.pmf(k)?;
                    acc += p;
                    out.push((k, p));
                    k += 1.0;
                    if out.len() > 10_000_000 {
                        break;
                    }
                }
                Ok(out)
            }
            _ => Err(Error::Unsupported(format!(
                "the {} law has no atoms",
                self.family.name()
            ))),
        }
    }

    /// `E[Z^k]`.
    pub fn raw_moment(&self, k: i32) -> Result<f64> {
        if k < 0 {
            return spec_err(format!("moment order must be nonnegative, got {k}"));
        }
        let ku = k as u32;
        if ku == 0 {
            return Ok(1.0);
        }
        if self.truncation.is_none() {
            if let Some(m) = self.family.base_raw_moment(ku) {
                return Ok(m);
            }
        }
        match self.family {
            Family::PointMass { c } => Ok(c.powi(k)),
            Family::Uniform { .. } => {
                let (a, b) = self.support;
                Ok(Family::Uniform { a, b }
                    .base_raw_moment(ku)
                    .expect("uniform moments are closed form"))
            }
            Family::Bernoulli { .. } | Family::Poisson { .. } => {
                let atoms = self.atoms(0.0)?;
                Ok(atoms.iter().map(|&(v, p)| p * v.powi(k)).sum())
            }
            _ => {
                let opts = QuadOptions {
                    abs_tol: 0.0,
                    rel_tol: 1e-10,
                    max_segments: 4000,
                };
                let (lo, hi) = self.support;
                // integrate on either side of the origin so odd moments of
                // symmetric laws do not stall on cancellation
                let integrand = |y: f64| y.powi(k) * self.pdf(y);
                let value = if lo < 0.0 && hi > 0.0 {
                    integrate(integrand, lo, 0.0, opts)? + integrate(integrand, 0.0, hi, opts)?
                } else {
                    integrate(integrand, lo, hi, opts)?
                };
                if value.is_finite() {
                    Ok(value)
                } else {
                    Err(Error::Numerical(format!(
                        "moment {k} of the {} law is not finite",
                        self.family.name()
                    )))
                }
            }
        }
    }

    pub fn mean(&self) -> Result<f64> {
        self.raw_moment(1)
    }

    pub fn variance(&self) -> Result<f64> {
        let m1 = self.raw_moment(1)?;
        Ok((self.raw_moment(2)? - m1 * m1).max(0.0))
    }

    /// `‖Z‖₂ = sqrt(E[Z²])`.
    pub fn l2_norm(&self) -> Result<f64> {
        Ok(self.raw_moment(2)?.sqrt())
    }
}

fn direct_sampler(family: &Family) -> Result<Sampler> {
    let wrap = |e: &dyn std::fmt::Display| Error::Spec(e.to_string());
    Ok(match *family {
        Family::Uniform { a, b } => Sampler::Uniform { lo: a, hi: b },
        Family::Normal { mu, sigma } => {
            Sampler::Normal(rand_distr::Normal::new(mu, sigma).map_err(|e| wrap(&e))?)
        }
        Family::Gamma { shape, rate } => {
            Sampler::Gamma(rand_distr::Gamma::new(shape, 1.0 / rate).map_err(|e| wrap(&e))?)
        }
        Family::Beta { alpha, beta } => {
            Sampler::Beta(rand_distr::Beta::new(alpha, beta).map_err(|e| wrap(&e))?)
        }
        Family::Exponential { rate } => {
            Sampler::Exponential(rand_distr::Exp::new(rate).map_err(|e| wrap(&e))?)
        }
        _ => unreachable!("direct sampler requested for {}", family.name()),
    })
}

/// Cumulative table of a truncated discrete law; returns the table and the
/// contained probability.
fn discrete_table(family: &Family, support: (f64, f64)) -> Result<(Vec<(f64, f64)>, f64)> {
    let (lo, hi) = (support.0.max(0.0).ceil(), support.1.floor());
    let upper = match *family {
        Family::Poisson { lambda } => hi.min((lambda + 40.0 * lambda.sqrt() + 40.0).ceil()),
        _ => hi.min(1.0),
    };
    let mut values = Vec::new();
    let mut k = lo;
    while k <= upper {
        let p = family.base_pmf(k);
        if p > 0.0 {
            values.push((k, p));
        }
        k += 1.0;
    }
    let mass: f64 = values.iter().map(|v| v.1).sum();
    if !(mass > 0.0) {
        return spec_err(format!(
            "truncation [{}, {}] holds no probability of the {} law",
            support.0,
            support.1,
            family.name()
        ));
    }
    let mut acc = 0.0;
    let table = values
        .into_iter()
        .map(|(v, p)| {
            acc += p / mass;
            (v, acc)
        })
        .collect::<Vec<_>>();
    let mut table = table;
    if let Some(last) = table.last_mut() {
        last.1 = 1.0;
    }
    Ok((table, mass))
}

/// Serialized form: `{family, params, truncate?, density?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDistribution {
    pub family: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncate: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Expression>,
}

impl TryFrom<RawDistribution> for DistributionSpec {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        let p = &raw.params;
        let want = |n: usize| -> Result<()> {
            if p.len() == n {
                Ok(())
            } else {
                spec_err(format!(
                    "the {} law takes {n} parameter(s), got {}",
                    raw.family,
                    p.len()
                ))
            }
        };
        let family = match raw.family.to_ascii_lowercase().as_str() {
            "uniform" => want(2).map(|_| Family::Uniform { a: p[0], b: p[1] })?,
            "normal" | "gaussian" => want(2).map(|_| Family::Normal {
                mu: p[0],
                sigma: p[1],
            })?,
            "gamma" => want(2).map(|_| Family::Gamma {
                shape: p[0],
                rate: p[1],
            })?,
            "beta" => want(2).map(|_| Family::Beta {
                alpha: p[0],
                beta: p[1],
            })?,
            "exponential" => want(1).map(|_| Family::Exponential { rate: p[0] })?,
            "bernoulli" => want(1).map(|_| Family::Bernoulli { p: p[0] })?,
            "poisson" => want(1).map(|_| Family::Poisson { lambda: p[0] })?,
            "point_mass" | "point" | "constant" => {
                want(1).map(|_| Family::PointMass { c: p[0] })?
            }
            "custom" => {
                want(0)?;
                let density = raw
                    .density
                    .clone()
                    .ok_or_else(|| Error::Spec("custom law needs a `density` expression".into()))?;
                Family::Custom { density }
            }
            other => return spec_err(format!("unknown distribution family `{other}`")),
        };
        if raw.density.is_some() && !matches!(family, Family::Custom { .. }) {
            return spec_err("`density` is only allowed for the custom family");
        }
        DistributionSpec::new(family, raw.truncate.map(|[lo, hi]| (lo, hi)))
    }
}

impl From<DistributionSpec> for RawDistribution {
    fn from(d: DistributionSpec) -> Self {
        let density = match &d.family {
            Family::Custom { density } => Some(density.clone()),
            _ => None,
        };
        RawDistribution {
            family: d.family.name().to_string(),
            params: d.family.params(),
            truncate: d.truncation.map(|(lo, hi)| [lo, hi]),
            density,
        }
    }
}

/// Draws the first value of the stream `rng` from `dist`.
pub fn sample(dist: &DistributionSpec, rng: &RngStream) -> f64 {
    dist.sample_stream(rng)
}

/// Density of a continuous (possibly truncated) law.
pub fn density(dist: &DistributionSpec, y: f64) -> Result<f64> {
    dist.density(y)
}

/// Raw moment `E[Z^k]`.
pub fn raw_moment(dist: &DistributionSpec, k: i32) -> Result<f64> {
    dist.raw_moment(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    fn gamma22_trunc() -> DistributionSpec {
        DistributionSpec::new(
            Family::Gamma {
                shape: 2.0,
                rate: 2.0,
            },
            Some((0.0, 4.0)),
        )
        .unwrap()
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(DistributionSpec::untruncated(Family::Normal {
            mu: 0.0,
            sigma: 0.0
        })
        .is_err());
        assert!(DistributionSpec::untruncated(Family::Uniform { a: 1.0, b: 1.0 }).is_err());
        assert!(DistributionSpec::untruncated(Family::Bernoulli { p: 1.5 }).is_err());
        assert!(DistributionSpec::untruncated(Family::Gamma {
            shape: 2.0,
            rate: -1.0
        })
        .is_err());
        assert!(DistributionSpec::new(
            Family::Normal {
                mu: 0.0,
                sigma: 1.0
            },
            Some((1.0, 0.0))
        )
        .is_err());
        assert!(DistributionSpec::new(
            Family::Gamma {
                shape: 2.0,
                rate: 1.0
            },
            Some((-3.0, -1.0))
        )
        .is_err());
    }

    #[test]
    fn point_mass_is_constant() {
        let d = DistributionSpec::point(4.0);
        let mut rng = RngStream::new(1, 0).rng();
        assert!((0..100).all(|_| d.sample(&mut rng) == 4.0));
        assert_eq!(d.variance().unwrap(), 0.0);
        assert_eq!(d.raw_moment(3).unwrap(), 64.0);
    }

    #[test]
    fn custom_density_at_zero() {
        let d: DistributionSpec = RawDistribution {
            family: "custom".into(),
            params: vec![],
            truncate: None,
            density: Some(Expression::parse("sqrt(2)/(pi*(1+y^4))").unwrap()),
        }
        .try_into()
        .unwrap();
        assert!((d.density(0.0).unwrap() - 0.450_158_158_078_553).abs() < 1e-9);
    }

    #[test]
    fn gamma_truncation_mass() {
        let d = gamma22_trunc();
        assert!((d.contained_mass() - (1.0 - 9.0 * (-8.0f64).exp())).abs() < 1e-12);
        assert!((d.contained_mass() - 0.997).abs() < 5e-4);
        assert_eq!(d.pdf(4.5), 0.0);
        assert_eq!(d.pdf(-0.1), 0.0);
    }

    #[test]
    fn uniform_density_values() {
        let d = DistributionSpec::untruncated(Family::Uniform { a: -1.0, b: 1.0 }).unwrap();
        assert_eq!(d.density(0.5).unwrap(), 0.5);
        assert_eq!(d.density(1.5).unwrap(), 0.0);
    }

    #[test]
    fn discrete_density_unsupported() {
        let d = DistributionSpec::untruncated(Family::Poisson { lambda: 2.0 }).unwrap();
        assert!(matches!(d.density(1.0), Err(Error::Unsupported(_))));
        assert!((d.pmf(2.0).unwrap() - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn closed_form_moments() {
        let beta = DistributionSpec::untruncated(Family::Beta {
            alpha: 11.0,
            beta: 15.0,
        })
        .unwrap();
        assert!((beta.raw_moment(1).unwrap() - 11.0 / 26.0).abs() < 1e-15);
        let u = DistributionSpec::untruncated(Family::Uniform { a: 0.0, b: 1.0 }).unwrap();
        assert!((u.raw_moment(2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let n = DistributionSpec::untruncated(Family::Normal {
            mu: 2.0,
            sigma: 1.0,
        })
        .unwrap();
        // E[Z^4] = mu^4 + 6 mu^2 sigma^2 + 3 sigma^4
        assert!((n.raw_moment(4).unwrap() - (16.0 + 24.0 + 3.0)).abs() < 1e-12);
        let p = DistributionSpec::untruncated(Family::Poisson { lambda: 2.0 }).unwrap();
        // E[Z^3] = λ^3 + 3λ^2 + λ
        assert!((p.raw_moment(3).unwrap() - (8.0 + 12.0 + 2.0)).abs() < 1e-12);
        let e = DistributionSpec::untruncated(Family::Exponential { rate: 2.0 }).unwrap();
        assert!((e.raw_moment(3).unwrap() - 6.0 / 8.0).abs() < 1e-15);
        assert!(matches!(u.raw_moment(-1), Err(Error::Spec(_))));
    }

    #[test]
    fn truncated_gamma_mean_matches_simpson() {
        let d = gamma22_trunc();
        let base = |y: f64| 4.0 * y * (-2.0 * y).exp();
        let z = simpson(base, 0.0, 4.0, 20_000);
        let oracle = simpson(|y| y * base(y), 0.0, 4.0, 20_000) / z;
        assert!((d.raw_moment(1).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn densities_integrate_to_one() {
        let laws = [
            DistributionSpec::untruncated(Family::Normal {
                mu: 2.0,
                sigma: 1.0,
            })
            .unwrap(),
            gamma22_trunc(),
            DistributionSpec::untruncated(Family::Beta {
                alpha: 11.0,
                beta: 15.0,
            })
            .unwrap(),
            DistributionSpec::untruncated(Family::Exponential { rate: 2.0 }).unwrap(),
            DistributionSpec::new(
                Family::Normal {
                    mu: 0.0,
                    sigma: 1.0,
                },
                Some((3.0, 5.0)),
            )
            .unwrap(),
            DistributionSpec::untruncated(Family::Uniform { a: -1.0, b: 1.0 }).unwrap(),
        ];
        for d in &laws {
            let (lo, hi) = d.support();
            let v = integrate(|y| d.pdf(y), lo, hi, QuadOptions::default()).unwrap();
            assert!((v - 1.0).abs() < 1e-8, "{:?}: {v}", d.family());
        }
    }

    #[test]
    fn truncated_poisson_sums_to_one() {
        let d = DistributionSpec::new(Family::Poisson { lambda: 2.0 }, Some((1.0, 4.0))).unwrap();
        let total: f64 = (0..10).map(|k| d.pmf(k as f64).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-14);
        let mut rng = RngStream::new(3, 0).rng();
        for _ in 0..1000 {
            let v = d.sample(&mut rng);
            assert!((1.0..=4.0).contains(&v));
        }
    }

    #[test]
    fn narrow_truncations_use_inverse_cdf() {
        let n = DistributionSpec::new(
            Family::Normal {
                mu: 0.0,
                sigma: 1.0,
            },
            Some((3.0, 3.5)),
        )
        .unwrap();
        let g = DistributionSpec::new(
            Family::Gamma {
                shape: 2.0,
                rate: 2.0,
            },
            Some((5.0, 6.0)),
        )
        .unwrap();
        let mut rng = RngStream::new(5, 0).rng();
        for _ in 0..1000 {
            assert!((3.0..=3.5).contains(&n.sample(&mut rng)));
            assert!((5.0..=6.0).contains(&g.sample(&mut rng)));
        }
    }

    #[test]
    fn truncated_moments_stay_in_range() {
        let d = gamma22_trunc();
        for k in 1..6 {
            let m = d.raw_moment(k).unwrap();
            assert!(m >= 0.0 && m <= 4f64.powi(k));
        }
    }

    #[test]
    fn custom_sampling_matches_density() {
        let d: DistributionSpec = RawDistribution {
            family: "custom".into(),
            params: vec![],
            truncate: Some([0.0, 2.0]),
            density: Some(Expression::parse("y").unwrap()),
        }
        .try_into()
        .unwrap();
        // density y/2 on [0, 2]: mean 4/3
        let mut rng = RngStream::new(9, 0).rng();
        let n = 200_000;
        let mean = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        let sd = (2.0f64 - 16.0 / 9.0).sqrt();
        assert!((mean - 4.0 / 3.0).abs() < 4.0 * sd / (n as f64).sqrt());
        assert!((d.raw_moment(1).unwrap() - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn serde_shape() {
        let raw = RawDistribution::from(gamma22_trunc());
        assert_eq!(raw.family, "gamma");
        assert_eq!(raw.params, vec![2.0, 2.0]);
        assert_eq!(raw.truncate, Some([0.0, 4.0]));
        let back = DistributionSpec::try_from(raw).unwrap();
        assert_eq!(back, gamma22_trunc());
    }
}
