//! Density of `X^N(t) = Y0·S0^N(t) + Y1·S1^N(t)` by conditioning on everything
//! except one initial condition:
//!
//! ```text
//! f(x) = E[ f_{Y0}((x − Y1·S1)/S0) / |S0| ]      (via Y0)
//! f(x) = E[ f_{Y1}((x − Y0·S0)/S1) / |S1| ]      (via Y1, t ≠ t0)
//! ```
//!
//! Both expectations are estimated by Monte Carlo, optionally with the
//! truncated series `S^{N0}(t)` as a control variate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::error::{spec_err, Error, Result};
use crate::poly::{mean_and_variance, symbolic_series, DEFAULT_TERM_BUDGET};
use crate::quad::{integrate, QuadOptions};
use crate::rng::{RngStream, StreamRng};
use crate::series::{horner, ProblemSpec, SeriesPair, Which};

/// Samples per parallel chunk; chunks are merged in index order, so results
/// do not depend on the number of threads.
pub const CHUNK_SIZE: usize = 1024;

/// Moments of `S^{N0}(t)` fall back to this many Monte Carlo samples when the
/// symbolic expansion exceeds its term budget.
pub const FALLBACK_MOMENT_SAMPLES: usize = 100_000;

/// Sub-stream purposes derived from the master seed.
pub mod purpose {
    pub const MAIN: u64 = 1;
    pub const PILOT: u64 = 2;
    pub const GRID: u64 = 3;
    pub const MOMENTS: u64 = 4;
}

/// Which initial condition's density appears in the expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    ViaY0,
    ViaY1,
}

impl Role {
    /// `ViaY0` when `Y0` has a density, else `ViaY1`.
    pub fn default_for(spec: &ProblemSpec) -> Role {
        if spec.y0.is_continuous() {
            Role::ViaY0
        } else {
            Role::ViaY1
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::ViaY0 => "via_y0",
            Role::ViaY1 => "via_y1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Crude,
    ControlVariates {
        which: Which,
        n0: usize,
        pilot_m: usize,
    },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Crude => "crude",
            Method::ControlVariates { .. } => "control_variates",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Truncation order `N`.
    pub order: usize,
    /// Sample count `M`.
    pub samples: usize,
    pub role: Role,
    pub method: Method,
    pub seed: u64,
    /// Worker threads; `0` uses the global pool. Never changes the values.
    pub threads: usize,
    /// Samples whose denominator is below this in absolute value are counted as degenerate.
    pub degenerate_denominator_threshold: f64,
    /// Warn when the degenerate fraction exceeds this.
    pub degenerate_fraction_warn: f64,
    /// Draw fresh inputs for every order instead of sharing them across orders.
    pub independent_streams: bool,
    /// Term budget of the symbolic control-variate moments.
    pub term_budget: usize,
}

impl EstimatorConfig {
    pub fn new(order: usize, samples: usize, role: Role, seed: u64) -> Self {
        EstimatorConfig {
            order,
            samples,
            role,
            method: Method::Crude,
            seed,
            threads: 0,
            degenerate_denominator_threshold: 1e-3,
            degenerate_fraction_warn: 1e-4,
            independent_streams: false,
            term_budget: DEFAULT_TERM_BUDGET,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return spec_err(format!(
                "truncation order must be at least 1, got {}",
                self.order
            ));
        }
        if self.samples < 1 {
            return spec_err("sample count must be at least 1");
        }
        if !(self.degenerate_denominator_threshold >= 0.0)
            || !(self.degenerate_fraction_warn >= 0.0)
        {
            return spec_err("degeneracy thresholds must be nonnegative");
        }
        if let Method::ControlVariates { n0, pilot_m, .. } = self.method {
            if n0 < 1 || n0 >= self.order {
                return spec_err(format!(
                    "control order N0 = {n0} must satisfy 1 ≤ N0 < N = {}",
                    self.order
                ));
            }
            // the pilot has its own sub-stream, so it may exceed M (nested prefix studies)
            if pilot_m < 2 {
                return spec_err(format!("pilot size must be at least 2, got {pilot_m}"));
            }
        }
        Ok(())
    }

    /// Stream of sample `i` for `purpose`.
    pub fn sample_stream(&self, purpose: u64, i: u64) -> RngStream {
        let mut root = RngStream::new(self.seed, 0).child(purpose);
        if self.independent_streams {
            root = root.child(0x4f52_4445_5200_0000 | self.order as u64);
        }
        root.child(i)
    }

    fn pool(&self) -> Result<Option<rayon::ThreadPool>> {
        if self.threads == 0 {
            return Ok(None);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map(Some)
            .map_err(|e| Error::Estimation(format!("thread pool: {e}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub min_abs_denominator: f64,
    pub degenerate_count: u64,
    pub degenerate_fraction: f64,
    /// Samples with an exactly zero denominator, left out of the average.
    pub skipped_count: u64,
    pub effective_samples: u64,
    /// The degenerate fraction exceeded the configured warning level.
    pub degenerate_warning: bool,
}

/// Control-variate quantities per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlDiagnostics {
    pub which: Which,
    pub n0: usize,
    pub pilot_m: usize,
    /// `E[S^{N0}(t)]`.
    pub tau: f64,
    /// `Var[S^{N0}(t)]`.
    pub control_variance: f64,
    /// The moments came from the symbolic engine (otherwise from sampling).
    pub exact_moments: bool,
    /// `c*(x)` fixed from the pilot run.
    pub coefficient: Vec<f64>,
    /// Correlation of `Z^N(x)` and `S^{N0}(t)` in the main run.
    pub correlation: Vec<f64>,
    /// Sample variance of the crude integrand `Z^N(x)` in the main run.
    pub crude_variance: Vec<f64>,
    /// Crude estimate from the same main-run samples.
    pub crude_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub t: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub sample_variance: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub order: usize,
    pub samples: usize,
    pub method: Method,
    pub role: Role,
    pub seed: u64,
    pub control: Option<ControlDiagnostics>,
}

/// One conditional density term. `None` when the denominator is exactly zero.
#[inline]
pub fn density_kernel(
    x: f64,
    pair_eval: (f64, f64),
    y_other: f64,
    role: Role,
    f_init: &DistributionSpec,
) -> Option<f64> {
    let (s0, s1) = pair_eval;
    let (den, other) = match role {
        Role::ViaY0 => (s0, s1),
        Role::ViaY1 => (s1, s0),
    };
    if den == 0.0 {
        return None;
    }
    Some(f_init.pdf((x - y_other * other) / den) / den.abs())
}

/// Streaming mean, variance and co-moment with the control `S`.
#[derive(Debug, Clone)]
struct Accumulator {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    cross: Vec<f64>,
    s_mean: f64,
    s_m2: f64,
    min_den: f64,
    degenerate: u64,
    skipped: u64,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Accumulator {
            n: 0.0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
            cross: vec![0.0; len],
            s_mean: 0.0,
            s_m2: 0.0,
            min_den: f64::INFINITY,
            degenerate: 0,
            skipped: 0,
        }
    }

    #[inline]
    fn push(&mut self, z: &[f64], s: Option<f64>) {
        self.n += 1.0;
        let inv = 1.0 / self.n;
        match s {
            None => {
                for ((m, q), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(z) {
                    let d = v - *m;
                    *m += d * inv;
                    *q += d * (v - *m);
                }
            }
            Some(s) => {
                let ds = s - self.s_mean;
                self.s_mean += ds * inv;
                let ds_new = s - self.s_mean;
                self.s_m2 += ds * ds_new;
                for (((m, q), c), &v) in self
                    .mean
                    .iter_mut()
                    .zip(self.m2.iter_mut())
                    .zip(self.cross.iter_mut())
                    .zip(z)
                {
                    let d = v - *m;
                    *m += d * inv;
                    *q += d * (v - *m);
                    *c += d * ds_new;
                }
            }
        }
    }

    fn merge(mut self, other: Accumulator) -> Accumulator {
        self.min_den = self.min_den.min(other.min_den);
        self.degenerate += other.degenerate;
        self.skipped += other.skipped;
        if other.n == 0.0 {
            return self;
        }
        if self.n == 0.0 {
            return Accumulator {
                min_den: self.min_den,
                degenerate: self.degenerate,
                skipped: self.skipped,
                ..other
            };
        }
        let n = self.n + other.n;
        let w = self.n * other.n / n;
        let ds = other.s_mean - self.s_mean;
        for i in 0..self.mean.len() {
            let dz = other.mean[i] - self.mean[i];
            self.mean[i] += dz * other.n / n;
            self.m2[i] += other.m2[i] + dz * dz * w;
            self.cross[i] += other.cross[i] + dz * ds * w;
        }
        self.s_mean += ds * other.n / n;
        self.s_m2 += other.s_m2 + ds * ds * w;
        self.n = n;
        self
    }

    fn variance(&self, i: usize) -> f64 {
        if self.n > 1.0 {
            (self.m2[i] / (self.n - 1.0)).max(0.0)
        } else {
            0.0
        }
    }

    fn covariance(&self, i: usize) -> f64 {
        if self.n > 1.0 {
            self.cross[i] / (self.n - 1.0)
        } else {
            0.0
        }
    }

    fn s_variance(&self) -> f64 {
        if self.n > 1.0 {
            (self.s_m2 / (self.n - 1.0)).max(0.0)
        } else {
            0.0
        }
    }
}

/// Per-problem state shared by all samples of one run.
struct Sampler<'a> {
    spec: &'a ProblemSpec,
    cfg: &'a EstimatorConfig,
    t: f64,
    f_role: &'a DistributionSpec,
    other: &'a DistributionSpec,
    /// `(S0^N(t), S1^N(t), S^{N0}(t))` for deterministic coefficients.
    fixed: Option<(f64, f64, f64)>,
    control: Option<(Which, usize)>,
}

struct Realization {
    s0: f64,
    s1: f64,
    control: f64,
    y_other: f64,
}

impl<'a> Sampler<'a> {
    fn new(
        spec: &'a ProblemSpec,
        cfg: &'a EstimatorConfig,
        t: f64,
        control: Option<(Which, usize)>,
    ) -> Result<Self> {
        let (f_role, other) = match cfg.role {
            Role::ViaY0 => (&spec.y0, &spec.y1),
            Role::ViaY1 => (&spec.y1, &spec.y0),
        };
        if !f_role.is_continuous() {
            return spec_err(format!(
                "role {} needs an absolutely continuous initial condition, but it follows the {} law",
                cfg.role.name(),
                f_role.family().name()
            ));
        }
        let count = cfg.order.saturating_sub(1);
        let fixed = match spec.deterministic_coefficients(count) {
            Some((a, b)) => {
                let pair = SeriesPair::from_coefficients(spec.t0, &a, &b, cfg.order)?;
                let (s0, s1) = pair.eval(t);
                let c = control.map_or(0.0, |(w, n0)| control_value(&pair, w, n0, t));
                Some((s0, s1, c))
            }
            None => None,
        };
        Ok(Sampler {
            spec,
            cfg,
            t,
            f_role,
            other,
            fixed,
            control,
        })
    }

    fn realize(
        &self,
        rng: &mut StreamRng,
        a: &mut Vec<f64>,
        b: &mut Vec<f64>,
    ) -> Result<Realization> {
        let y_other = self.other.sample(rng);
        if let Some((s0, s1, control)) = self.fixed {
            return Ok(Realization {
                s0,
                s1,
                control,
                y_other,
            });
        }
        self.spec
            .sample_coefficients(self.cfg.order.saturating_sub(1), rng, a, b);
        let pair = SeriesPair::from_coefficients(self.spec.t0, a, b, self.cfg.order)?;
        let (s0, s1) = pair.eval(self.t);
        let control = self
            .control
            .map_or(0.0, |(w, n0)| control_value(&pair, w, n0, self.t));
        Ok(Realization {
            s0,
            s1,
            control,
            y_other,
        })
    }

    /// Accumulates samples `range` of stream `purpose`.
    fn run_chunk(
        &self,
        purpose: u64,
        range: std::ops::Range<usize>,
        grid: &[f64],
    ) -> Result<Accumulator> {
        let mut acc = Accumulator::new(grid.len());
        let mut z = vec![0.0; grid.len()];
        let (mut a, mut b) = (Vec::new(), Vec::new());
        let threshold = self.cfg.degenerate_denominator_threshold;
        for i in range {
            let mut rng = self.cfg.sample_stream(purpose, i as u64).rng();
            let r = self.realize(&mut rng, &mut a, &mut b)?;
            let (den, other) = match self.cfg.role {
                Role::ViaY0 => (r.s0, r.s1),
                Role::ViaY1 => (r.s1, r.s0),
            };
            let abs_den = den.abs();
            acc.min_den = acc.min_den.min(abs_den);
            if abs_den < threshold {
                acc.degenerate += 1;
            }
            if den == 0.0 {
                acc.skipped += 1;
                continue;
            }
            let (inv_abs, shift) = (1.0 / abs_den, r.y_other * other);
            for (zi, &x) in z.iter_mut().zip(grid) {
                *zi = self.f_role.pdf((x - shift) / den) * inv_abs;
            }
            acc.push(&z, self.control.map(|_| r.control));
        }
        Ok(acc)
    }

    /// Accumulates the first `m` samples of stream `purpose`.
    fn run(&self, purpose: u64, m: usize, grid: &[f64]) -> Result<Accumulator> {
        let chunks = m.div_ceil(CHUNK_SIZE);
        let work = || -> Result<Vec<Accumulator>> {
            (0..chunks)
                .into_par_iter()
                .map(|c| {
                    self.run_chunk(purpose, c * CHUNK_SIZE..((c + 1) * CHUNK_SIZE).min(m), grid)
                })
                .collect()
        };
        let parts = match self.cfg.pool()? {
            Some(pool) => pool.install(work)?,
            None => work()?,
        };
        Ok(parts
            .into_iter()
            .fold(Accumulator::new(grid.len()), Accumulator::merge))
    }
}

fn control_value(pair: &SeriesPair, which: Which, n0: usize, t: f64) -> f64 {
    let coeffs = match which {
        Which::S0 => &pair.s0,
        Which::S1 => &pair.s1,
    };
    horner(&coeffs[..=n0.min(pair.order)], t - pair.t0)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return spec_err("evaluation grid is empty");
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return spec_err("evaluation grid must be finite and strictly increasing");
    }
    Ok(())
}

fn diagnostics(acc: &Accumulator, cfg: &EstimatorConfig, t: f64) -> Result<Diagnostics> {
    let total = (acc.n as u64) + acc.skipped;
    if acc.n == 0.0 {
        return Err(Error::Estimation(format!(
            "all {total} samples have a zero denominator at t = {t} (role {})",
            cfg.role.name()
        )));
    }
    let fraction = acc.degenerate as f64 / total as f64;
    let warning = fraction > cfg.degenerate_fraction_warn;
    if warning {
        log::warn!(
            "{} of {total} samples ({fraction:.2e}) have |denominator| < {:e} at t = {t}, N = {} \
             (minimum {:.3e}); the estimator variance may be infinite",
            acc.degenerate,
            cfg.degenerate_denominator_threshold,
            cfg.order,
            acc.min_den
        );
    }
    Ok(Diagnostics {
        min_abs_denominator: acc.min_den,
        degenerate_count: acc.degenerate,
        degenerate_fraction: fraction,
        skipped_count: acc.skipped,
        effective_samples: acc.n as u64,
        degenerate_warning: warning,
    })
}

/// Crude Monte Carlo estimate of the density of `X^N(t)` on `grid`.
pub fn estimate_crude(
    spec: &ProblemSpec,
    cfg: &EstimatorConfig,
    t: f64,
    grid: &[f64],
) -> Result<DensityEstimate> {
    cfg.validate()?;
    check_grid(grid)?;
    let sampler = Sampler::new(spec, cfg, t, None)?;
    let acc = sampler.run(purpose::MAIN, cfg.samples, grid)?;
    let diagnostics = diagnostics(&acc, cfg, t)?;
    let sample_variance: Vec<f64> = (0..grid.len()).map(|i| acc.variance(i)).collect();
    let std_errors = sample_variance.iter().map(|v| (v / acc.n).sqrt()).collect();
    Ok(DensityEstimate {
        t,
        grid: grid.to_vec(),
        values: acc.mean.iter().map(|v| v.max(0.0)).collect(),
        std_errors,
        sample_variance,
        diagnostics,
        order: cfg.order,
        samples: cfg.samples,
        method: Method::Crude,
        role: cfg.role,
        seed: cfg.seed,
        control: None,
    })
}

/// `(E[S^{N0}(t)], Var[S^{N0}(t)], exact)`, from the symbolic engine or, past
/// its term budget, from sampling.
pub fn control_moments(
    spec: &ProblemSpec,
    cfg: &EstimatorConfig,
    which: Which,
    n0: usize,
    t: f64,
) -> Result<(f64, f64, bool)> {
    match symbolic_series(spec, n0, which, cfg.term_budget)
        .and_then(|s| mean_and_variance(&s, t, cfg.term_budget))
    {
        Ok((m, v)) => Ok((m, v, true)),
        Err(Error::Budget { terms, budget }) => {
            log::warn!(
                "symbolic moments of S^{n0} need more than {budget} terms ({terms}); \
                 using {FALLBACK_MOMENT_SAMPLES} samples instead"
            );
            let mom_cfg = EstimatorConfig {
                order: n0.max(1),
                ..cfg.clone()
            };
            let count = n0.saturating_sub(1);
            let stats = (0..FALLBACK_MOMENT_SAMPLES.div_ceil(CHUNK_SIZE))
                .into_par_iter()
                .map(|c| -> Result<Accumulator> {
                    let mut acc = Accumulator::new(1);
                    let (mut a, mut b) = (Vec::new(), Vec::new());
                    for i in c * CHUNK_SIZE..((c + 1) * CHUNK_SIZE).min(FALLBACK_MOMENT_SAMPLES) {
                        let mut rng = mom_cfg.sample_stream(purpose::MOMENTS, i as u64).rng();
                        spec.sample_coefficients(count, &mut rng, &mut a, &mut b);
                        let pair = SeriesPair::from_coefficients(spec.t0, &a, &b, n0)?;
                        acc.push(&[control_value(&pair, which, n0, t)], None);
                    }
                    Ok(acc)
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(Accumulator::new(1), Accumulator::merge);
            Ok((stats.mean[0], stats.variance(0), false))
        }
        Err(e) => Err(e),
    }
}

/// Control-variates estimate: `Z* = Z + c*(x)·(S^{N0}(t) − τ)`, with `c*`
/// fixed from a pilot run on a disjoint sub-stream.
pub fn estimate_control_variates(
    spec: &ProblemSpec,
    cfg: &EstimatorConfig,
    t: f64,
    grid: &[f64],
) -> Result<DensityEstimate> {
    cfg.validate()?;
    check_grid(grid)?;
    let Method::ControlVariates { which, n0, pilot_m } = cfg.method else {
        return spec_err("control-variates estimator called with a crude configuration");
    };
    let (tau, control_variance, exact) = control_moments(spec, cfg, which, n0, t)?;
    let sampler = Sampler::new(spec, cfg, t, Some((which, n0)))?;

    let coefficient: Vec<f64> = if control_variance > 0.0 {
        let pilot = sampler.run(purpose::PILOT, pilot_m, grid)?;
        (0..grid.len())
            .map(|i| -pilot.covariance(i) / control_variance)
            .collect()
    } else {
        log::warn!("Var[S^{n0}({t})] = 0: the control variate is constant, falling back to crude Monte Carlo");
        vec![0.0; grid.len()]
    };

    let acc = sampler.run(purpose::MAIN, cfg.samples, grid)?;
    let diagnostics = diagnostics(&acc, cfg, t)?;
    let s_var = acc.s_variance();
    let mut values = Vec::with_capacity(grid.len());
    let mut sample_variance = Vec::with_capacity(grid.len());
    let mut correlation = Vec::with_capacity(grid.len());
    let mut crude_variance = Vec::with_capacity(grid.len());
    for (i, &c) in coefficient.iter().enumerate() {
        let (vz, cov) = (acc.variance(i), acc.covariance(i));
        values.push((acc.mean[i] + c * (acc.s_mean - tau)).max(0.0));
        sample_variance.push((vz + 2.0 * c * cov + c * c * s_var).max(0.0));
        let denom = (vz * s_var).sqrt();
        correlation.push(if denom > 0.0 {
            (cov / denom).clamp(-1.0, 1.0)
        } else {
            0.0
        });
        crude_variance.push(vz);
    }
    let std_errors = sample_variance.iter().map(|v| (v / acc.n).sqrt()).collect();
    Ok(DensityEstimate {
        t,
        grid: grid.to_vec(),
        values,
        std_errors,
        sample_variance,
        diagnostics,
        order: cfg.order,
        samples: cfg.samples,
        method: cfg.method,
        role: cfg.role,
        seed: cfg.seed,
        control: Some(ControlDiagnostics {
            which,
            n0,
            pilot_m,
            tau,
            control_variance,
            exact_moments: exact,
            coefficient,
            correlation,
            crude_variance,
            crude_values: acc.mean.iter().map(|v| v.max(0.0)).collect(),
        }),
    })
}

/// Dispatches on `cfg.method`.
pub fn estimate(
    spec: &ProblemSpec,
    cfg: &EstimatorConfig,
    t: f64,
    grid: &[f64],
) -> Result<DensityEstimate> {
    match cfg.method {
        Method::Crude => estimate_crude(spec, cfg, t, grid),
        Method::ControlVariates { .. } => estimate_control_variates(spec, cfg, t, grid),
    }
}

/// How to choose the evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Explicit {
        points: Vec<f64>,
    },
    Uniform {
        lo: f64,
        hi: f64,
        n: usize,
    },
    /// `n` points over pilot quantiles `q` and `1 − q` of `X^N(t)`, widened by
    /// `pad` times their distance on each side.
    Auto {
        #[serde(default = "default_grid_points")]
        n: usize,
        #[serde(default = "default_grid_pad")]
        pad: f64,
        #[serde(default = "default_grid_quantile")]
        quantile: f64,
        #[serde(default = "default_grid_pilot")]
        pilot: usize,
    },
}

fn default_grid_points() -> usize {
    1000
}
fn default_grid_pad() -> f64 {
    0.2
}
fn default_grid_quantile() -> f64 {
    5e-4
}
fn default_grid_pilot() -> usize {
    20_000
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Auto {
            n: default_grid_points(),
            pad: default_grid_pad(),
            quantile: default_grid_quantile(),
            pilot: default_grid_pilot(),
        }
    }
}

/// `n` equally spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

impl GridSpec {
    /// Grid points for time `t`; an automatic grid samples `X^N(t)` from the
    /// grid sub-stream of `cfg`.
    pub fn resolve(&self, spec: &ProblemSpec, cfg: &EstimatorConfig, t: f64) -> Result<Vec<f64>> {
        let grid = match self {
            GridSpec::Explicit { points } => points.clone(),
            GridSpec::Uniform { lo, hi, n } => {
                if !(lo < hi) || *n < 2 {
                    return spec_err(format!(
                        "uniform grid needs lo < hi and n ≥ 2, got [{lo}, {hi}], n = {n}"
                    ));
                }
                linspace(*lo, *hi, *n)
            }
            GridSpec::Auto {
                n,
                pad,
                quantile,
                pilot,
            } => {
                if *n < 2 || !(*pad >= 0.0) || !(0.0..0.5).contains(quantile) || *pilot < 10 {
                    return spec_err(
                        "automatic grid needs n ≥ 2, pad ≥ 0, 0 ≤ quantile < 0.5 and pilot ≥ 10",
                    );
                }
                let (lo, hi) = sample_range(spec, cfg, t, *quantile, *pilot)?;
                auto_grid(lo, hi, *pad, *n)
            }
        };
        check_grid(&grid)?;
        Ok(grid)
    }

    /// One grid shared by several truncation orders at time `t`. An automatic
    /// grid spans the union of the pilot ranges of every order, so low orders
    /// with wider densities keep their mass inside it.
    pub fn resolve_for_orders(
        &self,
        spec: &ProblemSpec,
        cfg: &EstimatorConfig,
        orders: &[usize],
        t: f64,
    ) -> Result<Vec<f64>> {
        let GridSpec::Auto {
            n,
            pad,
            quantile,
            pilot,
        } = self
        else {
            return self.resolve(
                spec,
                &cfg.clone()
                    .with_order(orders.iter().copied().max().unwrap_or(cfg.order)),
                t,
            );
        };
        if orders.is_empty() {
            return self.resolve(spec, cfg, t);
        }
        self.check_auto()?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &order in orders {
            let (a, b) = sample_range(spec, &cfg.clone().with_order(order), t, *quantile, *pilot)?;
            lo = lo.min(a);
            hi = hi.max(b);
        }
        let grid = auto_grid(lo, hi, *pad, *n);
        check_grid(&grid)?;
        Ok(grid)
    }
}

impl GridSpec {
    fn check_auto(&self) -> Result<()> {
        match self {
            GridSpec::Auto {
                n,
                pad,
                quantile,
                pilot,
            } if *n < 2 || !(*pad >= 0.0) || !(0.0..0.5).contains(quantile) || *pilot < 10 => {
                spec_err("automatic grid needs n ≥ 2, pad ≥ 0, 0 ≤ quantile < 0.5 and pilot ≥ 10")
            }
            _ => Ok(()),
        }
    }
}

fn auto_grid(lo: f64, hi: f64, pad: f64, n: usize) -> Vec<f64> {
    let width = (hi - lo).max(1e-6 * (1.0 + lo.abs().max(hi.abs())));
    linspace(lo - pad * width, hi + pad * width, n)
}

/// Pilot quantiles `q` and `1 − q` of `X^N(t) = Y0·S0 + Y1·S1`.
fn sample_range(
    spec: &ProblemSpec,
    cfg: &EstimatorConfig,
    t: f64,
    q: f64,
    pilot: usize,
) -> Result<(f64, f64)> {
    let count = cfg.order.saturating_sub(1);
    let fixed = spec
        .deterministic_coefficients(count)
        .map(|(a, b)| SeriesPair::from_coefficients(spec.t0, &a, &b, cfg.order))
        .transpose()?;
    let mut xs = (0..pilot)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = cfg.sample_stream(purpose::GRID, i as u64).rng();
            let y0 = spec.y0.sample(&mut rng);
            let y1 = spec.y1.sample(&mut rng);
            let (s0, s1) = match &fixed {
                Some(p) => p.eval(t),
                None => {
                    let (mut a, mut b) = (Vec::new(), Vec::new());
                    spec.sample_coefficients(count, &mut rng, &mut a, &mut b);
                    SeriesPair::from_coefficients(spec.t0, &a, &b, cfg.order)?.eval(t)
                }
            };
            Ok(y0 * s0 + y1 * s1)
        })
        .collect::<Result<Vec<_>>>()?;
    xs.retain(|x| x.is_finite());
    if xs.is_empty() {
        return Err(Error::Estimation(
            "no finite pilot values for the automatic grid".into(),
        ));
    }
    xs.sort_by(f64::total_cmp);
    let at = |p: f64| xs[((p * (xs.len() - 1) as f64).round() as usize).min(xs.len() - 1)];
    Ok((at(q), at(1.0 - q)))
}

/// `(S0(t), S1(t))` in closed form for constant deterministic coefficients
/// `X'' + a X' + b X = 0`.
pub fn constant_coefficient_pair(spec: &ProblemSpec, t: f64) -> Result<(f64, f64)> {
    let (a, b) = spec
        .deterministic_coefficients(3)
        .ok_or_else(|| Error::Unsupported("closed form needs deterministic coefficients".into()))?;
    if a.len() > 1 && a[1..].iter().any(|&v| v != 0.0)
        || b.len() > 1 && b[1..].iter().any(|&v| v != 0.0)
    {
        return Err(Error::Unsupported(
            "closed form needs constant coefficients".into(),
        ));
    }
    if spec.a.length().is_none() || spec.b.length().is_none() {
        return Err(Error::Unsupported(
            "closed form needs finitely many coefficients".into(),
        ));
    }
    let a = a.first().copied().unwrap_or(0.0);
    let b = b.first().copied().unwrap_or(0.0);
    let h = t - spec.t0;
    let disc = a * a - 4.0 * b;
    let alpha = -0.5 * a;
    Ok(if disc > 0.0 {
        let root = 0.5 * disc.sqrt();
        let (r1, r2) = (alpha - root, alpha + root);
        let (e1, e2) = ((r1 * h).exp(), (r2 * h).exp());
        ((r2 * e1 - r1 * e2) / (r2 - r1), (e2 - e1) / (r2 - r1))
    } else if disc < 0.0 {
        let w = 0.5 * (-disc).sqrt();
        let e = (alpha * h).exp();
        (
            e * ((w * h).cos() - alpha / w * (w * h).sin()),
            e * (w * h).sin() / w,
        )
    } else {
        let e = (alpha * h).exp();
        (e * (1.0 - alpha * h), h * e)
    })
}

/// Density of `Y0·s0 + Y1·s1` at `x` for fixed `s0`, `s1`, by summation over
/// the atoms or quadrature over the density of the conditioning variable.
pub fn mixture_density(
    y0: &DistributionSpec,
    y1: &DistributionSpec,
    s0: f64,
    s1: f64,
    x: f64,
) -> Result<f64> {
    const TINY: f64 = 1e-8;
    let (f, den, other, s_other) = if y0.is_continuous() && s0.abs() > TINY {
        (y0, s0, y1, s1)
    } else if y1.is_continuous() && s1.abs() > TINY {
        (y1, s1, y0, s0)
    } else {
        return Err(Error::Unsupported(
            "no initial condition with a density has a nonzero multiplier".into(),
        ));
    };
    let kernel = |y: f64| f.pdf((x - y * s_other) / den) / den.abs();
    if !other.is_continuous() {
        return Ok(other
            .atoms(1e-16)?
            .iter()
            .map(|&(v, p)| p * kernel(v))
            .sum());
    }
    if s_other == 0.0 {
        return Ok(kernel(0.0));
    }
    let (lo, hi) = other.support();
    let opts = QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-9,
        max_segments: 5000,
    };
    // split at the kinks of the integrand where the shifted support of f begins or ends
    // and at the mean; cuts far out in an unbounded tail only hide the bulk from the rule
    let (mean, sd) = (other.mean()?, other.variance()?.sqrt());
    let relevant =
        |y: f64| y > lo && y < hi && (other.is_bounded() || (y - mean).abs() <= 40.0 * sd);
    let mut cuts = vec![lo, hi];
    if relevant(mean) {
        cuts.push(mean);
    }
    let (flo, fhi) = f.support();
    for e in [flo, fhi] {
        if e.is_finite() {
            let y = (x - e * den) / s_other;
            if relevant(y) {
                cuts.push(y);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += integrate(|y| other.pdf(y) * kernel(y), w[0], w[1], opts)?;
    }
    Ok(total)
}

/// Exact density of `X(t)` for constant deterministic coefficients.
pub fn exact_density_expression(spec: &ProblemSpec, t: f64, x: f64) -> Result<f64> {
    let (s0, s1) = constant_coefficient_pair(spec, t)?;
    mixture_density(&spec.y0, &spec.y1, s0, s1, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Family;
    use crate::series::CoefficientModel;

    fn normal(mu: f64, sigma: f64) -> DistributionSpec {
        DistributionSpec::untruncated(Family::Normal { mu, sigma }).unwrap()
    }

    fn phi(x: f64, mu: f64, sigma: f64) -> f64 {
        let z = (x - mu) / sigma;
        (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    fn oscillator(y1: DistributionSpec) -> ProblemSpec {
        ProblemSpec {
            t0: 0.0,
            a: CoefficientModel::zero(),
            b: CoefficientModel::constants(&[1.0]),
            y0: normal(2.0, 1.0),
            y1,
            radius: None,
        }
    }

    #[test]
    fn kernel_zero_dynamics() {
        let f = normal(2.0, 1.0);
        for x in [-1.0, 0.5, 2.0, 3.7] {
            let k = density_kernel(x, (1.0, 3.0), 0.0, Role::ViaY0, &f).unwrap();
            assert!((k - phi(x, 2.0, 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_rotation() {
        let f = normal(2.0, 1.0);
        let t: f64 = 1.0;
        for x in [0.0, 1.0, 2.0] {
            let k = density_kernel(x, (t.cos(), t.sin()), 0.0, Role::ViaY0, &f).unwrap();
            assert!((k - phi(x, 2.0 * t.cos(), t.cos().abs())).abs() < 1e-14);
        }
        assert!(density_kernel(0.0, (1.0, 0.0), 0.5, Role::ViaY1, &f).is_none());
    }

    #[test]
    fn zero_variance_integrand() {
        let spec = ProblemSpec {
            b: CoefficientModel::zero(),
            ..oscillator(DistributionSpec::point(0.0))
        };
        let cfg = EstimatorConfig::new(5, 3000, Role::ViaY0, 11);
        let grid = linspace(-2.0, 6.0, 41);
        let est = estimate_crude(&spec, &cfg, 1.3, &grid).unwrap();
        for (x, (v, se)) in grid.iter().zip(est.values.iter().zip(&est.std_errors)) {
            assert!((v - phi(*x, 2.0, 1.0)).abs() < 1e-15);
            assert_eq!(*se, 0.0);
        }
    }

    #[test]
    fn role_at_t0_is_degenerate() {
        let spec = oscillator(normal(0.0, 1.0));
        let cfg = EstimatorConfig::new(5, 100, Role::ViaY1, 11);
        let err = estimate_crude(&spec, &cfg, 0.0, &[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Estimation(_)));
    }

    #[test]
    fn discrete_role_is_rejected() {
        let spec =
            oscillator(DistributionSpec::untruncated(Family::Poisson { lambda: 2.0 }).unwrap());
        let cfg = EstimatorConfig::new(5, 100, Role::ViaY1, 11);
        assert!(matches!(
            estimate_crude(&spec, &cfg, 1.0, &[0.0, 1.0]),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn threads_do_not_change_values() {
        let spec = oscillator(normal(0.0, 0.5));
        let grid = linspace(-3.0, 4.0, 30);
        let mut cfg = EstimatorConfig::new(12, 5000, Role::ViaY0, 5);
        cfg.threads = 1;
        let one = estimate_crude(&spec, &cfg, 0.7, &grid).unwrap();
        cfg.threads = 3;
        let three = estimate_crude(&spec, &cfg, 0.7, &grid).unwrap();
        assert_eq!(one, three);
    }

    #[test]
    fn closed_form_pairs() {
        let spec = oscillator(DistributionSpec::point(0.0));
        let (s0, s1) = constant_coefficient_pair(&spec, 0.8).unwrap();
        assert!((s0 - 0.8f64.cos()).abs() < 1e-15 && (s1 - 0.8f64.sin()).abs() < 1e-15);
        for (a, b) in [(3.0, 1.0), (1.0, 2.0), (2.0, 1.0)] {
            let spec = ProblemSpec {
                a: CoefficientModel::constants(&[a]),
                b: CoefficientModel::constants(&[b]),
                ..spec.clone()
            };
            let (s0, s1) = constant_coefficient_pair(&spec, 0.9).unwrap();
            let p = SeriesPair::from_coefficients(0.0, &[a], &[b], 40)
                .unwrap()
                .eval(0.9);
            assert!(
                (s0 - p.0).abs() < 1e-12 && (s1 - p.1).abs() < 1e-12,
                "a={a} b={b}"
            );
        }
    }

    #[test]
    fn quarter_turn_gives_uniform() {
        let spec =
            oscillator(DistributionSpec::untruncated(Family::Uniform { a: -1.0, b: 1.0 }).unwrap());
        let spec = ProblemSpec {
            y0: normal(0.0, 1.0),
            ..spec
        };
        let t = std::f64::consts::FRAC_PI_2;
        for (x, want) in [(0.0, 0.5), (0.9, 0.5), (-0.5, 0.5), (1.2, 0.0)] {
            let v = exact_density_expression(&spec, t, x).unwrap();
            assert!((v - want).abs() < 1e-6, "x={x}: {v}");
        }
    }

    #[test]
    fn gaussian_mixture_matches_convolution() {
        // Y0 ~ N(2,1), Y1 ~ N(0,0.5): X ~ N(2 s0, s0² + 0.25 s1²)
        let spec = oscillator(normal(0.0, 0.5));
        let t = 0.6f64;
        let sd = (t.cos().powi(2) + 0.25 * t.sin().powi(2)).sqrt();
        for x in [0.0, 1.5, 3.0] {
            let v = exact_density_expression(&spec, t, x).unwrap();
            assert!((v - phi(x, 2.0 * t.cos(), sd)).abs() < 1e-9);
        }
    }

    #[test]
    fn control_variates_config_checks() {
        let cfg =
            EstimatorConfig::new(10, 1000, Role::ViaY0, 1).with_method(Method::ControlVariates {
                which: Which::S0,
                n0: 10,
                pilot_m: 100,
            });
        assert!(cfg.validate().is_err());
        let cfg = cfg.with_method(Method::ControlVariates {
            which: Which::S0,
            n0: 5,
            pilot_m: 1,
        });
        assert!(cfg.validate().is_err());
        let cfg = cfg.with_method(Method::ControlVariates {
            which: Which::S0,
            n0: 5,
            pilot_m: 2000,
        });
        assert!(cfg.validate().is_ok());
    }
}
