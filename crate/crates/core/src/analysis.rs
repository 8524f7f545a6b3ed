//! Distances between density estimates and the convergence / sampling-error
//! studies built on them.

use serde::{Deserialize, Serialize};

use crate::density::{estimate, DensityEstimate, EstimatorConfig, GridSpec};
use crate::error::{spec_err, Error, Result};
use crate::series::ProblemSpec;

/// Default reference order `L`.
pub const DEFAULT_REFERENCE_ORDER: usize = 30;
/// Default nested sample sizes of a sampling study.
pub const DEFAULT_SAMPLE_SIZES: [usize; 8] = [100, 200, 400, 800, 1600, 3200, 6400, 12800];
/// Default sample count.
pub const DEFAULT_SAMPLES: usize = 20_000;
/// Default tolerance on the probability mass a density may leave outside its grid.
pub const DEFAULT_TAIL_TOL: f64 = 5e-3;

/// Composite trapezoid rule on a (possibly non-uniform) grid.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

fn check_coverage(grid: &[f64], values: &[f64], tail_tol: f64) -> Result<()> {
    if values.iter().all(|&v| v == 0.0) {
        return Ok(());
    }
    let deficit = 1.0 - trapezoid(grid, values);
    if deficit > tail_tol {
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        let half = 0.5 * (hi - lo);
        return Err(Error::GridCoverage {
            lo,
            hi,
            deficit,
            tail_tol,
            suggested_lo: lo - half,
            suggested_hi: hi + half,
        });
    }
    Ok(())
}

fn check_shared(grid: &[f64], f: &[f64], g: &[f64]) -> Result<()> {
    if grid.len() < 2 || f.len() != grid.len() || g.len() != grid.len() {
        return spec_err(format!(
            "densities must share a grid of at least two points (grid {}, f {}, g {})",
            grid.len(),
            f.len(),
            g.len()
        ));
    }
    Ok(())
}

/// `(∫ |f − g|^p)^{1/p}` over a shared grid, after checking that neither
/// density leaves more than `tail_tol` of its mass outside the grid.
/// An identically zero function is exempt from the check.
pub fn lp_distance_values(
    grid: &[f64],
    f: &[f64],
    g: &[f64],
    p: f64,
    tail_tol: f64,
) -> Result<f64> {
    if !(p >= 1.0) {
        return spec_err(format!("p must be at least 1, got {p}"));
    }
    check_shared(grid, f, g)?;
    check_coverage(grid, f, tail_tol)?;
    check_coverage(grid, g, tail_tol)?;
    let diff: Vec<f64> = f
        .iter()
        .zip(g)
        .map(|(a, b)| (a - b).abs().powf(p))
        .collect();
    Ok(trapezoid(grid, &diff).powf(1.0 / p))
}

fn same_grid(f: &DensityEstimate, g: &DensityEstimate) -> Result<()> {
    if f.grid != g.grid {
        return spec_err("the two estimates are on different grids");
    }
    Ok(())
}

pub fn lp_distance(f: &DensityEstimate, g: &DensityEstimate, p: f64, tail_tol: f64) -> Result<f64> {
    same_grid(f, g)?;
    lp_distance_values(&f.grid, &f.values, &g.values, p, tail_tol)
}

/// Half the L1 distance.
pub fn total_variation(f: &DensityEstimate, g: &DensityEstimate, tail_tol: f64) -> Result<f64> {
    Ok(0.5 * lp_distance(f, g, 1.0, tail_tol)?)
}

/// `(1/√2) ‖√f − √g‖₂`.
pub fn hellinger_values(grid: &[f64], f: &[f64], g: &[f64], tail_tol: f64) -> Result<f64> {
    check_shared(grid, f, g)?;
    check_coverage(grid, f, tail_tol)?;
    check_coverage(grid, g, tail_tol)?;
    let sq: Vec<f64> = f
        .iter()
        .zip(g)
        .map(|(a, b)| (a.max(0.0).sqrt() - b.max(0.0).sqrt()).powi(2))
        .collect();
    Ok((0.5 * trapezoid(grid, &sq)).sqrt())
}

pub fn hellinger(f: &DensityEstimate, g: &DensityEstimate, tail_tol: f64) -> Result<f64> {
    same_grid(f, g)?;
    hellinger_values(&f.grid, &f.values, &g.values, tail_tol)
}

/// Estimates at one time for several orders, plus the reference order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSlice {
    pub t: f64,
    pub grid: Vec<f64>,
    pub estimates: Vec<DensityEstimate>,
    pub reference: Option<DensityEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub times: Vec<f64>,
    pub orders: Vec<usize>,
    pub reference_order: Option<usize>,
    pub samples: usize,
    pub tail_tol: f64,
    pub slices: Vec<TimeSlice>,
}

impl ConvergenceStudy {
    /// Runs the estimator for every `(t, N)` and for the reference order.
    /// Each time gets one grid covering every order in the study.
    pub fn run(
        spec: &ProblemSpec,
        cfg: &EstimatorConfig,
        times: &[f64],
        orders: &[usize],
        reference_order: Option<usize>,
        grid: &GridSpec,
        tail_tol: f64,
    ) -> Result<ConvergenceStudy> {
        if times.is_empty() || orders.is_empty() {
            return spec_err("a convergence study needs at least one time and one order");
        }
        if orders.windows(2).any(|w| w[1] <= w[0]) {
            return spec_err("orders must be strictly increasing");
        }
        let max_order = *orders.last().expect("nonempty");
        if let Some(l) = reference_order {
            if l <= max_order {
                return spec_err(format!(
                    "reference order L = {l} must exceed every studied order (max {max_order})"
                ));
            }
        }
        let all_orders: Vec<usize> = orders.iter().copied().chain(reference_order).collect();
        let mut slices = Vec::with_capacity(times.len());
        for &t in times {
            let grid_points = grid.resolve_for_orders(spec, cfg, &all_orders, t)?;
            let mut estimates = Vec::with_capacity(orders.len());
            for &n in orders {
                log::info!("t = {t}, N = {n}");
                estimates.push(estimate(spec, &cfg.clone().with_order(n), t, &grid_points)?);
            }
            let reference = reference_order
                .map(|l| estimate(spec, &cfg.clone().with_order(l), t, &grid_points))
                .transpose()?;
            slices.push(TimeSlice {
                t,
                grid: grid_points,
                estimates,
                reference,
            });
        }
        Ok(ConvergenceStudy {
            times: times.to_vec(),
            orders: orders.to_vec(),
            reference_order,
            samples: cfg.samples,
            tail_tol,
            slices,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsecutiveNorm {
    pub t: f64,
    pub order: usize,
    /// `Δε^N(t) = ‖f̂^{N+1} − f̂^N‖₁`.
    pub delta_eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceError {
    pub t: f64,
    pub order: usize,
    /// `E^N(t) = ‖f̂^L − f̂^N‖₁`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseDifference {
    pub t: f64,
    pub order: usize,
    pub x: Vec<f64>,
    /// `δε^N(x, t) = |f̂^{N+1}(x) − f̂^N(x)|`.
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTables {
    pub consecutive: Vec<ConsecutiveNorm>,
    pub reference_errors: Vec<ReferenceError>,
    pub pointwise: Vec<PointwiseDifference>,
}

/// `δε`, `Δε` for every pair of consecutive orders present in the study, and
/// `E^N` against the reference order when there is one.
pub fn consecutive_differences(study: &ConvergenceStudy) -> Result<ConvergenceTables> {
    let mut out = ConvergenceTables::default();
    for slice in &study.slices {
        for pair in slice.estimates.windows(2) {
            let (lo, hi) = (&pair[0], &pair[1]);
            if hi.order != lo.order + 1 {
                continue;
            }
            let delta: Vec<f64> = lo
                .values
                .iter()
                .zip(&hi.values)
                .map(|(a, b)| (a - b).abs())
                .collect();
            out.consecutive.push(ConsecutiveNorm {
                t: slice.t,
                order: lo.order,
                delta_eps: lp_distance(lo, hi, 1.0, study.tail_tol)?,
            });
            out.pointwise.push(PointwiseDifference {
                t: slice.t,
                order: lo.order,
                x: slice.grid.clone(),
                delta,
            });
        }
        if let Some(reference) = &slice.reference {
            for e in &slice.estimates {
                out.reference_errors.push(ReferenceError {
                    t: slice.t,
                    order: e.order,
                    error: lp_distance(e, reference, 1.0, study.tail_tol)?,
                });
            }
        }
    }
    Ok(out)
}

/// Least-squares line `y = intercept + slope·x`.
pub fn least_squares(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub t: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n_points: usize,
}

/// Fits `log E = log β + α log Δε` on `(Δε, E)` pairs, leaving out points
/// with `E ≤ 2·min E` (sampling-error saturation).
pub fn fit_error_vs_difference(t: f64, pairs: &[(f64, f64)]) -> Result<RegressionFit> {
    let min_e = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let kept: Vec<(f64, f64)> = pairs
        .iter()
        .copied()
        .filter(|&(d, e)| e > 2.0 * min_e && d > 0.0 && e > 0.0)
        .collect();
    if kept.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "t = {t}: {} of {} points remain before saturation; at least 3 are needed",
            kept.len(),
            pairs.len()
        )));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = kept.iter().map(|&(d, e)| (d.ln(), e.ln())).unzip();
    let (alpha, intercept) = least_squares(&lx, &ly).ok_or_else(|| {
        Error::InsufficientData(format!("t = {t}: consecutive norms are all equal"))
    })?;
    Ok(RegressionFit {
        t,
        alpha,
        beta: intercept.exp(),
        n_points: kept.len(),
    })
}

/// One fit per time; a time without enough points yields its error.
pub fn regress_error_vs_difference(
    tables: &ConvergenceTables,
) -> Vec<(f64, Result<RegressionFit>)> {
    let mut times: Vec<f64> = tables.reference_errors.iter().map(|r| r.t).collect();
    times.dedup();
    times
        .into_iter()
        .map(|t| {
            let pairs: Vec<(f64, f64)> = tables
                .consecutive
                .iter()
                .filter(|c| c.t == t)
                .filter_map(|c| {
                    tables
                        .reference_errors
                        .iter()
                        .find(|r| r.t == t && r.order == c.order)
                        .map(|r| (c.delta_eps, r.error))
                })
                .collect();
            (t, fit_error_vs_difference(t, &pairs))
        })
        .collect()
}

/// Nested-sample design of a sampling-error study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingStudy {
    pub order: usize,
    pub sizes: Vec<usize>,
    pub reference_samples: usize,
}

impl SamplingStudy {
    pub fn new(order: usize, sizes: Vec<usize>, reference_samples: usize) -> Result<Self> {
        if sizes.is_empty() || sizes.windows(2).any(|w| w[1] <= w[0]) || sizes[0] == 0 {
            return spec_err("sample sizes must be positive and strictly increasing");
        }
        if *sizes.last().expect("nonempty") > reference_samples {
            return spec_err(format!(
                "largest sample size {} exceeds the reference count {reference_samples}",
                sizes.last().expect("nonempty")
            ));
        }
        Ok(SamplingStudy {
            order,
            sizes,
            reference_samples,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingError {
    pub t: f64,
    pub size: usize,
    /// `MCE^P(t) = ‖f̂_P − f̂_M‖₁`.
    pub mce: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSlope {
    pub t: f64,
    /// Least-squares slope of `log MCE` against `log P`; `None` with fewer than two positive points.
    pub slope: Option<f64>,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingResult {
    pub errors: Vec<SamplingError>,
    pub slopes: Vec<SamplingSlope>,
}

/// `MCE^P(t)` for nested prefixes. The estimate for `P` samples is the
/// estimator run with `M = P` on the same seed, which uses exactly the first
/// `P` draws of the reference run.
pub fn sampling_error_study(
    spec: &ProblemSpec,
    cfg: &EstimatorConfig,
    times: &[f64],
    study: &SamplingStudy,
    grid: &GridSpec,
    tail_tol: f64,
) -> Result<SamplingResult> {
    let base = cfg.clone().with_order(study.order);
    let mut errors = Vec::new();
    let mut slopes = Vec::new();
    for &t in times {
        let grid_points = grid.resolve(spec, &base, t)?;
        let reference = estimate(
            spec,
            &base.clone().with_samples(study.reference_samples),
            t,
            &grid_points,
        )?;
        let mut points = Vec::new();
        for &p in &study.sizes {
            let mce = if p == study.reference_samples {
                0.0
            } else {
                let prefix = estimate(spec, &base.clone().with_samples(p), t, &grid_points)?;
                lp_distance(&prefix, &reference, 1.0, f64::INFINITY)?
            };
            errors.push(SamplingError { t, size: p, mce });
            if mce > 0.0 {
                points.push(((p as f64).ln(), mce.ln()));
            }
        }
        check_coverage(&grid_points, &reference.values, tail_tol)?;
        let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        slopes.push(SamplingSlope {
            t,
            slope: least_squares(&lx, &ly).map(|(s, _)| s),
            n_points: points.len(),
        });
    }
    Ok(SamplingResult { errors, slopes })
}
