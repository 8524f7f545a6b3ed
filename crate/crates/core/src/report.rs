//! CSV tables of estimates and study results.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    ConsecutiveNorm, PointwiseDifference, ReferenceError, RegressionFit, SamplingError,
    SamplingSlope,
};
use crate::density::DensityEstimate;
use crate::error::{Error, Result};

/// Significant digits written for every floating-point cell.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// `x` rounded to nine significant digits, in its shortest decimal form.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses");
    format!("{rounded}")
}

/// Consecutive-difference norms with and without the control variate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvComparisonRow {
    pub t: f64,
    pub order: usize,
    pub crude_delta_eps: f64,
    pub cv_delta_eps: f64,
}

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

fn finish<W: Write>(mut out: csv::Writer<W>) -> Result<()> {
    out.flush().map_err(Error::Io)
}

/// Long format: one row per `(t, x)` of every estimate.
pub fn write_estimates<W: Write>(w: W, estimates: &[DensityEstimate]) -> Result<()> {
    let mut out = writer(
        w,
        &[
            "t",
            "x",
            "value",
            "std_error",
            "sample_variance",
            "N",
            "M",
            "method",
            "role",
            "seed",
        ],
    )?;
    for e in estimates {
        for (i, &x) in e.grid.iter().enumerate() {
            out.write_record([
                fmt_sig(e.t),
                fmt_sig(x),
                fmt_sig(e.values[i]),
                fmt_sig(e.std_errors[i]),
                fmt_sig(e.sample_variance[i]),
                e.order.to_string(),
                e.samples.to_string(),
                e.method.name().to_string(),
                e.role.name().to_string(),
                e.seed.to_string(),
            ])?;
        }
    }
    finish(out)
}

pub fn write_consecutive_norms<W: Write>(w: W, rows: &[ConsecutiveNorm]) -> Result<()> {
    let mut out = writer(w, &["t", "N", "delta_eps"])?;
    for r in rows {
        out.write_record([fmt_sig(r.t), r.order.to_string(), fmt_sig(r.delta_eps)])?;
    }
    finish(out)
}

pub fn write_reference_errors<W: Write>(w: W, rows: &[ReferenceError]) -> Result<()> {
    let mut out = writer(w, &["t", "N", "E"])?;
    for r in rows {
        out.write_record([fmt_sig(r.t), r.order.to_string(), fmt_sig(r.error)])?;
    }
    finish(out)
}

/// Long format: one row per `(t, N, x)`.
pub fn write_pointwise<W: Write>(w: W, rows: &[PointwiseDifference]) -> Result<()> {
    let mut out = writer(w, &["t", "N", "x", "delta_eps"])?;
    for r in rows {
        for (x, d) in r.x.iter().zip(&r.delta) {
            out.write_record([fmt_sig(r.t), r.order.to_string(), fmt_sig(*x), fmt_sig(*d)])?;
        }
    }
    finish(out)
}

/// Fits that failed are left out; callers report them separately.
pub fn write_regression<W: Write>(w: W, fits: &[RegressionFit]) -> Result<()> {
    let mut out = writer(w, &["t", "alpha", "beta", "n_points"])?;
    for f in fits {
        out.write_record([
            fmt_sig(f.t),
            fmt_sig(f.alpha),
            fmt_sig(f.beta),
            f.n_points.to_string(),
        ])?;
    }
    finish(out)
}

pub fn write_sampling_errors<W: Write>(w: W, rows: &[SamplingError]) -> Result<()> {
    let mut out = writer(w, &["t", "P", "MCE"])?;
    for r in rows {
        out.write_record([fmt_sig(r.t), r.size.to_string(), fmt_sig(r.mce)])?;
    }
    finish(out)
}

/// An undefined slope is written as an empty cell.
pub fn write_sampling_slopes<W: Write>(w: W, rows: &[SamplingSlope]) -> Result<()> {
    let mut out = writer(w, &["t", "slope", "n_points"])?;
    for r in rows {
        out.write_record([
            fmt_sig(r.t),
            r.slope.map(fmt_sig).unwrap_or_default(),
            r.n_points.to_string(),
        ])?;
    }
    finish(out)
}

pub fn write_cv_comparison<W: Write>(w: W, rows: &[CvComparisonRow]) -> Result<()> {
    let mut out = writer(w, &["t", "N", "crude_delta_eps", "cv_delta_eps"])?;
    for r in rows {
        out.write_record([
            fmt_sig(r.t),
            r.order.to_string(),
            fmt_sig(r.crude_delta_eps),
            fmt_sig(r.cv_delta_eps),
        ])?;
    }
    finish(out)
}

/// Pointwise comparison from a control-variate estimate, whose main run also carries the crude values.
pub fn write_cv_pointwise<W: Write>(w: W, estimate: &DensityEstimate) -> Result<()> {
    let cd = estimate.control.as_ref().ok_or_else(|| {
        Error::Estimation("pointwise comparison needs a control-variate estimate".into())
    })?;
    let mut out = writer(
        w,
        &[
            "t",
            "x",
            "crude_value",
            "cv_value",
            "crude_variance",
            "cv_variance",
            "correlation",
            "coefficient",
        ],
    )?;
    for (i, &x) in estimate.grid.iter().enumerate() {
        out.write_record([
            fmt_sig(estimate.t),
            fmt_sig(x),
            fmt_sig(cd.crude_values[i]),
            fmt_sig(estimate.values[i]),
            fmt_sig(cd.crude_variance[i]),
            fmt_sig(estimate.sample_variance[i]),
            fmt_sig(cd.correlation[i]),
            fmt_sig(cd.coefficient[i]),
        ])?;
    }
    finish(out)
}
