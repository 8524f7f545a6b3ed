//! Power-series solutions of random second-order linear ODEs
//! `X'' + A(t) X' + B(t) X = 0` and Monte Carlo estimation of the
//! probability density of `X(t)`.

pub mod analysis;
pub mod config;
pub mod density;
pub mod distributions;
pub mod error;
pub mod expr;
pub mod poly;
pub mod quad;
pub mod report;
pub mod rng;
pub mod series;

pub use distributions::{DistributionSpec, Family};
pub use error::{Error, Result};
pub use expr::Expression;
pub use rng::RngStream;
