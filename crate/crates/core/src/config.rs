//! Run configuration files and the bundled presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    DEFAULT_REFERENCE_ORDER, DEFAULT_SAMPLES, DEFAULT_SAMPLE_SIZES, DEFAULT_TAIL_TOL,
};
use crate::density::{EstimatorConfig, GridSpec, Method, Role};
use crate::error::{Error, Result};
use crate::poly::DEFAULT_TERM_BUDGET;
use crate::series::{ProblemSpec, Which};

/// Bundled presets, by name.
pub const PRESETS: [(&str, &str); 5] = [
    ("example1", include_str!("../presets/example1.toml")),
    ("example2", include_str!("../presets/example2.toml")),
    ("example3", include_str!("../presets/example3.toml")),
    ("example4", include_str!("../presets/example4.toml")),
    ("example5", include_str!("../presets/example5.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    pub order: usize,
    pub samples: usize,
    /// Defaults to `via_y0` when `Y0` has a density, else `via_y1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    pub seed: u64,
    pub threads: usize,
    pub independent_streams: bool,
    pub degenerate_denominator_threshold: f64,
    pub degenerate_fraction_warn: f64,
    pub term_budget: usize,
    pub tail_tol: f64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            order: 20,
            samples: DEFAULT_SAMPLES,
            role: None,
            seed: 1,
            threads: 0,
            independent_streams: false,
            degenerate_denominator_threshold: 1e-3,
            degenerate_fraction_warn: 1e-4,
            term_budget: DEFAULT_TERM_BUDGET,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSection {
    pub times: Vec<f64>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        EstimateSection { times: vec![1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub times: Vec<f64>,
    pub orders: Vec<usize>,
    pub reference_order: usize,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        ConvergenceSection {
            times: vec![1.0],
            orders: (1..=10).collect(),
            reference_order: DEFAULT_REFERENCE_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    pub times: Vec<f64>,
    pub order: usize,
    pub sizes: Vec<usize>,
    pub reference_samples: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            times: vec![1.0],
            order: 20,
            sizes: DEFAULT_SAMPLE_SIZES.to_vec(),
            reference_samples: DEFAULT_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    pub which: Which,
    pub n0: usize,
    pub pilot: usize,
    pub time: f64,
    /// Orders of the crude-versus-control consecutive-difference table.
    pub orders: Vec<usize>,
    /// Order of the pointwise comparison (correlation, control coefficient).
    pub pointwise_order: usize,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            which: Which::S0,
            n0: 10,
            pilot: 2500,
            time: 1.5,
            orders: (11..=16).collect(),
            pointwise_order: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdvisorSection {
    pub epsilon: f64,
    /// Defaults to the midpoint of `(|t − t0|, r)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// Radius used when the problem declares none.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

impl Default for AdvisorSection {
    fn default() -> Self {
        AdvisorSection {
            epsilon: 1e-3,
            s: None,
            r: None,
        }
    }
}

/// A complete run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub convergence: ConvergenceSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub advisor: AdvisorSection,
}

impl RunConfig {
    /// Parses and validates a configuration; `origin` names the source in errors.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        cfg.validate().map_err(|e| match e {
            Error::Spec(msg) => Error::Config(format!("{origin}: {msg}")),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
            Error::Config(format!(
                "unknown preset `{name}` (available: {})",
                names.join(", ")
            ))
        })?;
        Self::from_toml_str(text, &format!("preset {name}"))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn role(&self) -> Role {
        self.estimator
            .role
            .unwrap_or_else(|| Role::default_for(&self.problem))
    }

    pub fn validate(&self) -> Result<()> {
        let max_order = [
            self.estimator.order,
            self.convergence.reference_order,
            self.sampling.order,
            self.control.pointwise_order,
        ]
        .into_iter()
        .chain(self.convergence.orders.iter().copied())
        .chain(self.control.orders.iter().copied())
        .max()
        .unwrap_or(1);
        self.problem.validate(max_order)?;
        self.estimator_config().validate()?;
        let role = self.role();
        let law = match role {
            Role::ViaY0 => &self.problem.y0,
            Role::ViaY1 => &self.problem.y1,
        };
        if !law.is_continuous() {
            return Err(Error::Spec(format!(
                "role {} needs a density, but the initial condition follows the {} law",
                role.name(),
                law.family().name()
            )));
        }
        if !(self.estimator.tail_tol > 0.0) {
            return Err(Error::Spec("tail_tol must be positive".into()));
        }
        Ok(())
    }

    /// Crude estimator settings from the `[estimator]` section.
    pub fn estimator_config(&self) -> EstimatorConfig {
        let e = &self.estimator;
        EstimatorConfig {
            order: e.order,
            samples: e.samples,
            role: self.role(),
            method: Method::Crude,
            seed: e.seed,
            threads: e.threads,
            degenerate_denominator_threshold: e.degenerate_denominator_threshold,
            degenerate_fraction_warn: e.degenerate_fraction_warn,
            independent_streams: e.independent_streams,
            term_budget: e.term_budget,
        }
    }

    /// Control-variate method from the `[control]` section.
    pub fn control_method(&self) -> Method {
        Method::ControlVariates {
            which: self.control.which,
            n0: self.control.n0,
            pilot_m: self.control.pilot,
        }
    }
}
