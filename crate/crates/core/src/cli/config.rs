//! Experiment configuration files.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::barycenter::SolveOptions;
use crate::error::{GeometryError, Result};
use crate::measures::{random_measure, FiniteMeasure};
use crate::rng::{derive_seed, seeded};
use crate::spaces::{Bounds, Point, SpaceDescriptor};

/// How the measure of an experiment is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Inline {
        support: Vec<Point>,
        weights: Vec<f64>,
    },
    /// `atoms` points drawn uniformly from `bounds` (the family default when
    /// absent), seeded from the experiment seed.
    Sampler {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<Bounds>,
        atoms: usize,
        #[serde(default)]
        random_weights: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckName {
    LangSchroeder,
    FirstOrder,
    Mixture,
    UstatRate,
    Subadd,
    Approx,
    Opposite,
    SupportLin,
    Linearity,
    Parallelogram,
    Comparison,
}

impl CheckName {
    pub const ALL: [CheckName; 11] = [
        CheckName::LangSchroeder,
        CheckName::FirstOrder,
        CheckName::Mixture,
        CheckName::UstatRate,
        CheckName::Subadd,
        CheckName::Approx,
        CheckName::Opposite,
        CheckName::SupportLin,
        CheckName::Linearity,
        CheckName::Parallelogram,
        CheckName::Comparison,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::LangSchroeder => "lang-schroeder",
            CheckName::FirstOrder => "first-order",
            CheckName::Mixture => "mixture",
            CheckName::UstatRate => "ustat-rate",
            CheckName::Subadd => "subadd",
            CheckName::Approx => "approx",
            CheckName::Opposite => "opposite",
            CheckName::SupportLin => "support-lin",
            CheckName::Linearity => "linearity",
            CheckName::Parallelogram => "parallelogram",
            CheckName::Comparison => "comparison",
        }
    }

    pub fn default_tolerance(self) -> f64 {
        match self {
            CheckName::LangSchroeder
            | CheckName::SupportLin
            | CheckName::Linearity
            | CheckName::Parallelogram
            | CheckName::Comparison => 1e-9,
            CheckName::FirstOrder => 1e-6,
            CheckName::Mixture => 1e-8,
            CheckName::UstatRate | CheckName::Subadd | CheckName::Approx | CheckName::Opposite => 1e-12,
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown check `{s}`; valid names: {}", Self::valid_names()))
    }
}

/// Kernel `f(x, y)` for the U-statistic rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `<log_b x, log_b y>_b` at the experiment base point.
    #[default]
    Inner,
    /// `d(x, y)^2`.
    DistanceSq,
}

/// Optional per-check parameters; absent fields take the check's defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_schedule: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_schedule: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_schedule: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_slack: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_angle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integral_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bary_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Kernel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub name: CheckName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub params: CheckParams,
}

fn is_default(p: &CheckParams) -> bool {
    *p == CheckParams::default()
}

impl CheckSpec {
    pub fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or_else(|| self.name.default_tolerance())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceDescriptor,
    pub measure: MeasureSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    /// Base point for the U-statistic kernel; the first atom when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// A validated configuration with its measure materialised.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub space: SpaceDescriptor,
    pub measure: FiniteMeasure,
    pub bounds: Bounds,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("invalid config: {e}"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        self.solve.validate()?;
        for c in &self.checks {
            if let Some(t) = c.tolerance {
                if !(t.is_finite() && t > 0.0) {
                    return Err(GeometryError::input(format!(
                        "tolerance of `{}` must be positive, got {t}",
                        c.name
                    )));
                }
            }
        }
        if let Some(b) = &self.base {
            self.space.check_point(b)?;
        }
        Ok(())
    }

    /// Validates the configuration and builds the measure.
    pub fn build(&self) -> Result<Experiment> {
        self.validate()?;
        let s = &self.space;
        let default_bounds = Bounds::default_for(s);
        let (measure, bounds) = match &self.measure {
            MeasureSpec::Inline { support, weights } => {
                (FiniteMeasure::new(s, support.clone(), weights.clone())?, default_bounds)
            }
            MeasureSpec::Sampler {
                bounds,
                atoms,
                random_weights,
            } => {
                let b = bounds.clone().unwrap_or(default_bounds);
                b.validate(s)?;
                let mut rng = seeded(derive_seed(self.seed, u64::MAX));
                (random_measure(s, &b, *atoms, *random_weights, &mut rng)?, b)
            }
        };
        Ok(Experiment {
            config: self.clone(),
            space: s.clone(),
            measure,
            bounds,
        })
    }
}

impl Experiment {
    pub fn base(&self) -> Point {
        self.config
            .base
            .clone()
            .unwrap_or_else(|| self.measure.support()[0].clone())
    }
}
