//! Run configuration: defaults, overlaid by an optional JSON file, overlaid by flags.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use lef_core::radialode::{DEFAULT_R_MAX, DEFAULT_TOL};
use lef_core::{ModelKind, ModelSpec};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Alpha,
    Radius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaRange {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Geometric instead of linear spacing.
    #[serde(default)]
    pub log: bool,
}

impl AlphaRange {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        (0..self.count)
            .map(|i| {
                let t = i as f64 / (self.count - 1) as f64;
                if self.log {
                    self.lo * (self.hi / self.lo).powf(t)
                } else {
                    self.lo + (self.hi - self.lo) * t
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

/// Everything optional: the on-disk schema and the flag overlay share it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub schema_version: Option<u32>,
    pub model: Option<PartialModel>,
    pub p: Option<f64>,
    pub alpha: Option<f64>,
    pub alphas: Option<Vec<f64>>,
    pub alpha_range: Option<AlphaRange>,
    pub r_max: Option<f64>,
    pub tol: Option<f64>,
    pub grid_count: Option<usize>,
    pub r_horizon: Option<f64>,
    pub tol_alpha: Option<f64>,
    pub radius: Option<f64>,
    pub radii: Option<Vec<f64>>,
    pub window: Option<[f64; 2]>,
    pub sweep_over: Option<SweepAxis>,
    pub threads: Option<usize>,
    pub output: Option<OutputSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialModel {
    pub kind: Option<ModelKind>,
    pub n: Option<u32>,
    pub gamma: Option<f64>,
    pub expr: Option<String>,
}

/// Fully resolved configuration, echoed into every artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub command: String,
    pub model: ModelSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    pub r_max: f64,
    pub tol: f64,
    pub grid_count: usize,
    pub r_horizon: f64,
    pub tol_alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    pub window: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_over: Option<SweepAxis>,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

/// A field-level configuration problem.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config.{}: {}", self.field, self.message)
    }
}

fn field(field: &'static str, message: impl Into<String>) -> FieldError {
    FieldError {
        field,
        message: message.into(),
    }
}

pub fn load_file(path: &Path) -> Result<PartialConfig, FieldError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| field("file", format!("cannot read {}: {e}", path.display())))?;
    let cfg: PartialConfig =
        serde_json::from_str(&text).map_err(|e| field("file", format!("{}: {e}", path.display())))?;
    match cfg.schema_version {
        Some(SCHEMA_VERSION) => Ok(cfg),
        Some(v) => Err(field(
            "schema_version",
            format!("unsupported version {v} (expected {SCHEMA_VERSION})"),
        )),
        None => Err(field("schema_version", "missing")),
    }
}

impl PartialModel {
    fn overlay(self, top: PartialModel) -> PartialModel {
        PartialModel {
            kind: top.kind.or(self.kind),
            n: top.n.or(self.n),
            gamma: top.gamma.or(self.gamma),
            expr: top.expr.or(self.expr),
        }
    }

    fn resolve(self) -> Result<ModelSpec, FieldError> {
        let kind = self.kind.ok_or_else(|| field("model.kind", "required"))?;
        let n = self.n.ok_or_else(|| field("model.n", "required"))?;
        Ok(match kind {
            ModelKind::Euclidean => ModelSpec::euclidean(n),
            ModelKind::Hyperbolic => ModelSpec::hyperbolic(n),
            ModelKind::ExpPower => ModelSpec::exp_power(
                self.gamma
                    .ok_or_else(|| field("model.gamma", "required for exp_power"))?,
                n,
            ),
            ModelKind::Custom => {
                ModelSpec::custom(self.expr.ok_or_else(|| field("model.expr", "required for custom"))?, n)
            }
        })
    }
}

impl PartialConfig {
    /// `top` wins field by field.
    pub fn overlay(self, top: PartialConfig) -> PartialConfig {
        let model = match (self.model, top.model) {
            (Some(a), Some(b)) => Some(a.overlay(b)),
            (a, b) => b.or(a),
        };
        let output = match (self.output, top.output) {
            (Some(a), Some(b)) => Some(OutputSpec {
                format: b.format.or(a.format),
                path: b.path.or(a.path),
            }),
            (a, b) => b.or(a),
        };
        PartialConfig {
            schema_version: top.schema_version.or(self.schema_version),
            model,
            p: top.p.or(self.p),
            alpha: top.alpha.or(self.alpha),
            alphas: top.alphas.or(self.alphas),
            alpha_range: top.alpha_range.or(self.alpha_range),
            r_max: top.r_max.or(self.r_max),
            tol: top.tol.or(self.tol),
            grid_count: top.grid_count.or(self.grid_count),
            r_horizon: top.r_horizon.or(self.r_horizon),
            tol_alpha: top.tol_alpha.or(self.tol_alpha),
            radius: top.radius.or(self.radius),
            radii: top.radii.or(self.radii),
            window: top.window.or(self.window),
            sweep_over: top.sweep_over.or(self.sweep_over),
            threads: top.threads.or(self.threads),
            output,
        }
    }

    /// Fill defaults and check the generic constraints; command-specific
    /// requirements are checked by the accessors on [`RunConfig`].
    pub fn resolve(self, command: &str, default_format: Format) -> Result<RunConfig, FieldError> {
        let model = self.model.unwrap_or_default().resolve()?;
        let alphas = match (self.alphas, self.alpha_range) {
            (Some(_), Some(_)) => return Err(field("alphas", "give either alphas or alpha_range, not both")),
            (Some(a), None) => Some(a),
            (None, Some(r)) => {
                if r.count == 0 || !(r.lo <= r.hi) || (r.log && !(r.lo > 0.0)) {
                    return Err(field("alpha_range", "needs count >= 1, lo <= hi, and lo > 0 when log"));
                }
                Some(r.values())
            }
            (None, None) => None,
        };
        let output = self.output.unwrap_or_default();
        let cfg = RunConfig {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            model,
            p: self.p,
            alpha: self.alpha,
            alphas,
            r_max: self.r_max.unwrap_or(DEFAULT_R_MAX),
            tol: self.tol.unwrap_or(DEFAULT_TOL),
            grid_count: self.grid_count.unwrap_or(400),
            r_horizon: self.r_horizon.unwrap_or(150.0),
            tol_alpha: self.tol_alpha.unwrap_or(1e-6),
            radius: self.radius,
            radii: self.radii,
            window: self.window.unwrap_or([10.0, 50.0]),
            sweep_over: self.sweep_over,
            format: output.format.unwrap_or(default_format),
            path: output.path,
        };
        cfg.check()?;
        Ok(cfg)
    }
}

impl RunConfig {
    fn check(&self) -> Result<(), FieldError> {
        if let Some(p) = self.p {
            if !(p > 1.0 && p.is_finite()) {
                return Err(field("p", format!("must be a finite number > 1 (got {p})")));
            }
        }
        if let Some(a) = self.alpha {
            if !a.is_finite() {
                return Err(field("alpha", "must be finite"));
            }
        }
        if let Some(a) = &self.alphas {
            if a.is_empty() || a.iter().any(|v| !v.is_finite()) {
                return Err(field("alphas", "must be a nonempty list of finite numbers"));
            }
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(field("r_max", format!("must be positive (got {})", self.r_max)));
        }
        if !(1e-12..=1e-4).contains(&self.tol) {
            return Err(field("tol", format!("must lie in [1e-12, 1e-4] (got {})", self.tol)));
        }
        if self.grid_count < 200 {
            return Err(field(
                "grid_count",
                format!("must be at least 200 (got {})", self.grid_count),
            ));
        }
        if !(self.tol_alpha > 0.0 && self.tol_alpha < 1.0) {
            return Err(field("tol_alpha", "must lie in (0, 1)"));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(field("radius", "must be positive"));
            }
        }
        if let Some(r) = &self.radii {
            if r.is_empty() || r[0] <= 0.0 || r.windows(2).any(|w| w[1] <= w[0]) {
                return Err(field("radii", "must be positive and strictly increasing"));
            }
        }
        if !(0.0 < self.window[0] && self.window[0] < self.window[1]) {
            return Err(field("window", "must satisfy 0 < lo < hi"));
        }
        Ok(())
    }

    pub fn p(&self) -> Result<f64, FieldError> {
        self.p
            .ok_or_else(|| field("p", format!("required by `{}`", self.command)))
    }

    pub fn alpha(&self) -> Result<f64, FieldError> {
        self.alpha
            .ok_or_else(|| field("alpha", format!("required by `{}`", self.command)))
    }

    pub fn alphas(&self) -> Result<&[f64], FieldError> {
        self.alphas
            .as_deref()
            .ok_or_else(|| field("alphas", format!("required by `{}` (or alpha_range)", self.command)))
    }

    pub fn formats(&self, allowed: &[Format]) -> Result<(), FieldError> {
        if allowed.contains(&self.format) {
            Ok(())
        } else {
            Err(field(
                "output.format",
                format!("`{}` does not produce {:?} output", self.command, self.format),
            ))
        }
    }
}
