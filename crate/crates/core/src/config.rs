//! Run configuration files.
//!
//! A configuration is a TOML document. Top-level keys: `command`, `seed`,
//! `output`, `jobs`, and the tables `[density]`, `[solver]`, `[quadrature]`,
//! `[sandwich]`. Jobs are arrays of tables named after the command
//! (`[[envelope]]`, `[[surface]]`, `[[relax]]`, `[[verify]]`,
//! `[[hypotheses]]`); each job may carry its own `[..density]` table.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bv::{FieldSpec, LpFieldSpec, Quadrature};
use crate::density::{catalog, Dimensions, Exponent, Integrand};
use crate::energy::{EnergyMode, SandwichOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Envelope,
    Surface,
    Relax,
    Verify,
    Hypotheses,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Envelope => "envelope",
            Command::Surface => "surface",
            Command::Relax => "relax",
            Command::Verify => "verify",
            Command::Hypotheses => "hypotheses",
        }
    }
}

/// `p` as a number or as `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExponentSpec {
    Number(f64),
    Text(String),
}

impl Default for ExponentSpec {
    fn default() -> Self {
        ExponentSpec::Number(2.0)
    }
}

impl ExponentSpec {
    pub fn resolve(&self) -> Result<Exponent> {
        match self {
            ExponentSpec::Number(p) => Exponent::parse(&p.to_string()),
            ExponentSpec::Text(s) => Exponent::parse(s),
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    /// Catalog name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Expression in `x`, `u`, `b`, `xi`, `p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default)]
    pub exponent: ExponentSpec,
    #[serde(default = "one")]
    pub space_dim: usize,
    #[serde(default = "one")]
    pub target_dim: usize,
    #[serde(default = "one")]
    pub field_dim: usize,
}

impl DensityConfig {
    pub fn catalog(name: &str, exponent: f64) -> Self {
        DensityConfig {
            name: Some(name.into()),
            expr: None,
            exponent: ExponentSpec::Number(exponent),
            space_dim: 1,
            target_dim: 1,
            field_dim: 1,
        }
    }

    pub fn dims(&self) -> Result<Dimensions> {
        Dimensions::new(self.space_dim, self.target_dim, self.field_dim, self.exponent.resolve()?)
    }

    pub fn build(&self) -> Result<Integrand> {
        let dims = self.dims()?;
        match (&self.name, &self.expr) {
            (Some(name), None) => catalog(name, dims),
            (None, Some(expr)) => Integrand::from_expression(expr, dims),
            _ => Err(Error::Config("density: exactly one of `name` and `expr` must be given".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub grid_n: usize,
    pub multistart: usize,
    pub tol: f64,
    pub oscillation_levels: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { grid_n: 16, multistart: 4, tol: 1e-6, oscillation_levels: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub n: usize,
    #[serde(default = "four")]
    pub jump_points: usize,
}

fn four() -> usize {
    4
}

impl QuadratureConfig {
    pub fn to_quadrature(&self) -> Quadrature {
        Quadrature { n: self.n, jump_points: self.jump_points }
    }
}

/// Envelope-based bulk check for `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeCheck {
    pub grid_n: usize,
    pub multistart: usize,
    /// Bulk quadrature points.
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SandwichConfig {
    pub k_ladder: Vec<usize>,
    pub eps_ladder: Vec<f64>,
    pub tol_rel: f64,
    pub tail: usize,
    pub panels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope_check: Option<EnvelopeCheck>,
}

impl Default for SandwichConfig {
    fn default() -> Self {
        let o = SandwichOptions::default();
        SandwichConfig {
            k_ladder: o.k_ladder,
            eps_ladder: o.eps_ladder,
            tol_rel: o.tol_rel,
            tail: o.tail,
            panels: o.panels,
            envelope_check: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeJob {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    pub b: Vec<f64>,
    pub xi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceKind {
    Kp,
    Kinf,
    Kr,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceJob {
    pub kind: SurfaceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub nu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityConfig>,
}

/// A `relax` or `verify` job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldJob {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<EnergyMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<LpFieldSpec>,
    pub field: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesesJob {
    #[serde(default = "probes")]
    pub probes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityConfig>,
}

fn probes() -> usize {
    64
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    pub density: DensityConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureConfig>,
    #[serde(default)]
    pub sandwich: SandwichConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub envelope: Vec<EnvelopeJob>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub surface: Vec<SurfaceJob>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relax: Vec<FieldJob>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verify: Vec<FieldJob>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hypotheses: Vec<HypothesesJob>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn job_count(&self) -> usize {
        match self.command {
            Command::Envelope => self.envelope.len(),
            Command::Surface => self.surface.len(),
            Command::Relax => self.relax.len(),
            Command::Verify => self.verify.len(),
            Command::Hypotheses => self.hypotheses.len(),
        }
    }

    /// Structural checks that do not need a solve.
    pub fn validate(&self) -> Result<()> {
        let key = self.command.as_str();
        if self.command != Command::Hypotheses && self.job_count() == 0 {
            return Err(Error::Config(format!("no `[[{key}]]` jobs for command `{key}`")));
        }
        self.density.build().map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(format!("density: {other}")),
        })?;
        if self.solver.grid_n < 2 {
            return Err(Error::Config(format!("solver.grid_n: must be at least 2, got {}", self.solver.grid_n)));
        }
        if self.solver.multistart < 1 {
            return Err(Error::Config("solver.multistart: must be at least 1".into()));
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config("solver.tol: must be positive".into()));
        }
        if let Some(q) = &self.quadrature {
            if q.n < 2 || q.jump_points < 1 {
                return Err(Error::Config("quadrature: n must be at least 2 and jump_points at least 1".into()));
            }
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs: must be at least 1".into()));
        }
        if !(self.sandwich.tol_rel >= 0.0) || self.sandwich.k_ladder.contains(&0) {
            return Err(Error::Config("sandwich: tol_rel must be nonnegative and k_ladder entries positive".into()));
        }
        if self.sandwich.eps_ladder.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config("sandwich.eps_ladder: entries must be positive".into()));
        }
        Ok(())
    }

    /// Canonical TOML form, with defaults filled in.
    pub fn normalized(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn sandwich_options(&self) -> SandwichOptions {
        let s = &self.sandwich;
        SandwichOptions {
            k_ladder: s.k_ladder.clone(),
            eps_ladder: s.eps_ladder.clone(),
            tol_rel: s.tol_rel,
            tail: s.tail,
            panels: s.panels,
            envelope: s.envelope_check.as_ref().map(|c| {
                let solver = crate::cell::SolverSettings {
                    grid_n: c.grid_n,
                    multistart: c.multistart,
                    seed: self.seed,
                    ..Default::default()
                };
                (solver, c.points)
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STEP: &str = r#"
command = "relax"
seed = 3

[density]
name = "p-norm-sum"
exponent = 2

[[relax]]
name = "step"
[relax.field]
domain = [[0.0, 1.0]]
[[relax.field.pieces]]
region = { interval = [0.0, 0.5] }
value = "0"
[[relax.field.pieces]]
region = { interval = [0.5, 1.0] }
value = "1"
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::parse(STEP).unwrap();
        assert_eq!(cfg.command, Command::Relax);
        assert_eq!(cfg.relax[0].field.pieces.len(), 2);
        let again = RunConfig::parse(&cfg.normalized().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let bad = STEP.replace("seed = 3", "seed = 3\ngrid = 4");
        let Err(Error::Config(msg)) = RunConfig::parse(&bad) else { panic!() };
        assert!(msg.contains("grid"), "{msg}");
    }

    #[test]
    fn infinite_exponent() {
        let cfg = RunConfig::parse(&STEP.replace("exponent = 2", "exponent = \"inf\"")).unwrap();
        assert_eq!(cfg.density.exponent.resolve().unwrap(), Exponent::Infinity);
    }

    #[test]
    fn density_needs_name_or_expr() {
        let bad = STEP.replace("name = \"p-norm-sum\"", "");
        assert!(matches!(RunConfig::parse(&bad), Err(Error::Config(_))));
    }
}
