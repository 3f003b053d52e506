//! Declarative experiment configuration: a JSON document selects a task,
//! a domain, model parameters and solver options, with schema validation
//! up front so bad parameter sets fail before any numerics run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DomainSpec;
use crate::mass::MassSolveOptions;
use crate::model::{Potential, PowerCouplingParams};
use crate::solver::SolverOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Solve,
    SolveMass,
    CheckAssumptions,
    PolarizeAudit,
    SweepBeta,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Solve => "solve",
            Task::SolveMass => "solve_mass",
            Task::CheckAssumptions => "check_assumptions",
            Task::PolarizeAudit => "polarize_audit",
            Task::SweepBeta => "sweep_beta",
        }
    }
}

fn default_model() -> PowerCouplingParams {
    PowerCouplingParams::cubic_pair([1.0, 1.0], 1.0)
}

fn default_diffusion() -> Vec<f64> {
    Vec::new()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub domain: DomainSpec,
    #[serde(default = "default_model")]
    pub model: PowerCouplingParams,
    /// One potential per component; omitted means V ≡ 0 for all.
    #[serde(default)]
    pub potentials: Vec<Potential>,
    /// One diffusion constant per component; omitted means c_i = 1.
    #[serde(default = "default_diffusion")]
    pub diffusion: Vec<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub mass_options: MassSolveOptions,
    #[serde(default)]
    pub seed: u64,
    /// β values for the sweep task; ignored elsewhere.
    #[serde(default)]
    pub betas: Vec<f64>,
    /// Random half-space audit size for the polarize task.
    #[serde(default = "default_audit_fields")]
    pub audit_fields: usize,
}

fn default_audit_fields() -> usize {
    8
}

impl ExperimentConfig {
    /// Fills in per-component defaults and checks cross-field consistency.
    pub fn resolve(mut self) -> Result<ExperimentConfig> {
        self.domain.validate()?;
        self.model.validate()?;
        self.solver.validate()?;
        let k = self.model.k;
        if self.diffusion.is_empty() {
            self.diffusion = vec![1.0; k];
        }
        if self.potentials.is_empty() {
            self.potentials = vec![Potential::Constant { value: 0.0 }; k];
        }
        if self.diffusion.len() != k || self.potentials.len() != k {
            return Err(Error::Config(format!(
                "model has k = {k} components but {} diffusion constants and {} potentials were given",
                self.diffusion.len(),
                self.potentials.len()
            )));
        }
        if self.diffusion.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::Config(
                "diffusion: all constants must be positive".into(),
            ));
        }
        match self.task {
            Task::SweepBeta => {
                if self.betas.is_empty() {
                    return Err(Error::Config("betas: sweep requires a nonempty list".into()));
                }
                if self.betas.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
                    return Err(Error::Config(
                        "betas: all values must be finite and nonnegative".into(),
                    ));
                }
                if k != 2 {
                    return Err(Error::Config("sweep_beta requires a k = 2 model".into()));
                }
            }
            Task::SolveMass | Task::PolarizeAudit => {
                if k != 2 {
                    return Err(Error::Config(format!(
                        "{} requires a k = 2 model",
                        self.task.as_str()
                    )));
                }
            }
            _ => {}
        }
        Ok(self)
    }

    /// The β of the cubic pair, used by the mass-constrained task.
    pub fn pair_beta(&self) -> f64 {
        self.model.beta[0][1]
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        Error::Config(format!(
            "config parse error at `{}`: {}",
            e.path(),
            e.inner()
        ))
    })?;
    raw.resolve()
}
