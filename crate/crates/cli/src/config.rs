//! Run configuration: a single JSON file drives every subcommand.
//!
//! Schema (all fields optional, defaults in parentheses):
//!
//! ```json
//! {
//!   "instance": "path/to/instance.json",        // or use "generator"
//!   "generator": {
//!     "n_agents": 20, "coupling_rows": 2,        // (desk preset)
//!     "int_vars": 2, "cont_vars": 1, "local_rows": 4,
//!     "seed": 1, "resource_mode": "loose",
//!     "scale": { "loose": [-30.0, -25.0], "tight": [-80.0, -75.0] },
//!     "perturb_costs": true
//!   },
//!   "graph": { "p": 0.2, "seed": 1 },
//!   "sigma": { "mode": "ft", "delta": null, "custom": null },
//!     // mode: "inf" | "ft" | "dd" | "custom"; delta defaults to 0.1 * S
//!   "schedule": { "kind": "power", "alpha0": 1.0, "exponent": 0.8 },
//!   "m_penalty": null,                           // (10 * max_i (||c_i||_1 + 1))
//!   "t_final": 2000,
//!   "recovery_cadence": 1,                       // 0 = final round only
//!   "monitor_cadence": 1,                        // feasibility check cadence
//!   "stop_on_feasible": false,
//!   "compute_bounds": true,
//!   "oracle_milp": false,                        // exact joint MILP (tiny instances)
//!   "output_dir": "out"
//! }
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use primal_decomp::agent::StepSizeSchedule;
use primal_decomp::model::{GeneratorParams, ResourceMode, ResourceScale};
use primal_decomp::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub instance: Option<PathBuf>,
    pub generator: Option<GeneratorConfig>,
    pub graph: GraphConfig,
    pub sigma: SigmaConfig,
    pub schedule: ScheduleConfig,
    pub m_penalty: Option<f64>,
    pub t_final: usize,
    pub recovery_cadence: usize,
    pub monitor_cadence: usize,
    pub stop_on_feasible: bool,
    pub compute_bounds: bool,
    pub oracle_milp: bool,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            instance: None,
            generator: None,
            graph: GraphConfig::default(),
            sigma: SigmaConfig::default(),
            schedule: ScheduleConfig::default(),
            m_penalty: None,
            t_final: 2000,
            recovery_cadence: 1,
            monitor_cadence: 1,
            stop_on_feasible: false,
            compute_bounds: true,
            oracle_milp: false,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_agents: usize,
    pub coupling_rows: usize,
    pub int_vars: usize,
    pub cont_vars: usize,
    pub local_rows: usize,
    pub seed: u64,
    pub resource_mode: ResourceMode,
    pub scale: ResourceScale,
    pub perturb_costs: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        // Desk preset.
        Self {
            n_agents: 20,
            coupling_rows: 2,
            int_vars: 2,
            cont_vars: 1,
            local_rows: 4,
            seed: 1,
            resource_mode: ResourceMode::Loose,
            scale: ResourceScale::desk(),
            perturb_costs: true,
        }
    }
}

impl GeneratorConfig {
    /// Full-scale recipe (300 agents, 5 rows, 15 variables per agent).
    pub fn paper(seed: u64, resource_mode: ResourceMode) -> Self {
        let p = GeneratorParams::paper(seed, resource_mode);
        Self::from(p)
    }

    pub fn params(&self) -> GeneratorParams {
        GeneratorParams {
            n_agents: self.n_agents,
            coupling_rows: self.coupling_rows,
            int_vars: self.int_vars,
            cont_vars: self.cont_vars,
            local_rows: self.local_rows,
            seed: self.seed,
            resource_mode: self.resource_mode,
            scale: self.scale,
            perturb_costs: self.perturb_costs,
        }
    }
}

impl From<GeneratorParams> for GeneratorConfig {
    fn from(p: GeneratorParams) -> Self {
        Self {
            n_agents: p.n_agents,
            coupling_rows: p.coupling_rows,
            int_vars: p.int_vars,
            cont_vars: p.cont_vars,
            local_rows: p.local_rows,
            seed: p.seed,
            resource_mode: p.resource_mode,
            scale: p.scale,
            perturb_costs: p.perturb_costs,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub p: f64,
    pub seed: u64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { p: 0.2, seed: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    /// Asymptotic tightening `sigma_inf`.
    Inf,
    /// Finite-time tightening `sigma_inf + delta 1`.
    Ft,
    /// Dual-decomposition baseline tightening.
    Dd,
    /// Explicit vector.
    Custom,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaConfig {
    pub mode: SigmaMode,
    /// Finite-time enlargement; `None` means `0.1 * S`.
    pub delta: Option<f64>,
    pub custom: Option<Vec<f64>>,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        Self {
            mode: SigmaMode::Ft,
            delta: None,
            custom: None,
        }
    }
}

impl SigmaConfig {
    pub fn delta_for(&self, coupling_rows: usize) -> f64 {
        match self.mode {
            SigmaMode::Ft => self.delta.unwrap_or(0.1 * coupling_rows as f64),
            _ => self.delta.unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub alpha0: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Harmonic,
    Power,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Power,
            alpha0: 1.0,
            exponent: 0.8,
        }
    }
}

impl ScheduleConfig {
    pub fn schedule(&self) -> Result<StepSizeSchedule> {
        match self.kind {
            ScheduleKind::Harmonic => StepSizeSchedule::harmonic(self.alpha0),
            ScheduleKind::Power => StepSizeSchedule::power(self.alpha0, self.exponent),
        }
    }
}
