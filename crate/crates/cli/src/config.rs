//! Experiment configuration: a TOML file of top-level keys, each optional
//! and defaulting to the built-in experiment.

use std::path::{Path, PathBuf};

use aoii_core::simulator::SimConfig;
use aoii_core::solver::RviConfig;
use aoii_core::{MdpState, ModelParams, Objective, TransmitRule};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Policy simulated by the `simulate` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyChoice {
    /// RVI-optimal for the expected AoII.
    Aoii,
    /// RVI-optimal for the AoI.
    Aoi,
    Idle,
    /// `Act` wherever feasible.
    Act,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub solver: RviConfig,
    pub sim: SimConfig,
    pub policy: PolicyChoice,
    /// Objective optimised by `solve`.
    pub objective: Objective,
    /// Also run the exhaustive oracle in `solve` (tiny instances only).
    pub tiny_oracle: bool,
    pub sweep_n: Vec<u32>,
    pub sweep_n_p: f64,
    pub sweep_n_mu: f64,
    pub compare_p: Vec<f64>,
    pub compare_mu: f64,
    /// Objective of the baseline policy in `compare`.
    pub compare_baseline: Objective,
    /// Transmission rule of the system the baseline runs on.
    pub baseline_transmit: TransmitRule,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            solver: RviConfig::default(),
            sim: SimConfig::default(),
            policy: PolicyChoice::Aoii,
            objective: Objective::Aoii,
            tiny_oracle: false,
            sweep_n: vec![2, 5, 10, 15, 20, 25, 30],
            sweep_n_p: 0.7,
            sweep_n_mu: 0.3,
            compare_p: vec![0.6, 0.7, 0.8, 0.9],
            compare_mu: 0.5,
            compare_baseline: Objective::Aoi,
            baseline_transmit: TransmitRule::Always,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// On-disk form: every key optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    p: Option<f64>,
    mu: Option<f64>,
    cap_e: Option<u32>,
    c_s: Option<u32>,
    c_t: Option<u32>,
    n_max: Option<u32>,
    transmit: Option<TransmitRule>,
    epsilon: Option<f64>,
    max_iters: Option<usize>,
    ref_e: Option<u32>,
    ref_theta: Option<u32>,
    damping: Option<f64>,
    horizon: Option<u64>,
    replications: Option<usize>,
    seed: Option<u64>,
    burn_in_frac: Option<f64>,
    batches: Option<usize>,
    policy: Option<PolicyChoice>,
    objective: Option<Objective>,
    tiny_oracle: Option<bool>,
    sweep_n: Option<Vec<u32>>,
    sweep_n_p: Option<f64>,
    sweep_n_mu: Option<f64>,
    compare_p: Option<Vec<f64>>,
    compare_mu: Option<f64>,
    compare_baseline: Option<Objective>,
    baseline_transmit: Option<TransmitRule>,
    out_dir: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    /// Parses a TOML document of top-level keys over the defaults.
    pub fn parse_str(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut cfg = Self::default();
        let m = &mut cfg.model;
        set(&mut m.p, raw.p);
        set(&mut m.mu, raw.mu);
        set(&mut m.cap_e, raw.cap_e);
        set(&mut m.c_s, raw.c_s);
        set(&mut m.c_t, raw.c_t);
        set(&mut m.n_max, raw.n_max);
        set(&mut m.transmit, raw.transmit);
        let s = &mut cfg.solver;
        set(&mut s.epsilon, raw.epsilon);
        set(&mut s.max_iters, raw.max_iters);
        set(&mut s.ref_state.e, raw.ref_e);
        set(&mut s.ref_state.theta, raw.ref_theta);
        s.damping = raw.damping;
        let sim = &mut cfg.sim;
        set(&mut sim.horizon, raw.horizon);
        set(&mut sim.replications, raw.replications);
        set(&mut sim.seed, raw.seed);
        set(&mut sim.burn_in_frac, raw.burn_in_frac);
        set(&mut sim.batches, raw.batches);
        set(&mut cfg.policy, raw.policy);
        set(&mut cfg.objective, raw.objective);
        set(&mut cfg.tiny_oracle, raw.tiny_oracle);
        set(&mut cfg.sweep_n, raw.sweep_n);
        set(&mut cfg.sweep_n_p, raw.sweep_n_p);
        set(&mut cfg.sweep_n_mu, raw.sweep_n_mu);
        set(&mut cfg.compare_p, raw.compare_p);
        set(&mut cfg.compare_mu, raw.compare_mu);
        set(&mut cfg.compare_baseline, raw.compare_baseline);
        set(&mut cfg.baseline_transmit, raw.baseline_transmit);
        set(&mut cfg.out_dir, raw.out_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the base model and every swept point.
    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |e: aoii_core::Error| CliError::Config(e.to_string());
        self.model.validate().map_err(invalid)?;
        self.sim.validate().map_err(invalid)?;
        if !self.model.contains(self.solver.ref_state) {
            return Err(CliError::Config(format!(
                "reference state {:?} outside the state space",
                self.solver.ref_state
            )));
        }
        if self.solver.epsilon.is_nan() || self.solver.epsilon <= 0.0 {
            return Err(CliError::Config("`epsilon` must be positive".into()));
        }
        if let Some(t) = self.solver.damping {
            if !(t > 0.0 && t <= 1.0) {
                return Err(CliError::Config(format!("`damping` {t} not in (0, 1]")));
            }
        }
        for point in self.sweep_n_points() {
            point.validate().map_err(invalid)?;
        }
        for point in self.compare_points() {
            point.validate().map_err(invalid)?;
        }
        Ok(())
    }

    /// Sweep-n model points, sorted and deduplicated by `N`.
    pub fn sweep_n_points(&self) -> Vec<ModelParams> {
        let mut ns = self.sweep_n.clone();
        ns.sort_unstable();
        ns.dedup();
        ns.into_iter()
            .map(|n_max| ModelParams {
                p: self.sweep_n_p,
                mu: self.sweep_n_mu,
                n_max,
                ..self.model
            })
            .collect()
    }

    /// Compare model points (one per `p`, in the given order).
    pub fn compare_points(&self) -> Vec<ModelParams> {
        self.compare_p
            .iter()
            .map(|&p| ModelParams {
                p,
                mu: self.compare_mu,
                ..self.model
            })
            .collect()
    }

    /// Reference state for a model whose bounds may differ from the base one
    /// (clamped into range).
    pub fn ref_state_for(&self, params: &ModelParams) -> MdpState {
        MdpState::new(
            self.solver.ref_state.e.min(params.cap_e),
            self.solver.ref_state.theta.clamp(1, params.n_max),
        )
    }
}
