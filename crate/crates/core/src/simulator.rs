//! Slot-level Monte Carlo of the source, harvester, controller and monitor.
//!
//! The simulator keeps the hidden source and the true AoII, which the
//! controller never sees: it acts on `(e, theta)` through a policy table
//! exactly as the MDP does.
//!
//! One call to [`SimulatorState::step`] covers slot `t` and lands on the
//! start of slot `t + 1`:
//!
//! 1. the controller reads `(e, theta)` and looks up its action;
//! 2. on `Act` the source is sampled; a transmission happens only if the
//!    sample disagrees with the monitor (or always, under
//!    [`TransmitRule::Always`]), and is delivered one slot later;
//! 3. energy: `e <- min(e + u - drain, E)` with `u ~ Bernoulli(mu)`;
//! 4. the source moves (stays with probability `p`), the delivered sample
//!    (if any) replaces the estimate, and the AoII of the new slot is scored.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::mdp::PolicyTable;
use crate::model::{Action, MdpState, ModelParams, TransmitRule};

pub const MIN_HORIZON: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    /// Slots per replication, burn-in included.
    pub horizon: u64,
    pub replications: usize,
    pub seed: u64,
    /// Fraction of each replication discarded before averaging.
    pub burn_in_frac: f64,
    /// Batches per replication for the batch-means error estimate.
    pub batches: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 1_000_000,
            replications: 5,
            seed: 1,
            burn_in_frac: 0.01,
            batches: 20,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSimulation(msg));
        if self.horizon < MIN_HORIZON {
            return bad(format!("horizon {} < {MIN_HORIZON}", self.horizon));
        }
        if self.replications < 1 {
            return bad("at least one replication required".into());
        }
        if !(0.0..1.0).contains(&self.burn_in_frac) {
            return bad(format!("burn_in_frac {} not in [0, 1)", self.burn_in_frac));
        }
        if self.batches < 2 || self.batches as u64 > self.horizon - self.burn_in_slots() {
            return bad(format!("batches {} out of range", self.batches));
        }
        Ok(())
    }

    pub fn burn_in_slots(&self) -> u64 {
        (self.horizon as f64 * self.burn_in_frac).floor() as u64
    }
}

#[derive(Debug, Clone)]
pub struct SimulatorState {
    /// True source state.
    pub x: u8,
    /// Monitor's estimate.
    pub x_hat: u8,
    pub e: u32,
    /// Controller-side AoI, clamped at `N`.
    pub theta: u32,
    /// True AoII, unclamped.
    pub delta: u64,
    pub t: u64,
    rng: ChaCha8Rng,
}

/// What happened during one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepRecord {
    pub action: Action,
    pub transmitted: bool,
}

impl SimulatorState {
    /// Synchronised start: estimate equals source, empty battery, AoI 1.
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self {
            x: 0,
            x_hat: 0,
            e: 0,
            theta: 1,
            delta: 0,
            t: 0,
            rng,
        }
    }

    pub fn mdp_state(&self) -> MdpState {
        MdpState::new(self.e, self.theta)
    }

    pub fn step(&mut self, policy: &PolicyTable, params: &ModelParams) -> StepRecord {
        let index = params
            .state_index(self.mdp_state())
            .expect("simulator state stays inside the MDP grid");
        let action = policy.action(index);

        let (drain, delivered) = match action {
            Action::Idle => {
                self.theta = (self.theta + 1).min(params.n_max);
                (0, None)
            }
            Action::Act => {
                assert!(
                    self.e >= params.act_cost(),
                    "policy acts at e={} below the act cost {}",
                    self.e,
                    params.act_cost()
                );
                self.theta = 1;
                if self.x != self.x_hat || params.transmit == TransmitRule::Always {
                    (params.c_s + params.c_t, Some(self.x))
                } else {
                    (params.c_s, None)
                }
            }
        };

        let harvest = u32::from(self.rng.gen::<f64>() < params.mu);
        assert!(self.e + harvest >= drain, "energy causality violated");
        self.e = (self.e + harvest - drain).min(params.cap_e);

        if self.rng.gen::<f64>() >= params.p {
            self.x ^= 1;
        }
        if let Some(sample) = delivered {
            self.x_hat = sample;
        }
        self.delta = if self.x == self.x_hat {
            0
        } else if delivered.is_some() || self.delta == 0 {
            1
        } else {
            self.delta + 1
        };
        self.t += 1;

        StepRecord {
            action,
            transmitted: delivered.is_some(),
        }
    }
}

/// Independent stream for replication `r` of a run seeded with `seed`.
pub fn replication_rng(seed: u64, replication: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

/// Point estimate with a batch-means standard error and 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimMetrics {
    pub avg_aoii: Estimate,
    pub avg_aoi: Estimate,
    /// Fraction of slots with the estimate differing from the source.
    pub real_time_error: Estimate,
    /// Fraction of slots with an `Act`.
    pub action_rate: Estimate,
    /// Fraction of slots with a transmission.
    pub transmit_rate: Estimate,
    pub mean_energy: Estimate,
    /// Scored slots across all replications.
    pub slots: u64,
}

const N_METRICS: usize = 6;

/// Per-batch sums of each metric.
struct BatchSums {
    sums: Vec<[f64; N_METRICS]>,
    counts: Vec<u64>,
}

fn simulate_replication(
    policy: &PolicyTable,
    params: &ModelParams,
    config: &SimConfig,
    replication: usize,
) -> BatchSums {
    let mut state = SimulatorState::new(replication_rng(config.seed, replication));
    let burn_in = config.burn_in_slots();
    let scored = config.horizon - burn_in;
    let batch_len = scored / config.batches as u64;
    let mut sums = vec![[0.0; N_METRICS]; config.batches];
    let mut counts = vec![0u64; config.batches];

    for slot in 0..config.horizon {
        let record = state.step(policy, params);
        if slot < burn_in {
            continue;
        }
        let batch = (((slot - burn_in) / batch_len) as usize).min(config.batches - 1);
        let row = &mut sums[batch];
        row[0] += state.delta as f64;
        row[1] += state.theta as f64;
        row[2] += f64::from(u8::from(state.x != state.x_hat));
        row[3] += f64::from(u8::from(record.action == Action::Act));
        row[4] += f64::from(u8::from(record.transmitted));
        row[5] += state.e as f64;
        counts[batch] += 1;
    }
    BatchSums { sums, counts }
}

fn estimate(batches: &[BatchSums], metric: usize, t_quantile: f64) -> Estimate {
    let total: f64 = batches
        .iter()
        .flat_map(|b| b.sums.iter().map(|s| s[metric]))
        .sum();
    let count: u64 = batches.iter().flat_map(|b| b.counts.iter()).sum();
    let mean = total / count as f64;

    let means: Vec<f64> = batches
        .iter()
        .flat_map(|b| b.sums.iter().zip(&b.counts).map(|(s, &c)| s[metric] / c as f64))
        .collect();
    let k = means.len() as f64;
    let batch_mean = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - batch_mean).powi(2)).sum::<f64>() / (k - 1.0);
    let std_err = (var / k).sqrt();
    Estimate {
        mean,
        std_err,
        half_width: t_quantile * std_err,
    }
}

/// Runs `replications` independent copies of the system under `policy`
/// and aggregates time averages over all batches. The result depends only
/// on the arguments, not on the number of worker threads.
pub fn run(policy: &PolicyTable, params: &ModelParams, config: &SimConfig) -> Result<SimMetrics> {
    params.validate()?;
    config.validate()?;
    if policy.len() != params.n_states() {
        return Err(Error::PolicySizeMismatch {
            got: policy.len(),
            expected: params.n_states(),
        });
    }
    if let Some((state, &action)) = policy
        .actions()
        .iter()
        .enumerate()
        .find(|&(s, &a)| !params.is_feasible(params.state_at(s).unwrap(), a))
    {
        return Err(Error::InfeasibleAction { state, action });
    }

    let batches: Vec<BatchSums> = (0..config.replications)
        .into_par_iter()
        .map(|r| simulate_replication(policy, params, config, r))
        .collect();

    let dof = (config.replications * config.batches) as f64 - 1.0;
    let t_quantile = StudentsT::new(0.0, 1.0, dof)
        .expect("at least two batches")
        .inverse_cdf(0.975);
    let metric = |m| estimate(&batches, m, t_quantile);
    Ok(SimMetrics {
        avg_aoii: metric(0),
        avg_aoi: metric(1),
        real_time_error: metric(2),
        action_rate: metric(3),
        transmit_rate: metric(4),
        mean_energy: metric(5),
        slots: batches.iter().flat_map(|b| b.counts.iter()).sum(),
    })
}

/// State at the start of a slot and the action taken in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub t: u64,
    pub x: u8,
    pub x_hat: u8,
    pub e: u32,
    pub theta: u32,
    pub delta: u64,
    pub action: Action,
}

/// Per-slot trace of replication 0 for debugging.
pub fn trace(policy: &PolicyTable, params: &ModelParams, slots: u64, seed: u64) -> Vec<TraceRow> {
    let mut state = SimulatorState::new(replication_rng(seed, 0));
    (0..slots)
        .map(|_| {
            let before = (state.t, state.x, state.x_hat, state.e, state.theta, state.delta);
            let record = state.step(policy, params);
            TraceRow {
                t: before.0,
                x: before.1,
                x_hat: before.2,
                e: before.3,
                theta: before.4,
                delta: before.5,
                action: record.action,
            }
        })
        .collect()
}
