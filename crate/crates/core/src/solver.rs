//! Average-cost solvers: relative value iteration, exact evaluation of a
//! fixed policy through its stationary distribution, and exhaustive policy
//! enumeration for tiny instances.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::chain_analysis::{decompose, induce_chain};
use crate::error::{Error, Result};
use crate::mdp::{MdpKernel, PolicyTable};
use crate::model::{Action, MdpState};

/// Below this many states the Bellman sweep runs on one thread.
const PARALLEL_SWEEP_MIN_STATES: usize = 4096;

/// Largest instance `enumerate_policies_oracle` accepts.
pub const ENUMERATION_STATE_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RviConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    pub ref_state: MdpState,
    /// Aperiodicity transform `tau * P + (1 - tau) * I` with `tau` in
    /// (0, 1]. `None` runs plain RVI.
    pub damping: Option<f64>,
}

impl Default for RviConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-9,
            max_iters: 1_000_000,
            ref_state: MdpState::new(0, 1),
            damping: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    /// Optimal long-run average cost.
    pub gain: f64,
    /// Relative values, zero at the reference state.
    pub values: Vec<f64>,
    pub policy: PolicyTable,
    pub iterations: usize,
    /// Span of the last Bellman residual `T h - h`.
    pub residual_span: f64,
    pub ref_index: usize,
}

/// Picks the minimising action at `state`; `Act` must beat `Idle` by more
/// than a relative 1e-12 to be chosen.
fn greedy_backup(kernel: &MdpKernel, state: usize, h: &[f64], tau: f64) -> (f64, Action) {
    let c = kernel.cost()[state];
    let q = |a| {
        kernel
            .expectation(state, a, h)
            .map(|ev| c + tau * ev + (1.0 - tau) * h[state])
    };
    let idle = q(Action::Idle).expect("idle row always exists");
    match q(Action::Act) {
        Some(act) if act < idle - 1e-12 * idle.abs().max(1.0) => (act, Action::Act),
        _ => (idle, Action::Idle),
    }
}

/// Relative value iteration with synchronous sweeps, stopping once the
/// span of `T h - h` drops below `epsilon`.
pub fn rvi_solve(kernel: &MdpKernel, config: &RviConfig) -> Result<SolveResult> {
    if config.epsilon.is_nan() || config.epsilon <= 0.0 {
        return Err(Error::InvalidParam {
            name: "epsilon",
            reason: format!("{} must be positive", config.epsilon),
        });
    }
    let tau = match config.damping {
        None => 1.0,
        Some(t) if t > 0.0 && t <= 1.0 => t,
        Some(t) => {
            return Err(Error::InvalidParam {
                name: "damping",
                reason: format!("{t} not in (0, 1]"),
            })
        }
    };
    let ref_index = kernel.params().state_index(config.ref_state)?;
    let n = kernel.n_states();
    let mut h = vec![0.0; n];
    let mut backup = vec![(0.0, Action::Idle); n];
    let mut span = f64::INFINITY;

    for iteration in 1..=config.max_iters {
        if n >= PARALLEL_SWEEP_MIN_STATES {
            backup
                .par_iter_mut()
                .enumerate()
                .for_each(|(s, out)| *out = greedy_backup(kernel, s, &h, tau));
        } else {
            for (s, out) in backup.iter_mut().enumerate() {
                *out = greedy_backup(kernel, s, &h, tau);
            }
        }

        let (lo, hi) = backup
            .iter()
            .zip(&h)
            .map(|((th, _), hs)| th - hs)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                (lo.min(d), hi.max(d))
            });
        span = hi - lo;

        if span < config.epsilon {
            let gain = backup[ref_index].0 - h[ref_index];
            let policy = PolicyTable::new(backup.iter().map(|&(_, a)| a).collect());
            let values = h.iter().map(|v| v * tau).collect();
            return Ok(SolveResult {
                gain,
                values,
                policy,
                iterations: iteration,
                residual_span: span,
                ref_index,
            });
        }

        let anchor = backup[ref_index].0;
        for (hs, (th, _)) in h.iter_mut().zip(&backup) {
            *hs = th - anchor;
        }
    }

    Err(Error::NotConverged {
        iterations: config.max_iters,
        residual_span: span,
    })
}

/// `max_s |C(s) + min_a E[h(s')] - h(s) - gain|`.
pub fn bellman_residual(kernel: &MdpKernel, gain: f64, values: &[f64]) -> f64 {
    (0..kernel.n_states())
        .map(|s| {
            let (th, _) = greedy_backup(kernel, s, values, 1.0);
            (th - values[s] - gain).abs()
        })
        .fold(0.0, f64::max)
}

/// Stationary distribution (over all states, zero off the class) of the
/// unique recurrent class `policy` reaches from `start`.
pub fn stationary_distribution(
    kernel: &MdpKernel,
    policy: &PolicyTable,
    start: MdpState,
) -> Result<Vec<f64>> {
    let start_index = kernel.params().state_index(start)?;
    let chain = induce_chain(kernel, policy)?;
    let decomposition = decompose(&chain);

    let mut reached: Vec<usize> = chain
        .reachable_from(start_index)
        .into_iter()
        .filter(|&s| !decomposition.is_transient(s))
        .map(|s| decomposition.membership[s])
        .collect();
    reached.sort_unstable();
    reached.dedup();
    if reached.len() != 1 {
        return Err(Error::MultipleRecurrentClasses {
            start: start_index,
            count: reached.len(),
        });
    }
    let class = &decomposition.classes[reached[0]].states;
    let m = class.len();
    let mut local = vec![usize::MAX; kernel.n_states()];
    for (i, &s) in class.iter().enumerate() {
        local[s] = i;
    }

    // pi (P - I) = 0 with the last balance equation replaced by sum(pi) = 1.
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (i, &s) in class.iter().enumerate() {
        for t in chain.row(s) {
            a[(local[t.next], i)] += t.prob;
        }
        a[(i, i)] -= 1.0;
    }
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(m);
    rhs[m - 1] = 1.0;

    let pi = a
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or(Error::SingularStationary { class_size: m })?;

    let mut full = vec![0.0; kernel.n_states()];
    for (i, &s) in class.iter().enumerate() {
        full[s] = pi[i].max(0.0);
    }
    Ok(full)
}

/// Long-run average of `cost` under `policy` started from `start`.
pub fn evaluate_policy_with_cost(
    kernel: &MdpKernel,
    policy: &PolicyTable,
    start: MdpState,
    cost: &[f64],
) -> Result<f64> {
    let pi = stationary_distribution(kernel, policy, start)?;
    Ok(pi.iter().zip(cost).map(|(p, c)| p * c).sum())
}

/// Long-run average of the kernel's own cost under `policy`.
pub fn evaluate_policy_exact(kernel: &MdpKernel, policy: &PolicyTable, start: MdpState) -> Result<f64> {
    evaluate_policy_with_cost(kernel, policy, start, kernel.cost())
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub best_gain: f64,
    pub best_policy: PolicyTable,
    /// Policies evaluated successfully.
    pub evaluated: usize,
    /// Policies skipped because they reach several recurrent classes.
    pub skipped: usize,
}

/// Minimum average cost from `start` over every deterministic feasible
/// policy. Ties keep the policy that acts in fewer (earlier-indexed) places.
pub fn enumerate_policies_oracle(kernel: &MdpKernel, start: MdpState) -> Result<OracleResult> {
    let n = kernel.n_states();
    if n > ENUMERATION_STATE_LIMIT {
        return Err(Error::InstanceTooLarge {
            n_states: n,
            limit: ENUMERATION_STATE_LIMIT,
        });
    }
    let act_states: Vec<usize> = (0..n)
        .filter(|&s| kernel.is_feasible(s, Action::Act))
        .collect();

    let mut best: Option<(f64, PolicyTable)> = None;
    let (mut evaluated, mut skipped) = (0, 0);
    for mask in 0u32..1 << act_states.len() {
        let mut actions = vec![Action::Idle; n];
        for (bit, &s) in act_states.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                actions[s] = Action::Act;
            }
        }
        let policy = PolicyTable::new(actions);
        match evaluate_policy_exact(kernel, &policy, start) {
            Ok(gain) => {
                evaluated += 1;
                if best.as_ref().is_none_or(|(g, _)| gain < *g) {
                    best = Some((gain, policy));
                }
            }
            Err(Error::MultipleRecurrentClasses { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let (best_gain, best_policy) = best.expect("the all-idle policy has a single reachable class");
    Ok(OracleResult {
        best_gain,
        best_policy,
        evaluated,
        skipped,
    })
}
