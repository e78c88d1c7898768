//! Finite average-cost MDP over `(battery level, clamped AoI)`.
//!
//! Transitions factor into an AoI part (`Idle` ages by one up to `N`,
//! `Act` resets to 1) and an energy part. An `Act` drains `c_s` when the
//! sample agrees with the monitor (probability `g(theta)`) and
//! `c_s + c_t` otherwise; either way a unit may arrive with probability
//! `mu` and the level is capped at `E`. Under [`TransmitRule::Always`]
//! every `Act` drains `c_s + c_t`.

use serde::{Deserialize, Serialize};

use crate::belief::closed_form;
use crate::error::{Error, Result};
use crate::model::{correctness_prob, Action, MdpState, ModelParams, TransmitRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Expected AoII under the AoI-parameterised belief.
    Aoii,
    /// The AoI itself (baseline objective).
    Aoi,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Aoii => "aoii",
            Objective::Aoi => "aoi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub prob: f64,
}

/// Sparse row of next-state probabilities, sorted by next-state index.
pub type Row = Vec<Transition>;

#[derive(Debug, Clone)]
pub struct MdpKernel {
    params: ModelParams,
    objective: Objective,
    idle: Vec<Row>,
    act: Vec<Option<Row>>,
    cost: Vec<f64>,
}

impl MdpKernel {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn n_states(&self) -> usize {
        self.cost.len()
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn row(&self, state: usize, action: Action) -> Option<&Row> {
        match action {
            Action::Idle => self.idle.get(state),
            Action::Act => self.act.get(state).and_then(Option::as_ref),
        }
    }

    pub fn is_feasible(&self, state: usize, action: Action) -> bool {
        self.row(state, action).is_some()
    }

    /// Actions with a row at `state`, `Idle` first.
    pub fn actions(&self, state: usize) -> impl Iterator<Item = Action> + '_ {
        Action::ALL
            .into_iter()
            .filter(move |&a| self.is_feasible(state, a))
    }

    /// Same transitions with a different per-state cost vector.
    pub fn with_cost(&self, objective: Objective, cost: Vec<f64>) -> Self {
        assert_eq!(cost.len(), self.n_states());
        Self {
            objective,
            cost,
            ..self.clone()
        }
    }

    /// Expected next-step value `sum_s' P(s'|s,a) v(s')`.
    pub fn expectation(&self, state: usize, action: Action, values: &[f64]) -> Option<f64> {
        self.row(state, action)
            .map(|row| row.iter().map(|t| t.prob * values[t.next]).sum())
    }

    /// Flat list of `(state, action, next, prob)` entries in index order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, Action, Transition)> + '_ {
        (0..self.n_states()).flat_map(move |s| {
            self.actions(s)
                .flat_map(move |a| self.row(s, a).unwrap().iter().map(move |&t| (s, a, t)))
        })
    }
}

/// Deterministic stationary policy aligned with the state index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTable {
    actions: Vec<Action>,
}

impl PolicyTable {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions }
    }

    pub fn all_idle(n_states: usize) -> Self {
        Self::new(vec![Action::Idle; n_states])
    }

    /// `Act` wherever feasible.
    pub fn greedy_act(kernel: &MdpKernel) -> Self {
        Self::new(
            (0..kernel.n_states())
                .map(|s| {
                    if kernel.is_feasible(s, Action::Act) {
                        Action::Act
                    } else {
                        Action::Idle
                    }
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn action(&self, state: usize) -> Action {
        self.actions[state]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// Errors on size mismatch or on an action without a kernel row.
    pub fn check_feasible(&self, kernel: &MdpKernel) -> Result<()> {
        if self.len() != kernel.n_states() {
            return Err(Error::PolicySizeMismatch {
                got: self.len(),
                expected: kernel.n_states(),
            });
        }
        match self
            .actions
            .iter()
            .enumerate()
            .find(|&(s, &a)| !kernel.is_feasible(s, a))
        {
            Some((state, &action)) => Err(Error::InfeasibleAction { state, action }),
            None => Ok(()),
        }
    }
}

/// `E[AoII | AoI = theta]` for the closed-form belief.
pub fn expected_aoii_cost(theta: u32, params: &ModelParams) -> f64 {
    closed_form(theta, params.p).mean()
}

pub fn build_kernel(params: &ModelParams, objective: Objective) -> Result<MdpKernel> {
    params.validate()?;
    let n = params.n_states();
    let mut idle = Vec::with_capacity(n);
    let mut act = Vec::with_capacity(n);
    let mut cost = Vec::with_capacity(n);

    let aoii_cost: Vec<f64> = (1..=params.n_max)
        .map(|theta| expected_aoii_cost(theta, params))
        .collect();

    for s in params.states() {
        let aged = MdpState::new(0, (s.theta + 1).min(params.n_max));
        let idle_energy = [(s.e + 1, params.mu), (s.e, 1.0 - params.mu)];
        idle.push(make_row(params, aged.theta, &idle_energy)?);

        let act_row = if params.is_feasible(s, Action::Act) {
            // Probability the sample agrees with the monitor, i.e. no transmission.
            let g = match params.transmit {
                TransmitRule::OnMismatch => correctness_prob(s.theta, params.p),
                TransmitRule::Always => 0.0,
            };
            let e = s.e as i64;
            let (cs, ct) = (params.c_s as i64, params.c_t as i64);
            let mu = params.mu;
            let branches = [
                (e + 1 - cs - ct, mu * (1.0 - g)),
                (e - cs - ct, (1.0 - mu) * (1.0 - g)),
                (e + 1 - cs, mu * g),
                (e - cs, (1.0 - mu) * g),
            ];
            let energy: Vec<(u32, f64)> = branches
                .iter()
                .map(|&(level, prob)| {
                    debug_assert!(level >= 0);
                    (level as u32, prob)
                })
                .collect();
            Some(make_row(params, 1, &energy)?)
        } else {
            None
        };
        act.push(act_row);

        cost.push(match objective {
            Objective::Aoii => aoii_cost[s.theta as usize - 1],
            Objective::Aoi => s.theta as f64,
        });
    }

    Ok(MdpKernel {
        params: *params,
        objective,
        idle,
        act,
        cost,
    })
}

/// Clamps each energy branch at `E`, merges coinciding targets and drops
/// zero-probability entries.
fn make_row(params: &ModelParams, theta_next: u32, energy: &[(u32, f64)]) -> Result<Row> {
    let mut row: Row = Vec::with_capacity(energy.len());
    for &(level, prob) in energy {
        if prob == 0.0 {
            continue;
        }
        let next = params.state_index(MdpState::new(level.min(params.cap_e), theta_next))?;
        match row.iter_mut().find(|t| t.next == next) {
            Some(t) => t.prob += prob,
            None => row.push(Transition { next, prob }),
        }
    }
    row.sort_by_key(|t| t.next);
    Ok(row)
}
