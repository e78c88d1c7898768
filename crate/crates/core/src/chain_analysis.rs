//! Recurrent-class structure of chains induced on the MDP.
//!
//! A policy (deterministic or randomised) turns the kernel into a Markov
//! chain; its strongly connected components that have no outgoing edge are
//! the recurrent classes. The MDP is communicating iff the chain induced by
//! mixing uniformly over the feasible actions is one component: that
//! chain's edge set is the union of every action's support.

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{build_kernel, MdpKernel, Objective, PolicyTable, Row, Transition};
use crate::model::{Action, ModelParams};

/// Transition rows of a chain over the MDP's state indices.
#[derive(Debug, Clone)]
pub struct InducedChain {
    rows: Vec<Row>,
}

/// Per-state weights on `[Idle, Act]`.
pub type ActionWeights = [f64; 2];

impl InducedChain {
    /// Builds a chain from raw rows; entries with zero probability are dropped.
    pub fn from_rows(rows: Vec<Row>) -> Self {
        let rows = rows
            .into_iter()
            .map(|r| r.into_iter().filter(|t| t.prob > 0.0).collect())
            .collect();
        Self { rows }
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, state: usize) -> &Row {
        &self.rows[state]
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn successors(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[state].iter().map(|t| t.next)
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.rows[from].iter().any(|t| t.next == to)
    }

    /// States reachable from `start` (including it), ascending.
    pub fn reachable_from(&self, start: usize) -> Vec<usize> {
        let mut seen = vec![false; self.n_states()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(s) = stack.pop() {
            for next in self.successors(s) {
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        (0..self.n_states()).filter(|&s| seen[s]).collect()
    }
}

/// Chain induced by a deterministic policy.
pub fn induce_chain(kernel: &MdpKernel, policy: &PolicyTable) -> Result<InducedChain> {
    policy.check_feasible(kernel)?;
    let rows = (0..kernel.n_states())
        .map(|s| kernel.row(s, policy.action(s)).unwrap().clone())
        .collect();
    Ok(InducedChain::from_rows(rows))
}

/// Chain induced by a randomised policy: row `s` is
/// `sum_a weight(s, a) * P(. | s, a)`.
pub fn induce_randomized(kernel: &MdpKernel, weights: &[ActionWeights]) -> Result<InducedChain> {
    if weights.len() != kernel.n_states() {
        return Err(Error::PolicySizeMismatch {
            got: weights.len(),
            expected: kernel.n_states(),
        });
    }
    let mut rows = Vec::with_capacity(kernel.n_states());
    for (s, w) in weights.iter().enumerate() {
        let total = w[0] + w[1];
        if w.iter().any(|x| *x < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParam {
                name: "weights",
                reason: format!("state {s}: {w:?} is not a distribution"),
            });
        }
        let mut row: Row = Vec::new();
        for (&action, &weight) in Action::ALL.iter().zip(w) {
            if weight == 0.0 {
                continue;
            }
            let Some(action_row) = kernel.row(s, action) else {
                return Err(Error::InfeasibleAction { state: s, action });
            };
            for t in action_row {
                match row.iter_mut().find(|r| r.next == t.next) {
                    Some(r) => r.prob += weight * t.prob,
                    None => row.push(Transition {
                        next: t.next,
                        prob: weight * t.prob,
                    }),
                }
            }
        }
        row.sort_by_key(|t| t.next);
        rows.push(row);
    }
    Ok(InducedChain::from_rows(rows))
}

/// Idle with probability one where `Act` is infeasible, a fair coin elsewhere.
pub fn mixing_weights(kernel: &MdpKernel) -> Vec<ActionWeights> {
    (0..kernel.n_states())
        .map(|s| {
            if kernel.is_feasible(s, Action::Act) {
                [0.5, 0.5]
            } else {
                [1.0, 0.0]
            }
        })
        .collect()
}

/// `Act` exactly at battery level `level` (where feasible), `Idle` elsewhere.
pub fn act_at_level_policy(kernel: &MdpKernel, level: u32) -> PolicyTable {
    let params = kernel.params();
    PolicyTable::new(
        params
            .states()
            .enumerate()
            .map(|(s, st)| {
                if st.e == level && kernel.is_feasible(s, Action::Act) {
                    Action::Act
                } else {
                    Action::Idle
                }
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainClass {
    /// Member state indices, ascending.
    pub states: Vec<usize>,
    /// Closed (no edge leaves the class).
    pub recurrent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassDecomposition {
    /// Ordered by smallest member state.
    pub classes: Vec<ChainClass>,
    /// Class id of each state.
    pub membership: Vec<usize>,
}

impl ClassDecomposition {
    pub fn recurrent_classes(&self) -> impl Iterator<Item = (usize, &ChainClass)> {
        self.classes.iter().enumerate().filter(|(_, c)| c.recurrent)
    }

    pub fn n_recurrent(&self) -> usize {
        self.recurrent_classes().count()
    }

    pub fn is_transient(&self, state: usize) -> bool {
        !self.classes[self.membership[state]].recurrent
    }

    pub fn is_single_class(&self) -> bool {
        self.classes.len() == 1
    }
}

pub fn decompose(chain: &InducedChain) -> ClassDecomposition {
    let n = chain.n_states();
    let mut graph: DiGraph<(), ()> = DiGraph::with_capacity(n, 0);
    for _ in 0..n {
        graph.add_node(());
    }
    for s in 0..n {
        for next in chain.successors(s) {
            graph.add_edge(NodeIndex::new(s), NodeIndex::new(next), ());
        }
    }

    let mut components: Vec<Vec<usize>> = tarjan_scc(&graph)
        .into_iter()
        .map(|c| {
            let mut states: Vec<usize> = c.into_iter().map(NodeIndex::index).collect();
            states.sort_unstable();
            states
        })
        .collect();
    components.sort_by_key(|c| c[0]);

    let mut membership = vec![0; n];
    for (id, states) in components.iter().enumerate() {
        for &s in states {
            membership[s] = id;
        }
    }
    let classes = components
        .into_iter()
        .enumerate()
        .map(|(id, states)| {
            let recurrent = states
                .iter()
                .all(|&s| chain.successors(s).all(|next| membership[next] == id));
            ChainClass { states, recurrent }
        })
        .collect();
    ClassDecomposition {
        classes,
        membership,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CommunicatingReport {
    pub communicating: bool,
    /// Decomposition of the union-of-actions graph.
    pub witness: ClassDecomposition,
}

pub fn is_communicating(params: &ModelParams) -> Result<CommunicatingReport> {
    let kernel = build_kernel(params, Objective::Aoii)?;
    Ok(communicating_report(&kernel))
}

pub fn communicating_report(kernel: &MdpKernel) -> CommunicatingReport {
    let chain = induce_randomized(kernel, &mixing_weights(kernel))
        .expect("mixing weights are feasible by construction");
    let witness = decompose(&chain);
    CommunicatingReport {
        communicating: witness.is_single_class(),
        witness,
    }
}
