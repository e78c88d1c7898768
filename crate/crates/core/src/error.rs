use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("state (e={e}, theta={theta}) outside 0..={cap_e} x 1..={n_max}")]
    StateOutOfRange {
        e: u32,
        theta: u32,
        cap_e: u32,
        n_max: u32,
    },

    #[error("state index {0} out of range")]
    IndexOutOfRange(usize),

    #[error("belief does not sum to one (sum={0})")]
    UnnormalizedBelief(f64),

    #[error("action {action:?} infeasible at state index {state}")]
    InfeasibleAction {
        state: usize,
        action: crate::model::Action,
    },

    #[error("policy has {got} entries, kernel has {expected} states")]
    PolicySizeMismatch { got: usize, expected: usize },

    #[error("relative value iteration did not converge in {iterations} iterations (residual span {residual_span:e})")]
    NotConverged {
        iterations: usize,
        residual_span: f64,
    },

    #[error("{count} recurrent classes reachable from state index {start}")]
    MultipleRecurrentClasses { start: usize, count: usize },

    #[error("singular stationary system on a class of {class_size} states")]
    SingularStationary { class_size: usize },

    #[error("instance too large for enumeration: {n_states} states (limit {limit})")]
    InstanceTooLarge { n_states: usize, limit: usize },

    #[error("invalid simulation setting: {0}")]
    InvalidSimulation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
