//! Belief over the AoII given the action history.
//!
//! The monitor keeps the last received sample as its estimate, so after a
//! sample the AoII distribution restarts from `(p, 1 - p)` and then evolves
//! deterministically under idling. The whole belief is therefore a
//! function of the AoI alone:
//!
//! ```text
//! b_0 = g(n),   b_i = g(n - i) (1 - p) p^(i - 1)   for 1 <= i <= n
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{correctness_prob, Action, ModelParams};

const NORMALIZATION_TOL: f64 = 1e-9;

/// Probability mass over AoII values `0..=theta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefVector {
    theta: u32,
    mass: Vec<f64>,
}

impl BeliefVector {
    /// Builds a belief from raw mass; `theta` is taken as `mass.len() - 1`.
    pub fn from_mass(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::UnnormalizedBelief(0.0));
        }
        let b = Self {
            theta: (mass.len() - 1) as u32,
            mass,
        };
        b.check()?;
        Ok(b)
    }

    /// The estimate is known to be correct (AoII is zero).
    pub fn synchronized() -> Self {
        Self {
            theta: 0,
            mass: vec![1.0],
        }
    }

    pub fn theta(&self) -> u32 {
        self.theta
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `P(AoII = i)`, zero beyond the support.
    pub fn get(&self, i: usize) -> f64 {
        self.mass.get(i).copied().unwrap_or(0.0)
    }

    /// Expected AoII, `sum_i i * b_i`.
    pub fn mean(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(i, b)| i as f64 * b)
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    fn check(&self) -> Result<()> {
        let total = self.total();
        let in_range = self.mass.iter().all(|b| (0.0..=1.0).contains(b));
        if !in_range || (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::UnnormalizedBelief(total));
        }
        Ok(())
    }
}

/// One-slot belief update.
pub fn belief_update(b: &BeliefVector, action: Action, params: &ModelParams) -> Result<BeliefVector> {
    b.check()?;
    let p = params.p;
    let next = match action {
        Action::Act => BeliefVector {
            theta: 1,
            mass: vec![p, 1.0 - p],
        },
        Action::Idle => {
            let b0 = b.mass[0];
            let mut mass = Vec::with_capacity(b.mass.len() + 1);
            mass.push(b0 * p + (1.0 - b0) * (1.0 - p));
            mass.push((1.0 - p) * b0);
            mass.extend(b.mass[1..].iter().map(|bi| p * bi));
            BeliefVector {
                theta: b.theta + 1,
                mass,
            }
        }
    };
    Ok(next)
}

/// Closed-form belief `n` slots after the last sample; no truncation check.
pub fn closed_form(n: u32, p: f64) -> BeliefVector {
    let mut mass = Vec::with_capacity(n as usize + 1);
    mass.push(correctness_prob(n, p));
    let mut tail = 1.0 - p;
    for i in 1..=n {
        mass.push(correctness_prob(n - i, p) * tail);
        tail *= p;
    }
    BeliefVector { theta: n, mass }
}

/// Belief at AoI `theta` (exact closed form, also at `theta = N`).
pub fn belief_from_aoi(theta: u32, params: &ModelParams) -> Result<BeliefVector> {
    if !(1..=params.n_max).contains(&theta) {
        return Err(Error::InvalidParam {
            name: "theta",
            reason: format!("{theta} not in 1..={}", params.n_max),
        });
    }
    Ok(closed_form(theta, params.p))
}

/// How much the belief moves when the AoI bound grows from `n1` to `n2`:
/// the sup-norm distance over indices `0..=n1` plus the mass `n2` places
/// beyond `n1`. Arguments are ordered internally.
pub fn truncation_gap(n1: u32, n2: u32, params: &ModelParams) -> f64 {
    let (lo, hi) = if n1 <= n2 { (n1, n2) } else { (n2, n1) };
    let short = closed_form(lo, params.p);
    let long = closed_form(hi, params.p);
    let sup = (0..=lo as usize)
        .map(|i| (short.get(i) - long.get(i)).abs())
        .fold(0.0, f64::max);
    let tail: f64 = long.mass[lo as usize + 1..].iter().sum();
    sup + tail
}
