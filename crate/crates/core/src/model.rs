//! System parameters, state indexing and action feasibility.
//!
//! The finite state is `(e, theta)`: the battery level after the slot's
//! energy arrival and the AoI seen by the controller, clamped at `n_max`.
//! States are flattened row-major with the battery level outer and the AoI
//! inner, so `(e, theta)` lives at `e * n_max + (theta - 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitudes below this are flushed to zero when raising `2p - 1` to a power.
const UNDERFLOW_FLOOR: f64 = 1e-300;

/// Scalar parameters of the source, the harvester and the MDP truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Self-transition probability of the binary symmetric source.
    pub p: f64,
    /// Probability that one unit of energy arrives in a slot.
    pub mu: f64,
    /// Battery capacity `E`.
    pub cap_e: u32,
    /// Energy drained by taking a sample.
    pub c_s: u32,
    /// Energy drained by a transmission.
    pub c_t: u32,
    /// AoI truncation bound `N`.
    pub n_max: u32,
    /// When a sample taken by `Act` is transmitted.
    #[serde(default)]
    pub transmit: TransmitRule,
}

/// Transmission rule of the `Act` action.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransmitRule {
    /// Transmit only when the sample disagrees with the monitor's estimate.
    #[default]
    OnMismatch,
    /// Transmit every sample, paying `c_s + c_t` on each `Act`. Models a
    /// transmitter that ignores the content of its updates.
    Always,
}

impl TransmitRule {
    pub fn as_str(self) -> &'static str {
        match self {
            TransmitRule::OnMismatch => "on_mismatch",
            TransmitRule::Always => "always",
        }
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            p: 0.7,
            mu: 0.5,
            cap_e: 10,
            c_s: 1,
            c_t: 1,
            n_max: 20,
            transmit: TransmitRule::OnMismatch,
        }
    }
}

impl ModelParams {
    pub fn new(p: f64, mu: f64, cap_e: u32, c_s: u32, c_t: u32, n_max: u32) -> Result<Self> {
        let params = Self {
            p,
            mu,
            cap_e,
            c_s,
            c_t,
            n_max,
            transmit: TransmitRule::OnMismatch,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParam { name, reason });
        if !(self.p > 0.5 && self.p <= 1.0) {
            return bad("p", format!("{} not in (0.5, 1]", self.p));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad("mu", format!("{} not in [0, 1]", self.mu));
        }
        if self.cap_e < 1 {
            return bad("cap_e", "battery capacity must be at least 1".into());
        }
        if self.c_s + self.c_t < 1 {
            return bad("c_s + c_t", "acting must drain at least one unit".into());
        }
        if self.n_max < 2 {
            return bad("n_max", format!("{} < 2", self.n_max));
        }
        Ok(())
    }

    pub fn with_transmit(self, transmit: TransmitRule) -> Self {
        Self { transmit, ..self }
    }

    /// Worst-case drain of an `Act` (sample plus transmission).
    pub fn act_cost(&self) -> u32 {
        self.c_s + self.c_t
    }

    /// False when `c_s + c_t > E`: the model is valid but idle-only.
    pub fn act_ever_feasible(&self) -> bool {
        self.act_cost() <= self.cap_e
    }

    pub fn n_states(&self) -> usize {
        (self.cap_e as usize + 1) * self.n_max as usize
    }

    /// All states in index order.
    pub fn states(&self) -> impl Iterator<Item = MdpState> + '_ {
        (0..=self.cap_e).flat_map(move |e| (1..=self.n_max).map(move |theta| MdpState { e, theta }))
    }

    pub fn contains(&self, s: MdpState) -> bool {
        s.e <= self.cap_e && (1..=self.n_max).contains(&s.theta)
    }

    pub fn state_index(&self, s: MdpState) -> Result<usize> {
        if !self.contains(s) {
            return Err(Error::StateOutOfRange {
                e: s.e,
                theta: s.theta,
                cap_e: self.cap_e,
                n_max: self.n_max,
            });
        }
        Ok(s.e as usize * self.n_max as usize + (s.theta as usize - 1))
    }

    pub fn state_at(&self, index: usize) -> Result<MdpState> {
        if index >= self.n_states() {
            return Err(Error::IndexOutOfRange(index));
        }
        let n = self.n_max as usize;
        Ok(MdpState {
            e: (index / n) as u32,
            theta: (index % n) as u32 + 1,
        })
    }

    pub fn is_feasible(&self, s: MdpState, action: Action) -> bool {
        match action {
            Action::Idle => true,
            Action::Act => s.e >= self.act_cost(),
        }
    }

    pub fn feasible_actions(&self, s: MdpState) -> &'static [Action] {
        if self.is_feasible(s, Action::Act) {
            &[Action::Idle, Action::Act]
        } else {
            &[Action::Idle]
        }
    }
}

/// Battery level and clamped AoI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MdpState {
    pub e: u32,
    pub theta: u32,
}

impl MdpState {
    pub fn new(e: u32, theta: u32) -> Self {
        Self { e, theta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Idle,
    /// Sample the source, then transmit only if it disagrees with the monitor.
    Act,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Idle, Action::Act];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Idle => "idle",
            Action::Act => "act",
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Probability that the monitor's estimate is correct `n` slots after a
/// synchronising sample: `0.5 * (1 + (2p - 1)^n)`, with `g(0) = 1`.
pub fn correctness_prob(n: u32, p: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    0.5 * (1.0 + contraction_pow(2.0 * p - 1.0, n))
}

/// `base^n` for `|base| <= 1`, flushed to zero once it underflows.
fn contraction_pow(base: f64, n: u32) -> f64 {
    let value = if n <= i32::MAX as u32 {
        base.powi(n as i32)
    } else if base.abs() == 1.0 {
        if n.is_multiple_of(2) { 1.0 } else { base }
    } else {
        0.0
    };
    if value.abs() < UNDERFLOW_FLOOR {
        0.0
    } else {
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Return probability of the symmetric chain after `n` steps, by
    /// summing the probabilities of all 2^n flip patterns with an even
    /// number of flips.
    fn enumerate_return_prob(n: u32, p: f64) -> f64 {
        (0u64..1 << n)
            .map(|mask| {
                let flips = mask.count_ones();
                let prob = (1.0 - p).powi(flips as i32) * p.powi((n - flips) as i32);
                if flips % 2 == 0 { prob } else { 0.0 }
            })
            .sum()
    }

    #[test]
    fn g_boundary_values() {
        assert_eq!(correctness_prob(0, 0.7), 1.0);
        assert_eq!(correctness_prob(1, 0.7), 0.7);
        let oracle = enumerate_return_prob(3, 0.7);
        assert!((correctness_prob(3, 0.7) - oracle).abs() < 1e-15);
        // 0.7^3 + 3 * 0.7 * 0.3^2
        assert!((oracle - 0.532).abs() < 1e-12);
    }

    #[test]
    fn g_matches_one_step_recursion() {
        for &p in &[0.55, 0.7, 0.9, 1.0] {
            let mut prev = 1.0;
            for n in 1..=64 {
                let next = p * prev + (1.0 - p) * (1.0 - prev);
                assert!((correctness_prob(n, p) - next).abs() < 1e-12, "p={p} n={n}");
                prev = next;
            }
        }
    }

    #[test]
    fn g_deterministic_source() {
        for n in [0, 1, 5, 1000, u32::MAX] {
            assert_eq!(correctness_prob(n, 1.0), 1.0);
        }
    }

    #[test]
    fn g_underflow_flushes() {
        assert_eq!(correctness_prob(100_000, 0.6), 0.5);
        assert_eq!(correctness_prob(u32::MAX, 0.999), 0.5);
    }

    #[test]
    fn index_convention() {
        let params = ModelParams::default();
        let n = params.n_max as usize;
        assert_eq!(params.state_index(MdpState::new(0, 1)).unwrap(), 0);
        assert_eq!(params.state_index(MdpState::new(0, params.n_max)).unwrap(), n - 1);
        assert_eq!(
            params.state_index(MdpState::new(params.cap_e, params.n_max)).unwrap(),
            (params.cap_e as usize + 1) * n - 1
        );
        assert!(params.state_index(MdpState::new(0, 0)).is_err());
        assert!(params.state_index(MdpState::new(11, 1)).is_err());
        assert!(params.state_index(MdpState::new(0, 21)).is_err());
        assert!(params.state_at(params.n_states()).is_err());
    }

    #[test]
    fn feasibility_masks_act() {
        let params = ModelParams::default();
        assert_eq!(params.feasible_actions(MdpState::new(0, 3)), &[Action::Idle]);
        assert_eq!(params.feasible_actions(MdpState::new(1, 3)), &[Action::Idle]);
        assert_eq!(
            params.feasible_actions(MdpState::new(2, 3)),
            &[Action::Idle, Action::Act]
        );
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(ModelParams::new(0.5, 0.5, 10, 1, 1, 20).is_err());
        assert!(ModelParams::new(1.01, 0.5, 10, 1, 1, 20).is_err());
        assert!(ModelParams::new(0.7, -0.1, 10, 1, 1, 20).is_err());
        assert!(ModelParams::new(0.7, 0.5, 0, 1, 1, 20).is_err());
        assert!(ModelParams::new(0.7, 0.5, 10, 0, 0, 20).is_err());
        assert!(ModelParams::new(0.7, 0.5, 10, 1, 1, 1).is_err());
        assert!(ModelParams::new(f64::NAN, 0.5, 10, 1, 1, 20).is_err());
        let idle_only = ModelParams::new(0.7, 0.5, 1, 1, 1, 4).unwrap();
        assert!(!idle_only.act_ever_feasible());
    }

    proptest! {
        #[test]
        fn index_round_trips(cap_e in 1u32..30, n_max in 2u32..40, e in 0u32..30, theta in 1u32..40) {
            let params = ModelParams::new(0.7, 0.5, cap_e, 1, 1, n_max).unwrap();
            let s = MdpState::new(e, theta);
            match params.state_index(s) {
                Ok(idx) => prop_assert_eq!(params.state_at(idx).unwrap(), s),
                Err(_) => prop_assert!(!params.contains(s)),
            }
        }

        #[test]
        fn g_is_nonincreasing_and_above_half(p in 0.5001f64..1.0, n in 0u32..500) {
            let a = correctness_prob(n, p);
            let b = correctness_prob(n + 1, p);
            prop_assert!(b <= a);
            prop_assert!(b >= 0.5);
        }
    }

    #[test]
    fn states_iterate_in_index_order() {
        let params = ModelParams::new(0.7, 0.5, 3, 1, 1, 4).unwrap();
        for (i, s) in params.states().enumerate() {
            assert_eq!(params.state_index(s).unwrap(), i);
        }
        assert_eq!(params.states().count(), params.n_states());
    }
}
