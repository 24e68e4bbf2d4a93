//! State space, actions, transition kernel and per-slot cost.
//!
//! A state `(a, z)` carries the age at the monitor `a` and the number of
//! slots the in-flight update has already spent at the local server `z`.
//! Every slot the scheduler either keeps serving locally ([`Action::Local`])
//! or drops the update, pulls a fresh one and has the edge cloud serve it
//! within the slot ([`Action::Mec`]).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    /// Age at the monitor, in slots.
    pub a: u32,
    /// Elapsed local service of the update in flight, in slots.
    pub z: u32,
}

impl State {
    /// The regeneration state reached after every edge-cloud service.
    pub const RESET: State = State { a: 1, z: 0 };

    pub fn new(a: u32, z: u32) -> Result<Self> {
        if a == 0 {
            return Err(Error::InvalidState { a, z });
        }
        Ok(State { a, z })
    }

    /// Whether the state can be reached from `(1, 0)`: the generation offset
    /// `a - z` of the update in service is always at least one slot.
    pub fn is_reachable_shape(&self) -> bool {
        self.a >= 1 && self.z < self.a
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Keep processing the current update on the local server (`u = 0`).
    Local,
    /// Pull a fresh update and send it to the edge cloud (`u = 1`).
    Mec,
}

impl Action {
    pub fn as_u8(self) -> u8 {
        match self {
            Action::Local => 0,
            Action::Mec => 1,
        }
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Action::Mec
        } else {
            Action::Local
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Per-slot completion probability of the local server.
    pub mu: f64,
    /// Price of one edge-cloud use, relative to one slot of age.
    pub lambda: f64,
    /// Discount factor used by the discounted value iteration.
    pub beta: f64,
    /// Age truncation level; the scheduler offloads at `a = a_max`.
    pub a_max: u32,
}

impl ModelParams {
    pub const DEFAULT_BETA: f64 = 0.99;

    pub fn new(mu: f64, lambda: f64, beta: f64, a_max: u32) -> Result<Self> {
        let p = ModelParams {
            mu,
            lambda,
            beta,
            a_max,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `beta = 0.99` and the default truncation for `mu`.
    pub fn with_defaults(mu: f64, lambda: f64) -> Result<Self> {
        validate_mu(mu)?;
        Self::new(mu, lambda, Self::DEFAULT_BETA, default_a_max(mu))
    }

    pub fn validate(&self) -> Result<()> {
        validate_mu(self.mu)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda", format!("must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::param("beta", format!("must lie in (0, 1), got {}", self.beta)));
        }
        if self.a_max < 2 {
            return Err(Error::param("a_max", format!("must be >= 2, got {}", self.a_max)));
        }
        Ok(())
    }

    pub fn space(&self) -> StateSpace {
        StateSpace::new(self.a_max)
    }
}

pub(crate) fn validate_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("mu", format!("must lie in (0, 1], got {mu}")))
    }
}

/// Truncation level large enough for ages of order `1/mu`: 50 for
/// `mu >= 0.08`, growing as `4/mu` below that (400 at `mu = 0.01`).
pub fn default_a_max(mu: f64) -> u32 {
    let scaled = (4.0 / mu).ceil();
    if scaled.is_finite() && scaled > 50.0 {
        scaled.min(u32::MAX as f64) as u32
    } else {
        50
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub next: State,
    pub prob: f64,
}

/// Successor distribution of `s` under `u`. Zero-probability branches
/// (the non-completion branch when `mu = 1`) are dropped.
///
/// The kernel itself ignores truncation; callers working on the truncated
/// space force [`Action::Mec`] at `a = a_max`.
pub fn transitions(s: State, u: Action, p: &ModelParams) -> Result<Vec<Transition>> {
    if s.a == 0 {
        return Err(Error::InvalidState { a: s.a, z: s.z });
    }
    Ok(match u {
        Action::Mec => vec![Transition {
            next: State::RESET,
            prob: 1.0,
        }],
        Action::Local => {
            let done = Transition {
                next: State { a: s.z + 1, z: 0 },
                prob: p.mu,
            };
            if p.mu >= 1.0 {
                vec![Transition { prob: 1.0, ..done }]
            } else {
                vec![
                    done,
                    Transition {
                        next: State {
                            a: s.a + 1,
                            z: s.z + 1,
                        },
                        prob: 1.0 - p.mu,
                    },
                ]
            }
        }
    })
}

/// Slot cost `a + 1/2 + lambda * u`.
pub fn cost(s: State, u: Action, p: &ModelParams) -> f64 {
    s.a as f64 + 0.5 + p.lambda * u.as_u8() as f64
}

/// Triangular enumeration of the truncated space
/// `{(a, z) : 1 <= a <= a_max, 0 <= z <= a - 1}`, row-major in `a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateSpace {
    a_max: u32,
}

impl StateSpace {
    pub fn new(a_max: u32) -> Self {
        StateSpace { a_max }
    }

    pub fn a_max(&self) -> u32 {
        self.a_max
    }

    pub fn len(&self) -> usize {
        let n = self.a_max as usize;
        n * (n + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.a_max == 0
    }

    pub fn contains(&self, s: State) -> bool {
        s.a >= 1 && s.a <= self.a_max && s.z < s.a
    }

    #[inline]
    pub fn index(&self, s: State) -> usize {
        debug_assert!(self.contains(s), "{s} outside space with a_max={}", self.a_max);
        let a = s.a as usize;
        a * (a - 1) / 2 + s.z as usize
    }

    pub fn try_index(&self, s: State) -> Result<usize> {
        if self.contains(s) {
            Ok(self.index(s))
        } else {
            Err(Error::OutOfRange(s))
        }
    }

    pub fn state(&self, idx: usize) -> State {
        // Invert a(a-1)/2 <= idx.
        let mut a = (((8 * idx + 1) as f64).sqrt() as usize).div_ceil(2);
        while a * (a - 1) / 2 > idx {
            a -= 1;
        }
        while (a + 1) * a / 2 <= idx {
            a += 1;
        }
        State {
            a: a as u32,
            z: (idx - a * (a - 1) / 2) as u32,
        }
    }

    pub fn states(&self) -> impl Iterator<Item = State> {
        let a_max = self.a_max;
        (1..=a_max).flat_map(|a| (0..a).map(move |z| State { a, z }))
    }
}

/// Long-run average age, edge-cloud frequency and Lagrangian cost of a policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub delta: f64,
    pub p_bar: f64,
    pub g: f64,
}

impl EvalResult {
    pub fn new(delta: f64, p_bar: f64, lambda: f64) -> Self {
        EvalResult {
            delta,
            p_bar,
            g: delta + lambda * p_bar,
        }
    }

    /// Same point priced at a different `lambda`.
    pub fn with_lambda(self, lambda: f64) -> Self {
        EvalResult::new(self.delta, self.p_bar, lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(mu: f64, lambda: f64) -> ModelParams {
        ModelParams::new(mu, lambda, 0.99, 50).unwrap()
    }

    fn st(a: u32, z: u32) -> State {
        State { a, z }
    }

    #[test]
    fn mec_resets() {
        let t = transitions(st(3, 1), Action::Mec, &params(0.3, 1.0)).unwrap();
        assert_eq!(t, vec![Transition { next: State::RESET, prob: 1.0 }]);
    }

    #[test]
    fn local_branches() {
        let t = transitions(st(3, 1), Action::Local, &params(0.5, 1.0)).unwrap();
        assert_eq!(
            t,
            vec![
                Transition { next: st(2, 0), prob: 0.5 },
                Transition { next: st(4, 2), prob: 0.5 },
            ]
        );
    }

    #[test]
    fn deterministic_local_service() {
        let t = transitions(State::RESET, Action::Local, &params(1.0, 1.0)).unwrap();
        assert_eq!(t, vec![Transition { next: State::RESET, prob: 1.0 }]);
    }

    #[test]
    fn zero_age_rejected() {
        assert!(State::new(0, 0).is_err());
        let bad = State { a: 0, z: 0 };
        assert!(matches!(
            transitions(bad, Action::Local, &params(0.5, 1.0)),
            Err(Error::InvalidState { .. })
        ));
    }

    #[test]
    fn slot_cost() {
        assert_eq!(cost(st(1, 0), Action::Mec, &params(0.5, 3.0)), 4.5);
        assert_eq!(cost(st(7, 2), Action::Local, &params(0.5, 3.0)), 7.5);
        assert_eq!(cost(st(1, 0), Action::Mec, &params(0.5, 0.0)), 1.5);
    }

    #[test]
    fn param_validation() {
        assert!(ModelParams::new(0.0, 1.0, 0.9, 10).is_err());
        assert!(ModelParams::new(1.2, 1.0, 0.9, 10).is_err());
        assert!(ModelParams::new(0.5, -1.0, 0.9, 10).is_err());
        assert!(ModelParams::new(0.5, 1.0, 1.0, 10).is_err());
        assert!(ModelParams::new(0.5, 1.0, 0.9, 1).is_err());
        assert!(ModelParams::new(1.0, 0.0, 0.5, 2).is_ok());
    }

    #[test]
    fn default_truncation() {
        assert_eq!(default_a_max(0.5), 50);
        assert_eq!(default_a_max(0.1), 50);
        assert_eq!(default_a_max(0.01), 400);
    }

    #[test]
    fn triangular_indexing() {
        let space = StateSpace::new(30);
        assert_eq!(space.len(), 465);
        for (i, s) in space.states().enumerate() {
            assert_eq!(space.index(s), i);
            assert_eq!(space.state(i), s);
        }
        assert!(!space.contains(st(3, 3)));
        assert!(!space.contains(st(31, 0)));
    }
}
