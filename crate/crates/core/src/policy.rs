//! Stationary deterministic scheduling policies.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, State, StateSpace};

/// Explicit action for every state of a truncated space. States with
/// `a >= a_max` always offload.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionTable {
    a_max: u32,
    mec: Vec<bool>,
}

impl ActionTable {
    pub fn from_fn(a_max: u32, mut f: impl FnMut(State) -> Action) -> Self {
        let space = StateSpace::new(a_max);
        let mec = space
            .states()
            .map(|s| s.a >= a_max || f(s) == Action::Mec)
            .collect();
        ActionTable { a_max, mec }
    }

    pub fn a_max(&self) -> u32 {
        self.a_max
    }

    pub fn action(&self, s: State) -> Action {
        let space = StateSpace::new(self.a_max);
        if s.a >= self.a_max || !space.contains(s) {
            Action::Mec
        } else {
            Action::from_bit(self.mec[space.index(s)])
        }
    }

    pub fn set(&mut self, s: State, u: Action) {
        let space = StateSpace::new(self.a_max);
        let i = space.index(s);
        self.mec[i] = s.a >= self.a_max || u == Action::Mec;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// Never offload.
    LocalOnly,
    /// Offload in every slot.
    MecOnly,
    /// Offload whenever `a >= a_star`.
    AgeThreshold { a_star: u32 },
    /// Offload whenever the update has been in service `z >= z_star` slots.
    ServiceThreshold { z_star: u32 },
    /// Offload whenever `a >= thresholds[z]`; columns past the end of the
    /// table use the last entry.
    ZThreshold { thresholds: Vec<u32> },
    Table(ActionTable),
}

/// Age-threshold policy, total on the truncated space: offload exactly when
/// `a >= a_star`.
pub fn age_threshold_policy(a_star: u32, a_max: u32) -> Result<Policy> {
    if a_star < 1 || a_star > a_max {
        return Err(Error::param(
            "a_star",
            format!("must lie in [1, a_max={a_max}], got {a_star}"),
        ));
    }
    Ok(Policy::AgeThreshold { a_star })
}

pub fn service_threshold_policy(z_star: u32) -> Result<Policy> {
    crate::heuristics::ServiceThresholdPolicy::new(z_star)?;
    Ok(Policy::ServiceThreshold { z_star })
}

impl Policy {
    /// Action at `s`, without truncation. [`Policy::Table`] offloads at and
    /// beyond its own `a_max`.
    pub fn action(&self, s: State) -> Action {
        match self {
            Policy::LocalOnly => Action::Local,
            Policy::MecOnly => Action::Mec,
            Policy::AgeThreshold { a_star } => Action::from_bit(s.a >= *a_star),
            Policy::ServiceThreshold { z_star } => Action::from_bit(s.z >= *z_star),
            Policy::ZThreshold { thresholds } => {
                let t = thresholds
                    .get(s.z as usize)
                    .or(thresholds.last())
                    .copied()
                    .unwrap_or(1);
                Action::from_bit(s.a >= t)
            }
            Policy::Table(t) => t.action(s),
        }
    }

    /// Action on the truncated space: offload is forced at `a >= a_max`.
    pub fn truncated_action(&self, s: State, a_max: u32) -> Action {
        if s.a >= a_max {
            Action::Mec
        } else {
            self.action(s)
        }
    }

    /// Materialize the truncated action map.
    pub fn to_table(&self, a_max: u32) -> ActionTable {
        ActionTable::from_fn(a_max, |s| self.action(s))
    }

    /// States reachable from `(1, 0)` on the truncated space, in BFS order.
    pub fn reachable(&self, a_max: u32, mu: f64) -> Vec<State> {
        let mut seen = BTreeSet::new();
        let mut order = Vec::new();
        let mut queue = VecDeque::from([State::RESET]);
        seen.insert(State::RESET);
        while let Some(s) = queue.pop_front() {
            order.push(s);
            let mut push = |n: State| {
                if seen.insert(n) {
                    queue.push_back(n);
                }
            };
            match self.truncated_action(s, a_max) {
                Action::Mec => push(State::RESET),
                Action::Local => {
                    push(State { a: s.z + 1, z: 0 });
                    if mu < 1.0 {
                        push(State { a: s.a + 1, z: s.z + 1 });
                    }
                }
            }
        }
        order
    }

    /// Per-column thresholds `min{a >= z + 1 : u(a, z) = 1}` on the truncated
    /// space, for every column `z` in `0..a_max`.
    pub fn column_thresholds(&self, a_max: u32) -> Vec<u32> {
        (0..a_max)
            .map(|z| {
                (z + 1..=a_max)
                    .find(|&a| self.truncated_action(State { a, z }, a_max) == Action::Mec)
                    .unwrap_or(a_max)
            })
            .collect()
    }

    /// Thresholds restricted to the columns `z` that occur among the states
    /// reachable from `(1, 0)`.
    pub fn reachable_thresholds(&self, a_max: u32, mu: f64) -> BTreeMap<u32, u32> {
        let cols: BTreeSet<u32> = self.reachable(a_max, mu).iter().map(|s| s.z).collect();
        let all = self.column_thresholds(a_max);
        cols.into_iter().map(|z| (z, all[z as usize])).collect()
    }

    /// First state `(a, z)` of the truncated space that offloads while
    /// `(a + 1, z)` does not, if any. `None` means the policy is a
    /// z-dependent age threshold policy.
    pub fn threshold_violation(&self, a_max: u32) -> Option<State> {
        StateSpace::new(a_max).states().find(|s| {
            s.a < a_max
                && self.truncated_action(*s, a_max) == Action::Mec
                && self.truncated_action(State { a: s.a + 1, z: s.z }, a_max) == Action::Local
        })
    }

    /// Compressed threshold form, when the policy has one.
    pub fn thresholds(&self, a_max: u32) -> Option<Vec<u32>> {
        self.threshold_violation(a_max)
            .is_none()
            .then(|| self.column_thresholds(a_max))
    }

    pub fn label(&self) -> String {
        match self {
            Policy::LocalOnly => "local_only".into(),
            Policy::MecOnly => "mec_only".into(),
            Policy::AgeThreshold { a_star } => format!("age_threshold(a*={a_star})"),
            Policy::ServiceThreshold { z_star } => format!("service_threshold(z*={z_star})"),
            Policy::ZThreshold { thresholds } => format!("z_threshold({thresholds:?})"),
            Policy::Table(t) => format!("table(a_max={})", t.a_max()),
        }
    }
}
