//! Exact evaluation of a stationary policy through the `(A, Z)` Markov chain
//! it induces on the truncated state space.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{transitions, Action, EvalResult, ModelParams, State};
use crate::policy::Policy;

/// Tolerance on the max-norm step between successive power iterates.
pub const POWER_TOL: f64 = 1e-12;
pub const POWER_BUDGET: usize = 1_000_000;
/// Chains below this size may be solved directly.
pub const DIRECT_LIMIT: usize = 5_000;

/// Row-stochastic chain over the states reachable from `(1, 0)`.
#[derive(Clone, Debug)]
pub struct Chain {
    states: Vec<State>,
    actions: Vec<Action>,
    index: HashMap<State, usize>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    probs: Vec<f64>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn index_of(&self, s: State) -> Option<usize> {
        self.index.get(&s).copied()
    }

    /// Outgoing `(column, probability)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.probs[r].iter().copied())
    }

    /// Outgoing transitions of `s` as a state-keyed map.
    pub fn row_of(&self, s: State) -> Option<HashMap<State, f64>> {
        let i = self.index_of(s)?;
        let mut m = HashMap::new();
        for (j, p) in self.row(i) {
            *m.entry(self.states[j]).or_insert(0.0) += p;
        }
        Some(m)
    }

    /// `x P` for a row vector `x`.
    pub fn left_mul(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, p) in self.row(i) {
                out[j] += xi * p;
            }
        }
    }

    /// Max-norm of `pi P - pi`.
    pub fn balance_residual(&self, pi: &[f64]) -> f64 {
        let mut next = vec![0.0; pi.len()];
        self.left_mul(pi, &mut next);
        next.iter()
            .zip(pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Build the chain induced by `policy` on the space truncated at
/// `params.a_max`, keeping only states reachable from `(1, 0)`.
pub fn build_chain(policy: &Policy, params: &ModelParams) -> Result<Chain> {
    params.validate()?;
    let mut states = vec![State::RESET];
    let mut index = HashMap::from([(State::RESET, 0usize)]);
    let mut actions = Vec::new();
    let mut row_ptr = vec![0];
    let mut cols = Vec::new();
    let mut probs = Vec::new();

    let mut i = 0;
    while i < states.len() {
        let s = states[i];
        let u = policy.truncated_action(s, params.a_max);
        actions.push(u);
        for t in transitions(s, u, params)? {
            let j = *index.entry(t.next).or_insert_with(|| {
                states.push(t.next);
                states.len() - 1
            });
            cols.push(j);
            probs.push(t.prob);
        }
        row_ptr.push(cols.len());
        i += 1;
    }
    Ok(Chain {
        states,
        actions,
        index,
        row_ptr,
        cols,
        probs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Power,
    Direct,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub states: Vec<State>,
    pub pi: Vec<f64>,
    /// Max-norm balance residual `|pi P - pi|`.
    pub residual: f64,
    pub method: SolveMethod,
    pub iterations: usize,
}

impl StationaryDistribution {
    pub fn prob(&self, s: State) -> f64 {
        self.states
            .iter()
            .position(|&t| t == s)
            .map_or(0.0, |i| self.pi[i])
    }
}

fn normalize(pi: &mut [f64]) {
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
}

pub fn stationary_power(chain: &Chain, tol: f64, budget: usize) -> Result<StationaryDistribution> {
    let n = chain.len();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut step = f64::INFINITY;
    for it in 1..=budget {
        chain.left_mul(&pi, &mut next);
        normalize(&mut next);
        step = next
            .iter()
            .zip(&pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if step <= tol {
            return Ok(StationaryDistribution {
                states: chain.states.clone(),
                residual: chain.balance_residual(&pi),
                pi,
                method: SolveMethod::Power,
                iterations: it,
            });
        }
    }
    Err(Error::NotConverged {
        what: "power iteration",
        iterations: budget,
        residual: step,
    })
}

/// Solve `(P^T - I) pi = 0` with the last equation replaced by `sum(pi) = 1`.
pub fn stationary_direct(chain: &Chain) -> Result<StationaryDistribution> {
    let n = chain.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] -= 1.0;
        for (j, p) in chain.row(i) {
            m[(j, i)] += p;
        }
    }
    for j in 0..n {
        m[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = m.lu().solve(&b).ok_or(Error::NotConverged {
        what: "direct stationary solve (singular system)",
        iterations: 0,
        residual: f64::NAN,
    })?;
    let mut pi: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    normalize(&mut pi);
    Ok(StationaryDistribution {
        states: chain.states.clone(),
        residual: chain.balance_residual(&pi),
        pi,
        method: SolveMethod::Direct,
        iterations: 0,
    })
}

/// Power iteration, falling back to a direct solve for small chains.
pub fn stationary(chain: &Chain) -> Result<StationaryDistribution> {
    match stationary_power(chain, POWER_TOL, POWER_BUDGET) {
        Ok(d) => Ok(d),
        Err(e) if chain.len() < DIRECT_LIMIT => stationary_direct(chain).map_err(|_| e),
        Err(e) => Err(e),
    }
}

/// `Delta = E[A] + 1/2`, `p_bar = P(offload)` and `g = Delta + lambda p_bar`
/// from the stationary distribution of the induced chain.
pub fn evaluate_exact(policy: &Policy, params: &ModelParams) -> Result<EvalResult> {
    let chain = build_chain(policy, params)?;
    let dist = stationary(&chain)?;
    Ok(evaluate_distribution(&chain, &dist, params.lambda))
}

pub fn evaluate_distribution(chain: &Chain, dist: &StationaryDistribution, lambda: f64) -> EvalResult {
    let mut age = 0.0;
    let mut mec = 0.0;
    for ((s, u), p) in chain.states.iter().zip(&chain.actions).zip(&dist.pi) {
        age += s.a as f64 * p;
        if *u == Action::Mec {
            mec += p;
        }
    }
    EvalResult::new(age + 0.5, mec, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{age_threshold_policy, service_threshold_policy};
    use approx::assert_relative_eq;

    fn params(mu: f64, a_max: u32) -> ModelParams {
        ModelParams::new(mu, 3.0, 0.99, a_max).unwrap()
    }

    #[test]
    fn age_threshold_two_rows() {
        let c = build_chain(&age_threshold_policy(2, 50).unwrap(), &params(0.5, 50)).unwrap();
        assert_eq!(c.len(), 2);
        let r0 = c.row_of(State::RESET).unwrap();
        assert_eq!(r0[&State::RESET], 0.5);
        assert_eq!(r0[&State { a: 2, z: 1 }], 0.5);
        let r1 = c.row_of(State { a: 2, z: 1 }).unwrap();
        assert_eq!(r1.len(), 1);
        assert_eq!(r1[&State::RESET], 1.0);
    }

    #[test]
    fn mec_only_single_state() {
        let c = build_chain(&Policy::MecOnly, &params(0.3, 20)).unwrap();
        assert_eq!(c.states(), &[State::RESET]);
        let d = stationary(&c).unwrap();
        assert_eq!(d.pi, vec![1.0]);
        let r = evaluate_exact(&Policy::MecOnly, &params(0.3, 20)).unwrap();
        assert_eq!((r.delta, r.p_bar), (1.5, 1.0));
    }

    #[test]
    fn local_only_with_forced_reset() {
        let a_max = 12;
        let c = build_chain(&Policy::LocalOnly, &params(0.5, a_max)).unwrap();
        // every (a, z) with z < a <= a_max except (a_max, 0): completions
        // happen below the boundary, so they leave an age of at most a_max - 1
        assert_eq!(c.len(), (a_max * (a_max + 1) / 2 - 1) as usize);
        assert!(c.index_of(State { a: a_max, z: 0 }).is_none());
        for (s, u) in c.states().iter().zip(c.actions()) {
            assert_eq!(*u == Action::Mec, s.a == a_max, "{s}");
        }
        for i in 0..c.len() {
            let total: f64 = c.row(i).map(|(_, p)| p).sum();
            assert_eq!(total, 1.0);
        }
    }

    #[test]
    fn two_state_stationary() {
        let c = build_chain(&age_threshold_policy(2, 50).unwrap(), &params(0.5, 50)).unwrap();
        for d in [stationary_power(&c, POWER_TOL, POWER_BUDGET).unwrap(), stationary_direct(&c).unwrap()] {
            assert_relative_eq!(d.prob(State::RESET), 2.0 / 3.0, epsilon = 1e-11);
            assert_relative_eq!(d.prob(State { a: 2, z: 1 }), 1.0 / 3.0, epsilon = 1e-11);
        }
        let r = evaluate_exact(&age_threshold_policy(2, 50).unwrap(), &params(0.5, 50)).unwrap();
        assert_relative_eq!(r.delta, 11.0 / 6.0, epsilon = 1e-11);
        assert_relative_eq!(r.p_bar, 1.0 / 3.0, epsilon = 1e-11);
        assert_relative_eq!(r.g, 11.0 / 6.0 + 1.0, epsilon = 1e-11);
    }

    #[test]
    fn short_cycle_balance() {
        for mu in [0.2, 0.5, 0.9] {
            let c = build_chain(&age_threshold_policy(3, 50).unwrap(), &params(mu, 50)).unwrap();
            let d = stationary(&c).unwrap();
            assert!(d.residual <= 1e-10);
            assert_relative_eq!(d.pi.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
            let s: std::collections::BTreeSet<_> = c.states().iter().copied().collect();
            let expect = [(1, 0), (2, 0), (2, 1), (3, 1), (3, 2)]
                .map(|(a, z)| State { a, z })
                .into_iter()
                .collect();
            assert_eq!(s, expect);
        }
    }

    #[test]
    fn power_and_direct_agree() {
        let p = params(0.15, 40);
        for policy in [
            Policy::LocalOnly,
            age_threshold_policy(9, 40).unwrap(),
            service_threshold_policy(6).unwrap(),
            Policy::ZThreshold { thresholds: vec![12, 9, 7, 6, 6] },
        ] {
            let c = build_chain(&policy, &p).unwrap();
            let a = stationary_power(&c, POWER_TOL, POWER_BUDGET).unwrap();
            let b = stationary_direct(&c).unwrap();
            for (x, y) in a.pi.iter().zip(&b.pi) {
                assert!((x - y).abs() < 1e-10, "{}", policy.label());
            }
        }
    }

    #[test]
    fn exhausted_budget_reports_residual() {
        let c = build_chain(&Policy::LocalOnly, &params(0.1, 30)).unwrap();
        match stationary_power(&c, 1e-15, 3) {
            Err(Error::NotConverged { iterations, residual, .. }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }
}
