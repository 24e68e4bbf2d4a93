//! Average-cost optimal scheduling on the truncated MDP.
//!
//! [`rvi_solve`] runs relative value iteration with `(1, 0)` as reference
//! state and offloading forced at `a = a_max`. [`discounted_vi`] produces the
//! discounted value iterates used by [`verify_structure`] to check the
//! monotonicity and threshold properties the optimal policy rests on.
//! [`brute_force_best_threshold`] is an independent oracle: it enumerates
//! z-dependent age threshold tables and evaluates each one exactly.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::evaluate_exact;
use crate::error::{Error, Result};
use crate::model::{Action, ModelParams, State, StateSpace};
use crate::policy::{ActionTable, Policy};

pub const RVI_TOL: f64 = 1e-10;
pub const RVI_BUDGET: usize = 100_000;
/// Weight on the Bellman update in each RVI step; the remainder keeps the
/// previous iterate.
pub const RVI_MIXING: f64 = 0.5;
/// Upper bound on the number of threshold tables the brute-force oracle
/// will evaluate.
pub const BRUTE_FORCE_LIMIT: u128 = 100_000;

/// Values over the truncated space in triangular order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    a_max: u32,
    v: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(a_max: u32) -> Self {
        ValueTable {
            a_max,
            v: vec![0.0; StateSpace::new(a_max).len()],
        }
    }

    pub fn a_max(&self) -> u32 {
        self.a_max
    }

    pub fn get(&self, s: State) -> f64 {
        self.v[StateSpace::new(self.a_max).index(s)]
    }

    pub fn set(&mut self, s: State, value: f64) {
        let i = StateSpace::new(self.a_max).index(s);
        self.v[i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }

    pub fn iter(&self) -> impl Iterator<Item = (State, f64)> + '_ {
        StateSpace::new(self.a_max).states().zip(self.v.iter().copied())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub policy: Policy,
    /// Average cost per slot.
    pub g: f64,
    /// `abar_z` for every column `z` reachable from `(1, 0)`.
    pub thresholds: BTreeMap<u32, u32>,
    pub iterations: usize,
    pub span_residual: f64,
    /// Differential cost `h` with `h(1, 0) = 0`; empty for the brute-force
    /// oracle.
    #[serde(skip)]
    pub values: Option<ValueTable>,
}

#[derive(Clone, Copy, Debug)]
pub struct RviOptions {
    /// Stop once the span of `T h - h` is at most `tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// `h <- (1 - mixing) h + mixing T h`. Any value in `(0, 1]` has the same
    /// fixed point and greedy policy; values below 1 make every induced
    /// chain strongly aperiodic, which matters when the optimal cycle is
    /// almost deterministic (small `mu`). `1.0` is plain RVI.
    pub mixing: f64,
}

impl Default for RviOptions {
    fn default() -> Self {
        RviOptions {
            tol: RVI_TOL,
            max_iter: RVI_BUDGET,
            mixing: RVI_MIXING,
        }
    }
}

#[inline]
fn tri(a: usize, z: usize) -> usize {
    a * (a - 1) / 2 + z
}

/// One Bellman sweep `out = T_beta v` over the truncated space, with
/// `discount = 1` for the undiscounted operator. When `actions` is given,
/// the greedy action of every state is recorded (ties go to local service).
fn bellman(p: &ModelParams, discount: f64, v: &[f64], out: &mut [f64], mut actions: Option<&mut [bool]>) {
    let n = p.a_max as usize;
    let (mu, lambda) = (p.mu, p.lambda);
    let reset = v[0];
    for a in 1..=n {
        let base = tri(a, 0);
        let age = a as f64 + 0.5;
        let mec = age + lambda + discount * reset;
        if a == n {
            out[base..base + a].iter_mut().for_each(|w| *w = mec);
            if let Some(act) = actions.as_deref_mut() {
                act[base..base + a].iter_mut().for_each(|x| *x = true);
            }
            continue;
        }
        let older = tri(a + 1, 1);
        for z in 0..a {
            let done = v[tri(z + 1, 0)];
            let cont = v[older + z];
            let local = age + discount * (mu * done + (1.0 - mu) * cont);
            let offload = mec < local;
            out[base + z] = if offload { mec } else { local };
            if let Some(act) = actions.as_deref_mut() {
                act[base + z] = offload;
            }
        }
    }
}

fn greedy_policy(p: &ModelParams, h: &[f64]) -> ActionTable {
    let mut scratch = vec![0.0; h.len()];
    let mut mec = vec![false; h.len()];
    bellman(p, 1.0, h, &mut scratch, Some(&mut mec));
    let space = StateSpace::new(p.a_max);
    ActionTable::from_fn(p.a_max, |s| Action::from_bit(mec[space.index(s)]))
}

pub fn rvi_solve(params: &ModelParams) -> Result<SolveReport> {
    rvi_solve_with(params, RviOptions::default())
}

/// Relative value iteration with `(1, 0)` as reference state. Stops when
/// the span of `T h - h` falls below `opts.tol`; the gain is the midpoint of
/// `T h - h` at that point.
pub fn rvi_solve_with(params: &ModelParams, opts: RviOptions) -> Result<SolveReport> {
    params.validate()?;
    if !(opts.mixing > 0.0 && opts.mixing <= 1.0) {
        return Err(Error::param("mixing", format!("must lie in (0, 1], got {}", opts.mixing)));
    }
    let tau = opts.mixing;
    let len = params.space().len();
    let mut h = vec![0.0; len];
    let mut w = vec![0.0; len];
    let mut span = f64::INFINITY;
    for it in 1..=opts.max_iter {
        bellman(params, 1.0, &h, &mut w, None);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (wi, hi_) in w.iter().zip(&h) {
            let d = wi - hi_;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        span = hi - lo;
        let shift = w[0];
        for (hv, wv) in h.iter_mut().zip(&w) {
            *hv = (1.0 - tau) * *hv + tau * (wv - shift);
        }
        if span <= opts.tol {
            let g = 0.5 * (lo + hi);
            let policy = Policy::Table(greedy_policy(params, &h));
            let thresholds = policy.reachable_thresholds(params.a_max, params.mu);
            return Ok(SolveReport {
                policy,
                g,
                thresholds,
                iterations: it,
                span_residual: span,
                values: Some(ValueTable {
                    a_max: params.a_max,
                    v: h,
                }),
            });
        }
    }
    Err(Error::NotConverged {
        what: "relative value iteration",
        iterations: opts.max_iter,
        residual: span,
    })
}

/// Max over states of `|g + h(s) - min_u [C(s,u) + sum P h]|`.
pub fn optimality_residual(params: &ModelParams, h: &ValueTable, g: f64) -> f64 {
    let mut w = vec![0.0; h.v.len()];
    bellman(params, 1.0, &h.v, &mut w, None);
    w.iter()
        .zip(&h.v)
        .map(|(t, hv)| (g + hv - t).abs())
        .fold(0.0, f64::max)
}

/// Discounted value iterates `V_0 = 0, V_n = T_beta V_{n-1}` for
/// `n = 0..=n_iters`, on the truncated space.
pub fn discounted_vi(params: &ModelParams, n_iters: usize) -> Result<Vec<ValueTable>> {
    params.validate()?;
    let mut out = Vec::with_capacity(n_iters + 1);
    out.push(ValueTable::zeros(params.a_max));
    for _ in 0..n_iters {
        let prev = out.last().expect("non-empty");
        let mut next = ValueTable::zeros(params.a_max);
        bellman(params, params.beta, &prev.v, &mut next.v, None);
        out.push(next);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub state: State,
    /// Value-iterate index, for checks on value tables.
    pub iteration: Option<usize>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub checks: Vec<Check>,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, witness: Option<Witness>) -> Check {
    Check {
        name: name.to_string(),
        passed: witness.is_none(),
        witness,
    }
}

fn below(lhs: f64, rhs: f64) -> bool {
    lhs < rhs - 1e-9 * rhs.abs().max(1.0)
}

fn first_value_violation(
    iterates: &[ValueTable],
    mut bad: impl FnMut(&ValueTable, State) -> Option<String>,
) -> Option<Witness> {
    for (n, v) in iterates.iter().enumerate() {
        for s in StateSpace::new(v.a_max).states() {
            if let Some(detail) = bad(v, s) {
                return Some(Witness {
                    state: s,
                    iteration: Some(n),
                    detail,
                });
            }
        }
    }
    None
}

/// Check the structural properties of the value iterates and of the solved
/// policy over the whole truncated space:
///
/// 1. `V_n(a+1, z) >= V_n(a, z)`;
/// 2. `V_n(a, z+1) >= V_n(a, z)`;
/// 3. `V_n(a, z) - V_n(1, 0) >= 0`;
/// 4. offloading at `(a, z)` implies offloading at `(a+1, z)`;
/// 5. offloading at `(a, z)` implies offloading at `(a, z+1)`;
/// 6. `abar_z` non-increasing over the reachable columns;
/// 7. the optimality equation holds for the differential cost, when present.
pub fn verify_structure(iterates: &[ValueTable], report: &SolveReport, params: &ModelParams) -> StructureReport {
    let a_max = params.a_max;
    let mut checks = Vec::new();

    checks.push(check(
        "value_monotone_in_age",
        first_value_violation(iterates, |v, s| {
            (s.a < v.a_max)
                .then(|| (v.get(State { a: s.a + 1, ..s }), v.get(s)))
                .filter(|(up, cur)| below(*up, *cur))
                .map(|(up, cur)| format!("V(a+1,z)={up} < V(a,z)={cur}"))
        }),
    ));
    checks.push(check(
        "value_monotone_in_service",
        first_value_violation(iterates, |v, s| {
            (s.z + 1 < s.a)
                .then(|| (v.get(State { z: s.z + 1, ..s }), v.get(s)))
                .filter(|(up, cur)| below(*up, *cur))
                .map(|(up, cur)| format!("V(a,z+1)={up} < V(a,z)={cur}"))
        }),
    ));
    checks.push(check(
        "relative_value_nonnegative",
        first_value_violation(iterates, |v, s| {
            let h = v.get(s) - v.get(State::RESET);
            below(h, 0.0).then(|| format!("h(a,z)={h} < 0"))
        }),
    ));

    let policy = &report.policy;
    let mec = |s: State| policy.truncated_action(s, a_max) == Action::Mec;
    let space = StateSpace::new(a_max);
    let policy_witness = |pred: &dyn Fn(State) -> bool, detail: &str| {
        space.states().find(|&s| pred(s)).map(|state| Witness {
            state,
            iteration: None,
            detail: detail.to_string(),
        })
    };
    checks.push(check(
        "threshold_in_age",
        policy_witness(
            &|s| s.a < a_max && mec(s) && !mec(State { a: s.a + 1, ..s }),
            "offloads at (a,z) but not at (a+1,z)",
        ),
    ));
    checks.push(check(
        "threshold_in_service",
        policy_witness(
            &|s| s.z + 1 < s.a && mec(s) && !mec(State { z: s.z + 1, ..s }),
            "offloads at (a,z) but not at (a,z+1)",
        ),
    ));

    let thresholds = policy.reachable_thresholds(a_max, params.mu);
    let rising = thresholds
        .iter()
        .zip(thresholds.iter().skip(1))
        .find(|((_, lo), (_, hi))| hi > lo)
        .map(|((z0, t0), (z1, t1))| Witness {
            state: State { a: *t1, z: *z1 },
            iteration: None,
            detail: format!("abar_{z1}={t1} > abar_{z0}={t0}"),
        });
    checks.push(check("thresholds_non_increasing", rising));

    if let Some(h) = &report.values {
        let res = optimality_residual(params, h, report.g);
        let bound = 1e-6;
        let w = (res > bound).then(|| Witness {
            state: State::RESET,
            iteration: None,
            detail: format!("optimality residual {res:e} > {bound:e}"),
        });
        checks.push(check("optimality_equation", w));
    }

    StructureReport { checks }
}

/// Number of distinct threshold tables with values in `[1, bound]`, after
/// identifying tables that agree on every reachable column: `2^(bound-1)`.
pub fn threshold_table_count(bound: u32) -> u128 {
    if bound == 0 {
        0
    } else {
        1u128.checked_shl(bound - 1).unwrap_or(u128::MAX)
    }
}

/// Every non-increasing table `abar_0 >= abar_1 >= ...` with entries in
/// `[1, bound]`, listed once per reachable-equivalence class. A table stops
/// at the first column whose threshold is `z + 1` (that column offloads in
/// every state, so later columns are never reached).
pub fn enumerate_threshold_tables(bound: u32) -> Vec<Vec<u32>> {
    fn rec(z: u32, prev: u32, bound: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        for t in z + 1..=prev.min(bound) {
            cur.push(t);
            if t == z + 1 {
                out.push(cur.clone());
            } else {
                rec(z + 1, t, bound, cur, out);
            }
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, bound, bound, &mut Vec::new(), &mut out);
    out
}

/// Best z-dependent age threshold policy by exhaustive enumeration, each
/// candidate evaluated exactly on the induced chain.
pub fn brute_force_best_threshold(params: &ModelParams, search_bound: u32) -> Result<SolveReport> {
    params.validate()?;
    if search_bound < 1 || search_bound > params.a_max {
        return Err(Error::param(
            "search_bound",
            format!("must lie in [1, a_max={}], got {search_bound}", params.a_max),
        ));
    }
    let count = threshold_table_count(search_bound);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::SearchTooLarge {
            count,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let tables = enumerate_threshold_tables(search_bound);
    debug_assert_eq!(tables.len() as u128, count);

    let evaluated: Vec<(usize, f64)> = tables
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let policy = Policy::ZThreshold { thresholds: t.clone() };
            evaluate_exact(&policy, params).map(|r| (i, r.g))
        })
        .collect::<Result<_>>()?;
    let (best, g) = evaluated
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
        .expect("at least one table");

    let policy = Policy::ZThreshold {
        thresholds: tables[best].clone(),
    };
    let thresholds = policy.reachable_thresholds(params.a_max, params.mu);
    Ok(SolveReport {
        policy,
        g,
        thresholds,
        iterations: tables.len(),
        span_residual: 0.0,
        values: None,
    })
}

/// Solve a batch of parameter points concurrently, preserving order.
pub fn rvi_solve_many(params: &[ModelParams]) -> Vec<Result<SolveReport>> {
    params.par_iter().map(rvi_solve).collect()
}
