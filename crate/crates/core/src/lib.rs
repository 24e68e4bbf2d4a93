//! Timely status updates with optional offloading to a mobile edge cloud.
//!
//! A generate-at-will source feeds a local server with geometric service.
//! Each slot the scheduler may instead pull a fresh update and have the
//! edge cloud process it within the slot, at price `lambda`. The crate
//! evaluates the tradeoff between average age at the monitor and
//! edge-cloud usage:
//!
//! * [`model`]: state space, kernel and slot cost;
//! * [`heuristics`]: closed forms for local-only, MEC-only and
//!   service-threshold policies;
//! * [`chain`]: exact evaluation of any stationary policy through its
//!   induced Markov chain;
//! * [`mdp`]: relative value iteration for the average-cost optimum,
//!   structural checks and a brute-force threshold oracle;
//! * [`sim`]: seeded Monte Carlo with batch-means standard errors;
//! * [`frontier`]: parameter sweeps and CSV/JSON export.

pub mod chain;
pub mod error;
pub mod frontier;
pub mod heuristics;
pub mod mdp;
pub mod model;
pub mod policy;
pub mod sim;

pub use chain::{build_chain, evaluate_exact, stationary, Chain, StationaryDistribution};
pub use error::{Error, Result};
pub use frontier::{frontier, Family, FrontierConfig, FrontierPoint, Method};
pub use heuristics::{local_only, mec_only, service_moments, service_threshold_eval, ServiceMoments};
pub use mdp::{brute_force_best_threshold, discounted_vi, rvi_solve, verify_structure, SolveReport, ValueTable};
pub use model::{cost, transitions, Action, EvalResult, ModelParams, State, Transition};
pub use policy::{age_threshold_policy, service_threshold_policy, Policy};
pub use sim::{simulate, SimConfig, SimResult};
