//! Seeded slot-by-slot Monte Carlo of the scheduler.
//!
//! Each slot reads `(a, z)`, applies the policy, and either has the edge
//! cloud serve a fresh update within the slot (next state `(1, 0)`) or
//! draws a local completion with probability `mu`. The slot contributes
//! `a + 1/2` to the age average and `u` to the edge-cloud frequency.
//!
//! Randomness comes from xoshiro256++ seeded through SplitMix64
//! (`Xoshiro256PlusPlus::seed_from_u64`). A local completion is drawn as
//! `(next_u64() >> 11) * 2^-53 < mu`, so trajectories are reproducible in
//! any language with those two reference generators.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_mu, Action, State};
use crate::policy::Policy;

pub const MIN_BATCHES: usize = 10;
/// Number of service-time atoms tracked for goodness-of-fit checks.
pub const SERVICE_ATOMS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: u64,
    pub seed: u64,
    pub warmup: u64,
    pub batches: usize,
}

impl SimConfig {
    /// `horizon` slots with a 1% warm-up and 100 batches.
    pub fn new(horizon: u64, seed: u64) -> Self {
        SimConfig {
            horizon,
            seed,
            warmup: horizon / 100,
            batches: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::param("horizon", "must be >= 1"));
        }
        if self.warmup >= self.horizon {
            return Err(Error::param(
                "warmup",
                format!("must be < horizon={}, got {}", self.horizon, self.warmup),
            ));
        }
        if self.batches < MIN_BATCHES {
            return Err(Error::param(
                "batches",
                format!("need at least {MIN_BATCHES}, got {}", self.batches),
            ));
        }
        if self.horizon - self.warmup < self.batches as u64 {
            return Err(Error::param(
                "horizon",
                format!(
                    "{} measured slots cannot fill {} batches",
                    self.horizon - self.warmup,
                    self.batches
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Mean of `a + 1/2` over the measured slots.
    pub delta_hat: f64,
    /// Fraction of measured slots that used the edge cloud.
    pub p_bar_hat: f64,
    pub stderr_delta: f64,
    pub stderr_p: f64,
    /// Fraction of measured slots spent in `(1, 0)`.
    pub reset_fraction: f64,
    pub stderr_reset: f64,
    /// Measured slots.
    pub slots: u64,
    /// `service_counts[k - 1]` counts local completions after exactly `k`
    /// slots of service, for `k <= SERVICE_ATOMS`.
    pub service_counts: Vec<u64>,
    pub completions: u64,
}

/// Standard error of the mean from independent batch means.
pub fn batch_stderr(batch_means: &[f64]) -> Result<f64> {
    let b = batch_means.len();
    if b < MIN_BATCHES {
        return Err(Error::param(
            "batches",
            format!("need at least {MIN_BATCHES} batch means, got {b}"),
        ));
    }
    let n = b as f64;
    let mean = batch_means.iter().sum::<f64>() / n;
    let var = batch_means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((var / n).sqrt())
}

#[derive(Default, Clone, Copy)]
struct Batch {
    slots: u64,
    age: u64,
    mec: u64,
    reset: u64,
}

#[inline]
fn unit_f64(rng: &mut Xoshiro256PlusPlus) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn simulate(policy: &Policy, mu: f64, config: &SimConfig) -> Result<SimResult> {
    validate_mu(mu)?;
    config.validate()?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(config.seed);
    let measured = config.horizon - config.warmup;
    let nb = config.batches as u64;
    let mut batches = vec![Batch::default(); config.batches];
    let mut service_counts = vec![0u64; SERVICE_ATOMS];
    let mut completions = 0u64;

    let mut s = State::RESET;
    for n in 0..config.horizon {
        let u = policy.action(s);
        let record = n >= config.warmup;
        if record {
            let k = n - config.warmup;
            let b = &mut batches[(k * nb / measured) as usize];
            b.slots += 1;
            b.age += s.a as u64;
            b.mec += u.as_u8() as u64;
            b.reset += (s == State::RESET) as u64;
        }
        s = match u {
            Action::Mec => State::RESET,
            Action::Local => {
                if unit_f64(&mut rng) < mu {
                    if record {
                        completions += 1;
                        if let Some(c) = service_counts.get_mut(s.z as usize) {
                            *c += 1;
                        }
                    }
                    State { a: s.z + 1, z: 0 }
                } else {
                    State { a: s.a + 1, z: s.z + 1 }
                }
            }
        };
    }

    let total = |f: fn(&Batch) -> u64| batches.iter().map(f).sum::<u64>();
    let m = measured as f64;
    let means = |f: fn(&Batch) -> u64| -> Vec<f64> {
        batches
            .iter()
            .map(|b| f(b) as f64 / b.slots as f64)
            .collect()
    };
    Ok(SimResult {
        delta_hat: total(|b| b.age) as f64 / m + 0.5,
        p_bar_hat: total(|b| b.mec) as f64 / m,
        stderr_delta: batch_stderr(&means(|b| b.age))?,
        stderr_p: batch_stderr(&means(|b| b.mec))?,
        reset_fraction: total(|b| b.reset) as f64 / m,
        stderr_reset: batch_stderr(&means(|b| b.reset))?,
        slots: measured,
        service_counts,
        completions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::service_threshold_policy;

    #[test]
    fn always_mec_is_exact() {
        let r = simulate(&Policy::MecOnly, 0.3, &SimConfig::new(1_000_000, 1)).unwrap();
        assert_eq!(r.delta_hat, 1.5);
        assert_eq!(r.p_bar_hat, 1.0);
        assert_eq!(r.stderr_delta, 0.0);
        assert_eq!(r.reset_fraction, 1.0);
    }

    #[test]
    fn deterministic_local_server() {
        let r = simulate(&Policy::LocalOnly, 1.0, &SimConfig::new(10_000, 9)).unwrap();
        assert_eq!((r.delta_hat, r.p_bar_hat), (1.5, 0.0));
    }

    #[test]
    fn same_seed_same_result() {
        let p = service_threshold_policy(3).unwrap();
        let cfg = SimConfig::new(200_000, 77);
        assert_eq!(simulate(&p, 0.4, &cfg).unwrap(), simulate(&p, 0.4, &cfg).unwrap());
        let other = SimConfig { seed: 78, ..cfg };
        assert_ne!(simulate(&p, 0.4, &cfg).unwrap(), simulate(&p, 0.4, &other).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig { horizon: 0, seed: 0, warmup: 0, batches: 10 }.validate().is_err());
        assert!(SimConfig { horizon: 100, seed: 0, warmup: 100, batches: 10 }.validate().is_err());
        assert!(SimConfig { horizon: 100, seed: 0, warmup: 0, batches: 9 }.validate().is_err());
        assert!(SimConfig { horizon: 100, seed: 0, warmup: 95, batches: 10 }.validate().is_err());
        assert!(SimConfig { horizon: 100, seed: 0, warmup: 90, batches: 10 }.validate().is_ok());
    }

    #[test]
    fn stderr_of_constant_series() {
        assert_eq!(batch_stderr(&[2.5; 12]).unwrap(), 0.0);
    }

    #[test]
    fn stderr_needs_ten_batches() {
        assert!(batch_stderr(&[1.0]).is_err());
        assert!(batch_stderr(&[1.0; 9]).is_err());
    }

    #[test]
    fn stderr_of_bernoulli_batches() {
        // Batches of 400 fair coin flips: the stderr of the grand mean is
        // sqrt(0.25 / (400 * B)).
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
        let (b, size) = (200usize, 400usize);
        let means: Vec<f64> = (0..b)
            .map(|_| (0..size).filter(|_| unit_f64(&mut rng) < 0.5).count() as f64 / size as f64)
            .collect();
        let analytic = (0.25 / (size * b) as f64).sqrt();
        let est = batch_stderr(&means).unwrap();
        assert!((est / analytic - 1.0).abs() < 0.2, "{est} vs {analytic}");
    }
}
