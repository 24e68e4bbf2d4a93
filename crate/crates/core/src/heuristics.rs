//! Closed-form age and edge-cloud frequency of the local-only, MEC-only and
//! service-threshold policies.
//!
//! The service-threshold policy drops the update in service once it has
//! spent `z*` slots at the local server and has the edge cloud serve a fresh
//! one instead, so the effective service time is `min(Z, z* + 1)` with
//! `Z ~ Geom(mu)`. Average age follows from the renewal-reward identity
//! `Delta = E[Y] + E[S^2] / (2 E[S])`, where `Y` is the age left at the
//! monitor by the previous delivery (independent of the current service
//! time `S`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_mu, EvalResult};

/// Largest service threshold accepted. Beyond it the policy is numerically
/// indistinguishable from local-only at double precision.
pub const MAX_Z_STAR: u32 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceThresholdPolicy {
    pub z_star: u32,
}

impl ServiceThresholdPolicy {
    pub fn new(z_star: u32) -> Result<Self> {
        if z_star > MAX_Z_STAR {
            return Err(Error::param(
                "z_star",
                format!("must be <= {MAX_Z_STAR}, got {z_star}"),
            ));
        }
        Ok(ServiceThresholdPolicy { z_star })
    }

    pub fn eval(&self, mu: f64) -> Result<EvalResult> {
        service_threshold_eval(mu, self.z_star)
    }
}

/// `E[S]`, `E[S^2]` and `E[Y]` of the service-threshold renewal cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceMoments {
    pub e_s: f64,
    pub e_s2: f64,
    pub e_y: f64,
}

/// Local server only: zero-wait with geometric service.
pub fn local_only(mu: f64) -> Result<EvalResult> {
    validate_mu(mu)?;
    Ok(EvalResult::new((4.0 - mu) / (2.0 * mu), 0.0, 0.0))
}

/// Edge cloud every slot. Identical to local-only with `mu = 1`, except
/// that every slot is paid for. `g` is reported at zero price; use
/// [`EvalResult::with_lambda`] to price it.
pub fn mec_only() -> EvalResult {
    EvalResult::new(1.5, 1.0, 0.0)
}

fn check(mu: f64, z_star: u32) -> Result<()> {
    validate_mu(mu)?;
    ServiceThresholdPolicy::new(z_star)?;
    Ok(())
}

/// `(1 - mu)^k` by binary powering.
fn mubar_pow(mu: f64, k: u32) -> f64 {
    (1.0 - mu).powi(k as i32)
}

pub fn service_moments(mu: f64, z_star: u32) -> Result<ServiceMoments> {
    check(mu, z_star)?;
    let mb = 1.0 - mu;
    let z = z_star as f64;
    let pz = mubar_pow(mu, z_star);
    let pz1 = pz * mb;

    let e_s = (1.0 - pz1) / mu;
    let e_y = (1.0 - pz * (mu * z + mb)) / mu;
    let e_s2 = (2.0 * mb - pz1 * (2.0 + z * mu)) / (mu * mu)
        + (1.0 - pz * z - pz) / mu
        + pz * z
        + pz;
    Ok(ServiceMoments { e_s, e_s2, e_y })
}

/// Fraction of slots that use the edge cloud: `P(Z > z*) / E[S]`.
pub fn mec_frequency(mu: f64, z_star: u32) -> Result<f64> {
    check(mu, z_star)?;
    let pz = mubar_pow(mu, z_star);
    Ok(mu * pz / (1.0 - pz * (1.0 - mu)))
}

pub fn service_threshold_eval(mu: f64, z_star: u32) -> Result<EvalResult> {
    let m = service_moments(mu, z_star)?;
    let delta = m.e_y + m.e_s2 / (2.0 * m.e_s);
    Ok(EvalResult::new(delta, mec_frequency(mu, z_star)?, 0.0))
}

/// Average age written over the common denominator `2 mu (1 - mubar^{z*+1})`.
pub fn avg_age_expanded(mu: f64, z_star: u32) -> Result<f64> {
    expanded(mu, z_star, true)
}

/// Three-term expansion exactly as it is commonly printed, whose second
/// numerator has `mubar^{z*} z*` where the algebra gives `mu mubar^{z*} z*`.
/// Kept only to document that discrepancy; it disagrees with
/// [`service_threshold_eval`] whenever `0 < z*` and `mu < 1`.
pub fn avg_age_expanded_as_printed(mu: f64, z_star: u32) -> Result<f64> {
    expanded(mu, z_star, false)
}

fn expanded(mu: f64, z_star: u32, corrected: bool) -> Result<f64> {
    check(mu, z_star)?;
    let mb = 1.0 - mu;
    let z = z_star as f64;
    let pz = mubar_pow(mu, z_star);
    let pz1 = pz * mb;
    let p2z1 = pz * pz1;
    let den = 2.0 * mu * (1.0 - pz1);

    let first = 2.0 * (1.0 - pz * (mu * z + mb) - pz1 + p2z1 * (mu * z + mb));
    let z_term = if corrected { mu * pz * z } else { pz * z };
    let second = mu * mu * pz * (z + 1.0) + mu - z_term - mu * pz;
    let third = 2.0 * mb - pz1 * (2.0 + z * mu);
    Ok((first + second + third) / den)
}
