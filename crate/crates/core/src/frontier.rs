//! Age vs. edge-cloud frequency sweeps and their CSV/JSON export.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::evaluate_exact;
use crate::error::{Error, Result};
use crate::heuristics::{local_only, mec_only, service_threshold_eval};
use crate::mdp::rvi_solve;
use crate::model::{default_a_max, ModelParams};
use crate::policy::age_threshold_policy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    LocalOnly,
    MecOnly,
    AgeThreshold,
    ServiceThreshold,
    Optimal,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::LocalOnly,
        Family::MecOnly,
        Family::AgeThreshold,
        Family::ServiceThreshold,
        Family::Optimal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::LocalOnly => "local_only",
            Family::MecOnly => "mec_only",
            Family::AgeThreshold => "age_threshold",
            Family::ServiceThreshold => "service_threshold",
            Family::Optimal => "optimal",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::param("family", format!("unknown family `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Chain,
    Rvi,
    Sim,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::Chain => "chain",
            Method::Rvi => "rvi",
            Method::Sim => "sim",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Method::ClosedForm, Method::Chain, Method::Rvi, Method::Sim]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::param("method", format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub family: Family,
    /// `a*`, `z*` or `lambda`, depending on the family; 0 for the
    /// single-point families.
    pub param: f64,
    pub mu: f64,
    pub p_bar: f64,
    pub delta: f64,
    pub method: Method,
}

impl FrontierPoint {
    /// `delta + lambda * p_bar`.
    pub fn lagrangian(&self, lambda: f64) -> f64 {
        self.delta + lambda * self.p_bar
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierConfig {
    pub mu: f64,
    pub a_stars: Vec<u32>,
    pub z_stars: Vec<u32>,
    pub lambdas: Vec<f64>,
    pub a_max: u32,
}

impl FrontierConfig {
    /// `mu = 0.01`, `a* = 1..=15`, `z* = 0..=9`, 25 log-spaced prices in
    /// `[0.01, 50]`, `a_max = 400`.
    pub fn default_grid() -> Self {
        Self::for_mu(0.01)
    }

    pub fn for_mu(mu: f64) -> Self {
        FrontierConfig {
            mu,
            a_stars: (1..=15).collect(),
            z_stars: (0..=9).collect(),
            lambdas: log_grid(0.01, 50.0, 25),
            a_max: default_a_max(mu),
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::model::validate_mu(self.mu)?;
        if self.a_stars.is_empty() || self.z_stars.is_empty() || self.lambdas.is_empty() {
            return Err(Error::param("ranges", "a*, z* and lambda ranges must be non-empty"));
        }
        if let Some(bad) = self.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::param("lambda", format!("must be finite and >= 0, got {bad}")));
        }
        Ok(())
    }

    fn params(&self, lambda: f64) -> Result<ModelParams> {
        ModelParams::new(self.mu, lambda, ModelParams::DEFAULT_BETA, self.a_max)
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![hi],
        _ => {
            let (l0, l1) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == n - 1 {
                        hi
                    } else {
                        (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// Every frontier row for `cfg`, sorted by `(family, param)`.
///
/// Single-point and service-threshold rows use closed forms, age-threshold
/// rows the exact chain, and optimal rows the RVI policy evaluated on its
/// chain.
pub fn frontier(cfg: &FrontierConfig) -> Result<Vec<FrontierPoint>> {
    cfg.validate()?;
    let mu = cfg.mu;
    let point = |family, param: f64, r: crate::model::EvalResult, method| FrontierPoint {
        family,
        param,
        mu,
        p_bar: r.p_bar,
        delta: r.delta,
        method,
    };

    let mut rows = vec![
        point(Family::LocalOnly, 0.0, local_only(mu)?, Method::ClosedForm),
        point(Family::MecOnly, 0.0, mec_only(), Method::ClosedForm),
    ];
    for &z in &cfg.z_stars {
        rows.push(point(
            Family::ServiceThreshold,
            z as f64,
            service_threshold_eval(mu, z)?,
            Method::ClosedForm,
        ));
    }
    let params0 = cfg.params(0.0)?;
    let age_rows: Vec<FrontierPoint> = cfg
        .a_stars
        .par_iter()
        .map(|&a| {
            let policy = age_threshold_policy(a, cfg.a_max)?;
            let r = evaluate_exact(&policy, &params0)?;
            Ok(point(Family::AgeThreshold, a as f64, r, Method::Chain))
        })
        .collect::<Result<_>>()?;
    rows.extend(age_rows);
    let opt_rows: Vec<FrontierPoint> = cfg
        .lambdas
        .par_iter()
        .map(|&lambda| {
            let params = cfg.params(lambda)?;
            let report = rvi_solve(&params)?;
            let r = evaluate_exact(&report.policy, &params)?;
            Ok(point(Family::Optimal, lambda, r, Method::Rvi))
        })
        .collect::<Result<_>>()?;
    rows.extend(opt_rows);

    sort_points(&mut rows);
    Ok(rows)
}

pub fn sort_points(rows: &mut [FrontierPoint]) {
    rows.sort_by(|x, y| {
        x.family
            .cmp(&y.family)
            .then(x.param.total_cmp(&y.param))
            .then(x.method.cmp(&y.method))
    });
}

/// First `(optimal row, heuristic row)` pair where the optimal row's
/// Lagrangian cost at its own price exceeds the heuristic's by more than
/// `tol`.
pub fn dominance_violation(rows: &[FrontierPoint], tol: f64) -> Option<(FrontierPoint, FrontierPoint)> {
    let heuristics: Vec<&FrontierPoint> = rows.iter().filter(|r| r.family != Family::Optimal).collect();
    rows.iter().filter(|r| r.family == Family::Optimal).find_map(|opt| {
        let lambda = opt.param;
        heuristics
            .iter()
            .find(|h| h.mu == opt.mu && opt.lagrangian(lambda) > h.lagrangian(lambda) + tol)
            .map(|h| (opt.clone(), (*h).clone()))
    })
}

/// Decimal rendering with 12 significant digits. Magnitudes outside
/// `[1e-4, 1e12)` fall back to scientific notation.
pub fn fmt_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..12).contains(&mag) {
        return format!("{x:.11e}");
    }
    let decimals = (11 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

pub const CSV_HEADER: &str = "family,param,mu,p_bar,delta,method";

pub fn write_csv<W: Write>(rows: &[FrontierPoint], mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.family,
            fmt_sig12(r.param),
            fmt_sig12(r.mu),
            fmt_sig12(r.p_bar),
            fmt_sig12(r.delta),
            r.method
        )?;
    }
    Ok(())
}

pub fn write_json<W: Write>(rows: &[FrontierPoint], mut w: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, rows)?;
    writeln!(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig12_rendering() {
        assert_eq!(fmt_sig12(199.5), "199.500000000");
        assert_eq!(fmt_sig12(1.0), "1.00000000000");
        assert_eq!(fmt_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig12(0.0), "0");
        assert_eq!(fmt_sig12(0.01), "0.0100000000000");
        assert_eq!(fmt_sig12(2.5e-9), "2.50000000000e-9");
    }

    #[test]
    fn grid_endpoints() {
        let g = log_grid(0.01, 50.0, 25);
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[24], 50.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let ratio = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] / ratio - 1.0).abs() < 1e-12));
    }

    #[test]
    fn family_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
        assert!("nope".parse::<Family>().is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = vec![FrontierPoint {
            family: Family::MecOnly,
            param: 0.0,
            mu: 0.5,
            p_bar: 1.0,
            delta: 1.5,
            method: Method::ClosedForm,
        }];
        let mut out = Vec::new();
        write_csv(&rows, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "family,param,mu,p_bar,delta,method\nmec_only,0,0.500000000000,1.00000000000,1.50000000000,closed_form\n"
        );
    }

    #[test]
    fn small_frontier() {
        let cfg = FrontierConfig {
            mu: 0.3,
            a_stars: vec![1, 2, 5],
            z_stars: vec![0, 3],
            lambdas: vec![0.5, 4.0],
            a_max: 40,
        };
        let rows = frontier(&cfg).unwrap();
        assert_eq!(rows.len(), 3 + 2 + 2 + 2);
        assert_eq!(rows[0].family, Family::LocalOnly);
        assert_eq!(rows.last().unwrap().family, Family::Optimal);
        assert!(dominance_violation(&rows, 1e-6).is_none());
    }
}
