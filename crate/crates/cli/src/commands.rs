use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use clap::Args;
use mec_aoi::frontier::{log_grid, write_csv, write_json};
use mec_aoi::mdp::StructureReport;
use mec_aoi::{
    age_threshold_policy, discounted_vi, evaluate_exact, frontier, local_only, mec_only, rvi_solve,
    service_threshold_eval, service_threshold_policy, simulate, verify_structure, Action, Family,
    FrontierConfig, FrontierPoint, Method, ModelParams, Policy, SimConfig, SimResult, State,
};
use serde::Serialize;

use crate::error::CliError;
use crate::settings::{Format, Settings, Shared};

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: mec_aoi::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: mec_aoi::Error| e.to_string())
}

#[derive(Args, Debug)]
pub struct PolicyArgs {
    /// local_only, mec_only, age_threshold, service_threshold or optimal
    #[arg(long, value_parser = parse_family)]
    pub family: Family,
    /// Age threshold a* (age_threshold)
    #[arg(long)]
    pub astar: Option<u32>,
    /// Service threshold z* (service_threshold)
    #[arg(long)]
    pub zstar: Option<u32>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// closed_form, chain, rvi or sim; defaults to the exact method of the family
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Args, Debug)]
pub struct FrontierArgs {
    #[arg(long, default_value_t = 1)]
    pub astar_min: u32,
    #[arg(long, default_value_t = 15)]
    pub astar_max: u32,
    #[arg(long, default_value_t = 0)]
    pub zstar_min: u32,
    #[arg(long, default_value_t = 9)]
    pub zstar_max: u32,
    #[arg(long, default_value_t = 0.01)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 50.0)]
    pub lambda_max: f64,
    /// Log-spaced prices between --lambda-min and --lambda-max
    #[arg(long, default_value_t = 25)]
    pub lambda_points: usize,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Discounted value iterates to check
    #[arg(long, default_value_t = 200)]
    pub vi_iters: usize,
    /// Largest service threshold in the agreement suite
    #[arg(long, default_value_t = 9)]
    pub zstar_max: u32,
    /// Corrupt one value iterate and the solved table before checking
    #[arg(long)]
    pub inject_corruption: bool,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Discarded slots; 1% of the horizon by default
    #[arg(long)]
    pub warmup: Option<u64>,
    #[arg(long, default_value_t = 100)]
    pub batches: usize,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Args, Debug)]
pub struct RviArgs {
    #[command(flatten)]
    pub shared: Shared,
}

fn emit(settings: &Settings, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
    match &settings.out {
        Some(path) => {
            let mut buf = Vec::new();
            write(&mut buf).map_err(|e| CliError::io(path, e))?;
            fs::write(path, buf).map_err(|e| CliError::io(path, e))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)
                .and_then(|_| lock.flush())
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn emit_json<T: Serialize>(settings: &Settings, value: &T) -> Result<(), CliError> {
    emit(settings, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn emit_points(settings: &Settings, rows: &[FrontierPoint]) -> Result<(), CliError> {
    match settings.format {
        Format::Csv => emit(settings, |w| write_csv(rows, w)),
        Format::Json if rows.len() == 1 => emit_json(settings, &rows[0]),
        Format::Json => emit(settings, |w| write_json(rows, w)),
    }
}

/// The policy a family/threshold pair names, with its frontier parameter.
fn resolve_policy(args: &PolicyArgs, params: &ModelParams) -> Result<(Policy, f64), CliError> {
    let need = |v: Option<u32>, flag: &str| {
        v.ok_or_else(|| CliError::Usage(format!("--family {} requires --{flag}", args.family)))
    };
    Ok(match args.family {
        Family::LocalOnly => (Policy::LocalOnly, 0.0),
        Family::MecOnly => (Policy::MecOnly, 0.0),
        Family::AgeThreshold => {
            let a = need(args.astar, "astar")?;
            (age_threshold_policy(a, params.a_max)?, a as f64)
        }
        Family::ServiceThreshold => {
            let z = need(args.zstar, "zstar")?;
            (service_threshold_policy(z)?, z as f64)
        }
        Family::Optimal => (rvi_solve(params)?.policy, params.lambda),
    })
}

fn sim_config(settings: &Settings, warmup: Option<u64>, batches: usize) -> Result<SimConfig, CliError> {
    let mut cfg = SimConfig::new(settings.horizon, settings.seed);
    if let Some(w) = warmup {
        cfg.warmup = w;
    }
    cfg.batches = batches;
    cfg.validate()?;
    Ok(cfg)
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.shared, Format::Json)?;
    let params = settings.params()?;
    let family = args.policy.family;
    let method = args.method.unwrap_or(match family {
        Family::LocalOnly | Family::MecOnly | Family::ServiceThreshold => Method::ClosedForm,
        Family::AgeThreshold => Method::Chain,
        Family::Optimal => Method::Rvi,
    });
    let (policy, param) = resolve_policy(&args.policy, &params)?;
    let (delta, p_bar) = match (method, family) {
        (Method::ClosedForm, Family::LocalOnly) => pair(local_only(settings.mu)?),
        (Method::ClosedForm, Family::MecOnly) => pair(mec_only()),
        (Method::ClosedForm, Family::ServiceThreshold) => pair(service_threshold_eval(settings.mu, param as u32)?),
        (Method::ClosedForm, _) => {
            return Err(CliError::Usage(format!("no closed form for --family {family}")));
        }
        (Method::Rvi, Family::Optimal) | (Method::Chain, _) => pair(evaluate_exact(&policy, &params)?),
        (Method::Rvi, _) => {
            return Err(CliError::Usage("--method rvi applies to --family optimal only".into()));
        }
        (Method::Sim, _) => {
            let r = simulate(&policy, settings.mu, &sim_config(&settings, None, 100)?)?;
            (r.delta_hat, r.p_bar_hat)
        }
    };
    let point = FrontierPoint {
        family,
        param,
        mu: settings.mu,
        p_bar,
        delta,
        method,
    };
    emit_points(&settings, &[point])
}

fn pair(r: mec_aoi::EvalResult) -> (f64, f64) {
    (r.delta, r.p_bar)
}

pub fn frontier_cmd(args: &FrontierArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.shared, Format::Csv)?;
    if args.astar_min > args.astar_max || args.zstar_min > args.zstar_max || args.lambda_points == 0 {
        return Err(CliError::Usage("a*, z* and lambda ranges must be non-empty".into()));
    }
    if !(args.lambda_min > 0.0 && args.lambda_min <= args.lambda_max) {
        return Err(CliError::Usage(format!(
            "need 0 < --lambda-min <= --lambda-max, got {} and {}",
            args.lambda_min, args.lambda_max
        )));
    }
    let cfg = FrontierConfig {
        mu: settings.mu,
        a_stars: (args.astar_min..=args.astar_max).collect(),
        z_stars: (args.zstar_min..=args.zstar_max).collect(),
        lambdas: log_grid(args.lambda_min, args.lambda_max, args.lambda_points),
        a_max: settings.a_max,
    };
    let rows = frontier(&cfg)?;
    emit_points(&settings, &rows)
}

#[derive(Serialize)]
struct RviOutput {
    mu: f64,
    lambda: f64,
    a_max: u32,
    g: f64,
    delta: f64,
    p_bar: f64,
    thresholds: BTreeMap<u32, u32>,
    iterations: usize,
    span_residual: f64,
}

pub fn rvi(args: &RviArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.shared, Format::Json)?;
    let params = settings.params()?;
    let report = rvi_solve(&params)?;
    let ev = evaluate_exact(&report.policy, &params)?;
    match settings.format {
        Format::Csv => emit_points(
            &settings,
            &[FrontierPoint {
                family: Family::Optimal,
                param: params.lambda,
                mu: params.mu,
                p_bar: ev.p_bar,
                delta: ev.delta,
                method: Method::Rvi,
            }],
        ),
        Format::Json => emit_json(
            &settings,
            &RviOutput {
                mu: params.mu,
                lambda: params.lambda,
                a_max: params.a_max,
                g: report.g,
                delta: ev.delta,
                p_bar: ev.p_bar,
                thresholds: report.thresholds,
                iterations: report.iterations,
                span_residual: report.span_residual,
            },
        ),
    }
}

#[derive(Serialize)]
struct SimOutput {
    policy: String,
    mu: f64,
    horizon: u64,
    seed: u64,
    warmup: u64,
    batches: usize,
    #[serde(flatten)]
    result: SimResult,
}

pub fn simulate_cmd(args: &SimulateArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.shared, Format::Json)?;
    let params = settings.params()?;
    let (policy, param) = resolve_policy(&args.policy, &params)?;
    let cfg = sim_config(&settings, args.warmup, args.batches)?;
    let result = simulate(&policy, settings.mu, &cfg)?;
    match settings.format {
        Format::Csv => emit_points(
            &settings,
            &[FrontierPoint {
                family: args.policy.family,
                param,
                mu: settings.mu,
                p_bar: result.p_bar_hat,
                delta: result.delta_hat,
                method: Method::Sim,
            }],
        ),
        Format::Json => emit_json(
            &settings,
            &SimOutput {
                policy: policy.label(),
                mu: settings.mu,
                horizon: cfg.horizon,
                seed: cfg.seed,
                warmup: cfg.warmup,
                batches: cfg.batches,
                result,
            },
        ),
    }
}

#[derive(Serialize)]
struct Agreement {
    z_star: u32,
    closed_form: (f64, f64),
    chain: (f64, f64),
    sim: (f64, f64),
    sim_stderr: (f64, f64),
    chain_ok: bool,
    sim_ok: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    passed: bool,
    mu: f64,
    lambda: f64,
    beta: f64,
    a_max: u32,
    g: f64,
    thresholds: BTreeMap<u32, u32>,
    /// Whether the policy offloads at any state it visits below `a_max`.
    offloads_below_boundary: bool,
    corrupted: bool,
    structure: StructureReport,
    agreement: Vec<Agreement>,
}

fn rel_close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * x.abs().max(y.abs()).max(f64::MIN_POSITIVE)
}

fn within(est: f64, se: f64, exact: f64) -> bool {
    (est - exact).abs() <= 3.0 * se + 1e-12 * exact.abs().max(1.0)
}

fn agreement(settings: &Settings, params: &ModelParams, z_max: u32) -> Result<Vec<Agreement>, CliError> {
    let mu = settings.mu;
    (0..=z_max)
        .map(|z| {
            let cf = service_threshold_eval(mu, z)?;
            let policy = service_threshold_policy(z)?;
            let ch = evaluate_exact(&policy, params)?;
            let cfg = SimConfig::new(settings.horizon, settings.seed.wrapping_add(z as u64));
            let sim = simulate(&policy, mu, &cfg)?;
            Ok(Agreement {
                z_star: z,
                closed_form: (cf.delta, cf.p_bar),
                chain: (ch.delta, ch.p_bar),
                sim: (sim.delta_hat, sim.p_bar_hat),
                sim_stderr: (sim.stderr_delta, sim.stderr_p),
                chain_ok: rel_close(cf.delta, ch.delta, 1e-8) && (cf.p_bar - ch.p_bar).abs() <= 1e-8 * cf.p_bar.max(1e-12),
                sim_ok: within(sim.delta_hat, sim.stderr_delta, cf.delta) && within(sim.p_bar_hat, sim.stderr_p, cf.p_bar),
            })
        })
        .collect()
}

pub fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.shared, Format::Json)?;
    if settings.format != Format::Json {
        return Err(CliError::Usage("verify writes a JSON report only".into()));
    }
    let params = settings.params()?;
    let mut report = rvi_solve(&params)?;
    let mut iterates = discounted_vi(&params, args.vi_iters)?;
    if args.inject_corruption {
        let last = iterates.last_mut().expect("n + 1 iterates");
        let reset = last.get(State::RESET);
        last.set(State { a: 2, z: 0 }, reset - 1.0);
        let mut table = report.policy.to_table(params.a_max);
        table.set(State::RESET, Action::Mec);
        table.set(State { a: 2, z: 0 }, Action::Local);
        report.policy = Policy::Table(table);
    }
    let structure = verify_structure(&iterates, &report, &params);
    let agreement = agreement(&settings, &params, args.zstar_max)?;
    let offloads_below_boundary = report
        .policy
        .reachable(params.a_max, params.mu)
        .into_iter()
        .any(|s| s.a < params.a_max && report.policy.truncated_action(s, params.a_max) == Action::Mec);
    let passed = structure.passed() && agreement.iter().all(|a| a.chain_ok && a.sim_ok);
    let out = VerifyReport {
        passed,
        mu: params.mu,
        lambda: params.lambda,
        beta: params.beta,
        a_max: params.a_max,
        g: report.g,
        thresholds: report.thresholds.clone(),
        offloads_below_boundary,
        corrupted: args.inject_corruption,
        structure,
        agreement,
    };
    emit_json(&settings, &out)?;
    if passed {
        Ok(())
    } else {
        let failed: Vec<String> = out
            .structure
            .failures()
            .map(|c| c.name.clone())
            .chain(
                out.agreement
                    .iter()
                    .filter(|a| !(a.chain_ok && a.sim_ok))
                    .map(|a| format!("agreement(z*={})", a.z_star)),
            )
            .collect();
        Err(CliError::CheckFailed(format!("failed checks: {}", failed.join(", "))))
    }
}
