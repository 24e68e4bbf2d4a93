//! One PASS/FAIL line per acceptance criterion. Criteria listed in
//! `KNOWN_RED` are reported but do not fail the run.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use mec_aoi::frontier::dominance_violation;
use mec_aoi::{
    brute_force_best_threshold, discounted_vi, evaluate_exact, frontier, local_only, rvi_solve, service_moments,
    service_threshold_eval, service_threshold_policy, simulate, verify_structure, Family, FrontierConfig,
    ModelParams, Policy, SimConfig,
};

const KNOWN_RED: &[u32] = &[5];
const N_SIM: u64 = 10_000_000;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn bin(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mec-aoi")).args(args).output().expect("run mec-aoi")
}

fn params(mu: f64, lambda: f64, a_max: u32) -> ModelParams {
    ModelParams::new(mu, lambda, 0.99, a_max).unwrap()
}

fn within3(est: f64, se: f64, exact: f64) -> bool {
    (est - exact).abs() <= 3.0 * se + 1e-12 * exact.abs()
}

fn c1() -> Outcome {
    let out = bin(&["eval", "--family", "mec_only"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let (d, p) = (v["delta"].as_f64(), v["p_bar"].as_f64());
    if out.status.success() && d == Some(1.5) && p == Some(1.0) {
        Ok("delta=1.5 p_bar=1".into())
    } else {
        Err(format!("got delta={d:?} p_bar={p:?}"))
    }
}

fn c2() -> Outcome {
    let mut worst = 0.0f64;
    for (i, mu) in [0.3, 0.5, 0.7, 1.0].into_iter().enumerate() {
        let exact = local_only(mu).unwrap().delta;
        let r = simulate(&Policy::LocalOnly, mu, &SimConfig::new(N_SIM, 100 + i as u64)).unwrap();
        if !within3(r.delta_hat, r.stderr_delta, exact) {
            return Err(format!("mu={mu}: sim {} +- {} vs {exact}", r.delta_hat, r.stderr_delta));
        }
        if r.stderr_delta > 0.0 {
            worst = worst.max((r.delta_hat - exact).abs() / r.stderr_delta);
        }
    }
    Ok(format!("max |z| = {worst:.2}"))
}

fn c3() -> Outcome {
    let (mut rel, mut worst) = (0.0f64, 0.0f64);
    for (i, mu) in [0.3, 0.5, 0.7].into_iter().enumerate() {
        let p = params(mu, 0.0, 50);
        for z in 0..=9u32 {
            let cf = service_threshold_eval(mu, z).unwrap();
            let policy = service_threshold_policy(z).unwrap();
            let ch = evaluate_exact(&policy, &p).unwrap();
            let r_d = (cf.delta - ch.delta).abs() / cf.delta;
            let r_p = (cf.p_bar - ch.p_bar).abs() / cf.p_bar;
            rel = rel.max(r_d).max(r_p);
            if r_d > 1e-8 || r_p > 1e-8 {
                return Err(format!("mu={mu} z*={z}: closed form vs chain rel {r_d:e}/{r_p:e}"));
            }
            let seed = 1000 + 100 * i as u64 + z as u64;
            let s = simulate(&policy, mu, &SimConfig::new(N_SIM, seed)).unwrap();
            if !within3(s.delta_hat, s.stderr_delta, cf.delta) || !within3(s.p_bar_hat, s.stderr_p, cf.p_bar) {
                return Err(format!(
                    "mu={mu} z*={z}: sim delta {}+-{} vs {}, p {}+-{} vs {}",
                    s.delta_hat, s.stderr_delta, cf.delta, s.p_bar_hat, s.stderr_p, cf.p_bar
                ));
            }
            for (est, se, ex) in [(s.delta_hat, s.stderr_delta, cf.delta), (s.p_bar_hat, s.stderr_p, cf.p_bar)] {
                if se > 0.0 {
                    worst = worst.max((est - ex).abs() / se);
                }
            }
        }
    }
    Ok(format!("max rel(closed form, chain) = {rel:.1e}, max |z| vs sim = {worst:.2}"))
}

fn c4() -> Outcome {
    let mut worst = 0.0f64;
    for i in 1..=20 {
        let mu = i as f64 / 20.0;
        let mb = 1.0 - mu;
        for z in 0..=6u32 {
            let (mut e_s, mut e_s2, mut e_y) = (0.0, 0.0, 0.0);
            for k in 1..=z {
                let q = mu * mb.powi(k as i32 - 1);
                let k = k as f64;
                e_s += k * q;
                e_s2 += k * k * q;
                e_y += k * q;
            }
            let tail = mb.powi(z as i32);
            let last = z as f64 + 1.0;
            e_s += last * tail;
            e_s2 += last * last * tail;
            e_y += tail;
            let m = service_moments(mu, z).unwrap();
            for (got, want) in [(m.e_s, e_s), (m.e_s2, e_s2), (m.e_y, e_y)] {
                let err = (got - want).abs() / want.abs().max(1.0);
                worst = worst.max(err);
                if err > 1e-12 {
                    return Err(format!("mu={mu} z*={z}: {got} vs {want}"));
                }
            }
        }
    }
    Ok(format!("max error {worst:.1e}"))
}

fn c5() -> Outcome {
    let r = rvi_solve(&params(0.5, 3.0, 50)).unwrap();
    let (a1, a2) = (r.thresholds.get(&1).copied(), r.thresholds.get(&2).copied());
    let msg = format!("abar_1={a1:?} abar_2={a2:?} (want 4, 3), g={:.6}", r.g);
    if a1 == Some(4) && a2 == Some(3) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c6() -> Outcome {
    for mu in [0.1, 0.5, 0.9] {
        for lambda in [0.5, 3.0, 20.0] {
            let p = params(mu, lambda, 50);
            let report = rvi_solve(&p).unwrap();
            let iterates = discounted_vi(&p, 200).unwrap();
            let s = verify_structure(&iterates, &report, &p);
            if !s.passed() {
                let names: Vec<_> = s.failures().map(|c| format!("{}: {:?}", c.name, c.witness)).collect();
                return Err(format!("mu={mu} lambda={lambda}: {}", names.join("; ")));
            }
        }
    }
    Ok("9 grid points, all checks".into())
}

fn c7() -> Outcome {
    let cfg = FrontierConfig::default_grid();
    let rows = frontier(&cfg).map_err(|e| e.to_string())?;
    if let Some((opt, h)) = dominance_violation(&rows, 1e-6) {
        return Err(format!("optimal at lambda={} beaten by {} {}", opt.param, h.family, h.param));
    }
    for family in [Family::AgeThreshold, Family::ServiceThreshold, Family::Optimal] {
        let hit = rows
            .iter()
            .filter(|r| r.family == family)
            .any(|r| (r.p_bar - 1.0).abs() < 1e-9 && (r.delta - 1.5).abs() < 1e-9);
        if !hit {
            return Err(format!("{family} has no (1, 1.5) point"));
        }
    }
    Ok(format!("{} rows, no violation at 1e-6, (1, 1.5) in every family", rows.len()))
}

fn c8() -> Outcome {
    let mut worst = 0.0f64;
    for mu in [0.3, 0.5, 0.7] {
        for lambda in [1.0, 3.0, 10.0] {
            let p = params(mu, lambda, 20);
            let rvi = rvi_solve(&p).unwrap();
            let bf = brute_force_best_threshold(&p, 16).unwrap();
            let d = (rvi.g - bf.g).abs();
            worst = worst.max(d);
            if d > 1e-6 {
                return Err(format!("mu={mu} lambda={lambda}: rvi {} vs brute force {}", rvi.g, bf.g));
            }
        }
    }
    Ok(format!("max |g_rvi - g_bf| = {worst:.1e}"))
}

fn c9() -> Outcome {
    let cfg = FrontierConfig::default_grid();
    let mut points = vec![(0.5, 3.0, 50)];
    points.extend(cfg.lambdas.iter().map(|&l| (cfg.mu, l, cfg.a_max)));
    let mut worst = 0.0f64;
    for (mu, lambda, a_max) in points {
        let g1 = rvi_solve(&params(mu, lambda, a_max)).unwrap().g;
        let g2 = rvi_solve(&params(mu, lambda, 2 * a_max)).unwrap().g;
        worst = worst.max((g1 - g2).abs());
        if (g1 - g2).abs() >= 1e-4 {
            return Err(format!("mu={mu} lambda={lambda}: g({a_max})={g1} g({})={g2}", 2 * a_max));
        }
    }
    Ok(format!("26 points, max change {worst:.1e}"))
}

fn c10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let f = path(&format!("frontier_{run}.csv"));
        let s = path(&format!("sim_{run}.json"));
        let o1 = bin(&["frontier", "--out", &f]);
        let o2 = bin(&[
            "simulate", "--family", "service_threshold", "--zstar", "3", "--mu", "0.3", "--seed", "42", "--horizon",
            "1000000", "--out", &s,
        ]);
        if !o1.status.success() || !o2.status.success() {
            return Err("command failed".into());
        }
        files.push((fs::read(&f).unwrap(), fs::read(&s).unwrap()));
    }
    if files[0] == files[1] {
        Ok(format!("frontier {} bytes, simulate {} bytes identical", files[0].0.len(), files[0].1.len()))
    } else {
        Err("outputs differ between runs".into())
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "MEC-only exactness", c1),
        (2, "local-only vs simulation", c2),
        (3, "service-threshold three-way agreement", c3),
        (4, "moment oracle", c4),
        (5, "thresholds at mu=0.5 lambda=3", c5),
        (6, "structural suite", c6),
        (7, "frontier dominance", c7),
        (8, "RVI vs brute force", c8),
        (9, "truncation stability", c9),
        (10, "determinism", c10),
    ];
    let mut unexpected = 0;
    for (id, name, f) in criteria {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {id:>2} {name}: {msg} [{secs:.1}s]"),
            Err(msg) => {
                let known = KNOWN_RED.contains(&id);
                let tag = if known { " (known)" } else { "" };
                println!("FAIL criterion {id:>2} {name}{tag}: {msg} [{secs:.1}s]");
                if !known {
                    unexpected += 1;
                }
            }
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
