use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use hyperch::analysis::decomposition::decomposition_probe;
use hyperch::analysis::{
    absorbing_probe, find_equilibrium, galerkin_convergence, lipschitz_with_direction, lojasiewicz_probe,
    perturbation_direction, AbsorbingVerdict, LipschitzReport, MemberLog, SCHEMA_VERSION,
};
use hyperch::checks::{CheckResult, CheckSuite};
use hyperch::integrator::{energy_equality_residual, save_checkpoint, simulate_model, SimOptions};
use hyperch::model::{DiagnosticParams, EnergyBreakdown, Model};
use hyperch::spectral::{norm_hs, snapshot};
use hyperch::Error;

use crate::config::RunConfig;
use crate::Command;

/// Global flags shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
    pub only: Option<String>,
}

/// Marks errors caused by the invocation or the configuration (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(UsageError(e))
}

/// 2 for usage and precondition errors, 1 for runtime failures.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    let precondition = e
        .chain()
        .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::InvalidParameter(_))));
    if e.downcast_ref::<UsageError>().is_some() || precondition {
        2
    } else {
        1
    }
}

/// Loads and validates the effective config and prepares the output directory.
fn setup(opts: &Options) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &opts.config {
        Some(path) => RunConfig::load(path).map_err(usage)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &opts.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(usage)?;
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_json(&dir.join("config.json"), &cfg)?;
    Ok((cfg, dir))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn write_logs(dir: &Path, logs: &[MemberLog]) -> Result<()> {
    if logs.is_empty() {
        return Ok(());
    }
    let sub = dir.join("trajectories");
    fs::create_dir_all(&sub)?;
    for m in logs {
        m.log.save_csv(sub.join(format!("{}.csv", m.name)))?;
    }
    Ok(())
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn verdict(quiet: bool, name: &str, passed: bool, detail: &str) {
    if !quiet {
        println!("{name}: {} ({detail})", if passed { "PASS" } else { "FAIL" });
    }
}

pub fn run(cmd: Command, opts: &Options) -> Result<bool> {
    if opts.only.is_some() && cmd != Command::Check {
        return Err(usage(anyhow::anyhow!("--only applies to the check command")));
    }
    let (cfg, dir) = setup(opts)?;
    match cmd {
        Command::Simulate => simulate(&cfg, &dir, opts),
        Command::Check => check(&cfg, &dir, opts),
        Command::Converge => converge(&cfg, &dir, opts),
        Command::Decompose => decompose(&cfg, &dir, opts),
        Command::Equilibrium => equilibrium(&cfg, &dir, opts),
        Command::Lojasiewicz => lojasiewicz(&cfg, &dir, opts),
        Command::Absorb => absorb(&cfg, &dir, opts),
        Command::Lipschitz => lipschitz(&cfg, &dir, opts),
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    schema: u32,
    t_final: f64,
    steps: u64,
    dt: f64,
    stabilization: f64,
    norm0: f64,
    norm2: f64,
    ut_vprime: f64,
    initial_energy: f64,
    energy: EnergyBreakdown,
    /// `int_0^T ||u_t||_{V'}^2`.
    dissipation: f64,
    /// `|E(T) - E(0) + int_0^T ||u_t||_{V'}^2|`.
    energy_equality_residual: f64,
    max_energy_increase: f64,
}

fn simulate(cfg: &RunConfig, dir: &Path, opts: &Options) -> Result<bool> {
    let nl = cfg.nonlinearity()?;
    let model = Model::new(nl, cfg.source_term()?);
    let initial = cfg.initial_state()?;
    let sim = SimOptions {
        sample_every: cfg.sample_every,
        diagnostics: Some(DiagnosticParams::recipe(&nl, initial.grid())),
    };
    log::info!("simulating to t = {} with dt = {}", cfg.t_end, cfg.scheme.dt);
    let (log, stepper) = simulate_model(&model, &initial, &cfg.scheme, cfg.t_end, &sim)?;
    log.save_csv(dir.join("trajectory.csv"))?;
    let end = stepper.state();
    snapshot::save(dir.join("final_u.mfld"), &end.u, end.time, "u")?;
    snapshot::save(dir.join("final_ut.mfld"), &end.v, end.time, "u_t")?;
    save_checkpoint(dir.join("final.ckpt"), &stepper, Some(cfg.seed))?;
    let first = log.samples.first().expect("initial sample");
    let summary = SimulateSummary {
        schema: SCHEMA_VERSION,
        t_final: end.time,
        steps: stepper.steps(),
        dt: stepper.config().dt,
        stabilization: stepper.stabilization(),
        norm0: end.norm(0.0),
        norm2: end.norm(2.0),
        ut_vprime: norm_hs(&end.v, -0.5),
        initial_energy: first.energy,
        energy: *stepper.energy(),
        dissipation: stepper.dissipation(),
        energy_equality_residual: energy_equality_residual(&log, 0, log.len() - 1)?,
        max_energy_increase: stepper.max_energy_increase(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    if !opts.quiet {
        println!(
            "t = {}: energy {:.12e}, dissipation {:.6e}, ||U||_0 = {:.6e}",
            summary.t_final, summary.energy.total, summary.dissipation, summary.norm0
        );
    }
    Ok(true)
}

#[derive(Serialize)]
struct CheckReport<'a> {
    schema: u32,
    passed: bool,
    results: &'a [CheckResult],
}

fn check(cfg: &RunConfig, dir: &Path, opts: &Options) -> Result<bool> {
    let suite = CheckSuite {
        resolutions: cfg.check.resolutions.clone(),
        side: cfg.grid.side,
        nl: cfg.nonlinearity()?,
        seed: cfg.seed,
    };
    let results = suite.run(opts.only.as_deref()).map_err(|e| usage(e.into()))?;
    let passed = results.iter().all(|r| r.passed);
    if !opts.quiet {
        println!("{:<14} {:>6}  {:<6} {:>12} {:>12}", "check", "N", "result", "value", "threshold");
        for r in &results {
            let n = r.n_modes.map_or_else(|| "-".to_string(), |n| n.to_string());
            let mark = if r.passed { "PASS" } else { "FAIL" };
            println!("{:<14} {:>6}  {:<6} {:>12.3e} {:>12.3e}", r.name, n, mark, r.value, r.threshold);
        }
    }
    for r in results.iter().filter(|r| !r.passed) {
        log::warn!("{} failed: {}", r.name, r.detail);
    }
    write_json(&dir.join("check.json"), &CheckReport { schema: SCHEMA_VERSION, passed, results: &results })?;
    Ok(passed)
}

fn converge(cfg: &RunConfig, dir: &Path, opts: &Options) -> Result<bool> {
    let c = &cfg.converge;
    log::info!("convergence study at N = {:?} against N = {}", c.resolutions, c.n_ref);
    let rep = galerkin_convergence(
        &cfg.initial_state()?,
        &cfg.nonlinearity()?,
        &cfg.source_term()?,
        &cfg.scheme,
        &c.resolutions,
        c.n_ref,
        c.t_star,
    )?;
    write_json(&dir.join("converge.json"), &rep)?;
    write_logs(dir, &rep.logs)?;
    let gaps: Vec<f64> = rep.entries.iter().filter_map(|e| e.gap).collect();
    let all_ran = gaps.len() == rep.entries.len();
    let ratio_ok = match (c.max_gap_ratio, gaps.first(), gaps.last()) {
        (Some(max), Some(&a), Some(&b)) => b <= max * a,
        _ => true,
    };
    let passed = all_ran && rep.monotone && rep.exponent.is_none_or(|q| q >= 0.0) && ratio_ok;
    verdict(opts.quiet, "converge", passed, &format!("gaps [{}], exponent {:?}", sci(&gaps), rep.exponent));
    Ok(passed)
}

fn decompose(cfg: &RunConfig, dir: &Path, opts: &Options) -> Result<bool> {
    let d = &cfg.decompose;
    let run = decomposition_probe(
        &cfg.initial_state()?,
        &cfg.nonlinearity()?,
        &cfg.source_term()?,
        &cfg.scheme,
        d.big_l,
        cfg.t_end,
        d.fit_window,
        d.max_doublings,
        d.min_r2,
    )?;
    write_json(&dir.join("decompose.json"), &run)?;
    let mut w = csv::Writer::from_path(dir.join("decomposition.csv"))?;
    for s in &run.samples {
        w.serialize(s)?;
    }
    w.flush()?;
    let passed = run.sum_error_relative <= d.sum_tol && run.decays(d.min_r2);
    verdict(
        opts.quiet,
        "decompose",
        passed,
        &format!("L = {}, sum error {:.3e}, kappa {:?}", run.big_l, run.sum_error, run.fitted_kappa),
    );
    Ok(passed)
}

#[derive(Serialize)]
struct FailedSolve {
    schema: u32,
    converged: bool,
    error: String,
    residual_history: Vec<f64>,
}

fn equilibrium(cfg: &RunConfig, dir: &Path, opts: &Options) -> Result<bool> {
    let e = &cfg.equilibrium;
    let seed = cfg.initial_state()?.u;
    match find_equilibrium(&seed, &cfg.nonlinearity()?, &cfg.source_term()?, e.tol, e.max_iter) {
        Ok(eq) => {
            write_json(&dir.join("equilibrium.json"), &eq)?;
            snapshot::save(dir.join("u_star.mfld"), &eq.u_star, 0.0, "u")?;
            verdict(
                opts.quiet,
                "equilibrium",
                true,
                &format!(
                    "residual {:.3e} after {} iterations, ||u*||_V = {:.6e}, stability {:.6e}",
                    eq.residual, eq.newton_iters, eq.norm_v, eq.stability_indicator
                ),
            );
            Ok(true)
        }
        Err(err @ Error::NoConvergence { .. }) => {
            let trace = match &err {
                Error::NoConvergence { trace, .. } => trace.clone(),
                _ => unreachable!(),
            };
            write_json(
                &dir.join("equilibrium.json"),
                &FailedSolve {
                    schema: SCHEMA_VERSION,
                    converged: false,
                    error: err.to_string(),
                    residual_history: trace,
                },
            )?;
            verdict(opts.quiet, "equilibrium", false, &err.to_string());
            Ok(false)
        }
        Err(err) => Err(err.into()),
    }
}

fn lojasiewicz(cfg: &RunConfig, dir: &Path, opts: &Options) -> Result<bool> {
    let rep = lojasiewicz_probe(
        &cfg.initial_state()?,
        &cfg.nonlinearity()?,
        &cfg.source_term()?,
        &cfg.scheme,
        cfg.t_end,
        cfg.lojasiewicz.tol,
        cfg.sample_every,
    )?;
    write_json(&dir.join("lojasiewicz.json"), &rep)?;
    write_logs(dir, &rep.logs)?;
    if let Some(eq) = &rep.equilibrium {
        snapshot::save(dir.join("u_star.mfld"), &eq.u_star, 0.0, "u")?;
    }
    let passed = rep.settled && rep.equilibrium.is_some();
    verdict(
        opts.quiet,
        "lojasiewicz",
        passed,
        &format!(
            "||u_t(T)||_V' = {:.3e}, distance {:?}, energy gap {:?}",
            rep.ut_vprime_final, rep.distance, rep.energy_gap
        ),
    );
    Ok(passed)
}

fn absorb(cfg: &RunConfig, dir: &Path, opts: &Options) -> Result<bool> {
    let a = &cfg.absorb;
    let rep = absorbing_probe(
        cfg.grid()?,
        &a.radii,
        a.n_per_radius,
        &cfg.nonlinearity()?,
        &cfg.source_term()?,
        &cfg.scheme,
        cfg.t_end,
        cfg.seed,
    )?;
    write_json(&dir.join("absorb.json"), &rep)?;
    let tails: Vec<f64> = rep.radii.iter().map(|r| r.tail_sup0).collect();
    let detail = format!("tail sups [{}], spread {:.3}", sci(&tails), rep.spread);
    if rep.verdict == AbsorbingVerdict::Inconclusive {
        if !opts.quiet {
            println!("absorb: INCONCLUSIVE ({detail}); t_end is inside the transient");
        }
        return Ok(true);
    }
    let passed = rep.verdict == AbsorbingVerdict::Pass;
    verdict(opts.quiet, "absorb", passed, &detail);
    Ok(passed)
}

#[derive(Serialize)]
struct LipschitzPair {
    schema: u32,
    full: LipschitzReport,
    half: LipschitzReport,
    /// `|c7(full) - c7(half)| / max(|c7|)`.
    c7_relative_change: Option<f64>,
    passed: bool,
}

fn lipschitz(cfg: &RunConfig, dir: &Path, opts: &Options) -> Result<bool> {
    let l = &cfg.lipschitz;
    let initial = cfg.initial_state()?;
    let nl = cfg.nonlinearity()?;
    let g = cfg.source_term()?;
    let dirn = perturbation_direction(cfg.grid()?, cfg.seed)?;
    let run = |scale: f64| lipschitz_with_direction(&initial, &dirn, scale, &nl, &g, &cfg.scheme, cfg.t_end);
    let (full, half) = join_pair(|| run(l.perturbation_scale), || run(0.5 * l.perturbation_scale));
    let (full, half) = (full?, half?);
    let change = match (full.c7, half.c7) {
        (Some(a), Some(b)) => Some((a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)),
        _ => None,
    };
    let passed = !full.super_exponential && !half.super_exponential && change.is_some_and(|c| c <= l.c7_tol);
    let mut w = csv::Writer::from_path(dir.join("rho.csv"))?;
    w.write_record(["t", "rho", "rho_half"])?;
    for ((t, a), b) in full.times.iter().zip(&full.rho).zip(&half.rho) {
        w.write_record([t.to_string(), a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    verdict(
        opts.quiet,
        "lipschitz",
        passed,
        &format!("c7 = {:?} / {:?}, max rho {:.3e}", full.c7, half.c7, full.max_rho),
    );
    write_json(
        &dir.join("lipschitz.json"),
        &LipschitzPair {
            schema: SCHEMA_VERSION,
            full,
            half,
            c7_relative_change: change,
            passed,
        },
    )?;
    Ok(passed)
}

fn join_pair<A: Send, B: Send>(a: impl FnOnce() -> A + Send, b: impl FnOnce() -> B + Send) -> (A, B) {
    std::thread::scope(|s| {
        let hb = s.spawn(b);
        let ra = a();
        (ra, hb.join().expect("lipschitz member run panicked"))
    })
}
