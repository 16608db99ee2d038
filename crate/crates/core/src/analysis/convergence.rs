use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit::linear_fit, LinearFit, MemberLog, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::integrator::{step_count, SchemeConfig, Stepper, TrajectoryLog};
use crate::model::{DiagnosticParams, Model, Nonlinearity, SourceTerm};
use crate::spectral::{norm_pair, project, ModalField};
use crate::state::State;

/// One coarse resolution of a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceEntry {
    pub n_modes: usize,
    /// Largest retained eigenvalue.
    pub lambda_n: f64,
    /// `sup_t ||P_N U_ref(t) - U_N(t)||_{-1}`; `None` if the run failed.
    pub gap: Option<f64>,
    /// The same difference at `t_star` alone.
    pub gap_at_t_star: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub schema: u32,
    pub resolutions: Vec<usize>,
    pub n_ref: usize,
    pub t_star: f64,
    pub dt: f64,
    pub entries: Vec<ConvergenceEntry>,
    /// Exponent `q` in `gap ~ lambda_N^{-q}`.
    pub exponent: Option<f64>,
    pub exponent_fit: Option<LinearFit>,
    /// `C_1` in `||W_N(t*)||^2 <= C_2 t* lambda_N^{C_1 t* - 1/2}`, fitted at `t*`.
    pub c1_estimate: Option<f64>,
    /// Gaps of the successful runs strictly decrease with `N`.
    pub monotone: bool,
    #[serde(skip)]
    pub logs: Vec<MemberLog>,
}

impl ConvergenceReport {
    pub fn gaps(&self) -> Vec<Option<f64>> {
        self.entries.iter().map(|e| e.gap).collect()
    }
}

struct RunOutput {
    snapshots: Vec<State>,
    log: TrajectoryLog,
}

fn run_sampled(model: &Model, initial: &State, cfg: &SchemeConfig, n_steps: usize, every: usize) -> Result<RunOutput> {
    let mut stepper = Stepper::new(model.clone(), *cfg, initial.clone())?;
    let diag = DiagnosticParams::recipe(&model.nl, model.grid());
    let mut snapshots = Vec::new();
    let mut log = TrajectoryLog::new(cfg.dt, every);
    stepper.run(n_steps, every, |s| {
        snapshots.push(s.state().clone());
        log.record(s, Some(&diag))
    })?;
    log.max_energy_increase = stepper.max_energy_increase();
    Ok(RunOutput { snapshots, log })
}

/// Runs a reference at `n_ref` modes and each coarse resolution with the same step,
/// and measures how far the coarse trajectories stay from the projected reference.
pub fn galerkin_convergence(
    initial: &State,
    nl: &Nonlinearity,
    g: &SourceTerm,
    cfg: &SchemeConfig,
    resolutions: &[usize],
    n_ref: usize,
    t_star: f64,
) -> Result<ConvergenceReport> {
    if resolutions.is_empty() || resolutions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("resolutions must be nonempty and strictly increasing".into()));
    }
    let n_max = *resolutions.last().expect("nonempty");
    if 2 * n_max > n_ref {
        return Err(Error::InvalidParameter(format!(
            "reference resolution {n_ref} must be at least twice the largest resolution {n_max}"
        )));
    }
    let band = initial.u.band().max(initial.v.band()).max(g.g_modal.band());
    if band > resolutions[0] {
        return Err(Error::InvalidParameter(format!(
            "initial data and source use modes up to {band}, beyond the coarsest resolution {}",
            resolutions[0]
        )));
    }
    if !(t_star > 0.0) {
        return Err(Error::InvalidParameter(format!("t_star must be positive, got {t_star}")));
    }
    let (n_steps, dt) = step_count(initial.time, initial.time + t_star, cfg.dt)?;
    let cfg = SchemeConfig { dt, ..*cfg };
    let every = (n_steps / 25).max(1);
    let n_samples = n_steps.div_ceil(every) + 1;

    let mut all: Vec<usize> = resolutions.to_vec();
    all.push(n_ref);
    let outputs: Vec<Result<RunOutput>> = all
        .par_iter()
        .map(|&n| {
            let model = Model::new(*nl, SourceTerm::new(g.g_modal.resized(n)?));
            run_sampled(&model, &initial.resized(n)?, &cfg, n_steps, every)
        })
        .collect();
    let mut outputs = outputs.into_iter();
    let coarse: Vec<Result<RunOutput>> = outputs.by_ref().take(resolutions.len()).collect();
    let reference = outputs.next().expect("reference run")?;

    let mut entries = Vec::new();
    let mut logs = vec![MemberLog::new(format!("reference_n{n_ref}"), reference.log.clone())];
    for (&n, out) in resolutions.iter().zip(coarse) {
        let lambda_n = crate::spectral::GridSpec::new(n, initial.grid().side)?.lambda_max();
        match out {
            Ok(run) if run.snapshots.len() == n_samples => {
                let mut sup = 0.0f64;
                let mut last = 0.0;
                for (r, c) in reference.snapshots.iter().zip(&run.snapshots) {
                    let du = truncated(&r.u, n)?.axpy(-1.0, &c.u);
                    let dv = truncated(&r.v, n)?.axpy(-1.0, &c.v);
                    last = norm_pair(&du, &dv, -1.0)?;
                    sup = sup.max(last);
                }
                entries.push(ConvergenceEntry {
                    n_modes: n,
                    lambda_n,
                    gap: Some(sup),
                    gap_at_t_star: Some(last),
                    error: None,
                });
                logs.push(MemberLog::new(format!("coarse_n{n}"), run.log));
            }
            Ok(_) => unreachable!("fixed step count yields a fixed sample count"),
            Err(e) => entries.push(ConvergenceEntry {
                n_modes: n,
                lambda_n,
                gap: None,
                gap_at_t_star: None,
                error: Some(e.to_string()),
            }),
        }
    }

    let ok: Vec<&ConvergenceEntry> = entries.iter().filter(|e| e.gap.is_some_and(|g| g > 0.0)).collect();
    let exponent_fit = if ok.len() >= 2 {
        let x: Vec<f64> = ok.iter().map(|e| e.lambda_n.ln()).collect();
        let y: Vec<f64> = ok.iter().map(|e| e.gap.expect("filtered").ln()).collect();
        Some(linear_fit(&x, &y)?)
    } else {
        None
    };
    let c1_estimate = if ok.len() >= 2 {
        let x: Vec<f64> = ok.iter().map(|e| e.lambda_n.ln()).collect();
        let y: Vec<f64> = ok
            .iter()
            .map(|e| (e.gap_at_t_star.expect("filtered").powi(2) / t_star).ln())
            .collect();
        linear_fit(&x, &y).ok().map(|f| (f.slope + 0.5) / t_star)
    } else {
        None
    };
    let successful: Vec<f64> = entries.iter().filter_map(|e| e.gap).collect();
    let monotone = successful.windows(2).all(|w| w[1] < w[0]);
    Ok(ConvergenceReport {
        schema: SCHEMA_VERSION,
        resolutions: resolutions.to_vec(),
        n_ref,
        t_star,
        dt,
        entries,
        exponent: exponent_fit.map(|f| -f.slope),
        exponent_fit,
        c1_estimate,
        monotone,
        logs,
    })
}

fn truncated(z: &ModalField, n: usize) -> Result<ModalField> {
    project(z, n)?.resized(n)
}
