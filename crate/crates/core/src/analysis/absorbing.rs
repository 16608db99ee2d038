use rayon::prelude::*;
use serde::Serialize;

use super::{random_state, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::integrator::{step_count, SchemeConfig, Stepper};
use crate::model::{Model, Nonlinearity, SourceTerm};
use crate::spectral::GridSpec;

/// Highest mode index of the random initial states.
const INITIAL_BAND: usize = 8;
/// Tail sups below this are treated as having reached the attractor.
pub const ABSORB_FLOOR: f64 = 1e-3;
/// Allowed relative spread of the tail sups across radii.
pub const ABSORB_SPREAD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsorbingVerdict {
    Pass,
    Fail,
    /// The tails still change by more than the allowed spread between the third
    /// and fourth quarter of the run, so `t_end` is inside the transient.
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct RadiusSummary {
    pub radius: f64,
    /// Sup over runs and `t in [t_end/2, t_end]` of `||U(t)||_0`.
    pub tail_sup0: f64,
    pub tail_sup2: f64,
    /// Same sups over `[t_end/2, 3t_end/4]` and `[3t_end/4, t_end]`.
    pub early_sup0: f64,
    pub late_sup0: f64,
    pub failed_runs: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AbsorbingReport {
    pub schema: u32,
    pub t_end: f64,
    pub n_per_radius: usize,
    pub radii: Vec<RadiusSummary>,
    /// `(max - min) / max` of the tail sups of `||U||_0` across radii.
    pub spread: f64,
    pub verdict: AbsorbingVerdict,
}

struct Tails {
    early0: f64,
    late0: f64,
    tail2: f64,
}

/// Runs `n_per_radius` random states with `||U_0||_2 = r` for each radius and
/// compares where the trajectories sit over the second half of the run.
#[allow(clippy::too_many_arguments)]
pub fn absorbing_probe(
    grid: GridSpec,
    radii: &[f64],
    n_per_radius: usize,
    nl: &Nonlinearity,
    g: &SourceTerm,
    cfg: &SchemeConfig,
    t_end: f64,
    seed: u64,
) -> Result<AbsorbingReport> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidParameter("radii must be a nonempty list of positive numbers".into()));
    }
    if n_per_radius == 0 {
        return Err(Error::InvalidParameter("n_per_radius must be at least 1".into()));
    }
    let (n_steps, dt) = step_count(0.0, t_end, cfg.dt)?;
    let cfg = SchemeConfig { dt, ..*cfg };
    let model = Model::new(*nl, g.clone());
    model.grid().check_same(&grid)?;
    let band = grid.n_modes.min(INITIAL_BAND);
    let jobs: Vec<(usize, usize)> = (0..radii.len()).flat_map(|i| (0..n_per_radius).map(move |k| (i, k))).collect();
    let results: Vec<Result<Tails>> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let member_seed = seed.wrapping_add((i * n_per_radius + k) as u64);
            let initial = random_state(grid, band, 2.0, radii[i], member_seed)?;
            let mut stepper = Stepper::new(model.clone(), cfg, initial)?;
            let mut tails = Tails {
                early0: 0.0,
                late0: 0.0,
                tail2: 0.0,
            };
            for _ in 0..n_steps {
                stepper.step()?;
                let t = stepper.time();
                if t >= 0.5 * t_end {
                    let st = stepper.state();
                    let n0 = st.norm(0.0);
                    if t >= 0.75 * t_end {
                        tails.late0 = tails.late0.max(n0);
                    } else {
                        tails.early0 = tails.early0.max(n0);
                    }
                    tails.tail2 = tails.tail2.max(st.norm(2.0));
                }
            }
            Ok(tails)
        })
        .collect();

    let mut summaries = Vec::new();
    let mut all_settled = true;
    for (i, &radius) in radii.iter().enumerate() {
        let mut s = RadiusSummary {
            radius,
            tail_sup0: 0.0,
            tail_sup2: 0.0,
            early_sup0: 0.0,
            late_sup0: 0.0,
            failed_runs: Vec::new(),
        };
        for (k, res) in results[i * n_per_radius..(i + 1) * n_per_radius].iter().enumerate() {
            match res {
                Ok(t) => {
                    s.early_sup0 = s.early_sup0.max(t.early0);
                    s.late_sup0 = s.late_sup0.max(t.late0);
                    s.tail_sup2 = s.tail_sup2.max(t.tail2);
                }
                Err(e) => s.failed_runs.push(format!("member {k}: {e}")),
            }
        }
        s.tail_sup0 = s.early_sup0.max(s.late_sup0);
        let (lo, hi) = (s.early_sup0.min(s.late_sup0), s.early_sup0.max(s.late_sup0));
        if hi > ABSORB_FLOOR && lo < (1.0 - ABSORB_SPREAD) * hi {
            all_settled = false;
        }
        summaries.push(s);
    }
    let tails: Vec<f64> = summaries.iter().map(|s| s.tail_sup0).collect();
    let hi = tails.iter().copied().fold(0.0, f64::max);
    let lo = tails.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
    let any_failed = summaries.iter().any(|s| !s.failed_runs.is_empty());
    let verdict = if any_failed {
        AbsorbingVerdict::Fail
    } else if hi <= ABSORB_FLOOR {
        AbsorbingVerdict::Pass
    } else if !all_settled {
        AbsorbingVerdict::Inconclusive
    } else if spread <= ABSORB_SPREAD {
        AbsorbingVerdict::Pass
    } else {
        AbsorbingVerdict::Fail
    };
    Ok(AbsorbingReport {
        schema: SCHEMA_VERSION,
        t_end,
        n_per_radius,
        radii: summaries,
        spread,
        verdict,
    })
}
