use serde::Serialize;

use super::{fit::exponential_fit, random_state, LinearFit, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::integrator::{step_count, SchemeConfig, Stepper};
use crate::model::{Model, Nonlinearity, SourceTerm};
use crate::spectral::GridSpec;
use crate::state::State;

/// Highest mode index of the default perturbation direction.
const DIRECTION_BAND: usize = 8;

/// Target number of samples of `rho(t)`.
const SAMPLES: usize = 200;

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzReport {
    pub schema: u32,
    pub perturbation_scale: f64,
    pub t_end: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    /// `rho(t) = ||dU(t)||_0 / ||dU(0)||_0`.
    pub rho: Vec<f64>,
    pub max_rho: f64,
    /// Growth rate `c_7` in `rho(t) <= c_6 e^{c_7 t}`, fitted over the second half.
    pub c7: Option<f64>,
    pub c6: Option<f64>,
    pub fit: Option<LinearFit>,
    /// Growth accelerating between the third and fourth quarter of the run.
    pub super_exponential: bool,
}

/// Deterministic direction on modes `j, k <= min(N, 8)` with `||dU||_0 = 1`.
pub fn perturbation_direction(grid: GridSpec, seed: u64) -> Result<State> {
    random_state(grid, grid.n_modes.min(DIRECTION_BAND), 0.0, 1.0, seed)
}

/// Runs `U` and `U + scale * d` for the default direction `d` and reports how
/// the difference grows.
pub fn lipschitz_dependence(
    initial: &State,
    perturbation_scale: f64,
    nl: &Nonlinearity,
    g: &SourceTerm,
    cfg: &SchemeConfig,
    t_end: f64,
) -> Result<LipschitzReport> {
    let dir = perturbation_direction(*initial.grid(), 0)?;
    lipschitz_with_direction(initial, &dir, perturbation_scale, nl, g, cfg, t_end)
}

/// [`lipschitz_dependence`] along `direction`, rescaled to `||dU(0)||_0 = scale`.
#[allow(clippy::too_many_arguments)]
pub fn lipschitz_with_direction(
    initial: &State,
    direction: &State,
    perturbation_scale: f64,
    nl: &Nonlinearity,
    g: &SourceTerm,
    cfg: &SchemeConfig,
    t_end: f64,
) -> Result<LipschitzReport> {
    if !(perturbation_scale > 0.0) || !perturbation_scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "perturbation scale must be positive, got {perturbation_scale}"
        )));
    }
    initial.grid().check_same(direction.grid())?;
    let dn = direction.norm(0.0);
    if !(dn > 0.0) {
        return Err(Error::InvalidParameter("perturbation direction is zero".into()));
    }
    let c = perturbation_scale / dn;
    let perturbed = State::new(
        initial.u.axpy(c, &direction.u),
        initial.v.axpy(c, &direction.v),
        initial.time,
    )?;
    let (n_steps, dt) = step_count(initial.time, t_end, cfg.dt)?;
    let cfg = SchemeConfig { dt, ..*cfg };
    let every = (n_steps / SAMPLES).max(1);
    let model = Model::new(*nl, g.clone());
    let run = |start: &State| -> Result<Vec<State>> {
        let mut stepper = Stepper::new(model.clone(), cfg, start.clone())?;
        let mut out = Vec::new();
        stepper.run(n_steps, every, |s| {
            out.push(s.state().clone());
            Ok(())
        })?;
        Ok(out)
    };
    let (base, pert) = rayon::join(|| run(initial), || run(&perturbed));
    let (base, pert) = (base?, pert?);

    let d0 = State::new(
        pert[0].u.axpy(-1.0, &base[0].u),
        pert[0].v.axpy(-1.0, &base[0].v),
        initial.time,
    )?
    .norm(0.0);
    let mut times = Vec::with_capacity(base.len());
    let mut rho = Vec::with_capacity(base.len());
    for (a, b) in base.iter().zip(&pert) {
        let du = b.u.axpy(-1.0, &a.u);
        let dv = b.v.axpy(-1.0, &a.v);
        times.push(a.time);
        rho.push(State::new(du, dv, a.time)?.norm(0.0) / d0);
    }
    let t0 = initial.time;
    let span = t_end - t0;
    let fit = exponential_fit(&times, &rho, t0 + 0.5 * span, t_end).ok();
    let q1 = exponential_fit(&times, &rho, t0 + 0.5 * span, t0 + 0.75 * span).ok();
    let q2 = exponential_fit(&times, &rho, t0 + 0.75 * span, t_end).ok();
    let super_exponential = rho.iter().any(|r| !r.is_finite())
        || match (q1, q2) {
            (Some(a), Some(b)) => b.slope > a.slope + 0.1f64.max(0.5 * a.slope.abs()),
            _ => false,
        };
    Ok(LipschitzReport {
        schema: SCHEMA_VERSION,
        perturbation_scale,
        t_end,
        dt,
        max_rho: rho.iter().copied().fold(0.0, f64::max),
        times,
        rho,
        c7: fit.map(|f| f.slope),
        c6: fit.map(|f| f.intercept.exp()),
        fit,
        super_exponential,
    })
}
