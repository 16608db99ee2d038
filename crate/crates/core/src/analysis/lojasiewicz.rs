use serde::Serialize;

use super::{find_equilibrium, EquilibriumResult, MemberLog, SCHEMA_VERSION};
use crate::error::Result;
use crate::integrator::{simulate_model, SchemeConfig, SimOptions};
use crate::model::{Model, Nonlinearity, SourceTerm};
use crate::spectral::norm_hs;
use crate::state::State;

/// Newton tolerance used to refine the end state.
pub const REFINE_TOL: f64 = 1e-10;
const REFINE_MAX_ITER: usize = 50;

#[derive(Clone, Debug, Serialize)]
pub struct LojasiewiczReport {
    pub schema: u32,
    pub t_end: f64,
    pub tol: f64,
    /// `||u_t(t_end)||_{V'}`.
    pub ut_vprime_final: f64,
    /// `||u_t(t_end)||_{V'} <= tol`.
    pub settled: bool,
    /// `(t, ||u_t||_{V'})` over the run.
    pub ut_trace: Vec<(f64, f64)>,
    pub energy_final: f64,
    pub equilibrium: Option<EquilibriumResult>,
    /// Why the refinement failed, if it did.
    pub equilibrium_error: Option<String>,
    /// `||u(t_end) - u*||_V`.
    pub distance: Option<f64>,
    /// `E(t_end) - E(u*, 0)`.
    pub energy_gap: Option<f64>,
    #[serde(skip)]
    pub logs: Vec<MemberLog>,
}

/// Runs to `t_end`, checks that the motion has settled and refines the end state
/// into an equilibrium by Newton's method.
pub fn lojasiewicz_probe(
    initial: &State,
    nl: &Nonlinearity,
    g: &SourceTerm,
    cfg: &SchemeConfig,
    t_end: f64,
    tol: f64,
    sample_every: usize,
) -> Result<LojasiewiczReport> {
    let model = Model::new(*nl, g.clone());
    let opts = SimOptions {
        sample_every,
        diagnostics: None,
    };
    let (log, stepper) = simulate_model(&model, initial, cfg, t_end, &opts)?;
    let end = stepper.state();
    let ut = norm_hs(&end.v, -0.5);
    let energy_final = stepper.energy().total;
    let (equilibrium, equilibrium_error) = match find_equilibrium(&end.u, nl, g, REFINE_TOL, REFINE_MAX_ITER) {
        Ok(eq) => (Some(eq), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let distance = equilibrium
        .as_ref()
        .map(|eq| norm_hs(&end.u.axpy(-1.0, &eq.u_star), 0.5));
    let energy_gap = equilibrium.as_ref().map(|eq| energy_final - eq.energy_at);
    Ok(LojasiewiczReport {
        schema: SCHEMA_VERSION,
        t_end,
        tol,
        ut_vprime_final: ut,
        settled: ut <= tol,
        ut_trace: log.samples.iter().map(|s| (s.t, s.ut_vprime)).collect(),
        energy_final,
        equilibrium,
        equilibrium_error,
        distance,
        energy_gap,
        logs: vec![MemberLog::new("trajectory", log)],
    })
}
