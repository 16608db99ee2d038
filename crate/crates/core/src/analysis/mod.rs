//! Numerical experiments built on the integrator: Galerkin convergence, the
//! compact/decaying decomposition, Lipschitz dependence, Brezis-Gallouet scans,
//! absorbing-ball probes, equilibria and convergence to equilibrium.

pub mod absorbing;
pub mod bg;
pub mod convergence;
pub mod decomposition;
pub mod equilibrium;
pub mod fit;
pub mod lipschitz;
pub mod lojasiewicz;

pub use absorbing::{absorbing_probe, AbsorbingReport, AbsorbingVerdict};
pub use bg::{brezis_gallouet_scan, sup_norm, BgRecord, BgReport};
pub use convergence::{galerkin_convergence, ConvergenceEntry, ConvergenceReport};
pub use decomposition::{decomposition_probe, decomposition_run, default_big_l, DecompositionRun};
pub use equilibrium::{find_equilibrium, stability_indicator, EquilibriumResult};
pub use fit::{exponential_fit, linear_fit, LinearFit};
pub use lipschitz::{lipschitz_dependence, lipschitz_with_direction, perturbation_direction, LipschitzReport};
pub use lojasiewicz::{lojasiewicz_probe, LojasiewiczReport};

use crate::error::Result;
use crate::integrator::TrajectoryLog;
use crate::spectral::{norm_pair, random_band_limited, GridSpec};
use crate::state::State;

/// Version of every JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Trajectory of one member run, kept for CSV export.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberLog {
    pub name: String,
    pub log: TrajectoryLog,
}

impl MemberLog {
    pub fn new(name: impl Into<String>, log: TrajectoryLog) -> Self {
        Self { name: name.into(), log }
    }
}

/// Random state on modes `j, k <= band` with `||U||_s = radius`.
pub fn random_state(grid: GridSpec, band: usize, s: f64, radius: f64, seed: u64) -> Result<State> {
    let u = random_band_limited(grid, band, 1.0, seed)?;
    let v = random_band_limited(grid, band, 1.0, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let norm = norm_pair(&u, &v, s)?;
    let c = if norm > 0.0 { radius / norm } else { 0.0 };
    State::new(u.scaled(c), v.scaled(c), 0.0)
}
