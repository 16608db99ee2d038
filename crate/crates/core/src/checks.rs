//! Self-checks of the numerical kernels, run by the `check` command.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::bg::{bg_record, flat_spectrum};
use crate::error::{Error, Result};
use crate::integrator::{energy_equality_residual, simulate_model, SchemeConfig, SimOptions};
use crate::model::{check_assumptions, Model, Nonlinearity};
use crate::spectral::{
    apply_power, forward_transform, inverse_transform, norm_hs, project, random_band_limited, GridSpec, ModalField,
    NodalField,
};
use crate::state::State;

pub const CHECK_NAMES: [&str; 7] = [
    "parseval",
    "roundtrip",
    "power_group",
    "projector",
    "assumptions",
    "bg_scale",
    "energy_order",
];

/// Random fields drawn per check and resolution.
const TRIALS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Resolution the check ran at (`None` for resolution-free checks).
    pub n_modes: Option<usize>,
    pub passed: bool,
    /// Measured quantity compared against `threshold`.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckSuite {
    pub resolutions: Vec<usize>,
    pub side: f64,
    pub nl: Nonlinearity,
    pub seed: u64,
}

impl CheckSuite {
    /// Runs every check, or only the one called `only`.
    pub fn run(&self, only: Option<&str>) -> Result<Vec<CheckResult>> {
        if let Some(name) = only {
            if !CHECK_NAMES.contains(&name) {
                return Err(Error::InvalidParameter(format!(
                    "unknown check '{name}'; available: {}",
                    CHECK_NAMES.join(", ")
                )));
            }
        }
        if self.resolutions.is_empty() {
            return Err(Error::InvalidParameter("check resolutions must not be empty".into()));
        }
        let wanted = |name: &str| only.is_none_or(|o| o == name);
        let mut out = Vec::new();
        for &n in &self.resolutions {
            let grid = GridSpec::new(n, self.side)?;
            let seed = self.seed ^ (n as u64).wrapping_mul(0x9e37_79b9);
            if wanted("parseval") {
                out.push(parseval(grid, seed)?);
            }
            if wanted("roundtrip") {
                out.push(roundtrip(grid, seed)?);
            }
            if wanted("power_group") {
                out.push(power_group(grid, seed)?);
            }
            if wanted("projector") {
                out.push(projector(grid, seed)?);
            }
            if wanted("assumptions") {
                out.push(assumptions(&self.nl, grid));
            }
            if wanted("bg_scale") {
                out.push(bg_scale(grid, seed)?);
            }
        }
        if wanted("energy_order") {
            out.push(energy_order(self.side)?);
        }
        Ok(out)
    }
}

fn result(name: &str, n: Option<usize>, value: f64, threshold: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        n_modes: n,
        passed: value <= threshold,
        value,
        threshold,
        detail,
    }
}

/// `| ||z||^2 - h^2 sum (inverse z)^2 | / ||z||^2`.
fn parseval(grid: GridSpec, seed: u64) -> Result<CheckResult> {
    let h = grid.side / (grid.n_modes + 1) as f64;
    let mut worst = 0.0f64;
    for k in 0..TRIALS {
        let z = random_band_limited(grid, grid.n_modes, 1.0, seed + k as u64)?;
        let modal = norm_hs(&z, 0.0).powi(2);
        let nodal = inverse_transform(&z).values.iter().map(|v| v * v).sum::<f64>() * h * h;
        worst = worst.max((modal - nodal).abs() / modal);
    }
    Ok(result("parseval", Some(grid.n_modes), worst, 1e-10, "relative gap between modal and nodal L2 norms".into()))
}

/// `||inverse(forward(w)) - w||_inf / ||w||_inf` on random nodal fields.
fn roundtrip(grid: GridSpec, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_modes;
    let mut worst = 0.0f64;
    for _ in 0..TRIALS {
        let values = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
        let w = NodalField::from_values(grid, values)?;
        let back = inverse_transform(&forward_transform(&w)?);
        let sup = w.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = back.values.iter().zip(&w.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(err / sup);
    }
    Ok(result("roundtrip", Some(n), worst, 1e-12, "relative sup error of inverse(forward(w))".into()))
}

/// Largest coefficientwise relative error of `A^t A^s z` against `A^{s+t} z`.
fn power_group(grid: GridSpec, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for k in 0..TRIALS {
        let z = random_band_limited(grid, grid.n_modes, 1.0, seed + k as u64)?;
        let (s, t) = (rng.gen_range(-2.0..=2.0), rng.gen_range(-2.0..=2.0));
        let lhs = apply_power(&apply_power(&z, s), t);
        let rhs = apply_power(&z, s + t);
        for (a, b) in lhs.coeff.iter().zip(rhs.coeff.iter()) {
            if *b != 0.0 {
                worst = worst.max((a - b).abs() / b.abs());
            }
        }
    }
    Ok(result("power_group", Some(grid.n_modes), worst, 1e-12, "coefficientwise relative error for s, t in [-2, 2]".into()))
}

/// `|(P_m z, z - P_m z)|` over all `m`.
fn projector(grid: GridSpec, seed: u64) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for k in 0..TRIALS {
        let z = random_band_limited(grid, grid.n_modes, 1.0, seed + k as u64)?;
        for m in 1..=grid.n_modes {
            let p = project(&z, m)?;
            worst = worst.max(p.dot(&z.axpy(-1.0, &p)).abs());
        }
    }
    Ok(result("projector", Some(grid.n_modes), worst, 1e-12, "largest |(P_m z, z - P_m z)| over m".into()))
}

/// Structural constants of `f`, with the recorded `f' >= -lambda` bound sampled on `[-1e3, 1e3]`.
fn assumptions(nl: &Nonlinearity, grid: GridSpec) -> CheckResult {
    let rep = match check_assumptions(nl, &grid) {
        Ok(r) => r,
        Err(e) => return result("assumptions", Some(grid.n_modes), 1.0, 0.0, e.to_string()),
    };
    let points = 1_000_000;
    let min_df = (0..=points)
        .map(|i| nl.df(-1e3 + 2e3 * i as f64 / points as f64))
        .fold(f64::INFINITY, f64::min);
    let violation = (-nl.lambda_bound - 1e-6 - min_df).max(0.0);
    let ok = rep.passed() && violation == 0.0;
    CheckResult {
        name: "assumptions".into(),
        n_modes: Some(grid.n_modes),
        passed: ok,
        value: violation,
        threshold: 0.0,
        detail: format!(
            "lambda = {}, M = {}, r0 = {}, recorded lambda bound = {}, sampled min f' = {min_df}, relaxed condition {}",
            rep.lambda, rep.m_bound, rep.r0, nl.lambda_bound, rep.relaxed_condition
        ),
    }
}

/// Relative change of the Brezis-Gallouet ratio under `z -> c z`, `c in {1e-3, 1e3}`.
fn bg_scale(grid: GridSpec, seed: u64) -> Result<CheckResult> {
    let mut fields: Vec<ModalField> = (0..3)
        .map(|k| random_band_limited(grid, grid.n_modes.min(4 + 8 * k), 1.0, seed + k as u64))
        .collect::<Result<_>>()?;
    fields.push(flat_spectrum(grid, grid.n_modes));
    let mut worst = 0.0f64;
    for z in &fields {
        let r = bg_record(z, "").ratio;
        for c in [1e-3, 1e3] {
            worst = worst.max((bg_record(&z.scaled(c), "").ratio - r).abs() / r);
        }
    }
    Ok(result("bg_scale", Some(grid.n_modes), worst, 1e-10, "relative change of the ratio under scaling".into()))
}

/// Observed order of the energy-equality residual for the free single-mode problem.
fn energy_order(side: f64) -> Result<CheckResult> {
    let grid = GridSpec::new(4, side)?;
    let model = Model::unforced(Nonlinearity::zero(), grid);
    let init = State::at_rest(ModalField::single_mode(grid, 1, 1, 1.0)?);
    let opts = SimOptions {
        sample_every: 1,
        diagnostics: None,
    };
    let mut res = Vec::new();
    for dt in [1e-2, 5e-3, 2.5e-3] {
        let (log, _) = simulate_model(&model, &init, &SchemeConfig::imex(dt), 1.0, &opts)?;
        res.push(energy_equality_residual(&log, 0, log.len() - 1)?);
    }
    let order = (res[0] / res[1]).log2().min((res[1] / res[2]).log2());
    Ok(CheckResult {
        name: "energy_order".into(),
        n_modes: None,
        passed: order >= 1.8,
        value: order,
        threshold: 1.8,
        detail: format!("residuals {:.3e}, {:.3e}, {:.3e} at dt = 1e-2, 5e-3, 2.5e-3; passes when order >= threshold", res[0], res[1], res[2]),
    })
}
