use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use serde::Serialize;

use super::SCHEMA_VERSION;
use crate::error::{Error, Result};
use crate::krylov;
use crate::model::{Model, Nonlinearity, SourceTerm};
use crate::spectral::{norm_hs, ModalField};
use crate::state::State;

/// Largest mode index of the trial space for the stability indicator.
const RITZ_BAND: usize = 8;

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumResult {
    pub schema: u32,
    #[serde(skip)]
    pub u_star: ModalField,
    /// `||A u* + P_N f(u*) - A^{-1} g||` over the modal coefficients.
    pub residual: f64,
    pub newton_iters: usize,
    /// Residual norm before each Newton update and at the end.
    pub residual_history: Vec<f64>,
    /// `E(u*, 0)`.
    pub energy_at: f64,
    /// Smallest Rayleigh quotient of `A + f'(u*)` over low modes; negative means unstable.
    pub stability_indicator: f64,
    /// `||u*||_V`.
    pub norm_v: f64,
    /// `max |u*|` over the padded grid.
    pub amplitude: f64,
}

fn field(model: &Model, x: Vec<f64>) -> ModalField {
    let n = model.grid().n_modes;
    ModalField {
        grid: *model.grid(),
        coeff: Array2::from_shape_vec((n, n), x).expect("flat modal vector"),
    }
}

/// `R(u) = A u + P_N f(u) - A^{-1} g` and the padded values of `u`.
fn stationary_residual(model: &Model, u: &ModalField) -> (ModalField, Array2<f64>) {
    let uu = model.values(u);
    let fu = model.nonlinear_from_values(&uu);
    let mut r = fu;
    ndarray::Zip::from(&mut r.coeff)
        .and(&u.coeff)
        .and(model.eigenvalues())
        .and(&model.source.g_modal.coeff)
        .for_each(|r, &u, &l, &g| *r += l * u - g / l);
    (r, uu)
}

/// Newton iteration for `A u + P_N f(u) = A^{-1} g` from `seed_field`. Inner solves
/// use conjugate gradients preconditioned with `A^{-1}`, with backtracking on `||R||`.
/// Where the Jacobian is indefinite the update is a descent step on the stationary
/// energy instead, so the iteration settles on stable equilibria unless seeded on
/// an unstable one.
pub fn find_equilibrium(
    seed_field: &ModalField,
    nl: &Nonlinearity,
    g: &SourceTerm,
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let model = Model::new(*nl, g.clone());
    model.grid().check_same(&seed_field.grid)?;
    if !seed_field.is_finite() {
        return Err(Error::InvalidParameter("seed field is not finite".into()));
    }
    let inv_eig: Vec<f64> = model.eigenvalues().iter().map(|l| 1.0 / l).collect();
    let eig: Vec<f64> = model.eigenvalues().iter().copied().collect();

    let mut u = seed_field.clone();
    let (mut r, mut uu) = stationary_residual(&model, &u);
    let mut rn = norm_hs(&r, 0.0);
    let mut history = vec![rn];
    let mut iters = 0;
    while !(rn <= tol) {
        if iters >= max_iter || !rn.is_finite() {
            return Err(Error::NoConvergence {
                what: "equilibrium Newton iteration",
                iterations: iters,
                trace: history,
            });
        }
        let apply = |x: &[f64], y: &mut [f64]| {
            let w = field(&model, x.to_vec());
            let jw = model.linearized_from_values(&uu, &w);
            for (i, (yi, &j)) in y.iter_mut().zip(jw.coeff.iter()).enumerate() {
                *yi = eig[i] * x[i] + j;
            }
        };
        let precond = |x: &[f64], y: &mut [f64]| {
            y.iter_mut().zip(x.iter().zip(&inv_eig)).for_each(|(yi, (xi, d))| *yi = xi * d);
        };
        let rhs: Vec<f64> = r.coeff.iter().map(|v| -v).collect();
        let out = krylov::pcg(apply, precond, &rhs, 1e-13, 500);
        if out.negative_curvature {
            // Indefinite Jacobian: move downhill on the stationary energy instead,
            // along the partial CG iterate or the preconditioned steepest descent.
            let mut x = out.x;
            if x.iter().all(|&v| v == 0.0) {
                precond(&rhs, &mut x);
            }
            let dir = field(&model, x);
            u = descend(&model, &u, &dir);
        } else {
            let x = if out.converged {
                out.x
            } else {
                krylov::gmres(apply, precond, &rhs, 1e-13, 2000, 80).x
            };
            let delta = field(&model, x);
            let mut alpha = 1.0;
            loop {
                let trial = u.axpy(alpha, &delta);
                let (tr, _) = stationary_residual(&model, &trial);
                if norm_hs(&tr, 0.0) <= (1.0 - 1e-4 * alpha) * rn || alpha < 1.0 / 1024.0 {
                    u = trial;
                    break;
                }
                alpha *= 0.5;
            }
        }
        (r, uu) = stationary_residual(&model, &u);
        rn = norm_hs(&r, 0.0);
        iters += 1;
        history.push(rn);
    }

    let energy_at = model.energy(&State::at_rest(u.clone()))?.total;
    let stability = stability_indicator_with(&model, &uu);
    Ok(EquilibriumResult {
        schema: SCHEMA_VERSION,
        residual: rn,
        newton_iters: iters,
        residual_history: history,
        energy_at,
        stability_indicator: stability,
        norm_v: norm_hs(&u, 0.5),
        amplitude: uu.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        u_star: u,
    })
}

/// `E(u, 0) = 1/2 ||A^{1/2} u||^2 + int F(u) - <g, A^{-1} u>`, whose gradient is `R(u)`.
fn stationary_energy(model: &Model, u: &ModalField) -> f64 {
    let quad: f64 = u
        .coeff
        .iter()
        .zip(model.eigenvalues().iter())
        .map(|(c, l)| 0.5 * l * c * c)
        .sum();
    quad + model.potential_from_values(&model.values(u)) - model.forcing(u)
}

/// Armijo backtracking on the stationary energy along the descent direction
/// `dir`, extended by doubling while the energy keeps dropping.
fn descend(model: &Model, u: &ModalField, dir: &ModalField) -> ModalField {
    let e0 = stationary_energy(model, u);
    let (r, _) = stationary_residual(model, u);
    let slope = r.dot(dir);
    let accept = |alpha: f64, e: f64| e <= e0 + 1e-4 * alpha * slope;
    let mut alpha = 1.0;
    let mut e = stationary_energy(model, &u.axpy(alpha, dir));
    if accept(alpha, e) {
        for _ in 0..20 {
            let e2 = stationary_energy(model, &u.axpy(2.0 * alpha, dir));
            if !(e2 < e) {
                break;
            }
            alpha *= 2.0;
            e = e2;
        }
    } else {
        while !accept(alpha, e) && alpha > 1e-10 {
            alpha *= 0.5;
            e = stationary_energy(model, &u.axpy(alpha, dir));
        }
    }
    u.axpy(alpha, dir)
}

/// Smallest eigenvalue of `A + P f'(u)` restricted to modes `j, k <= min(N, 8)`.
pub fn stability_indicator(u: &ModalField, nl: &Nonlinearity) -> f64 {
    let model = Model::unforced(*nl, u.grid);
    stability_indicator_with(&model, &model.values(u))
}

fn stability_indicator_with(model: &Model, uu: &Array2<f64>) -> f64 {
    let grid = *model.grid();
    let m = grid.n_modes.min(RITZ_BAND);
    let modes: Vec<(usize, usize)> = (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).collect();
    let dim = modes.len();
    let mut mat = DMatrix::zeros(dim, dim);
    for (i, &(a, b)) in modes.iter().enumerate() {
        let mut e = ModalField::zeros(grid);
        e.coeff[[a, b]] = 1.0;
        let je = model.linearized_from_values(uu, &e);
        for (k, &(c, d)) in modes.iter().enumerate() {
            mat[(k, i)] = je.coeff[[c, d]];
        }
        mat[(i, i)] += model.eigenvalues()[[a, b]];
    }
    let sym = (&mat + mat.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}
