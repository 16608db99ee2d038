//! Time advance of the Galerkin system
//! `u'' + u' + lambda^2 u + lambda (P_N f(u))^ = g^`, mode by mode.
//!
//! Two schemes are available. [`Scheme::ImexCnAb2`] treats damping and
//! `lambda^2` with Crank-Nicolson and the nonlinear term with second-order
//! Adams-Bashforth extrapolation (IMEX Euler on the first step). An optional
//! linear stabilization `S lambda u`, added implicitly and subtracted
//! explicitly, keeps the explicit part stable for every mode once
//! `S >= max f'` on the range of the solution; the scheme stays second order.
//! Without it, modes with `lambda dt` of order one grow slowly wherever `f' > 0`. [`Scheme::ImplicitNewton`] is
//! backward Euler solved by matrix-free Newton-GMRES.
//!
//! Every step recomputes the energy and rejects the step if it grew by more
//! than `safeguard_tol`.

mod checkpoint;
mod log;
mod oracle;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_EXTENSION, CHECKPOINT_VERSION};
pub use log::{energy_equality_residual, higher_energy_residual, Sample, TrajectoryLog};
pub use oracle::exact_linear_mode;

use crate::error::{Error, Result};
use crate::krylov;
use crate::model::{DiagnosticParams, EnergyBreakdown, Model, Nonlinearity, SourceTerm};
use crate::spectral::ModalField;
use crate::state::State;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImexCnAb2,
    ImplicitNewton,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Largest energy increase accepted in one step.
    pub safeguard_tol: f64,
    /// Stabilization constant `S` (default 0). `None` uses `max f'` over a range
    /// covering the solution, enlarged whenever `sup |u|` leaves it.
    pub stabilization: Option<f64>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            scheme: Scheme::ImexCnAb2,
            newton_tol: 1e-12,
            newton_max_iter: 25,
            safeguard_tol: 1e-6,
            stabilization: Some(0.0),
        }
    }
}

impl SchemeConfig {
    pub fn imex(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    pub fn implicit(dt: f64) -> Self {
        Self {
            dt,
            scheme: Scheme::ImplicitNewton,
            ..Self::default()
        }
    }

    /// Negative `dt` is accepted for the implicit scheme only (backward runs, experimental).
    pub fn validate(&self) -> Result<()> {
        let dt_ok = self.dt.is_finite()
            && (self.dt > 0.0 || (self.dt < 0.0 && self.scheme == Scheme::ImplicitNewton));
        if !dt_ok {
            return Err(Error::InvalidParameter(format!("dt must be positive and finite, got {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) || !(self.safeguard_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter("newton_max_iter must be at least 1".into()));
        }
        if let Some(s) = self.stabilization {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("stabilization must be >= 0, got {s}")));
            }
        }
        Ok(())
    }
}

/// Range `[-R, R]` of `u` covered by the automatic stabilization: the data
/// plus the zone where `f(r) r < 0`, with a margin.
fn stabilization_radius(nl: &Nonlinearity, sup_u: f64) -> f64 {
    let r0 = if nl.r0.is_finite() { nl.r0 } else { 0.0 };
    1.25 * sup_u.max(r0).max(0.8)
}

/// Automatic stabilization: the largest `f'` on `[-radius, radius]` (zero if `f' <= 0` there).
pub fn auto_stabilization(nl: &Nonlinearity, radius: f64) -> f64 {
    if nl.is_linear() {
        return nl.a1.max(0.0);
    }
    nl.df_max_on(radius).max(0.0)
}

fn sup_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// One Crank-Nicolson step of `y' = z, z' = -z - mu y + r` with `r` frozen.
#[inline]
pub(crate) fn cn_update(dt: f64, mu: f64, y0: f64, z0: f64, r: f64) -> (f64, f64) {
    let a = 0.5 * dt;
    let a2mu = a * a * mu;
    let z1 = (z0 * (1.0 - a - a2mu) - 2.0 * a * mu * y0 + dt * r) / (1.0 + a + a2mu);
    (y0 + a * (z0 + z1), z1)
}

/// `sum z^2 / lambda`, the squared `V'` norm.
pub(crate) fn vprime_sq(z: &ModalField, eig: &Array2<f64>) -> f64 {
    z.coeff.iter().zip(eig.iter()).map(|(c, l)| c * c / l).sum()
}

/// Previous-step data for the Adams-Bashforth extrapolation.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct History {
    pub u: ModalField,
    pub f: ModalField,
}

/// Owns a trajectory: the current state, cached nonlinear data and the scheme history.
#[derive(Clone, Debug)]
pub struct Stepper {
    model: Model,
    cfg: SchemeConfig,
    stab: f64,
    /// Range of `u` the automatic stabilization covers (infinite when fixed).
    radius: f64,
    state: State,
    uu: Array2<f64>,
    fu: ModalField,
    energy: EnergyBreakdown,
    history: Option<History>,
    steps: u64,
    t0: f64,
    dissipation: f64,
    max_increase: f64,
}

impl Stepper {
    pub fn new(model: Model, cfg: SchemeConfig, initial: State) -> Result<Self> {
        cfg.validate()?;
        model.grid().check_same(initial.grid())?;
        if !initial.is_finite() {
            return Err(Error::InvalidParameter("initial state is not finite".into()));
        }
        let uu = model.values(&initial.u);
        let (stab, radius) = match cfg.stabilization {
            Some(s) => (s, f64::INFINITY),
            None => {
                let r = stabilization_radius(&model.nl, sup_abs(&uu));
                (auto_stabilization(&model.nl, r), r)
            }
        };
        let t0 = initial.time;
        Ok(Self::assemble(model, cfg, stab, radius, initial, uu, None, 0, t0, 0.0, 0.0))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        model: Model,
        cfg: SchemeConfig,
        stab: f64,
        radius: f64,
        state: State,
        uu: Array2<f64>,
        history: Option<History>,
        steps: u64,
        t0: f64,
        dissipation: f64,
        max_increase: f64,
    ) -> Self {
        let fu = model.nonlinear_from_values(&uu);
        let energy = model.energy_with_values(&state, &uu);
        Self {
            model,
            cfg,
            stab,
            radius,
            state,
            uu,
            fu,
            energy,
            history,
            steps,
            t0,
            dissipation,
            max_increase,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn into_state(self) -> State {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    /// Time at which the run started.
    pub fn start_time(&self) -> f64 {
        self.t0
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn stabilization(&self) -> f64 {
        self.stab
    }

    pub fn energy(&self) -> &EnergyBreakdown {
        &self.energy
    }

    /// `P_N f(u)` at the current state.
    pub fn nonlinear(&self) -> &ModalField {
        &self.fu
    }

    /// Padded nodal values of the current `u`.
    pub fn padded_values(&self) -> &Array2<f64> {
        &self.uu
    }

    /// Trapezoid-rule `int ||u_t||_{V'}^2` accumulated over every step taken.
    pub fn dissipation(&self) -> f64 {
        self.dissipation
    }

    /// Largest single-step energy increase seen so far (negative if the energy always fell).
    pub fn max_energy_increase(&self) -> f64 {
        self.max_increase
    }

    /// `u_tt` implied by the equation at the current state.
    pub fn acceleration(&self) -> ModalField {
        self.model.acceleration_with_nonlinear(&self.state, &self.fu)
    }

    pub fn step(&mut self) -> Result<()> {
        let time = self.state.time;
        let res = match self.cfg.scheme {
            Scheme::ImexCnAb2 => self.advance_imex(),
            Scheme::ImplicitNewton => self.advance_newton(),
        };
        res.map_err(|e| match e {
            Error::Instability { .. } | Error::NewtonFailure { .. } => e,
            other => Error::StepFailed {
                time,
                source: Box::new(other),
            },
        })
    }

    /// Runs `n_steps` steps, calling `on_sample` before the first step, after
    /// every `sample_every`-th step and after the last one.
    pub fn run(
        &mut self,
        n_steps: usize,
        sample_every: usize,
        mut on_sample: impl FnMut(&Stepper) -> Result<()>,
    ) -> Result<()> {
        let every = sample_every.max(1);
        on_sample(self)?;
        for k in 1..=n_steps {
            self.step()?;
            if k % every == 0 || k == n_steps {
                on_sample(self)?;
            }
        }
        Ok(())
    }

    fn advance_imex(&mut self) -> Result<()> {
        let dt = self.cfg.dt;
        let s = self.stab;
        let grid = *self.model.grid();
        let eig = self.model.eigenvalues();
        let g = &self.model.source.g_modal.coeff;
        let (u0, v0, f0) = (&self.state.u.coeff, &self.state.v.coeff, &self.fu.coeff);
        let mut u1 = Array2::zeros(u0.dim());
        let mut v1 = Array2::zeros(u0.dim());
        let hist = self.history.as_ref();
        for (idx, &l) in eig.indexed_iter() {
            let now = l * (s * u0[idx] - f0[idx]);
            let explicit = match hist {
                Some(h) => 1.5 * now - 0.5 * l * (s * h.u.coeff[idx] - h.f.coeff[idx]),
                None => now,
            };
            let (y, z) = cn_update(dt, l * l + s * l, u0[idx], v0[idx], explicit + g[idx]);
            u1[idx] = y;
            v1[idx] = z;
        }
        let u1 = ModalField { grid, coeff: u1 };
        let v1 = ModalField { grid, coeff: v1 };
        self.accept(u1, v1)
    }

    fn advance_newton(&mut self) -> Result<()> {
        let dt = self.cfg.dt;
        let grid = *self.model.grid();
        let eig = self.model.eigenvalues().clone();
        let g = self.model.source.g_modal.coeff.clone();
        let u0 = self.state.u.clone();
        let v0 = self.state.v.clone();
        let diag = eig.mapv(|l| 1.0 / (1.0 + dt + dt * dt * l * l));
        let scale = norm_l2(&u0.coeff).max(1.0);

        let mut u1 = u0.axpy(dt, &v0);
        let mut trace = Vec::new();
        let mut converged = false;
        for _ in 0..=self.cfg.newton_max_iter {
            let uu = self.model.values(&u1);
            let fu = self.model.nonlinear_from_values(&uu);
            let mut r = Array2::zeros(eig.dim());
            for (idx, &l) in eig.indexed_iter() {
                r[idx] = (1.0 + dt) * (u1.coeff[idx] - u0.coeff[idx]) - dt * v0.coeff[idx]
                    + dt * dt * (l * l * u1.coeff[idx] + l * fu.coeff[idx] - g[idx]);
            }
            let rn = norm_l2(&(&r * &diag));
            trace.push(rn);
            if !rn.is_finite() {
                break;
            }
            if rn <= self.cfg.newton_tol * scale {
                converged = true;
                break;
            }
            if trace.len() > self.cfg.newton_max_iter {
                break;
            }
            let model = &self.model;
            let apply = |x: &[f64], y: &mut [f64]| {
                let w = ModalField {
                    grid,
                    coeff: Array2::from_shape_vec(eig.dim(), x.to_vec()).expect("flat modal vector"),
                };
                let jw = model.linearized_from_values(&uu, &w);
                for (i, (&l, (&wi, &ji))) in eig.iter().zip(w.coeff.iter().zip(jw.coeff.iter())).enumerate() {
                    y[i] = (1.0 + dt) * wi + dt * dt * (l * l * wi + l * ji);
                }
            };
            let dflat: Vec<f64> = diag.iter().copied().collect();
            let precond = |x: &[f64], y: &mut [f64]| {
                y.iter_mut().zip(x.iter().zip(&dflat)).for_each(|(yi, (xi, d))| *yi = xi * d);
            };
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let out = krylov::gmres(apply, precond, &rhs, 1e-12, 400, 60);
            let delta = Array2::from_shape_vec(eig.dim(), out.x).expect("flat modal vector");
            u1.coeff += &delta;
        }
        if !converged {
            return Err(Error::NewtonFailure {
                time: self.state.time,
                trace,
            });
        }
        let v1 = u1.axpy(-1.0, &u0).scaled(1.0 / dt);
        self.accept(u1, v1)
    }

    /// Installs `(u1, v1)` as the next state after the energy safeguard.
    fn accept(&mut self, u1: ModalField, v1: ModalField) -> Result<()> {
        let dt = self.cfg.dt;
        let time = self.t0 + (self.steps + 1) as f64 * dt;
        let next = State {
            u: u1,
            v: v1,
            time,
        };
        if !next.is_finite() {
            return Err(Error::Instability {
                time: self.state.time,
                increase: f64::INFINITY,
                tol: self.cfg.safeguard_tol,
            });
        }
        let uu = self.model.values(&next.u);
        let energy = self.model.energy_with_values(&next, &uu);
        let increase = energy.total - self.energy.total;
        if dt > 0.0 && !(increase <= self.cfg.safeguard_tol) {
            return Err(Error::Instability {
                time: self.state.time,
                increase,
                tol: self.cfg.safeguard_tol,
            });
        }
        let eig = self.model.eigenvalues();
        self.dissipation += 0.5 * dt * (vprime_sq(&self.state.v, eig) + vprime_sq(&next.v, eig));
        self.max_increase = if self.steps == 0 { increase } else { self.max_increase.max(increase) };

        let fu = self.model.nonlinear_from_values(&uu);
        let prev = std::mem::replace(&mut self.state, next);
        let prev_f = std::mem::replace(&mut self.fu, fu);
        self.history = Some(History { u: prev.u, f: prev_f });
        if self.radius.is_finite() {
            let sup = sup_abs(&uu);
            if sup > self.radius {
                self.radius = stabilization_radius(&self.model.nl, sup);
                self.stab = auto_stabilization(&self.model.nl, self.radius);
            }
        }
        self.uu = uu;
        self.energy = energy;
        self.steps += 1;
        Ok(())
    }
}

fn norm_l2(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Number of steps covering `[t0, t_end]` with steps no longer than `dt`, and the step actually used.
pub fn step_count(t0: f64, t_end: f64, dt: f64) -> Result<(usize, f64)> {
    let span = t_end - t0;
    if !(span >= 0.0) || !span.is_finite() {
        return Err(Error::InvalidParameter(format!("t_end = {t_end} must not precede the start time {t0}")));
    }
    if span == 0.0 {
        return Ok((0, dt));
    }
    let n = (span / dt.abs() - 1e-9).ceil().max(1.0) as usize;
    Ok((n, span / n as f64 * dt.signum()))
}

/// One step from `state` (IMEX Euler start for the IMEX scheme).
pub fn step(state: &State, nl: &Nonlinearity, g: &SourceTerm, cfg: &SchemeConfig) -> Result<State> {
    let mut s = Stepper::new(Model::new(*nl, g.clone()), *cfg, state.clone())?;
    s.step()?;
    Ok(s.into_state())
}

/// What [`simulate_model`] records.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    pub sample_every: usize,
    /// Parameters for the functional F; `None` skips F, G and H (logged as NaN).
    pub diagnostics: Option<DiagnosticParams>,
}

/// Runs from `initial` to `t_end` and logs every `sample_every` steps.
pub fn simulate(
    initial: &State,
    nl: &Nonlinearity,
    g: &SourceTerm,
    cfg: &SchemeConfig,
    t_end: f64,
    sample_every: usize,
) -> Result<TrajectoryLog> {
    let model = Model::new(*nl, g.clone());
    let opts = SimOptions {
        sample_every,
        diagnostics: Some(DiagnosticParams::recipe(nl, initial.grid())),
    };
    simulate_model(&model, initial, cfg, t_end, &opts).map(|(log, _)| log)
}

/// [`simulate`] on a prepared model; also returns the stepper at `t_end`.
pub fn simulate_model(
    model: &Model,
    initial: &State,
    cfg: &SchemeConfig,
    t_end: f64,
    opts: &SimOptions,
) -> Result<(TrajectoryLog, Stepper)> {
    let (n, dt) = step_count(initial.time, t_end, cfg.dt)?;
    let cfg = SchemeConfig { dt, ..*cfg };
    let mut stepper = Stepper::new(model.clone(), cfg, initial.clone())?;
    let mut log = TrajectoryLog::new(dt, opts.sample_every.max(1));
    stepper.run(n, opts.sample_every, |s| log.record(s, opts.diagnostics.as_ref()))?;
    log.max_energy_increase = stepper.max_energy_increase();
    Ok((log, stepper))
}

#[cfg(test)]
mod tests;
