use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{fit::exponential_fit, LinearFit, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::integrator::{auto_stabilization, cn_update, step_count, Scheme, SchemeConfig};
use crate::model::{Model, Nonlinearity, SourceTerm};
use crate::spectral::{norm_pair, ModalField};
use crate::state::State;

/// One logged instant of the three co-evolved systems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSample {
    pub t: f64,
    pub u_norm: f64,
    pub v_norm: f64,
    pub w_norm: f64,
    /// `||(v + w) - u||_0` in the pair norm.
    pub sum_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionRun {
    pub schema: u32,
    pub big_l: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Largest `||(v + w) - u||_0` over the samples.
    pub sum_error: f64,
    /// Largest `||(v + w) - u||_0 / (1 + ||U||_0)` over the samples.
    pub sum_error_relative: f64,
    /// `(t, ||W(t)||_0)`.
    pub w_norm_trace: Vec<(f64, f64)>,
    /// Decay rate `kappa` in `||W(t)||_0 ~ e^{-kappa t}`.
    pub fitted_kappa: Option<f64>,
    pub kappa_fit: Option<LinearFit>,
    pub fit_window: (f64, f64),
    /// Values of `L` tried before this one by [`decomposition_probe`].
    pub rejected_big_l: Vec<f64>,
    pub samples: Vec<DecompositionSample>,
}

impl DecompositionRun {
    /// Positive decay rate with a log-linear fit of at least `min_r2`.
    pub fn decays(&self, min_r2: f64) -> bool {
        match (self.fitted_kappa, self.kappa_fit) {
            (Some(k), Some(f)) => k > 0.0 && f.r2 >= min_r2,
            _ => false,
        }
    }
}

/// Default coupling `L = max(10, 2 lambda)`.
pub fn default_big_l(nl: &Nonlinearity) -> f64 {
    10f64.max(2.0 * nl.lambda_bound)
}

/// Default fit window: skips the first unit of time (or the first half of short runs).
fn default_window(t_end: f64) -> (f64, f64) {
    (1f64.min(0.5 * t_end), t_end)
}

/// Co-evolves `u`, the compact part `v` (zero data, coupled to `u` through `L`)
/// and the decaying part `w` (data `U_0`) with one IMEX scheme, in the form
/// where summing the `v` and `w` updates reproduces the `u` update exactly.
pub fn decomposition_run(
    initial: &State,
    nl: &Nonlinearity,
    g: &SourceTerm,
    cfg: &SchemeConfig,
    big_l: f64,
    t_end: f64,
) -> Result<DecompositionRun> {
    decomposition_run_with(initial, nl, g, cfg, big_l, t_end, None, 1)
}

/// [`decomposition_run`] with an explicit fit window and sampling stride.
#[allow(clippy::too_many_arguments)]
pub fn decomposition_run_with(
    initial: &State,
    nl: &Nonlinearity,
    g: &SourceTerm,
    cfg: &SchemeConfig,
    big_l: f64,
    t_end: f64,
    fit_window: Option<(f64, f64)>,
    sample_every: usize,
) -> Result<DecompositionRun> {
    if !(big_l > 0.0) || !big_l.is_finite() {
        return Err(Error::InvalidParameter(format!("L must be positive, got {big_l}")));
    }
    cfg.validate()?;
    if cfg.scheme != Scheme::ImexCnAb2 {
        return Err(Error::InvalidParameter(
            "the decomposition is integrated with the IMEX scheme only".into(),
        ));
    }
    let model = Model::new(*nl, g.clone());
    model.grid().check_same(initial.grid())?;
    let (n_steps, dt) = step_count(initial.time, t_end, cfg.dt)?;
    let cfg = SchemeConfig { dt, ..*cfg };
    let stab = match cfg.stabilization {
        Some(s) => s,
        None => {
            let sup = model.values(&initial.u).iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let r0 = if nl.r0.is_finite() { nl.r0 } else { 0.0 };
            auto_stabilization(nl, 1.25 * sup.max(r0).max(0.8))
        }
    };
    let mut sys = Triple::new(&model, initial, stab, big_l);
    let every = sample_every.max(1);
    let mut samples = vec![sys.sample()?];
    for k in 1..=n_steps {
        sys.step(dt).map_err(|e| Error::StepFailed {
            time: sys.time,
            source: Box::new(e),
        })?;
        if k % every == 0 || k == n_steps {
            samples.push(sys.sample()?);
        }
    }

    let window = fit_window.unwrap_or_else(|| default_window(t_end - initial.time));
    let window = (initial.time + window.0, initial.time + window.1);
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let w: Vec<f64> = samples.iter().map(|s| s.w_norm).collect();
    let kappa_fit = exponential_fit(&t, &w, window.0, window.1).ok();
    let sum_error = samples.iter().map(|s| s.sum_error).fold(0.0, f64::max);
    let sum_error_relative = samples
        .iter()
        .map(|s| s.sum_error / (1.0 + s.u_norm))
        .fold(0.0, f64::max);
    Ok(DecompositionRun {
        schema: SCHEMA_VERSION,
        big_l,
        t_end,
        dt,
        sum_error,
        sum_error_relative,
        w_norm_trace: t.iter().copied().zip(w.iter().copied()).collect(),
        fitted_kappa: kappa_fit.map(|f| -f.slope),
        kappa_fit,
        fit_window: window,
        rejected_big_l: Vec::new(),
        samples,
    })
}

/// Runs with `L = big_l` (default [`default_big_l`]) and doubles `L` up to
/// `max_doublings` times while `W` does not decay with fit `R^2 >= min_r2`.
#[allow(clippy::too_many_arguments)]
pub fn decomposition_probe(
    initial: &State,
    nl: &Nonlinearity,
    g: &SourceTerm,
    cfg: &SchemeConfig,
    big_l: Option<f64>,
    t_end: f64,
    fit_window: Option<(f64, f64)>,
    max_doublings: usize,
    min_r2: f64,
) -> Result<DecompositionRun> {
    let mut l = big_l.unwrap_or_else(|| default_big_l(nl));
    let mut rejected = Vec::new();
    loop {
        let mut run = decomposition_run_with(initial, nl, g, cfg, l, t_end, fit_window, 1)?;
        if run.decays(min_r2) || rejected.len() >= max_doublings {
            run.rejected_big_l = rejected;
            return Ok(run);
        }
        log::info!("decomposition with L = {l} does not decay; doubling L");
        rejected.push(l);
        l *= 2.0;
    }
}

struct Triple<'a> {
    model: &'a Model,
    stab: f64,
    big_l: f64,
    time: f64,
    u: State,
    v: State,
    w: State,
    fu: ModalField,
    fv: ModalField,
    /// Explicit terms of the previous step, for the Adams-Bashforth extrapolation.
    prev: Option<[Array2<f64>; 3]>,
}

impl<'a> Triple<'a> {
    fn new(model: &'a Model, initial: &State, stab: f64, big_l: f64) -> Self {
        let grid = *initial.grid();
        let fu = model.nonlinear_from_values(&model.values(&initial.u));
        let zero = State {
            time: initial.time,
            ..State::zeros(grid)
        };
        let fv = model.nonlinear_from_values(&model.values(&zero.u));
        Self {
            model,
            stab,
            big_l,
            time: initial.time,
            u: initial.clone(),
            v: zero,
            w: initial.clone(),
            fu,
            fv,
            prev: None,
        }
    }

    fn sample(&self) -> Result<DecompositionSample> {
        let du = self.v.u.axpy(1.0, &self.w.u).axpy(-1.0, &self.u.u);
        let dv = self.v.v.axpy(1.0, &self.w.v).axpy(-1.0, &self.u.v);
        let s = DecompositionSample {
            t: self.time,
            u_norm: self.u.norm(0.0),
            v_norm: self.v.norm(0.0),
            w_norm: self.w.norm(0.0),
            sum_error: norm_pair(&du, &dv, 0.0)?,
        };
        if [s.u_norm, s.v_norm, s.w_norm].iter().all(|x| x.is_finite()) {
            Ok(s)
        } else {
            Err(Error::Instability {
                time: self.time,
                increase: f64::INFINITY,
                tol: 0.0,
            })
        }
    }

    /// Explicit parts `lambda (S y - nonlinear)` of the three systems.
    fn explicit(&self) -> [Array2<f64>; 3] {
        let eig = self.model.eigenvalues();
        let s = self.stab;
        let term = |y: &Array2<f64>, f: &Array2<f64>| -> Array2<f64> {
            let mut out = Array2::zeros(y.dim());
            ndarray::Zip::from(&mut out)
                .and(eig)
                .and(y)
                .and(f)
                .for_each(|o, &l, &y, &f| *o = l * (s * y - f));
            out
        };
        let fw = &self.fu.coeff - &self.fv.coeff;
        [
            term(&self.u.u.coeff, &self.fu.coeff),
            term(&self.v.u.coeff, &self.fv.coeff),
            term(&self.w.u.coeff, &fw),
        ]
    }

    fn step(&mut self, dt: f64) -> Result<()> {
        let eig = self.model.eigenvalues();
        let g = &self.model.source.g_modal.coeff;
        let (s, big_l) = (self.stab, self.big_l);
        let now = self.explicit();
        let ab = |k: usize, idx: (usize, usize)| -> f64 {
            match &self.prev {
                Some(p) => 1.5 * now[k][idx] - 0.5 * p[k][idx],
                None => now[k][idx],
            }
        };
        let dim = eig.dim();
        let mut next: [[Array2<f64>; 2]; 3] = std::array::from_fn(|_| [Array2::zeros(dim), Array2::zeros(dim)]);
        for (idx, &l) in eig.indexed_iter() {
            let mu = l * l + s * l;
            let (u1, z1) = cn_update(dt, mu, self.u.u.coeff[idx], self.u.v.coeff[idx], ab(0, idx) + g[idx]);
            next[0][0][idx] = u1;
            next[0][1][idx] = z1;
            let coupling = 0.5 * big_l * (self.u.u.coeff[idx] + u1);
            let (v1, y1) = cn_update(
                dt,
                mu + big_l,
                self.v.u.coeff[idx],
                self.v.v.coeff[idx],
                ab(1, idx) + g[idx] + coupling,
            );
            next[1][0][idx] = v1;
            next[1][1][idx] = y1;
            let (w1, x1) = cn_update(dt, mu + big_l, self.w.u.coeff[idx], self.w.v.coeff[idx], ab(2, idx));
            next[2][0][idx] = w1;
            next[2][1][idx] = x1;
        }
        let grid = *self.model.grid();
        let time = self.time + dt;
        let [[u1, ut1], [v1, vt1], [w1, wt1]] = next;
        self.prev = Some(now);
        let mk = |u: Array2<f64>, v: Array2<f64>| State {
            u: ModalField { grid, coeff: u },
            v: ModalField { grid, coeff: v },
            time,
        };
        self.u = mk(u1, ut1);
        self.v = mk(v1, vt1);
        self.w = mk(w1, wt1);
        self.fu = self.model.nonlinear_from_values(&self.model.values(&self.u.u));
        self.fv = self.model.nonlinear_from_values(&self.model.values(&self.v.u));
        self.time = time;
        if !(self.u.is_finite() && self.v.is_finite() && self.w.is_finite()) {
            return Err(Error::Instability {
                time,
                increase: f64::INFINITY,
                tol: 0.0,
            });
        }
        Ok(())
    }
}
