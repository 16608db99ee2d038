//! The nonlinearity, the source term and every functional evaluated along a trajectory.
//!
//! All integrals of products are evaluated on a padded grid where they are
//! exact for band-limited fields (see [`PaddedGrid`]); modal pairings such as
//! `<g, A^{-1} u>` are plain weighted sums.

mod nonlinearity;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

pub use nonlinearity::{check_assumptions, AssumptionReport, Nonlinearity};

use crate::error::{Error, Result};
use crate::spectral::{norm_hs, norm_pair, GridSpec, ModalField, PaddedGrid, Parity};
use crate::state::State;

/// Time-independent source `g`, stored modally.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceTerm {
    pub g_modal: ModalField,
}

impl SourceTerm {
    pub fn new(g_modal: ModalField) -> Self {
        Self { g_modal }
    }

    pub fn zero(grid: GridSpec) -> Self {
        Self {
            g_modal: ModalField::zeros(grid),
        }
    }

    /// `||g||_{V'} = ||A^{-1/2} g||`.
    pub fn v_prime_norm(&self) -> f64 {
        norm_hs(&self.g_modal, -0.5)
    }

    pub fn is_zero(&self) -> bool {
        self.g_modal.coeff.iter().all(|&c| c == 0.0)
    }
}

/// Energy split into its three parts; `total = quad + potential - forcing`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `||(u, u_t)||_0^2 / 2`.
    pub quad: f64,
    /// `int F(u)`.
    pub potential: f64,
    /// `<g, A^{-1} u>`.
    pub forcing: f64,
    pub total: f64,
}

/// Constants of the differentiated-equation functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticParams {
    pub beta: f64,
    pub big_l: f64,
    /// Coercivity constant the recipe guarantees.
    pub sigma: f64,
}

impl DiagnosticParams {
    pub fn new(beta: f64, big_l: f64, sigma: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) || !(big_l > 0.0) || !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need beta in (0,1), L > 0, sigma > 0; got beta={beta}, L={big_l}, sigma={sigma}"
            )));
        }
        Ok(Self { beta, big_l, sigma })
    }

    /// Choice that makes the functional coercive with `sigma = 1/8`:
    /// `beta = min(1/4, lambda_1/4)` bounds the cross term by `||V||_0^2 / 4`,
    /// and `L = max(lambda, lambda^2 / 2, 1)` absorbs `-lambda ||v||^2 / 2`
    /// down to `-||v||_V^2 / 8` by interpolation.
    pub fn recipe(nl: &Nonlinearity, grid: &GridSpec) -> Self {
        let lambda = nl.lambda_bound;
        Self {
            beta: 0.25f64.min(0.25 * grid.lambda_1()),
            big_l: lambda.max(0.5 * lambda * lambda).max(1.0),
            sigma: 0.125,
        }
    }
}

/// Values of the higher-order functionals at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HigherFunctionals {
    pub g0: f64,
    pub g: f64,
    pub h: f64,
}

/// Nonlinearity, source and the padded grid they are evaluated on.
#[derive(Clone, Debug)]
pub struct Model {
    pub nl: Nonlinearity,
    pub source: SourceTerm,
    grid: GridSpec,
    pad: PaddedGrid,
    eig: Array2<f64>,
}

impl Model {
    pub fn new(nl: Nonlinearity, source: SourceTerm) -> Self {
        let grid = source.g_modal.grid;
        let pad = PaddedGrid::for_products(grid, nl.has_quadratic());
        Self {
            nl,
            source,
            grid,
            pad,
            eig: grid.eigenvalues(),
        }
    }

    pub fn unforced(nl: Nonlinearity, grid: GridSpec) -> Self {
        Self::new(nl, SourceTerm::zero(grid))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn pad(&self) -> &PaddedGrid {
        &self.pad
    }

    /// Eigenvalues of `A`, laid out like coefficients.
    pub fn eigenvalues(&self) -> &Array2<f64> {
        &self.eig
    }

    /// Same model on another number of modes (source embedded or truncated).
    pub fn resized(&self, n: usize) -> Result<Model> {
        Ok(Model::new(self.nl, SourceTerm::new(self.source.g_modal.resized(n)?)))
    }

    fn check(&self, z: &ModalField) -> Result<()> {
        self.grid.check_same(&z.grid)
    }

    /// Values of `u` on the padded grid.
    pub fn values(&self, u: &ModalField) -> Array2<f64> {
        self.pad.values(u)
    }

    /// `P_N f(u)` from padded values of `u`.
    pub fn nonlinear_from_values(&self, uu: &Array2<f64>) -> ModalField {
        let nl = &self.nl;
        if nl.is_zero() {
            return ModalField::zeros(self.grid);
        }
        let odd = uu.mapv(|r| r * (nl.a1 + nl.a3 * r * r));
        if nl.has_quadratic() {
            let even = uu.mapv(|r| nl.a2 * r * r);
            self.pad.project(Some(&odd), Some(&even))
        } else {
            self.pad.project(Some(&odd), None)
        }
    }

    /// `P_N f(u)`, dealiased.
    pub fn f_eval(&self, u: &ModalField) -> Result<ModalField> {
        self.check(u)?;
        Ok(self.nonlinear_from_values(&self.values(u)))
    }

    /// `P_N (f'(u) w)` given padded values of `u`; the Jacobian of the nonlinear term.
    pub fn linearized_from_values(&self, uu: &Array2<f64>, w: &ModalField) -> ModalField {
        let nl = &self.nl;
        let ww = self.pad.values(w);
        let mut odd = Array2::zeros(ww.dim());
        Zip::from(&mut odd).and(uu).and(&ww).for_each(|o, &r, &x| {
            *o = (nl.a1 + 3.0 * nl.a3 * r * r) * x;
        });
        if nl.has_quadratic() {
            let even = Zip::from(uu).and(&ww).map_collect(|&r, &x| 2.0 * nl.a2 * r * x);
            self.pad.project(Some(&odd), Some(&even))
        } else {
            self.pad.project(Some(&odd), None)
        }
    }

    /// `int F(u)` from padded values of `u`.
    pub fn potential_from_values(&self, uu: &Array2<f64>) -> f64 {
        let nl = &self.nl;
        let even = uu.mapv(|r| r * r * (0.5 * nl.a1 + 0.25 * nl.a3 * r * r));
        let mut total = self.pad.integrate(&even, Parity::Even);
        if nl.has_quadratic() {
            let odd = uu.mapv(|r| nl.a2 / 3.0 * r * r * r);
            total += self.pad.integrate(&odd, Parity::Odd);
        }
        total
    }

    pub fn potential_integral(&self, u: &ModalField) -> Result<f64> {
        self.check(u)?;
        Ok(self.potential_from_values(&self.values(u)))
    }

    /// `<g, A^{-1} u>`.
    pub fn forcing(&self, u: &ModalField) -> f64 {
        let mut acc = 0.0;
        Zip::from(&self.source.g_modal.coeff)
            .and(&u.coeff)
            .and(&self.eig)
            .for_each(|&g, &c, &l| acc += g * c / l);
        acc
    }

    /// Energy given padded values of `state.u` (avoids a transform when they are at hand).
    pub fn energy_with_values(&self, state: &State, uu: &Array2<f64>) -> EnergyBreakdown {
        let n = norm_pair(&state.u, &state.v, 0.0).expect("state grids agree");
        let quad = 0.5 * n * n;
        let potential = self.potential_from_values(uu);
        let forcing = self.forcing(&state.u);
        EnergyBreakdown {
            quad,
            potential,
            forcing,
            total: quad + potential - forcing,
        }
    }

    pub fn energy(&self, state: &State) -> Result<EnergyBreakdown> {
        self.check(&state.u)?;
        self.check(&state.v)?;
        Ok(self.energy_with_values(state, &self.values(&state.u)))
    }

    /// `u_tt = g - u_t - A^2 u - A P_N f(u)` given `P_N f(u)`.
    pub fn acceleration_with_nonlinear(&self, state: &State, fu: &ModalField) -> ModalField {
        let mut out = ModalField::zeros(self.grid);
        Zip::from(&mut out.coeff)
            .and(&self.source.g_modal.coeff)
            .and(&state.v.coeff)
            .and(&state.u.coeff)
            .and(&fu.coeff)
            .and(&self.eig)
            .for_each(|o, &g, &v, &u, &f, &l| *o = g - v - l * l * u - l * f);
        out
    }

    pub fn acceleration(&self, state: &State) -> Result<ModalField> {
        self.check(&state.u)?;
        self.check(&state.v)?;
        let fu = self.f_eval(&state.u)?;
        Ok(self.acceleration_with_nonlinear(state, &fu))
    }

    /// `||u_tt + u_t + A^2 u + A P_N f(u) - g||_{V'}`.
    pub fn pde_residual(&self, state: &State, u_tt: &ModalField) -> Result<f64> {
        self.check(u_tt)?;
        let acc = self.acceleration(state)?;
        let res = u_tt.axpy(-1.0, &acc);
        Ok(norm_hs(&res, -0.5))
    }

    /// `(f'(u) v, v)` exactly on the padded grid.
    fn weighted_square(&self, uu: &Array2<f64>, vv: &Array2<f64>) -> f64 {
        let nl = &self.nl;
        let even = Zip::from(uu).and(vv).map_collect(|&r, &v| (nl.a1 + 3.0 * nl.a3 * r * r) * v * v);
        let mut total = self.pad.integrate(&even, Parity::Even);
        if nl.has_quadratic() {
            let odd = Zip::from(uu).and(vv).map_collect(|&r, &v| 2.0 * nl.a2 * r * v * v);
            total += self.pad.integrate(&odd, Parity::Odd);
        }
        total
    }

    /// Differentiated-equation functional for an explicit pair `V = (v, v_t)` around `u`:
    /// `|V|_0^2/2 + beta <v_t, A^{-1} v> + beta/2 |v|_{V'}^2 + (f'(u) v, v)/2 + L |v|_{V'}^2`.
    pub fn diagnostic_f_parts(
        &self,
        u: &ModalField,
        v: &ModalField,
        v_t: &ModalField,
        p: &DiagnosticParams,
    ) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        self.check(v_t)?;
        let big_v = norm_pair(v, v_t, 0.0)?;
        let mut cross = 0.0;
        Zip::from(&v_t.coeff)
            .and(&v.coeff)
            .and(&self.eig)
            .for_each(|&a, &b, &l| cross += a * b / l);
        let v_vp = norm_hs(v, -0.5);
        let fv = self.weighted_square(&self.values(u), &self.values(v));
        Ok(0.5 * big_v * big_v + p.beta * cross + 0.5 * p.beta * v_vp * v_vp + 0.5 * fv + p.big_l * v_vp * v_vp)
    }

    /// The functional with `v = u_t` and `v_t` the acceleration implied by the equation.
    pub fn diagnostic_f(&self, state: &State, p: &DiagnosticParams) -> Result<f64> {
        let v_t = self.acceleration(state)?;
        self.diagnostic_f_parts(&state.u, &state.v, &v_t, p)
    }

    /// `(G0, G, H)` of the higher-order energy identity `dG/dt + G = H`.
    pub fn higher_functionals(&self, state: &State) -> Result<HigherFunctionals> {
        self.check(&state.u)?;
        self.check(&state.v)?;
        let nl = &self.nl;
        let pad = &self.pad;
        let u = &state.u;
        let ut = &state.v;
        let au = crate::spectral::apply_power(u, 1.0);
        let aut = crate::spectral::apply_power(ut, 1.0);

        let norm2 = state.norm(2.0);
        let g_au = self.source.g_modal.dot(&au);
        let ut_au = ut.dot(&au);
        let grad_sq = {
            let n = norm_hs(u, 0.5);
            n * n
        };

        let uu = pad.values(u);
        let auu = pad.values(&au);
        // (f'(u) Au, Au) = int f'(u) |Lap u|^2
        let f_lap = self.weighted_square(&uu, &auu);

        let g0 = 0.5 * norm2 * norm2 - g_au + 0.5 * f_lap;

        let h0 = if nl.a3 == 0.0 && nl.a2 == 0.0 {
            0.0
        } else {
            let utu = pad.values(ut);
            let autu = pad.values(&aut);
            let ux = pad.values_dx(u);
            let uy = pad.values_dy(u);
            let grad2 = Zip::from(&ux).and(&uy).map_collect(|&a, &b| a * a + b * b);
            // f''(u) = 6 a3 u + 2 a2: the a3 part is cosine-type, the a2 part sine-type
            let c3 = 6.0 * nl.a3;
            let c2 = 2.0 * nl.a2;
            let mut even = Array2::<f64>::zeros(uu.dim());
            Zip::from(&mut even)
                .and(&uu)
                .and(&utu)
                .and(&auu)
                .and(&autu)
                .and(&grad2)
                .for_each(|o, &r, &rt, &ar, &art, &gr| {
                    *o = c3 * r * (0.5 * rt * ar * ar + art * gr + 0.5 * gr * ar);
                });
            let mut h0 = pad.integrate(&even, Parity::Even);
            if nl.has_quadratic() {
                let mut odd = Array2::<f64>::zeros(uu.dim());
                Zip::from(&mut odd)
                    .and(&utu)
                    .and(&auu)
                    .and(&autu)
                    .and(&grad2)
                    .for_each(|o, &rt, &ar, &art, &gr| {
                        *o = c2 * (0.5 * rt * ar * ar + art * gr + 0.5 * gr * ar);
                    });
                h0 += pad.integrate(&odd, Parity::Odd);
            }
            h0
        };

        let extra = 0.5 * ut_au + 0.25 * grad_sq;
        Ok(HigherFunctionals {
            g0,
            g: g0 + extra,
            h: h0 - 0.5 * g_au + extra,
        })
    }
}

/// `P_N f(u)` on a padded grid built for this call.
pub fn f_eval_dealiased(u: &ModalField, nl: &Nonlinearity) -> ModalField {
    Model::unforced(*nl, u.grid).nonlinear_from_values(&PaddedGrid::for_products(u.grid, nl.has_quadratic()).values(u))
}

pub fn potential_integral(u: &ModalField, nl: &Nonlinearity) -> f64 {
    let m = Model::unforced(*nl, u.grid);
    m.potential_from_values(&m.values(u))
}

pub fn energy(state: &State, nl: &Nonlinearity, g: &SourceTerm) -> Result<EnergyBreakdown> {
    state.grid().check_same(&g.g_modal.grid)?;
    Model::new(*nl, g.clone()).energy(state)
}

pub fn acceleration_from_state(state: &State, nl: &Nonlinearity, g: &SourceTerm) -> Result<ModalField> {
    state.grid().check_same(&g.g_modal.grid)?;
    Model::new(*nl, g.clone()).acceleration(state)
}

pub fn pde_residual(state: &State, u_tt: &ModalField, nl: &Nonlinearity, g: &SourceTerm) -> Result<f64> {
    state.grid().check_same(&g.g_modal.grid)?;
    Model::new(*nl, g.clone()).pde_residual(state, u_tt)
}

pub fn diagnostic_f(state: &State, nl: &Nonlinearity, g: &SourceTerm, p: &DiagnosticParams) -> Result<f64> {
    state.grid().check_same(&g.g_modal.grid)?;
    Model::new(*nl, g.clone()).diagnostic_f(state, p)
}

pub fn higher_functionals(state: &State, nl: &Nonlinearity, g: &SourceTerm) -> Result<HigherFunctionals> {
    state.grid().check_same(&g.g_modal.grid)?;
    Model::new(*nl, g.clone()).higher_functionals(state)
}
