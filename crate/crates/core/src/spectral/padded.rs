//! Zero-padded collocation grid for dealiased products and exact quadrature.
//!
//! Products of band-limited sine and cosine series are trigonometric
//! polynomials with a definite parity about the boundary in each axis. With
//! `M` interior nodes per axis:
//!
//! * an even (cosine-type) integrand that vanishes on the boundary is
//!   integrated exactly by `h^2 * sum` up to degree `2M + 1`;
//! * an odd (sine-type) integrand is integrated exactly up to degree `M` by
//!   weights that integrate the discrete sine interpolant.
//!
//! Every integrand built by the model has at least one factor vanishing on the
//! boundary, so cubic integrands need `M >= 3N` only when they are odd
//! (that is, when the nonlinearity has a quadratic part) and `M >= 2N` otherwise.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2, Zip};

use super::trig::{self, Trig, TrigPlan};
use super::{GridSpec, ModalField};
use crate::error::{Error, Result};

/// Parity of a function about the boundary lines, applied to both axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    /// Cosine-type: products of an even number of sine-type factors.
    Even,
    /// Sine-type: products of an odd number of sine-type factors.
    Odd,
}

#[derive(Clone, Debug)]
pub struct PaddedGrid {
    grid: GridSpec,
    m: usize,
    plan: Arc<TrigPlan>,
    h: f64,
    odd_weights: Array1<f64>,
}

impl PaddedGrid {
    /// Padded grid with at least `min_nodes` interior nodes per axis (rounded up to an FFT-friendly size).
    pub fn new(grid: GridSpec, min_nodes: usize) -> Result<Self> {
        if min_nodes < grid.n_modes {
            return Err(Error::InvalidParameter(format!(
                "padded grid needs at least N = {} nodes, got {min_nodes}",
                grid.n_modes
            )));
        }
        let m = trig::fft_friendly_nodes(min_nodes);
        let h = grid.side / (m + 1) as f64;
        let odd_weights = Array1::from_shape_fn(m, |i| {
            let p = i + 1;
            let mut acc = 0.0;
            for mode in (1..=m).step_by(2) {
                let th = PI * (mode * p) as f64 / (m + 1) as f64;
                acc += th.sin() * 2.0 * grid.side / (mode as f64 * PI);
            }
            acc * 2.0 / (m + 1) as f64
        });
        Ok(Self {
            grid,
            m,
            plan: trig::plan(m),
            h,
            odd_weights,
        })
    }

    /// Grid on which products of the given nonlinearity class are exact:
    /// `2N` nodes for odd cubics, `3N` when a quadratic part is present.
    pub fn for_products(grid: GridSpec, quadratic_part: bool) -> Self {
        let factor = if quadratic_part { 3 } else { 2 };
        Self::new(grid, factor * grid.n_modes).expect("padded size exceeds N")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn nodes(&self) -> usize {
        self.m
    }

    /// Collocation coordinate of padded node `p` (1-based).
    pub fn node(&self, p: usize) -> f64 {
        p as f64 * self.h
    }

    fn check(&self, z: &ModalField) {
        debug_assert_eq!(z.grid, self.grid, "field does not live on this padded grid");
    }

    /// Values of `z` on the padded nodes.
    pub fn values(&self, z: &ModalField) -> Array2<f64> {
        self.check(z);
        let m = self.m;
        self.plan.sum_2d(z.coeff.view(), Trig::Sin, Trig::Sin, m, m) * (2.0 / self.grid.side)
    }

    /// Values of `dz/dx` on the padded nodes (cosine series in x).
    pub fn values_dx(&self, z: &ModalField) -> Array2<f64> {
        self.check(z);
        let w = PI / self.grid.side;
        let scaled = Array2::from_shape_fn(z.coeff.dim(), |(a, b)| z.coeff[[a, b]] * (a + 1) as f64 * w);
        let m = self.m;
        self.plan.sum_2d(scaled.view(), Trig::Cos, Trig::Sin, m, m) * (2.0 / self.grid.side)
    }

    /// Values of `dz/dy` on the padded nodes (cosine series in y).
    pub fn values_dy(&self, z: &ModalField) -> Array2<f64> {
        self.check(z);
        let w = PI / self.grid.side;
        let scaled = Array2::from_shape_fn(z.coeff.dim(), |(a, b)| z.coeff[[a, b]] * (b + 1) as f64 * w);
        let m = self.m;
        self.plan.sum_2d(scaled.view(), Trig::Sin, Trig::Cos, m, m) * (2.0 / self.grid.side)
    }

    /// Exact integral over the square of a product integrand sampled on the padded nodes.
    pub fn integrate(&self, values: &Array2<f64>, parity: Parity) -> f64 {
        match parity {
            Parity::Even => values.sum() * self.h * self.h,
            Parity::Odd => {
                let w = &self.odd_weights;
                let mut acc = 0.0;
                for (p, row) in values.rows().into_iter().enumerate() {
                    acc += w[p] * row.dot(w);
                }
                acc
            }
        }
    }

    /// Weighted sum `sum_pq (w_p w_q) g_pq` for a sine-type part and `h^2` for a cosine-type part,
    /// shaped so that a sine analysis of the result yields exact L2 coefficients.
    fn weighted(&self, sine_part: Option<&Array2<f64>>, cosine_part: Option<&Array2<f64>>) -> Array2<f64> {
        let m = self.m;
        let mut out = Array2::<f64>::zeros((m, m));
        if let Some(s) = sine_part {
            // sine-type function times e_jk is cosine-type: trapezoid weights
            out.scaled_add(self.h * self.h, s);
        }
        if let Some(c) = cosine_part {
            let w = &self.odd_weights;
            Zip::indexed(&mut out).and(c).for_each(|(p, q), o, &v| {
                *o += w[p] * w[q] * v;
            });
        }
        out
    }

    /// Exact L2 projection `P_N g` of `g = sine_part + cosine_part` sampled on the padded nodes.
    ///
    /// Exact whenever each part times `e_jk` (j, k <= N) stays within the degree limits above.
    pub fn project(&self, sine_part: Option<&Array2<f64>>, cosine_part: Option<&Array2<f64>>) -> ModalField {
        let n = self.grid.n_modes;
        let weighted = self.weighted(sine_part, cosine_part);
        let coeff = self.plan.sum_2d(weighted.view(), Trig::Sin, Trig::Sin, n, n) * (2.0 / self.grid.side);
        ModalField {
            grid: self.grid,
            coeff,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::random_band_limited;
    use crate::testutil::{eval, gauss_legendre, quad2};

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6, 2.0);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(5)).sum();
        assert!((s - 64.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn even_and_odd_quadrature_are_exact() {
        let g = GridSpec::new(5, 1.7).unwrap();
        let u = random_band_limited(g, 5, 1.0, 1).unwrap();
        let v = random_band_limited(g, 5, 1.0, 2).unwrap();
        for quadratic in [false, true] {
            let pg = PaddedGrid::for_products(g, quadratic);
            let (uu, vv) = (pg.values(&u), pg.values(&v));
            // u^2 v^2: cosine-type, degree 4N
            let even = pg.integrate(&(&uu * &uu * &vv * &vv), Parity::Even);
            let oracle = quad2(60, g.side, |x, y| eval(&u, x, y).powi(2) * eval(&v, x, y).powi(2));
            assert!((even - oracle).abs() < 1e-11 * oracle.abs(), "{even} vs {oracle}");
            if quadratic {
                // u^2 v: sine-type, degree 3N
                let odd = pg.integrate(&(&uu * &uu * &vv), Parity::Odd);
                let oracle = quad2(60, g.side, |x, y| eval(&u, x, y).powi(2) * eval(&v, x, y));
                assert!((odd - oracle).abs() < 1e-11 * oracle.abs().max(1.0), "{odd} vs {oracle}");
            }
        }
    }

    #[test]
    fn gradients_match_direct_sums() {
        let g = GridSpec::new(4, 2.0).unwrap();
        let u = random_band_limited(g, 4, 1.0, 7).unwrap();
        let pg = PaddedGrid::new(g, 9).unwrap();
        let (dx, dy) = (pg.values_dx(&u), pg.values_dy(&u));
        let eps = 1e-6;
        for p in [1, 4, 7] {
            for q in [2, 5] {
                let (x, y) = (pg.node(p), pg.node(q));
                let fdx = (eval(&u, x + eps, y) - eval(&u, x - eps, y)) / (2.0 * eps);
                let fdy = (eval(&u, x, y + eps) - eval(&u, x, y - eps)) / (2.0 * eps);
                assert!((dx[[p - 1, q - 1]] - fdx).abs() < 1e-7);
                assert!((dy[[p - 1, q - 1]] - fdy).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn projection_of_cosine_type_square() {
        // P_N(u^2) needs the odd weights; compare against brute-force Gauss quadrature.
        let g = GridSpec::new(4, 1.0).unwrap();
        let u = random_band_limited(g, 4, 1.0, 3).unwrap();
        let pg = PaddedGrid::for_products(g, true);
        let uu = pg.values(&u);
        let proj = pg.project(None, Some(&(&uu * &uu)));
        for j in 1..=4 {
            for k in 1..=4 {
                let oracle = quad2(48, g.side, |x, y| eval(&u, x, y).powi(2) * g.basis(j, k, x, y));
                assert!((proj.coeff[[j - 1, k - 1]] - oracle).abs() < 1e-12, "({j},{k})");
            }
        }
    }

    #[test]
    fn rejects_undersized_grid() {
        let g = GridSpec::new(8, 1.0).unwrap();
        assert!(PaddedGrid::new(g, 7).is_err());
        assert!(PaddedGrid::new(g, 16).unwrap().nodes() >= 16);
    }
}
