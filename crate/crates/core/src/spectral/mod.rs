//! The operator `A = -Laplacian` with `u = Lap u = 0` on the square `(0, side)^2`,
//! realized exactly in the L2-orthonormal sine eigenbasis
//!
//! ```text
//! e_jk(x, y) = (2 / side) sin(j pi x / side) sin(k pi y / side),
//! A e_jk = ((j pi / side)^2 + (k pi / side)^2) e_jk.
//! ```
//!
//! Fractional powers, Galerkin projectors and the phase-space norms are all
//! diagonal in this basis. Collocation uses the `N x N` interior nodes of the
//! type-I sine transform, so forward and inverse transforms are exact inverses.

mod padded;
pub mod snapshot;
pub mod trig;

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use padded::{PaddedGrid, Parity};
use trig::Trig;

/// Square domain `(0, side)^2` resolved with `n_modes` sine modes per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_modes: usize,
    pub side: f64,
}

impl GridSpec {
    pub fn new(n_modes: usize, side: f64) -> Result<Self> {
        if n_modes < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_modes must be at least 2, got {n_modes}"
            )));
        }
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "side must be positive and finite, got {side}"
            )));
        }
        Ok(Self { n_modes, side })
    }

    /// Eigenvalue of `A` for mode `(j, k)`, 1-based.
    pub fn eigenvalue(&self, j: usize, k: usize) -> Result<f64> {
        for (what, value) in [("j", j), ("k", k)] {
            if value == 0 || value > self.n_modes {
                return Err(Error::Index {
                    what,
                    value,
                    lo: 1,
                    hi: self.n_modes,
                });
            }
        }
        Ok(self.eig(j, k))
    }

    #[inline]
    pub(crate) fn eig(&self, j: usize, k: usize) -> f64 {
        let w = PI / self.side;
        let (a, b) = (j as f64 * w, k as f64 * w);
        a * a + b * b
    }

    /// Largest retained eigenvalue, `2 (N pi / side)^2`.
    pub fn lambda_max(&self) -> f64 {
        self.eig(self.n_modes, self.n_modes)
    }

    /// First eigenvalue `lambda_11`.
    pub fn lambda_1(&self) -> f64 {
        self.eig(1, 1)
    }

    /// Eigenvalues laid out like the coefficient array (index `[j-1, k-1]`).
    pub fn eigenvalues(&self) -> Array2<f64> {
        let n = self.n_modes;
        Array2::from_shape_fn((n, n), |(a, b)| self.eig(a + 1, b + 1))
    }

    /// Interior collocation coordinate `p * side / (N + 1)`, 1-based.
    pub fn node(&self, p: usize) -> f64 {
        p as f64 * self.side / (self.n_modes + 1) as f64
    }

    /// Pointwise value of the basis function `e_jk`.
    pub fn basis(&self, j: usize, k: usize, x: f64, y: f64) -> f64 {
        let w = PI / self.side;
        2.0 / self.side * (j as f64 * w * x).sin() * (k as f64 * w * y).sin()
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::Dimension(format!(
                "grid mismatch: (N={}, side={}) vs (N={}, side={})",
                self.n_modes, self.side, other.n_modes, other.side
            )));
        }
        Ok(())
    }
}

/// Coefficients against the orthonormal eigenbasis; `coeff[[j-1, k-1]]` multiplies `e_jk`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalField {
    pub grid: GridSpec,
    pub coeff: Array2<f64>,
}

/// Samples on the interior nodes; `values[[p-1, q-1]]` is the value at `(x_p, y_q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalField {
    pub grid: GridSpec,
    pub values: Array2<f64>,
}

impl ModalField {
    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.n_modes;
        Self {
            grid,
            coeff: Array2::zeros((n, n)),
        }
    }

    pub fn from_coeff(grid: GridSpec, coeff: Array2<f64>) -> Result<Self> {
        let n = grid.n_modes;
        if coeff.dim() != (n, n) {
            return Err(Error::Dimension(format!(
                "coefficient array has shape {:?}, expected ({n}, {n})",
                coeff.dim()
            )));
        }
        Ok(Self { grid, coeff })
    }

    /// `amp * e_jk`.
    pub fn single_mode(grid: GridSpec, j: usize, k: usize, amp: f64) -> Result<Self> {
        grid.eigenvalue(j, k)?;
        let mut z = Self::zeros(grid);
        z.coeff[[j - 1, k - 1]] = amp;
        Ok(z)
    }

    pub fn n_modes(&self) -> usize {
        self.grid.n_modes
    }

    pub fn is_finite(&self) -> bool {
        self.coeff.iter().all(|c| c.is_finite())
    }

    /// Modal (= L2) inner product.
    pub fn dot(&self, other: &ModalField) -> f64 {
        Zip::from(&self.coeff)
            .and(&other.coeff)
            .fold(0.0, |acc, &a, &b| acc + a * b)
    }

    pub fn scaled(&self, c: f64) -> ModalField {
        ModalField {
            grid: self.grid,
            coeff: &self.coeff * c,
        }
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &ModalField) -> ModalField {
        let mut coeff = self.coeff.clone();
        coeff.scaled_add(c, &other.coeff);
        ModalField {
            grid: self.grid,
            coeff,
        }
    }

    /// Embeds into (or truncates to) a grid with the same side and `n` modes.
    pub fn resized(&self, n: usize) -> Result<ModalField> {
        let grid = GridSpec::new(n, self.grid.side)?;
        let mut out = ModalField::zeros(grid);
        let m = n.min(self.n_modes());
        out.coeff
            .slice_mut(ndarray::s![..m, ..m])
            .assign(&self.coeff.slice(ndarray::s![..m, ..m]));
        Ok(out)
    }

    /// Largest mode index carrying a nonzero coefficient (0 for the zero field).
    pub fn band(&self) -> usize {
        let mut band = 0;
        for ((a, b), &c) in self.coeff.indexed_iter() {
            if c != 0.0 {
                band = band.max(a.max(b) + 1);
            }
        }
        band
    }
}

impl NodalField {
    pub fn from_values(grid: GridSpec, values: Array2<f64>) -> Result<Self> {
        let n = grid.n_modes;
        if values.dim() != (n, n) {
            return Err(Error::Dimension(format!(
                "nodal array has shape {:?}, expected ({n}, {n})",
                values.dim()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples a function on the interior nodes.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let n = grid.n_modes;
        let values = Array2::from_shape_fn((n, n), |(p, q)| f(grid.node(p + 1), grid.node(q + 1)));
        Self { grid, values }
    }
}

/// Eigenvalue of mode `(j, k)`.
pub fn eigenvalue(grid: &GridSpec, j: usize, k: usize) -> Result<f64> {
    grid.eigenvalue(j, k)
}

pub fn lambda_max(grid: &GridSpec) -> f64 {
    grid.lambda_max()
}

/// Discrete sine analysis onto the orthonormal basis (fast DST-I along both axes).
pub fn forward_transform(field: &NodalField) -> Result<ModalField> {
    let n = field.grid.n_modes;
    if field.values.dim() != (n, n) {
        return Err(Error::Dimension(format!(
            "nodal array has shape {:?}, expected ({n}, {n})",
            field.values.dim()
        )));
    }
    let plan = trig::plan(n);
    let h = field.grid.side / (n + 1) as f64;
    let sums = plan.sum_2d(field.values.view(), Trig::Sin, Trig::Sin, n, n);
    Ok(ModalField {
        grid: field.grid,
        coeff: sums * (2.0 / field.grid.side * h * h),
    })
}

/// Evaluates the sine series on the interior nodes.
pub fn inverse_transform(field: &ModalField) -> NodalField {
    let n = field.n_modes();
    let plan = trig::plan(n);
    let sums = plan.sum_2d(field.coeff.view(), Trig::Sin, Trig::Sin, n, n);
    NodalField {
        grid: field.grid,
        values: sums * (2.0 / field.grid.side),
    }
}

/// `A^s z`.
pub fn apply_power(z: &ModalField, s: f64) -> ModalField {
    if s == 0.0 {
        return z.clone();
    }
    let grid = z.grid;
    let mut coeff = z.coeff.clone();
    for ((a, b), c) in coeff.indexed_iter_mut() {
        *c *= grid.eig(a + 1, b + 1).powf(s);
    }
    ModalField { grid, coeff }
}

/// Galerkin projector onto modes with `j, k <= m`.
pub fn project(z: &ModalField, m: usize) -> Result<ModalField> {
    let n = z.n_modes();
    if m == 0 || m > n {
        return Err(Error::Index {
            what: "m",
            value: m,
            lo: 1,
            hi: n,
        });
    }
    let mut out = z.clone();
    for ((a, b), c) in out.coeff.indexed_iter_mut() {
        if a >= m || b >= m {
            *c = 0.0;
        }
    }
    Ok(out)
}

/// `||A^s z||`.
pub fn norm_hs(z: &ModalField, s: f64) -> f64 {
    let grid = z.grid;
    let mut acc = 0.0;
    for ((a, b), &c) in z.coeff.indexed_iter() {
        if c != 0.0 {
            let w = if s == 0.0 { 1.0 } else { grid.eig(a + 1, b + 1).powf(2.0 * s) };
            acc += w * c * c;
        }
    }
    acc.sqrt()
}

/// Graph norm of the phase space `V_s`:
/// `||(u, v)||_s^2 = ||A^{(s+1)/2} u||^2 + ||A^{(s-1)/2} v||^2`.
pub fn norm_pair(u: &ModalField, v: &ModalField, s: f64) -> Result<f64> {
    u.grid.check_same(&v.grid)?;
    let a = norm_hs(u, 0.5 * (s + 1.0));
    let b = norm_hs(v, 0.5 * (s - 1.0));
    Ok((a * a + b * b).sqrt())
}

/// Deterministic pseudo-random field on modes `j, k <= band`, scaled so that
/// `||(u, 0)||_0 = ||A^{1/2} u|| = amplitude`.
pub fn random_band_limited(grid: GridSpec, band: usize, amplitude: f64, seed: u64) -> Result<ModalField> {
    if band == 0 || band > grid.n_modes {
        return Err(Error::Index {
            what: "band",
            value: band,
            lo: 1,
            hi: grid.n_modes,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = ModalField::zeros(grid);
    for a in 0..band {
        for b in 0..band {
            z.coeff[[a, b]] = rng.gen_range(-1.0..1.0);
        }
    }
    let norm = norm_hs(&z, 0.5);
    if norm == 0.0 {
        return Ok(z);
    }
    Ok(z.scaled(amplitude / norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pi_grid(n: usize) -> GridSpec {
        GridSpec::new(n, PI).unwrap()
    }

    #[test]
    fn eigenvalues_closed_form() {
        let g = pi_grid(4);
        assert_relative_eq!(g.eigenvalue(1, 1).unwrap(), 2.0, epsilon = 1e-14);
        assert_relative_eq!(g.eigenvalue(2, 3).unwrap(), 13.0, epsilon = 1e-13);
        let g2 = GridSpec::new(8, 2.0 * PI).unwrap();
        assert_relative_eq!(g2.eigenvalue(1, 1).unwrap(), 0.5, epsilon = 1e-14);
        assert!(matches!(g.eigenvalue(0, 1), Err(Error::Index { .. })));
        assert!(matches!(g.eigenvalue(1, 5), Err(Error::Index { .. })));
    }

    #[test]
    fn lambda_max_values() {
        assert_relative_eq!(lambda_max(&pi_grid(4)), 32.0, epsilon = 1e-12);
        assert_relative_eq!(lambda_max(&GridSpec::new(8, 2.0 * PI).unwrap()), 32.0, epsilon = 1e-12);
        assert_relative_eq!(pi_grid(2).lambda_1(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(GridSpec::new(1, 1.0).is_err());
        assert!(GridSpec::new(4, 0.0).is_err());
        assert!(GridSpec::new(4, f64::NAN).is_err());
    }

    #[test]
    fn eigenvalues_monotone_along_axes() {
        let g = GridSpec::new(9, 1.7).unwrap();
        let e = g.eigenvalues();
        for a in 0..9 {
            for b in 0..8 {
                assert!(e[[a, b + 1]] >= e[[a, b]]);
                assert!(e[[b + 1, a]] >= e[[b, a]]);
            }
        }
        assert!(e.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn forward_of_basis_samples() {
        let g = GridSpec::new(7, 1.3).unwrap();
        let nodal = NodalField::from_fn(g, |x, y| g.basis(1, 1, x, y));
        let z = forward_transform(&nodal).unwrap();
        assert_relative_eq!(z.coeff[[0, 0]], 1.0, epsilon = 1e-12);
        for ((a, b), &c) in z.coeff.indexed_iter() {
            if (a, b) != (0, 0) {
                assert!(c.abs() <= 1e-12);
            }
        }
        let zero = forward_transform(&NodalField::from_fn(g, |_, _| 0.0)).unwrap();
        assert!(zero.coeff.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let g = pi_grid(4);
        let bad = NodalField {
            grid: g,
            values: Array2::zeros((4, 5)),
        };
        assert!(matches!(forward_transform(&bad), Err(Error::Dimension(_))));
        assert!(NodalField::from_values(g, Array2::zeros((3, 3))).is_err());
        assert!(ModalField::from_coeff(g, Array2::zeros((3, 3))).is_err());
    }

    #[test]
    fn inverse_of_unit_mode_and_linearity() {
        let g = GridSpec::new(6, 2.5).unwrap();
        let e11 = ModalField::single_mode(g, 1, 1, 1.0).unwrap();
        let nodal = inverse_transform(&e11);
        for p in 1..=6 {
            for q in 1..=6 {
                let exact = g.basis(1, 1, g.node(p), g.node(q));
                assert!((nodal.values[[p - 1, q - 1]] - exact).abs() < 1e-13);
            }
        }
        assert!(inverse_transform(&ModalField::zeros(g)).values.iter().all(|&v| v == 0.0));

        let z1 = random_band_limited(g, 6, 1.0, 1).unwrap();
        let z2 = random_band_limited(g, 4, 2.0, 2).unwrap();
        let combo = z1.scaled(0.7).axpy(-1.9, &z2);
        let lhs = inverse_transform(&combo).values;
        let rhs = inverse_transform(&z1).values * 0.7 - inverse_transform(&z2).values * 1.9;
        let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn projection_idempotence_of_forward() {
        let g = pi_grid(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = NodalField::from_fn(g, |_, _| rng.gen_range(-1.0..1.0));
        let once = forward_transform(&w).unwrap();
        let twice = forward_transform(&inverse_transform(&once)).unwrap();
        for (a, b) in once.coeff.iter().zip(twice.coeff.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn power_examples() {
        let g = pi_grid(4);
        let z = random_band_limited(g, 4, 1.0, 9).unwrap();
        assert_eq!(apply_power(&z, 0.0), z);
        let m23 = ModalField::single_mode(g, 2, 3, 5.0).unwrap();
        assert_relative_eq!(apply_power(&m23, -1.0).coeff[[1, 2]], 5.0 / 13.0, epsilon = 1e-14);
        let back = apply_power(&apply_power(&z, 0.5), -0.5);
        for (a, b) in back.coeff.iter().zip(z.coeff.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn projector_examples() {
        let g = pi_grid(6);
        let z = random_band_limited(g, 6, 1.0, 4).unwrap();
        assert_eq!(project(&z, 6).unwrap(), z);
        let p3 = project(&z, 3).unwrap();
        assert_eq!(project(&p3, 3).unwrap(), p3);
        let mut prev = f64::INFINITY;
        for m in 1..=6 {
            let r = norm_hs(&z.axpy(-1.0, &project(&z, m).unwrap()), 0.0);
            assert!(r <= prev);
            prev = r;
        }
        assert!(project(&z, 0).is_err());
        assert!(project(&z, 7).is_err());
    }

    #[test]
    fn norm_examples() {
        let g = pi_grid(4);
        let e11 = ModalField::single_mode(g, 1, 1, 1.0).unwrap();
        let zero = ModalField::zeros(g);
        assert_relative_eq!(norm_hs(&e11, 0.5), 2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(norm_hs(&e11, 0.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(norm_pair(&e11, &zero, 0.0).unwrap(), 2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(norm_pair(&zero, &e11, 0.0).unwrap(), 0.5f64.sqrt(), epsilon = 1e-14);
        assert_eq!(norm_pair(&zero, &zero, 1.3).unwrap(), 0.0);
        let other = ModalField::zeros(pi_grid(5));
        assert!(norm_pair(&e11, &other, 0.0).is_err());
    }

    #[test]
    fn random_field_contract() {
        let g = pi_grid(8);
        let b1 = random_band_limited(g, 1, 0.3, 11).unwrap();
        assert_eq!(b1.band(), 1);
        assert_relative_eq!(norm_pair(&b1, &ModalField::zeros(g), 0.0).unwrap(), 0.3, epsilon = 1e-14);
        let zero = random_band_limited(g, 5, 0.0, 11).unwrap();
        assert!(zero.coeff.iter().all(|&c| c == 0.0));
        let a = random_band_limited(g, 5, 1.0, 42).unwrap();
        let b = random_band_limited(g, 5, 1.0, 42).unwrap();
        assert!(a.coeff.iter().zip(b.coeff.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.band(), 5);
        assert!(random_band_limited(g, 9, 1.0, 0).is_err());
    }

    #[test]
    fn resize_embeds_with_zeros() {
        let g = pi_grid(4);
        let z = random_band_limited(g, 4, 1.0, 5).unwrap();
        let big = z.resized(8).unwrap();
        assert_eq!(big.band(), 4);
        assert_eq!(big.resized(4).unwrap(), z);
    }
}
