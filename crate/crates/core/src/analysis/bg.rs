use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::SCHEMA_VERSION;
use crate::error::{Error, Result};
use crate::spectral::{norm_hs, random_band_limited, GridSpec, ModalField, PaddedGrid};

/// Floor on `||z||_V` inside the logarithm.
const EPS0: f64 = 1e-300;

/// Grid maxima refined by Newton's method.
const CANDIDATES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BgRecord {
    pub kind: String,
    pub sup: f64,
    pub norm_v: f64,
    pub norm_da: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BgReport {
    pub schema: u32,
    pub n_modes: usize,
    pub side: f64,
    pub records: Vec<BgRecord>,
    pub max_ratio: f64,
    /// Largest ratio over the flat-spectrum fields alone.
    pub max_ratio_flat: f64,
}

/// `||z||_inf` over the square: the largest value on a grid with at least `4N`
/// nodes per axis, polished by Newton's method at the best few nodes.
pub fn sup_norm(z: &ModalField) -> f64 {
    let grid = z.grid;
    let pad = PaddedGrid::new(grid, 4 * grid.n_modes).expect("4N >= N");
    let vals = pad.values(z);
    let mut nodes: Vec<((usize, usize), f64)> = vals.indexed_iter().map(|(i, v)| (i, v.abs())).collect();
    let k = CANDIDATES.min(nodes.len());
    if k == 0 {
        return 0.0;
    }
    nodes.select_nth_unstable_by(k - 1, |a, b| b.1.total_cmp(&a.1));
    let mut best = nodes[..k].iter().map(|n| n.1).fold(0.0, f64::max);
    for &((p, q), _) in &nodes[..k] {
        if let Some(v) = polish(z, pad.node(p + 1), pad.node(q + 1)) {
            best = best.max(v);
        }
    }
    best
}

/// Values of `sin`, its first and second derivative for modes `1..=n` at `x`.
fn sines(n: usize, w: f64, x: f64) -> [Vec<f64>; 3] {
    let mut s = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut dd = Vec::with_capacity(n);
    for j in 1..=n {
        let k = j as f64 * w;
        let (sn, cs) = (k * x).sin_cos();
        s.push(sn);
        d.push(k * cs);
        dd.push(-k * k * sn);
    }
    [s, d, dd]
}

fn bilinear(c: &Array2<f64>, a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        let row: f64 = c.row(i).iter().zip(b).map(|(x, y)| x * y).sum();
        acc += ai * row;
    }
    acc
}

/// Newton's method on the gradient of `z` from `(x, y)`; `|z|` at the critical
/// point if the iteration stays inside the square.
fn polish(z: &ModalField, mut x: f64, mut y: f64) -> Option<f64> {
    let grid = z.grid;
    let n = grid.n_modes;
    let w = PI / grid.side;
    let scale = 2.0 / grid.side;
    for _ in 0..30 {
        let [sx, dx, ddx] = sines(n, w, x);
        let [sy, dy, ddy] = sines(n, w, y);
        let grad = Vector2::new(bilinear(&z.coeff, &dx, &sy), bilinear(&z.coeff, &sx, &dy));
        let hess = Matrix2::new(
            bilinear(&z.coeff, &ddx, &sy),
            bilinear(&z.coeff, &dx, &dy),
            bilinear(&z.coeff, &dx, &dy),
            bilinear(&z.coeff, &sx, &ddy),
        );
        let step = hess.lu().solve(&grad)?;
        x -= step[0];
        y -= step[1];
        if !(x > 0.0 && x < grid.side && y > 0.0 && y < grid.side) {
            return None;
        }
        if step.norm() <= 1e-14 * grid.side {
            break;
        }
    }
    let [sx, ..] = sines(n, w, x);
    let [sy, ..] = sines(n, w, y);
    Some((scale * bilinear(&z.coeff, &sx, &sy)).abs())
}

/// Scores one field by `||z||_inf / (||z||_V (1 + log^{1/2}(1 + ||z||_{D(A)} / max(||z||_V, eps))))`.
pub fn bg_record(z: &ModalField, kind: impl Into<String>) -> BgRecord {
    let sup = sup_norm(z);
    let norm_v = norm_hs(z, 0.5);
    let norm_da = norm_hs(z, 1.0);
    let ratio = if norm_v > 0.0 {
        sup / (norm_v * (1.0 + (1.0 + norm_da / norm_v.max(EPS0)).ln().sqrt()))
    } else {
        0.0
    };
    BgRecord {
        kind: kind.into(),
        sup,
        norm_v,
        norm_da,
        ratio,
    }
}

/// Flat-spectrum field `coeff_jk = 1 / lambda_jk` on modes `j, k <= band`.
pub fn flat_spectrum(grid: GridSpec, band: usize) -> ModalField {
    let eig = grid.eigenvalues();
    let coeff = Array2::from_shape_fn((grid.n_modes, grid.n_modes), |(a, b)| {
        if a < band && b < band {
            1.0 / eig[[a, b]]
        } else {
            0.0
        }
    });
    ModalField { grid, coeff }
}

/// Scans `n_samples` random band-limited fields (random band, seeded) and the
/// flat-spectrum fields truncated at `N/4`, `N/2` and `N`.
pub fn brezis_gallouet_scan(grid: GridSpec, n_samples: usize, seed: u64) -> Result<BgReport> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fields = Vec::new();
    for _ in 0..n_samples {
        let band = rng.gen_range(1..=grid.n_modes);
        let z = random_band_limited(grid, band, 1.0, rng.gen())?;
        fields.push((format!("random_band_{band}"), z));
    }
    let mut bands = vec![(grid.n_modes / 4).max(1), (grid.n_modes / 2).max(1), grid.n_modes];
    bands.dedup();
    for band in bands {
        fields.push((format!("flat_band_{band}"), flat_spectrum(grid, band)));
    }
    let records: Vec<BgRecord> = {
        use rayon::prelude::*;
        fields.par_iter().map(|(kind, z)| bg_record(z, kind.clone())).collect()
    };
    let max_ratio = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let max_ratio_flat = records
        .iter()
        .filter(|r| r.kind.starts_with("flat"))
        .map(|r| r.ratio)
        .fold(0.0, f64::max);
    Ok(BgReport {
        schema: SCHEMA_VERSION,
        n_modes: grid.n_modes,
        side: grid.side,
        records,
        max_ratio,
        max_ratio_flat,
    })
}
