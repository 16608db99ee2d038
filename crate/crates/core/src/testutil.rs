//! Independent quadrature oracles shared by unit tests.

use std::f64::consts::PI;

use crate::spectral::ModalField;

/// Gauss-Legendre nodes and weights on [0, side] via Newton on P_n.
pub fn gauss_legendre(n: usize, side: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * side * (1.0 - t);
        w[i] = side / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

pub fn eval(z: &ModalField, x: f64, y: f64) -> f64 {
    let mut acc = 0.0;
    for ((a, b), &c) in z.coeff.indexed_iter() {
        acc += c * z.grid.basis(a + 1, b + 1, x, y);
    }
    acc
}

pub fn quad2(n: usize, side: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    let (x, w) = gauss_legendre(n, side);
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += w[i] * w[j] * f(x[i], x[j]);
        }
    }
    acc
}

