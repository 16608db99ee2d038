//! Matrix-free Krylov solvers on flat coefficient vectors.

#[derive(Clone, Debug, PartialEq)]
pub struct KrylovOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final residual norm relative to `||b||`.
    pub relative_residual: f64,
    pub converged: bool,
    /// Conjugate gradients met `p^T A p <= 0`.
    pub negative_curvature: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Restarted GMRES with right preconditioning, so the monitored residual is the
/// true residual of `A x = b`. Starts from zero.
pub fn gmres(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    tol: f64,
    max_iter: usize,
    restart: usize,
) -> KrylovOutcome {
    let n = b.len();
    let restart = restart.max(1).min(n.max(1));
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return KrylovOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
            negative_curvature: false,
        };
    }
    let mut r = b.to_vec();
    let mut tmp = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut iterations = 0;
    let mut rel = 1.0;

    while iterations < max_iter {
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= tol {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut gvec = vec![0.0; restart + 1];
        gvec[0] = beta;
        let mut k_used = 0;

        for k in 0..restart {
            precond(&basis[k], &mut z);
            apply(&z, &mut tmp);
            // modified Gram-Schmidt
            for (i, q) in basis.iter().enumerate() {
                let hik = dot(&tmp, q);
                h[i][k] = hik;
                tmp.iter_mut().zip(q).for_each(|(t, qv)| *t -= hik * qv);
            }
            let hn = norm(&tmp);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            gvec[k + 1] = -sn[k] * gvec[k];
            gvec[k] *= cs[k];
            iterations += 1;
            k_used = k + 1;
            rel = gvec[k + 1].abs() / bnorm;
            if rel <= tol || iterations >= max_iter || hn == 0.0 {
                break;
            }
            basis.push(tmp.iter().map(|v| v / hn).collect());
        }

        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = gvec[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        let mut update = vec![0.0; n];
        for (q, &yi) in basis.iter().zip(&y) {
            update.iter_mut().zip(q).for_each(|(u, qv)| *u += yi * qv);
        }
        precond(&update, &mut z);
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);

        apply(&x, &mut tmp);
        r.iter_mut().zip(b.iter().zip(&tmp)).for_each(|(ri, (bi, ti))| *ri = bi - ti);
        rel = norm(&r) / bnorm;
        if rel <= tol {
            break;
        }
    }
    KrylovOutcome {
        x,
        iterations,
        relative_residual: rel,
        converged: rel <= tol,
        negative_curvature: false,
    }
}

/// Preconditioned conjugate gradients from zero. Stops early (not converged) on
/// negative curvature so callers can fall back to GMRES.
pub fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> KrylovOutcome {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    let mut out = KrylovOutcome {
        x: Vec::new(),
        iterations: 0,
        relative_residual: 0.0,
        converged: true,
        negative_curvature: false,
    };
    if bnorm == 0.0 {
        out.x = x;
        return out;
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    let mut it = 0;
    while it < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            out.negative_curvature = true;
            break;
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        it += 1;
        rel = norm(&r) / bnorm;
        if rel <= tol {
            break;
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    out.x = x;
    out.iterations = it;
    out.relative_residual = rel;
    out.converged = rel <= tol && !out.negative_curvature;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64, spd: bool) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        if spd {
            &m * m.transpose() + DMatrix::identity(n, n) * (n as f64)
        } else {
            m + DMatrix::identity(n, n) * 4.0
        }
    }

    fn matvec(a: &DMatrix<f64>) -> impl FnMut(&[f64], &mut [f64]) + '_ {
        move |x, y| {
            let r = a * DVector::from_column_slice(x);
            y.copy_from_slice(r.as_slice());
        }
    }

    #[test]
    fn gmres_matches_dense_solve() {
        let n = 40;
        let a = random_matrix(n, 1, false);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let want = a.clone().lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let diag: Vec<f64> = (0..n).map(|i| 1.0 / a[(i, i)]).collect();
        let out = gmres(
            matvec(&a),
            |x, y| y.iter_mut().zip(x.iter().zip(&diag)).for_each(|(yi, (xi, d))| *yi = xi * d),
            &b,
            1e-12,
            500,
            15,
        );
        assert!(out.converged);
        let err = out.x.iter().zip(want.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn pcg_matches_dense_solve_and_flags_indefinite() {
        let n = 30;
        let a = random_matrix(n, 2, true);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let want = a.clone().cholesky().unwrap().solve(&DVector::from_column_slice(&b));
        let out = pcg(matvec(&a), |x, y| y.copy_from_slice(x), &b, 1e-13, 200);
        assert!(out.converged);
        let err = out.x.iter().zip(want.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9);

        let neg = -a;
        let out = pcg(matvec(&neg), |x, y| y.copy_from_slice(x), &b, 1e-13, 200);
        assert!(out.negative_curvature && !out.converged);
    }

    #[test]
    fn zero_rhs() {
        let out = gmres(|x, y| y.copy_from_slice(x), |x, y| y.copy_from_slice(x), &[0.0; 4], 1e-10, 10, 5);
        assert!(out.converged && out.x.iter().all(|&v| v == 0.0));
    }
}
