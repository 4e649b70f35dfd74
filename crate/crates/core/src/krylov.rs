//! Preconditioned conjugate gradients on flat vectors.

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` for symmetric positive definite `A`.
///
/// Fails with [`Error::Numerical`] when a non-positive curvature direction
/// shows up, which callers use to detect an indefinite shift.
pub(crate) fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, CgStats)> {
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; b.len()],
            CgStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; b.len()]);
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    for it in 0..max_iter {
        if rel < tol {
            return Ok((
                x,
                CgStats {
                    iterations: it,
                    relative_residual: rel,
                },
            ));
        }
        let ap = apply(&p);
        let curv = dot(&p, &ap);
        if !(curv > 0.0) {
            return Err(Error::Numerical(format!(
                "conjugate gradients met non-positive curvature {curv:e}"
            )));
        }
        let a = rz / curv;
        for i in 0..x.len() {
            x[i] += a * p[i];
            r[i] -= a * ap[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    if rel < tol {
        return Ok((
            x,
            CgStats {
                iterations: max_iter,
                relative_residual: rel,
            },
        ));
    }
    Err(Error::NonConvergence {
        method: "conjugate gradients",
        iterations: max_iter,
        residual: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_tridiagonal() {
        let n = 50;
        let apply = |v: &[f64]| {
            (0..n)
                .map(|i| {
                    let mut s = 4.0 * v[i];
                    if i > 0 {
                        s -= v[i - 1];
                    }
                    if i + 1 < n {
                        s -= v[i + 1];
                    }
                    s
                })
                .collect::<Vec<f64>>()
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (x, st) = pcg(apply, |r| r.to_vec(), &b, None, 1e-12, 200).unwrap();
        let r: f64 = apply(&x).iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(r < 1e-10 && st.iterations < 60);
    }

    #[test]
    fn flags_indefinite() {
        let apply = |v: &[f64]| vec![v[0], -v[1]];
        assert!(pcg(apply, |r| r.to_vec(), &[1.0, 1.0], None, 1e-12, 10).is_err());
    }
}
