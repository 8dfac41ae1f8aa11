//! ILU(0)-preconditioned BiCGSTAB.

use super::{dot, norm2, SolveError, SparseSystem};

/// Incomplete LU factors on the sparsity pattern of `A`.
struct Ilu0 {
    values: Vec<f64>,
}

impl Ilu0 {
    fn new(a: &SparseSystem) -> Result<Self, SolveError> {
        let s = &a.structure;
        let n = a.dim();
        let mut lu = a.values.clone();
        // Position of column j in the current row, or usize::MAX.
        let mut where_col = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (s.row_ptr[i], s.row_ptr[i + 1]);
            for p in start..end {
                where_col[s.col_idx[p]] = p;
            }
            for p in start..s.diag[i] {
                let k = s.col_idx[p];
                let l = lu[p] / lu[s.diag[k]];
                lu[p] = l;
                for q in s.diag[k] + 1..s.row_ptr[k + 1] {
                    let w = where_col[s.col_idx[q]];
                    if w != usize::MAX {
                        lu[w] -= l * lu[q];
                    }
                }
            }
            let pivot = lu[s.diag[i]];
            if !(pivot.abs() > 0.0 && pivot.is_finite()) {
                return Err(SolveError::Singular { row: i, pivot });
            }
            for p in start..end {
                where_col[s.col_idx[p]] = usize::MAX;
            }
        }
        Ok(Ilu0 { values: lu })
    }

    fn apply(&self, a: &SparseSystem, r: &[f64], z: &mut [f64]) {
        let s = &a.structure;
        let n = a.dim();
        for i in 0..n {
            let mut v = r[i];
            for p in s.row_ptr[i]..s.diag[i] {
                v -= self.values[p] * z[s.col_idx[p]];
            }
            z[i] = v;
        }
        for i in (0..n).rev() {
            let mut v = z[i];
            for p in s.diag[i] + 1..s.row_ptr[i + 1] {
                v -= self.values[p] * z[s.col_idx[p]];
            }
            z[i] = v / self.values[s.diag[i]];
        }
    }
}

const MAX_ITERATIONS: usize = 2000;

/// Right-preconditioned BiCGSTAB; stops once the true residual norm
/// is at most `target`. Otherwise returns the last iterate and its residual.
pub(crate) fn bicgstab(
    a: &SparseSystem,
    b: &[f64],
    guess: Option<&[f64]>,
    target: f64,
) -> Result<(Vec<f64>, f64), SolveError> {
    let n = a.dim();
    let ilu = Ilu0::new(a)?;
    let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = vec![0.0; n];
    let mut ax = vec![0.0; n];
    let (mut p, mut v, mut s, mut t) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut phat, mut shat) = (vec![0.0; n], vec![0.0; n]);
    let mut residual = f64::INFINITY;

    // A few restarts guard against breakdown of the shadow residual.
    for _restart in 0..4 {
        a.mul_vec_into(&x, &mut ax);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        residual = norm2(&r);
        if residual <= target {
            return Ok((x, residual));
        }
        let r0 = r.clone();
        let (mut rho_old, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        p.iter_mut().for_each(|e| *e = 0.0);
        v.iter_mut().for_each(|e| *e = 0.0);
        for _ in 0..MAX_ITERATIONS {
            let rho = dot(&r0, &r);
            if rho == 0.0 || !rho.is_finite() {
                break;
            }
            let beta = (rho / rho_old) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            ilu.apply(a, &p, &mut phat);
            a.mul_vec_into(&phat, &mut v);
            let r0v = dot(&r0, &v);
            if r0v == 0.0 || !r0v.is_finite() {
                break;
            }
            alpha = rho / r0v;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm2(&s) <= target {
                for i in 0..n {
                    x[i] += alpha * phat[i];
                }
                break;
            }
            ilu.apply(a, &s, &mut shat);
            a.mul_vec_into(&shat, &mut t);
            let tt = dot(&t, &t);
            if tt == 0.0 || !tt.is_finite() {
                break;
            }
            omega = dot(&t, &s) / tt;
            for i in 0..n {
                x[i] += alpha * phat[i] + omega * shat[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm2(&r) <= target || omega == 0.0 {
                break;
            }
            rho_old = rho;
        }
        residual = a.residual_norm(&x, b);
        if residual <= target {
            return Ok((x, residual));
        }
    }
    Ok((x, residual))
}
