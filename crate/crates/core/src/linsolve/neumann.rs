//! Zero-mean Neumann Poisson problems and the first nonzero eigenvalue of
//! the finite volume Laplacian.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dot, norm2, Factorized, MeshPattern, SolveError, SparseSystem};
use crate::mesh::{DiscreteField, Mesh, MeshId};

/// Solver for `S z = b`, `sum_K m(K) z_K = 0`, with `S` the TPFA stiffness
/// matrix (`S_KK = sum tau`, `S_KL = -tau`).
///
/// The constraint is built into the operator: with `q = m / |m|`, the
/// matrix `A = S + rho q q^T` is nonsingular and, for `sum b = 0`, its
/// solution satisfies both `S z = b` and `q^T z = 0`. `A` is inverted by a
/// rank-two Woodbury update of the banded factorization of
/// `S + rho e_0 e_0^T`.
#[derive(Debug, Clone)]
pub struct NeumannSolver {
    mesh: MeshId,
    volumes: Vec<f64>,
    stiffness: SparseSystem,
    base: Factorized,
    rho: f64,
    q: Vec<f64>,
    /// `B^{-1} [q, e_0]`.
    z: [Vec<f64>; 2],
    /// Inverse of the 2x2 capacitance matrix.
    cap_inv: [[f64; 2]; 2],
}

impl NeumannSolver {
    pub fn new(mesh: &Mesh) -> Result<Self, SolveError> {
        if !mesh.is_connected() {
            return Err(SolveError::Disconnected);
        }
        let pattern = MeshPattern::new(mesh);
        let stiffness = pattern.stiffness();
        let n = stiffness.dim();
        let rho = stiffness.diagonal().iter().sum::<f64>() / n as f64;
        let rho = if rho > 0.0 { rho } else { 1.0 };
        let mut values = stiffness.values().to_vec();
        values[pattern.diag_slot(0)] += rho;
        let base = Factorized::new(pattern.build(values)?)?;

        let volumes = mesh.volumes().to_vec();
        let mnorm = norm2(&volumes);
        let q: Vec<f64> = volumes.iter().map(|m| m / mnorm).collect();
        let mut e0 = vec![0.0; n];
        e0[0] = 1.0;
        let z = [base.solve_unchecked(&q), base.solve_unchecked(&e0)];
        // Capacitance C^{-1} + U^T B^{-1} U with C = diag(rho, -rho).
        let cap = [
            [1.0 / rho + dot(&q, &z[0]), dot(&q, &z[1])],
            [z[0][0], -1.0 / rho + z[1][0]],
        ];
        let det = cap[0][0] * cap[1][1] - cap[0][1] * cap[1][0];
        if !(det.abs() > 0.0 && det.is_finite()) {
            return Err(SolveError::Singular { row: 0, pivot: det });
        }
        let cap_inv = [
            [cap[1][1] / det, -cap[0][1] / det],
            [-cap[1][0] / det, cap[0][0] / det],
        ];
        Ok(NeumannSolver {
            mesh: mesh.id(),
            volumes,
            stiffness,
            base,
            rho,
            q,
            z,
            cap_inv,
        })
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh
    }

    pub fn stiffness(&self) -> &SparseSystem {
        &self.stiffness
    }

    fn apply_constrained(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.stiffness.mul_vec(x);
        let qx = self.rho * dot(&self.q, x);
        for (yi, qi) in y.iter_mut().zip(&self.q) {
            *yi += qx * qi;
        }
        y
    }

    fn woodbury(&self, b: &[f64]) -> Vec<f64> {
        let mut y = self.base.solve_unchecked(b);
        let v = [dot(&self.q, &y), y[0]];
        let c = [
            self.cap_inv[0][0] * v[0] + self.cap_inv[0][1] * v[1],
            self.cap_inv[1][0] * v[0] + self.cap_inv[1][1] * v[1],
        ];
        for i in 0..y.len() {
            y[i] -= self.z[0][i] * c[0] + self.z[1][i] * c[1];
        }
        y
    }

    /// Solves `S z = b` with `sum m z = 0` for a load vector with `sum b = 0`
    /// (up to round-off, which is projected away).
    pub fn solve_load(&self, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        if b.len() != self.volumes.len() {
            return Err(SolveError::DimensionMismatch {
                expected: self.volumes.len(),
                found: b.len(),
            });
        }
        let total: f64 = self.volumes.iter().sum();
        let shift = b.iter().sum::<f64>() / total;
        let b: Vec<f64> = b.iter().zip(&self.volumes).map(|(bi, m)| bi - shift * m).collect();
        let bnorm = norm2(&b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let mut z = self.woodbury(&b);
        for _ in 0..3 {
            let az = self.apply_constrained(&z);
            let r: Vec<f64> = b.iter().zip(&az).map(|(bi, ai)| bi - ai).collect();
            if norm2(&r) <= 1e-14 * bnorm {
                break;
            }
            let dz = self.woodbury(&r);
            for (zi, di) in z.iter_mut().zip(&dz) {
                *zi += di;
            }
        }
        let residual = self.stiffness.residual_norm(&z, &b);
        if residual > 1e-10 * bnorm {
            return Err(SolveError::NotConverged {
                residual,
                target: 1e-10 * bnorm,
            });
        }
        Ok(z)
    }

    /// Solves `-sum_sigma tau D z = m(K) w_K`, `<z> = 0`.
    pub fn solve(&self, rhs: &DiscreteField) -> Result<DiscreteField, SolveError> {
        if rhs.mesh_id() != self.mesh {
            return Err(crate::mesh::MeshError::MeshMismatch.into());
        }
        let w = rhs.values();
        let total: f64 = self.volumes.iter().sum();
        let mean = super::compensated_sum(w.iter().zip(&self.volumes).map(|(a, m)| a * m)) / total;
        let scale = w.iter().zip(&self.volumes).map(|(a, m)| a.abs() * m).sum::<f64>() / total;
        if mean.abs() > 1e-10 * scale {
            return Err(SolveError::NonZeroMean { mean, norm: scale });
        }
        let b: Vec<f64> = w.iter().zip(&self.volumes).map(|(a, m)| a * m).collect();
        let z = self.solve_load(&b)?;
        Ok(DiscreteField::from_parts(self.mesh, z))
    }

    /// First nonzero eigenvalue `lambda` of `S x = lambda M x` (`M` the
    /// diagonal volume matrix), with an eigenvector normalized in the
    /// volume-weighted norm.
    ///
    /// Block inverse iteration with four vectors kept orthogonal to the
    /// constants and a Rayleigh-Ritz step on each sweep, so that multiple
    /// eigenvalues (as on the disk) do not slow convergence down.
    pub fn smallest_nonzero_eigenpair(&self, tol: f64) -> Result<(f64, Vec<f64>), SolveError> {
        let n = self.volumes.len();
        if n < 2 {
            return Err(SolveError::Stagnation {
                iterations: 0,
                residual: f64::INFINITY,
            });
        }
        let p = 4.min(n - 1);
        let m = &self.volumes;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut block: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect())
            .collect();
        orthonormalize(&mut block, m);
        let mut best = f64::INFINITY;
        const MAX_SWEEPS: usize = 500;
        for sweep in 0..MAX_SWEEPS {
            let mut next = Vec::with_capacity(p);
            for x in &block {
                let load: Vec<f64> = x.iter().zip(m).map(|(a, b)| a * b).collect();
                next.push(self.solve_load(&load)?);
            }
            orthonormalize(&mut next, m);
            let sx: Vec<Vec<f64>> = next.iter().map(|x| self.stiffness.mul_vec(x)).collect();
            let t = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&next[i], &sx[j]) + dot(&next[j], &sx[i])));
            let eig = SymmetricEigen::new(t);
            let mut idx: Vec<usize> = (0..p).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            block = idx
                .iter()
                .map(|&c| {
                    (0..n)
                        .map(|i| (0..p).map(|j| next[j][i] * eig.eigenvectors[(j, c)]).sum())
                        .collect()
                })
                .collect();
            let lambda = eig.eigenvalues[idx[0]];
            let x = &block[0];
            let sx0 = self.stiffness.mul_vec(x);
            // Residual of the row-scaled operator M^{-1} S.
            let res: f64 = sx0
                .iter()
                .zip(x)
                .zip(m)
                .map(|((s, xi), mi)| (s / mi - lambda * xi).powi(2))
                .sum::<f64>()
                .sqrt();
            let rel = res / (lambda.abs() * norm2(x));
            best = best.min(rel);
            if rel <= tol {
                log::debug!("eigenvalue {lambda} converged after {} sweeps", sweep + 1);
                return Ok((lambda, block.swap_remove(0)));
            }
        }
        Err(SolveError::Stagnation {
            iterations: MAX_SWEEPS,
            residual: best,
        })
    }
}

/// Gram-Schmidt (twice) in the `m`-weighted inner product, after removing
/// the constant component.
fn orthonormalize(block: &mut [Vec<f64>], m: &[f64]) {
    let total: f64 = m.iter().sum();
    let inner = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(m).map(|((x, y), w)| x * y * w).sum() };
    for _pass in 0..2 {
        for i in 0..block.len() {
            let mean = inner(&block[i], &vec![1.0; m.len()]) / total;
            block[i].iter_mut().for_each(|x| *x -= mean);
            for j in 0..i {
                let c = inner(&block[i], &block[j]);
                let (head, tail) = block.split_at_mut(i);
                for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= c * y;
                }
            }
            let nrm = inner(&block[i], &block[i]).sqrt();
            block[i].iter_mut().for_each(|x| *x /= nrm);
        }
    }
}

/// Zero-mean solution of `-sum_sigma tau D z = m(K) rhs_K`.
pub fn solve_zero_mean_poisson(mesh: &Mesh, rhs: &DiscreteField) -> Result<DiscreteField, SolveError> {
    NeumannSolver::new(mesh)?.solve(rhs)
}

/// First nonzero eigenvalue of the finite volume Laplacian
/// `(L w)_K = m(K)^{-1} sum_sigma tau (w_K - w_L)`.
pub fn smallest_nonzero_eigenvalue(mesh: &Mesh, tol: f64) -> Result<f64, SolveError> {
    Ok(NeumannSolver::new(mesh)?.smallest_nonzero_eigenpair(tol)?.0)
}
