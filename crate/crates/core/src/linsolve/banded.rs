//! Reverse Cuthill-McKee ordering and banded LU without pivoting.

use std::collections::VecDeque;

use super::{SolveError, SparseSystem};

#[derive(Debug, Clone)]
pub(crate) struct Ordering {
    /// `perm[new] = old`.
    pub perm: Vec<usize>,
    /// `inv[old] = new`.
    pub inv: Vec<usize>,
    pub bandwidth: usize,
}

impl Ordering {
    pub fn reverse_cuthill_mckee(row_ptr: &[usize], col_idx: &[usize]) -> Self {
        let n = row_ptr.len() - 1;
        let neighbors = |i: usize| {
            col_idx[row_ptr[i]..row_ptr[i + 1]]
                .iter()
                .copied()
                .filter(move |&j| j != i)
        };
        let degree = |i: usize| neighbors(i).count();
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            // Start each component from a pseudo-peripheral node.
            let seed = (0..n)
                .filter(|&i| !visited[i])
                .min_by_key(|&i| degree(i))
                .unwrap();
            let start = pseudo_peripheral(seed, &neighbors, n);
            let mut queue = VecDeque::from([start]);
            visited[start] = true;
            while let Some(i) = queue.pop_front() {
                order.push(i);
                let mut next: Vec<usize> = neighbors(i).filter(|&j| !visited[j]).collect();
                next.sort_by_key(|&j| (degree(j), j));
                for j in next {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        order.reverse();
        let mut inv = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        let bandwidth = (0..n)
            .flat_map(|i| col_idx[row_ptr[i]..row_ptr[i + 1]].iter().map(move |&j| (i, j)))
            .map(|(i, j)| inv[i].abs_diff(inv[j]))
            .max()
            .unwrap_or(0);
        Ordering {
            perm: order,
            inv,
            bandwidth,
        }
    }
}

fn pseudo_peripheral<I: Iterator<Item = usize>>(
    start: usize,
    neighbors: &impl Fn(usize) -> I,
    n: usize,
) -> usize {
    let mut current = start;
    let mut best_depth = 0;
    for _ in 0..8 {
        let mut depth = vec![usize::MAX; n];
        depth[current] = 0;
        let mut queue = VecDeque::from([current]);
        let mut last = current;
        while let Some(i) = queue.pop_front() {
            last = i;
            for j in neighbors(i) {
                if depth[j] == usize::MAX {
                    depth[j] = depth[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        if depth[last] <= best_depth {
            break;
        }
        best_depth = depth[last];
        current = last;
    }
    current
}

/// LU factors of a permuted band matrix, stored row by row with
/// `2 b + 1` entries per row.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    b: usize,
    perm: Vec<usize>,
    band: Vec<f64>,
}

impl BandedLu {
    pub(crate) fn factorize(a: &SparseSystem, ordering: &Ordering) -> Result<Self, SolveError> {
        let n = a.dim();
        let b = ordering.bandwidth;
        let w = 2 * b + 1;
        let mut band = vec![0.0; n * w];
        for (i, (cols, vals)) in a.rows().enumerate() {
            let ni = ordering.inv[i];
            for (&j, &v) in cols.iter().zip(vals) {
                let nj = ordering.inv[j];
                band[ni * w + nj + b - ni] += v;
            }
        }
        let scale = band.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let pivot = band[k * w + b];
            if !(pivot.abs() > 1e-300_f64.max(1e-15 * scale)) || !pivot.is_finite() {
                return Err(SolveError::Singular {
                    row: ordering.perm[k],
                    pivot,
                });
            }
            let last = (k + b).min(n - 1);
            let (head, tail) = band.split_at_mut((k + 1) * w);
            let pivot_row = &head[k * w + b..k * w + b + (last - k) + 1];
            for i in k + 1..=last {
                let row = &mut tail[(i - k - 1) * w..(i - k) * w];
                let off = k + b - i;
                let l = row[off] / pivot;
                row[off] = l;
                if l != 0.0 {
                    for (dst, src) in row[off + 1..off + 1 + (last - k)].iter_mut().zip(&pivot_row[1..]) {
                        *dst -= l * src;
                    }
                }
            }
        }
        Ok(BandedLu {
            n,
            b,
            perm: ordering.perm.clone(),
            band,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.b
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, b) = (self.n, self.b);
        let w = 2 * b + 1;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| rhs[old]).collect();
        for i in 0..n {
            let first = i.saturating_sub(b);
            let mut s = y[i];
            for j in first..i {
                s -= self.band[i * w + j + b - i] * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let last = (i + b).min(n - 1);
            let mut s = y[i];
            for j in i + 1..=last {
                s -= self.band[i * w + j + b - i] * y[j];
            }
            y[i] = s / self.band[i * w + b];
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::MeshPattern;
    use crate::mesh::{disk_mesh, DiskMeshSpec, Mesh};

    #[test]
    fn rcm_on_a_path_has_unit_bandwidth() {
        let mesh = Mesh::uniform_1d(0.0, 1.0, 50).unwrap();
        let s = MeshPattern::new(&mesh).stiffness();
        assert_eq!(s.structure.ordering().bandwidth, 1);
    }

    #[test]
    fn rcm_reduces_disk_bandwidth() {
        let mesh = disk_mesh(&DiskMeshSpec {
            n_boundary: 48,
            ..Default::default()
        })
        .unwrap();
        let s = MeshPattern::new(&mesh).stiffness();
        let ord = s.structure.ordering();
        let mut sorted = ord.perm.clone();
        sorted.sort_unstable();
        assert!(sorted.iter().enumerate().all(|(i, &p)| i == p));
        // Roughly the number of cells across a ring, far below n.
        assert!(ord.bandwidth < mesh.n_cells() / 4, "{}", ord.bandwidth);
    }

    #[test]
    fn banded_lu_solves_a_tridiagonal_system() {
        let n = 7;
        let a = SparseSystem::from_triplets(
            n,
            (0..n).flat_map(|i| {
                let mut v = vec![(i, i, 4.0)];
                if i > 0 {
                    v.push((i, i - 1, -1.0));
                }
                if i + 1 < n {
                    v.push((i, i + 1, -2.0));
                }
                v
            }),
        )
        .unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = a.mul_vec(&x_true);
        let lu = BandedLu::factorize(&a, a.structure.ordering()).unwrap();
        let x = lu.solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-14);
        }
    }
}
