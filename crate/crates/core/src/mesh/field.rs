use super::quadrature::{gauss_legendre, triangle_rule};
use super::{CellShape, EdgeCells, Mesh, MeshError, MeshId, Point};

/// A piecewise constant function: one finite value per cell of a given mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    mesh: MeshId,
    values: Vec<f64>,
}

impl DiscreteField {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self, MeshError> {
        if values.len() != mesh.n_cells() {
            return Err(MeshError::LengthMismatch {
                expected: mesh.n_cells(),
                found: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::NonFinite(k));
        }
        Ok(DiscreteField {
            mesh: mesh.id(),
            values,
        })
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Self {
        DiscreteField {
            mesh: mesh.id(),
            values: vec![value; mesh.n_cells()],
        }
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        Self::constant(mesh, 0.0)
    }

    /// Trusted constructor for values computed in this crate.
    pub(crate) fn from_parts(mesh: MeshId, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        DiscreteField { mesh, values }
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values, after checking that the field lives on `mesh`.
    pub fn on(&self, mesh: &Mesh) -> Result<&[f64], MeshError> {
        if self.mesh != mesh.id() {
            return Err(MeshError::MeshMismatch);
        }
        Ok(&self.values)
    }

    /// Cellwise map; the result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, MeshError> {
        let values: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::NonFinite(k));
        }
        Ok(DiscreteField {
            mesh: self.mesh,
            values,
        })
    }

    /// Cellwise combination with a field on the same mesh.
    pub fn zip_with(
        &self,
        other: &DiscreteField,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, MeshError> {
        if self.mesh != other.mesh {
            return Err(MeshError::MeshMismatch);
        }
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::NonFinite(k));
        }
        Ok(DiscreteField {
            mesh: self.mesh,
            values,
        })
    }

    pub fn sub(&self, other: &DiscreteField) -> Result<Self, MeshError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &DiscreteField) -> Result<Self, MeshError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, alpha: f64) -> Result<Self, MeshError> {
        self.map(|x| alpha * x)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Volume-weighted mean `<w>`.
pub fn mean_value(mesh: &Mesh, w: &DiscreteField) -> Result<f64, MeshError> {
    let w = w.on(mesh)?;
    Ok(weighted_sum(mesh.volumes(), w) / mesh.domain_measure())
}

pub(crate) fn weighted_sum(volumes: &[f64], w: &[f64]) -> f64 {
    volumes.iter().zip(w).map(|(m, x)| m * x).sum()
}

/// Discrete `W^{1,q}` seminorm `|w|_{1,q}`. Boundary edges contribute nothing
/// since `D_sigma w = 0` there.
pub fn discrete_seminorm(mesh: &Mesh, w: &DiscreteField, q: f64) -> Result<f64, MeshError> {
    let w = w.on(mesh)?;
    assert!(q >= 1.0, "seminorm exponent must be >= 1");
    let sum: f64 = mesh
        .interior_edges()
        .map(|(e, k, l, _)| {
            let edge = &mesh.edges()[e];
            edge.measure * edge.distance * ((w[l] - w[k]).abs() / edge.distance).powf(q)
        })
        .sum();
    Ok(sum.powf(1.0 / q))
}

/// `L^q` norm of a piecewise constant field.
pub fn lebesgue_norm(mesh: &Mesh, w: &DiscreteField, q: f64) -> Result<f64, MeshError> {
    let w = w.on(mesh)?;
    assert!(q >= 1.0, "Lebesgue exponent must be >= 1");
    let sum: f64 = mesh
        .volumes()
        .iter()
        .zip(w)
        .map(|(m, x)| m * x.abs().powf(q))
        .sum();
    Ok(sum.powf(1.0 / q))
}

pub fn max_norm(mesh: &Mesh, w: &DiscreteField) -> Result<f64, MeshError> {
    Ok(w.on(mesh)?.iter().fold(0.0, |acc: f64, x| acc.max(x.abs())))
}

/// Cell averages `m(K)^{-1} int_K f`, by a Gauss rule exact for polynomials of
/// degree `quadrature_order` (Gauss-Legendre on intervals, symmetric rules on
/// triangles).
pub fn project_cell_averages(
    mesh: &Mesh,
    f: impl Fn(Point) -> f64,
    quadrature_order: usize,
) -> Result<DiscreteField, MeshError> {
    project_cell_averages_indexed(mesh, |_, p| f(p), quadrature_order)
}

/// As [`project_cell_averages`], for integrands that also depend on the
/// cell index.
pub fn project_cell_averages_indexed(
    mesh: &Mesh,
    mut f: impl FnMut(usize, Point) -> f64,
    quadrature_order: usize,
) -> Result<DiscreteField, MeshError> {
    let line = gauss_legendre(quadrature_order / 2 + 1);
    let tri = match mesh.dimension() {
        super::Dimension::Two => Some(triangle_rule(quadrature_order)?),
        super::Dimension::One => None,
    };
    let mut values = Vec::with_capacity(mesh.n_cells());
    for (k, cell) in mesh.cells().iter().enumerate() {
        let avg = match &cell.shape {
            CellShape::Interval { left, right } => {
                let (mid, half) = (0.5 * (left + right), 0.5 * (right - left));
                0.5 * line
                    .iter()
                    .map(|&(x, w)| w * f(k, [mid + half * x, 0.0]))
                    .sum::<f64>()
            }
            CellShape::Triangle([a, b, c]) => tri
                .as_ref()
                .expect("triangle rule for 2D mesh")
                .iter()
                .map(|&(l1, l2, w)| {
                    let l0 = 1.0 - l1 - l2;
                    let p = [
                        l0 * a[0] + l1 * b[0] + l2 * c[0],
                        l0 * a[1] + l1 * b[1] + l2 * c[1],
                    ];
                    w * f(k, p)
                })
                .sum::<f64>(),
        };
        if !avg.is_finite() {
            return Err(MeshError::NonFinite(k));
        }
        values.push(avg);
    }
    DiscreteField::new(mesh, values)
}

/// Piecewise constant gradient on the dual cells:
/// `m(sigma) / m(T_{K,sigma}) * D_{K,sigma} w * nu_{K,sigma}`, one vector per
/// edge. Interior diamonds are shared by both neighbors and give the same
/// vector from either side; boundary triangles carry zero.
pub fn approximate_gradient(mesh: &Mesh, w: &DiscreteField) -> Result<Vec<Point>, MeshError> {
    let w = w.on(mesh)?;
    Ok(mesh
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| match edge.cells {
            EdgeCells::Interior(k, l) => {
                let scale = edge.measure / mesh.diamond_volume(e) * (w[l] - w[k]);
                [scale * edge.normal[0], scale * edge.normal[1]]
            }
            EdgeCells::Boundary(_) => [0.0, 0.0],
        })
        .collect())
}
