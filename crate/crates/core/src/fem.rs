//! P1 Lagrange assembly on [`StructuredTriMesh`], Dirichlet elimination,
//! nodal interpolation and spatial norms.

use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use crate::error::{check_len, Result};
use crate::mesh::StructuredTriMesh;
use crate::sparse::CsrMatrix;

/// Nodal coefficients of a P1 field at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction(Vec<f64>);

impl FeFunction {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// True if every boundary value is at most `tol` in magnitude.
    pub fn is_dirichlet_conforming(&self, mesh: &StructuredTriMesh, tol: f64) -> bool {
        self.0.len() == mesh.num_nodes() && mesh.boundary_nodes().all(|i| self.0[i].abs() <= tol)
    }
}

impl Deref for FeFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for FeFunction {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

fn local_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

fn local_stiffness(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = 0.5 * det.abs();
    // gradient of the barycentric coordinate opposite each edge
    let grads: [[f64; 2]; 3] = std::array::from_fn(|i| {
        let a = p[(i + 1) % 3];
        let b = p[(i + 2) % 3];
        [(a[1] - b[1]) / det, (b[0] - a[0]) / det]
    });
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
        }
    }
    k
}

fn assemble(mesh: &StructuredTriMesh, local: impl Fn([[f64; 2]; 3], f64) -> [[f64; 3]; 3]) -> CsrMatrix {
    let nodes = mesh.nodes();
    let mut triplets = Vec::with_capacity(9 * mesh.triangles().len());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let block = local(tri.map(|i| nodes[i]), mesh.signed_area(t).abs());
        for (a, &i) in tri.iter().enumerate() {
            for (b, &j) in tri.iter().enumerate() {
                triplets.push((i, j, block[a][b]));
            }
        }
    }
    // local blocks are symmetric and (i,j), (j,i) are summed in the same
    // triangle order, so the result is exactly symmetric
    CsrMatrix::from_triplets(mesh.num_nodes(), &triplets)
}

/// Consistent P1 mass matrix, local block `(area/12)·[[2,1,1],[1,2,1],[1,1,2]]`.
pub fn assemble_mass(mesh: &StructuredTriMesh) -> CsrMatrix {
    assemble(mesh, |_, area| local_mass(area))
}

/// P1 stiffness matrix of `(∇y, ∇v)`.
pub fn assemble_stiffness(mesh: &StructuredTriMesh) -> CsrMatrix {
    assemble(mesh, |p, _| local_stiffness(p))
}

/// Homogeneous Dirichlet conditions by symmetric elimination: boundary rows
/// and columns of `a` are zeroed with a unit diagonal and `b` is zeroed on
/// boundary nodes.
pub fn apply_dirichlet(a: &CsrMatrix, b: &[f64], mesh: &StructuredTriMesh) -> Result<(CsrMatrix, Vec<f64>)> {
    check_len(a.dim(), mesh.num_nodes())?;
    check_len(a.dim(), b.len())?;
    let a = a.eliminate(mesh.boundary_mask())?;
    let mut b = b.to_vec();
    zero_boundary(&mut b, mesh.boundary_mask());
    Ok((a, b))
}

pub(crate) fn zero_boundary(v: &mut [f64], mask: &[bool]) {
    for (x, &m) in v.iter_mut().zip(mask) {
        if m {
            *x = 0.0;
        }
    }
}

pub fn interpolate(mesh: &StructuredTriMesh, f: impl Fn(f64, f64) -> f64) -> FeFunction {
    FeFunction(mesh.nodes().iter().map(|p| f(p[0], p[1])).collect())
}

/// `√(vᵀ M v)`.
pub fn l2_norm(v: &[f64], mass: &CsrMatrix) -> Result<f64> {
    Ok(mass.bilinear(v, v)?.max(0.0).sqrt())
}

/// `√(vᵀ K v)`, used as the H¹₀ norm.
pub fn h1_seminorm(v: &[f64], stiffness: &CsrMatrix) -> Result<f64> {
    Ok(stiffness.bilinear(v, v)?.max(0.0).sqrt())
}

/// Largest nodal magnitude, exact for P1 fields.
pub fn linf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// A mesh together with its assembled mass and stiffness matrices.
///
/// Immutable and cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Arc<StructuredTriMesh>,
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
}

impl Discretization {
    pub fn new(mesh: StructuredTriMesh) -> Self {
        let mass = assemble_mass(&mesh);
        let stiffness = assemble_stiffness(&mesh);
        Self {
            mesh: Arc::new(mesh),
            mass,
            stiffness,
        }
    }

    pub fn unit_square(n_cells: usize) -> Result<Self> {
        Ok(Self::new(StructuredTriMesh::unit_square(n_cells)?))
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    pub fn boundary_mask(&self) -> &[bool] {
        self.mesh.boundary_mask()
    }

    pub fn l2_norm(&self, v: &[f64]) -> Result<f64> {
        l2_norm(v, &self.mass)
    }

    pub fn h1_norm(&self, v: &[f64]) -> Result<f64> {
        h1_seminorm(v, &self.stiffness)
    }

    /// L² inner product `uᵀ M v`.
    pub fn l2_inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.mass.bilinear(u, v)
    }

    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> FeFunction {
        interpolate(&self.mesh, f)
    }
}
