//! Uniform triangulation of the unit square.
//!
//! Nodes are numbered lexicographically, row by row in `y` and then along
//! `x`. Every grid cell is cut by its bottom-left to top-right diagonal, so
//! the stiffness matrix reproduces the five-point Laplacian stencil on
//! interior nodes.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct StructuredTriMesh {
    n_cells: usize,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    is_boundary: Vec<bool>,
}

impl StructuredTriMesh {
    /// Builds the `n_cells × n_cells` grid, two triangles per cell.
    pub fn unit_square(n_cells: usize) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::InvalidMesh("n_cells must be at least 1".into()));
        }
        let n = n_cells;
        let np = n + 1;
        let h = 1.0 / n as f64;
        let mut nodes = Vec::with_capacity(np * np);
        let mut is_boundary = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                // exact endpoints so boundary detection is a pure index test
                let x = if i == n { 1.0 } else { i as f64 * h };
                let y = if j == n { 1.0 } else { j as f64 * h };
                nodes.push([x, y]);
                is_boundary.push(i == 0 || j == 0 || i == n || j == n);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let bl = j * np + i;
                let br = bl + 1;
                let tl = bl + np;
                let tr = tl + 1;
                triangles.push([bl, br, tr]);
                triangles.push([bl, tr, tl]);
            }
        }
        Ok(Self {
            n_cells,
            nodes,
            triangles,
            is_boundary,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.is_boundary[node]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.is_boundary
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.is_boundary
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn num_interior_nodes(&self) -> usize {
        self.is_boundary.iter().filter(|b| !**b).count()
    }

    /// Signed area of triangle `t` (positive for counter-clockwise ordering).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Sum of all triangle areas, compensated summation.
    pub fn total_area(&self) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for t in 0..self.triangles.len() {
            let a = self.signed_area(t);
            let s = sum + a;
            comp += if sum.abs() >= a.abs() { (sum - s) + a } else { (a - s) + sum };
            sum = s;
        }
        sum + comp
    }

    /// Plain-text listing: one `index x y` line per node followed by one
    /// `index i j k` line per triangle.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# nodes {}", self.nodes.len()).unwrap();
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(out, "{i} {} {}", p[0], p[1]).unwrap();
        }
        writeln!(out, "# triangles {}", self.triangles.len()).unwrap();
        for (t, [a, b, c]) in self.triangles.iter().enumerate() {
            writeln!(out, "{t} {a} {b} {c}").unwrap();
        }
        out
    }
}
