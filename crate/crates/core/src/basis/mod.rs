//! Master simplices, nodal Lagrange bases, element-map Jacobians, the
//! unit-edge regular simplex frame and simplex quadrature.
//!
//! Node ordering on the master simplex is normative (the mesh file format
//! depends on it). Every node is identified by a barycentric lattice
//! multi-index `a = (a_0, .., a_k)` with `|a| = p`; its master coordinate is
//! `xi_j = a_{j+1} / p`. Nodes are sorted by
//!
//! 1. the size of their support `{j : a_j > 0}` (vertices, then edge
//!    interiors, then face interiors, then cell interiors),
//! 2. the support itself, lexicographically (edge `(0,1)` before `(0,2)`),
//! 3. the multi-index in descending lexicographic order, so that edge
//!    interior nodes run from the lower vertex towards the higher one.

mod quadrature;
mod warp_blend;

pub use quadrature::{gauss_legendre, quadrature, QuadratureRule};
pub use warp_blend::warp_blend_nodes;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 4;

fn check_dim_degree(dim: usize, degree: usize) -> Result<()> {
    if !(1..=3).contains(&dim) {
        return Err(Error::Config(format!("unsupported simplex dimension {dim}")));
    }
    if !(1..=MAX_DEGREE).contains(&degree) {
        return Err(Error::Config(format!(
            "unsupported polynomial degree {degree} (supported: 1..={MAX_DEGREE})"
        )));
    }
    Ok(())
}

/// Number of nodes of a degree-`p` simplex of dimension `k`: `binomial(p + k, k)`.
pub fn node_count(dim: usize, degree: usize) -> usize {
    (1..=dim).fold(1, |acc, i| acc * (degree + i) / i)
}

/// Barycentric lattice multi-indices of the degree-`p` k-simplex in canonical order.
pub fn lattice(dim: usize, degree: usize) -> Vec<Vec<u8>> {
    fn fill(prefix: &mut Vec<u8>, remaining: usize, slots: usize, out: &mut Vec<Vec<u8>>) {
        if slots == 1 {
            prefix.push(remaining as u8);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for a in 0..=remaining {
            prefix.push(a as u8);
            fill(prefix, remaining - a, slots - 1, out);
            prefix.pop();
        }
    }
    let mut all = Vec::with_capacity(node_count(dim, degree));
    fill(&mut Vec::new(), degree, dim + 1, &mut all);

    let support = |a: &[u8]| -> Vec<usize> { (0..a.len()).filter(|&j| a[j] > 0).collect() };
    all.sort_by(|a, b| {
        let (sa, sb) = (support(a), support(b));
        sa.len()
            .cmp(&sb.len())
            .then_with(|| sa.cmp(&sb))
            .then_with(|| b.cmp(a))
    });
    all
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterSimplex {
    dim: usize,
    degree: usize,
    lattice: Vec<Vec<u8>>,
    nodes: Vec<Vec<f64>>,
}

impl MasterSimplex {
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        check_dim_degree(dim, degree)?;
        let lattice = lattice(dim, degree);
        let nodes = lattice
            .iter()
            .map(|a| a[1..].iter().map(|&c| c as f64 / degree as f64).collect())
            .collect();
        Ok(Self {
            dim,
            degree,
            lattice,
            nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn multi_index(&self, node: usize) -> &[u8] {
        &self.lattice[node]
    }

    pub fn lattice(&self) -> &[Vec<u8>] {
        &self.lattice
    }

    /// Position of the node with barycentric multi-index `a`.
    pub fn index_of(&self, a: &[u8]) -> Option<usize> {
        self.lattice.iter().position(|b| b.as_slice() == a)
    }

    /// Measure of the master simplex, `1 / k!`.
    pub fn volume(&self) -> f64 {
        master_volume(self.dim)
    }
}

pub fn master_volume(dim: usize) -> f64 {
    1.0 / (1..=dim).product::<usize>() as f64
}

/// Equispaced lattice nodes of the degree-`p` master k-simplex, vertices first.
pub fn master_nodes(dim: usize, degree: usize) -> Result<Vec<Vec<f64>>> {
    Ok(MasterSimplex::new(dim, degree)?.nodes)
}

/// Exponents of all monomials of total degree <= p in k variables.
fn monomial_exponents(dim: usize, degree: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for total in 0..=degree {
        for a in lattice(dim, total) {
            out.push(a[1..].to_vec());
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Nodal Lagrange basis of total degree `p` on an arbitrary unisolvent node set.
///
/// The basis is stored as a coefficient table over the monomials, obtained by
/// inverting the Vandermonde matrix of the nodes.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    dim: usize,
    degree: usize,
    exponents: Vec<Vec<u8>>,
    // coeffs[(monomial, node)]
    coeffs: DMatrix<f64>,
}

impl LagrangeBasis {
    /// Basis on the equispaced nodes of `master`.
    pub fn new(master: &MasterSimplex) -> Result<Self> {
        Self::from_nodes(master.dim, master.degree, &master.nodes)
    }

    pub fn from_nodes(dim: usize, degree: usize, nodes: &[Vec<f64>]) -> Result<Self> {
        check_dim_degree(dim, degree)?;
        let exponents = monomial_exponents(dim, degree);
        let n = exponents.len();
        if nodes.len() != n {
            return Err(Error::Config(format!(
                "{} nodes given for a basis of dimension {n}",
                nodes.len()
            )));
        }
        let vandermonde = DMatrix::from_fn(n, n, |i, j| monomial(&exponents[j], &nodes[i]));
        let coeffs = vandermonde
            .try_inverse()
            .ok_or_else(|| Error::Config("node set is not unisolvent".into()))?;
        Ok(Self {
            dim,
            degree,
            exponents,
            coeffs,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// `N_i(xi)` for all nodes.
    pub fn values(&self, xi: &[f64]) -> Vec<f64> {
        let m: Vec<f64> = self.exponents.iter().map(|e| monomial(e, xi)).collect();
        (0..self.len())
            .map(|i| m.iter().enumerate().map(|(j, mj)| mj * self.coeffs[(j, i)]).sum())
            .collect()
    }

    /// Gradients as an `n_nodes x k` matrix, row `i` holding `grad N_i(xi)`.
    pub fn gradients(&self, xi: &[f64]) -> DMatrix<f64> {
        let n = self.len();
        let mut dm = DMatrix::zeros(n, self.dim);
        for (j, e) in self.exponents.iter().enumerate() {
            for a in 0..self.dim {
                dm[(j, a)] = monomial_derivative(e, xi, a);
            }
        }
        self.coeffs.transpose() * dm
    }
}

fn monomial(e: &[u8], xi: &[f64]) -> f64 {
    e.iter().zip(xi).map(|(&k, &x)| x.powi(k as i32)).product()
}

fn monomial_derivative(e: &[u8], xi: &[f64], axis: usize) -> f64 {
    if e[axis] == 0 {
        return 0.0;
    }
    e.iter()
        .zip(xi)
        .enumerate()
        .map(|(a, (&k, &x))| {
            if a == axis {
                k as f64 * x.powi(k as i32 - 1)
            } else {
                x.powi(k as i32)
            }
        })
        .product()
}

/// Basis values and gradients tabulated at a fixed set of master points.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub values: Vec<Vec<f64>>,
    pub gradients: Vec<DMatrix<f64>>,
}

impl BasisTable {
    pub fn new(basis: &LagrangeBasis, points: &[Vec<f64>]) -> Self {
        Self {
            values: points.iter().map(|x| basis.values(x)).collect(),
            gradients: points.iter().map(|x| basis.gradients(x)).collect(),
        }
    }
}

/// Affine frame of the unit-edge regular k-simplex with respect to the master simplex.
#[derive(Debug, Clone)]
pub struct EquilateralFrame {
    dim: usize,
    jacobian: DMatrix<f64>,
    inverse: DMatrix<f64>,
    det: f64,
}

impl EquilateralFrame {
    pub fn new(dim: usize) -> Result<Self> {
        let s3 = 3f64.sqrt();
        let jacobian = match dim {
            1 => DMatrix::from_element(1, 1, 1.0),
            2 => DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, s3 / 2.0]),
            3 => DMatrix::from_row_slice(
                3,
                3,
                &[
                    1.0,
                    0.5,
                    0.5,
                    0.0,
                    s3 / 2.0,
                    s3 / 6.0,
                    0.0,
                    0.0,
                    6f64.sqrt() / 3.0,
                ],
            ),
            _ => return Err(Error::Config(format!("unsupported simplex dimension {dim}"))),
        };
        // upper triangular: the determinant is the diagonal product
        let det = jacobian.diagonal().product();
        let inverse = jacobian
            .clone()
            .try_inverse()
            .expect("regular simplex frame is invertible");
        Ok(Self {
            dim,
            jacobian,
            inverse,
            det,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    /// Measure of the unit-edge regular k-simplex.
    pub fn volume(&self) -> f64 {
        self.det * master_volume(self.dim)
    }
}

pub fn equilateral_jacobian(dim: usize) -> Result<EquilateralFrame> {
    EquilateralFrame::new(dim)
}

/// Jacobian `D phi(xi) = sum_i x_i (grad N_i(xi))^T` of a nodal map.
///
/// `coords` is `d x n` (one column per node) and `grads` is `n x k`.
pub fn map_jacobian(coords: &DMatrix<f64>, grads: &DMatrix<f64>) -> DMatrix<f64> {
    coords * grads
}

/// Physical position `sum_i N_i(xi) x_i`.
pub fn map_point(coords: &DMatrix<f64>, values: &[f64]) -> Vec<f64> {
    (0..coords.nrows())
        .map(|r| values.iter().enumerate().map(|(i, v)| v * coords[(r, i)]).sum())
        .collect()
}

/// Equispaced lattice with `per_edge` points along each edge (order `per_edge - 1`).
pub fn sample_lattice(dim: usize, per_edge: usize) -> Vec<Vec<f64>> {
    let order = per_edge.max(2) - 1;
    lattice(dim, order)
        .iter()
        .map(|a| a[1..].iter().map(|&c| c as f64 / order as f64).collect())
        .collect()
}
