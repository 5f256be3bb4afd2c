//! Interpolation and best-approximation errors of scalar functions in the
//! continuous Lagrange space carried by a mesh.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::basis::{quadrature, warp_blend_nodes, BasisTable, LagrangeBasis, MasterSimplex, QuadratureRule};
use crate::error::{Error, Result};
use crate::mesh::HighOrderMesh;
use crate::par;
use crate::stats::pairwise_sum;

/// Relative residual at which the projection solve stops.
pub const CG_REL_TOL: f64 = 1e-10;

/// Scalar function of position.
pub trait ScalarField: Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarField for F {
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Arctangent test functions with a sharp transition of steepness `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalyticFunction {
    /// `atan(gamma (10 y + cos 2 pi x))`
    Arctan2D { gamma: f64 },
    /// `atan(gamma (10 z + cos 2 pi x cos 2 pi y))`
    Arctan3D { gamma: f64 },
}

impl AnalyticFunction {
    pub fn arctan2d(gamma: f64) -> Result<Self> {
        let f = AnalyticFunction::Arctan2D { gamma };
        f.validate()?;
        Ok(f)
    }

    pub fn arctan3d(gamma: f64) -> Result<Self> {
        let f = AnalyticFunction::Arctan3D { gamma };
        f.validate()?;
        Ok(f)
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            AnalyticFunction::Arctan2D { gamma } | AnalyticFunction::Arctan3D { gamma } => gamma,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            AnalyticFunction::Arctan2D { .. } => 2,
            AnalyticFunction::Arctan3D { .. } => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.gamma();
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive and finite, got {g}")));
        }
        Ok(())
    }

    /// Level-set function whose zero set carries the transition.
    pub fn level_set(&self, x: &[f64]) -> f64 {
        match self {
            AnalyticFunction::Arctan2D { .. } => 10.0 * x[1] + (2.0 * PI * x[0]).cos(),
            AnalyticFunction::Arctan3D { .. } => {
                10.0 * x[2] + (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos()
            }
        }
    }
}

impl ScalarField for AnalyticFunction {
    fn eval(&self, x: &[f64]) -> f64 {
        (self.gamma() * self.level_set(x)).atan()
    }
}

/// Global error and its element-wise contributions, `global^2 = sum element^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub global: f64,
    pub per_element: Vec<f64>,
}

impl ErrorNorms {
    fn from_squares(sq: Vec<f64>) -> Self {
        let global = pairwise_sum(&sq).sqrt();
        Self {
            global,
            per_element: sq.into_iter().map(f64::sqrt).collect(),
        }
    }
}

/// Both errors of one function on one mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub global_e_i: f64,
    pub global_e_a: f64,
    pub per_element: Vec<ElementErrors>,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementErrors {
    pub e_i: f64,
    pub e_a: f64,
}

/// Continuous Lagrange space on a mesh, with warp-and-blend interpolation
/// nodes mapped through each element's geometry.
#[derive(Debug, Clone)]
pub struct FeSpace<'a> {
    mesh: &'a HighOrderMesh,
    rule: QuadratureRule,
    /// Geometry basis (equispaced) at the quadrature points.
    geometry: BasisTable,
    /// Interpolation basis (warp-and-blend) at the quadrature points.
    shape: Vec<Vec<f64>>,
    /// Geometry basis at the warp-and-blend nodes.
    nodal_geometry: Vec<Vec<f64>>,
}

impl<'a> FeSpace<'a> {
    /// Space with the error quadrature `n_1d = 3p + 2`.
    pub fn new(mesh: &'a HighOrderMesh) -> Result<Self> {
        Self::with_quadrature(mesh, 3 * mesh.degree() + 2)
    }

    pub fn with_quadrature(mesh: &'a HighOrderMesh, n_1d: usize) -> Result<Self> {
        let (dim, p) = (mesh.dim(), mesh.degree());
        let master = MasterSimplex::new(dim, p)?;
        let geometry_basis = LagrangeBasis::new(&master)?;
        let nodes = warp_blend_nodes(dim, p)?;
        let shape_basis = LagrangeBasis::from_nodes(dim, p, &nodes)?;
        let rule = quadrature(dim, n_1d);
        let geometry = BasisTable::new(&geometry_basis, &rule.points);
        let shape = rule.points.iter().map(|x| shape_basis.values(x)).collect();
        let nodal_geometry = nodes.iter().map(|x| geometry_basis.values(x)).collect();
        Ok(Self {
            mesh,
            rule,
            geometry,
            shape,
            nodal_geometry,
        })
    }

    pub fn mesh(&self) -> &HighOrderMesh {
        self.mesh
    }

    pub fn len(&self) -> usize {
        self.mesh.node_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical positions of the global interpolation nodes.
    pub fn node_positions(&self) -> Vec<Vec<f64>> {
        let mesh = self.mesh;
        let mut out: Vec<Option<Vec<f64>>> = vec![None; mesh.node_count()];
        for e in 0..mesh.element_count() {
            let conn = mesh.element(e);
            if conn.iter().all(|&g| out[g].is_some()) {
                continue;
            }
            let coords = mesh.element_coords(e);
            for (i, &g) in conn.iter().enumerate() {
                if out[g].is_none() {
                    out[g] = Some(map(&coords, &self.nodal_geometry[i]));
                }
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(g, x)| x.unwrap_or_else(|| mesh.node(g).to_vec()))
            .collect()
    }

    /// Nodal coefficients of the interpolant of `u`.
    pub fn interpolate(&self, u: &dyn ScalarField) -> Vec<f64> {
        self.node_positions().iter().map(|x| u.eval(x)).collect()
    }

    /// Physical quadrature points and weights `w |det J|` of element `e`.
    fn element_quadrature(&self, e: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let coords = self.mesh.element_coords(e);
        let mut xs = Vec::with_capacity(self.rule.len());
        let mut ws = Vec::with_capacity(self.rule.len());
        for q in 0..self.rule.len() {
            let jac = &coords * &self.geometry.gradients[q];
            xs.push(map(&coords, &self.geometry.values[q]));
            ws.push(self.rule.weights[q] * jac.determinant().abs());
        }
        (xs, ws)
    }

    /// Element-wise squared L2 norms of `u - v_h` for nodal coefficients `v`.
    fn squared_errors(&self, u: &dyn ScalarField, v: &[f64]) -> Vec<f64> {
        par::map_range(self.mesh.element_count(), |e| {
            let conn = self.mesh.element(e);
            let (xs, ws) = self.element_quadrature(e);
            let terms: Vec<f64> = xs
                .iter()
                .zip(&ws)
                .zip(&self.shape)
                .map(|((x, w), n)| {
                    let vh: f64 = conn.iter().zip(n).map(|(&g, ni)| v[g] * ni).sum();
                    w * (u.eval(x) - vh).powi(2)
                })
                .collect();
            pairwise_sum(&terms)
        })
    }

    /// L2 norm of `u - v_h`.
    pub fn error_of(&self, u: &dyn ScalarField, v: &[f64]) -> ErrorNorms {
        ErrorNorms::from_squares(self.squared_errors(u, v))
    }

    /// Consistent mass matrix.
    pub fn mass_matrix(&self) -> CsrMatrix<f64> {
        let mesh = self.mesh;
        let local: Vec<DMatrix<f64>> = par::map_range(mesh.element_count(), |e| {
            let (_, ws) = self.element_quadrature(e);
            let n = self.shape[0].len();
            let mut m = DMatrix::zeros(n, n);
            for (w, s) in ws.iter().zip(&self.shape) {
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] += w * s[i] * s[j];
                    }
                }
            }
            m
        });
        let n = mesh.node_count();
        let mut coo = CooMatrix::new(n, n);
        for (e, m) in local.iter().enumerate() {
            let conn = mesh.element(e);
            for (i, &gi) in conn.iter().enumerate() {
                for (j, &gj) in conn.iter().enumerate() {
                    coo.push(gi, gj, m[(i, j)]);
                }
            }
        }
        CsrMatrix::from(&coo)
    }

    /// Load vector `b_i = int u N_i`.
    pub fn load_vector(&self, u: &dyn ScalarField) -> Vec<f64> {
        let mesh = self.mesh;
        let local: Vec<Vec<f64>> = par::map_range(mesh.element_count(), |e| {
            let (xs, ws) = self.element_quadrature(e);
            let n = self.shape[0].len();
            let mut b = vec![0.0; n];
            for ((x, w), s) in xs.iter().zip(&ws).zip(&self.shape) {
                let wu = w * u.eval(x);
                for i in 0..n {
                    b[i] += wu * s[i];
                }
            }
            b
        });
        let mut out = vec![0.0; mesh.node_count()];
        for (e, b) in local.iter().enumerate() {
            for (&g, v) in mesh.element(e).iter().zip(b) {
                out[g] += v;
            }
        }
        out
    }

    /// Coefficients of the L2 projection of `u` and the CG iteration count.
    pub fn project(&self, u: &dyn ScalarField) -> Result<(Vec<f64>, usize)> {
        let mass = self.mass_matrix();
        let b = self.load_vector(u);
        let x0 = self.interpolate(u);
        conjugate_gradient(&mass, &b, x0, CG_REL_TOL, 10 * self.len() + 100)
    }
}

fn map(coords: &DMatrix<f64>, values: &[f64]) -> Vec<f64> {
    crate::basis::map_point(coords, values)
}

fn spmv(a: &CsrMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let (offsets, cols, vals) = (a.row_offsets(), a.col_indices(), a.values());
    for (r, yr) in y.iter_mut().enumerate() {
        let range = offsets[r]..offsets[r + 1];
        *yr = cols[range.clone()].iter().zip(&vals[range]).map(|(&c, v)| v * x[c]).sum();
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&p)
}

/// Jacobi-preconditioned conjugate gradients for an SPD system, stopping at
/// `||b - A x|| <= rel_tol ||b||`.
pub fn conjugate_gradient(
    a: &CsrMatrix<f64>,
    b: &[f64],
    mut x: Vec<f64>,
    rel_tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let mut diag = vec![0.0; n];
    for (r, c, v) in a.triplet_iter() {
        if r == c {
            diag[r] = *v;
        }
    }
    if let Some(r) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Solver(format!("non-positive diagonal entry {} in row {r}", diag[r])));
    }
    let mut ax = vec![0.0; n];
    spmv(a, &x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rnorm = dot(&r, &r).sqrt();
    for it in 0..=max_iters {
        if rnorm <= rel_tol * bnorm {
            return Ok((x, it));
        }
        if it == max_iters {
            break;
        }
        spmv(a, &p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver(format!(
                "matrix not positive definite (p^T A p = {pap:e}) at iteration {it}, relative residual {:e}",
                rnorm / bnorm
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rnorm = dot(&r, &r).sqrt();
    }
    Err(Error::Solver(format!(
        "conjugate gradients did not converge in {max_iters} iterations, relative residual {:e}",
        rnorm / bnorm
    )))
}

/// Nodal interpolant coefficients.
pub fn interpolate(mesh: &HighOrderMesh, u: &dyn ScalarField) -> Result<Vec<f64>> {
    Ok(FeSpace::new(mesh)?.interpolate(u))
}

/// `||u - Pi u||` with its element-wise parts.
pub fn interpolation_error(mesh: &HighOrderMesh, u: &dyn ScalarField) -> Result<ErrorNorms> {
    let space = FeSpace::new(mesh)?;
    let v = space.interpolate(u);
    Ok(space.error_of(u, &v))
}

/// `min_v ||u - v||` over the finite element space, with its element-wise parts.
pub fn approximation_error(mesh: &HighOrderMesh, u: &dyn ScalarField) -> Result<ErrorNorms> {
    let space = FeSpace::new(mesh)?;
    let (v, _) = space.project(u)?;
    Ok(space.error_of(u, &v))
}

/// Both errors, sharing one space.
pub fn error_report(mesh: &HighOrderMesh, u: &dyn ScalarField) -> Result<ErrorReport> {
    let space = FeSpace::new(mesh)?;
    let vi = space.interpolate(u);
    let ei = space.error_of(u, &vi);
    let (va, cg_iterations) = space.project(u)?;
    let ea = space.error_of(u, &va);
    Ok(ErrorReport {
        global_e_i: ei.global,
        global_e_a: ea.global,
        per_element: ei
            .per_element
            .iter()
            .zip(&ea.per_element)
            .map(|(&e_i, &e_a)| ElementErrors { e_i, e_a })
            .collect(),
        cg_iterations,
    })
}

#[cfg(test)]
mod tests;
