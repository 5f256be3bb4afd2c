//! Metric-aware shape, size and size-shape distortion of curved simplices.
//!
//! At a master point `xi` the element is compared with the unit-edge regular
//! simplex through `A = D(phi_P)(xi) * D(phi_eq)^{-1}`. With
//! `S^2 = tr(A^T M A)` and the signed `sigma = det(A) sqrt(det M)`:
//!
//! * shape: `S^2 / (d sigma0^{2/d})`
//! * size: `((sigma0 + 1/sigma0) / 2)^{2/d}`
//!
//! where `sigma0 = (sigma + |sigma|) / 2` so that inverted points give
//! infinite distortion and zero quality.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{map_point, quadrature, BasisTable, EquilateralFrame, LagrangeBasis, MasterSimplex, QuadratureRule};
use crate::error::{Error, Result};
use crate::mesh::HighOrderMesh;
use crate::metric::MetricField;
use crate::par::map_range;
use crate::stats::{pairwise_sum, Stats};

/// Which pointwise distortion is measured or minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    #[default]
    SizeShape,
    ShapeOnly,
}

/// `(S_M, sigma_M)` for a mixed Jacobian `A` under the tensor `m`.
pub fn frobenius_and_det_m(a: &DMatrix<f64>, m: &DMatrix<f64>) -> (f64, f64) {
    let s2 = frobenius_sq(a, m);
    (s2.sqrt(), a.determinant() * m.determinant().sqrt())
}

fn frobenius_sq(a: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let ma = m * a;
    a.iter().zip(ma.iter()).map(|(x, y)| x * y).sum()
}

/// `(sigma + |sigma|) / 2`.
pub fn regularize(sigma: f64) -> f64 {
    0.5 * (sigma + sigma.abs())
}

pub fn shape_distortion(s: f64, sigma0: f64, d: usize) -> f64 {
    if sigma0 <= 0.0 {
        return f64::INFINITY;
    }
    s * s / (d as f64 * sigma0.powf(2.0 / d as f64))
}

pub fn size_distortion(sigma0: f64, d: usize) -> f64 {
    if sigma0 <= 0.0 {
        return f64::INFINITY;
    }
    (0.5 * (sigma0 + 1.0 / sigma0)).powf(2.0 / d as f64)
}

pub fn sizeshape_distortion(s: f64, sigma0: f64, d: usize) -> f64 {
    if sigma0 <= 0.0 {
        return f64::INFINITY;
    }
    shape_distortion(s, sigma0, d) * size_distortion(sigma0, d)
}

/// Regularized pointwise distortion for `A` under `m`.
pub fn distortion(a: &DMatrix<f64>, m: &DMatrix<f64>, objective: Objective) -> f64 {
    let d = a.nrows();
    let (s, sigma) = frobenius_and_det_m(a, m);
    let sigma0 = regularize(sigma);
    match objective {
        Objective::SizeShape => sizeshape_distortion(s, sigma0, d),
        Objective::ShapeOnly => shape_distortion(s, sigma0, d),
    }
}

/// `1 / eta`, and 0 for infinite or undefined distortion.
pub fn quality(eta: f64) -> f64 {
    if eta.is_finite() && eta > 0.0 {
        1.0 / eta
    } else {
        0.0
    }
}

/// Distortion and its partials with respect to `S^2` and `sigma`, for `sigma > 0`.
pub(crate) fn distortion_terms(s2: f64, sigma: f64, d: usize, objective: Objective) -> (f64, f64, f64) {
    let df = d as f64;
    let e = 2.0 / df;
    let sp = sigma.powf(-e);
    let shape = s2 * sp / df;
    let dshape_ds2 = sp / df;
    let dshape_dsigma = -e * shape / sigma;
    match objective {
        Objective::ShapeOnly => (shape, dshape_ds2, dshape_dsigma),
        Objective::SizeShape => {
            let base = 0.5 * (sigma + 1.0 / sigma);
            let size = base.powf(e);
            let dsize = e * base.powf(e - 1.0) * 0.5 * (1.0 - 1.0 / (sigma * sigma));
            (shape * size, dshape_ds2 * size, dshape_dsigma * size + shape * dsize)
        }
    }
}

/// Basis tables, quadrature and equilateral frame shared by every element of
/// a given dimension and degree.
#[derive(Debug, Clone)]
pub struct ElementContext {
    master: MasterSimplex,
    basis: LagrangeBasis,
    rule: QuadratureRule,
    table: BasisTable,
    frame: EquilateralFrame,
}

impl ElementContext {
    pub fn new(dim: usize, degree: usize, n_1d: usize) -> Result<Self> {
        if n_1d == 0 {
            return Err(Error::Config("quadrature needs at least one point per direction".into()));
        }
        let master = MasterSimplex::new(dim, degree)?;
        let basis = LagrangeBasis::new(&master)?;
        let rule = quadrature(dim, n_1d);
        let table = BasisTable::new(&basis, &rule.points);
        let frame = EquilateralFrame::new(dim)?;
        Ok(Self {
            master,
            basis,
            rule,
            table,
            frame,
        })
    }

    /// Default distortion quadrature: `3p` points per direction.
    pub fn for_mesh(mesh: &HighOrderMesh) -> Result<Self> {
        Self::new(mesh.dim(), mesh.degree(), 3 * mesh.degree())
    }

    pub fn dim(&self) -> usize {
        self.master.dim()
    }

    pub fn degree(&self) -> usize {
        self.master.degree()
    }

    pub fn master(&self) -> &MasterSimplex {
        &self.master
    }

    pub fn basis(&self) -> &LagrangeBasis {
        &self.basis
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn table(&self) -> &BasisTable {
        &self.table
    }

    pub fn frame(&self) -> &EquilateralFrame {
        &self.frame
    }

    pub(crate) fn check(&self, mesh: &HighOrderMesh) -> Result<()> {
        if mesh.dim() != self.dim() || mesh.degree() != self.degree() {
            return Err(Error::Config(format!(
                "context is for dim {} degree {}, mesh is dim {} degree {}",
                self.dim(),
                self.degree(),
                mesh.dim(),
                mesh.degree()
            )));
        }
        Ok(())
    }

    /// Regularized distortion of element `e` at an arbitrary master point.
    pub fn pointwise(
        &self,
        mesh: &HighOrderMesh,
        e: usize,
        field: &MetricField,
        xi: &[f64],
        objective: Objective,
    ) -> Result<f64> {
        self.check(mesh)?;
        let coords = mesh.element_coords(e);
        let x = map_point(&coords, &self.basis.values(xi));
        let a = &coords * self.basis.gradients(xi) * self.frame.inverse();
        let m = field.sample(&x, false, false)?.m;
        Ok(distortion(&a, &m, objective))
    }

    /// Distortion at each quadrature point of element `e`.
    pub fn quadrature_distortions(
        &self,
        mesh: &HighOrderMesh,
        e: usize,
        field: &MetricField,
        objective: Objective,
    ) -> Result<Vec<f64>> {
        let coords = mesh.element_coords(e);
        (0..self.rule.len())
            .map(|q| {
                let x = map_point(&coords, &self.table.values[q]);
                let a = &coords * &self.table.gradients[q] * self.frame.inverse();
                let m = field.sample(&x, false, false)?.m;
                Ok(distortion(&a, &m, objective))
            })
            .collect()
    }
}

/// Elemental distortion `eta0`, its quality and the pointwise qualities at
/// the quadrature points.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementDistortion {
    pub eta: f64,
    pub quality: f64,
    pub samples: Vec<f64>,
}

/// Quadrature average of the regularized pointwise distortion over element `e`.
pub fn elemental_distortion(
    mesh: &HighOrderMesh,
    e: usize,
    field: &MetricField,
    ctx: &ElementContext,
    objective: Objective,
) -> Result<ElementDistortion> {
    ctx.check(mesh)?;
    let etas = ctx.quadrature_distortions(mesh, e, field, objective)?;
    let samples: Vec<f64> = etas.iter().map(|&v| quality(v)).collect();
    let eta = if etas.iter().all(|v| v.is_finite()) {
        let terms: Vec<f64> = etas.iter().zip(&ctx.rule.weights).map(|(v, w)| v * w).collect();
        pairwise_sum(&terms) / pairwise_sum(&ctx.rule.weights)
    } else {
        f64::INFINITY
    };
    Ok(ElementDistortion {
        eta,
        quality: quality(eta),
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionReport {
    pub eta: Vec<f64>,
    pub quality: Vec<f64>,
    /// Pointwise qualities at the quadrature points, per element.
    pub pointwise: Vec<Vec<f64>>,
    pub stats: Stats,
    pub invalid: Vec<usize>,
}

pub fn mesh_report(
    mesh: &HighOrderMesh,
    field: &MetricField,
    ctx: &ElementContext,
    objective: Objective,
) -> Result<DistortionReport> {
    ctx.check(mesh)?;
    let per_element = map_range(mesh.element_count(), |e| elemental_distortion(mesh, e, field, ctx, objective))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut report = DistortionReport {
        eta: Vec::with_capacity(per_element.len()),
        quality: Vec::with_capacity(per_element.len()),
        pointwise: Vec::with_capacity(per_element.len()),
        stats: Stats::from_values(&[]),
        invalid: Vec::new(),
    };
    for (e, d) in per_element.into_iter().enumerate() {
        if d.quality == 0.0 {
            report.invalid.push(e);
        }
        report.eta.push(d.eta);
        report.quality.push(d.quality);
        report.pointwise.push(d.samples);
    }
    report.stats = Stats::from_values(&report.quality);
    Ok(report)
}
