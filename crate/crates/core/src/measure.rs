//! Metric-aware lengths, areas and volumes of mesh entities.
//!
//! For a k-entity with Jacobian `J` (d x k) the pointwise density is
//! `rho = sqrt(det(J^T M J) / det(T^T T))`, `T` being the unit-edge regular
//! k-simplex frame. The normalized measure of the entity is the master-simplex
//! average of `rho`; it equals 1 when every point has unit metric density.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{map_point, quadrature, BasisTable, EquilateralFrame, LagrangeBasis, MasterSimplex, QuadratureRule};
use crate::error::{Error, Result};
use crate::mesh::{coords_matrix, sub_entities, EntityRef, HighOrderMesh};
use crate::metric::MetricField;
use crate::par::map_range;
use crate::stats::{pairwise_sum, Stats};

pub const DEFAULT_BINS: usize = 64;

/// Basis and quadrature of the degree-p k-simplex.
#[derive(Debug, Clone)]
pub struct EntityContext {
    k: usize,
    basis: LagrangeBasis,
    rule: QuadratureRule,
    table: BasisTable,
    frame_det_sq: f64,
}

impl EntityContext {
    pub fn new(k: usize, degree: usize, n_1d: usize) -> Result<Self> {
        if n_1d == 0 {
            return Err(Error::Config("quadrature needs at least one point per direction".into()));
        }
        let master = MasterSimplex::new(k, degree)?;
        let basis = LagrangeBasis::new(&master)?;
        let rule = quadrature(k, n_1d);
        let table = BasisTable::new(&basis, &rule.points);
        let det = EquilateralFrame::new(k)?.det();
        Ok(Self {
            k,
            basis,
            rule,
            table,
            frame_det_sq: det * det,
        })
    }

    /// `3p` points per direction.
    pub fn for_degree(k: usize, degree: usize) -> Result<Self> {
        Self::new(k, degree, 3 * degree)
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    fn density_from(&self, coords: &DMatrix<f64>, grads: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
        let j = coords * grads;
        let g = j.transpose() * m * &j;
        let det = g.determinant();
        if det > 0.0 {
            (det / self.frame_det_sq).sqrt()
        } else {
            0.0
        }
    }

    /// Density at an arbitrary master point of an entity given by its node
    /// coordinates (d x n_k, canonical k-simplex layout).
    pub fn density(&self, coords: &DMatrix<f64>, field: &MetricField, xi: &[f64]) -> Result<f64> {
        let x = map_point(coords, &self.basis.values(xi));
        let m = field.sample(&x, false, false)?.m;
        Ok(self.density_from(coords, &self.basis.gradients(xi), &m))
    }

    /// Normalized measure and the density at each quadrature point.
    pub fn measure(&self, coords: &DMatrix<f64>, field: &MetricField) -> Result<EntityMeasure> {
        let rho = (0..self.rule.len())
            .map(|q| {
                let x = map_point(coords, &self.table.values[q]);
                let m = field.sample(&x, false, false)?.m;
                Ok(self.density_from(coords, &self.table.gradients[q], &m))
            })
            .collect::<Result<Vec<f64>>>()?;
        let total = pairwise_sum(&self.rule.weights);
        let terms: Vec<f64> = rho.iter().zip(&self.rule.weights).map(|(r, w)| r * w).collect();
        Ok(EntityMeasure {
            value: pairwise_sum(&terms) / total,
            singular: rho.contains(&0.0),
            weights: self.rule.weights.iter().map(|w| w / total).collect(),
            density: rho,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityMeasure {
    pub value: f64,
    /// Pointwise densities at the quadrature points.
    pub density: Vec<f64>,
    /// Quadrature weights normalized to sum to 1.
    pub weights: Vec<f64>,
    /// Some sample had a singular Jacobian (density set to 0).
    pub singular: bool,
}

pub fn entity_coords(mesh: &HighOrderMesh, entity: &EntityRef) -> DMatrix<f64> {
    coords_matrix(mesh.dim(), mesh.coords(), &entity.nodes)
}

pub fn density(mesh: &HighOrderMesh, entity: &EntityRef, field: &MetricField, xi: &[f64]) -> Result<f64> {
    let ctx = EntityContext::for_degree(entity.dim, mesh.degree())?;
    ctx.density(&entity_coords(mesh, entity), field, xi)
}

pub fn entity_measure(
    mesh: &HighOrderMesh,
    entity: &EntityRef,
    field: &MetricField,
    ctx: &EntityContext,
) -> Result<EntityMeasure> {
    if ctx.k != entity.dim {
        return Err(Error::Config(format!(
            "context is for {}-entities, entity has dimension {}",
            ctx.k, entity.dim
        )));
    }
    ctx.measure(&entity_coords(mesh, entity), field)
}

/// Mass per log2-spaced bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
    /// Mass of zero-density samples, which have no place on a log axis.
    pub zero_mass: f64,
}

impl Histogram {
    pub fn log2(samples: &[(f64, f64)], bins: usize) -> Self {
        let bins = bins.max(1);
        let positive = samples.iter().filter(|(v, _)| *v > 0.0);
        let lo = positive.clone().map(|(v, _)| v.log2()).fold(f64::INFINITY, f64::min);
        let hi = positive.map(|(v, _)| v.log2()).fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if !lo.is_finite() {
            (-0.5, 0.5)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| (lo + i as f64 * width).exp2()).collect();
        let mut mass = vec![0.0; bins];
        let mut zero_mass = 0.0;
        for &(v, w) in samples {
            if v > 0.0 {
                let i = (((v.log2() - lo) / width).floor().max(0.0) as usize).min(bins - 1);
                mass[i] += w;
            } else {
                zero_mass += w;
            }
        }
        Self { edges, mass, zero_mass }
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.zero_mass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureHistogram {
    pub k: usize,
    /// Statistics of the entity-wise normalized measures.
    pub stats: Stats,
    /// Quadrature-weighted pointwise densities.
    pub histogram: Histogram,
    pub entities: usize,
    pub singular: Vec<usize>,
    #[serde(skip)]
    pub values: Vec<f64>,
}

/// Length (k = 1), area (k = 2) and, in 3D, volume statistics of every
/// deduplicated entity.
pub fn mesh_measures(mesh: &HighOrderMesh, field: &MetricField, bins: usize) -> Result<Vec<MeasureHistogram>> {
    (1..=mesh.dim())
        .map(|k| {
            let ctx = EntityContext::for_degree(k, mesh.degree())?;
            let entities = sub_entities(mesh, k)?;
            let measures = map_range(entities.len(), |i| entity_measure(mesh, &entities[i], field, &ctx))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let values: Vec<f64> = measures.iter().map(|m| m.value).collect();
            let samples: Vec<(f64, f64)> = measures
                .iter()
                .flat_map(|m| m.density.iter().copied().zip(m.weights.iter().copied()))
                .collect();
            Ok(MeasureHistogram {
                k,
                stats: Stats::from_values(&values),
                histogram: Histogram::log2(&samples, bins),
                entities: entities.len(),
                singular: measures.iter().enumerate().filter(|(_, m)| m.singular).map(|(i, _)| i).collect(),
                values,
            })
        })
        .collect()
}
