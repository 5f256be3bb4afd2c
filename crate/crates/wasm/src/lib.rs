//! Bindings behind `www/index.html`: the quality of a triangle with one free
//! vertex, a rotation sweep of an ideal element, and a step-wise optimization
//! of a small mesh under a boundary-layer metric.

use nalgebra::DMatrix;
use wasm_bindgen::prelude::*;

use metra_core::basis::{map_point, EquilateralFrame};
use metra_core::distortion::{distortion, mesh_report, quality, ElementContext, Objective};
use metra_core::mesh::{structured_mesh, BoxDomain, HighOrderMesh};
use metra_core::metric::{factorize, AnalyticMetric, BoundaryLayer, MetricField, MetricTensor};
use metra_core::optimize::{Optimizer, OptimizerConfig, OptimizerState};

fn objective(size_shape: bool) -> Objective {
    if size_shape {
        Objective::SizeShape
    } else {
        Objective::ShapeOnly
    }
}

/// `R(angle) diag(1/h1^2, 1/h2^2) R(angle)^T`, angle in radians.
pub fn oriented_metric(h1: f64, h2: f64, angle: f64) -> metra_core::Result<MetricTensor> {
    let (s, c) = angle.sin_cos();
    let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0 / (h1 * h1), 1.0 / (h2 * h2)]));
    MetricTensor::new(&r * d * r.transpose())
}

fn frame_inverse() -> DMatrix<f64> {
    EquilateralFrame::new(2).expect("2D frame").inverse().clone()
}

/// Quality of the triangle `(0,0), (1,0), (x,y)` on an `nx x ny` grid over
/// `[x0,x1] x [y0,y1]`, row by row from `y0`. Invalid inputs give NaN.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn triangle_quality_field(
    h1: f64,
    h2: f64,
    angle: f64,
    size_shape: bool,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    nx: usize,
    ny: usize,
) -> Vec<f64> {
    let Ok(m) = oriented_metric(h1, h2, angle) else {
        return vec![f64::NAN; nx * ny];
    };
    let w = frame_inverse();
    let step = |lo: f64, hi: f64, n: usize, i: usize| lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = step(y0, y1, ny, j);
        for i in 0..nx {
            let x = step(x0, x1, nx, i);
            let jac = DMatrix::from_row_slice(2, 2, &[1.0, x, 0.0, y]);
            out.push(quality(distortion(&(jac * &w), m.matrix(), objective(size_shape))));
        }
    }
    out
}

/// Quality of the ideal element of `diag(1/h1^2, 1/h2^2)` rotated by
/// `2 pi i / samples`, for `i = 0..samples`.
#[wasm_bindgen]
pub fn rotation_sweep(h1: f64, h2: f64, samples: usize, size_shape: bool) -> Vec<f64> {
    let Ok(m) = oriented_metric(h1, h2, 0.0) else {
        return vec![f64::NAN; samples];
    };
    let ideal = factorize(&m).ok().and_then(|f| f.try_inverse()).expect("SPD factor is invertible");
    (0..samples)
        .map(|i| {
            let (s, c) = (std::f64::consts::TAU * i as f64 / samples as f64).sin_cos();
            let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
            quality(distortion(&(r * &ideal), m.matrix(), objective(size_shape)))
        })
        .collect()
}

/// A structured mesh of `[-1/2, 1/2]^2` being optimized one Newton step at a time.
#[wasm_bindgen]
pub struct Session {
    mesh: HighOrderMesh,
    field: MetricField,
    config: OptimizerConfig,
    state: OptimizerState,
}

impl Session {
    pub fn create(n: usize, degree: usize, h_min: f64, size_shape: bool) -> metra_core::Result<Self> {
        let mesh = structured_mesh(&BoxDomain::centered_unit(2), 2, degree, n)?;
        let layer = BoundaryLayer {
            h_min,
            ..BoundaryLayer::reference()
        };
        layer.validate()?;
        let field = MetricField::Analytic(AnalyticMetric::BoundaryLayer2D(layer));
        let config = OptimizerConfig {
            objective: objective(size_shape),
            ..OptimizerConfig::default()
        };
        let state = Optimizer::new(&mesh, &field, config.clone())?.start(&mesh)?;
        Ok(Self {
            mesh,
            field,
            config,
            state,
        })
    }

    fn current(&self) -> HighOrderMesh {
        let mut m = self.mesh.clone();
        m.set_coords(self.state.coords.clone());
        m
    }

    pub fn qualities(&self) -> Vec<f64> {
        let mesh = self.current();
        ElementContext::for_mesh(&mesh)
            .and_then(|ctx| mesh_report(&mesh, &self.field, &ctx, self.config.objective))
            .map(|r| r.quality)
            .unwrap_or_default()
    }
}

#[wasm_bindgen]
impl Session {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, degree: usize, h_min: f64, size_shape: bool) -> Result<Session, JsError> {
        Self::create(n, degree, h_min, size_shape).map_err(|e| JsError::new(&e.to_string()))
    }

    /// One Newton iteration; `false` once converged or stalled.
    pub fn step(&mut self) -> bool {
        match Optimizer::new(&self.mesh, &self.field, self.config.clone()) {
            Ok(opt) => opt.step(&mut self.state),
            Err(_) => false,
        }
    }

    pub fn iteration(&self) -> usize {
        self.state.iterations
    }

    pub fn objective(&self) -> f64 {
        self.state.objective
    }

    pub fn grad_rms(&self) -> f64 {
        self.state.grad_rms
    }

    pub fn termination(&self) -> Option<String> {
        self.state.termination.map(|t| format!("{t:?}"))
    }

    pub fn element_count(&self) -> usize {
        self.mesh.element_count()
    }

    /// Per-element quality of the current mesh.
    pub fn element_quality(&self) -> Vec<f64> {
        self.qualities()
    }

    /// Closed boundary polylines, `3 * per_edge` points per element, flattened as x, y.
    pub fn outlines(&self, per_edge: usize) -> Vec<f64> {
        let per_edge = per_edge.max(1);
        let mesh = self.current();
        let Ok(ctx) = ElementContext::for_mesh(&mesh) else {
            return Vec::new();
        };
        let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let params: Vec<Vec<f64>> = (0..3)
            .flat_map(|k| {
                let (a, b) = (corners[k], corners[(k + 1) % 3]);
                (0..per_edge).map(move |i| {
                    let t = i as f64 / per_edge as f64;
                    vec![a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
                })
            })
            .collect();
        let values: Vec<Vec<f64>> = params.iter().map(|xi| ctx.basis().values(xi)).collect();
        let mut out = Vec::with_capacity(mesh.element_count() * params.len() * 2);
        for e in 0..mesh.element_count() {
            let coords = mesh.element_coords(e);
            for v in &values {
                out.extend(map_point(&coords, v));
            }
        }
        out
    }
}
