//! Riemannian metric tensors and metric fields.
//!
//! A field is either analytic (constant tensors, the axis-aligned preset and
//! the curved boundary-layer preset) or discrete: nodal tensors on a
//! background mesh blended in the log-Euclidean sense,
//! `M(x) = exp(sum_i N_i(xi(x)) log M_i)`.
//!
//! Every field can also report the spatial derivatives `dM/dx_a`, which the
//! optimizer needs because the distortion depends on `M(phi(xi))`.

mod discrete;
mod locate;

pub use discrete::DiscreteMetricField;
pub use locate::Locator;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

const EIGEN_FLOOR: f64 = 1e-300;

/// Symmetric positive definite `d x d` tensor (units of 1/length^2).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTensor(DMatrix<f64>);

impl MetricTensor {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::SingularMetric("metric must be a non-empty square matrix".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMetric("metric has non-finite entries".into()));
        }
        let scale = m.abs().max().max(f64::MIN_POSITIVE);
        if (&m - m.transpose()).abs().max() > 1e-12 * scale {
            return Err(Error::SingularMetric("metric is not symmetric".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        let min = sym.clone().symmetric_eigenvalues().min();
        if !(min > 0.0) {
            return Err(Error::SingularMetric(format!("metric has eigenvalue {min:e} <= 0")));
        }
        Ok(Self(sym))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    /// Build from the upper triangle in row-major order
    /// (`m11, m12, m22` in 2D; `m11, m12, m13, m22, m23, m33` in 3D).
    pub fn from_upper(dim: usize, upper: &[f64]) -> Result<Self> {
        if upper.len() != dim * (dim + 1) / 2 {
            return Err(Error::SingularMetric(format!(
                "expected {} upper-triangular entries, got {}",
                dim * (dim + 1) / 2,
                upper.len()
            )));
        }
        let mut m = DMatrix::zeros(dim, dim);
        let mut k = 0;
        for i in 0..dim {
            for j in i..dim {
                m[(i, j)] = upper[k];
                m[(j, i)] = upper[k];
                k += 1;
            }
        }
        Self::new(m)
    }

    pub fn to_upper(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            for j in i..d {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn det(&self) -> f64 {
        self.0.determinant()
    }
}

/// Matrix logarithm of an SPD tensor via its symmetric eigendecomposition.
pub fn metric_log(m: &MetricTensor) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.0.clone());
    if let Some(bad) = eig.eigenvalues.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::SingularMetric(format!("eigenvalue {bad:e} is not positive")));
    }
    let logs = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR).ln());
    Ok(recompose(&eig.eigenvectors, logs.as_slice()))
}

/// Matrix exponential of a symmetric matrix.
pub fn metric_exp(s: &DMatrix<f64>) -> Result<MetricTensor> {
    let m = sym_exp(s);
    MetricTensor::new(m)
}

pub(crate) fn sym_exp(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((s + s.transpose()) * 0.5);
    let e = eig.eigenvalues.map(f64::exp);
    recompose(&eig.eigenvectors, e.as_slice())
}

fn recompose(q: &DMatrix<f64>, values: &[f64]) -> DMatrix<f64> {
    let d = q.nrows();
    let mut out = DMatrix::zeros(d, d);
    for (k, &v) in values.iter().enumerate() {
        let col = q.column(k);
        out += v * &col * col.transpose();
    }
    out
}

/// `exp(S)` together with its directional derivatives along each `dS[a]`
/// (Daleckii–Krein formula).
pub(crate) fn sym_exp_with_derivatives(
    s: &DMatrix<f64>,
    ds: &[DMatrix<f64>],
) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let eig = SymmetricEigen::new((s + s.transpose()) * 0.5);
    let q = &eig.eigenvectors;
    let lam = &eig.eigenvalues;
    let d = s.nrows();
    let e: Vec<f64> = lam.iter().map(|l| l.exp()).collect();
    let m = recompose(q, &e);
    // first divided differences of exp
    let gamma = DMatrix::from_fn(d, d, |i, j| {
        let delta = lam[i] - lam[j];
        let mid = (0.5 * (lam[i] + lam[j])).exp();
        let h = 0.5 * delta;
        let sinhc = if h.abs() < 1e-4 {
            1.0 + h * h / 6.0
        } else {
            h.sinh() / h
        };
        mid * sinhc
    });
    let derivs = ds
        .iter()
        .map(|dsa| {
            let local = q.transpose() * dsa * q;
            q * local.component_mul(&gamma) * q.transpose()
        })
        .collect();
    (m, derivs)
}

/// Upper-triangular `F` with `F^T F = M`.
pub fn factorize(m: &MetricTensor) -> Result<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(m.0.clone())
        .ok_or_else(|| Error::SingularMetric("metric is not positive definite".into()))?;
    Ok(chol.l().transpose())
}

/// Metric value and, when requested, its spatial partial derivatives.
#[derive(Debug, Clone)]
pub struct MetricSample {
    pub m: DMatrix<f64>,
    /// `dM/dx_a`, one matrix per axis (empty when not requested).
    pub grad: Vec<DMatrix<f64>>,
}

/// The curved boundary-layer preset
/// `M = (1/h_m^2) grad(phi)^T diag(1, 1/h(t)^2) grad(phi)` with
/// `h(t) = h_min + alpha |t|` and `t = phi_2(x, y)`.
///
/// With deformation, `phi(x, y) = (x, (10 y - cos 2 pi x) / sqrt(100 + 4 pi^2))`;
/// `flip` changes the sign of the cosine so the layer follows
/// `10 y + cos 2 pi x = 0` instead. Without deformation `phi` is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryLayer {
    pub h_m: f64,
    pub h_min: f64,
    pub alpha: f64,
    pub deformation: bool,
    pub flip: bool,
}

impl BoundaryLayer {
    /// Parameters of the reference shape-versus-size-shape experiment.
    pub fn reference() -> Self {
        Self {
            h_m: 0.25,
            h_min: 0.01,
            alpha: 2.0,
            deformation: true,
            flip: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_m > 0.0 && self.h_min > 0.0 && self.alpha >= 0.0) {
            return Err(Error::Config(format!(
                "boundary layer needs h_m > 0, h_min > 0, alpha >= 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    fn sample(&self, x: &[f64], with_grad: bool) -> MetricSample {
        use std::f64::consts::PI;
        let (px, py) = (x[0], x[1]);
        let (t, g21, g22, dg21_dx) = if self.deformation {
            let c = (100.0 + 4.0 * PI * PI).sqrt();
            let s = if self.flip { 1.0 } else { -1.0 };
            let (sn, cs) = (2.0 * PI * px).sin_cos();
            (
                (10.0 * py + s * cs) / c,
                -2.0 * PI * s * sn / c,
                10.0 / c,
                -4.0 * PI * PI * s * cs / c,
            )
        } else {
            (py, 0.0, 1.0, 0.0)
        };
        let h = self.h_min + self.alpha * t.abs();
        let w = 1.0 / (h * h);
        let k = 1.0 / (self.h_m * self.h_m);
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                k * (1.0 + g21 * g21 * w),
                k * g21 * g22 * w,
                k * g21 * g22 * w,
                k * g22 * g22 * w,
            ],
        );
        let grad = if with_grad {
            let dw_dt = -2.0 * self.alpha * t.signum() / (h * h * h);
            let dt = [g21, g22];
            let dg21 = [dg21_dx, 0.0];
            (0..2)
                .map(|a| {
                    let dw = dw_dt * dt[a];
                    let m11 = 2.0 * g21 * dg21[a] * w + g21 * g21 * dw;
                    let m12 = g22 * (dg21[a] * w + g21 * dw);
                    let m22 = g22 * g22 * dw;
                    DMatrix::from_row_slice(2, 2, &[k * m11, k * m12, k * m12, k * m22])
                })
                .collect()
        } else {
            Vec::new()
        };
        MetricSample { m, grad }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticMetric {
    /// A single tensor everywhere.
    Constant(MetricTensor),
    /// `diag(1/h_a^2)`: unit metric length for vectors of length `h_a` along axis `a`.
    ConstantDiag { h: Vec<f64> },
    BoundaryLayer2D(BoundaryLayer),
}

impl AnalyticMetric {
    pub fn dim(&self) -> usize {
        match self {
            AnalyticMetric::Constant(m) => m.dim(),
            AnalyticMetric::ConstantDiag { h } => h.len(),
            AnalyticMetric::BoundaryLayer2D(_) => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AnalyticMetric::Constant(_) => Ok(()),
            AnalyticMetric::ConstantDiag { h } => {
                if h.is_empty() || h.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::Config(format!("sizes must be positive, got {h:?}")));
                }
                Ok(())
            }
            AnalyticMetric::BoundaryLayer2D(b) => b.validate(),
        }
    }

    fn sample(&self, x: &[f64], with_grad: bool) -> MetricSample {
        let d = self.dim();
        let zeros = || if with_grad { vec![DMatrix::zeros(d, d); d] } else { Vec::new() };
        match self {
            AnalyticMetric::Constant(m) => MetricSample {
                m: m.matrix().clone(),
                grad: zeros(),
            },
            AnalyticMetric::ConstantDiag { h } => MetricSample {
                m: DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 / (h[i] * h[i]) } else { 0.0 }),
                grad: zeros(),
            },
            AnalyticMetric::BoundaryLayer2D(b) => b.sample(x, with_grad),
        }
    }
}

#[derive(Debug, Clone)]
pub enum MetricField {
    Analytic(AnalyticMetric),
    Discrete(DiscreteMetricField),
}

impl MetricField {
    pub fn constant(m: MetricTensor) -> Self {
        MetricField::Analytic(AnalyticMetric::Constant(m))
    }

    pub fn identity(dim: usize) -> Self {
        Self::constant(MetricTensor::identity(dim))
    }

    pub fn dim(&self) -> usize {
        match self {
            MetricField::Analytic(a) => a.dim(),
            MetricField::Discrete(f) => f.dim(),
        }
    }

    /// Whether the tensor varies in space.
    pub fn is_constant(&self) -> bool {
        matches!(
            self,
            MetricField::Analytic(AnalyticMetric::Constant(_) | AnalyticMetric::ConstantDiag { .. })
        )
    }

    /// The tensor at `x`. Discrete fields fail outside the background mesh.
    pub fn eval(&self, x: &[f64]) -> Result<MetricTensor> {
        let s = self.sample(x, false, false)?;
        MetricTensor::new(s.m)
    }

    /// Raw sample, optionally with spatial derivatives. With `clamp`, discrete
    /// fields evaluate out-of-domain points at the nearest background point.
    pub fn sample(&self, x: &[f64], with_grad: bool, clamp: bool) -> Result<MetricSample> {
        if x.len() != self.dim() {
            return Err(Error::Config(format!(
                "point has {} coordinates, metric field is {}-dimensional",
                x.len(),
                self.dim()
            )));
        }
        match self {
            MetricField::Analytic(a) => Ok(a.sample(x, with_grad)),
            MetricField::Discrete(f) => f.sample(x, with_grad, clamp),
        }
    }
}
