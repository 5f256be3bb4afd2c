//! r-adaptation: minimize `F = sum_E int (N0)^2` over the free node coordinates.
//!
//! The gradient is analytic, including the dependence of `M(phi_P(xi))` on
//! the node positions. Hessian-vector products are central differences of
//! the gradient and feed a Jacobi-preconditioned conjugate gradient solve.
//! Steps are halved until the trial mesh is valid and satisfies Armijo.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{map_point, sample_lattice, BasisTable};
use crate::distortion::{distortion_terms, regularize, ElementContext, Objective};
use crate::error::{Error, Result};
use crate::mesh::{coords_matrix, HighOrderMesh};
use crate::metric::MetricField;
use crate::par::map_range;
use crate::stats::pairwise_sum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub rms_tol: f64,
    pub step_tol: f64,
    pub max_newton_iters: usize,
    pub max_pcg_iters: usize,
    pub pcg_rel_tol: f64,
    pub armijo_c1: f64,
    /// Quadrature points per direction; `None` means `3p`.
    pub n_1d: Option<usize>,
    pub objective: Objective,
    /// Record wallclock time per iteration (off keeps traces reproducible).
    pub record_time: bool,
    /// Also reject meshes whose Jacobian is non-positive on the `3p`-per-edge
    /// validity lattice, not only at the quadrature points.
    pub lattice_validity: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            rms_tol: 1e-4,
            step_tol: 1e-4,
            max_newton_iters: 50,
            max_pcg_iters: 50,
            pcg_rel_tol: 1e-2,
            armijo_c1: 1e-4,
            n_1d: None,
            objective: Objective::SizeShape,
            record_time: false,
            lattice_validity: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.rms_tol, self.step_tol, self.pcg_rel_tol, self.armijo_c1];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("optimizer tolerances must be positive and finite".into()));
        }
        if self.armijo_c1 >= 1.0 {
            return Err(Error::Config("Armijo constant must lie in (0, 1)".into()));
        }
        if self.max_pcg_iters == 0 || self.n_1d == Some(0) {
            return Err(Error::Config("iteration and quadrature counts must be positive".into()));
        }
        Ok(())
    }
}

/// Flat coordinate indices (`node * dim + axis`) that the optimizer may move.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    free: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &HighOrderMesh) -> Self {
        let d = mesh.dim();
        let free = mesh
            .constraints()
            .iter()
            .enumerate()
            .flat_map(|(i, c)| (0..d).filter(move |&a| !c.is_frozen(a)).map(move |a| i * d + a))
            .collect();
        Self { free }
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.free
    }

    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    /// `base` with `alpha * dir` added to the free entries.
    pub fn offset(&self, base: &[f64], dir: &[f64], alpha: f64) -> Vec<f64> {
        let mut out = base.to_vec();
        for (&i, v) in self.free.iter().zip(dir) {
            out[i] = base[i] + alpha * v;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub grad_rms: f64,
    pub step: f64,
    pub wallclock_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub coords: Vec<f64>,
    pub objective: f64,
    pub gradient: Vec<f64>,
    pub grad_rms: f64,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub termination: Option<Termination>,
    #[cfg(not(target_arch = "wasm32"))]
    started: Option<std::time::Instant>,
}

impl OptimizerState {
    fn elapsed_ms(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        if let Some(t) = self.started {
            return t.elapsed().as_secs_f64() * 1e3;
        }
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub mesh: HighOrderMesh,
    pub trace: Vec<TraceRow>,
    pub termination: Termination,
    pub iterations: usize,
}

struct ElementEval {
    value: f64,
    grad: Option<DMatrix<f64>>,
}

/// The distortion functional of a fixed topology under a fixed metric field.
#[derive(Debug, Clone)]
pub struct Optimizer<'a> {
    mesh: HighOrderMesh,
    field: &'a MetricField,
    ctx: ElementContext,
    config: OptimizerConfig,
    dofs: DofMap,
    p: DMatrix<f64>,
    weights: Vec<f64>,
    lattice: BasisTable,
    metric_grad: bool,
    fd_scale: f64,
}

impl<'a> Optimizer<'a> {
    pub fn new(mesh: &HighOrderMesh, field: &'a MetricField, config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        if field.dim() != mesh.dim() {
            return Err(Error::Config(format!(
                "metric field is {}-dimensional, mesh is {}-dimensional",
                field.dim(),
                mesh.dim()
            )));
        }
        let n_1d = config.n_1d.unwrap_or(3 * mesh.degree());
        let ctx = ElementContext::new(mesh.dim(), mesh.degree(), n_1d)?;
        let winv = ctx.frame().inverse().clone();
        let p = &winv * winv.transpose();
        let det = ctx.frame().det().abs();
        let weights = ctx.rule().weights.iter().map(|w| w * det).collect();
        let lattice = BasisTable::new(ctx.basis(), &sample_lattice(mesh.dim(), 3 * mesh.degree()));
        Ok(Self {
            dofs: DofMap::new(mesh),
            fd_scale: mesh.bbox_diagonal().max(f64::MIN_POSITIVE),
            mesh: mesh.clone(),
            field,
            ctx,
            config,
            p,
            weights,
            lattice,
            metric_grad: !field.is_constant(),
        })
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    fn element_eval(&self, coords: &[f64], e: usize, want_grad: bool) -> ElementEval {
        let d = self.mesh.dim();
        let x = coords_matrix(d, coords, self.mesh.element(e));
        let table: &BasisTable = self.ctx.table();
        let det_w = self.ctx.frame().inverse().determinant();
        let mut terms = Vec::with_capacity(self.weights.len());
        let mut grad = if want_grad { Some(DMatrix::zeros(d, x.ncols())) } else { None };
        let invalid = ElementEval {
            value: f64::INFINITY,
            grad: None,
        };
        // the validity lattice guards against inversion between quadrature points
        if self.config.lattice_validity && self.lattice.gradients.iter().any(|g| !((&x * g).determinant() > 0.0)) {
            return invalid;
        }
        for (q, &w) in self.weights.iter().enumerate() {
            let pos = map_point(&x, &table.values[q]);
            let j = &x * &table.gradients[q];
            let Ok(sample) = self.field.sample(&pos, want_grad && self.metric_grad, true) else {
                return invalid;
            };
            let m = &sample.m;
            let det_m = m.determinant();
            let det_j = j.determinant();
            let sigma = det_j * det_w * det_m.sqrt();
            if !(regularize(sigma) > 0.0) || !sigma.is_finite() {
                return invalid;
            }
            let mj = m * &j;
            let mjp = &mj * &self.p;
            let s2: f64 = j.iter().zip(mjp.iter()).map(|(a, b)| a * b).sum();
            let (n, dn_ds2, dn_dsig) = distortion_terms(s2, sigma, d, self.ctx_objective());
            terms.push(w * n * n);
            let Some(g) = grad.as_mut() else { continue };
            let scale = 2.0 * n * w;
            let Some(jinv) = j.clone().try_inverse() else { return invalid };
            // dF/dJ = 2n (dn/dS2 * 2 M J P + dn/dsigma * sigma J^{-T})
            let g_j = (&mjp * (2.0 * dn_ds2) + jinv.transpose() * (dn_dsig * sigma)) * scale;
            *g += &g_j * table.gradients[q].transpose();
            if !sample.grad.is_empty() {
                // dF/dM = 2n (dn/dS2 * J P J^T + dn/dsigma * sigma/2 M^{-1})
                let Some(minv) = m.clone().try_inverse() else { return invalid };
                let jpjt = &j * &self.p * j.transpose();
                let g_m = (jpjt * dn_ds2 + minv * (0.5 * dn_dsig * sigma)) * scale;
                for (a, dm) in sample.grad.iter().enumerate() {
                    let c: f64 = g_m.iter().zip(dm.iter()).map(|(u, v)| u * v).sum();
                    for (i, &ni) in table.values[q].iter().enumerate() {
                        g[(a, i)] += c * ni;
                    }
                }
            }
        }
        ElementEval {
            value: pairwise_sum(&terms),
            grad,
        }
    }

    fn ctx_objective(&self) -> Objective {
        self.config.objective
    }

    /// Per-element contributions to the objective (infinite for invalid elements).
    pub fn element_values(&self, coords: &[f64]) -> Vec<f64> {
        map_range(self.mesh.element_count(), |e| self.element_eval(coords, e, false).value)
    }

    /// Objective at the given flat coordinates; `+inf` if any sample is invalid.
    pub fn objective(&self, coords: &[f64]) -> f64 {
        let values = self.element_values(coords);
        if values.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        pairwise_sum(&values)
    }

    /// Objective and gradient over the free coordinates, or `None` if invalid.
    pub fn gradient(&self, coords: &[f64]) -> Option<(f64, Vec<f64>)> {
        let d = self.mesh.dim();
        let evals = map_range(self.mesh.element_count(), |e| self.element_eval(coords, e, true));
        let mut full = vec![0.0; coords.len()];
        let mut values = Vec::with_capacity(evals.len());
        for (e, ev) in evals.into_iter().enumerate() {
            let g = ev.grad?;
            values.push(ev.value);
            for (i, &node) in self.mesh.element(e).iter().enumerate() {
                for a in 0..d {
                    full[node * d + a] += g[(a, i)];
                }
            }
        }
        Some((pairwise_sum(&values), self.dofs.gather(&full)))
    }

    /// Central difference of the gradient along `v` (free coordinates).
    pub fn hess_vec(&self, coords: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Some(vec![0.0; v.len()]);
        }
        let mut eps = 1e-5 * self.fd_scale / norm;
        for _ in 0..8 {
            let plus = self.gradient(&self.dofs.offset(coords, v, eps));
            let minus = self.gradient(&self.dofs.offset(coords, v, -eps));
            if let (Some((_, gp)), Some((_, gm))) = (plus, minus) {
                return Some(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect());
            }
            eps *= 0.25;
        }
        None
    }

    /// Jacobi preconditioner: element-local central differences of the
    /// element gradients, summed per free coordinate.
    fn hessian_diagonal(&self, coords: &[f64]) -> Vec<f64> {
        let d = self.mesh.dim();
        let h = 1e-5 * self.fd_scale;
        let locals = map_range(self.mesh.element_count(), |e| {
            let conn = self.mesh.element(e);
            let mut out = Vec::with_capacity(conn.len() * d);
            let mut work = coords.to_vec();
            for (i, &node) in conn.iter().enumerate() {
                for a in 0..d {
                    let k = node * d + a;
                    work[k] = coords[k] + h;
                    let gp = self.element_eval(&work, e, true).grad;
                    work[k] = coords[k] - h;
                    let gm = self.element_eval(&work, e, true).grad;
                    work[k] = coords[k];
                    let val = match (gp, gm) {
                        (Some(gp), Some(gm)) => (gp[(a, i)] - gm[(a, i)]) / (2.0 * h),
                        _ => 0.0,
                    };
                    out.push((k, val));
                }
            }
            out
        });
        let mut full = vec![0.0; coords.len()];
        for local in locals {
            for (k, v) in local {
                full[k] += v;
            }
        }
        let diag = self.dofs.gather(&full);
        let positive: Vec<f64> = diag.iter().copied().filter(|v| *v > 0.0 && v.is_finite()).collect();
        let fallback = if positive.is_empty() { 1.0 } else { pairwise_sum(&positive) / positive.len() as f64 };
        diag.into_iter()
            .map(|v| if v > 0.0 && v.is_finite() { v } else { fallback })
            .collect()
    }

    /// Inexact Newton direction from preconditioned CG on `H d = -g`.
    fn newton_direction(&self, coords: &[f64], g: &[f64], diag: &[f64]) -> Vec<f64> {
        let n = g.len();
        let mut x = vec![0.0; n];
        let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut z: Vec<f64> = r.iter().zip(diag).map(|(a, b)| a / b).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let g_norm = dot(g, g).sqrt();
        for it in 0..self.config.max_pcg_iters {
            let Some(hp) = self.hess_vec(coords, &p) else { break };
            let curv = dot(&p, &hp);
            if !(curv > 0.0) {
                if it == 0 {
                    return z;
                }
                break;
            }
            let alpha = rz / curv;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * hp[i];
            }
            if dot(&r, &r).sqrt() <= self.config.pcg_rel_tol * g_norm {
                break;
            }
            z = r.iter().zip(diag).map(|(a, b)| a / b).collect();
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        x
    }

    /// Elements whose objective contribution is infinite.
    pub fn invalid_elements(&self, coords: &[f64]) -> Vec<usize> {
        self.element_values(coords)
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_finite())
            .map(|(e, _)| e)
            .collect()
    }

    pub fn start(&self, mesh: &HighOrderMesh) -> Result<OptimizerState> {
        if mesh.coords().len() != self.mesh.coords().len() || mesh.elements() != self.mesh.elements() {
            return Err(Error::Config("mesh topology differs from the optimizer's".into()));
        }
        let coords = mesh.coords().to_vec();
        let Some((objective, gradient)) = self.gradient(&coords) else {
            return Err(Error::InvalidMesh {
                elements: self.invalid_elements(&coords),
            });
        };
        let grad_rms = rms(&gradient);
        let mut state = OptimizerState {
            coords,
            objective,
            gradient,
            grad_rms,
            trace: Vec::new(),
            iterations: 0,
            termination: None,
            #[cfg(not(target_arch = "wasm32"))]
            started: self.config.record_time.then(std::time::Instant::now),
        };
        state.trace.push(TraceRow {
            iter: 0,
            objective,
            grad_rms,
            step: 0.0,
            wallclock_ms: state.elapsed_ms(),
        });
        Ok(state)
    }

    /// One Newton iteration. Returns `false` once the state has terminated.
    pub fn step(&self, state: &mut OptimizerState) -> bool {
        if state.termination.is_some() {
            return false;
        }
        if self.dofs.is_empty() || state.grad_rms <= self.config.rms_tol {
            state.termination = Some(Termination::GradientTolerance);
            return false;
        }
        if state.iterations >= self.config.max_newton_iters {
            state.termination = Some(Termination::MaxIterations);
            return false;
        }
        let g = &state.gradient;
        let diag = self.hessian_diagonal(&state.coords);
        let steepest: Vec<f64> = g.iter().zip(&diag).map(|(v, h)| -v / h).collect();
        let newton = self.newton_direction(&state.coords, g, &diag);
        // a Newton direction blocked by the validity barrier gets one retry
        // along steepest descent before the step floor ends the run
        let candidates = if dot(g, &newton) < 0.0 { vec![newton, steepest] } else { vec![steepest] };
        for dir in candidates {
            if let Some((coords, f, g, step)) = self.line_search(state, &dir) {
                state.coords = coords;
                state.objective = f;
                state.grad_rms = rms(&g);
                state.gradient = g;
                state.iterations += 1;
                state.trace.push(TraceRow {
                    iter: state.iterations,
                    objective: f,
                    grad_rms: state.grad_rms,
                    step,
                    wallclock_ms: state.elapsed_ms(),
                });
                return true;
            }
        }
        state.termination = Some(Termination::StepTolerance);
        false
    }

    /// Halve from the full step until the trial is valid and satisfies Armijo,
    /// or the step length drops below the floor.
    fn line_search(&self, state: &OptimizerState, dir: &[f64]) -> Option<(Vec<f64>, f64, Vec<f64>, f64)> {
        let slope = dot(&state.gradient, dir);
        let dir_max = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut alpha = 1.0;
        loop {
            let step = alpha * dir_max;
            if !(step >= self.config.step_tol) {
                return None;
            }
            let trial = self.dofs.offset(&state.coords, dir, alpha);
            let f = self.objective(&trial);
            if f.is_finite() && f <= state.objective + self.config.armijo_c1 * alpha * slope && f < state.objective {
                if let Some((f, g)) = self.gradient(&trial) {
                    return Some((trial, f, g, step));
                }
            }
            alpha *= 0.5;
        }
    }

    pub fn mesh_at(&self, coords: &[f64]) -> HighOrderMesh {
        let mut m = self.mesh.clone();
        m.set_coords(coords.to_vec());
        m
    }

    pub fn run(&self, mesh: &HighOrderMesh) -> Result<OptimizeResult> {
        let mut state = self.start(mesh)?;
        while self.step(&mut state) {}
        Ok(OptimizeResult {
            mesh: self.mesh_at(&state.coords),
            trace: state.trace,
            termination: state.termination.expect("loop ends on termination"),
            iterations: state.iterations,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rms(g: &[f64]) -> f64 {
    if g.is_empty() {
        0.0
    } else {
        (dot(g, g) / g.len() as f64).sqrt()
    }
}

pub fn objective(mesh: &HighOrderMesh, field: &MetricField, config: &OptimizerConfig) -> Result<f64> {
    Ok(Optimizer::new(mesh, field, config.clone())?.objective(mesh.coords()))
}

/// Gradient over the free coordinates; fails on an invalid mesh.
pub fn gradient(mesh: &HighOrderMesh, field: &MetricField, config: &OptimizerConfig) -> Result<Vec<f64>> {
    let opt = Optimizer::new(mesh, field, config.clone())?;
    opt.gradient(mesh.coords())
        .map(|(_, g)| g)
        .ok_or_else(|| Error::InvalidMesh {
            elements: opt.invalid_elements(mesh.coords()),
        })
}

pub fn hess_vec(mesh: &HighOrderMesh, field: &MetricField, config: &OptimizerConfig, v: &[f64]) -> Result<Vec<f64>> {
    let opt = Optimizer::new(mesh, field, config.clone())?;
    if v.len() != opt.dofs.len() {
        return Err(Error::Config(format!("vector has {} entries, {} free coordinates", v.len(), opt.dofs.len())));
    }
    opt.hess_vec(mesh.coords(), v).ok_or_else(|| Error::InvalidMesh {
        elements: opt.invalid_elements(mesh.coords()),
    })
}

pub fn optimize(mesh: &HighOrderMesh, field: &MetricField, config: &OptimizerConfig) -> Result<OptimizeResult> {
    Optimizer::new(mesh, field, config.clone())?.run(mesh)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub invalid: Vec<usize>,
    /// Smallest regularized `sigma` over the samples of each element.
    pub min_sigma: Vec<f64>,
    /// Smallest pointwise quality over the samples of each element.
    pub min_quality: Vec<f64>,
    pub samples_per_element: usize,
}

/// Sample every element at the `per_edge`-point lattice plus the distortion
/// quadrature points and flag elements with a non-positive Jacobian.
pub fn verify_validity_with(
    mesh: &HighOrderMesh,
    field: &MetricField,
    per_edge: usize,
    objective: Objective,
) -> Result<ValidityReport> {
    let ctx = ElementContext::for_mesh(mesh)?;
    let mut points = sample_lattice(mesh.dim(), per_edge.max(2));
    points.extend(ctx.rule().points.iter().cloned());
    let table = BasisTable::new(ctx.basis(), &points);
    let winv = ctx.frame().inverse().clone();
    let per = map_range(mesh.element_count(), |e| -> Result<(f64, f64)> {
        let x = mesh.element_coords(e);
        let mut min_sigma = f64::INFINITY;
        let mut min_q = f64::INFINITY;
        for q in 0..points.len() {
            let a = &x * &table.gradients[q] * &winv;
            let pos = map_point(&x, &table.values[q]);
            let m = field.sample(&pos, false, true)?.m;
            let (_, sigma) = crate::distortion::frobenius_and_det_m(&a, &m);
            min_sigma = min_sigma.min(regularize(sigma));
            min_q = min_q.min(crate::distortion::quality(crate::distortion::distortion(&a, &m, objective)));
        }
        Ok((min_sigma, min_q))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ValidityReport {
        invalid: per.iter().enumerate().filter(|(_, (s, _))| !(*s > 0.0)).map(|(e, _)| e).collect(),
        min_sigma: per.iter().map(|p| p.0).collect(),
        min_quality: per.iter().map(|p| p.1).collect(),
        samples_per_element: points.len(),
    })
}

/// Validity at `3p` lattice points per edge plus the quadrature points.
pub fn verify_validity(mesh: &HighOrderMesh, field: &MetricField) -> Result<ValidityReport> {
    verify_validity_with(mesh, field, 3 * mesh.degree(), Objective::SizeShape)
}
