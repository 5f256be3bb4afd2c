use nalgebra::DMatrix;

use super::locate::{clamp_to_master, invert_map, min_barycentric};
use super::{metric_log, sym_exp, sym_exp_with_derivatives, Locator, MetricField, MetricSample, MetricTensor};
use crate::basis::{map_point, LagrangeBasis, MasterSimplex};
use crate::error::{Error, Result};
use crate::mesh::HighOrderMesh;

const INSIDE_TOL: f64 = 1e-8;

/// Nodal metric tensors on a background mesh, blended log-Euclidean.
#[derive(Debug, Clone)]
pub struct DiscreteMetricField {
    background: HighOrderMesh,
    nodal: Vec<MetricTensor>,
    logs: Vec<DMatrix<f64>>,
    basis: LagrangeBasis,
    element_coords: Vec<DMatrix<f64>>,
    locator: Locator,
    near_tol: f64,
    /// Straight (degree-1) backgrounds: per element, vertex 0 and the inverse Jacobian.
    affine: Vec<(Vec<f64>, DMatrix<f64>)>,
}

impl DiscreteMetricField {
    pub fn new(background: HighOrderMesh, nodal: Vec<MetricTensor>) -> Result<Self> {
        if nodal.len() != background.node_count() {
            return Err(Error::Config(format!(
                "{} nodal metrics for {} background nodes",
                nodal.len(),
                background.node_count()
            )));
        }
        if let Some(i) = nodal.iter().position(|m| m.dim() != background.dim()) {
            return Err(Error::Config(format!("nodal metric {i} has the wrong dimension")));
        }
        let logs = nodal.iter().map(metric_log).collect::<Result<Vec<_>>>()?;
        let master = MasterSimplex::new(background.dim(), background.degree())?;
        let basis = LagrangeBasis::new(&master)?;
        let element_coords: Vec<DMatrix<f64>> = (0..background.element_count())
            .map(|e| background.element_coords(e))
            .collect();
        let affine = if background.degree() == 1 {
            let grads = basis.gradients(&vec![0.0; background.dim()]);
            element_coords
                .iter()
                .enumerate()
                .map(|(e, x)| {
                    let inv = (x * &grads).try_inverse().ok_or_else(|| {
                        Error::MeshIntegrity(format!("background element {e} is degenerate"))
                    })?;
                    Ok((x.column(0).iter().copied().collect(), inv))
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let locator = Locator::new(&background);
        let near_tol = INSIDE_TOL * background.bbox_diagonal().max(1.0);
        Ok(Self {
            background,
            nodal,
            logs,
            basis,
            element_coords,
            locator,
            near_tol,
            affine,
        })
    }

    /// Sample `f` at every background node.
    pub fn from_fn(background: HighOrderMesh, f: impl Fn(&[f64]) -> Result<MetricTensor>) -> Result<Self> {
        let nodal = background.nodes().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(background, nodal)
    }

    /// Discrete representation of another field on `background`.
    pub fn sample_field(background: HighOrderMesh, field: &MetricField) -> Result<Self> {
        Self::from_fn(background, |x| field.eval(x))
    }

    pub fn dim(&self) -> usize {
        self.background.dim()
    }

    pub fn background(&self) -> &HighOrderMesh {
        &self.background
    }

    pub fn nodal_metrics(&self) -> &[MetricTensor] {
        &self.nodal
    }

    fn try_element(&self, e: usize, x: &[f64]) -> Option<Vec<f64>> {
        if let Some((origin, inv)) = self.affine.get(e) {
            let d = origin.len();
            return Some(
                (0..d)
                    .map(|r| (0..d).map(|c| inv[(r, c)] * (x[c] - origin[c])).sum())
                    .collect(),
            );
        }
        invert_map(&self.element_coords[e], &self.basis, x)
    }

    /// Containing element and master coordinates of `x`. With `clamp`, points
    /// outside the background resolve to the nearest element point.
    pub fn locate(&self, x: &[f64], clamp: bool) -> Result<(usize, Vec<f64>)> {
        let candidates = self.locator.candidates(x);
        for &e in candidates {
            if let Some(xi) = self.try_element(e, x) {
                if min_barycentric(&xi) >= -INSIDE_TOL {
                    return Ok((e, xi));
                }
            }
        }
        // exhaustive fallback, remembering the nearest projection
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for e in 0..self.background.element_count() {
            let Some(xi) = self.try_element(e, x) else { continue };
            if min_barycentric(&xi) >= -INSIDE_TOL {
                return Ok((e, xi));
            }
            let xc = clamp_to_master(&xi);
            let pos = map_point(&self.element_coords[e], &self.basis.values(&xc));
            let dist = pos.iter().zip(x).map(|(p, t)| (p - t).powi(2)).sum::<f64>().sqrt();
            if best.as_ref().is_none_or(|b| dist < b.0) {
                best = Some((dist, e, xc));
            }
        }
        match best {
            Some((dist, e, xi)) if clamp || dist <= self.near_tol => Ok((e, xi)),
            Some(_) => Err(Error::OutOfDomain { point: x.to_vec() }),
            None => Err(Error::Location(format!("no background element inverts at {x:?}"))),
        }
    }

    fn blended_log(&self, e: usize, xi: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let vals = self.basis.values(xi);
        let mut s = DMatrix::zeros(d, d);
        for (&n, v) in self.background.element(e).iter().zip(&vals) {
            s += &self.logs[n] * *v;
        }
        s
    }

    /// Log-Euclidean interpolation at `x`.
    pub fn interpolate(&self, x: &[f64]) -> Result<MetricTensor> {
        let (e, xi) = self.locate(x, false)?;
        MetricTensor::new(sym_exp(&self.blended_log(e, &xi)))
    }

    pub(crate) fn sample(&self, x: &[f64], with_grad: bool, clamp: bool) -> Result<MetricSample> {
        let (e, xi) = self.locate(x, clamp)?;
        let s = self.blended_log(e, &xi);
        if !with_grad {
            return Ok(MetricSample {
                m: sym_exp(&s),
                grad: Vec::new(),
            });
        }
        let d = self.dim();
        let grads = self.basis.gradients(&xi);
        let jinv = match self.affine.get(e) {
            Some((_, inv)) => inv.clone(),
            None => (&self.element_coords[e] * &grads)
                .try_inverse()
                .ok_or_else(|| Error::Location(format!("degenerate background element {e}")))?,
        };
        // d(shape_i)/dx = grad_xi N_i . J^{-1}
        let dn = &grads * &jinv;
        let ds: Vec<DMatrix<f64>> = (0..d)
            .map(|a| {
                let mut m = DMatrix::zeros(d, d);
                for (i, &n) in self.background.element(e).iter().enumerate() {
                    m += &self.logs[n] * dn[(i, a)];
                }
                m
            })
            .collect();
        let (m, grad) = sym_exp_with_derivatives(&s, &ds);
        Ok(MetricSample { m, grad })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{structured_mesh, BoundaryConstraint, BoxDomain};
    use crate::metric::metric_log;
    use crate::metric::tests::random_spd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_metric(x: &[f64]) -> MetricTensor {
        // exp of a smooth symmetric field
        let (a, b) = (x[0], x[1]);
        let s = DMatrix::from_row_slice(
            2,
            2,
            &[(2.0 * a).sin() + b, 0.3 * (a * b).cos(), 0.3 * (a * b).cos(), 1.0 + a * a - b],
        );
        MetricTensor::new(sym_exp(&s)).unwrap()
    }

    #[test]
    fn constant_nodal_data_is_reproduced() {
        let bg = structured_mesh(&BoxDomain::centered_unit(2), 2, 2, 3).unwrap();
        let m0 = MetricTensor::from_upper(2, &[3.0, 0.5, 2.0]).unwrap();
        let f = DiscreteMetricField::new(bg.clone(), vec![m0.clone(); bg.node_count()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let m = f.interpolate(&x).unwrap();
            assert!((m.matrix() - m0.matrix()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn linear_edge_blend_is_geometric_mean() {
        // a single linear triangle: on the edge between nodes 0 and 1, the midpoint
        // value of the log-blend of diag(a) and diag(b) is diag(sqrt(ab))
        let nodes = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let bg = HighOrderMesh::new(2, 1, nodes, vec![vec![0, 1, 2]], vec![BoundaryConstraint::Free; 3]).unwrap();
        let a = MetricTensor::from_diagonal(&[2.0, 5.0]).unwrap();
        let b = MetricTensor::from_diagonal(&[8.0, 0.2]).unwrap();
        let f = DiscreteMetricField::new(bg, vec![a, b, MetricTensor::identity(2)]).unwrap();
        let m = f.interpolate(&[0.5, 0.0]).unwrap();
        assert!((m.matrix()[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((m.matrix()[(1, 1)] - 1.0).abs() < 1e-12);
        assert!(m.matrix()[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn nodal_values_are_reproduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let bg = structured_mesh(&BoxDomain::centered_unit(2), 2, 2, 2).unwrap();
        let nodal: Vec<MetricTensor> = (0..bg.node_count()).map(|_| random_spd(&mut rng, 2)).collect();
        let f = DiscreteMetricField::new(bg.clone(), nodal.clone()).unwrap();
        for (x, m) in bg.nodes().zip(&nodal) {
            let got = f.interpolate(x).unwrap();
            assert!((got.matrix() - m.matrix()).abs().max() < 1e-10 * m.matrix().abs().max());
        }
    }

    #[test]
    fn interpolated_metrics_are_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bg = structured_mesh(&BoxDomain::centered_unit(3), 3, 2, 2).unwrap();
        let nodal: Vec<MetricTensor> = (0..bg.node_count()).map(|_| random_spd(&mut rng, 3)).collect();
        let f = DiscreteMetricField::new(bg, nodal).unwrap();
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let m = f.interpolate(&x).unwrap();
            assert!(m.matrix().clone().symmetric_eigenvalues().min() > 0.0);
        }
    }

    #[test]
    fn out_of_domain_points() {
        let bg = structured_mesh(&BoxDomain::centered_unit(2), 2, 1, 2).unwrap();
        let f = DiscreteMetricField::new(bg.clone(), vec![MetricTensor::identity(2); bg.node_count()]).unwrap();
        assert!(matches!(f.interpolate(&[0.7, 0.0]), Err(Error::OutOfDomain { .. })));
        // within tolerance of the boundary
        assert!(f.interpolate(&[0.5 + 1e-10, 0.1]).is_ok());
        // clamped evaluation succeeds and lands on the boundary
        let (e, xi) = f.locate(&[0.7, 0.1], true).unwrap();
        let pos = map_point(&bg.element_coords(e), &f.basis.values(&xi));
        assert!((pos[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn deterministic_evaluation() {
        let bg = structured_mesh(&BoxDomain::centered_unit(2), 2, 2, 4).unwrap();
        let f = DiscreteMetricField::from_fn(bg, |x| Ok(smooth_metric(x))).unwrap();
        let a = f.interpolate(&[0.123, -0.321]).unwrap();
        let b = f.interpolate(&[0.123, -0.321]).unwrap();
        assert_eq!(a, b);
    }

    fn log_error(f: &DiscreteMetricField, pts: &[[f64; 2]]) -> f64 {
        pts.iter()
            .map(|x| {
                let exact = metric_log(&smooth_metric(x)).unwrap();
                let got = metric_log(&f.interpolate(x).unwrap()).unwrap();
                (exact - got).norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn refinement_convergence_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<[f64; 2]> = (0..200).map(|_| [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]).collect();
        for q in 1..=2 {
            let errs: Vec<f64> = [4, 8, 16]
                .iter()
                .map(|&n| {
                    let bg = structured_mesh(&BoxDomain::centered_unit(2), 2, q, n).unwrap();
                    let f = DiscreteMetricField::from_fn(bg, |x| Ok(smooth_metric(x))).unwrap();
                    log_error(&f, &pts)
                })
                .collect();
            for w in errs.windows(2) {
                let order = (w[0] / w[1]).log2();
                assert!(order >= q as f64, "q={q} errors {errs:?} order {order}");
            }
        }
    }

    #[test]
    fn metric_gradient_matches_finite_differences() {
        let bg = structured_mesh(&BoxDomain::centered_unit(2), 2, 2, 3).unwrap();
        let f = MetricField::Discrete(DiscreteMetricField::from_fn(bg, |x| Ok(smooth_metric(x))).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x = [rng.gen_range(-0.45..0.45), rng.gen_range(-0.45..0.45)];
            let s = f.sample(&x, true, false).unwrap();
            for a in 0..2 {
                let h = 1e-7;
                let mut xp = x;
                let mut xm = x;
                xp[a] += h;
                xm[a] -= h;
                let fd = (f.sample(&xp, false, false).unwrap().m - f.sample(&xm, false, false).unwrap().m) / (2.0 * h);
                // the interpolant is only C0 across elements; skip samples straddling a face
                let (ep, _) = match &f {
                    MetricField::Discrete(d) => d.locate(&xp, false).unwrap(),
                    _ => unreachable!(),
                };
                let (em, _) = match &f {
                    MetricField::Discrete(d) => d.locate(&xm, false).unwrap(),
                    _ => unreachable!(),
                };
                if ep != em {
                    continue;
                }
                assert!((&fd - &s.grad[a]).abs().max() < 1e-6 * fd.abs().max().max(1.0));
            }
        }
    }
}
