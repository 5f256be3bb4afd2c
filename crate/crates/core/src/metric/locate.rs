use nalgebra::{DMatrix, DVector};

use crate::basis::{map_point, LagrangeBasis};
use crate::mesh::HighOrderMesh;

/// Uniform bucket grid over padded element bounding boxes.
#[derive(Debug, Clone)]
pub struct Locator {
    lower: Vec<f64>,
    cell: f64,
    counts: Vec<usize>,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    pub fn new(mesh: &HighOrderMesh) -> Self {
        let d = mesh.dim();
        let boxes: Vec<(Vec<f64>, Vec<f64>)> = (0..mesh.element_count())
            .map(|e| {
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for &n in mesh.element(e) {
                    for (a, &c) in mesh.node(n).iter().enumerate() {
                        lo[a] = lo[a].min(c);
                        hi[a] = hi[a].max(c);
                    }
                }
                // curved elements may bulge past their nodes
                let diag = lo.iter().zip(&hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt();
                let pad = 0.1 * diag;
                (lo.iter().map(|l| l - pad).collect(), hi.iter().map(|h| h + pad).collect())
            })
            .collect();
        let mean_diag = boxes
            .iter()
            .map(|(lo, hi)| lo.iter().zip(hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / boxes.len().max(1) as f64;
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for (lo, hi) in &boxes {
            for a in 0..d {
                lower[a] = lower[a].min(lo[a]);
                upper[a] = upper[a].max(hi[a]);
            }
        }
        let cell = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        let counts: Vec<usize> = (0..d)
            .map(|a| (((upper[a] - lower[a]) / cell).ceil() as usize).max(1))
            .collect();
        let total: usize = counts.iter().product();
        let mut buckets = vec![Vec::new(); total];
        for (e, (lo, hi)) in boxes.iter().enumerate() {
            let first: Vec<usize> = (0..d).map(|a| Self::axis_cell(lower[a], cell, counts[a], lo[a])).collect();
            let last: Vec<usize> = (0..d).map(|a| Self::axis_cell(lower[a], cell, counts[a], hi[a])).collect();
            let mut idx = first.clone();
            loop {
                buckets[Self::flatten(&counts, &idx)].push(e);
                // odometer increment over the box of cells
                let mut a = 0;
                loop {
                    if a == d {
                        break;
                    }
                    if idx[a] < last[a] {
                        idx[a] += 1;
                        break;
                    }
                    idx[a] = first[a];
                    a += 1;
                }
                if a == d {
                    break;
                }
            }
        }
        Self {
            lower,
            cell,
            counts,
            buckets,
        }
    }

    fn axis_cell(lower: f64, cell: f64, count: usize, x: f64) -> usize {
        (((x - lower) / cell).floor().max(0.0) as usize).min(count - 1)
    }

    fn flatten(counts: &[usize], idx: &[usize]) -> usize {
        idx.iter().rev().zip(counts.iter().rev()).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Elements whose padded bounding box may contain `x`.
    pub fn candidates(&self, x: &[f64]) -> &[usize] {
        let d = self.counts.len();
        let mut idx = Vec::with_capacity(d);
        for a in 0..d {
            let t = (x[a] - self.lower[a]) / self.cell;
            if !(t >= 0.0) || t > self.counts[a] as f64 {
                return &[];
            }
            idx.push((t.floor() as usize).min(self.counts[a] - 1));
        }
        &self.buckets[Self::flatten(&self.counts, &idx)]
    }
}

/// Master coordinates of `x` in an element map, by Newton iteration.
/// Returns `None` if the iteration does not converge.
pub(crate) fn invert_map(coords: &DMatrix<f64>, basis: &LagrangeBasis, x: &[f64]) -> Option<Vec<f64>> {
    let d = coords.nrows();
    let mut xi = vec![1.0 / (d as f64 + 1.0); d];
    for _ in 0..30 {
        let vals = basis.values(&xi);
        let pos = map_point(coords, &vals);
        let jac = coords * basis.gradients(&xi);
        let r = DVector::from_iterator(d, pos.iter().zip(x).map(|(p, t)| p - t));
        let step = jac.lu().solve(&r)?;
        let mut max = 0.0f64;
        for a in 0..d {
            xi[a] -= step[a];
            max = max.max(step[a].abs());
        }
        if !xi.iter().all(|v| v.is_finite()) || xi.iter().any(|v| v.abs() > 1e6) {
            return None;
        }
        if max < 1e-12 {
            return Some(xi);
        }
    }
    None
}

/// Smallest barycentric coordinate of a master point.
pub(crate) fn min_barycentric(xi: &[f64]) -> f64 {
    let l0 = 1.0 - xi.iter().sum::<f64>();
    xi.iter().copied().fold(l0, f64::min)
}

/// Clamp to the master simplex (negative barycentrics zeroed, renormalized).
pub(crate) fn clamp_to_master(xi: &[f64]) -> Vec<f64> {
    let mut b: Vec<f64> = std::iter::once(1.0 - xi.iter().sum::<f64>())
        .chain(xi.iter().copied())
        .map(|v| v.max(0.0))
        .collect();
    let s: f64 = b.iter().sum();
    for v in &mut b {
        *v /= s;
    }
    b[1..].to_vec()
}
