use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

/// Quadrature rule on the master k-simplex. Weights are in master-measure units,
/// so they sum to `1 / k!`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub exactness: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Gauss–Legendre points and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess, refined by Newton on P_n
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        // map [-1, 1] -> [0, 1], ascending
        x[n - 1 - i] = 0.5 * (z + 1.0);
        w[n - 1 - i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// Gauss–Jacobi points and weights on `[0, 1]` for the weight `(1 - u)^alpha`.
///
/// Golub–Welsch on the Jacobi recurrence with `beta = 0`.
pub fn gauss_jacobi(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let beta = 0.0;
    let ab = alpha + beta;
    let mut t = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + ab;
        t[(k, k)] = if s == 0.0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / (s * (s + 2.0))
        };
        if k > 0 {
            let b = (4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab)
                / (s * s * (s + 1.0) * (s - 1.0)))
                .sqrt();
            t[(k, k - 1)] = b;
            t[(k - 1, k)] = b;
        }
    }
    // integral of (1 - x)^alpha over [-1, 1]
    let mu0 = 2f64.powf(alpha + 1.0) / (alpha + 1.0);
    let eig = SymmetricEigen::new(t);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = eig.eigenvalues[i];
            let w = mu0 * eig.eigenvectors[(0, i)].powi(2);
            (0.5 * (x + 1.0), w / 2f64.powf(alpha + 1.0))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Collapsed (Duffy) tensor-product rule with `n_1d^k` points.
///
/// The first direction uses Gauss–Legendre (k = 1) or Gauss–Jacobi absorbing
/// the collapse factor, so every rule is exact to degree `2 n_1d - 1`.
pub fn quadrature(dim: usize, n_1d: usize) -> QuadratureRule {
    assert!((1..=3).contains(&dim), "unsupported simplex dimension {dim}");
    let n = n_1d.max(1);
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n.pow(dim as u32));
    let mut weights = Vec::with_capacity(points.capacity());
    match dim {
        1 => {
            for i in 0..n {
                points.push(vec![x[i]]);
                weights.push(w[i]);
            }
        }
        2 => {
            let (xu, wu) = gauss_jacobi(n, 1.0);
            for i in 0..n {
                for j in 0..n {
                    let (u, v) = (xu[i], x[j]);
                    points.push(vec![u, v * (1.0 - u)]);
                    weights.push(wu[i] * w[j]);
                }
            }
        }
        _ => {
            let (xu, wu) = gauss_jacobi(n, 2.0);
            let (xv, wv) = gauss_jacobi(n, 1.0);
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        let (u, v, t) = (xu[i], xv[j], x[l]);
                        points.push(vec![u, v * (1.0 - u), t * (1.0 - u) * (1.0 - v)]);
                        weights.push(wu[i] * wv[j] * w[l]);
                    }
                }
            }
        }
    }
    QuadratureRule {
        dim,
        points,
        weights,
        exactness: 2 * n - 1,
    }
}
