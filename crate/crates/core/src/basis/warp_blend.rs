//! Warp-and-blend interpolation nodes on the master simplex.
//!
//! Explicit construction of Warburton (2006): equispaced nodes on the
//! equilateral simplex are displaced along each edge by the Lagrange
//! interpolant of the Gauss–Lobatto-minus-equispaced offsets, blended into
//! the interior. Nodes are returned in the canonical lattice order of
//! [`super::MasterSimplex`], so node `i` of this set and node `i` of the
//! equispaced set share the same multi-index.

use super::{lattice, Error, Result};

const ALPHA_TRIANGLE: [f64; 5] = [0.0, 0.0, 0.0, 1.4152, 0.1001];
const ALPHA_TETRAHEDRON: [f64; 5] = [0.0, 0.0, 0.0, 0.0, 0.1002];

/// Gauss–Lobatto–Legendre points on `[-1, 1]`, ascending.
fn gauss_lobatto(n: usize) -> Vec<f64> {
    // endpoints plus the roots of P'_n
    let mut pts = vec![-1.0];
    for i in 1..n {
        let mut z = -(std::f64::consts::PI * i as f64 / n as f64).cos();
        for _ in 0..100 {
            let (d1, d2) = legendre_derivatives(n, z);
            let dz = d1 / d2;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        pts.push(z);
    }
    pts.push(1.0);
    pts
}

/// First and second derivatives of P_n at interior z.
fn legendre_derivatives(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d1 = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    let d2 = (2.0 * z * d1 - (n * (n + 1)) as f64 * p1) / (1.0 - z * z);
    (d1, d2)
}

/// Edge warp divided by `1 - r^2` (zero at the endpoints).
fn warp_factor(n: usize, r: f64) -> f64 {
    let gll = gauss_lobatto(n);
    let eq: Vec<f64> = (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
    let mut warp = 0.0;
    for i in 0..=n {
        let mut l = gll[i] - eq[i];
        for j in 0..=n {
            if j != i {
                l *= (r - eq[j]) / (eq[i] - eq[j]);
            }
        }
        warp += l;
    }
    if r.abs() < 1.0 - 1e-10 {
        warp / (1.0 - r * r)
    } else {
        0.0
    }
}

/// In-plane warp of a triangle with barycentrics `(l1, l2, l3)`, in the
/// equilateral frame with vertices `l1 -> (0, 2/sqrt3)`, `l2 -> (-1, -1/sqrt3)`,
/// `l3 -> (1, -1/sqrt3)`.
fn triangle_shift(n: usize, alpha: f64, l1: f64, l2: f64, l3: f64) -> (f64, f64) {
    let w1 = 4.0 * l2 * l3 * warp_factor(n, l3 - l2) * (1.0 + (alpha * l1).powi(2));
    let w2 = 4.0 * l1 * l3 * warp_factor(n, l1 - l3) * (1.0 + (alpha * l2).powi(2));
    let w3 = 4.0 * l1 * l2 * warp_factor(n, l2 - l1) * (1.0 + (alpha * l3).powi(2));
    let (c2, s2) = ((2.0 * std::f64::consts::PI / 3.0).cos(), (2.0 * std::f64::consts::PI / 3.0).sin());
    let (c3, s3) = ((4.0 * std::f64::consts::PI / 3.0).cos(), (4.0 * std::f64::consts::PI / 3.0).sin());
    (w1 + c2 * w2 + c3 * w3, s2 * w2 + s3 * w3)
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(m);
    let mut out = [0.0; 3];
    for c in 0..3 {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        out[c] = det(mc) / d;
    }
    out
}

fn triangle_nodes(n: usize) -> Vec<Vec<f64>> {
    let alpha = ALPHA_TRIANGLE[n];
    let s3 = 3f64.sqrt();
    let v = [[0.0, 2.0 / s3], [-1.0, -1.0 / s3], [1.0, -1.0 / s3]];
    lattice(2, n)
        .iter()
        .map(|a| {
            let l = [a[0] as f64 / n as f64, a[1] as f64 / n as f64, a[2] as f64 / n as f64];
            let (dx, dy) = triangle_shift(n, alpha, l[0], l[1], l[2]);
            let x = l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0] + dx;
            let y = l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1] + dy;
            let bary = solve3(
                [[v[0][0], v[1][0], v[2][0]], [v[0][1], v[1][1], v[2][1]], [1.0, 1.0, 1.0]],
                [x, y, 1.0],
            );
            vec![bary[1], bary[2]]
        })
        .collect()
}

fn tetrahedron_nodes(n: usize) -> Vec<Vec<f64>> {
    let alpha = ALPHA_TETRAHEDRON[n];
    let tol = 1e-10;
    let (s3, s6) = (3f64.sqrt(), 6f64.sqrt());
    let v: [[f64; 3]; 4] = [
        [-1.0, -1.0 / s3, -1.0 / s6],
        [1.0, -1.0 / s3, -1.0 / s6],
        [0.0, 2.0 / s3, -1.0 / s6],
        [0.0, 0.0, 3.0 / s6],
    ];
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let mid = |a: [f64; 3], b: [f64; 3]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])];
    let unit = |a: [f64; 3]| {
        let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        [a[0] / n, a[1] / n, a[2] / n]
    };
    let t1 = [sub(v[1], v[0]), sub(v[1], v[0]), sub(v[2], v[1]), sub(v[2], v[0])].map(unit);
    let t2 = [
        sub(v[2], mid(v[0], v[1])),
        sub(v[3], mid(v[0], v[1])),
        sub(v[3], mid(v[1], v[2])),
        sub(v[3], mid(v[0], v[2])),
    ]
    .map(unit);

    lattice(3, n)
        .iter()
        .map(|a| {
            // our barycentrics b0..b3 map to the equilateral vertices v0..v3
            let b: Vec<f64> = a.iter().map(|&c| c as f64 / n as f64).collect();
            // reference construction names: L3 -> v0, L4 -> v1, L2 -> v2, L1 -> v3
            let (l1, l2, l3, l4) = (b[3], b[2], b[0], b[1]);
            let mut xyz = [0.0; 3];
            for (c, x) in xyz.iter_mut().enumerate() {
                *x = l3 * v[0][c] + l4 * v[1][c] + l2 * v[2][c] + l1 * v[3][c];
            }
            let mut shift = [0.0; 3];
            for face in 0..4 {
                let (la, lb, lc, ld) = match face {
                    0 => (l1, l2, l3, l4),
                    1 => (l2, l1, l3, l4),
                    2 => (l3, l1, l4, l2),
                    _ => (l4, l1, l3, l2),
                };
                let (w1, w2) = triangle_shift(n, alpha, lb, lc, ld);
                let mut blend = lb * lc * ld;
                let denom = (lb + 0.5 * la) * (lc + 0.5 * la) * (ld + 0.5 * la);
                if denom > tol {
                    blend = (1.0 + (alpha * la).powi(2)) * blend / denom;
                }
                let on_face = la < tol
                    && ((lb > tol) as usize + (lc > tol) as usize + (ld > tol) as usize) < 3;
                for c in 0..3 {
                    let s = w1 * t1[face][c] + w2 * t2[face][c];
                    if on_face {
                        shift[c] = s;
                    } else {
                        shift[c] += blend * s;
                    }
                }
            }
            for c in 0..3 {
                xyz[c] += shift[c];
            }
            // barycentrics with respect to v0..v3
            let m = [
                [v[1][0] - v[0][0], v[2][0] - v[0][0], v[3][0] - v[0][0]],
                [v[1][1] - v[0][1], v[2][1] - v[0][1], v[3][1] - v[0][1]],
                [v[1][2] - v[0][2], v[2][2] - v[0][2], v[3][2] - v[0][2]],
            ];
            let rhs = [xyz[0] - v[0][0], xyz[1] - v[0][1], xyz[2] - v[0][2]];
            solve3(m, rhs).to_vec()
        })
        .collect()
}

/// Warp-and-blend nodes of degree `p` on the master k-simplex.
pub fn warp_blend_nodes(dim: usize, degree: usize) -> Result<Vec<Vec<f64>>> {
    super::check_dim_degree(dim, degree)?;
    Ok(match dim {
        1 => lattice(1, degree)
            .iter()
            .map(|a| {
                let gll = gauss_lobatto(degree);
                // a[1] counts steps from vertex 0
                vec![0.5 * (gll[a[1] as usize] + 1.0)]
            })
            .collect(),
        2 => triangle_nodes(degree),
        3 => tetrahedron_nodes(degree),
        _ => return Err(Error::Config(format!("unsupported simplex dimension {dim}"))),
    })
}
