use super::*;
use crate::mesh::{affine_simplex, structured_mesh, BoundaryConstraint, BoxDomain};
use nalgebra::{DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn box_mesh(dim: usize, p: usize, n: usize) -> HighOrderMesh {
    structured_mesh(&BoxDomain::centered_unit(dim), dim, p, n).unwrap()
}

/// Smooth non-affine deformation of every node, giving curved elements.
fn curved(mesh: &HighOrderMesh, amp: f64) -> HighOrderMesh {
    let d = mesh.dim();
    let nodes: Vec<Vec<f64>> = mesh
        .nodes()
        .map(|x| {
            let s: f64 = x.iter().map(|c| (PI * c).cos()).product();
            x.iter().enumerate().map(|(a, c)| c + amp * s * (a as f64 + 1.0) * (2.0 * c).sin()).collect()
        })
        .collect();
    HighOrderMesh::new(d, mesh.degree(), nodes, mesh.elements().to_vec(), mesh.constraints().to_vec()).unwrap()
}

fn random_polynomial(dim: usize, p: usize, rng: &mut impl Rng) -> impl Fn(&[f64]) -> f64 + Sync {
    let terms: Vec<(Vec<i32>, f64)> = crate::basis::lattice(dim, p)
        .into_iter()
        .map(|a| (a[1..].iter().map(|&k| k as i32).collect(), rng.gen_range(-1.0..1.0)))
        .collect();
    move |x: &[f64]| terms.iter().map(|(e, c)| c * e.iter().zip(x).map(|(&k, xi)| xi.powi(k)).product::<f64>()).sum()
}

#[test]
fn arctan_functions_vanish_on_their_level_set() {
    let f = AnalyticFunction::arctan2d(20.0).unwrap();
    assert_eq!(f.eval(&[0.0, -0.1]), 0.0);
    assert!((f.eval(&[0.5, 0.1]) - 0.0).abs() < 1e-12);
    assert!((f.eval(&[0.0, 0.0]) - 20f64.atan()).abs() < 1e-15);
    let g = AnalyticFunction::arctan3d(1.0).unwrap();
    assert!(g.eval(&[0.0, 0.0, -0.1]).abs() < 1e-15);
    assert!((g.eval(&[0.25, 0.0, 0.2]) - 2f64.atan()).abs() < 1e-15);
    assert!(AnalyticFunction::arctan2d(0.0).is_err());
    assert!(AnalyticFunction::arctan3d(f64::NAN).is_err());
}

#[test]
fn polynomials_are_reproduced_on_affine_meshes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (dim, p, n) in [(2, 1, 3), (2, 2, 3), (2, 3, 2), (2, 4, 2), (3, 1, 2), (3, 2, 1), (3, 3, 1)] {
        let mesh = box_mesh(dim, p, n);
        let u = random_polynomial(dim, p, &mut rng);
        let r = error_report(&mesh, &u).unwrap();
        assert!(r.global_e_i < 1e-12, "dim={dim} p={p}: e_I={}", r.global_e_i);
        assert!(r.global_e_a < 1e-9, "dim={dim} p={p}: e_A={}", r.global_e_a);
    }
}

#[test]
fn constants_are_reproduced_on_curved_meshes() {
    for (dim, p) in [(2, 2), (2, 4), (3, 2)] {
        let mesh = curved(&box_mesh(dim, p, 2), 0.05);
        let u = |_: &[f64]| 1.7;
        let r = error_report(&mesh, &u).unwrap();
        assert!(r.global_e_i < 1e-13, "{}", r.global_e_i);
        assert!(r.global_e_a < 1e-10, "{}", r.global_e_a);
    }
}

#[test]
fn interpolation_converges_at_optimal_order() {
    let u = AnalyticFunction::arctan2d(1.0).unwrap();
    for (p, n) in [(1, 16), (2, 8), (3, 16)] {
        let coarse = interpolation_error(&box_mesh(2, p, n), &u).unwrap().global;
        let fine = interpolation_error(&box_mesh(2, p, 2 * n), &u).unwrap().global;
        let expected = 2f64.powi(p as i32 + 1);
        let ratio = coarse / fine;
        assert!((ratio / expected - 1.0).abs() < 0.2, "p={p}: ratio {ratio} vs {expected}");
    }
}

#[test]
fn element_errors_add_up_in_square() {
    let mesh = curved(&box_mesh(2, 3, 4), 0.03);
    let u = AnalyticFunction::arctan2d(20.0).unwrap();
    let r = interpolation_error(&mesh, &u).unwrap();
    let sum: f64 = r.per_element.iter().map(|e| e * e).sum();
    assert!((sum - r.global * r.global).abs() <= 1e-12 * sum);
    assert_eq!(r.per_element.len(), mesh.element_count());
}

#[test]
fn best_approximation_never_exceeds_interpolation() {
    let cases: Vec<(HighOrderMesh, AnalyticFunction)> = vec![
        (box_mesh(2, 1, 6), AnalyticFunction::arctan2d(5.0).unwrap()),
        (curved(&box_mesh(2, 2, 5), 0.04), AnalyticFunction::arctan2d(20.0).unwrap()),
        (curved(&box_mesh(2, 4, 3), 0.04), AnalyticFunction::arctan2d(50.0).unwrap()),
        (curved(&box_mesh(3, 2, 2), 0.03), AnalyticFunction::arctan3d(5.0).unwrap()),
    ];
    for (mesh, u) in &cases {
        let r = error_report(mesh, u).unwrap();
        assert!(r.global_e_a <= r.global_e_i * (1.0 + 1e-10), "{} > {}", r.global_e_a, r.global_e_i);
        assert!(r.global_e_a > 0.0);
    }
}

#[test]
fn projection_matches_dense_least_squares() {
    // one curved quadratic triangle
    let mut mesh = affine_simplex(&[vec![0.0, 0.0], vec![1.0, 0.2], vec![0.1, 0.9]], 2).unwrap();
    let mut coords = mesh.coords().to_vec();
    coords[2 * 4] += 0.08; // an edge midpoint
    coords[2 * 4 + 1] += 0.05;
    mesh.set_coords(coords);
    let u = AnalyticFunction::arctan2d(3.0).unwrap();
    let space = FeSpace::new(&mesh).unwrap();
    let (xs, ws) = space.element_quadrature(0);
    let nq = xs.len();
    let nb = space.len();
    let a = DMatrix::from_fn(nq, nb, |q, i| ws[q].sqrt() * space.shape[q][i]);
    let y = DVector::from_fn(nq, |q, _| ws[q].sqrt() * u.eval(&xs[q]));
    let oracle = a.clone().svd(true, true).solve(&y, 1e-14).unwrap();
    let (v, _) = space.project(&u).unwrap();
    for i in 0..nb {
        assert!((v[i] - oracle[i]).abs() < 1e-8, "{i}: {} vs {}", v[i], oracle[i]);
    }
    let residual = (&a * &oracle - &y).norm();
    let ea = approximation_error(&mesh, &u).unwrap().global;
    assert!((ea - residual).abs() < 1e-9 * residual.max(1e-12));
}

#[test]
fn mass_matrix_is_symmetric_positive_definite() {
    for (dim, p, n) in [(2, 2, 2), (2, 3, 2), (3, 2, 1)] {
        let mesh = curved(&box_mesh(dim, p, n), 0.04);
        let space = FeSpace::new(&mesh).unwrap();
        let csr = space.mass_matrix();
        let mut m = DMatrix::<f64>::zeros(csr.nrows(), csr.ncols());
        for (r, c, v) in csr.triplet_iter() {
            m[(r, c)] += v;
        }
        assert!((&m - m.transpose()).abs().max() < 1e-15);
        let eig = SymmetricEigen::new(m);
        let min = eig.eigenvalues.min();
        assert!(min > 0.0, "dim={dim} p={p}: smallest eigenvalue {min}");
    }
}

#[test]
fn errors_are_invariant_under_renumbering() {
    let mesh = curved(&box_mesh(2, 3, 3), 0.04);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut perm: Vec<usize> = (0..mesh.node_count()).collect();
    perm.shuffle(&mut rng);
    let mut nodes = vec![Vec::new(); mesh.node_count()];
    let mut constraints = vec![BoundaryConstraint::Free; mesh.node_count()];
    for g in 0..mesh.node_count() {
        nodes[perm[g]] = mesh.node(g).to_vec();
        constraints[perm[g]] = mesh.constraints()[g].clone();
    }
    let mut elements: Vec<Vec<usize>> =
        mesh.elements().iter().map(|c| c.iter().map(|&g| perm[g]).collect()).collect();
    elements.reverse();
    let renumbered = HighOrderMesh::new(2, 3, nodes, elements, constraints).unwrap();
    let u = AnalyticFunction::arctan2d(20.0).unwrap();
    let a = error_report(&mesh, &u).unwrap();
    let b = error_report(&renumbered, &u).unwrap();
    assert!((a.global_e_i - b.global_e_i).abs() <= 1e-12 * a.global_e_i);
    assert!((a.global_e_a - b.global_e_a).abs() <= 1e-9 * a.global_e_a);
    let mut ea: Vec<f64> = a.per_element.iter().map(|e| e.e_i).collect();
    let mut eb: Vec<f64> = b.per_element.iter().map(|e| e.e_i).collect();
    ea.sort_by(f64::total_cmp);
    eb.sort_by(f64::total_cmp);
    for (x, y) in ea.iter().zip(&eb) {
        assert!((x - y).abs() <= 1e-12 * x.max(1e-14));
    }
}

#[test]
fn interpolation_nodes_are_shared_consistently() {
    // each global node gets the same physical position from every element holding it
    let mesh = curved(&box_mesh(3, 4, 1), 0.05);
    let space = FeSpace::new(&mesh).unwrap();
    let pos = space.node_positions();
    for e in 0..mesh.element_count() {
        let coords = mesh.element_coords(e);
        for (i, &g) in mesh.element(e).iter().enumerate() {
            let x = map(&coords, &space.nodal_geometry[i]);
            for (a, b) in x.iter().zip(&pos[g]) {
                assert!((a - b).abs() < 1e-13, "element {e} node {i}");
            }
        }
    }
}

#[test]
fn conjugate_gradient_reports_failures() {
    let mut coo = CooMatrix::new(2, 2);
    coo.push(0, 0, 1.0);
    coo.push(1, 1, -1.0);
    let err = conjugate_gradient(&CsrMatrix::from(&coo), &[1.0, 1.0], vec![0.0; 2], 1e-10, 10).unwrap_err();
    assert!(matches!(err, Error::Solver(_)));

    let mesh = curved(&box_mesh(2, 2, 3), 0.04);
    let space = FeSpace::new(&mesh).unwrap();
    let u = AnalyticFunction::arctan2d(20.0).unwrap();
    let b = space.load_vector(&u);
    let err = conjugate_gradient(&space.mass_matrix(), &b, vec![0.0; b.len()], 1e-10, 2).unwrap_err();
    assert!(err.to_string().contains("relative residual"), "{err}");
}
