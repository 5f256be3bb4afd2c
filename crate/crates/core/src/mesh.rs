//! Nodal high-order simplicial meshes with per-node boundary constraints.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::basis::{lattice, node_count, MasterSimplex};
use crate::error::{Error, Result};

/// How a node may move during optimization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundaryConstraint {
    Free,
    Fixed,
    /// The listed coordinates are frozen; the others slide.
    AxisSlide(Vec<usize>),
}

impl BoundaryConstraint {
    /// Constraint freezing `frozen` axes out of `dim`, normalized to `Free`/`Fixed`
    /// when the set is empty or complete.
    pub fn from_frozen(mut frozen: Vec<usize>, dim: usize) -> Result<Self> {
        frozen.sort_unstable();
        frozen.dedup();
        if let Some(&a) = frozen.iter().find(|&&a| a >= dim) {
            return Err(Error::Config(format!("frozen axis {a} out of range for dimension {dim}")));
        }
        Ok(match frozen.len() {
            0 => BoundaryConstraint::Free,
            n if n == dim => BoundaryConstraint::Fixed,
            _ => BoundaryConstraint::AxisSlide(frozen),
        })
    }

    pub fn is_frozen(&self, axis: usize) -> bool {
        match self {
            BoundaryConstraint::Free => false,
            BoundaryConstraint::Fixed => true,
            BoundaryConstraint::AxisSlide(frozen) => frozen.contains(&axis),
        }
    }

    pub fn frozen_axes(&self, dim: usize) -> Vec<usize> {
        (0..dim).filter(|&a| self.is_frozen(a)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighOrderMesh {
    dim: usize,
    degree: usize,
    /// Flat coordinates, `dim` per node.
    coords: Vec<f64>,
    elements: Vec<Vec<usize>>,
    constraints: Vec<BoundaryConstraint>,
}

impl HighOrderMesh {
    pub fn new(
        dim: usize,
        degree: usize,
        nodes: Vec<Vec<f64>>,
        elements: Vec<Vec<usize>>,
        constraints: Vec<BoundaryConstraint>,
    ) -> Result<Self> {
        if let Some((i, n)) = nodes.iter().enumerate().find(|(_, n)| n.len() != dim) {
            return Err(Error::MeshIntegrity(format!(
                "node {i} has {} coordinates, expected {dim}",
                n.len()
            )));
        }
        let coords = nodes.into_iter().flatten().collect();
        Self::from_flat(dim, degree, coords, elements, constraints)
    }

    pub fn from_flat(
        dim: usize,
        degree: usize,
        coords: Vec<f64>,
        elements: Vec<Vec<usize>>,
        constraints: Vec<BoundaryConstraint>,
    ) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::Config(format!("unsupported mesh dimension {dim}")));
        }
        MasterSimplex::new(dim, degree)?;
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::MeshIntegrity("coordinate array is not a multiple of the dimension".into()));
        }
        let n_nodes = coords.len() / dim;
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::MeshIntegrity(format!("node {} has a non-finite coordinate", i / dim)));
        }
        let per_element = node_count(dim, degree);
        for (e, conn) in elements.iter().enumerate() {
            if conn.len() != per_element {
                return Err(Error::MeshIntegrity(format!(
                    "element {e} has {} nodes, expected {per_element}",
                    conn.len()
                )));
            }
            if let Some(&bad) = conn.iter().find(|&&i| i >= n_nodes) {
                return Err(Error::MeshIntegrity(format!(
                    "element {e} references node {bad} but the mesh has {n_nodes} nodes"
                )));
            }
            let mut sorted = conn.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::MeshIntegrity(format!("element {e} repeats a node index")));
            }
        }
        if constraints.len() != n_nodes {
            return Err(Error::MeshIntegrity(format!(
                "{} constraints given for {n_nodes} nodes",
                constraints.len()
            )));
        }
        for (i, c) in constraints.iter().enumerate() {
            if let BoundaryConstraint::AxisSlide(frozen) = c {
                if frozen.is_empty() || frozen.len() >= dim || frozen.iter().any(|&a| a >= dim) {
                    return Err(Error::MeshIntegrity(format!(
                        "node {i}: slide constraint must freeze a non-empty proper subset of axes"
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            degree,
            coords,
            elements,
            constraints,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn node_count(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Replace all coordinates. Connectivity and constraints are untouched.
    pub fn set_coords(&mut self, coords: Vec<f64>) {
        assert_eq!(coords.len(), self.coords.len());
        self.coords = coords;
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e]
    }

    pub fn constraints(&self) -> &[BoundaryConstraint] {
        &self.constraints
    }

    /// `d x n` matrix of the element's node coordinates.
    pub fn element_coords(&self, e: usize) -> DMatrix<f64> {
        coords_matrix(self.dim, &self.coords, &self.elements[e])
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    /// Axis-aligned bounding box `(lower, upper)`.
    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for x in self.nodes() {
            for a in 0..self.dim {
                lo[a] = lo[a].min(x[a]);
                hi[a] = hi[a].max(x[a]);
            }
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bbox();
        lo.iter().zip(&hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt()
    }
}

/// One straight element with the given vertices, nodes on the degree-p lattice,
/// every node free.
pub fn affine_simplex(vertices: &[Vec<f64>], degree: usize) -> Result<HighOrderMesh> {
    let dim = vertices.len().saturating_sub(1);
    let master = MasterSimplex::new(dim, degree)?;
    let nodes: Vec<Vec<f64>> = master
        .nodes()
        .iter()
        .map(|xi| {
            (0..dim)
                .map(|a| {
                    let l0 = 1.0 - xi.iter().sum::<f64>();
                    l0 * vertices[0][a] + xi.iter().zip(&vertices[1..]).map(|(l, v)| l * v[a]).sum::<f64>()
                })
                .collect()
        })
        .collect();
    let n = nodes.len();
    HighOrderMesh::new(dim, degree, nodes, vec![(0..n).collect()], vec![BoundaryConstraint::Free; n])
}

pub(crate) fn coords_matrix(dim: usize, coords: &[f64], conn: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(dim, conn.len(), |r, c| coords[conn[c] * dim + r])
}

/// A deduplicated k-dimensional sub-entity of the mesh.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityRef {
    /// First element (in element order) that contains the entity.
    pub element: usize,
    pub dim: usize,
    /// Index of the vertex subset among the element's k-subsets.
    pub local: usize,
    /// Global node indices in the canonical degree-p k-simplex layout,
    /// oriented by ascending global vertex index.
    pub nodes: Vec<usize>,
}

fn vertex_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Local node indices (into the element connectivity) of every k-subentity,
/// laid out as a degree-p k-simplex whose vertex order is `order`.
pub(crate) fn entity_local_nodes(
    master: &MasterSimplex,
    vertices: &[usize],
    k: usize,
) -> Vec<usize> {
    let d = master.dim();
    lattice(k, master.degree())
        .iter()
        .map(|beta| {
            let mut alpha = vec![0u8; d + 1];
            for (j, &v) in vertices.iter().enumerate() {
                alpha[v] = beta[j];
            }
            master
                .index_of(&alpha)
                .expect("entity lattice point lies on the element lattice")
        })
        .collect()
}

/// Every geometric k-entity of the mesh, exactly once.
pub fn sub_entities(mesh: &HighOrderMesh, k: usize) -> Result<Vec<EntityRef>> {
    let d = mesh.dim();
    if k < 1 || k > d {
        return Err(Error::Config(format!("entity dimension {k} out of range 1..={d}")));
    }
    let master = MasterSimplex::new(d, mesh.degree())?;
    let subsets = vertex_subsets(d + 1, k + 1);
    let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut out: Vec<EntityRef> = Vec::new();
    for (e, conn) in mesh.elements().iter().enumerate() {
        for (local, subset) in subsets.iter().enumerate() {
            let mut oriented = subset.clone();
            oriented.sort_by_key(|&v| conn[v]);
            let key: Vec<usize> = oriented.iter().map(|&v| conn[v]).collect();
            let nodes: Vec<usize> = entity_local_nodes(&master, &oriented, k)
                .into_iter()
                .map(|i| conn[i])
                .collect();
            match seen.get(&key) {
                Some(&idx) => {
                    if out[idx].nodes != nodes {
                        return Err(Error::MeshIntegrity(format!(
                            "elements {} and {e} disagree on the nodes of the entity with vertices {key:?}",
                            out[idx].element
                        )));
                    }
                }
                None => {
                    seen.insert(key, out.len());
                    out.push(EntityRef {
                        element: e,
                        dim: k,
                        local,
                        nodes,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Axis-aligned box domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    /// `[-0.5, 0.5]^d`
    pub fn centered_unit(dim: usize) -> Self {
        Self::new(vec![-0.5; dim], vec![0.5; dim])
    }
}

/// Box split into `n` cells per axis, each cell into 2 triangles or 6
/// tetrahedra (Kuhn split), elevated to degree `p` with equispaced nodes.
///
/// Nodes on a box face freeze that face's coordinate; corners are fixed.
pub fn structured_mesh(domain: &BoxDomain, dim: usize, degree: usize, n: usize) -> Result<HighOrderMesh> {
    if !(2..=3).contains(&dim) {
        return Err(Error::Config(format!("unsupported mesh dimension {dim}")));
    }
    if domain.lower.len() != dim || domain.upper.len() != dim {
        return Err(Error::Config(format!("box bounds must have {dim} components")));
    }
    if domain.lower.iter().zip(&domain.upper).any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite()) {
        return Err(Error::Config(format!("degenerate box {:?} .. {:?}", domain.lower, domain.upper)));
    }
    if n == 0 {
        return Err(Error::Config("need at least one subdivision per axis".into()));
    }
    let master = MasterSimplex::new(dim, degree)?;
    let m = n * degree; // lattice steps per axis
    let stride: Vec<usize> = (0..dim).map(|a| (m + 1).pow(a as u32)).collect();
    let n_nodes = (m + 1).pow(dim as u32);

    let mut coords = Vec::with_capacity(n_nodes * dim);
    let mut constraints = Vec::with_capacity(n_nodes);
    for idx in 0..n_nodes {
        let mut frozen = Vec::new();
        for a in 0..dim {
            let i = (idx / stride[a]) % (m + 1);
            let (lo, hi) = (domain.lower[a], domain.upper[a]);
            let x = if i == m { hi } else { lo + (hi - lo) * i as f64 / m as f64 };
            coords.push(x);
            if i == 0 || i == m {
                frozen.push(a);
            }
        }
        constraints.push(BoundaryConstraint::from_frozen(frozen, dim)?);
    }

    // cell-local vertex sets, in unit-cell lattice coordinates
    let cell_simplices: Vec<Vec<Vec<usize>>> = if dim == 2 {
        vec![
            vec![vec![0, 0], vec![1, 0], vec![1, 1]],
            vec![vec![0, 0], vec![1, 1], vec![0, 1]],
        ]
    } else {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        perms
            .iter()
            .map(|p| {
                let mut v = vec![vec![0usize; 3]];
                for &axis in p {
                    let mut next = v.last().unwrap().clone();
                    next[axis] = 1;
                    v.push(next);
                }
                // odd permutations are negatively oriented
                let det = det3(&v);
                if det < 0 {
                    v.swap(1, 2);
                }
                v
            })
            .collect()
    };

    let mut elements = Vec::new();
    let cells = n.pow(dim as u32);
    for c in 0..cells {
        let origin: Vec<usize> = (0..dim).map(|a| (c / n.pow(a as u32)) % n).collect();
        for simplex in &cell_simplices {
            let conn = master
                .lattice()
                .iter()
                .map(|alpha| {
                    (0..dim)
                        .map(|a| {
                            let offset: usize = alpha
                                .iter()
                                .zip(simplex)
                                .map(|(&w, v)| w as usize * v[a])
                                .sum();
                            (origin[a] * degree + offset) * stride[a]
                        })
                        .sum()
                })
                .collect();
            elements.push(conn);
        }
    }
    HighOrderMesh::from_flat(dim, degree, coords, elements, constraints)
}

fn det3(v: &[Vec<usize>]) -> i64 {
    let e = |i: usize, a: usize| v[i][a] as i64 - v[0][a] as i64;
    e(1, 0) * (e(2, 1) * e(3, 2) - e(2, 2) * e(3, 1)) - e(1, 1) * (e(2, 0) * e(3, 2) - e(2, 2) * e(3, 0))
        + e(1, 2) * (e(2, 0) * e(3, 1) - e(2, 1) * e(3, 0))
}
