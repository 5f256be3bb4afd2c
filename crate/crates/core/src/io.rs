//! JSON mesh and metric files, and legacy VTK export.
//!
//! Mesh files hold `{dim, degree, nodes, elements, constraints}` with one
//! constraint entry per node. Metric files hold
//! `{background, preset?, params?, nodal_metrics}`, where `background` is
//! either a mesh object (discrete field, one upper-triangle row per node) or
//! the string `"analytic"` (preset field).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::basis::lattice;
use crate::error::{Error, Result};
use crate::mesh::{BoundaryConstraint, HighOrderMesh};
use crate::metric::{AnalyticMetric, BoundaryLayer, DiscreteMetricField, MetricField, MetricTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    Free,
    Fixed,
    AxisSlide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEntry {
    pub kind: ConstraintKind,
    #[serde(default)]
    pub frozen: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshFile {
    pub dim: usize,
    pub degree: usize,
    pub nodes: Vec<Vec<f64>>,
    pub elements: Vec<Vec<usize>>,
    pub constraints: Vec<ConstraintEntry>,
}

impl MeshFile {
    pub fn from_mesh(mesh: &HighOrderMesh) -> Self {
        let d = mesh.dim();
        Self {
            dim: d,
            degree: mesh.degree(),
            nodes: mesh.nodes().map(<[f64]>::to_vec).collect(),
            elements: mesh.elements().to_vec(),
            constraints: mesh
                .constraints()
                .iter()
                .map(|c| ConstraintEntry {
                    kind: match c {
                        BoundaryConstraint::Free => ConstraintKind::Free,
                        BoundaryConstraint::Fixed => ConstraintKind::Fixed,
                        BoundaryConstraint::AxisSlide(_) => ConstraintKind::AxisSlide,
                    },
                    frozen: c.frozen_axes(d),
                })
                .collect(),
        }
    }

    pub fn into_mesh(self) -> Result<HighOrderMesh> {
        let dim = self.dim;
        let constraints = self
            .constraints
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let at = format!("constraints[{i}]");
                match c.kind {
                    ConstraintKind::Free => Ok(BoundaryConstraint::Free),
                    ConstraintKind::Fixed => Ok(BoundaryConstraint::Fixed),
                    ConstraintKind::AxisSlide => {
                        if let Some(&a) = c.frozen.iter().find(|&&a| a >= dim) {
                            return Err(Error::parse(at, format!("frozen axis {a} out of range")));
                        }
                        let mut frozen = c.frozen;
                        frozen.sort_unstable();
                        frozen.dedup();
                        if frozen.is_empty() || frozen.len() >= dim {
                            return Err(Error::parse(at, "axis-slide must freeze a non-empty proper subset of axes"));
                        }
                        Ok(BoundaryConstraint::AxisSlide(frozen))
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        HighOrderMesh::new(dim, self.degree, self.nodes, self.elements, constraints)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Background {
    Tag(String),
    Mesh(MeshFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricFile {
    pub background: Background,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Value>,
    #[serde(default)]
    pub nodal_metrics: Vec<Vec<f64>>,
}

/// Analytic field named by a preset and its parameter object.
///
/// * `constant`: `{"h": [h_1, ..]}` for `diag(1/h_a^2)`, or
///   `{"dim": d, "tensor": [upper triangle]}`.
/// * `boundary-layer`: `{"h_m", "h_min", "alpha", "deformation", "flip"}`,
///   missing keys taking the reference values.
pub fn preset_field(preset: &str, params: &Value) -> Result<AnalyticMetric> {
    let obj = params
        .as_object()
        .ok_or_else(|| Error::parse("params", "expected an object"))?;
    let num = |key: &str| -> Result<Option<f64>> {
        match obj.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| Error::parse(format!("params.{key}"), "expected a number")),
        }
    };
    let numbers = |key: &str| -> Result<Option<Vec<f64>>> {
        match obj.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .enumerate()
                .map(|(i, v)| v.as_f64().ok_or_else(|| Error::parse(format!("params.{key}[{i}]"), "expected a number")))
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(_) => Err(Error::parse(format!("params.{key}"), "expected an array of numbers")),
        }
    };
    let field = match preset {
        "constant" => {
            if let Some(h) = numbers("h")? {
                AnalyticMetric::ConstantDiag { h }
            } else if let Some(t) = numbers("tensor")? {
                let dim = num("dim")?.ok_or_else(|| Error::parse("params.dim", "required with a tensor"))?;
                AnalyticMetric::Constant(MetricTensor::from_upper(dim as usize, &t)?)
            } else {
                return Err(Error::parse("params", "constant preset needs `h` or `tensor`"));
            }
        }
        "boundary-layer" => {
            let r = BoundaryLayer::reference();
            let flag = |key: &str, default: bool| -> Result<bool> {
                match obj.get(key) {
                    None => Ok(default),
                    Some(v) => v
                        .as_bool()
                        .ok_or_else(|| Error::parse(format!("params.{key}"), "expected a boolean")),
                }
            };
            AnalyticMetric::BoundaryLayer2D(BoundaryLayer {
                h_m: num("h_m")?.unwrap_or(r.h_m),
                h_min: num("h_min")?.unwrap_or(r.h_min),
                alpha: num("alpha")?.unwrap_or(r.alpha),
                deformation: flag("deformation", r.deformation)?,
                flip: flag("flip", r.flip)?,
            })
        }
        other => return Err(Error::parse("preset", format!("unknown preset `{other}`"))),
    };
    field.validate()?;
    Ok(field)
}

/// Preset name and parameter object describing an analytic field.
pub fn preset_params(field: &AnalyticMetric) -> (String, Value) {
    match field {
        AnalyticMetric::Constant(m) => ("constant".into(), json!({"dim": m.dim(), "tensor": m.to_upper()})),
        AnalyticMetric::ConstantDiag { h } => ("constant".into(), json!({ "h": h })),
        AnalyticMetric::BoundaryLayer2D(b) => (
            "boundary-layer".into(),
            json!({
                "h_m": b.h_m,
                "h_min": b.h_min,
                "alpha": b.alpha,
                "deformation": b.deformation,
                "flip": b.flip,
            }),
        ),
    }
}

impl MetricFile {
    /// File for `field`. A discrete field may carry the preset it was sampled from.
    pub fn from_field(field: &MetricField, origin: Option<&AnalyticMetric>) -> Self {
        match field {
            MetricField::Analytic(a) => {
                let (preset, params) = preset_params(a);
                Self {
                    background: Background::Tag("analytic".into()),
                    preset: Some(preset),
                    params: Some(params),
                    nodal_metrics: Vec::new(),
                }
            }
            MetricField::Discrete(f) => {
                let (preset, params) = origin.map(preset_params).unzip();
                Self {
                    background: Background::Mesh(MeshFile::from_mesh(f.background())),
                    preset,
                    params,
                    nodal_metrics: f.nodal_metrics().iter().map(MetricTensor::to_upper).collect(),
                }
            }
        }
    }

    pub fn into_field(self) -> Result<MetricField> {
        match self.background {
            Background::Tag(tag) if tag == "analytic" => {
                let preset = self
                    .preset
                    .ok_or_else(|| Error::parse("preset", "analytic metric needs a preset"))?;
                let params = self.params.unwrap_or_else(|| json!({}));
                Ok(MetricField::Analytic(preset_field(&preset, &params)?))
            }
            Background::Tag(tag) => Err(Error::parse(
                "background",
                format!("expected a mesh object or \"analytic\", got \"{tag}\""),
            )),
            Background::Mesh(m) => {
                let mesh = m.into_mesh()?;
                let d = mesh.dim();
                let nodal = self
                    .nodal_metrics
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        MetricTensor::from_upper(d, row)
                            .map_err(|e| Error::parse(format!("nodal_metrics[{i}]"), e.to_string()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(MetricField::Discrete(DiscreteMetricField::new(mesh, nodal)?))
            }
        }
    }
}

fn from_json<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::parse(format!("{origin}:{}:{}", e.line(), e.column()), e.to_string()))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

pub fn mesh_to_json(mesh: &HighOrderMesh) -> String {
    serde_json::to_string_pretty(&MeshFile::from_mesh(mesh)).expect("mesh serializes")
}

pub fn mesh_from_json(text: &str) -> Result<HighOrderMesh> {
    from_json::<MeshFile>(text, "<mesh>")?.into_mesh()
}

pub fn read_mesh(path: &Path) -> Result<HighOrderMesh> {
    from_json::<MeshFile>(&read_text(path)?, &path.display().to_string())?.into_mesh()
}

pub fn write_mesh(path: &Path, mesh: &HighOrderMesh) -> Result<()> {
    write_text(path, &mesh_to_json(mesh))
}

pub fn metric_to_json(field: &MetricField, origin: Option<&AnalyticMetric>) -> String {
    serde_json::to_string_pretty(&MetricFile::from_field(field, origin)).expect("metric serializes")
}

pub fn metric_from_json(text: &str) -> Result<MetricField> {
    from_json::<MetricFile>(text, "<metric>")?.into_field()
}

pub fn read_metric(path: &Path) -> Result<MetricField> {
    from_json::<MetricFile>(&read_text(path)?, &path.display().to_string())?.into_field()
}

pub fn write_metric(path: &Path, field: &MetricField, origin: Option<&AnalyticMetric>) -> Result<()> {
    write_text(path, &metric_to_json(field, origin))
}

const VTK_TRIANGLE: u8 = 5;
const VTK_TETRA: u8 = 10;
const VTK_QUADRATIC_TRIANGLE: u8 = 22;
const VTK_QUADRATIC_TETRA: u8 = 24;
const VTK_LAGRANGE_TRIANGLE: u8 = 69;
const VTK_LAGRANGE_TETRAHEDRON: u8 = 71;

/// Permutation taking VTK's node order to the mesh's lattice order:
/// `order[j]` is the local lattice index of VTK point `j`.
pub fn vtk_node_order(dim: usize, degree: usize) -> Vec<usize> {
    let lat = lattice(dim, degree);
    let entities: Vec<Vec<usize>> = if dim == 2 {
        vec![vec![0], vec![1], vec![2], vec![0, 1], vec![1, 2], vec![2, 0], vec![0, 1, 2]]
    } else {
        vec![
            vec![0],
            vec![1],
            vec![2],
            vec![3],
            vec![0, 1],
            vec![1, 2],
            vec![2, 0],
            vec![0, 3],
            vec![1, 3],
            vec![2, 3],
            vec![0, 1, 3],
            vec![1, 2, 3],
            vec![0, 2, 3],
            vec![0, 1, 2],
            vec![0, 1, 2, 3],
        ]
    };
    let mut order = Vec::with_capacity(lat.len());
    for ent in &entities {
        let mut members: Vec<usize> = (0..lat.len())
            .filter(|&i| {
                let a = &lat[i];
                (0..=dim).all(|v| (a[v] > 0) == ent.contains(&v))
            })
            .collect();
        // points along an edge run from its first vertex; interior points of a
        // face or cell are ordered by the vertex they sit closest to
        members.sort_by_key(|&i| {
            let a = &lat[i];
            let rank: Vec<std::cmp::Reverse<u8>> = ent.iter().map(|&v| std::cmp::Reverse(a[v])).collect();
            rank
        });
        order.extend(members);
    }
    order
}

/// Legacy ASCII VTK unstructured grid with one cell per element and optional
/// per-element scalars.
pub fn vtk_string(mesh: &HighOrderMesh, title: &str, cell_scalars: &[(&str, &[f64])]) -> String {
    let (d, p) = (mesh.dim(), mesh.degree());
    let order = vtk_node_order(d, p);
    let cell_type = match (d, p) {
        (2, 1) => VTK_TRIANGLE,
        (2, 2) => VTK_QUADRATIC_TRIANGLE,
        (2, _) => VTK_LAGRANGE_TRIANGLE,
        (_, 1) => VTK_TETRA,
        (_, 2) => VTK_QUADRATIC_TETRA,
        _ => VTK_LAGRANGE_TETRAHEDRON,
    };
    let mut s = String::new();
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.node_count());
    for x in mesh.nodes() {
        let z = if d == 3 { x[2] } else { 0.0 };
        let _ = writeln!(s, "{} {} {}", x[0], x[1], z);
    }
    let n = order.len();
    let _ = writeln!(s, "CELLS {} {}", mesh.element_count(), mesh.element_count() * (n + 1));
    for conn in mesh.elements() {
        let _ = write!(s, "{n}");
        for &i in &order {
            let _ = write!(s, " {}", conn[i]);
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.element_count());
    for _ in 0..mesh.element_count() {
        let _ = writeln!(s, "{cell_type}");
    }
    if !cell_scalars.is_empty() {
        let _ = writeln!(s, "CELL_DATA {}", mesh.element_count());
        for (name, values) in cell_scalars {
            let name: String = name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in values.iter() {
                let _ = writeln!(s, "{v}");
            }
        }
    }
    s
}

pub fn write_vtk(path: &Path, mesh: &HighOrderMesh, title: &str, cell_scalars: &[(&str, &[f64])]) -> Result<()> {
    write_text(path, &vtk_string(mesh, title, cell_scalars))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{structured_mesh, BoxDomain};

    #[test]
    fn mesh_roundtrip_is_exact() {
        for (dim, p) in [(2, 1), (2, 3), (3, 2)] {
            let mut mesh = structured_mesh(&BoxDomain::centered_unit(dim), dim, p, 2).unwrap();
            let coords: Vec<f64> = mesh.coords().iter().map(|c| c + 1e-3 * (7.0 * c).sin() / 3.0).collect();
            mesh.set_coords(coords);
            let back = mesh_from_json(&mesh_to_json(&mesh)).unwrap();
            assert_eq!(back, mesh);
        }
    }

    #[test]
    fn constraint_kinds_are_written_per_node() {
        let mesh = structured_mesh(&BoxDomain::centered_unit(2), 2, 1, 1).unwrap();
        let v: Value = serde_json::from_str(&mesh_to_json(&mesh)).unwrap();
        assert_eq!(v["constraints"][0], json!({"kind": "fixed", "frozen": [0, 1]}));
        let mesh = structured_mesh(&BoxDomain::centered_unit(2), 2, 2, 1).unwrap();
        let v: Value = serde_json::from_str(&mesh_to_json(&mesh)).unwrap();
        assert_eq!(v["constraints"][1], json!({"kind": "axis-slide", "frozen": [1]}));
        assert_eq!(v["constraints"][4], json!({"kind": "free", "frozen": []}));
    }

    #[test]
    fn malformed_files_are_parse_errors() {
        assert!(matches!(mesh_from_json("{"), Err(Error::Parse { .. })));
        let bad = r#"{"dim":2,"degree":1,"nodes":[[0,0],[1,0],[0,1]],"elements":[[0,1,2]],
            "constraints":[{"kind":"free"},{"kind":"free"},{"kind":"axis-slide","frozen":[0,1]}]}"#;
        assert!(matches!(mesh_from_json(bad), Err(Error::Parse { .. })));
        let bad = r#"{"dim":2,"degree":1,"nodes":[[0,0],[1,0],[0,1]],"elements":[[0,1,3]],
            "constraints":[{"kind":"free"},{"kind":"free"},{"kind":"free"}]}"#;
        assert!(matches!(mesh_from_json(bad), Err(Error::MeshIntegrity(_))));
        assert!(matches!(
            metric_from_json(r#"{"background":"analytic","preset":"spiral","params":{}}"#),
            Err(Error::Parse { .. })
        ));
        assert!(metric_from_json(r#"{"background":"nowhere","nodal_metrics":[]}"#).is_err());
    }

    #[test]
    fn analytic_metric_roundtrip() {
        let text = r#"{"background":"analytic","preset":"constant","params":{"h":[1.0,0.333333]}}"#;
        let f = metric_from_json(text).unwrap();
        let m = f.eval(&[0.3, -0.2]).unwrap();
        assert!((m.matrix()[(1, 1)] - 9.0).abs() < 1e-4 && (m.matrix()[(0, 0)] - 1.0).abs() < 1e-15);
        let back = metric_from_json(&metric_to_json(&f, None)).unwrap();
        assert_eq!(back.eval(&[0.0, 0.0]).unwrap(), m);

        let bl = metric_from_json(r#"{"background":"analytic","preset":"boundary-layer","params":{"flip":true}}"#)
            .unwrap();
        match &bl {
            MetricField::Analytic(AnalyticMetric::BoundaryLayer2D(b)) => {
                assert!(b.flip && b.h_min == 0.01 && b.h_m == 0.25)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn discrete_metric_roundtrip_reproduces_nodal_values() {
        let bg = structured_mesh(&BoxDomain::centered_unit(2), 2, 1, 4).unwrap();
        let layer = AnalyticMetric::BoundaryLayer2D(BoundaryLayer::reference());
        let f = DiscreteMetricField::sample_field(bg.clone(), &MetricField::Analytic(layer.clone())).unwrap();
        let text = metric_to_json(&MetricField::Discrete(f.clone()), Some(&layer));
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["preset"], "boundary-layer");
        assert_eq!(v["nodal_metrics"][0].as_array().unwrap().len(), 3);
        let back = match metric_from_json(&text).unwrap() {
            MetricField::Discrete(d) => d,
            other => panic!("{other:?}"),
        };
        assert_eq!(back.nodal_metrics(), f.nodal_metrics());
        for (i, x) in bg.nodes().enumerate() {
            let m = back.interpolate(x).unwrap();
            let rel = (m.matrix() - f.nodal_metrics()[i].matrix()).abs().max() / m.matrix().abs().max();
            assert!(rel < 1e-12);
        }
    }

    #[test]
    fn vtk_order_is_a_permutation_starting_with_vertices() {
        for dim in 2..=3 {
            for p in 1..=4 {
                let order = vtk_node_order(dim, p);
                let mut sorted = order.clone();
                sorted.sort_unstable();
                assert_eq!(sorted, (0..order.len()).collect::<Vec<_>>());
                assert_eq!(&order[..=dim], &(0..=dim).collect::<Vec<_>>()[..]);
            }
        }
        // quadratic triangle: edge midpoints in the order (0,1), (1,2), (2,0)
        let lat = lattice(2, 2);
        let mids: Vec<Vec<u8>> = vtk_node_order(2, 2)[3..].iter().map(|&i| lat[i].clone()).collect();
        assert_eq!(mids, vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]]);
        // cubic edge (2,0) runs from vertex 2 towards vertex 0
        let lat = lattice(2, 3);
        let e20: Vec<Vec<u8>> = vtk_node_order(2, 3)[7..9].iter().map(|&i| lat[i].clone()).collect();
        assert_eq!(e20, vec![vec![1, 0, 2], vec![2, 0, 1]]);
    }

    #[test]
    fn vtk_export_has_consistent_counts() {
        let mesh = structured_mesh(&BoxDomain::centered_unit(2), 2, 2, 2).unwrap();
        let q = vec![0.5; mesh.element_count()];
        let s = vtk_string(&mesh, "test", &[("quality", &q)]);
        assert!(s.contains(&format!("POINTS {} double", mesh.node_count())));
        assert!(s.contains(&format!("CELLS 8 {}", 8 * 7)));
        assert_eq!(s.lines().filter(|l| *l == "22").count(), 8);
        assert!(s.contains("SCALARS quality double 1"));
    }
}
