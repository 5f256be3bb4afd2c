use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use metra_core::approx::{error_report, AnalyticFunction, CG_REL_TOL};
use metra_core::distortion::{mesh_report, ElementContext, Objective};
use metra_core::io;
use metra_core::measure::{mesh_measures, MeasureHistogram};
use metra_core::mesh::{structured_mesh, BoxDomain, HighOrderMesh};
use metra_core::metric::{AnalyticMetric, BoundaryLayer, DiscreteMetricField, MetricField};
use metra_core::optimize::{verify_validity_with, Optimizer, OptimizerConfig};

use crate::output::Run;
use crate::{CliError, ErrorArgs, FunctionArg, GenMeshArgs, GenMetricArgs, MeasureArgs, OptimizeArgs, Preset};
use crate::{QualityArgs, ValidateArgs};

pub fn gen_mesh(a: GenMeshArgs) -> Result<(), CliError> {
    let (lower, upper): (Vec<f64>, Vec<f64>) = match a.domain.len() {
        2 => (vec![a.domain[0]; a.dim], vec![a.domain[1]; a.dim]),
        n if n == 2 * a.dim => a.domain.chunks(2).map(|c| (c[0], c[1])).unzip(),
        n => {
            return Err(CliError::Usage(format!(
                "--domain takes 2 or {} values, got {n}",
                2 * a.dim
            )))
        }
    };
    let mesh = structured_mesh(&BoxDomain::new(lower, upper), a.dim, a.degree, a.n)?;
    io::write_mesh(&a.out, &mesh)?;
    Ok(())
}

pub fn gen_metric(a: GenMetricArgs) -> Result<(), CliError> {
    let preset = match a.preset {
        Preset::Constant => {
            let h = match a.h.len() {
                0 => return Err(CliError::Usage("the constant preset needs --h".into())),
                1 => {
                    let mut h = vec![1.0; a.dim];
                    h[a.dim - 1] = a.h[0];
                    h
                }
                _ => a.h.clone(),
            };
            AnalyticMetric::ConstantDiag { h }
        }
        Preset::BoundaryLayer => {
            if !a.h.is_empty() {
                return Err(CliError::Usage("--h applies to the constant preset only".into()));
            }
            let r = BoundaryLayer::reference();
            AnalyticMetric::BoundaryLayer2D(BoundaryLayer {
                h_m: a.h_m.unwrap_or(r.h_m),
                h_min: a.h_min.unwrap_or(r.h_min),
                alpha: a.alpha.unwrap_or(r.alpha),
                deformation: !a.no_deformation,
                flip: a.flip,
            })
        }
    };
    preset.validate()?;
    let analytic = MetricField::Analytic(preset.clone());
    let field = match &a.background {
        Some(path) => {
            let bg = io::read_mesh(path)?;
            if bg.dim() != preset.dim() {
                return Err(CliError::Usage(format!(
                    "background mesh is {}-dimensional, the preset is {}-dimensional",
                    bg.dim(),
                    preset.dim()
                )));
            }
            MetricField::Discrete(DiscreteMetricField::sample_field(bg, &analytic)?)
        }
        None => analytic,
    };
    io::write_metric(&a.out, &field, Some(&preset))?;
    Ok(())
}

fn load(mesh: &Path, metric: &Path) -> Result<(HighOrderMesh, MetricField), CliError> {
    let m = io::read_mesh(mesh)?;
    let f = io::read_metric(metric)?;
    if m.dim() != f.dim() {
        return Err(CliError::Usage(format!(
            "mesh is {}-dimensional but the metric is {}-dimensional",
            m.dim(),
            f.dim()
        )));
    }
    Ok((m, f))
}

#[derive(Serialize)]
struct QualityRow {
    element: usize,
    eta: f64,
    quality: f64,
}

fn quality_summary(mesh: &HighOrderMesh, field: &MetricField, objective: Objective) -> Result<(Value, Vec<QualityRow>), CliError> {
    let ctx = ElementContext::for_mesh(mesh)?;
    let r = mesh_report(mesh, field, &ctx, objective)?;
    let rows: Vec<QualityRow> = r
        .eta
        .iter()
        .zip(&r.quality)
        .enumerate()
        .map(|(element, (&eta, &quality))| QualityRow { element, eta, quality })
        .collect();
    let body = json!({
        "objective": objective,
        "elements": mesh.element_count(),
        "quality": r.stats,
        "invalid": r.invalid,
    });
    Ok((body, rows))
}

pub fn quality(a: QualityArgs, timing: bool) -> Result<(), CliError> {
    let (mesh, field) = load(&a.mesh, &a.metric)?;
    let objective: Objective = a.objective.into();
    let run = Run::new(
        "quality",
        &[&a.mesh, &a.metric],
        json!({"objective": objective, "n_1d": 3 * mesh.degree()}),
        timing,
    );
    let (mut body, rows) = quality_summary(&mesh, &field, objective)?;
    body["per_element"] = json!(rows.iter().map(|r| json!({"eta": r.eta, "quality": r.quality})).collect::<Vec<_>>());
    if let Some(path) = &a.csv {
        run.emit_csv(path, &rows)?;
    }
    if let Some(path) = &a.export_vtk {
        let q: Vec<f64> = rows.iter().map(|r| r.quality).collect();
        io::write_vtk(path, &mesh, "metra quality", &[("quality", &q)])?;
    }
    run.emit_json(a.out.as_ref(), body)
}

fn measure_summary(m: &MeasureHistogram) -> Value {
    let name = match m.k {
        1 => "length",
        2 => "area",
        _ => "volume",
    };
    json!({
        "k": m.k,
        "name": name,
        "entities": m.entities,
        "stats": m.stats,
        "singular": m.singular,
    })
}

#[derive(Serialize)]
struct HistogramRow {
    k: usize,
    bin: usize,
    log2_lo: f64,
    log2_hi: f64,
    mass: f64,
}

pub fn measure(a: MeasureArgs, timing: bool) -> Result<(), CliError> {
    if a.bins == 0 {
        return Err(CliError::Usage("--bins must be positive".into()));
    }
    let (mesh, field) = load(&a.mesh, &a.metric)?;
    let run = Run::new(
        "measure",
        &[&a.mesh, &a.metric],
        json!({"bins": a.bins, "n_1d": 3 * mesh.degree()}),
        timing,
    );
    let measures = mesh_measures(&mesh, &field, a.bins)?;
    if let Some(path) = &a.csv {
        let rows: Vec<HistogramRow> = measures
            .iter()
            .flat_map(|m| {
                m.histogram.mass.iter().enumerate().map(move |(bin, &mass)| HistogramRow {
                    k: m.k,
                    bin,
                    log2_lo: m.histogram.edges[bin],
                    log2_hi: m.histogram.edges[bin + 1],
                    mass,
                })
            })
            .collect();
        run.emit_csv(path, &rows)?;
    }
    let body = json!({
        "measures": measures.iter().map(|m| {
            let mut v = measure_summary(m);
            v["histogram"] = json!(m.histogram);
            v
        }).collect::<Vec<_>>(),
    });
    run.emit_json(a.out.as_ref(), body)
}

fn snapshot(mesh: &HighOrderMesh, field: &MetricField, objective: Objective) -> Result<Value, CliError> {
    let (mut q, _) = quality_summary(mesh, field, objective)?;
    let measures = mesh_measures(mesh, field, metra_core::measure::DEFAULT_BINS)?;
    q["measures"] = json!(measures.iter().map(measure_summary).collect::<Vec<_>>());
    Ok(q)
}

pub fn optimize(a: OptimizeArgs, timing: bool) -> Result<(), CliError> {
    let (mesh, field) = load(&a.mesh, &a.metric)?;
    let mut config: OptimizerConfig = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| {
                metra_core::Error::Parse {
                    location: format!("{}:{}:{}", path.display(), e.line(), e.column()),
                    message: e.to_string(),
                }
            })?
        }
        None => OptimizerConfig::default(),
    };
    if let Some(o) = a.objective {
        config.objective = o.into();
    }
    if let Some(n) = a.max_iters {
        config.max_newton_iters = n;
    }
    config.record_time = timing;
    config.validate()?;

    let mut inputs: Vec<&Path> = vec![&a.mesh, &a.metric];
    if let Some(c) = &a.config {
        inputs.push(c);
    }
    let run = Run::new("optimize", &inputs, json!(config), timing);
    let before = snapshot(&mesh, &field, config.objective)?;
    let opt = Optimizer::new(&mesh, &field, config.clone())?;
    let result = opt.run(&mesh)?;
    let after = snapshot(&result.mesh, &field, config.objective)?;
    let validity = verify_validity_with(&result.mesh, &field, 3 * mesh.degree(), config.objective)?;

    io::write_mesh(&a.out, &result.mesh)?;
    if let Some(path) = &a.trace {
        run.emit_csv(path, &result.trace)?;
    }
    if let Some(path) = &a.export_vtk {
        let ctx = ElementContext::for_mesh(&result.mesh)?;
        let q = mesh_report(&result.mesh, &field, &ctx, config.objective)?.quality;
        io::write_vtk(path, &result.mesh, "metra optimize", &[("quality", &q)])?;
    }
    let body = json!({
        "termination": result.termination,
        "iterations": result.iterations,
        "objective_initial": result.trace.first().map(|t| t.objective),
        "objective_final": result.trace.last().map(|t| t.objective),
        "before": before,
        "after": after,
        "validity": {
            "samples_per_element": validity.samples_per_element,
            "invalid": validity.invalid,
        },
    });
    run.emit_json(a.report.as_ref(), body)
}

#[derive(Serialize)]
struct ErrorRow {
    element: usize,
    e_i: f64,
    e_a: f64,
}

pub fn error(a: ErrorArgs, timing: bool) -> Result<(), CliError> {
    let mesh = io::read_mesh(&a.mesh)?;
    let u = match a.function {
        FunctionArg::Arctan2d => AnalyticFunction::arctan2d(a.gamma)?,
        FunctionArg::Arctan3d => AnalyticFunction::arctan3d(a.gamma)?,
    };
    if u.dim() != mesh.dim() {
        return Err(CliError::Usage(format!(
            "{}-dimensional function on a {}-dimensional mesh",
            u.dim(),
            mesh.dim()
        )));
    }
    let run = Run::new(
        "error",
        &[&a.mesh],
        json!({"function": u, "n_1d": 3 * mesh.degree() + 2, "cg_rel_tol": CG_REL_TOL}),
        timing,
    );
    let r = error_report(&mesh, &u)?;
    if let Some(path) = &a.csv {
        let rows: Vec<ErrorRow> = r
            .per_element
            .iter()
            .enumerate()
            .map(|(element, e)| ErrorRow { element, e_i: e.e_i, e_a: e.e_a })
            .collect();
        run.emit_csv(path, &rows)?;
    }
    let body = json!({
        "global_eI": r.global_e_i,
        "global_eA": r.global_e_a,
        "cg_iterations": r.cg_iterations,
        "per_element": r.per_element.iter().map(|e| json!({"eI": e.e_i, "eA": e.e_a})).collect::<Vec<_>>(),
    });
    run.emit_json(a.out.as_ref(), body)
}

fn parse_sampling(s: &str, degree: usize) -> Result<usize, CliError> {
    let bad = || CliError::Usage(format!("--degree-sampling expects an integer or `<k>p`, got `{s}`"));
    let n = match s.strip_suffix('p') {
        Some("") => degree,
        Some(k) => k.parse::<usize>().map_err(|_| bad())? * degree,
        None => s.parse::<usize>().map_err(|_| bad())?,
    };
    if n < 2 {
        return Err(CliError::Usage("need at least 2 samples per edge".into()));
    }
    Ok(n)
}

pub fn validate(a: ValidateArgs, timing: bool) -> Result<(), CliError> {
    let (mesh, field) = load(&a.mesh, &a.metric)?;
    let per_edge = parse_sampling(&a.degree_sampling, mesh.degree())?;
    let run = Run::new("validate", &[&a.mesh, &a.metric], json!({"per_edge": per_edge}), timing);
    let r = verify_validity_with(&mesh, &field, per_edge, Objective::SizeShape)?;
    let body = json!({
        "valid": r.invalid.is_empty(),
        "invalid": r.invalid,
        "samples_per_element": r.samples_per_element,
        "min_sigma": r.min_sigma,
        "min_quality": r.min_quality,
    });
    run.emit_json(a.out.as_ref(), body)?;
    if r.invalid.is_empty() {
        Ok(())
    } else {
        Err(CliError::InvalidElements(r.invalid))
    }
}

#[cfg(test)]
mod tests {
    use super::parse_sampling;

    #[test]
    fn sampling_specs() {
        assert_eq!(parse_sampling("3p", 2).unwrap(), 6);
        assert_eq!(parse_sampling("p", 4).unwrap(), 4);
        assert_eq!(parse_sampling("7", 2).unwrap(), 7);
        assert!(parse_sampling("x", 2).is_err());
        assert!(parse_sampling("1", 2).is_err());
    }
}
