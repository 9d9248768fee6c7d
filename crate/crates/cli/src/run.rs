//! Mode execution. Every solve happens here; the results are folded into
//! in-memory artifacts that the caller writes to disk.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sievelab_core::energy::{bulk_energy, jump_energy, lower_order_energy, InterfaceMeasure, MeasurePiece, Weight};
use sievelab_core::geometry::sieve_at;
use sievelab_core::homogenize::{
    cell_table, equality_condition, gamma_harness, monotone_limit_check, reconstruct_theta, CellSource,
    CellTable, CellTableSpec, ReconstructOptions, ReconstructedDensity, ThetaLabel,
};
use sievelab_core::mesh::{apply_sieve, io, triangulate, CouplingPattern, Field, InterfaceMesh};
use sievelab_core::solve::{capacity, solve_global, CapacityMesh, Coupling, Method, Solution, SolveStats};
use sievelab_core::Error;

use crate::config::{Experiment, Mode, RawConfig};
use crate::svg;

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Solver(String),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Unresolvable { .. }
            | Error::SnapTooLarge { .. }
            | Error::EmptySubmesh(_)
            | Error::Infeasible { .. }
            | Error::IterationCap { .. }
            | Error::InsufficientData(_)
            | Error::Io(_) => RunError::Solver(e.to_string()),
            _ => RunError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveRecord {
    pub label: String,
    pub method: Option<&'static str>,
    pub iterations: usize,
    pub residual: Option<f64>,
    pub value: Option<f64>,
    pub error: Option<String>,
}

impl SolveRecord {
    fn ok(label: String, value: f64, stats: &SolveStats) -> Self {
        Self {
            label,
            method: Some(match stats.method {
                Method::ConjugateGradient => "conjugate-gradient",
                Method::Descent => "descent",
            }),
            iterations: stats.iterations,
            residual: Some(stats.residual),
            value: Some(value),
            error: None,
        }
    }

    fn failed(label: String, error: String) -> Self {
        Self {
            label,
            method: None,
            iterations: 0,
            residual: None,
            value: None,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshRecord {
    pub label: String,
    pub h: f64,
    pub nodes: usize,
    pub triangles: usize,
    pub interface_edges: usize,
}

impl MeshRecord {
    fn of(label: &str, m: &InterfaceMesh) -> Self {
        Self {
            label: label.to_string(),
            h: m.h(),
            nodes: m.node_count(),
            triangles: m.triangle_count(),
            interface_edges: m.edges().len(),
        }
    }
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub sievelab: &'static str,
    pub mode: &'static str,
    pub config: &'a RawConfig,
    pub meshes: Vec<MeshRecord>,
    pub solves: Vec<SolveRecord>,
    pub flags: BTreeMap<String, Value>,
    pub files: Vec<String>,
}

/// Results of one run before they touch the disk.
pub struct Artifacts {
    /// File name and content, in write order.
    pub files: Vec<(String, Vec<u8>)>,
    pub meshes: Vec<MeshRecord>,
    pub solves: Vec<SolveRecord>,
    pub flags: BTreeMap<String, Value>,
    /// Set when some solve failed in a mode where that is an error.
    pub solver_failure: Option<String>,
}

impl Artifacts {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            meshes: Vec::new(),
            solves: Vec::new(),
            flags: BTreeMap::new(),
            solver_failure: None,
        }
    }

    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn flag(&mut self, key: &str, v: Value) {
        self.flags.insert(key.to_string(), v);
    }

    fn csv<S: Serialize>(&mut self, name: &str, rows: &[S]) -> Result<(), RunError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| RunError::Solver(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::Solver(e.to_string()))?;
        self.add(name, bytes);
        Ok(())
    }

    fn field_files(&mut self, x: &Experiment, suffix: &str, field: &Field) -> Result<(), RunError> {
        if !x.fields {
            return Ok(());
        }
        let space = field.space();
        let mut m = Vec::new();
        io::write_mesh(&mut m, space.mesh(), Some(space.pattern()))?;
        self.add(format!("mesh{suffix}.txt"), m);
        let mut f = Vec::new();
        io::write_field(&mut f, &format!("u{suffix}"), field)?;
        self.add(format!("u{suffix}.txt"), f);
        Ok(())
    }

    fn plot(&mut self, x: &Experiment, name: &str, svg: impl FnOnce() -> String) {
        if x.plots {
            self.add(name, svg().into_bytes());
        }
    }

    pub fn manifest(&self, x: &Experiment) -> Vec<u8> {
        let mut files: Vec<String> = self.files.iter().map(|f| f.0.clone()).collect();
        files.push("manifest.json".into());
        let m = Manifest {
            sievelab: env!("CARGO_PKG_VERSION"),
            mode: x.mode.name(),
            config: &x.resolved,
            meshes: self.meshes.clone(),
            solves: self.solves.clone(),
            flags: self.flags.clone(),
            files,
        };
        let mut out = serde_json::to_vec_pretty(&m).expect("manifest is serializable");
        out.push(b'\n');
        out
    }
}

pub fn run(x: &Experiment) -> Result<Artifacts, RunError> {
    let mut a = Artifacts::new();
    match x.mode {
        Mode::Perforated => perforated(x, &mut a)?,
        Mode::Transmission => transmission(x, &mut a)?,
        Mode::Cell | Mode::Reconstruct => {
            let table = cells(x, &mut a)?;
            if x.mode == Mode::Reconstruct {
                reconstruct(x, &table, &mut a)?;
            }
        }
        Mode::Gamma => gamma(x, &mut a)?,
        Mode::Capacity => capacity_mode(x, &mut a)?,
        Mode::Monotone => monotone(x, &mut a)?,
    }
    Ok(a)
}

fn global_mesh(x: &Experiment, h: f64) -> Result<Arc<InterfaceMesh>, RunError> {
    let domain = x.domain.as_ref().expect("domain is required");
    let iface = x.interface.as_ref().expect("interface is required");
    Ok(Arc::new(triangulate(domain, iface, h)?))
}

fn label_h(h: f64) -> String {
    format!("h={h}")
}

#[derive(Serialize)]
struct PerforatedRow {
    h: f64,
    j: usize,
    min_value: Option<f64>,
    removed_triangles: Option<usize>,
    free_edges: Option<usize>,
    iterations: usize,
    error: Option<String>,
}

fn perforated(x: &Experiment, a: &mut Artifacts) -> Result<(), RunError> {
    let iface = x.interface.as_ref().unwrap();
    let spec = x.sieve.as_ref().unwrap();
    let lower = x.lower.as_ref().unwrap();
    let mut rows = Vec::new();
    let mut last: Option<Solution> = None;
    for &h in &x.h {
        let mesh = global_mesh(x, h)?;
        a.meshes.push(MeshRecord::of(&label_h(h), &mesh));
        let results: Vec<(CouplingPattern, Result<Solution, Error>)> = x
            .js
            .par_iter()
            .map(|&j| {
                let pattern = sieve_at(iface, spec, j).and_then(|k| apply_sieve(&mesh, &k));
                match pattern {
                    Ok(p) => {
                        let s = solve_global(&mesh, &Coupling::Pattern(p.clone()), &x.bulk, Some(lower), &x.solver);
                        (p, s)
                    }
                    Err(e) => (CouplingPattern::uniform(&mesh, sievelab_core::mesh::EdgeState::Tied), Err(e)),
                }
            })
            .collect();
        for (&j, (p, r)) in x.js.iter().zip(results) {
            let label = format!("perforated {} j={j}", label_h(h));
            match r {
                Ok(s) => {
                    let (_, free, _) = p.counts();
                    rows.push(PerforatedRow {
                        h,
                        j,
                        min_value: Some(s.value),
                        removed_triangles: Some(p.removed_count()),
                        free_edges: Some(free),
                        iterations: s.stats.iterations,
                        error: None,
                    });
                    a.solves.push(SolveRecord::ok(label, s.value, &s.stats));
                    last = Some(s);
                }
                Err(e) => {
                    let msg = e.to_string();
                    a.solver_failure.get_or_insert_with(|| format!("{label}: {msg}"));
                    rows.push(PerforatedRow {
                        h,
                        j,
                        min_value: None,
                        removed_triangles: None,
                        free_edges: None,
                        iterations: 0,
                        error: Some(msg.clone()),
                    });
                    a.solves.push(SolveRecord::failed(label, msg));
                    last = None;
                }
            }
        }
    }
    a.csv("perforated.csv", &rows)?;
    if let Some(s) = last {
        let j = *x.js.last().unwrap();
        a.field_files(x, &format!("_j{j}"), &s.field)?;
        a.plot(x, "heatmap.svg", || svg::heatmap(&format!("perforated minimiser, j = {j}"), &s.field));
    }
    Ok(())
}

#[derive(Serialize)]
struct TransmissionRow {
    h: f64,
    nodes: usize,
    min_value: f64,
    bulk: f64,
    jump: f64,
    lower: f64,
    iterations: usize,
}

fn transmission(x: &Experiment, a: &mut Artifacts) -> Result<(), RunError> {
    let measure = x.measure.as_ref().unwrap();
    let lower = x.lower.as_ref().unwrap();
    let mut rows = Vec::new();
    let mut last = None;
    for &h in &x.h {
        let mesh = global_mesh(x, h)?;
        a.meshes.push(MeshRecord::of(&label_h(h), &mesh));
        let s = solve_global(&mesh, &Coupling::Measure(measure.clone()), &x.bulk, Some(lower), &x.solver)?;
        rows.push(TransmissionRow {
            h,
            nodes: mesh.node_count(),
            min_value: s.value,
            bulk: bulk_energy(&s.field, &x.bulk),
            jump: jump_energy(&s.field, measure, x.bulk.p())?,
            lower: lower_order_energy(&s.field, lower),
            iterations: s.stats.iterations,
        });
        a.solves.push(SolveRecord::ok(format!("transmission {}", label_h(h)), s.value, &s.stats));
        last = Some(s);
    }
    a.csv("transmission.csv", &rows)?;
    let s = last.unwrap();
    a.field_files(x, "", &s.field)?;
    a.plot(x, "heatmap.svg", || svg::heatmap("transmission minimiser", &s.field));
    a.plot(x, "jump.svg", || svg::jump_profile("jump along the interface", &s.field));
    Ok(())
}

#[derive(Serialize)]
struct CellRow {
    window: usize,
    window_start: f64,
    window_end: f64,
    rho: f64,
    j: usize,
    m: Option<f64>,
    per_length: Option<f64>,
    error: Option<String>,
}

fn cells(x: &Experiment, a: &mut Artifacts) -> Result<CellTable, RunError> {
    let iface = x.interface.as_ref().unwrap();
    let source = match (&x.sieve, &x.measure) {
        (_, Some(m)) if x.mode != Mode::Gamma => CellSource::Measure(m.clone()),
        (Some(s), _) => CellSource::Sieve(*s),
        (None, Some(m)) => CellSource::Measure(m.clone()),
        (None, None) => unreachable!("configuration checks require a sieve or a measure"),
    };
    let spec = CellTableSpec {
        windows: x.cell.windows.clone(),
        rhos: x.rhos.clone(),
        js: x.js.clone(),
        h: x.finest_h(),
        tail: x.cell.tail,
    };
    let table = cell_table(iface, &source, &spec, &x.bulk, &x.solver)?;
    let rows: Vec<CellRow> = table
        .entries
        .iter()
        .map(|e| CellRow {
            window: e.window,
            window_start: table.windows[e.window].start,
            window_end: table.windows[e.window].end,
            rho: e.rho,
            j: e.j,
            m: e.m,
            per_length: e.per_length,
            error: e.error.clone(),
        })
        .collect();
    for e in &table.entries {
        let label = format!("cell window={} rho={} j={}", e.window, e.rho, e.j);
        a.solves.push(match (e.m, &e.error) {
            (Some(m), _) => SolveRecord {
                label,
                method: Some(if x.bulk.p() == 2.0 { "conjugate-gradient" } else { "descent" }),
                iterations: e.iterations,
                residual: None,
                value: Some(m),
                error: None,
            },
            (None, err) => SolveRecord::failed(label, err.clone().unwrap_or_default()),
        });
    }
    a.csv("cell_table.csv", &rows)?;
    a.flag("cell_failures", json!(table.failures()));
    if table.tail >= 3 {
        let flags = equality_condition(&table, x.cell.equality_tol)?;
        let v: Vec<Value> = flags
            .iter()
            .map(|f| {
                json!({
                    "window": f.window,
                    "rho": f.rho,
                    "tail_min": f.tail.map(|t| t.0),
                    "tail_max": f.tail.map(|t| t.1),
                    "holds": f.holds,
                })
            })
            .collect();
        a.flag("equality_condition", Value::Array(v));
    }
    Ok(table)
}

#[derive(Serialize)]
struct ThetaRow {
    window_start: f64,
    window_end: f64,
    theta_hat: f64,
    spread: f64,
    label: &'static str,
    reliable: bool,
    subsequence_dependent: bool,
}

fn reconstruct(x: &Experiment, table: &CellTable, a: &mut Artifacts) -> Result<ReconstructedDensity, RunError> {
    let iface = x.interface.as_ref().unwrap();
    let opts = ReconstructOptions {
        tail_value: x.cell.tail_value,
        equality_tol: x.cell.equality_tol,
        ..Default::default()
    };
    let density = reconstruct_theta(table, iface, &opts);
    let rows: Vec<ThetaRow> = density
        .windows
        .iter()
        .map(|w| ThetaRow {
            window_start: w.window.start,
            window_end: w.window.end,
            theta_hat: w.theta_hat,
            spread: w.spread,
            label: match w.label {
                ThetaLabel::Zero => "zero",
                ThetaLabel::Finite => "finite",
                ThetaLabel::Infinite => "infinite",
            },
            reliable: w.reliable,
            subsequence_dependent: w.subsequence_dependent,
        })
        .collect();
    a.csv("theta.csv", &rows)?;
    Ok(density)
}

#[derive(Serialize)]
struct ReportRow {
    j: usize,
    min_value: Option<f64>,
    lq_distance: Option<f64>,
    relative_distance: Option<f64>,
    energy_gap: Option<f64>,
    relative_gap: Option<f64>,
    iterations: usize,
    error: Option<String>,
}

fn tiles(x: &Experiment) -> bool {
    let base = x.interface.as_ref().unwrap().base_length();
    let w = &x.cell.windows;
    let tol = 1e-9 * base;
    w[0].start.abs() <= tol
        && (w.last().unwrap().end - base).abs() <= tol
        && w.windows(2).all(|p| (p[0].end - p[1].start).abs() <= tol)
}

fn gamma(x: &Experiment, a: &mut Artifacts) -> Result<(), RunError> {
    let iface = x.interface.as_ref().unwrap();
    let measure = match &x.measure {
        Some(m) => m.clone(),
        None => {
            if !tiles(x) {
                return Err(RunError::Config(
                    "cell.windows must tile the interface when gamma mode reconstructs the measure".into(),
                ));
            }
            let table = cells(x, a)?;
            reconstruct(x, &table, a)?.to_measure(Weight::Zero)?
        }
    };
    let mesh = global_mesh(x, x.finest_h())?;
    a.meshes.push(MeshRecord::of(&label_h(x.finest_h()), &mesh));
    let report = gamma_harness(
        &mesh,
        iface,
        x.sieve.as_ref().unwrap(),
        &measure,
        &x.bulk,
        x.lower.as_ref().unwrap(),
        &x.js,
        x.harness,
        &x.solver,
    )?;
    a.solves.push(SolveRecord::ok("transmission limit".into(), report.limit_value, &report.limit.stats));
    let rows: Vec<ReportRow> = report
        .rows
        .iter()
        .map(|r| ReportRow {
            j: r.j,
            min_value: r.min_value,
            lq_distance: r.lq_distance,
            relative_distance: r.relative_distance,
            energy_gap: r.energy_gap,
            relative_gap: r.relative_gap,
            iterations: r.iterations,
            error: r.error.clone(),
        })
        .collect();
    for r in &report.rows {
        let label = format!("perforated j={}", r.j);
        a.solves.push(match (r.min_value, &r.error) {
            (Some(v), _) => SolveRecord {
                label,
                method: Some(if x.bulk.p() == 2.0 && x.lower.as_ref().unwrap().q() == 2.0 {
                    "conjugate-gradient"
                } else {
                    "descent"
                }),
                iterations: r.iterations,
                residual: None,
                value: Some(v),
                error: None,
            },
            (None, e) => {
                let msg = e.clone().unwrap_or_default();
                a.solver_failure.get_or_insert_with(|| format!("{label}: {msg}"));
                SolveRecord::failed(label, msg)
            }
        });
    }
    a.csv("report.csv", &rows)?;
    let f = &report.flags;
    a.flag("q", json!(report.q));
    a.flag("limit_value", json!(report.limit_value));
    a.flag("limit_norm", json!(report.limit_norm));
    a.flag("distances_decreasing", json!(f.distances_decreasing));
    a.flag("gaps_settling", json!(f.gaps_settling));
    a.flag("final_distance_ok", json!(f.final_distance_ok));
    a.flag("final_gap_ok", json!(f.final_gap_ok));
    a.flag("distance_tol", json!(report.tolerances.distance));
    a.flag("gap_tol", json!(report.tolerances.energy_gap));
    a.field_files(x, "_limit", &report.limit.field)?;
    if let Some(s) = &report.last {
        let j = report.rows.iter().rev().find(|r| r.min_value.is_some()).map(|r| r.j).unwrap();
        a.field_files(x, &format!("_j{j}"), &s.field)?;
    }
    a.plot(x, "convergence.svg", || {
        let series = |f: fn(&sievelab_core::homogenize::HarnessRow) -> Option<f64>| {
            report
                .rows
                .iter()
                .filter_map(|r| f(r).map(|v| (r.j as f64, v)))
                .collect::<Vec<_>>()
        };
        svg::line_plot(
            "perforated vs transmission minimisers",
            "j",
            &[
                ("relative Lq distance", series(|r| r.relative_distance)),
                ("relative energy gap", series(|r| r.relative_gap)),
            ],
            true,
        )
    });
    a.plot(x, "heatmap.svg", || svg::heatmap("transmission minimiser", &report.limit.field));
    a.plot(x, "jump.svg", || svg::jump_profile("jump of the transmission minimiser", &report.limit.field));
    Ok(())
}

fn capacity_mode(x: &Experiment, a: &mut Artifacts) -> Result<(), RunError> {
    let c = x.capacity.as_ref().unwrap();
    let r = capacity(
        &c.outer,
        &c.inner,
        x.bulk.p(),
        CapacityMesh {
            h: x.finest_h(),
            sectors: c.sectors,
        },
        &x.solver,
    )?;
    a.meshes.push(MeshRecord {
        label: "condenser".into(),
        h: x.finest_h(),
        nodes: r.nodes,
        triangles: r.triangles,
        interface_edges: 0,
    });
    if let Some(s) = &r.stats {
        a.solves.push(SolveRecord::ok("capacity".into(), r.value, s));
    }
    let body = json!({
        "p": x.bulk.p(),
        "value": r.value,
        "oracle": Value::Null,
        "nodes": r.nodes,
        "triangles": r.triangles,
        "conforming": r.conforming,
    });
    let mut bytes = serde_json::to_vec_pretty(&body).expect("capacity report is serializable");
    bytes.push(b'\n');
    a.add("capacity.json", bytes);
    Ok(())
}

#[derive(Serialize)]
struct MonotoneRow {
    k: usize,
    theta: f64,
    min_value: f64,
}

fn monotone(x: &Experiment, a: &mut Artifacts) -> Result<(), RunError> {
    let m = x.monotone.as_ref().unwrap();
    let on_arc = |w: Weight| {
        InterfaceMeasure::new(
            vec![MeasurePiece {
                start: m.arc[0],
                end: m.arc[1],
                weight: w,
            }],
            m.background,
        )
    };
    let ladder = m
        .thetas
        .iter()
        .map(|&t| on_arc(Weight::from_value(t)?))
        .collect::<Result<Vec<_>, Error>>()?;
    let limit = on_arc(m.limit)?;
    let mesh = global_mesh(x, x.finest_h())?;
    a.meshes.push(MeshRecord::of(&label_h(x.finest_h()), &mesh));
    let r = monotone_limit_check(&mesh, &ladder, &limit, &x.bulk, x.lower.as_ref().unwrap(), &x.solver)?;
    let rows: Vec<MonotoneRow> = m
        .thetas
        .iter()
        .zip(&r.values)
        .enumerate()
        .map(|(k, (&theta, &min_value))| MonotoneRow { k, theta, min_value })
        .collect();
    for row in &rows {
        a.solves.push(SolveRecord {
            label: format!("transmission theta={}", row.theta),
            method: None,
            iterations: 0,
            residual: None,
            value: Some(row.min_value),
            error: None,
        });
    }
    a.solves.push(SolveRecord {
        label: "transmission limit".into(),
        method: None,
        iterations: 0,
        residual: None,
        value: Some(r.limit_value),
        error: None,
    });
    a.csv("monotone.csv", &rows)?;
    a.flag("limit_value", json!(r.limit_value));
    a.flag("nondecreasing", json!(r.nondecreasing));
    a.flag("final_gap", json!(r.final_gap));
    let limit_value = r.limit_value;
    a.plot(x, "monotone.svg", || {
        svg::line_plot(
            "transmission minima along the ladder",
            "k",
            &[
                ("min value", rows.iter().map(|row| (row.k as f64, row.min_value)).collect()),
                ("limit", rows.iter().map(|row| (row.k as f64, limit_value)).collect()),
            ],
            false,
        )
    });
    Ok(())
}
