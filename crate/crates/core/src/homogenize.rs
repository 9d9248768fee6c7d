//! Sequences in `j`: cell tables, the equality condition, reconstruction of
//! the interface density and the convergence harness.

use std::sync::Arc;

use rayon::prelude::*;

use crate::energy::{BulkConfig, InterfaceMeasure, LowerOrderConfig, MeasurePiece, Weight};
use crate::error::{Error, Result};
use crate::geometry::{sieve_at, strip, Domain, Interface, SieveSpec};
use crate::mesh::{apply_sieve, restrict_to_strip, triangulate_with, CellMesh, Field, InterfaceMesh, MeshOptions};
use crate::solve::{solve_cell, solve_global, Coupling, Solution, SolverOptions};

/// Sub-interval `[start, end]` of the base segment, measured from its start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, other: &Window) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    fn params(&self, iface: &Interface) -> (f64, f64) {
        let h = iface.half_length();
        (self.start - h, self.end - h)
    }

    /// Arc-length interval of the interface above the window.
    pub fn arc_range(&self, iface: &Interface) -> (f64, f64) {
        let (a, b) = self.params(iface);
        (iface.arc_at(a), iface.arc_at(b))
    }

    pub fn arc_length(&self, iface: &Interface) -> f64 {
        let (a, b) = self.arc_range(iface);
        b - a
    }
}

/// What couples the strip across the interface for a given `j`.
#[derive(Debug, Clone, PartialEq)]
pub enum CellSource {
    Sieve(SieveSpec),
    /// The same measure for every `j`.
    Measure(InterfaceMeasure),
}

/// Mesh of the strip `S_ρ` above a window.
pub fn cell_mesh(iface: &Interface, window: Window, rho: f64, h: f64) -> Result<CellMesh> {
    let region = strip(iface, rho)?;
    if !(window.start >= 0.0 && window.end <= iface.base_length() && window.start < window.end) {
        return Err(Error::InvalidConfig(format!(
            "window [{}, {}] is not inside [0, {}]",
            window.start,
            window.end,
            iface.base_length()
        )));
    }
    let t = iface.tangent();
    let ta = if t[0].abs() > t[1].abs() { 0 } else { 1 };
    let na = 1 - ta;
    let (a, b) = window.params(iface);
    let c = iface.center();
    let (t0, t1) = (c[ta] + t[ta] * a, c[ta] + t[ta] * b);
    let reach = rho + 2.0 * iface.max_abs_phi() + 2.0 * h;
    let mut lo = [0.0; 2];
    let mut hi = [0.0; 2];
    lo[ta] = t0.min(t1);
    hi[ta] = t0.max(t1);
    lo[na] = c[na] - reach;
    hi[na] = c[na] + reach;
    let domain = Domain::new(lo[0], hi[0], lo[1], hi[1])?;
    let opts = MeshOptions {
        h,
        normal_lines: vec![rho, -rho],
        rigid_band: rho,
        clip_interface: true,
    };
    let mesh = triangulate_with(&domain, iface, &opts)?;
    restrict_to_strip(&mesh, &region)
}

fn cell_coupling(iface: &Interface, cell: &CellMesh, source: &CellSource, j: usize) -> Result<Coupling> {
    Ok(match source {
        CellSource::Sieve(spec) => Coupling::Pattern(apply_sieve(&cell.mesh, &sieve_at(iface, spec, j)?)?),
        CellSource::Measure(m) => Coupling::Measure(m.clone()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellEntry {
    pub window: usize,
    pub rho: f64,
    pub j: usize,
    /// Minimum value, absent when the cell could not be built or solved.
    pub m: Option<f64>,
    pub per_length: Option<f64>,
    pub error: Option<String>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub last: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellTable {
    pub windows: Vec<Window>,
    pub window_lengths: Vec<f64>,
    pub rhos: Vec<f64>,
    pub js: Vec<usize>,
    pub tail: usize,
    /// Ordered by window, then ρ, then j.
    pub entries: Vec<CellEntry>,
}

impl CellTable {
    pub fn entry(&self, window: usize, rho: usize, j: usize) -> &CellEntry {
        &self.entries[(window * self.rhos.len() + rho) * self.js.len() + j]
    }

    /// Statistics of `m` per unit length over the trailing `tail` indices;
    /// `None` when any of them is missing.
    pub fn tail_stats(&self, window: usize, rho: usize) -> Option<TailStats> {
        let n = self.js.len();
        if self.tail == 0 || self.tail > n {
            return None;
        }
        let vals: Option<Vec<f64>> = (n - self.tail..n)
            .map(|k| self.entry(window, rho, k).per_length)
            .collect();
        let vals = vals?;
        Some(TailStats {
            min: vals.iter().cloned().fold(f64::INFINITY, f64::min),
            max: vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean: vals.iter().sum::<f64>() / vals.len() as f64,
            last: *vals.last().unwrap(),
        })
    }

    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.m.is_none()).count()
    }
}

/// Parameters shared by every cell of a table.
#[derive(Debug, Clone)]
pub struct CellTableSpec {
    pub windows: Vec<Window>,
    pub rhos: Vec<f64>,
    pub js: Vec<usize>,
    pub h: f64,
    pub tail: usize,
}

/// Solves every `(window, ρ, j)` cell problem in parallel. Cells that cannot
/// be built or solved are recorded with their error.
pub fn cell_table(
    iface: &Interface,
    source: &CellSource,
    spec: &CellTableSpec,
    bulk: &BulkConfig,
    opts: &SolverOptions,
) -> Result<CellTable> {
    if spec.windows.is_empty() || spec.rhos.is_empty() || spec.js.is_empty() {
        return Err(Error::InsufficientData("windows, ρ ladder and j range must be nonempty".into()));
    }
    if let CellSource::Sieve(s) = source {
        s.validate()?;
    }
    for &rho in &spec.rhos {
        strip(iface, rho)?;
    }
    let meshes: Vec<(usize, usize, std::result::Result<CellMesh, String>)> = spec
        .windows
        .iter()
        .enumerate()
        .flat_map(|(w, _)| (0..spec.rhos.len()).map(move |r| (w, r)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(w, r)| {
            let m = cell_mesh(iface, spec.windows[w], spec.rhos[r], spec.h).map_err(|e| e.to_string());
            (w, r, m)
        })
        .collect();
    let tasks: Vec<(usize, usize, usize)> = meshes
        .iter()
        .enumerate()
        .flat_map(|(k, _)| (0..spec.js.len()).map(move |j| (k, j)))
        .map(|(k, j)| (meshes[k].0, meshes[k].1, j))
        .collect();
    let window_lengths: Vec<f64> = spec.windows.iter().map(|w| w.arc_length(iface)).collect();
    let entries = tasks
        .into_par_iter()
        .map(|(w, r, jk)| {
            let j = spec.js[jk];
            let rho = spec.rhos[r];
            let mesh = &meshes[w * spec.rhos.len() + r].2;
            let result = mesh
                .as_ref()
                .map_err(|e| e.clone())
                .and_then(|cell| {
                    let c = cell_coupling(iface, cell, source, j).map_err(|e| e.to_string())?;
                    solve_cell(cell, &c, bulk, opts).map_err(|e| e.to_string())
                });
            match result {
                Ok(sol) => CellEntry {
                    window: w,
                    rho,
                    j,
                    m: Some(sol.value),
                    per_length: Some(sol.value / window_lengths[w]),
                    error: None,
                    iterations: sol.stats.iterations,
                },
                Err(e) => CellEntry {
                    window: w,
                    rho,
                    j,
                    m: None,
                    per_length: None,
                    error: Some(e),
                    iterations: 0,
                },
            }
        })
        .collect();
    Ok(CellTable {
        windows: spec.windows.clone(),
        window_lengths,
        rhos: spec.rhos.clone(),
        js: spec.js.clone(),
        tail: spec.tail,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualityFlag {
    pub window: usize,
    pub rho: f64,
    /// Tail minimum and maximum of `m`, or `None` with missing entries.
    pub tail: Option<(f64, f64)>,
    pub holds: Option<bool>,
}

const FLOOR: f64 = 1e-12;

fn equal_within(lo: f64, hi: f64, tol: f64) -> bool {
    hi - lo <= tol * hi.max(FLOOR)
}

/// Tail oscillation test of every `(window, ρ)` row.
pub fn equality_condition(table: &CellTable, tol: f64) -> Result<Vec<EqualityFlag>> {
    if table.tail < 3 || table.tail > table.js.len() {
        return Err(Error::InsufficientData(format!(
            "the tail window needs at least 3 of the {} computed indices, got {}",
            table.js.len(),
            table.tail
        )));
    }
    let mut out = Vec::new();
    for w in 0..table.windows.len() {
        for (r, &rho) in table.rhos.iter().enumerate() {
            let tail = table
                .tail_stats(w, r)
                .map(|s| (s.min * table.window_lengths[w], s.max * table.window_lengths[w]));
            out.push(EqualityFlag {
                window: w,
                rho,
                holds: tail.map(|(lo, hi)| equal_within(lo, hi, tol)),
                tail,
            });
        }
    }
    Ok(out)
}

/// Equality of the suprema of the tail minimum and maximum over the windows
/// nested inside `outer` (itself included), one flag per ρ.
pub fn nested_equality(table: &CellTable, outer: usize, tol: f64) -> Result<Vec<EqualityFlag>> {
    let flags = equality_condition(table, tol)?;
    let o = table.windows[outer];
    let inner: Vec<usize> = (0..table.windows.len())
        .filter(|&w| o.contains(&table.windows[w]))
        .collect();
    Ok(table
        .rhos
        .iter()
        .enumerate()
        .map(|(r, &rho)| {
            let rows: Option<Vec<(f64, f64)>> = inner
                .iter()
                .map(|&w| flags[w * table.rhos.len() + r].tail)
                .collect();
            let tail = rows.map(|v| {
                v.iter().fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |(a, b), &(lo, hi)| {
                    (a.max(lo), b.max(hi))
                })
            });
            EqualityFlag {
                window: outer,
                rho,
                holds: tail.map(|(lo, hi)| equal_within(lo, hi, tol)),
                tail,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaLabel {
    Zero,
    Finite,
    Infinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderPoint {
    pub rho: f64,
    pub m_bar: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowEstimate {
    pub window: Window,
    pub arc: (f64, f64),
    pub theta_hat: f64,
    pub label: ThetaLabel,
    pub ladder: Vec<LadderPoint>,
    /// Largest minus smallest finite θ over the ladder; infinite when the
    /// labels disagree.
    pub spread: f64,
    pub reliable: bool,
    pub subsequence_dependent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedDensity {
    pub windows: Vec<WindowEstimate>,
}

/// Tail statistic used as the stable value of `m` per unit length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailValue {
    #[default]
    Last,
    Mean,
    Max,
    Min,
}

impl TailValue {
    fn pick(&self, s: &TailStats) -> f64 {
        match self {
            TailValue::Last => s.last,
            TailValue::Mean => s.mean,
            TailValue::Max => s.max,
            TailValue::Min => s.min,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructOptions {
    pub tail_value: TailValue,
    /// `θ = ∞` once `1 - 2ρ m̄` falls below this.
    pub infinite_tol: f64,
    /// `θ = 0` once `2ρ m̄` falls below this.
    pub zero_floor: f64,
    /// Tolerance of the equality condition behind the subsequence label.
    pub equality_tol: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            tail_value: TailValue::Last,
            infinite_tol: 1e-6,
            zero_floor: 1e-9,
            equality_tol: 0.05,
        }
    }
}

/// Inverts `m̄ = θ / (1 + 2θρ)` per window and ρ.
pub fn invert(m_bar: f64, rho: f64, opts: &ReconstructOptions) -> (f64, ThetaLabel) {
    let x = 2.0 * rho * m_bar;
    if x <= opts.zero_floor {
        (0.0, ThetaLabel::Zero)
    } else if 1.0 - x <= opts.infinite_tol {
        (f64::INFINITY, ThetaLabel::Infinite)
    } else {
        (m_bar / (1.0 - x), ThetaLabel::Finite)
    }
}

pub fn reconstruct_theta(
    table: &CellTable,
    iface: &Interface,
    opts: &ReconstructOptions,
) -> ReconstructedDensity {
    let flags = if table.tail >= 3 {
        equality_condition(table, opts.equality_tol).ok()
    } else {
        None
    };
    let mut order: Vec<usize> = (0..table.rhos.len()).collect();
    order.sort_by(|&a, &b| table.rhos[b].partial_cmp(&table.rhos[a]).unwrap());
    let windows = (0..table.windows.len())
        .map(|w| {
            let mut ladder = Vec::new();
            let mut labels = Vec::new();
            for &r in &order {
                if let Some(s) = table.tail_stats(w, r) {
                    let m_bar = opts.tail_value.pick(&s);
                    let (theta, label) = invert(m_bar, table.rhos[r], opts);
                    ladder.push(LadderPoint {
                        rho: table.rhos[r],
                        m_bar,
                        theta,
                    });
                    labels.push(label);
                }
            }
            // m̄ must not decrease as ρ shrinks
            let monotone = ladder
                .windows(2)
                .all(|p| p[1].m_bar >= p[0].m_bar * (1.0 - 1e-2) - 1e-12);
            let reliable = !ladder.is_empty() && monotone;
            let (theta_hat, label) = match (ladder.last(), labels.last()) {
                (Some(p), Some(l)) => (p.theta, *l),
                _ => (f64::NAN, ThetaLabel::Finite),
            };
            let spread = if labels.windows(2).any(|l| l[0] != l[1]) {
                f64::INFINITY
            } else if label == ThetaLabel::Finite {
                let t: Vec<f64> = ladder.iter().map(|p| p.theta).collect();
                t.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    - t.iter().cloned().fold(f64::INFINITY, f64::min)
            } else {
                0.0
            };
            let subsequence_dependent = match &flags {
                Some(f) => (0..table.rhos.len())
                    .any(|r| f[w * table.rhos.len() + r].holds != Some(true)),
                None => true,
            };
            WindowEstimate {
                window: table.windows[w],
                arc: table.windows[w].arc_range(iface),
                theta_hat,
                label,
                ladder,
                spread,
                reliable,
                subsequence_dependent,
            }
        })
        .collect();
    ReconstructedDensity { windows }
}

impl ReconstructedDensity {
    /// Piecewise-constant measure over the window arcs.
    pub fn to_measure(&self, default: Weight) -> Result<InterfaceMeasure> {
        let pieces = self
            .windows
            .iter()
            .map(|w| {
                Ok(MeasurePiece {
                    start: w.arc.0,
                    end: w.arc.1,
                    weight: match w.label {
                        ThetaLabel::Zero => Weight::Zero,
                        ThetaLabel::Infinite => Weight::Infinite,
                        ThetaLabel::Finite => Weight::from_value(w.theta_hat)?,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        InterfaceMeasure::new(pieces, default)
    }
}

/// `‖u - v‖_{L^q}` over the triangles active in both fields, which must live
/// on the same mesh.
pub fn lq_distance(u: &Field, v: &Field, q: f64) -> f64 {
    lq_integral(u, Some(v), q).powf(1.0 / q)
}

pub fn lq_norm(u: &Field, q: f64) -> f64 {
    lq_integral(u, None, q).powf(1.0 / q)
}

const INTERIOR: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

fn lq_integral(u: &Field, v: Option<&Field>, q: f64) -> f64 {
    let mesh = u.space().mesh();
    let mut total = 0.0;
    for t in 0..mesh.triangle_count() {
        if u.space().pattern().is_removed(t) || v.is_some_and(|v| v.space().pattern().is_removed(t)) {
            continue;
        }
        let tri = mesh.triangles()[t];
        let d = tri.map(|n| u.node_value(n).unwrap() - v.map_or(0.0, |v| v.node_value(n).unwrap()));
        let s: f64 = INTERIOR
            .iter()
            .map(|b| (b[0] * d[0] + b[1] * d[1] + b[2] * d[2]).abs().powf(q))
            .sum();
        total += mesh.triangle_area(t) / 3.0 * s;
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessRow {
    pub j: usize,
    pub min_value: Option<f64>,
    pub lq_distance: Option<f64>,
    pub relative_distance: Option<f64>,
    pub energy_gap: Option<f64>,
    pub relative_gap: Option<f64>,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessTolerances {
    /// Bound on the final relative `L^q` distance.
    pub distance: f64,
    /// Bound on the final relative energy gap.
    pub energy_gap: f64,
}

impl Default for HarnessTolerances {
    fn default() -> Self {
        Self {
            distance: 0.05,
            energy_gap: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceFlags {
    pub distances_decreasing: bool,
    /// `|min_j - min|` nonincreasing over the last three indices.
    pub gaps_settling: bool,
    pub final_distance_ok: bool,
    pub final_gap_ok: bool,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub q: f64,
    pub limit_value: f64,
    pub limit_norm: f64,
    pub rows: Vec<HarnessRow>,
    pub flags: ConvergenceFlags,
    pub tolerances: HarnessTolerances,
    pub limit: Solution,
    /// Minimiser at the largest `j` that was solved.
    pub last: Option<Solution>,
}

fn flags_of(rows: &[HarnessRow], tol: &HarnessTolerances) -> ConvergenceFlags {
    let d: Option<Vec<f64>> = rows.iter().map(|r| r.lq_distance).collect();
    let g: Option<Vec<f64>> = rows.iter().map(|r| r.energy_gap).collect();
    let distances_decreasing = d.as_ref().is_some_and(|d| d.windows(2).all(|w| w[1] <= w[0]));
    let gaps_settling = g.as_ref().is_some_and(|g| {
        g[g.len().saturating_sub(3)..].windows(2).all(|w| w[1] <= w[0])
    });
    let last = rows.last();
    ConvergenceFlags {
        distances_decreasing,
        gaps_settling,
        final_distance_ok: last
            .and_then(|r| r.relative_distance)
            .is_some_and(|v| v <= tol.distance),
        final_gap_ok: last.and_then(|r| r.relative_gap).is_some_and(|v| v <= tol.energy_gap),
    }
}

/// Solves the perforated problem for every `j` and the transmission problem
/// with `measure` once, all on `mesh`, and compares them.
pub fn gamma_harness(
    mesh: &Arc<InterfaceMesh>,
    iface: &Interface,
    spec: &SieveSpec,
    measure: &InterfaceMeasure,
    bulk: &BulkConfig,
    lower: &LowerOrderConfig,
    js: &[usize],
    tol: HarnessTolerances,
    opts: &SolverOptions,
) -> Result<ConvergenceReport> {
    spec.validate()?;
    measure.validate(iface.length())?;
    let q = lower.q();
    let limit = solve_global(mesh, &Coupling::Measure(measure.clone()), bulk, Some(lower), opts)?;
    let limit_norm = lq_norm(&limit.field, q);
    let solved: Vec<(HarnessRow, Option<Solution>)> = js
        .par_iter()
        .map(|&j| {
            let result = sieve_at(iface, spec, j)
                .and_then(|k| apply_sieve(mesh, &k))
                .and_then(|p| solve_global(mesh, &Coupling::Pattern(p), bulk, Some(lower), opts));
            match result {
                Ok(sol) => {
                    let d = lq_distance(&sol.field, &limit.field, q);
                    let gap = (sol.value - limit.value).abs();
                    (
                        HarnessRow {
                            j,
                            min_value: Some(sol.value),
                            lq_distance: Some(d),
                            relative_distance: Some(d / limit_norm.max(FLOOR)),
                            energy_gap: Some(gap),
                            relative_gap: Some(gap / limit.value.abs().max(FLOOR)),
                            iterations: sol.stats.iterations,
                            error: None,
                        },
                        Some(sol),
                    )
                }
                Err(e) => (
                    HarnessRow {
                        j,
                        min_value: None,
                        lq_distance: None,
                        relative_distance: None,
                        energy_gap: None,
                        relative_gap: None,
                        iterations: 0,
                        error: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();
    let last = solved.iter().rev().find_map(|(_, s)| s.clone());
    let rows: Vec<HarnessRow> = solved.into_iter().map(|(r, _)| r).collect();
    Ok(ConvergenceReport {
        q,
        limit_value: limit.value,
        limit_norm,
        flags: flags_of(&rows, &tol),
        rows,
        tolerances: tol,
        limit,
        last,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub values: Vec<f64>,
    pub limit_value: f64,
    pub nondecreasing: bool,
    /// `|values.last - limit| / |limit|`.
    pub final_gap: f64,
}

/// Transmission minima along a pointwise nondecreasing ladder of measures,
/// compared with the minimum for `limit`.
pub fn monotone_limit_check(
    mesh: &Arc<InterfaceMesh>,
    ladder: &[InterfaceMeasure],
    limit: &InterfaceMeasure,
    bulk: &BulkConfig,
    lower: &LowerOrderConfig,
    opts: &SolverOptions,
) -> Result<MonotoneReport> {
    if ladder.is_empty() {
        return Err(Error::InsufficientData("empty measure ladder".into()));
    }
    for (k, w) in ladder.windows(2).enumerate() {
        if !w[0].le_on(&w[1], mesh) {
            return Err(Error::InvalidMeasure(format!(
                "ladder entries {k} and {} are not pointwise ordered",
                k + 1
            )));
        }
    }
    let values = ladder
        .par_iter()
        .map(|m| solve_global(mesh, &Coupling::Measure(m.clone()), bulk, Some(lower), opts).map(|s| s.value))
        .collect::<Result<Vec<f64>>>()?;
    let limit_value = solve_global(mesh, &Coupling::Measure(limit.clone()), bulk, Some(lower), opts)?.value;
    let scale = limit_value.abs().max(FLOOR);
    let nondecreasing = values
        .windows(2)
        .all(|w| w[1] >= w[0] - 1e-9 * scale);
    let final_gap = (values.last().unwrap() - limit_value).abs() / scale;
    Ok(MonotoneReport {
        values,
        limit_value,
        nondecreasing,
        final_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Datum;
    use crate::geometry::*;

    fn flat() -> Interface {
        build_interface(
            Segment::new([0.0, 0.0], [1.0, 0.0]),
            Profile::Flat,
            InterfaceOptions {
                test_mode: true,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn table_of(values: &[f64]) -> CellTable {
        CellTable {
            windows: vec![Window::new(0.0, 1.0)],
            window_lengths: vec![1.0],
            rhos: vec![0.25],
            js: (1..=values.len()).collect(),
            tail: values.len().min(4),
            entries: values
                .iter()
                .enumerate()
                .map(|(k, &v)| CellEntry {
                    window: 0,
                    rho: 0.25,
                    j: k + 1,
                    m: Some(v),
                    per_length: Some(v),
                    error: None,
                    iterations: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn equality_on_constant_and_alternating_tables() {
        let c = equality_condition(&table_of(&[1.5; 6]), 0.0).unwrap();
        assert_eq!(c[0].holds, Some(true));
        let a = equality_condition(&table_of(&[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]), 0.1).unwrap();
        assert_eq!(a[0].holds, Some(false));
        let mut short = table_of(&[1.0, 1.0]);
        short.tail = 2;
        assert!(matches!(equality_condition(&short, 0.1), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn synthetic_inversion_is_exact() {
        let iface = flat();
        let rhos = [0.25, 0.125, 0.0625];
        let mut entries = Vec::new();
        for &rho in &rhos {
            for j in 1..=3 {
                let v = 1.0 / (1.0 + 2.0 * rho);
                entries.push(CellEntry {
                    window: 0,
                    rho,
                    j,
                    m: Some(v),
                    per_length: Some(v),
                    error: None,
                    iterations: 0,
                });
            }
        }
        let table = CellTable {
            windows: vec![Window::new(0.0, 1.0)],
            window_lengths: vec![1.0],
            rhos: rhos.to_vec(),
            js: vec![1, 2, 3],
            tail: 3,
            entries,
        };
        let r = reconstruct_theta(&table, &iface, &ReconstructOptions::default());
        let w = &r.windows[0];
        assert_eq!(w.label, ThetaLabel::Finite);
        assert!((w.theta_hat - 1.0).abs() < 1e-14);
        assert!(w.spread < 1e-14);
        assert!(w.reliable && !w.subsequence_dependent);
    }

    #[test]
    fn tied_and_free_tables_saturate() {
        let iface = flat();
        let spec = CellTableSpec {
            windows: vec![Window::new(0.0, 1.0)],
            rhos: vec![0.25, 0.125],
            js: vec![1, 2, 3],
            h: 1.0 / 32.0,
            tail: 3,
        };
        let bulk = BulkConfig::isotropic(2.0).unwrap();
        let opts = SolverOptions::default();
        let tied = cell_table(&iface, &CellSource::Sieve(SieveSpec::Empty), &spec, &bulk, &opts).unwrap();
        for e in &tied.entries {
            assert!((e.per_length.unwrap() - 0.5 / e.rho).abs() < 1e-8);
        }
        let r = reconstruct_theta(&tied, &iface, &ReconstructOptions::default());
        assert_eq!(r.windows[0].label, ThetaLabel::Infinite);

        let slab = SieveSpec::FullSlab {
            thickness: Law::power(0.1, 1.0),
        };
        let free = cell_table(&iface, &CellSource::Sieve(slab), &spec, &bulk, &opts).unwrap();
        assert!(free.entries.iter().all(|e| e.m.unwrap().abs() < 1e-12));
        let r = reconstruct_theta(&free, &iface, &ReconstructOptions::default());
        assert_eq!(r.windows[0].label, ThetaLabel::Zero);
    }

    #[test]
    fn unresolvable_cells_are_reported_not_fatal() {
        let iface = flat();
        let spec = CellTableSpec {
            windows: vec![Window::new(0.0, 1.0)],
            rhos: vec![0.25],
            js: vec![2, 6],
            h: 1.0 / 16.0,
            tail: 1,
        };
        let sieve = SieveSpec::CrackSieve {
            period: Law::exp(1.0, std::f64::consts::LN_2),
            gap: Law::exp(0.5, std::f64::consts::LN_2),
        };
        let t = cell_table(&iface, &CellSource::Sieve(sieve), &spec, &BulkConfig::isotropic(2.0).unwrap(), &SolverOptions::default()).unwrap();
        assert!(t.entries[0].m.is_some());
        assert!(t.entries[1].m.is_none() && t.entries[1].error.is_some());
        assert_eq!(t.failures(), 1);
    }

    #[test]
    fn empty_sieve_harness_matches_tied_measure() {
        let iface = flat();
        let d = Domain::new(0.0, 1.0, -0.5, 0.5).unwrap();
        let mesh = Arc::new(crate::mesh::triangulate(&d, &iface, 1.0 / 16.0).unwrap());
        let low = LowerOrderConfig::new(2.0, Datum::function(|p| if p[1] > 0.0 { 1.0 } else { 0.0 })).unwrap();
        let r = gamma_harness(
            &mesh,
            &iface,
            &SieveSpec::Empty,
            &InterfaceMeasure::uniform(Weight::Infinite),
            &BulkConfig::isotropic(2.0).unwrap(),
            &low,
            &[1, 2],
            HarnessTolerances::default(),
            &SolverOptions::default(),
        )
        .unwrap();
        for row in &r.rows {
            assert_eq!(row.lq_distance, Some(0.0));
            assert_eq!(row.energy_gap, Some(0.0));
        }
    }

    #[test]
    fn stationary_ladder_is_constant() {
        let iface = flat();
        let d = Domain::new(0.0, 1.0, -0.5, 0.5).unwrap();
        let mesh = Arc::new(crate::mesh::triangulate(&d, &iface, 1.0 / 16.0).unwrap());
        let low = LowerOrderConfig::new(2.0, Datum::function(|p| p[1].max(0.0))).unwrap();
        let m = InterfaceMeasure::uniform(Weight::Finite(2.0));
        let r = monotone_limit_check(
            &mesh,
            &[m.clone(), m.clone(), m.clone()],
            &m,
            &BulkConfig::isotropic(2.0).unwrap(),
            &low,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(r.values.windows(2).all(|w| w[0] == w[1]));
        assert!(r.final_gap < 1e-15);
    }
}
