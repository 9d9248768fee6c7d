//! Experiment files: raw TOML schema, defaults and translation into solver
//! inputs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sievelab_core::energy::{BulkConfig, Datum, InterfaceMeasure, LowerOrderConfig, MeasurePiece, Weight};
use sievelab_core::geometry::{
    build_interface, strip, Domain, Interface, InterfaceOptions, Law, Profile, Segment, SieveSpec,
};
use sievelab_core::homogenize::{HarnessTolerances, TailValue, Window};
use sievelab_core::solve::{Region, SolverOptions};

use crate::expr::{self, Expr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Perforated,
    Transmission,
    Cell,
    Reconstruct,
    Gamma,
    Capacity,
    Monotone,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Perforated => "perforated",
            Mode::Transmission => "transmission",
            Mode::Cell => "cell",
            Mode::Reconstruct => "reconstruct",
            Mode::Gamma => "gamma",
            Mode::Capacity => "capacity",
            Mode::Monotone => "monotone",
        }
    }
}

/// A number or an expression such as `"1/64"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Real {
    Number(f64),
    Expr(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ladder {
    One(Real),
    Many(Vec<Real>),
}

/// `0`, a positive number, or `"inf"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawFormSpec {
    #[default]
    Power,
    Exp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawSpec {
    pub c: f64,
    pub a: Option<f64>,
    pub form: Option<LawFormSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SieveKind {
    Empty,
    Slab,
    Crack,
    Perforated,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailSpec {
    Last,
    Mean,
    Max,
    Min,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunSection {
    pub mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub seed: Option<u64>,
    pub fields: Option<bool>,
    pub plots: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSection {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterfaceSection {
    pub start: [f64; 2],
    pub end: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    pub test_mode: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cylinder_radius: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SieveSection {
    pub kind: SieveKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thickness: Option<LawSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<LawSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<LawSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hole: Option<LawSpec>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BulkSection {
    pub p: Option<f64>,
    #[serde(rename = "A")]
    pub a: Option<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowerSection {
    pub q: Option<f64>,
    pub h: Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceSpec {
    pub start: f64,
    pub end: f64,
    pub weight: WeightSpec,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MeasureSection {
    pub default: Option<WeightSpec>,
    pub pieces: Option<Vec<PieceSpec>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolverSection {
    pub linear_tol: Option<f64>,
    pub max_linear_iter: Option<usize>,
    pub max_descent_iter: Option<usize>,
    pub armijo: Option<f64>,
    pub backtrack: Option<f64>,
    pub energy_rtol: Option<f64>,
    pub grad_tol: Option<f64>,
    pub metric_eps: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MeshSection {
    pub h: Option<Ladder>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CellSection {
    pub windows: Option<Vec<[f64; 2]>>,
    pub tail: Option<usize>,
    pub equality_tol: Option<f64>,
    pub tail_value: Option<TailSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum RegionSpec {
    Empty,
    Disk { center: [f64; 2], radius: f64 },
    Rectangle { x: [f64; 2], y: [f64; 2] },
    Polygon { points: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacitySection {
    pub outer: RegionSpec,
    pub inner: RegionSpec,
    pub sectors: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotoneSection {
    pub arc: [f64; 2],
    pub thetas: Vec<f64>,
    pub limit: Option<WeightSpec>,
    pub background: Option<WeightSpec>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HarnessSection {
    pub distance_tol: Option<f64>,
    pub gap_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RawConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interface: Option<InterfaceSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sieve: Option<SieveSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bulk: Option<BulkSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<LowerSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell: Option<CellSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity: Option<CapacitySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monotone: Option<MonotoneSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub harness: Option<HarnessSection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub Vec<String>);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0.join("\n"))
    }
}

impl std::error::Error for ConfigError {}

fn fail<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(vec![msg.into()]))
}

/// Parses TOML text, rejecting keys outside the schema.
pub fn parse(text: &str) -> Result<RawConfig, ConfigError> {
    let mut unknown = Vec::new();
    let de = toml::Deserializer::new(text);
    let raw: RawConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string().replace(".?", "")))
        .map_err(|e| ConfigError(vec![e.to_string().trim_end().to_string()]))?;
    if !unknown.is_empty() {
        return Err(ConfigError(
            unknown.into_iter().map(|k| format!("unknown key `{k}`")).collect(),
        ));
    }
    Ok(raw)
}

pub struct CellSettings {
    pub windows: Vec<Window>,
    pub tail: usize,
    pub equality_tol: f64,
    pub tail_value: TailValue,
}

pub struct MonotoneSettings {
    pub arc: [f64; 2],
    pub thetas: Vec<f64>,
    pub limit: Weight,
    pub background: Weight,
}

pub struct CapacitySettings {
    pub outer: Region,
    pub inner: Region,
    pub sectors: usize,
}

/// Validated experiment with every default filled in.
pub struct Experiment {
    pub mode: Mode,
    pub domain: Option<Domain>,
    pub interface: Option<Interface>,
    pub sieve: Option<SieveSpec>,
    pub bulk: BulkConfig,
    pub lower: Option<LowerOrderConfig>,
    pub measure: Option<InterfaceMeasure>,
    pub solver: SolverOptions,
    /// Decreasing mesh sizes.
    pub h: Vec<f64>,
    pub js: Vec<usize>,
    pub rhos: Vec<f64>,
    pub cell: CellSettings,
    pub capacity: Option<CapacitySettings>,
    pub monotone: Option<MonotoneSettings>,
    pub harness: HarnessTolerances,
    pub out: Option<String>,
    pub fields: bool,
    pub plots: bool,
    /// The configuration with defaults filled in.
    pub resolved: RawConfig,
    /// Keys that were filled from defaults, with their values.
    pub defaults: Vec<(String, String)>,
}

impl Experiment {
    pub fn finest_h(&self) -> f64 {
        *self.h.last().unwrap()
    }
}

struct Filler {
    defaults: Vec<(String, String)>,
}

impl Filler {
    fn fill<T: Clone + std::fmt::Debug>(&mut self, slot: &mut Option<T>, key: &str, value: T) -> T {
        if slot.is_none() {
            self.defaults.push((key.to_string(), format!("{value:?}")));
            *slot = Some(value);
        }
        slot.clone().unwrap()
    }
}

fn law(spec: &mut LawSpec, key: &str, f: &mut Filler) -> Result<Law, ConfigError> {
    let a = f.fill(&mut spec.a, &format!("{key}.a"), 0.0);
    let form = f.fill(&mut spec.form, &format!("{key}.form"), LawFormSpec::Power);
    if !(spec.c.is_finite() && spec.c > 0.0) {
        return fail(format!("{key}.c must be positive, got {}", spec.c));
    }
    if !(a.is_finite() && a >= 0.0) {
        return fail(format!("{key}.a must be nonnegative, got {a}"));
    }
    Ok(match form {
        LawFormSpec::Power => Law::power(spec.c, a),
        LawFormSpec::Exp => Law::exp(spec.c, a),
    })
}

fn weight(spec: &WeightSpec, key: &str) -> Result<Weight, ConfigError> {
    match spec {
        WeightSpec::Number(v) => Weight::from_value(*v).map_err(|_| {
            ConfigError(vec![format!("{key} must be 0, positive or \"inf\", got {v}")])
        }),
        WeightSpec::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "tied" => Ok(Weight::Infinite),
            "free" => Ok(Weight::Zero),
            other => match other.parse::<f64>() {
                Ok(v) => weight(&WeightSpec::Number(v), key),
                Err(_) => fail(format!("{key} must be 0, positive or \"inf\", got \"{t}\"")),
            },
        },
    }
}

fn real(r: &Real, key: &str) -> Result<f64, ConfigError> {
    match r {
        Real::Number(v) => Ok(*v),
        Real::Expr(s) => expr::constant(s).map_err(|e| ConfigError(vec![format!("{key}: {e}")])),
    }
}

fn geometry_err(key: &str, e: sievelab_core::Error) -> ConfigError {
    ConfigError(vec![format!("{key}: {e}")])
}

fn require<'a, T>(slot: &'a mut Option<T>, key: &str, mode: Mode, missing: &mut Vec<String>) -> Option<&'a mut T> {
    if slot.is_none() {
        missing.push(format!("missing key `{key}` required by mode {}", mode.name()));
    }
    slot.as_mut()
}

fn strictly<T: PartialOrd>(v: &[T], increasing: bool) -> bool {
    v.windows(2).all(|w| if increasing { w[0] < w[1] } else { w[0] > w[1] })
}

/// Validates `raw` and translates it into an [`Experiment`].
pub fn resolve(mut raw: RawConfig) -> Result<Experiment, ConfigError> {
    let mut f = Filler { defaults: Vec::new() };
    let Some(mode) = raw.run.mode else {
        return fail("missing key `run.mode`");
    };
    let needs_domain = matches!(mode, Mode::Perforated | Mode::Transmission | Mode::Gamma | Mode::Monotone);
    let needs_interface = mode != Mode::Capacity;
    let needs_lower = needs_domain;
    let needs_j = matches!(mode, Mode::Perforated | Mode::Gamma)
        || (matches!(mode, Mode::Cell | Mode::Reconstruct) && raw.sieve.is_some());
    let reconstructs = mode == Mode::Reconstruct || (mode == Mode::Gamma && raw.measure.is_none());
    let needs_rho = matches!(mode, Mode::Cell | Mode::Reconstruct) || reconstructs;
    let needs_sieve = matches!(mode, Mode::Perforated | Mode::Gamma)
        || (matches!(mode, Mode::Cell | Mode::Reconstruct) && raw.measure.is_none());

    let mut missing = Vec::new();
    if needs_domain {
        require(&mut raw.domain, "domain", mode, &mut missing);
    }
    if needs_interface {
        require(&mut raw.interface, "interface", mode, &mut missing);
    }
    if needs_lower {
        require(&mut raw.lower, "lower", mode, &mut missing);
    }
    if needs_sieve {
        require(&mut raw.sieve, "sieve", mode, &mut missing);
    }
    if mode == Mode::Transmission {
        require(&mut raw.measure, "measure", mode, &mut missing);
    }
    if mode == Mode::Capacity {
        require(&mut raw.capacity, "capacity", mode, &mut missing);
    }
    if mode == Mode::Monotone {
        require(&mut raw.monotone, "monotone", mode, &mut missing);
    }
    if needs_j {
        require(&mut raw.run.j, "run.j", mode, &mut missing);
    }
    if needs_rho {
        require(&mut raw.run.rho, "run.rho", mode, &mut missing);
    }
    if raw.mesh.as_ref().and_then(|m| m.h.as_ref()).is_none() {
        missing.push(format!("missing key `mesh.h` required by mode {}", mode.name()));
    }
    if !missing.is_empty() {
        return Err(ConfigError(missing));
    }

    let seed = f.fill(&mut raw.run.seed, "run.seed", 0);
    let fields = f.fill(&mut raw.run.fields, "run.fields", true);
    let plots = f.fill(&mut raw.run.plots, "run.plots", true);

    let h: Vec<f64> = match raw.mesh.as_ref().and_then(|m| m.h.as_ref()).unwrap() {
        Ladder::One(r) => vec![real(r, "mesh.h")?],
        Ladder::Many(v) => v
            .iter()
            .enumerate()
            .map(|(k, r)| real(r, &format!("mesh.h[{k}]")))
            .collect::<Result<_, _>>()?,
    };
    if h.is_empty() {
        return fail("mesh.h must not be empty");
    }
    if let Some(bad) = h.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return fail(format!("mesh.h must be positive, got {bad}"));
    }
    if !strictly(&h, false) {
        return fail("mesh.h ladder must be strictly decreasing");
    }

    let js = match &raw.run.j {
        Some(j) => {
            if j.is_empty() {
                return fail("run.j must not be empty");
            }
            if j.contains(&0) {
                return fail("run.j entries must be at least 1");
            }
            if !strictly(j, true) {
                return fail("run.j must be strictly increasing");
            }
            j.clone()
        }
        None => vec![1],
    };

    let domain = match &raw.domain {
        Some(d) => Some(Domain::new(d.x[0], d.x[1], d.y[0], d.y[1]).map_err(|e| geometry_err("domain", e))?),
        None => None,
    };

    let interface = match raw.interface.as_mut() {
        Some(s) => {
            let test_mode = f.fill(&mut s.test_mode, "interface.test_mode", false);
            let segment = Segment::new(s.start, s.end);
            let length = ((s.end[0] - s.start[0]).powi(2) + (s.end[1] - s.start[1]).powi(2)).sqrt();
            let profile = match &s.profile {
                None => Profile::Flat,
                Some(text) => {
                    let n = f.fill(&mut s.samples, "interface.samples", 65);
                    if n < 3 {
                        return fail(format!("interface.samples must be at least 3, got {n}"));
                    }
                    let e = Expr::parse(text, &["s"]).map_err(|e| ConfigError(vec![format!("interface.profile: {e}")]))?;
                    Profile::from_fn(length, n, |t| e.eval(&[t]))
                }
            };
            let iface = build_interface(
                segment,
                profile,
                InterfaceOptions {
                    cylinder_radius: s.cylinder_radius,
                    test_mode,
                },
            )
            .map_err(|e| geometry_err("interface", e))?;
            if let Some(d) = &domain {
                iface.check_within(d).map_err(|e| geometry_err("interface", e))?;
            }
            Some(iface)
        }
        None => None,
    };

    let rhos = match &raw.run.rho {
        Some(r) => {
            if r.is_empty() {
                return fail("run.rho must not be empty");
            }
            if !strictly(r, false) {
                return fail("run.rho ladder must be strictly decreasing");
            }
            if let Some(iface) = &interface {
                for &rho in r {
                    strip(iface, rho).map_err(|e| geometry_err("run.rho", e))?;
                }
            }
            r.clone()
        }
        None => Vec::new(),
    };

    let sieve = match raw.sieve.as_mut() {
        Some(s) => {
            let kind = s.kind;
            let take = |slot: &mut Option<LawSpec>, name: &str, f: &mut Filler| -> Result<Law, ConfigError> {
                match slot.as_mut() {
                    Some(l) => law(l, &format!("sieve.{name}"), f),
                    None => fail(format!("missing key `sieve.{name}` required by sieve kind")),
                }
            };
            let spec = match kind {
                SieveKind::Empty => SieveSpec::Empty,
                SieveKind::Slab => SieveSpec::FullSlab {
                    thickness: take(&mut s.thickness, "thickness", &mut f)?,
                },
                SieveKind::Crack => SieveSpec::CrackSieve {
                    period: take(&mut s.period, "period", &mut f)?,
                    gap: take(&mut s.gap, "gap", &mut f)?,
                },
                SieveKind::Perforated => SieveSpec::PerforatedSlab {
                    thickness: take(&mut s.thickness, "thickness", &mut f)?,
                    period: take(&mut s.period, "period", &mut f)?,
                    hole: take(&mut s.hole, "hole", &mut f)?,
                },
            };
            Some(spec)
        }
        None => None,
    };

    let bulk_section = raw.bulk.get_or_insert_with(BulkSection::default);
    let p = f.fill(&mut bulk_section.p, "bulk.p", 2.0);
    let a = f.fill(&mut bulk_section.a, "bulk.A", [[1.0, 0.0], [0.0, 1.0]]);
    let bulk = BulkConfig::new(p, a).map_err(|e| geometry_err("bulk", e))?;

    let lower = match raw.lower.as_mut() {
        Some(l) => {
            let q = f.fill(&mut l.q, "lower.q", 2.0);
            let datum = match &l.h {
                Real::Number(v) => Datum::Constant(*v),
                Real::Expr(text) => {
                    let e = Expr::parse(text, &["x", "y"]).map_err(|e| ConfigError(vec![format!("lower.h: {e}")]))?;
                    let e = Arc::new(e);
                    Datum::function(move |p| e.eval(&p))
                }
            };
            Some(LowerOrderConfig::new(q, datum).map_err(|e| geometry_err("lower", e))?)
        }
        None => None,
    };

    let measure = match raw.measure.as_mut() {
        Some(m) => {
            let default = f.fill(&mut m.default, "measure.default", WeightSpec::Number(0.0));
            let default = weight(&default, "measure.default")?;
            let pieces = f.fill(&mut m.pieces, "measure.pieces", Vec::new());
            let pieces = pieces
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    Ok(MeasurePiece {
                        start: p.start,
                        end: p.end,
                        weight: weight(&p.weight, &format!("measure.pieces[{k}].weight"))?,
                    })
                })
                .collect::<Result<Vec<_>, ConfigError>>()?;
            let measure = InterfaceMeasure::new(pieces, default).map_err(|e| geometry_err("measure", e))?;
            if let Some(iface) = &interface {
                measure.validate(iface.length()).map_err(|e| geometry_err("measure", e))?;
            }
            Some(measure)
        }
        None => None,
    };

    let s = raw.solver.get_or_insert_with(SolverSection::default);
    let d = SolverOptions::default();
    let solver = SolverOptions {
        linear_tol: f.fill(&mut s.linear_tol, "solver.linear_tol", d.linear_tol),
        max_linear_iter: f.fill(&mut s.max_linear_iter, "solver.max_linear_iter", d.max_linear_iter),
        max_descent_iter: f.fill(&mut s.max_descent_iter, "solver.max_descent_iter", d.max_descent_iter),
        armijo: f.fill(&mut s.armijo, "solver.armijo", d.armijo),
        backtrack: f.fill(&mut s.backtrack, "solver.backtrack", d.backtrack),
        energy_rtol: f.fill(&mut s.energy_rtol, "solver.energy_rtol", d.energy_rtol),
        grad_tol: f.fill(&mut s.grad_tol, "solver.grad_tol", d.grad_tol),
        metric_eps: f.fill(&mut s.metric_eps, "solver.metric_eps", d.metric_eps),
        seed,
    };
    solver.validate().map_err(|e| ConfigError(vec![e.to_string()]))?;

    let cell = if matches!(mode, Mode::Cell | Mode::Reconstruct) || reconstructs {
        let iface = interface.as_ref().unwrap();
        let c = raw.cell.get_or_insert_with(CellSection::default);
        let base = iface.base_length();
        let windows = f.fill(&mut c.windows, "cell.windows", vec![[0.0, base]]);
        if windows.is_empty() {
            return fail("cell.windows must not be empty");
        }
        for (k, w) in windows.iter().enumerate() {
            if !(w[0] >= 0.0 && w[1] <= base + 1e-12 && w[0] < w[1]) {
                return fail(format!("cell.windows[{k}] = [{}, {}] must satisfy 0 <= start < end <= {base}", w[0], w[1]));
            }
        }
        let tail = f.fill(&mut c.tail, "cell.tail", js.len().min(3));
        if tail == 0 || tail > js.len() {
            return fail(format!("cell.tail must lie in 1..={}, got {tail}", js.len()));
        }
        let equality_tol = f.fill(&mut c.equality_tol, "cell.equality_tol", 0.05);
        let tail_value = match f.fill(&mut c.tail_value, "cell.tail_value", TailSpec::Last) {
            TailSpec::Last => TailValue::Last,
            TailSpec::Mean => TailValue::Mean,
            TailSpec::Max => TailValue::Max,
            TailSpec::Min => TailValue::Min,
        };
        CellSettings {
            windows: windows.iter().map(|w| Window::new(w[0], w[1])).collect(),
            tail,
            equality_tol,
            tail_value,
        }
    } else {
        CellSettings {
            windows: Vec::new(),
            tail: 0,
            equality_tol: 0.0,
            tail_value: TailValue::Last,
        }
    };

    let capacity = match raw.capacity.as_mut() {
        Some(c) if mode == Mode::Capacity => {
            let sectors = f.fill(&mut c.sectors, "capacity.sectors", 128);
            Some(CapacitySettings {
                outer: region(&c.outer, "capacity.outer")?,
                inner: region(&c.inner, "capacity.inner")?,
                sectors,
            })
        }
        _ => None,
    };

    let monotone = match raw.monotone.as_mut() {
        Some(m) if mode == Mode::Monotone => {
            if m.thetas.is_empty() {
                return fail("monotone.thetas must not be empty");
            }
            if m.thetas.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || !m.thetas.windows(2).all(|w| w[0] <= w[1]) {
                return fail("monotone.thetas must be finite, nonnegative and nondecreasing");
            }
            let limit = f.fill(&mut m.limit, "monotone.limit", WeightSpec::Text("inf".into()));
            let background = f.fill(&mut m.background, "monotone.background", WeightSpec::Number(1.0));
            Some(MonotoneSettings {
                arc: m.arc,
                thetas: m.thetas.clone(),
                limit: weight(&limit, "monotone.limit")?,
                background: weight(&background, "monotone.background")?,
            })
        }
        _ => None,
    };

    let harness = if mode == Mode::Gamma {
        let hs = raw.harness.get_or_insert_with(HarnessSection::default);
        let d = HarnessTolerances::default();
        HarnessTolerances {
            distance: f.fill(&mut hs.distance_tol, "harness.distance_tol", d.distance),
            energy_gap: f.fill(&mut hs.gap_tol, "harness.gap_tol", d.energy_gap),
        }
    } else {
        HarnessTolerances::default()
    };

    Ok(Experiment {
        mode,
        domain,
        interface,
        sieve,
        bulk,
        lower,
        measure,
        solver,
        h,
        js,
        rhos,
        cell,
        capacity,
        monotone,
        harness,
        out: raw.run.out.clone(),
        fields,
        plots,
        resolved: raw,
        defaults: f.defaults,
    })
}

fn region(spec: &RegionSpec, key: &str) -> Result<Region, ConfigError> {
    Ok(match spec {
        RegionSpec::Empty => Region::Empty,
        RegionSpec::Disk { center, radius } => {
            if !(*radius > 0.0) {
                return fail(format!("{key}.radius must be positive, got {radius}"));
            }
            Region::Disk {
                center: *center,
                radius: *radius,
            }
        }
        RegionSpec::Rectangle { x, y } => {
            Region::Rectangle(Domain::new(x[0], x[1], y[0], y[1]).map_err(|e| geometry_err(key, e))?)
        }
        RegionSpec::Polygon { points } => {
            if points.len() < 3 {
                return fail(format!("{key}.points needs at least 3 vertices"));
            }
            Region::Polygon(points.clone())
        }
    })
}
