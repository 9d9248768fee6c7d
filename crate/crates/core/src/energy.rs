//! Bulk, jump and lower-order energies of first-order fields, with exact
//! gradients and the quadratic forms used by the solvers.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mesh::{CouplingPattern, EdgeState, Field, FieldSpace, InterfaceMesh};
use crate::sparse::Triplet;

/// `f(ξ) = (ξ·Aξ)^{p/2}` with `A` symmetric positive definite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BulkConfig {
    p: f64,
    a: [[f64; 2]; 2],
    eig: [f64; 2],
}

impl BulkConfig {
    pub fn new(p: f64, a: [[f64; 2]; 2]) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::InvalidConfig(format!("bulk exponent p = {p} must exceed 1")));
        }
        let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if a.iter().flatten().any(|v| !v.is_finite()) || (a[0][1] - a[1][0]).abs() > 1e-12 * scale {
            return Err(Error::InvalidConfig("anisotropy matrix must be finite and symmetric".into()));
        }
        let tr = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        let eig = [0.5 * tr - disc, 0.5 * tr + disc];
        if !(eig[0] > 0.0) {
            return Err(Error::InvalidConfig(
                "anisotropy matrix must be positive definite".into(),
            ));
        }
        Ok(Self { p, a, eig })
    }

    pub fn isotropic(p: f64) -> Result<Self> {
        Self::new(p, [[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.a
    }

    /// Lower growth constant: smallest eigenvalue to the power `p/2`.
    pub fn lambda(&self) -> f64 {
        self.eig[0].powf(0.5 * self.p)
    }

    /// Upper growth constant: largest eigenvalue to the power `p/2`.
    pub fn big_lambda(&self) -> f64 {
        self.eig[1].powf(0.5 * self.p)
    }

    fn apply(&self, x: Point) -> Point {
        [
            self.a[0][0] * x[0] + self.a[0][1] * x[1],
            self.a[1][0] * x[0] + self.a[1][1] * x[1],
        ]
    }

    pub fn quad(&self, x: Point) -> f64 {
        let ax = self.apply(x);
        x[0] * ax[0] + x[1] * ax[1]
    }

    pub fn f(&self, x: Point) -> f64 {
        self.quad(x).max(0.0).powf(0.5 * self.p)
    }

    pub fn df(&self, x: Point) -> Point {
        let q = self.quad(x);
        if q <= 0.0 {
            return [0.0, 0.0];
        }
        let c = self.p * q.powf(0.5 * self.p - 1.0);
        let ax = self.apply(x);
        [c * ax[0], c * ax[1]]
    }
}

/// The datum `h` of the lower-order term.
#[derive(Clone)]
pub enum Datum {
    Constant(f64),
    Function(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
    /// One value per mesh node, interpolated linearly.
    Nodal(Arc<Vec<f64>>),
}

impl fmt::Debug for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Datum::Constant(c) => write!(f, "Constant({c})"),
            Datum::Function(_) => write!(f, "Function(..)"),
            Datum::Nodal(v) => write!(f, "Nodal({} values)", v.len()),
        }
    }
}

impl Datum {
    pub fn function(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Datum::Function(Arc::new(f))
    }

    fn at(&self, mesh: &InterfaceMesh, tri: [usize; 3], bary: [f64; 3]) -> f64 {
        match self {
            Datum::Constant(c) => *c,
            Datum::Function(f) => {
                let n = mesh.nodes();
                let mut p = [0.0; 2];
                for k in 0..3 {
                    p[0] += bary[k] * n[tri[k]][0];
                    p[1] += bary[k] * n[tri[k]][1];
                }
                f(p)
            }
            Datum::Nodal(v) => (0..3).map(|k| bary[k] * v[tri[k]]).sum(),
        }
    }
}

/// `g(x, s) = |s - h(x)|^q`.
#[derive(Debug, Clone)]
pub struct LowerOrderConfig {
    q: f64,
    datum: Datum,
}

impl LowerOrderConfig {
    pub fn new(q: f64, datum: Datum) -> Result<Self> {
        if !(q.is_finite() && q >= 1.0) {
            return Err(Error::InvalidConfig(format!("lower-order exponent q = {q} must be at least 1")));
        }
        if let Datum::Constant(c) = datum {
            if !c.is_finite() {
                return Err(Error::InvalidConfig("datum must be finite".into()));
            }
        }
        Ok(Self { q, datum })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn datum(&self) -> &Datum {
        &self.datum
    }

    pub fn g(&self, s: f64, h: f64) -> f64 {
        (s - h).abs().powf(self.q)
    }
}

/// Density of an interface measure on one arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Zero,
    Finite(f64),
    Infinite,
}

impl Weight {
    pub fn from_value(v: f64) -> Result<Self> {
        if v == 0.0 {
            Ok(Weight::Zero)
        } else if v == f64::INFINITY {
            Ok(Weight::Infinite)
        } else if v.is_finite() && v > 0.0 {
            Ok(Weight::Finite(v))
        } else {
            Err(Error::InvalidMeasure(format!("weight {v} is not in [0, inf]")))
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Weight::Zero => 0.0,
            Weight::Finite(t) => t,
            Weight::Infinite => f64::INFINITY,
        }
    }

    /// Coupling state realizing this weight.
    pub fn state(&self) -> EdgeState {
        match *self {
            Weight::Zero => EdgeState::Free,
            Weight::Finite(t) => EdgeState::Penalized(t),
            Weight::Infinite => EdgeState::Tied,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurePiece {
    pub start: f64,
    pub end: f64,
    pub weight: Weight,
}

/// Piecewise-constant arc-length density on the interface.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceMeasure {
    pieces: Vec<MeasurePiece>,
    default: Weight,
}

impl InterfaceMeasure {
    pub fn uniform(weight: Weight) -> Self {
        Self {
            pieces: Vec::new(),
            default: weight,
        }
    }

    pub fn new(mut pieces: Vec<MeasurePiece>, default: Weight) -> Result<Self> {
        for w in pieces.iter().map(|p| p.weight).chain([default]) {
            if let Weight::Finite(t) = w {
                if !(t.is_finite() && t > 0.0) {
                    return Err(Error::InvalidMeasure(format!("finite weight {t} must be positive")));
                }
            }
        }
        for p in &pieces {
            if !(p.start.is_finite() && p.end.is_finite() && p.start < p.end) {
                return Err(Error::InvalidMeasure(format!(
                    "interval [{}, {}] is empty or not finite",
                    p.start, p.end
                )));
            }
        }
        pieces.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
        for w in pieces.windows(2) {
            if w[1].start < w[0].end {
                return Err(Error::InvalidMeasure(format!(
                    "intervals [{}, {}] and [{}, {}] overlap",
                    w[0].start, w[0].end, w[1].start, w[1].end
                )));
            }
        }
        Ok(Self { pieces, default })
    }

    pub fn pieces(&self) -> &[MeasurePiece] {
        &self.pieces
    }

    pub fn default_weight(&self) -> Weight {
        self.default
    }

    /// Checks that every interval lies within `[0, length]`.
    pub fn validate(&self, length: f64) -> Result<()> {
        let tol = 1e-9 * length.max(1.0);
        for p in &self.pieces {
            if p.start < -tol || p.end > length + tol {
                return Err(Error::InvalidMeasure(format!(
                    "interval [{}, {}] leaves [0, {length}]",
                    p.start, p.end
                )));
            }
        }
        Ok(())
    }

    pub fn weight_at(&self, arc: f64) -> Weight {
        self.pieces
            .iter()
            .find(|p| p.start <= arc && arc <= p.end)
            .map_or(self.default, |p| p.weight)
    }

    /// Weight sampled at the midpoint of every interface edge.
    pub fn edge_weights(&self, mesh: &InterfaceMesh) -> Vec<Weight> {
        mesh.edges().iter().map(|e| self.weight_at(e.arc_mid())).collect()
    }

    /// Infinite weights tie, zero weights free, finite weights penalize.
    pub fn pattern(&self, mesh: &InterfaceMesh) -> CouplingPattern {
        let states = self.edge_weights(mesh).iter().map(Weight::state).collect();
        CouplingPattern::from_states(mesh, states).expect("weights validated on construction")
    }

    /// True when `self <= other` on every edge of `mesh`.
    pub fn le_on(&self, other: &Self, mesh: &InterfaceMesh) -> bool {
        self.edge_weights(mesh)
            .iter()
            .zip(other.edge_weights(mesh))
            .all(|(a, b)| a.value() <= b.value())
    }
}

const GAUSS: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];
const INTERIOR: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

#[derive(Debug, Clone)]
struct Tri {
    dofs: [usize; 3],
    area: f64,
    grads: [Point; 3],
}

#[derive(Debug, Clone)]
struct JumpTerm {
    plus: [usize; 2],
    minus: [usize; 2],
    length: f64,
    weight: f64,
}

impl JumpTerm {
    fn at(&self, u: &[f64], g: usize) -> f64 {
        let s = GAUSS[g];
        (1.0 - s) * (u[self.plus[0]] - u[self.minus[0]]) + s * (u[self.plus[1]] - u[self.minus[1]])
    }

    fn entries(&self, g: usize) -> [(usize, f64); 4] {
        let s = GAUSS[g];
        [
            (self.plus[0], 1.0 - s),
            (self.plus[1], s),
            (self.minus[0], s - 1.0),
            (self.minus[1], -s),
        ]
    }
}

fn triangles(space: &FieldSpace) -> Vec<Tri> {
    let mesh = space.mesh();
    space
        .active_triangles()
        .iter()
        .map(|&t| {
            let tri = mesh.triangles()[t];
            let [a, b, c] = tri.map(|n| mesh.nodes()[n]);
            let area = mesh.triangle_area(t);
            let inv = 0.5 / area;
            let grads = [
                [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv],
                [(c[1] - a[1]) * inv, (a[0] - c[0]) * inv],
                [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
            ];
            Tri {
                dofs: tri.map(|n| space.node_dof(n).expect("active node")),
                area,
                grads,
            }
        })
        .collect()
}

fn jump_terms(space: &FieldSpace, weights: &[f64]) -> Vec<JumpTerm> {
    space
        .mesh()
        .edges()
        .iter()
        .zip(weights)
        .filter_map(|(e, &w)| {
            if w == 0.0 {
                return None;
            }
            let plus = [space.node_dof(e.plus[0])?, space.node_dof(e.plus[1])?];
            let minus = [space.node_dof(e.minus[0])?, space.node_dof(e.minus[1])?];
            (plus != minus).then_some(JumpTerm {
                plus,
                minus,
                length: e.length,
                weight: w,
            })
        })
        .collect()
}

fn gradient_of(tri: &Tri, u: &[f64]) -> Point {
    let mut g = [0.0; 2];
    for k in 0..3 {
        g[0] += u[tri.dofs[k]] * tri.grads[k][0];
        g[1] += u[tri.dofs[k]] * tri.grads[k][1];
    }
    g
}

fn interp(tri: &Tri, u: &[f64], bary: &[f64; 3]) -> f64 {
    (0..3).map(|k| bary[k] * u[tri.dofs[k]]).sum()
}

/// `d/dx |x|^p`, taken as zero at the origin.
fn dpow(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        p * x.abs().powf(p - 1.0) * x.signum()
    }
}

#[derive(Debug, Clone)]
struct LowerTerm {
    q: f64,
    h: Vec<[f64; 3]>,
}

/// Discrete energy on one field space, ready for evaluation and assembly.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    n: usize,
    bulk: BulkConfig,
    tris: Vec<Tri>,
    jumps: Vec<JumpTerm>,
    lower: Option<LowerTerm>,
}

/// `E(u) = u^T H u - 2 b^T u + c`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub matrix: Vec<Triplet>,
    pub rhs: Vec<f64>,
    pub constant: f64,
}

impl EnergyModel {
    /// `weights` holds one finite jump weight per mesh edge.
    pub fn new(
        space: &Arc<FieldSpace>,
        bulk: &BulkConfig,
        weights: &[f64],
        lower: Option<&LowerOrderConfig>,
    ) -> Self {
        let mesh = space.mesh();
        let tris = triangles(space);
        let lower = lower.map(|cfg| LowerTerm {
            q: cfg.q,
            h: space
                .active_triangles()
                .iter()
                .map(|&t| INTERIOR.map(|b| cfg.datum.at(mesh, mesh.triangles()[t], b)))
                .collect(),
        });
        Self {
            n: space.dof_count(),
            bulk: *bulk,
            tris,
            jumps: jump_terms(space, weights),
            lower,
        }
    }

    /// Jump weights taken from the penalized edges of the space's pattern.
    pub fn from_pattern(
        space: &Arc<FieldSpace>,
        bulk: &BulkConfig,
        lower: Option<&LowerOrderConfig>,
    ) -> Self {
        let weights = pattern_weights(space.pattern());
        Self::new(space, bulk, &weights, lower)
    }

    pub fn dof_count(&self) -> usize {
        self.n
    }

    pub fn is_quadratic(&self) -> bool {
        self.bulk.p == 2.0 && self.lower.as_ref().is_none_or(|l| l.q == 2.0)
    }

    pub fn bulk_value(&self, u: &[f64]) -> f64 {
        self.tris
            .iter()
            .map(|t| t.area * self.bulk.f(gradient_of(t, u)))
            .sum()
    }

    pub fn jump_value(&self, u: &[f64]) -> f64 {
        let p = self.bulk.p;
        self.jumps
            .iter()
            .map(|e| {
                let s: f64 = (0..2).map(|g| e.at(u, g).abs().powf(p)).sum();
                e.weight * 0.5 * e.length * s
            })
            .sum()
    }

    pub fn lower_value(&self, u: &[f64]) -> f64 {
        let Some(l) = &self.lower else { return 0.0 };
        self.tris
            .iter()
            .zip(&l.h)
            .map(|(t, h)| {
                let s: f64 = (0..3)
                    .map(|k| (interp(t, u, &INTERIOR[k]) - h[k]).abs().powf(l.q))
                    .sum();
                t.area / 3.0 * s
            })
            .sum()
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        self.bulk_value(u) + self.jump_value(u) + self.lower_value(u)
    }

    pub fn value_and_gradient(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let p = self.bulk.p;
        let mut grad = vec![0.0; self.n];
        let mut value = 0.0;
        for t in &self.tris {
            let xi = gradient_of(t, u);
            value += t.area * self.bulk.f(xi);
            let d = self.bulk.df(xi);
            for k in 0..3 {
                grad[t.dofs[k]] += t.area * (d[0] * t.grads[k][0] + d[1] * t.grads[k][1]);
            }
        }
        for e in &self.jumps {
            let w = e.weight * 0.5 * e.length;
            for g in 0..2 {
                let d = e.at(u, g);
                value += w * d.abs().powf(p);
                let c = w * dpow(d, p);
                for (dof, coef) in e.entries(g) {
                    grad[dof] += c * coef;
                }
            }
        }
        if let Some(l) = &self.lower {
            for (t, h) in self.tris.iter().zip(&l.h) {
                let w = t.area / 3.0;
                for k in 0..3 {
                    let r = interp(t, u, &INTERIOR[k]) - h[k];
                    value += w * r.abs().powf(l.q);
                    let c = w * dpow(r, l.q);
                    for m in 0..3 {
                        grad[t.dofs[m]] += c * INTERIOR[k][m];
                    }
                }
            }
        }
        (value, grad)
    }

    /// Symmetric positive semidefinite matrix bounding half the Hessian of
    /// the energy at `u` from above (up to the regularization `eps`, taken
    /// relative to the mean squared gradient, jump and residual).
    pub fn metric(&self, u: &[f64], eps: f64) -> Vec<Triplet> {
        let p = self.bulk.p;
        let factor = |e: f64| 0.5 * e * (e - 1.0).max(1.0);
        let mut out = Vec::with_capacity(9 * self.tris.len() + 16 * self.jumps.len());

        let xis: Vec<Point> = self.tris.iter().map(|t| gradient_of(t, u)).collect();
        let (mut num, mut den) = (0.0, 0.0);
        for (t, xi) in self.tris.iter().zip(&xis) {
            num += t.area * self.bulk.quad(*xi);
            den += t.area;
        }
        let eb = eps * num / den.max(f64::MIN_POSITIVE) + 1e-300;
        for (t, xi) in self.tris.iter().zip(&xis) {
            let c = if p == 2.0 {
                1.0
            } else {
                factor(p) * (self.bulk.quad(*xi) + eb).powf(0.5 * p - 1.0)
            };
            for i in 0..3 {
                let ag = self.bulk.apply(t.grads[i]);
                for j in 0..3 {
                    let v = t.area * c * (ag[0] * t.grads[j][0] + ag[1] * t.grads[j][1]);
                    out.push((t.dofs[i], t.dofs[j], v));
                }
            }
        }

        let ds: Vec<[f64; 2]> = self.jumps.iter().map(|e| [e.at(u, 0), e.at(u, 1)]).collect();
        let mean_d2 = ds.iter().flatten().map(|d| d * d).sum::<f64>() / (2 * ds.len()).max(1) as f64;
        let ej = eps * mean_d2 + 1e-300;
        for (e, d) in self.jumps.iter().zip(&ds) {
            for g in 0..2 {
                let c = if p == 2.0 {
                    1.0
                } else {
                    factor(p) * (d[g] * d[g] + ej).powf(0.5 * p - 1.0)
                };
                let w = e.weight * 0.5 * e.length * c;
                let ent = e.entries(g);
                for &(a, ca) in &ent {
                    for &(b, cb) in &ent {
                        out.push((a, b, w * ca * cb));
                    }
                }
            }
        }

        if let Some(l) = &self.lower {
            let rs: Vec<[f64; 3]> = self
                .tris
                .iter()
                .zip(&l.h)
                .map(|(t, h)| [0, 1, 2].map(|k| interp(t, u, &INTERIOR[k]) - h[k]))
                .collect();
            let mean_r2 = rs.iter().flatten().map(|r| r * r).sum::<f64>() / (3 * rs.len()).max(1) as f64;
            let el = eps * mean_r2 + 1e-300;
            for (t, r) in self.tris.iter().zip(&rs) {
                for k in 0..3 {
                    let c = if l.q == 2.0 {
                        1.0
                    } else {
                        factor(l.q) * (r[k] * r[k] + el).powf(0.5 * l.q - 1.0)
                    };
                    let w = t.area / 3.0 * c;
                    for i in 0..3 {
                        for j in 0..3 {
                            out.push((t.dofs[i], t.dofs[j], w * INTERIOR[k][i] * INTERIOR[k][j]));
                        }
                    }
                }
            }
        }
        out
    }

    /// Exact quadratic form of a model with `p = q = 2`.
    pub fn quadratic_form(&self) -> Option<QuadraticForm> {
        if !self.is_quadratic() {
            return None;
        }
        let matrix = self.metric(&vec![0.0; self.n], 0.0);
        let mut rhs = vec![0.0; self.n];
        let mut constant = 0.0;
        if let Some(l) = &self.lower {
            for (t, h) in self.tris.iter().zip(&l.h) {
                let w = t.area / 3.0;
                for k in 0..3 {
                    constant += w * h[k] * h[k];
                    for m in 0..3 {
                        rhs[t.dofs[m]] += w * h[k] * INTERIOR[k][m];
                    }
                }
            }
        }
        Some(QuadraticForm {
            matrix,
            rhs,
            constant,
        })
    }
}

/// One finite jump weight per edge from the penalized states of a pattern.
pub fn pattern_weights(pattern: &CouplingPattern) -> Vec<f64> {
    pattern
        .states()
        .iter()
        .map(|s| match s {
            EdgeState::Penalized(t) => *t,
            _ => 0.0,
        })
        .collect()
}

/// Fails when an edge of infinite weight carries a nonzero jump.
fn check_feasible(field: &Field, weights: &[Weight]) -> Result<()> {
    let space = field.space();
    let u = field.coeffs();
    for (i, (e, w)) in space.mesh().edges().iter().zip(weights).enumerate() {
        if *w != Weight::Infinite {
            continue;
        }
        for k in 0..2 {
            if let (Some(a), Some(b)) = (space.node_dof(e.plus[k]), space.node_dof(e.minus[k])) {
                if a != b && u[a] != u[b] {
                    return Err(Error::Infeasible { edge: i });
                }
            }
        }
    }
    Ok(())
}

fn finite_weights(weights: &[Weight]) -> Vec<f64> {
    weights
        .iter()
        .map(|w| match w {
            Weight::Finite(t) => *t,
            _ => 0.0,
        })
        .collect()
}

pub fn bulk_energy(field: &Field, cfg: &BulkConfig) -> f64 {
    let u = field.coeffs();
    triangles(field.space())
        .iter()
        .map(|t| t.area * cfg.f(gradient_of(t, u)))
        .sum()
}

/// `∫ [u]^p dμ`, or [`Error::Infeasible`] when the field jumps on an arc of
/// infinite weight.
pub fn jump_energy(field: &Field, measure: &InterfaceMeasure, p: f64) -> Result<f64> {
    let space = field.space();
    let weights = measure.edge_weights(space.mesh());
    check_feasible(field, &weights)?;
    let bulk = BulkConfig::isotropic(p)?;
    let model = EnergyModel {
        n: space.dof_count(),
        bulk,
        tris: Vec::new(),
        jumps: jump_terms(space, &finite_weights(&weights)),
        lower: None,
    };
    Ok(model.jump_value(field.coeffs()))
}

pub fn lower_order_energy(field: &Field, cfg: &LowerOrderConfig) -> f64 {
    let bulk = BulkConfig::isotropic(2.0).expect("identity is admissible");
    EnergyModel::new(field.space(), &bulk, &[], Some(cfg)).lower_value(field.coeffs())
}

/// Total energy and its gradient with respect to the field coefficients.
/// Without a measure the jump weights come from the field's pattern.
pub fn total_energy_and_gradient(
    field: &Field,
    bulk: &BulkConfig,
    measure: Option<&InterfaceMeasure>,
    lower: Option<&LowerOrderConfig>,
) -> Result<(f64, Vec<f64>)> {
    let space = field.space();
    let model = match measure {
        Some(m) => {
            let w = m.edge_weights(space.mesh());
            check_feasible(field, &w)?;
            EnergyModel::new(space, bulk, &finite_weights(&w), lower)
        }
        None => EnergyModel::from_pattern(space, bulk, lower),
    };
    Ok(model.value_and_gradient(field.coeffs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::*;
    use crate::mesh::{triangulate, FieldSpace};
    use crate::sparse::CsrMatrix;
    use proptest::prelude::*;

    fn unit_square(h: f64) -> Arc<FieldSpace> {
        let d = Domain::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let m = Arc::new(InterfaceMesh::plain(&d, h).unwrap());
        FieldSpace::new(m.clone(), CouplingPattern::uniform(&m, EdgeState::Tied)).unwrap()
    }

    fn cracked(h: f64, state: EdgeState) -> Arc<FieldSpace> {
        let d = Domain::new(0.0, 1.0, -0.5, 0.5).unwrap();
        let iface = build_interface(
            Segment::new([0.0, 0.0], [1.0, 0.0]),
            Profile::Flat,
            InterfaceOptions {
                test_mode: true,
                ..Default::default()
            },
        )
        .unwrap();
        let m = Arc::new(triangulate(&d, &iface, h).unwrap());
        FieldSpace::new(m.clone(), CouplingPattern::uniform(&m, state)).unwrap()
    }

    fn plus_nodes(space: &FieldSpace) -> Vec<bool> {
        let mut v = vec![false; space.mesh().node_count()];
        for e in space.mesh().edges() {
            v[e.plus[0]] = true;
            v[e.plus[1]] = true;
        }
        v
    }

    #[test]
    fn bulk_examples() {
        let s = unit_square(0.25);
        let id2 = BulkConfig::isotropic(2.0).unwrap();
        let id3 = BulkConfig::isotropic(3.0).unwrap();
        assert!((bulk_energy(&Field::from_fn(&s, |_, p| p[0]), &id2) - 1.0).abs() < 1e-13);
        assert_eq!(bulk_energy(&Field::from_fn(&s, |_, _| 4.0), &id2), 0.0);
        assert!((bulk_energy(&Field::from_fn(&s, |_, p| 2.0 * p[0]), &id3) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn jump_examples() {
        // interface of length 0.5 with jump 1 and weight 2
        let d = Domain::new(0.0, 0.5, -0.5, 0.5).unwrap();
        let iface = build_interface(
            Segment::new([0.0, 0.0], [0.5, 0.0]),
            Profile::Flat,
            InterfaceOptions {
                test_mode: true,
                ..Default::default()
            },
        )
        .unwrap();
        let m = Arc::new(triangulate(&d, &iface, 0.125).unwrap());
        let s = FieldSpace::new(m.clone(), CouplingPattern::uniform(&m, EdgeState::Free)).unwrap();
        let plus = plus_nodes(&s);
        let u = Field::from_fn(&s, |v, p| if plus[v] || p[1] > 0.0 { 1.0 } else { 0.0 });
        let mu = InterfaceMeasure::uniform(Weight::Finite(2.0));
        assert!((jump_energy(&u, &mu, 2.0).unwrap() - 1.0).abs() < 1e-14);
        let c = Field::from_fn(&s, |_, _| 3.0);
        assert_eq!(jump_energy(&c, &mu, 2.0).unwrap(), 0.0);

        let s = cracked(0.125, EdgeState::Free);
        let plus = plus_nodes(&s);
        let u = Field::from_fn(&s, |v, p| if plus[v] || p[1] > 0.0 { p[0] } else { 0.0 });
        let one = InterfaceMeasure::uniform(Weight::Finite(1.0));
        assert!((jump_energy(&u, &one, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert!(matches!(
            jump_energy(&u, &InterfaceMeasure::uniform(Weight::Infinite), 2.0),
            Err(Error::Infeasible { .. })
        ));
        assert_eq!(jump_energy(&u, &InterfaceMeasure::uniform(Weight::Zero), 2.0).unwrap(), 0.0);
    }

    #[test]
    fn lower_order_examples() {
        let s = unit_square(0.25);
        let x = LowerOrderConfig::new(2.0, Datum::function(|p| p[0])).unwrap();
        let u = Field::from_fn(&s, |_, p| p[0]);
        assert!(lower_order_energy(&u, &x) < 1e-28);
        let zero = LowerOrderConfig::new(2.0, Datum::Constant(0.0)).unwrap();
        assert!((lower_order_energy(&Field::from_fn(&s, |_, _| 1.0), &zero) - 1.0).abs() < 1e-14);
        assert!((lower_order_energy(&Field::zeros(&s), &x) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn quadratic_form_reproduces_energy() {
        let s = cracked(0.25, EdgeState::Penalized(1.7));
        let bulk = BulkConfig::new(2.0, [[2.0, 0.3], [0.3, 1.0]]).unwrap();
        let low = LowerOrderConfig::new(2.0, Datum::function(|p| p[0] * p[1] + 1.0)).unwrap();
        let model = EnergyModel::from_pattern(&s, &bulk, Some(&low));
        let q = model.quadratic_form().unwrap();
        let h = CsrMatrix::from_triplets(model.dof_count(), q.matrix);
        let u: Vec<f64> = (0..model.dof_count()).map(|i| (i as f64).sin()).collect();
        let e = h.quad(&u) - 2.0 * crate::sparse::dot(&q.rhs, &u) + q.constant;
        assert!((e - model.value(&u)).abs() < 1e-12 * e.abs());
    }

    #[test]
    fn measure_validation() {
        let piece = |a, b, w| MeasurePiece {
            start: a,
            end: b,
            weight: w,
        };
        assert!(InterfaceMeasure::new(
            vec![piece(0.0, 0.5, Weight::Zero), piece(0.4, 1.0, Weight::Infinite)],
            Weight::Zero
        )
        .is_err());
        assert!(Weight::from_value(-1.0).is_err());
        let m = InterfaceMeasure::new(
            vec![piece(0.5, 1.0, Weight::Infinite), piece(0.0, 0.5, Weight::Finite(2.0))],
            Weight::Zero,
        )
        .unwrap();
        assert_eq!(m.weight_at(0.25), Weight::Finite(2.0));
        assert_eq!(m.weight_at(0.75), Weight::Infinite);
        assert!(m.validate(1.0).is_ok());
        assert!(m.validate(0.9).is_err());
    }

    fn random_field(s: &Arc<FieldSpace>, vals: &[f64]) -> Field {
        let n = s.dof_count();
        Field::from_coeffs(s, (0..n).map(|i| vals[i % vals.len()] * (1.0 + (i as f64 * 0.37).sin())).collect())
            .unwrap()
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(
            p in prop_oneof![Just(2.0), Just(3.0)],
            theta in 0.1f64..10.0,
            vals in proptest::collection::vec(-2.0f64..2.0, 7..40),
            probe in proptest::collection::vec(0usize..10_000, 8),
        ) {
            let s = cracked(0.25, EdgeState::Penalized(theta));
            let bulk = BulkConfig::new(p, [[1.5, 0.2], [0.2, 0.8]]).unwrap();
            let low = LowerOrderConfig::new(p, Datum::function(|x| x[0] - x[1])).unwrap();
            let u = random_field(&s, &vals);
            let model = EnergyModel::from_pattern(&s, &bulk, Some(&low));
            let (_, g) = model.value_and_gradient(u.coeffs());
            let step = 1e-6;
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for &k in &probe {
                let i = k % s.dof_count();
                let mut up = u.coeffs().to_vec();
                let mut dn = up.clone();
                up[i] += step;
                dn[i] -= step;
                let fd = (model.value(&up) - model.value(&dn)) / (2.0 * step);
                prop_assert!((fd - g[i]).abs() <= 1e-6 * scale.max(1e-3), "i={} fd={} g={}", i, fd, g[i]);
            }
        }

        #[test]
        fn growth_bounds(p in 1.1f64..4.0, a in 0.1f64..5.0, b in 0.1f64..5.0, c in -0.9f64..0.9, x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let off = c * (a * b).sqrt();
            let cfg = BulkConfig::new(p, [[a, off], [off, b]]).unwrap();
            let n = (x * x + y * y).sqrt().powf(p);
            let f = cfg.f([x, y]);
            prop_assert!(cfg.lambda() * n <= f * (1.0 + 1e-12) + 1e-300);
            prop_assert!(f <= cfg.big_lambda() * n * (1.0 + 1e-12) + 1e-300);
            prop_assert!((cfg.f([-x, -y]) - f).abs() <= 1e-12 * f.max(1.0));
            prop_assert!((cfg.f([2.0 * x, 2.0 * y]) - 2f64.powf(p) * f).abs() <= 1e-10 * f.max(1.0));
        }

        #[test]
        fn lower_order_growth(q in 1.0f64..4.0, s in -10.0f64..10.0, h in -10.0f64..10.0) {
            let g = LowerOrderConfig::new(q, Datum::Constant(h)).unwrap().g(s, h);
            let lo = 2f64.powf(1.0 - q) * s.abs().powf(q) - h.abs().powf(q);
            let hi = 2f64.powf(q - 1.0) * (s.abs().powf(q) + h.abs().powf(q));
            prop_assert!(lo <= g * (1.0 + 1e-12) + 1e-12);
            prop_assert!(g <= hi * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn scaling_homogeneity(p in 1.5f64..3.5, q in 1.0f64..3.0, t in 0.1f64..3.0, vals in proptest::collection::vec(-1.0f64..1.0, 5..20)) {
            let s = cracked(0.25, EdgeState::Penalized(2.0));
            let bulk = BulkConfig::isotropic(p).unwrap();
            let low = LowerOrderConfig::new(q, Datum::Constant(0.0)).unwrap();
            let u = random_field(&s, &vals);
            let m = EnergyModel::from_pattern(&s, &bulk, Some(&low));
            let v = u.map(|c| t * c);
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-12);
            prop_assert!(close(m.bulk_value(v.coeffs()), t.powf(p) * m.bulk_value(u.coeffs())));
            prop_assert!(close(m.jump_value(v.coeffs()), t.powf(p) * m.jump_value(u.coeffs())));
            prop_assert!(close(m.lower_value(v.coeffs()), t.powf(q) * m.lower_value(u.coeffs())));
        }

        #[test]
        fn jump_energy_is_side_symmetric(theta in 0.1f64..5.0, p in 1.2f64..3.0, vals in proptest::collection::vec(-1.0f64..1.0, 5..20)) {
            let s = cracked(0.25, EdgeState::Free);
            let u = random_field(&s, &vals);
            let mesh = s.mesh();
            let mut pairs: Vec<(usize, usize)> = mesh
                .edges()
                .iter()
                .flat_map(|e| (0..2).map(move |k| (e.plus[k], e.minus[k])))
                .map(|(a, b)| (s.node_dof(a).unwrap(), s.node_dof(b).unwrap()))
                .collect();
            pairs.sort_unstable();
            pairs.dedup();
            let mut swapped = u.coeffs().to_vec();
            for (a, b) in pairs {
                swapped.swap(a, b);
            }
            let v = Field::from_coeffs(&s, swapped).unwrap();
            let mu = InterfaceMeasure::uniform(Weight::Finite(theta));
            let (a, b) = (jump_energy(&u, &mu, p).unwrap(), jump_energy(&v, &mu, p).unwrap());
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-12));
        }

        #[test]
        fn metric_is_positive_semidefinite(p in 1.2f64..3.5, vals in proptest::collection::vec(-1.0f64..1.0, 5..20), probe in proptest::collection::vec(-1.0f64..1.0, 5..20)) {
            let s = cracked(0.25, EdgeState::Penalized(1.0));
            let bulk = BulkConfig::isotropic(p).unwrap();
            let m = EnergyModel::from_pattern(&s, &bulk, None);
            let u = random_field(&s, &vals);
            let a = CsrMatrix::from_triplets(m.dof_count(), m.metric(u.coeffs(), 1e-6));
            let x = random_field(&s, &probe);
            prop_assert!(a.quad(x.coeffs()) >= -1e-12);
        }
    }
}
