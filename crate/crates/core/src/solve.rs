//! Discrete minimisers: global problems, strip cell problems and condenser
//! capacities.

use std::sync::Arc;

use crate::energy::{BulkConfig, EnergyModel, InterfaceMeasure, LowerOrderConfig};
use crate::error::{Error, Result};
use crate::geometry::{norm, point_in_polygon, sub, Domain, Point};
use crate::mesh::{
    annulus_mesh, disk_mesh, CellMesh, CouplingPattern, Field, FieldSpace, InterfaceMesh, NodeTag,
};
use crate::sparse::{cg, dot, CsrMatrix, Triplet};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative residual of the conjugate-gradient solve.
    pub linear_tol: f64,
    pub max_linear_iter: usize,
    pub max_descent_iter: usize,
    pub armijo: f64,
    pub backtrack: f64,
    /// Descent stops when the relative energy decrease falls below this.
    pub energy_rtol: f64,
    /// Descent stops when the gradient max-norm is below `grad_tol (1 + |E|)`.
    pub grad_tol: f64,
    /// Relative regularization of the descent metric.
    pub metric_eps: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            linear_tol: 1e-10,
            max_linear_iter: 100_000,
            max_descent_iter: 2_000,
            armijo: 1e-4,
            backtrack: 0.5,
            energy_rtol: 1e-10,
            grad_tol: 1e-6,
            metric_eps: 1e-6,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("linear_tol", self.linear_tol),
            ("energy_rtol", self.energy_rtol),
            ("grad_tol", self.grad_tol),
            ("metric_eps", self.metric_eps),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("solver.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("armijo", self.armijo), ("backtrack", self.backtrack)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidConfig(format!("solver.{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.max_linear_iter == 0 || self.max_descent_iter == 0 {
            return Err(Error::InvalidConfig("solver iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// How the two sides of the interface interact.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    /// Perforated problem: the pattern of a sieve.
    Pattern(CouplingPattern),
    /// Transmission problem: ties, frees or penalizes every edge per weight.
    Measure(InterfaceMeasure),
}

impl Coupling {
    pub fn pattern(&self, mesh: &InterfaceMesh) -> CouplingPattern {
        match self {
            Coupling::Pattern(p) => p.clone(),
            Coupling::Measure(m) => m.pattern(mesh),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ConjugateGradient,
    Descent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub method: Method,
    pub iterations: usize,
    /// Relative residual (linear) or final gradient max-norm (descent).
    pub residual: f64,
    /// Energy after every accepted descent step, starting with the initial
    /// value; empty for linear solves.
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub field: Field,
    pub value: f64,
    pub stats: SolveStats,
}

fn restrict(triplets: &[Triplet], fixed: &[Option<f64>], index: &[usize], rhs: &mut [f64]) -> Vec<Triplet> {
    let mut out = Vec::with_capacity(triplets.len());
    for &(i, j, v) in triplets {
        if fixed[i].is_some() {
            continue;
        }
        match fixed[j] {
            None => out.push((index[i], index[j], v)),
            Some(c) => rhs[index[i]] -= v * c,
        }
    }
    out
}

/// Minimizes `model` over coefficients agreeing with `fixed` where set.
pub fn minimize(
    model: &EnergyModel,
    u0: Vec<f64>,
    fixed: &[Option<f64>],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, f64, SolveStats)> {
    opts.validate()?;
    let n = model.dof_count();
    let mut u = u0;
    for (x, f) in u.iter_mut().zip(fixed) {
        if let Some(c) = f {
            *x = *c;
        }
    }
    let mut index = vec![usize::MAX; n];
    let mut free = Vec::new();
    for i in 0..n {
        if fixed[i].is_none() {
            index[i] = free.len();
            free.push(i);
        }
    }
    if let Some(q) = model.quadratic_form() {
        let mut rhs: Vec<f64> = free.iter().map(|&i| q.rhs[i]).collect();
        let a = CsrMatrix::from_triplets(free.len(), restrict(&q.matrix, fixed, &index, &mut rhs));
        let mut x: Vec<f64> = free.iter().map(|&i| u[i]).collect();
        let stats = cg(&a, &rhs, &mut x, opts.linear_tol, opts.max_linear_iter)?;
        for (k, &i) in free.iter().enumerate() {
            u[i] = x[k];
        }
        let value = model.value(&u);
        return Ok((
            u,
            value,
            SolveStats {
                method: Method::ConjugateGradient,
                iterations: stats.iterations,
                residual: stats.residual,
                energies: Vec::new(),
            },
        ));
    }
    descend(model, u, fixed, &free, &index, opts)
}

fn descend(
    model: &EnergyModel,
    mut u: Vec<f64>,
    fixed: &[Option<f64>],
    free: &[usize],
    index: &[usize],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, f64, SolveStats)> {
    let (mut e, mut g) = model.value_and_gradient(&u);
    let mut energies = vec![e];
    let gmax = |g: &[f64]| free.iter().fold(0.0f64, |m, &i| m.max(g[i].abs()));
    let mut gnorm = gmax(&g);
    let mut it = 0;
    while it < opts.max_descent_iter {
        if gnorm <= opts.grad_tol * (1.0 + e.abs()) {
            break;
        }
        it += 1;
        let mut rhs: Vec<f64> = free.iter().map(|&i| -0.5 * g[i]).collect();
        let metric = model.metric(&u, opts.metric_eps);
        let mut zero = vec![0.0; free.len()];
        let a = CsrMatrix::from_triplets(free.len(), restrict(&metric, fixed, index, &mut zero));
        let mut d = vec![0.0; free.len()];
        // an inexact direction is still a descent direction
        let _ = cg(&a, &rhs, &mut d, 1e-8, 10 * free.len().max(100));
        let gfree: Vec<f64> = free.iter().map(|&i| g[i]).collect();
        let mut slope = dot(&d, &gfree);
        if !(slope < 0.0) {
            rhs = gfree.iter().map(|v| -v).collect();
            d = rhs;
            slope = dot(&d, &gfree);
        }
        let mut t = 1.0;
        let mut trial = u.clone();
        let accepted = loop {
            for (k, &i) in free.iter().enumerate() {
                trial[i] = u[i] + t * d[k];
            }
            let et = model.value(&trial);
            if et <= e + opts.armijo * t * slope {
                break Some(et);
            }
            t *= opts.backtrack;
            if t < 1e-30 {
                break None;
            }
        };
        let Some(et) = accepted else { break };
        let decrease = (e - et) / e.abs().max(f64::MIN_POSITIVE);
        u = trial;
        let (ne, ng) = model.value_and_gradient(&u);
        e = ne;
        g = ng;
        gnorm = gmax(&g);
        energies.push(e);
        if decrease < opts.energy_rtol {
            break;
        }
    }
    if it >= opts.max_descent_iter && gnorm > opts.grad_tol * (1.0 + e.abs()) {
        return Err(Error::IterationCap {
            solver: "preconditioned descent",
            iterations: it,
            residual: gnorm,
        });
    }
    Ok((
        u,
        e,
        SolveStats {
            method: Method::Descent,
            iterations: it,
            residual: gnorm,
            energies,
        },
    ))
}

/// Minimizes bulk + jump + lower-order energy over the whole mesh, starting
/// from the zero field.
pub fn solve_global(
    mesh: &Arc<InterfaceMesh>,
    coupling: &Coupling,
    bulk: &BulkConfig,
    lower: Option<&LowerOrderConfig>,
    opts: &SolverOptions,
) -> Result<Solution> {
    let space = FieldSpace::new(Arc::clone(mesh), coupling.pattern(mesh))?;
    let model = EnergyModel::from_pattern(&space, bulk, lower);
    let n = space.dof_count();
    let (u, value, stats) = minimize(&model, vec![0.0; n], &vec![None; n], opts)?;
    Ok(Solution {
        field: Field::from_coeffs(&space, u)?,
        value,
        stats,
    })
}

/// Minimizes the bulk (plus jump) energy on a strip with value 1 on the
/// upper offset curve and 0 on the lower one.
pub fn solve_cell(
    cell: &CellMesh,
    coupling: &Coupling,
    bulk: &BulkConfig,
    opts: &SolverOptions,
) -> Result<Solution> {
    let mesh = &cell.mesh;
    let space = FieldSpace::new(Arc::clone(mesh), coupling.pattern(mesh))?;
    let n = space.dof_count();
    let mut fixed = vec![None; n];
    let mut u0 = vec![0.0; n];
    for v in 0..mesh.node_count() {
        let Some(d) = space.node_dof(v) else { continue };
        u0[d] = ((cell.offsets[v] + cell.rho) / (2.0 * cell.rho)).clamp(0.0, 1.0);
        match cell.tags[v] {
            NodeTag::DirichletOne => fixed[d] = Some(1.0),
            NodeTag::DirichletZero => fixed[d] = Some(0.0),
            NodeTag::None => {}
        }
    }
    let model = EnergyModel::from_pattern(&space, bulk, None);
    let (u, value, stats) = minimize(&model, u0, &fixed, opts)?;
    Ok(Solution {
        field: Field::from_coeffs(&space, u)?,
        value,
        stats,
    })
}

/// Planar regions for condenser problems.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Empty,
    Disk { center: Point, radius: f64 },
    Rectangle(Domain),
    Polygon(Vec<Point>),
}

impl Region {
    fn contains(&self, p: Point, tol: f64) -> bool {
        match self {
            Region::Empty => false,
            Region::Disk { center, radius } => norm(sub(p, *center)) <= radius + tol,
            Region::Rectangle(d) => d.contains(p, tol),
            Region::Polygon(poly) => point_in_polygon(p, poly),
        }
    }

    fn strictly_inside(&self, outer: &Region) -> bool {
        match (self, outer) {
            (_, Region::Empty) => false,
            (Region::Empty, _) => true,
            (Region::Disk { center: c, radius: r }, Region::Disk { center, radius }) => {
                norm(sub(*c, *center)) + r < *radius
            }
            (Region::Disk { center: c, radius: r }, Region::Rectangle(d)) => {
                c[0] - r > d.x_min && c[0] + r < d.x_max && c[1] - r > d.y_min && c[1] + r < d.y_max
            }
            (Region::Rectangle(inner), _) => inner.corners().iter().all(|&p| outer.interior(p)),
            (Region::Polygon(poly), _) => poly.iter().all(|&p| outer.interior(p)),
            (_, Region::Polygon(_)) => false,
        }
    }

    fn interior(&self, p: Point) -> bool {
        match self {
            Region::Empty => false,
            Region::Disk { center, radius } => norm(sub(p, *center)) < *radius,
            Region::Rectangle(d) => d.contains_strictly(p, 0.0),
            Region::Polygon(poly) => point_in_polygon(p, poly),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityMesh {
    pub h: f64,
    /// Angular resolution of polar meshes.
    pub sectors: usize,
}

#[derive(Debug, Clone)]
pub struct CapacityResult {
    pub value: f64,
    pub nodes: usize,
    pub triangles: usize,
    /// True when a polar mesh conforming to both circles was used.
    pub conforming: bool,
    pub stats: Option<SolveStats>,
}

/// Condenser capacity `min ∫|∇u|^p` with `u = 1` on the inner set and
/// `u = 0` on the outer boundary.
///
/// Concentric disks use a polar mesh of the annulus. Other configurations
/// mesh the outer region and fix every node in the closed inner set.
pub fn capacity(
    outer: &Region,
    inner: &Region,
    p: f64,
    mesh: CapacityMesh,
    opts: &SolverOptions,
) -> Result<CapacityResult> {
    let bulk = BulkConfig::isotropic(p)?;
    if !inner.strictly_inside(outer) {
        return Err(Error::InnerTouchesBoundary);
    }
    if *inner == Region::Empty {
        return Ok(CapacityResult {
            value: 0.0,
            nodes: 0,
            triangles: 0,
            conforming: true,
            stats: None,
        });
    }
    let (m, one, zero, conforming): (InterfaceMesh, Vec<usize>, Vec<usize>, bool) = match (outer, inner) {
        (Region::Disk { center, radius }, Region::Disk { center: c, radius: r })
            if norm(sub(*c, *center)) <= 1e-12 * radius =>
        {
            let pm = annulus_mesh(*center, *r, *radius, mesh.sectors, mesh.h)?;
            (pm.mesh, pm.inner, pm.outer, true)
        }
        (Region::Disk { center, radius }, _) => {
            let pm = disk_mesh(*center, *radius, mesh.sectors, mesh.h)?;
            let tol = 1e-12 * radius;
            let one = (0..pm.mesh.node_count())
                .filter(|&v| inner.contains(pm.mesh.nodes()[v], tol))
                .collect();
            (pm.mesh, one, pm.outer, false)
        }
        (Region::Rectangle(d), _) => {
            let m = InterfaceMesh::plain(d, mesh.h)?;
            let tol = 1e-12 * d.area().sqrt();
            let one = (0..m.node_count())
                .filter(|&v| inner.contains(m.nodes()[v], tol))
                .collect();
            let zero = (0..m.node_count())
                .filter(|&v| d.on_boundary(m.nodes()[v], tol))
                .collect();
            (m, one, zero, false)
        }
        _ => {
            return Err(Error::UnsupportedGeometry(
                "the outer region of a condenser must be a disk or a rectangle".into(),
            ))
        }
    };
    let m = Arc::new(m);
    let space = FieldSpace::new(Arc::clone(&m), CouplingPattern::uniform(&m, crate::mesh::EdgeState::Tied))?;
    let n = space.dof_count();
    let mut fixed = vec![None; n];
    for &v in &zero {
        fixed[space.node_dof(v).unwrap()] = Some(0.0);
    }
    for &v in &one {
        fixed[space.node_dof(v).unwrap()] = Some(1.0);
    }
    let model = EnergyModel::from_pattern(&space, &bulk, None);
    let (_, value, stats) = minimize(&model, vec![0.0; n], &fixed, opts)?;
    Ok(CapacityResult {
        value,
        nodes: m.node_count(),
        triangles: m.triangle_count(),
        conforming,
        stats: Some(stats),
    })
}
