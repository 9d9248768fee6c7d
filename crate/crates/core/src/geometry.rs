//! Computational domain, the interface curve, sieve generators and strips.
//!
//! The interface is the graph of a piecewise-linear profile over a base
//! segment. Points are addressed either by the signed base parameter `s`
//! (measured from the segment center along the tangent) or by arc length
//! along the curve, starting at zero at the `start` end.

use crate::error::{Error, Result};

pub type Point = [f64; 2];

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

fn axpy(p: Point, t: f64, d: Point) -> Point {
    [p[0] + t * d[0], p[1] + t * d[1]]
}

/// Unsigned polygon area by the shoelace formula.
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut twice = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        twice += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * twice.abs()
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm(sub(p, axpy(a, t, ab)))
}

/// Axis-aligned bounding rectangle of the computational domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::DegenerateDomain("extents must be finite".into()));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::DegenerateDomain(format!(
                "empty interior: x in [{x_min}, {x_max}], y in [{y_min}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn min(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.x_min
        } else {
            self.y_min
        }
    }

    pub fn max(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.x_max
        } else {
            self.y_max
        }
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p[0] >= self.x_min - tol
            && p[0] <= self.x_max + tol
            && p[1] >= self.y_min - tol
            && p[1] <= self.y_max + tol
    }

    pub fn contains_strictly(&self, p: Point, tol: f64) -> bool {
        p[0] > self.x_min + tol
            && p[0] < self.x_max - tol
            && p[1] > self.y_min + tol
            && p[1] < self.y_max - tol
    }

    pub fn on_boundary(&self, p: Point, tol: f64) -> bool {
        self.contains(p, tol) && !self.contains_strictly(p, tol)
    }

    pub fn corners(&self) -> Vec<Point> {
        vec![
            [self.x_min, self.y_min],
            [self.x_max, self.y_min],
            [self.x_max, self.y_max],
            [self.x_min, self.y_max],
        ]
    }
}

/// Oriented base segment of the interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: Point,
    pub end: Point,
}

impl Segment {
    pub fn new(start: Point, end: Point) -> Self {
        Self { start, end }
    }
}

/// Graph profile over the base segment.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Flat,
    /// Values at uniformly spaced base parameters covering the whole segment,
    /// endpoints included.
    Samples(Vec<f64>),
}

impl Profile {
    /// Samples `f(s)` at `n` uniform points of `s` in `[-L/2, L/2]`.
    pub fn from_fn(segment_length: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let half = 0.5 * segment_length;
        let values = (0..n)
            .map(|k| f(-half + segment_length * k as f64 / (n - 1) as f64))
            .collect();
        Profile::Samples(values)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InterfaceOptions {
    /// Radius `r0` of the local cylinder; defaults to the segment length.
    pub cylinder_radius: Option<f64>,
    /// Allows the interface endpoints to lie on the domain boundary.
    pub test_mode: bool,
}

/// Piecewise-linear interface curve with its local cylinder frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    start: Point,
    end: Point,
    center: Point,
    tangent: Point,
    normal: Point,
    half_length: f64,
    cylinder_radius: f64,
    profile: Vec<f64>,
    params: Vec<f64>,
    points: Vec<Point>,
    arc: Vec<f64>,
    test_mode: bool,
}

/// Canonical unit normal of a direction: the one with positive x component,
/// or positive y component when the direction is horizontal.
fn canonical_normal(tangent: Point) -> Point {
    let n = [-tangent[1], tangent[0]];
    if n[0] < 0.0 || (n[0] == 0.0 && n[1] < 0.0) {
        [-n[0], -n[1]]
    } else {
        n
    }
}

pub fn build_interface(
    segment: Segment,
    profile: Profile,
    options: InterfaceOptions,
) -> Result<Interface> {
    let d = sub(segment.end, segment.start);
    let length = norm(d);
    let finite = segment
        .start
        .iter()
        .chain(segment.end.iter())
        .all(|v| v.is_finite());
    if !finite || !(length > 0.0) {
        return Err(Error::DegenerateSegment);
    }
    let tangent = [d[0] / length, d[1] / length];
    let normal = canonical_normal(tangent);
    let center = [
        0.5 * (segment.start[0] + segment.end[0]),
        0.5 * (segment.start[1] + segment.end[1]),
    ];
    let half_length = 0.5 * length;
    let r0 = options.cylinder_radius.unwrap_or(length);
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "cylinder radius must be positive, got {r0}"
        )));
    }
    let bound = 0.25 * r0;

    let profile = match profile {
        Profile::Flat => Vec::new(),
        Profile::Samples(v) => {
            if v.len() < 2 {
                return Err(Error::InvalidConfig(
                    "a sampled profile needs at least two values".into(),
                ));
            }
            for (index, &value) in v.iter().enumerate() {
                if !(value.abs() < bound) {
                    return Err(Error::ProfileOutOfRange {
                        index,
                        value,
                        bound,
                    });
                }
            }
            if v.iter().all(|&x| x == 0.0) {
                Vec::new()
            } else {
                v
            }
        }
    };

    let params: Vec<f64> = if profile.is_empty() {
        vec![-half_length, half_length]
    } else {
        let n = profile.len();
        (0..n)
            .map(|k| -half_length + length * k as f64 / (n - 1) as f64)
            .collect()
    };

    let mut iface = Interface {
        start: segment.start,
        end: segment.end,
        center,
        tangent,
        normal,
        half_length,
        cylinder_radius: r0,
        profile,
        params,
        points: Vec::new(),
        arc: Vec::new(),
        test_mode: options.test_mode,
    };
    let at_center = iface.phi(0.0);
    if at_center.abs() > 1e-9 * r0 {
        return Err(Error::ProfileNotCentered(at_center));
    }
    iface.points = iface.params.iter().map(|&s| iface.point_at(s)).collect();
    let mut arc = Vec::with_capacity(iface.points.len());
    let mut acc = 0.0;
    arc.push(0.0);
    for w in iface.points.windows(2) {
        acc += norm(sub(w[1], w[0]));
        arc.push(acc);
    }
    iface.arc = arc;
    Ok(iface)
}

impl Interface {
    pub fn start(&self) -> Point {
        self.start
    }

    pub fn end(&self) -> Point {
        self.end
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn tangent(&self) -> Point {
        self.tangent
    }

    /// Axis direction `ν0` of the local cylinder; the plus side of the
    /// interface is the side it points to.
    pub fn normal(&self) -> Point {
        self.normal
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn base_length(&self) -> f64 {
        2.0 * self.half_length
    }

    pub fn cylinder_radius(&self) -> f64 {
        self.cylinder_radius
    }

    pub fn test_mode(&self) -> bool {
        self.test_mode
    }

    pub fn is_flat(&self) -> bool {
        self.profile.is_empty()
    }

    /// Polyline vertices of the curve.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Cumulative arc length at each polyline vertex.
    pub fn arc_table(&self) -> &[f64] {
        &self.arc
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    /// Profile value at base parameter `s`, constant beyond the ends.
    pub fn phi(&self, s: f64) -> f64 {
        if self.profile.is_empty() {
            return 0.0;
        }
        let s = s.clamp(-self.half_length, self.half_length);
        let (k, w) = self.locate(s);
        self.profile[k] * (1.0 - w) + self.profile[k + 1] * w
    }

    pub fn max_abs_phi(&self) -> f64 {
        self.profile.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let n = self.params.len();
        let k = match self
            .params
            .binary_search_by(|p| p.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let w = (s - self.params[k]) / (self.params[k + 1] - self.params[k]);
        (k, w)
    }

    pub fn point_at(&self, s: f64) -> Point {
        let base = axpy(self.center, s, self.tangent);
        axpy(base, self.phi(s), self.normal)
    }

    /// Arc length from the start end up to base parameter `s`.
    pub fn arc_at(&self, s: f64) -> f64 {
        let s = s.clamp(-self.half_length, self.half_length);
        let (k, w) = self.locate(s);
        self.arc[k] + w * (self.arc[k + 1] - self.arc[k])
    }

    /// Inverse of [`Interface::arc_at`].
    pub fn param_at_arc(&self, a: f64) -> f64 {
        let a = a.clamp(0.0, self.length());
        let n = self.arc.len();
        let k = match self.arc.binary_search_by(|p| p.partial_cmp(&a).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let w = (a - self.arc[k]) / (self.arc[k + 1] - self.arc[k]);
        self.params[k] + w * (self.params[k + 1] - self.params[k])
    }

    /// Local cylinder coordinates `(s, r)` of a point.
    pub fn local(&self, p: Point) -> (f64, f64) {
        let d = sub(p, self.center);
        (dot(d, self.tangent), dot(d, self.normal))
    }

    /// Signed offset of a point from the curve measured along `ν0`.
    pub fn offset_of(&self, p: Point) -> f64 {
        let (s, r) = self.local(p);
        r - self.phi(s)
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        self.points
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Curve points between arc lengths `a <= b`, endpoints included.
    pub fn sub_polyline(&self, a: f64, b: f64) -> Vec<Point> {
        let mut pts = vec![self.point_at(self.param_at_arc(a))];
        for (k, &arc) in self.arc.iter().enumerate() {
            if arc > a && arc < b {
                pts.push(self.points[k]);
            }
        }
        pts.push(self.point_at(self.param_at_arc(b)));
        pts
    }

    /// Polygon bounded by the translates of the arc range `[a, b]` by
    /// `+upper·ν0` and `-lower·ν0`.
    pub fn band_polygon(&self, a: f64, b: f64, upper: f64, lower: f64) -> Vec<Point> {
        let pts = self.sub_polyline(a, b);
        let mut poly: Vec<Point> = pts.iter().map(|&p| axpy(p, upper, self.normal)).collect();
        poly.extend(pts.iter().rev().map(|&p| axpy(p, -lower, self.normal)));
        poly
    }

    /// Checks that the curve lies inside the domain; in test mode the
    /// endpoints may touch the boundary.
    pub fn check_within(&self, domain: &Domain) -> Result<()> {
        let tol = 1e-12 * (domain.area().sqrt());
        for (k, &p) in self.points.iter().enumerate() {
            let ok = if self.test_mode {
                domain.contains(p, tol)
            } else {
                domain.contains_strictly(p, tol)
            };
            if !ok {
                return Err(Error::InterfaceOutsideDomain(format!(
                    "vertex {k} at ({}, {})",
                    p[0], p[1]
                )));
            }
        }
        Ok(())
    }
}

/// Strip `S_ρ` between the translates of the interface by `±ρ·ν0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StripRegion {
    rho: f64,
    plus: Vec<Point>,
    minus: Vec<Point>,
    polygon: Vec<Point>,
    interface: Interface,
}

pub fn strip(interface: &Interface, rho: f64) -> Result<StripRegion> {
    let max = 0.5 * interface.cylinder_radius;
    if !(rho > 0.0 && rho < max) {
        return Err(Error::StripOutOfRange { rho, max });
    }
    let n = interface.normal;
    let plus: Vec<Point> = interface.points.iter().map(|&p| axpy(p, rho, n)).collect();
    let minus: Vec<Point> = interface.points.iter().map(|&p| axpy(p, -rho, n)).collect();
    let polygon = interface.band_polygon(0.0, interface.length(), rho, rho);
    Ok(StripRegion {
        rho,
        plus,
        minus,
        polygon,
        interface: interface.clone(),
    })
}

impl StripRegion {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Offset curve `Σ_ρ^+`.
    pub fn plus(&self) -> &[Point] {
        &self.plus
    }

    /// Offset curve `Σ_ρ^-`.
    pub fn minus(&self) -> &[Point] {
        &self.minus
    }

    pub fn polygon(&self) -> &[Point] {
        &self.polygon
    }

    pub fn interface(&self) -> &Interface {
        &self.interface
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.polygon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawForm {
    /// `c · j^(-a)`
    Power,
    /// `c · exp(-a·j)`
    Exp,
}

/// Positive nonincreasing sequence indexed by `j >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Law {
    pub c: f64,
    pub a: f64,
    pub form: LawForm,
}

impl Law {
    pub fn power(c: f64, a: f64) -> Self {
        Self {
            c,
            a,
            form: LawForm::Power,
        }
    }

    pub fn exp(c: f64, a: f64) -> Self {
        Self {
            c,
            a,
            form: LawForm::Exp,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::power(c, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::InvalidLaw(format!("c must be positive, got {}", self.c)));
        }
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(Error::InvalidLaw(format!(
                "a must be nonnegative, got {}",
                self.a
            )));
        }
        Ok(())
    }

    pub fn value(&self, j: usize) -> f64 {
        let j = j as f64;
        match self.form {
            LawForm::Power => self.c * j.powf(-self.a),
            LawForm::Exp => self.c * (-self.a * j).exp(),
        }
    }
}

/// Parametric families `j ↦ K_j` of compact sets near the interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SieveSpec {
    Empty,
    FullSlab { thickness: Law },
    CrackSieve { period: Law, gap: Law },
    PerforatedSlab { thickness: Law, period: Law, hole: Law },
}

impl SieveSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            SieveSpec::Empty => Ok(()),
            SieveSpec::FullSlab { thickness } => thickness.validate(),
            SieveSpec::CrackSieve { period, gap } => {
                period.validate()?;
                gap.validate()
            }
            SieveSpec::PerforatedSlab {
                thickness,
                period,
                hole,
            } => {
                thickness.validate()?;
                period.validate()?;
                hole.validate()
            }
        }
    }

    /// Law bound on `max dist(K_j, M)`.
    pub fn distance_law(&self, j: usize) -> f64 {
        match self {
            SieveSpec::Empty | SieveSpec::CrackSieve { .. } => 0.0,
            SieveSpec::FullSlab { thickness } | SieveSpec::PerforatedSlab { thickness, .. } => {
                0.5 * thickness.value(j)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompactKind {
    /// Closed arc-length intervals of the interface (the wall).
    CrackSubset(Vec<[f64; 2]>),
    /// Union of disjoint closed polygons.
    Polygon(Vec<Vec<Point>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompactSet {
    pub kind: CompactKind,
    pub j: usize,
    pub max_distance: f64,
}

impl CompactSet {
    pub fn crack(intervals: Vec<[f64; 2]>, j: usize) -> Self {
        Self {
            kind: CompactKind::CrackSubset(intervals),
            j,
            max_distance: 0.0,
        }
    }

    /// Total measure: wall length for crack subsets, area for polygons.
    pub fn measure(&self) -> f64 {
        match &self.kind {
            CompactKind::CrackSubset(iv) => iv.iter().map(|w| w[1] - w[0]).sum(),
            CompactKind::Polygon(parts) => parts.iter().map(|p| polygon_area(p)).sum(),
        }
    }
}

/// Complement of `intervals` in `[0, total]`.
pub fn complement(intervals: &[[f64; 2]], total: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    let mut cursor = 0.0;
    for iv in intervals {
        if iv[0] > cursor {
            out.push([cursor, iv[0]]);
        }
        cursor = cursor.max(iv[1]);
    }
    if cursor < total {
        out.push([cursor, total]);
    }
    out
}

/// Wall intervals of `[0, total]` after removing open gaps of width `gap`
/// centered at `(k + 1/2)·period` for every period that fits entirely.
pub fn periodic_walls(total: f64, period: f64, gap: f64) -> Vec<[f64; 2]> {
    let mut gaps = Vec::new();
    if gap > 0.0 {
        let mut k = 0usize;
        while (k + 1) as f64 * period <= total * (1.0 + 1e-12) {
            let c = (k as f64 + 0.5) * period;
            gaps.push([c - 0.5 * gap, c + 0.5 * gap]);
            k += 1;
        }
    }
    complement(&gaps, total)
        .into_iter()
        .filter(|w| w[1] - w[0] > 1e-14 * total.max(1.0))
        .collect()
}

fn max_distance(interface: &Interface, parts: &[Vec<Point>]) -> f64 {
    parts
        .iter()
        .flat_map(|p| p.iter())
        .map(|&v| interface.distance_to(v))
        .fold(0.0, f64::max)
}

pub fn sieve_at(interface: &Interface, spec: &SieveSpec, j: usize) -> Result<CompactSet> {
    if j < 1 {
        return Err(Error::InvalidIndex);
    }
    spec.validate()?;
    let total = interface.length();
    let slab = |half: f64| -> Result<()> {
        let reach = half + interface.max_abs_phi();
        if reach >= interface.cylinder_radius() {
            return Err(Error::SlabOutsideCylinder {
                half,
                radius: interface.cylinder_radius(),
            });
        }
        Ok(())
    };
    match spec {
        SieveSpec::Empty => Ok(CompactSet::crack(Vec::new(), j)),
        SieveSpec::CrackSieve { period, gap } => {
            let (eps, delta) = (period.value(j), gap.value(j));
            if delta > eps {
                return Err(Error::GapExceedsPeriod {
                    j,
                    gap: delta,
                    period: eps,
                });
            }
            Ok(CompactSet::crack(periodic_walls(total, eps, delta), j))
        }
        SieveSpec::FullSlab { thickness } => {
            let half = 0.5 * thickness.value(j);
            slab(half)?;
            let parts = vec![interface.band_polygon(0.0, total, half, half)];
            let max_distance = max_distance(interface, &parts);
            Ok(CompactSet {
                kind: CompactKind::Polygon(parts),
                j,
                max_distance,
            })
        }
        SieveSpec::PerforatedSlab {
            thickness,
            period,
            hole,
        } => {
            let half = 0.5 * thickness.value(j);
            let (eps, delta) = (period.value(j), hole.value(j));
            if delta > eps {
                return Err(Error::GapExceedsPeriod {
                    j,
                    gap: delta,
                    period: eps,
                });
            }
            slab(half)?;
            let parts: Vec<Vec<Point>> = periodic_walls(total, eps, delta)
                .into_iter()
                .map(|w| interface.band_polygon(w[0], w[1], half, half))
                .collect();
            let max_distance = max_distance(interface, &parts);
            Ok(CompactSet {
                kind: CompactKind::Polygon(parts),
                j,
                max_distance,
            })
        }
    }
}
