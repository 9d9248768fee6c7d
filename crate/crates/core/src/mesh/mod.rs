//! Interface-conforming triangulations with duplicated interface nodes.
//!
//! Every interior interface vertex carries two coincident nodes, one seen by
//! the triangles on the plus side of the curve and one seen by the minus
//! side. Tips of an interface that ends inside the domain keep a single
//! shared node. Whether the two copies are identified, left independent or
//! coupled by a penalty is decided later by a [`CouplingPattern`].

mod field;
pub mod io;
mod pattern;
mod polar;
mod strip;

pub use field::{jump_of, Field, FieldSpace};
pub use pattern::{apply_sieve, CouplingPattern, EdgeState};
pub use polar::{annulus_mesh, disk_mesh, PolarMesh};
pub use strip::{restrict_to_strip, CellMesh, NodeTag};

use crate::error::{Error, Result};
use crate::geometry::{norm, sub, Domain, Interface, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

/// One interface edge with its two coincident node pairs, oriented by
/// increasing arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceEdge {
    pub plus: [usize; 2],
    pub minus: [usize; 2],
    pub arc: [f64; 2],
    pub length: f64,
}

impl InterfaceEdge {
    pub fn arc_mid(&self) -> f64 {
        0.5 * (self.arc[0] + self.arc[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceMesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<InterfaceEdge>,
    sides: Vec<Option<Side>>,
    h: f64,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl InterfaceMesh {
    /// Assembles a mesh from raw parts, fixing triangle orientation and
    /// deriving the side labels.
    pub fn from_parts(
        nodes: Vec<Point>,
        mut triangles: Vec<[usize; 3]>,
        edges: Vec<InterfaceEdge>,
        h: f64,
    ) -> Result<Self> {
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&n| n >= nodes.len()) {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("triangle {t} references a missing node"),
                });
            }
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if area < 0.0 {
                tri.swap(1, 2);
            }
        }
        let mut label = vec![None; nodes.len()];
        for e in &edges {
            for k in 0..2 {
                if e.plus[k] != e.minus[k] {
                    label[e.plus[k]] = Some(Side::Plus);
                    label[e.minus[k]] = Some(Side::Minus);
                }
            }
        }
        let sides = triangles
            .iter()
            .map(|tri| tri.iter().find_map(|&n| label[n]))
            .collect();
        Ok(Self {
            nodes,
            triangles,
            edges,
            sides,
            h,
        })
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[InterfaceEdge] {
        &self.edges
    }

    /// Side label of triangles touching a duplicated interface node.
    pub fn side(&self, triangle: usize) -> Option<Side> {
        self.sides[triangle]
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t].map(|n| self.nodes[n]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn max_diameter(&self) -> f64 {
        self.triangles
            .iter()
            .map(|tri| {
                let [a, b, c] = tri.map(|n| self.nodes[n]);
                norm(sub(a, b)).max(norm(sub(b, c))).max(norm(sub(c, a)))
            })
            .fold(0.0, f64::max)
    }

    /// Total arc length covered by the interface edges.
    pub fn interface_length(&self) -> f64 {
        self.edges.iter().map(|e| e.arc[1] - e.arc[0]).sum()
    }

    /// Sorted arc coordinates of the interface vertices.
    pub fn interface_vertex_arcs(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.edges.iter().flat_map(|e| e.arc).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    }

    /// Number of tip nodes, i.e. interface vertices that are not duplicated.
    pub fn tip_count(&self) -> usize {
        let mut tips: Vec<usize> = self
            .edges
            .iter()
            .flat_map(|e| (0..2).filter(move |&k| e.plus[k] == e.minus[k]).map(move |k| e.plus[k]))
            .collect();
        tips.sort_unstable();
        tips.dedup();
        tips.len()
    }

    /// Structured mesh of a rectangle without any interface.
    pub fn plain(domain: &Domain, h: f64) -> Result<Self> {
        check_h(h)?;
        let xs = subdivide(&[domain.x_min, domain.x_max], h);
        let ys = subdivide(&[domain.y_min, domain.y_max], h);
        let nx = xs.len();
        let nodes: Vec<Point> = ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| [x, y]))
            .collect();
        let mut triangles = Vec::new();
        for k in 0..ys.len() - 1 {
            for i in 0..nx - 1 {
                let a = k * nx + i;
                let (b, c, d) = (a + 1, a + nx + 1, a + nx);
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        Self::from_parts(nodes, triangles, Vec::new(), h)
    }
}

fn check_h(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidMeshSize(h));
    }
    Ok(())
}

/// Sorts and merges breakpoints, then splits every gap into pieces of
/// length at most `h`.
fn subdivide(breaks: &[f64], h: f64) -> Vec<f64> {
    let mut b: Vec<f64> = breaks.to_vec();
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    b.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * scale);
    let mut out = vec![b[0]];
    for w in b.windows(2) {
        let len = w[1] - w[0];
        let m = ((len / h) - 1e-9).ceil().max(1.0) as usize;
        for k in 1..m {
            out.push(w[0] + len * k as f64 / m as f64);
        }
        out.push(w[1]);
    }
    out
}

/// Mesh generation parameters beyond the target size.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshOptions {
    pub h: f64,
    /// Signed offsets along `ν0` that must appear as grid lines.
    pub normal_lines: Vec<f64>,
    /// Half-width of the band that is translated rigidly with the profile.
    pub rigid_band: f64,
    /// Clip the interface to the domain; clipped ends are not tips.
    pub clip_interface: bool,
}

impl MeshOptions {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            normal_lines: Vec::new(),
            rigid_band: 0.0,
            clip_interface: false,
        }
    }
}

pub fn triangulate(domain: &Domain, interface: &Interface, h: f64) -> Result<InterfaceMesh> {
    triangulate_with(domain, interface, &MeshOptions::new(h))
}

fn axis_of(v: Point) -> Option<usize> {
    if (v[0].abs() - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12 {
        Some(0)
    } else if (v[1].abs() - 1.0).abs() < 1e-12 && v[0].abs() < 1e-12 {
        Some(1)
    } else {
        None
    }
}

/// Structured interface-aligned triangulation.
///
/// The base segment must be parallel to a coordinate axis. Curved profiles
/// are realized by displacing grid nodes along `ν0`: nodes within
/// `rigid_band` of the base line move by the full profile value, and the
/// displacement decays linearly to zero at the domain boundary.
pub fn triangulate_with(
    domain: &Domain,
    interface: &Interface,
    opts: &MeshOptions,
) -> Result<InterfaceMesh> {
    let h = opts.h;
    check_h(h)?;
    let ta = axis_of(interface.tangent()).ok_or_else(|| {
        Error::UnsupportedGeometry("the interface base segment must be axis-aligned".into())
    })?;
    let na = 1 - ta;
    let tsign = interface.tangent()[ta].signum();
    let nsign = interface.normal()[na].signum();
    let center = interface.center();
    let c_n = center[na];
    let scale = domain.area().sqrt();
    let tol = 1e-12 * scale;

    if !(c_n > domain.min(na) + tol && c_n < domain.max(na) - tol) {
        return Err(Error::InterfaceOutsideDomain(
            "base line does not cross the domain interior".into(),
        ));
    }
    let (s0, s1) = (interface.start()[ta], interface.end()[ta]);
    let (mut t_lo, mut t_hi) = (s0.min(s1), s0.max(s1));
    let mut tip_lo = true;
    let mut tip_hi = true;
    if opts.clip_interface {
        if t_lo <= domain.min(ta) + tol {
            t_lo = domain.min(ta);
            tip_lo = false;
        }
        if t_hi >= domain.max(ta) - tol {
            t_hi = domain.max(ta);
            tip_hi = false;
        }
        if t_hi - t_lo <= tol {
            return Err(Error::InterfaceOutsideDomain(
                "interface does not meet the domain".into(),
            ));
        }
        for &p in interface.points() {
            if p[na] <= domain.min(na) || p[na] >= domain.max(na) {
                return Err(Error::InterfaceOutsideDomain(
                    "profile leaves the domain".into(),
                ));
            }
        }
    } else {
        interface.check_within(domain)?;
        if (t_lo - domain.min(ta)).abs() <= tol {
            tip_lo = false;
        }
        if (t_hi - domain.max(ta)).abs() <= tol {
            tip_hi = false;
        }
    }

    let tcoords = subdivide(&[domain.min(ta), domain.max(ta), t_lo, t_hi], h);
    let mut nbreaks = vec![domain.min(na), domain.max(na), c_n];
    for &l in &opts.normal_lines {
        let v = c_n + nsign * l;
        if v > domain.min(na) + tol && v < domain.max(na) - tol {
            nbreaks.push(v);
        }
    }
    let ncoords = subdivide(&nbreaks, h);

    // profile displacement weights
    let phi_max = interface.max_abs_phi();
    let band = opts.rigid_band.max(0.0);
    // reach of the displacement on the physical low / high side of the line
    let reach_lo = c_n - domain.min(na);
    let reach_hi = domain.max(na) - c_n;
    if phi_max > 0.0 {
        for reach in [reach_lo, reach_hi] {
            if !(phi_max < 0.5 * (reach - band)) {
                return Err(Error::UnsupportedGeometry(format!(
                    "profile amplitude {phi_max} does not fit between the rigid band {band} and the domain boundary"
                )));
            }
        }
    }
    let weight = |coord: f64| -> f64 {
        let d = coord - c_n;
        let reach = if d >= 0.0 { reach_hi } else { reach_lo };
        if d.abs() <= band {
            1.0
        } else {
            (1.0 - (d.abs() - band) / (reach - band)).max(0.0)
        }
    };

    let nt = tcoords.len();
    let nn = ncoords.len();
    let mut nodes = Vec::with_capacity(nt * nn);
    for &cn in &ncoords {
        let w = weight(cn);
        for &ct in &tcoords {
            let s = (ct - center[ta]) * tsign;
            let mut p = [0.0; 2];
            p[ta] = ct;
            p[na] = cn + nsign * interface.phi(s) * w;
            nodes.push(p);
        }
    }

    let k_line = ncoords
        .iter()
        .position(|&v| (v - c_n).abs() <= 1e-12 * scale.max(1.0))
        .expect("base line is a breakpoint");
    let i_lo = tcoords.iter().position(|&v| (v - t_lo).abs() <= tol).unwrap();
    let i_hi = tcoords.iter().position(|&v| (v - t_hi).abs() <= tol).unwrap();

    // copies for the physically upper side of the line; the original node
    // stays with the lower side
    let mut upper_copy: Vec<Option<usize>> = vec![None; nt];
    for i in i_lo..=i_hi {
        let is_tip = (i == i_lo && tip_lo) || (i == i_hi && tip_hi);
        if !is_tip {
            let orig = k_line * nt + i;
            upper_copy[i] = Some(nodes.len());
            nodes.push(nodes[orig]);
        }
    }
    let upper_is_plus = nsign > 0.0;

    let mut triangles = Vec::with_capacity(2 * (nt - 1) * (nn - 1));
    for k in 0..nn - 1 {
        let cell_is_upper = k >= k_line;
        for i in 0..nt - 1 {
            let node = |ii: usize, kk: usize| -> usize {
                if kk == k_line && cell_is_upper {
                    if let Some(c) = upper_copy[ii] {
                        return c;
                    }
                }
                kk * nt + ii
            };
            let a = node(i, k);
            let b = node(i + 1, k);
            let c = node(i + 1, k + 1);
            let d = node(i, k + 1);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    let mut edges = Vec::with_capacity(i_hi - i_lo);
    for i in i_lo..i_hi {
        let lower = [k_line * nt + i, k_line * nt + i + 1];
        let upper = [
            upper_copy[i].unwrap_or(lower[0]),
            upper_copy[i + 1].unwrap_or(lower[1]),
        ];
        let (mut plus, mut minus) = if upper_is_plus {
            (upper, lower)
        } else {
            (lower, upper)
        };
        let s_a = (tcoords[i] - center[ta]) * tsign;
        let s_b = (tcoords[i + 1] - center[ta]) * tsign;
        let mut arc = [interface.arc_at(s_a), interface.arc_at(s_b)];
        if arc[0] > arc[1] {
            arc.swap(0, 1);
            plus.swap(0, 1);
            minus.swap(0, 1);
        }
        let length = norm(sub(nodes[plus[1]], nodes[plus[0]]));
        edges.push(InterfaceEdge {
            plus,
            minus,
            arc,
            length,
        });
    }
    edges.sort_by(|a, b| a.arc[0].partial_cmp(&b.arc[0]).unwrap());

    InterfaceMesh::from_parts(nodes, triangles, edges, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_interface, InterfaceOptions, Profile, Segment};

    fn vertical_test_mode() -> (Domain, Interface) {
        let domain = Domain::new(-0.5, 0.5, 0.0, 1.0).unwrap();
        let iface = build_interface(
            Segment::new([0.0, 0.0], [0.0, 1.0]),
            Profile::Flat,
            InterfaceOptions {
                test_mode: true,
                ..Default::default()
            },
        )
        .unwrap();
        (domain, iface)
    }

    #[test]
    fn structured_counts_with_boundary_touching_interface() {
        let (domain, iface) = vertical_test_mode();
        let mesh = triangulate(&domain, &iface, 0.25).unwrap();
        // counting oracle: 5 x 5 grid vertices plus one extra copy for each of
        // the 5 interface vertices (no tips, both ends touch the boundary)
        let grid = 5 * 5;
        let interface_vertices = 5;
        assert_eq!(mesh.node_count(), grid + interface_vertices);
        assert_eq!(mesh.triangle_count(), 2 * 4 * 4);
        assert_eq!(mesh.edges().len(), 4);
        assert_eq!(mesh.tip_count(), 0);
        assert!(mesh.max_diameter() <= 2.0 * 0.25);
        for e in mesh.edges() {
            for k in 0..2 {
                assert_ne!(e.plus[k], e.minus[k]);
                assert_eq!(mesh.nodes()[e.plus[k]], mesh.nodes()[e.minus[k]]);
                // plus side is x > 0 for ν0 = (1, 0)
            }
        }
        for t in 0..mesh.triangle_count() {
            assert!(mesh.triangle_area(t) > 0.0);
            match mesh.side(t) {
                Some(Side::Plus) => assert!(mesh.centroid(t)[0] > 0.0),
                Some(Side::Minus) => assert!(mesh.centroid(t)[0] < 0.0),
                None => {}
            }
        }
    }

    #[test]
    fn no_triangle_mixes_sides() {
        let (domain, iface) = vertical_test_mode();
        let mesh = triangulate(&domain, &iface, 0.125).unwrap();
        let mut plus_nodes = std::collections::HashSet::new();
        let mut minus_nodes = std::collections::HashSet::new();
        for e in mesh.edges() {
            for k in 0..2 {
                plus_nodes.insert(e.plus[k]);
                minus_nodes.insert(e.minus[k]);
            }
        }
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let x = mesh.centroid(t)[0];
            for n in tri {
                if plus_nodes.contains(n) {
                    assert!(x > 0.0);
                }
                if minus_nodes.contains(n) {
                    assert!(x < 0.0);
                }
            }
        }
    }

    #[test]
    fn interior_interface_has_two_tips() {
        let domain = Domain::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let iface = build_interface(
            Segment::new([-0.5, 0.0], [0.5, 0.0]),
            Profile::Flat,
            InterfaceOptions::default(),
        )
        .unwrap();
        let mesh = triangulate(&domain, &iface, 0.125).unwrap();
        assert_eq!(mesh.tip_count(), 2);
        let grid = 17 * 17;
        let duplicated = 9 - 2;
        assert_eq!(mesh.node_count(), grid + duplicated);
        assert!((mesh.interface_length() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn refinement_quadruples_triangles() {
        let (domain, iface) = vertical_test_mode();
        let mut prev = triangulate(&domain, &iface, 0.25).unwrap().triangle_count();
        for h in [0.125, 0.0625, 0.03125] {
            let n = triangulate(&domain, &iface, h).unwrap().triangle_count();
            let ratio = n as f64 / prev as f64;
            assert!((ratio - 4.0).abs() <= 0.4, "ratio {ratio}");
            prev = n;
        }
    }

    #[test]
    fn curved_profile_is_conforming() {
        let domain = Domain::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let iface = build_interface(
            Segment::new([-0.5, 0.0], [0.5, 0.0]),
            Profile::from_fn(1.0, 33, |s| 0.05 * (std::f64::consts::PI * s).sin()),
            InterfaceOptions::default(),
        )
        .unwrap();
        let mesh = triangulate(&domain, &iface, 1.0 / 32.0).unwrap();
        for e in mesh.edges() {
            for k in 0..2 {
                let p = mesh.nodes()[e.plus[k]];
                assert!(iface.offset_of(p).abs() < 1e-12);
            }
        }
        for t in 0..mesh.triangle_count() {
            assert!(mesh.triangle_area(t) > 0.0);
        }
        assert!(mesh.max_diameter() <= 2.0 / 32.0);
    }

    #[test]
    fn tilted_interface_is_rejected() {
        let domain = Domain::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let iface = build_interface(
            Segment::new([-0.3, -0.3], [0.3, 0.3]),
            Profile::Flat,
            InterfaceOptions::default(),
        )
        .unwrap();
        assert!(matches!(
            triangulate(&domain, &iface, 0.1),
            Err(Error::UnsupportedGeometry(_))
        ));
    }

    #[test]
    fn interface_outside_domain_is_rejected() {
        let domain = Domain::new(-0.4, 0.4, -1.0, 1.0).unwrap();
        let iface = build_interface(
            Segment::new([-0.5, 0.0], [0.5, 0.0]),
            Profile::Flat,
            InterfaceOptions::default(),
        )
        .unwrap();
        assert!(matches!(
            triangulate(&domain, &iface, 0.1),
            Err(Error::InterfaceOutsideDomain(_))
        ));
    }
}
