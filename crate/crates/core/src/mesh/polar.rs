use std::f64::consts::TAU;

use super::{check_h, InterfaceMesh};
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Polar mesh together with the node indices on its inner and outer circles.
#[derive(Debug, Clone)]
pub struct PolarMesh {
    pub mesh: InterfaceMesh,
    pub inner: Vec<usize>,
    pub outer: Vec<usize>,
}

/// Ring radii from `r_in` to `r_out`: each step is at most `h` and at most
/// the sector arc angle times the current radius.
fn radii(r_in: f64, r_out: f64, sectors: usize, h: f64) -> Vec<f64> {
    let dtheta = TAU / sectors as f64;
    let mut r = vec![r_in];
    let mut cur = r_in;
    while cur < r_out {
        let step = h.min(cur * dtheta).max(1e-3 * h);
        cur += step;
        r.push(cur);
    }
    // stretch so the last ring lands on r_out exactly
    let last = *r.last().unwrap();
    if r.len() > 2 {
        let excess = last - r_out;
        let n = r.len() - 1;
        for (k, v) in r.iter_mut().enumerate() {
            *v -= excess * k as f64 / n as f64;
        }
    }
    *r.last_mut().unwrap() = r_out;
    r
}

fn ring(center: Point, r: f64, sectors: usize) -> impl Iterator<Item = Point> {
    (0..sectors).map(move |i| {
        let t = TAU * i as f64 / sectors as f64;
        [center[0] + r * t.cos(), center[1] + r * t.sin()]
    })
}

fn check(sectors: usize, h: f64) -> Result<()> {
    check_h(h)?;
    if sectors < 3 {
        return Err(Error::InvalidConfig(format!(
            "a polar mesh needs at least 3 sectors, got {sectors}"
        )));
    }
    Ok(())
}

/// Mesh of the annulus `r_in < |x - center| < r_out`.
pub fn annulus_mesh(
    center: Point,
    r_in: f64,
    r_out: f64,
    sectors: usize,
    h: f64,
) -> Result<PolarMesh> {
    check(sectors, h)?;
    if !(r_in > 0.0 && r_out > r_in) {
        return Err(Error::InnerTouchesBoundary);
    }
    let rs = radii(r_in, r_out, sectors, h);
    let mut nodes = Vec::with_capacity(rs.len() * sectors);
    for &r in &rs {
        nodes.extend(ring(center, r, sectors));
    }
    let mut triangles = Vec::with_capacity(2 * (rs.len() - 1) * sectors);
    for k in 0..rs.len() - 1 {
        for i in 0..sectors {
            let j = (i + 1) % sectors;
            let a = k * sectors + i;
            let b = k * sectors + j;
            let c = (k + 1) * sectors + j;
            let d = (k + 1) * sectors + i;
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let n = rs.len();
    Ok(PolarMesh {
        mesh: InterfaceMesh::from_parts(nodes, triangles, Vec::new(), h)?,
        inner: (0..sectors).collect(),
        outer: ((n - 1) * sectors..n * sectors).collect(),
    })
}

/// Mesh of the disk `|x - center| < radius`; `inner` holds the center node.
pub fn disk_mesh(center: Point, radius: f64, sectors: usize, h: f64) -> Result<PolarMesh> {
    check(sectors, h)?;
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig(format!("disk radius {radius}")));
    }
    let core = (radius * TAU / sectors as f64).min(h).min(radius);
    let mut mesh = annulus_mesh(center, core.min(0.5 * radius), radius, sectors, h)?;
    let c = mesh.mesh.node_count();
    let mut nodes = mesh.mesh.nodes().to_vec();
    nodes.push(center);
    let mut triangles = mesh.mesh.triangles().to_vec();
    for i in 0..sectors {
        triangles.push([c, i, (i + 1) % sectors]);
    }
    mesh.mesh = InterfaceMesh::from_parts(nodes, triangles, Vec::new(), h)?;
    mesh.inner = vec![c];
    Ok(mesh)
}
