use std::sync::Arc;

use super::{InterfaceEdge, InterfaceMesh};
use crate::error::{Error, Result};
use crate::geometry::StripRegion;

/// Boundary role of a cell-mesh node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeTag {
    None,
    /// On the upper offset curve: value 1.
    DirichletOne,
    /// On the lower offset curve: value 0.
    DirichletZero,
}

/// Submesh of the strip `S_ρ` with its essential-boundary tags.
#[derive(Debug, Clone)]
pub struct CellMesh {
    pub mesh: Arc<InterfaceMesh>,
    pub tags: Vec<NodeTag>,
    /// Signed offset of every node from the interface along `ν0`.
    pub offsets: Vec<f64>,
    pub rho: f64,
}

impl CellMesh {
    pub fn count(&self, tag: NodeTag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }
}

pub fn restrict_to_strip(mesh: &InterfaceMesh, strip: &StripRegion) -> Result<CellMesh> {
    let iface = strip.interface();
    let rho = strip.rho();
    let r0 = iface.cylinder_radius();
    let tol = 1e-9 * rho;
    let keep: Vec<usize> = (0..mesh.triangle_count())
        .filter(|&t| {
            let c = mesh.centroid(t);
            let (s, _) = iface.local(c);
            iface.offset_of(c).abs() < rho && s.abs() < r0
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptySubmesh(format!(
            "no triangle lies inside the strip of half-thickness {rho}"
        )));
    }
    let mut map = vec![usize::MAX; mesh.node_count()];
    let mut nodes = Vec::new();
    let mut used = vec![false; mesh.node_count()];
    for &t in &keep {
        for &v in &mesh.triangles()[t] {
            used[v] = true;
        }
    }
    for (v, &u) in used.iter().enumerate() {
        if u {
            map[v] = nodes.len();
            nodes.push(mesh.nodes()[v]);
        }
    }
    let mut tags = Vec::with_capacity(nodes.len());
    let mut offsets = Vec::with_capacity(nodes.len());
    for &p in &nodes {
        let off = iface.offset_of(p);
        offsets.push(off);
        if off.abs() > rho + tol {
            return Err(Error::Unresolvable {
                h: mesh.h(),
                what: format!("strip offsets at ±{rho} are not mesh lines"),
            });
        }
        tags.push(if (off - rho).abs() <= tol {
            NodeTag::DirichletOne
        } else if (off + rho).abs() <= tol {
            NodeTag::DirichletZero
        } else {
            NodeTag::None
        });
    }
    if !tags.contains(&NodeTag::DirichletOne) || !tags.contains(&NodeTag::DirichletZero) {
        return Err(Error::Unresolvable {
            h: mesh.h(),
            what: format!("strip offsets at ±{rho} carry no mesh nodes"),
        });
    }
    let triangles = keep
        .iter()
        .map(|&t| mesh.triangles()[t].map(|v| map[v]))
        .collect();
    let edges = mesh
        .edges()
        .iter()
        .filter(|e| e.plus.iter().chain(&e.minus).all(|&v| map[v] != usize::MAX))
        .map(|e| InterfaceEdge {
            plus: e.plus.map(|v| map[v]),
            minus: e.minus.map(|v| map[v]),
            ..*e
        })
        .collect();
    let sub = InterfaceMesh::from_parts(nodes, triangles, edges, mesh.h())?;
    Ok(CellMesh {
        mesh: Arc::new(sub),
        tags,
        offsets,
        rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::*;
    use crate::mesh::{triangulate, triangulate_with, MeshOptions};

    fn flat() -> (Domain, Interface) {
        let domain = Domain::new(-0.5, 0.5, -0.5, 0.5).unwrap();
        let iface = build_interface(
            Segment::new([-0.5, 0.0], [0.5, 0.0]),
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
    fn two_h_strip_has_four_rows() {
        let (domain, iface) = flat();
        let h = 1.0 / 16.0;
        let mesh = triangulate(&domain, &iface, h).unwrap();
        let cell = restrict_to_strip(&mesh, &strip(&iface, 2.0 * h).unwrap()).unwrap();
        let columns = 16;
        assert_eq!(cell.mesh.triangle_count(), 2 * columns * 4);
        assert_eq!(cell.count(NodeTag::DirichletOne), columns + 1);
        assert_eq!(cell.count(NodeTag::DirichletZero), columns + 1);
        assert_eq!(cell.mesh.edges().len(), columns);
    }

    #[test]
    fn sub_row_strip_is_rejected() {
        let (domain, iface) = flat();
        let mesh = triangulate(&domain, &iface, 0.125).unwrap();
        assert!(restrict_to_strip(&mesh, &strip(&iface, 0.05).unwrap()).is_err());
        assert!(restrict_to_strip(&mesh, &strip(&iface, 0.3).unwrap()).is_err());
    }

    #[test]
    fn tags_sit_on_offset_curves_only() {
        let domain = Domain::new(-0.5, 0.5, -0.5, 0.5).unwrap();
        let iface = build_interface(
            Segment::new([-0.5, 0.0], [0.5, 0.0]),
            Profile::from_fn(1.0, 17, |s| 0.04 * (std::f64::consts::PI * s).sin()),
            InterfaceOptions {
                test_mode: true,
                ..Default::default()
            },
        )
        .unwrap();
        let rho = 0.15;
        let opts = MeshOptions {
            h: 1.0 / 40.0,
            normal_lines: vec![rho, -rho],
            rigid_band: rho,
            clip_interface: true,
        };
        let mesh = triangulate_with(&domain, &iface, &opts).unwrap();
        let cell = restrict_to_strip(&mesh, &strip(&iface, rho).unwrap()).unwrap();
        for (p, tag) in cell.mesh.nodes().iter().zip(&cell.tags) {
            let off = iface.offset_of(*p);
            match tag {
                NodeTag::DirichletOne => assert!((off - rho).abs() < 1e-12),
                NodeTag::DirichletZero => assert!((off + rho).abs() < 1e-12),
                NodeTag::None => assert!(off.abs() < rho - 1e-12),
            }
        }
    }
}
