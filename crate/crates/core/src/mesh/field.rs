use std::sync::Arc;

use super::{CouplingPattern, EdgeState, InterfaceMesh};
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Degree-of-freedom layout of first-order fields on a mesh under a
/// coupling pattern. Tied node pairs share one coefficient; nodes that only
/// belong to removed triangles carry none.
#[derive(Debug, Clone)]
pub struct FieldSpace {
    mesh: Arc<InterfaceMesh>,
    pattern: CouplingPattern,
    node_dof: Vec<Option<usize>>,
    n_dofs: usize,
    active: Vec<usize>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl FieldSpace {
    pub fn new(mesh: Arc<InterfaceMesh>, pattern: CouplingPattern) -> Result<Arc<Self>> {
        if pattern.states().len() != mesh.edges().len()
            || pattern.removed().len() != mesh.triangle_count()
        {
            return Err(Error::InvalidConfig(
                "coupling pattern does not match the mesh".into(),
            ));
        }
        let n = mesh.node_count();
        let mut parent: Vec<usize> = (0..n).collect();
        for (e, s) in mesh.edges().iter().zip(pattern.states()) {
            if *s == EdgeState::Tied {
                for k in 0..2 {
                    let (a, b) = (find(&mut parent, e.plus[k]), find(&mut parent, e.minus[k]));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let active: Vec<usize> = (0..mesh.triangle_count())
            .filter(|&t| !pattern.is_removed(t))
            .collect();
        let mut used = vec![false; n];
        for &t in &active {
            for &v in &mesh.triangles()[t] {
                used[v] = true;
            }
        }
        let mut group_used = vec![false; n];
        for v in 0..n {
            if used[v] {
                let r = find(&mut parent, v);
                group_used[r] = true;
            }
        }
        let mut root_dof: Vec<Option<usize>> = vec![None; n];
        let mut node_dof = vec![None; n];
        let mut n_dofs = 0;
        for v in 0..n {
            let r = find(&mut parent, v);
            if !group_used[r] {
                continue;
            }
            let d = *root_dof[r].get_or_insert_with(|| {
                n_dofs += 1;
                n_dofs - 1
            });
            node_dof[v] = Some(d);
        }
        Ok(Arc::new(Self {
            mesh,
            pattern,
            node_dof,
            n_dofs,
            active,
        }))
    }

    pub fn mesh(&self) -> &Arc<InterfaceMesh> {
        &self.mesh
    }

    pub fn pattern(&self) -> &CouplingPattern {
        &self.pattern
    }

    pub fn dof_count(&self) -> usize {
        self.n_dofs
    }

    pub fn node_dof(&self, node: usize) -> Option<usize> {
        self.node_dof[node]
    }

    pub fn active_triangles(&self) -> &[usize] {
        &self.active
    }

    pub fn active_node_count(&self) -> usize {
        self.node_dof.iter().filter(|d| d.is_some()).count()
    }
}

/// Nodal coefficient vector over a [`FieldSpace`].
#[derive(Debug, Clone)]
pub struct Field {
    space: Arc<FieldSpace>,
    coeffs: Vec<f64>,
}

impl Field {
    pub fn zeros(space: &Arc<FieldSpace>) -> Self {
        Self {
            space: Arc::clone(space),
            coeffs: vec![0.0; space.dof_count()],
        }
    }

    pub fn from_coeffs(space: &Arc<FieldSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dof_count() {
            return Err(Error::InvalidConfig(format!(
                "{} coefficients for {} degrees of freedom",
                coeffs.len(),
                space.dof_count()
            )));
        }
        Ok(Self {
            space: Arc::clone(space),
            coeffs,
        })
    }

    /// Samples `f(node, position)`; for shared coefficients the lowest node
    /// index wins.
    pub fn from_fn(space: &Arc<FieldSpace>, f: impl Fn(usize, Point) -> f64) -> Self {
        let mut coeffs = vec![f64::NAN; space.dof_count()];
        for (v, &p) in space.mesh.nodes().iter().enumerate() {
            if let Some(d) = space.node_dof[v] {
                if coeffs[d].is_nan() {
                    coeffs[d] = f(v, p);
                }
            }
        }
        Self {
            space: Arc::clone(space),
            coeffs,
        }
    }

    pub fn space(&self) -> &Arc<FieldSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn node_value(&self, node: usize) -> Option<f64> {
        self.space.node_dof[node].map(|d| self.coeffs[d])
    }

    /// Applies `f` to every coefficient.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().map(|&c| f(c)).collect(),
        }
    }

    pub fn clamp(&self, t: f64) -> Self {
        self.map(|c| c.clamp(-t, t))
    }
}

/// Nodewise `|u+ - u-|` at both ends of every interface edge. Tied edges
/// report exactly zero; a node without a coefficient counts as zero.
pub fn jump_of(field: &Field) -> Vec<[f64; 2]> {
    let space = &field.space;
    space
        .mesh
        .edges()
        .iter()
        .map(|e| {
            let mut out = [0.0; 2];
            for k in 0..2 {
                let (dp, dm) = (space.node_dof[e.plus[k]], space.node_dof[e.minus[k]]);
                out[k] = match (dp, dm) {
                    (Some(a), Some(b)) if a != b => (field.coeffs[a] - field.coeffs[b]).abs(),
                    _ => 0.0,
                };
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::*;
    use crate::mesh::{triangulate, EdgeState};

    fn mesh() -> Arc<InterfaceMesh> {
        let domain = Domain::new(-1.0, 1.0, -0.2, 0.8).unwrap();
        let iface = build_interface(
            Segment::new([-1.0, 0.3], [1.0, 0.3]),
            Profile::Flat,
            InterfaceOptions {
                test_mode: true,
                ..Default::default()
            },
        )
        .unwrap();
        Arc::new(triangulate(&domain, &iface, 0.125).unwrap())
    }

    #[test]
    fn dof_counts() {
        let m = mesh();
        let tied = FieldSpace::new(m.clone(), CouplingPattern::uniform(&m, EdgeState::Tied)).unwrap();
        let free = FieldSpace::new(m.clone(), CouplingPattern::uniform(&m, EdgeState::Free)).unwrap();
        let dup = m.edges().len() + 1;
        assert_eq!(tied.dof_count(), m.node_count() - dup);
        assert_eq!(free.dof_count(), m.node_count());
    }

    #[test]
    fn constant_field_has_no_jump() {
        let m = mesh();
        let s = FieldSpace::new(m.clone(), CouplingPattern::uniform(&m, EdgeState::Free)).unwrap();
        let u = Field::from_fn(&s, |_, _| 2.5);
        assert!(jump_of(&u).iter().all(|j| j == &[0.0, 0.0]));
    }

    #[test]
    fn indicator_jump_is_one() {
        let m = mesh();
        let s = FieldSpace::new(m.clone(), CouplingPattern::uniform(&m, EdgeState::Free)).unwrap();
        let plus: std::collections::HashSet<usize> =
            m.edges().iter().flat_map(|e| e.plus).collect();
        let u = Field::from_fn(&s, |v, p| {
            if p[1] > 0.3 + 1e-12 || (plus.contains(&v)) {
                1.0
            } else {
                0.0
            }
        });
        assert!(jump_of(&u).iter().all(|j| j == &[1.0, 1.0]));
    }

    #[test]
    fn odd_linear_field_jump() {
        let m = mesh();
        let s = FieldSpace::new(m.clone(), CouplingPattern::uniform(&m, EdgeState::Free)).unwrap();
        let plus: std::collections::HashSet<usize> =
            m.edges().iter().flat_map(|e| e.plus).collect();
        let minus: std::collections::HashSet<usize> =
            m.edges().iter().flat_map(|e| e.minus).collect();
        let u = Field::from_fn(&s, |v, p| {
            let above = plus.contains(&v) || (!minus.contains(&v) && p[1] > 0.3);
            if above {
                p[1]
            } else {
                -p[1]
            }
        });
        // pointwise: y - (-y) = 0.6 at y = 0.3
        for j in jump_of(&u) {
            assert!((j[0] - 0.6).abs() < 1e-15 && (j[1] - 0.6).abs() < 1e-15);
        }
    }

    #[test]
    fn tied_edges_report_exact_zero() {
        let m = mesh();
        let s = FieldSpace::new(m.clone(), CouplingPattern::uniform(&m, EdgeState::Tied)).unwrap();
        let u = Field::from_fn(&s, |v, p| (v as f64).sin() + p[0]);
        assert!(jump_of(&u).iter().all(|j| j == &[0.0, 0.0]));
    }
}
