//! Plain-text persistence of meshes, coupling patterns and fields.
//!
//! ```text
//! nodes N triangles T edges E h <h>
//! <id> <x> <y>                                   N lines
//! <id> <n1> <n2> <n3>                            T lines
//! <id> <p1> <p2> <m1> <m2> <s0> <s1> <len> <state>   E lines
//! removed R                                      optional
//! <triangle id>                                  R lines
//! ```
//!
//! Reals are written in scientific notation with 17 significant digits so
//! that reading a file back reproduces every value bit for bit. The edge
//! state is `tied`, `free`, `penalized:<weight>`, or `none` when no pattern
//! was attached.

use std::io::{BufRead, Write};

use super::{CouplingPattern, EdgeState, Field, FieldSpace, InterfaceEdge, InterfaceMesh};
use crate::error::{Error, Result};
use std::sync::Arc;

/// Formats a real with 17 significant digits.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn state_token(s: Option<EdgeState>) -> String {
    match s {
        None => "none".into(),
        Some(EdgeState::Tied) => "tied".into(),
        Some(EdgeState::Free) => "free".into(),
        Some(EdgeState::Penalized(w)) => format!("penalized:{}", real(w)),
    }
}

pub fn write_mesh<W: Write>(
    w: &mut W,
    mesh: &InterfaceMesh,
    pattern: Option<&CouplingPattern>,
) -> Result<()> {
    writeln!(
        w,
        "nodes {} triangles {} edges {} h {}",
        mesh.node_count(),
        mesh.triangle_count(),
        mesh.edges().len(),
        real(mesh.h())
    )?;
    for (i, p) in mesh.nodes().iter().enumerate() {
        writeln!(w, "{i} {} {}", real(p[0]), real(p[1]))?;
    }
    for (i, t) in mesh.triangles().iter().enumerate() {
        writeln!(w, "{i} {} {} {}", t[0], t[1], t[2])?;
    }
    for (i, e) in mesh.edges().iter().enumerate() {
        writeln!(
            w,
            "{i} {} {} {} {} {} {} {} {}",
            e.plus[0],
            e.plus[1],
            e.minus[0],
            e.minus[1],
            real(e.arc[0]),
            real(e.arc[1]),
            real(e.length),
            state_token(pattern.map(|p| p.state(i)))
        )?;
    }
    if let Some(p) = pattern {
        let removed: Vec<usize> = (0..mesh.triangle_count()).filter(|&t| p.is_removed(t)).collect();
        if !removed.is_empty() {
            writeln!(w, "removed {}", removed.len())?;
            for t in removed {
                writeln!(w, "{t}")?;
            }
        }
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<Option<String>> {
        match self.inner.next() {
            None => Ok(None),
            Some(l) => {
                self.line += 1;
                Ok(Some(l?))
            }
        }
    }

    fn expect(&mut self) -> Result<String> {
        self.next_line()?.ok_or_else(|| self.err("unexpected end of file"))
    }

    fn err(&self, message: &str) -> Error {
        Error::Parse {
            line: self.line,
            message: message.to_string(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, tok: Option<&str>) -> Result<T> {
        tok.and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err("malformed field"))
    }
}

fn parse_state<R: BufRead>(lines: &Lines<R>, tok: Option<&str>) -> Result<Option<EdgeState>> {
    match tok {
        Some("none") => Ok(None),
        Some("tied") => Ok(Some(EdgeState::Tied)),
        Some("free") => Ok(Some(EdgeState::Free)),
        Some(t) if t.starts_with("penalized:") => {
            let w: f64 = lines.parse(Some(&t["penalized:".len()..]))?;
            Ok(Some(EdgeState::Penalized(w)))
        }
        _ => Err(lines.err("unknown edge state")),
    }
}

/// Reads a mesh and, when every edge carries a state, its coupling pattern.
pub fn read_mesh<R: BufRead>(r: R) -> Result<(InterfaceMesh, Option<CouplingPattern>)> {
    let mut lines = Lines {
        inner: r.lines(),
        line: 0,
    };
    let header = lines.expect()?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 8 || tok[0] != "nodes" || tok[2] != "triangles" || tok[4] != "edges" || tok[6] != "h" {
        return Err(lines.err("bad header"));
    }
    let n: usize = lines.parse(Some(tok[1]))?;
    let t: usize = lines.parse(Some(tok[3]))?;
    let e: usize = lines.parse(Some(tok[5]))?;
    let h: f64 = lines.parse(Some(tok[7]))?;

    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let l = lines.expect()?;
        let mut it = l.split_whitespace();
        let id: usize = lines.parse(it.next())?;
        if id != i {
            return Err(lines.err("node ids must be consecutive"));
        }
        nodes.push([lines.parse(it.next())?, lines.parse(it.next())?]);
    }
    let mut triangles = Vec::with_capacity(t);
    for i in 0..t {
        let l = lines.expect()?;
        let mut it = l.split_whitespace();
        let id: usize = lines.parse(it.next())?;
        if id != i {
            return Err(lines.err("triangle ids must be consecutive"));
        }
        triangles.push([
            lines.parse(it.next())?,
            lines.parse(it.next())?,
            lines.parse(it.next())?,
        ]);
    }
    let mut edges = Vec::with_capacity(e);
    let mut states = Vec::with_capacity(e);
    for i in 0..e {
        let l = lines.expect()?;
        let mut it = l.split_whitespace();
        let id: usize = lines.parse(it.next())?;
        if id != i {
            return Err(lines.err("edge ids must be consecutive"));
        }
        let plus = [lines.parse(it.next())?, lines.parse(it.next())?];
        let minus = [lines.parse(it.next())?, lines.parse(it.next())?];
        let arc = [lines.parse(it.next())?, lines.parse(it.next())?];
        let length = lines.parse(it.next())?;
        states.push(parse_state(&lines, it.next())?);
        edges.push(InterfaceEdge {
            plus,
            minus,
            arc,
            length,
        });
    }
    let mut removed = vec![false; t];
    if let Some(l) = lines.next_line()? {
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() != 2 || tok[0] != "removed" {
            return Err(lines.err("expected removed section"));
        }
        let r: usize = lines.parse(Some(tok[1]))?;
        for _ in 0..r {
            let l = lines.expect()?;
            let id: usize = lines.parse(Some(l.trim()))?;
            if id >= t {
                return Err(lines.err("removed triangle out of range"));
            }
            removed[id] = true;
        }
    }
    let mesh = InterfaceMesh::from_parts(nodes, triangles, edges, h)?;
    let pattern = if e > 0 && states.iter().all(|s| s.is_some()) {
        let states = states.into_iter().map(|s| s.unwrap()).collect();
        Some(CouplingPattern::from_states(&mesh, states)?.with_removed(removed))
    } else if e == 0 && removed.iter().any(|&r| r) {
        Some(CouplingPattern::uniform(&mesh, EdgeState::Tied).with_removed(removed))
    } else {
        None
    };
    Ok((mesh, pattern))
}

/// Writes `field <name> N` followed by one `node value` line per node that
/// carries a coefficient.
pub fn write_field<W: Write>(w: &mut W, name: &str, field: &Field) -> Result<()> {
    let mesh = field.space().mesh();
    let values: Vec<(usize, f64)> = (0..mesh.node_count())
        .filter_map(|v| field.node_value(v).map(|x| (v, x)))
        .collect();
    writeln!(w, "field {name} {}", values.len())?;
    for (v, x) in values {
        writeln!(w, "{v} {}", real(x))?;
    }
    Ok(())
}

pub fn read_field<R: BufRead>(r: R, space: &Arc<FieldSpace>) -> Result<(String, Field)> {
    let mut lines = Lines {
        inner: r.lines(),
        line: 0,
    };
    let header = lines.expect()?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 3 || tok[0] != "field" {
        return Err(lines.err("bad field header"));
    }
    let name = tok[1].to_string();
    let n: usize = lines.parse(Some(tok[2]))?;
    let mut coeffs = vec![f64::NAN; space.dof_count()];
    for _ in 0..n {
        let l = lines.expect()?;
        let mut it = l.split_whitespace();
        let v: usize = lines.parse(it.next())?;
        let x: f64 = lines.parse(it.next())?;
        let d = (v < space.mesh().node_count())
            .then(|| space.node_dof(v))
            .flatten()
            .ok_or_else(|| lines.err("node carries no coefficient"))?;
        if !coeffs[d].is_nan() && coeffs[d].to_bits() != x.to_bits() {
            return Err(lines.err("tied nodes disagree"));
        }
        coeffs[d] = x;
    }
    if coeffs.iter().any(|c| c.is_nan()) {
        return Err(lines.err("missing coefficients"));
    }
    Ok((name, Field::from_coeffs(space, coeffs)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::*;
    use crate::mesh::{apply_sieve, triangulate};
    use proptest::prelude::*;

    fn mesh(amplitude: f64) -> (Interface, InterfaceMesh) {
        let domain = Domain::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let iface = build_interface(
            Segment::new([-0.5, 0.0], [0.5, 0.0]),
            Profile::from_fn(1.0, 9, |s| amplitude * (std::f64::consts::PI * s).sin()),
            InterfaceOptions::default(),
        )
        .unwrap();
        let m = triangulate(&domain, &iface, 0.1).unwrap();
        (iface, m)
    }

    #[test]
    fn slab_pattern_roundtrip() {
        let (iface, m) = mesh(0.03);
        let spec = SieveSpec::PerforatedSlab {
            thickness: Law::constant(0.2),
            period: Law::constant(0.3),
            hole: Law::constant(0.1),
        };
        let p = apply_sieve(&m, &sieve_at(&iface, &spec, 1).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_mesh(&mut buf, &m, Some(&p)).unwrap();
        let (m2, p2) = read_mesh(buf.as_slice()).unwrap();
        assert_eq!(m2, m);
        assert_eq!(p2.as_ref(), Some(&p));
        let mut again = Vec::new();
        write_mesh(&mut again, &m2, p2.as_ref()).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn bad_header_is_a_parse_error() {
        assert!(matches!(
            read_mesh("nodes 1 tri 0".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn mesh_and_field_roundtrip_bit_exact(
            amplitude in -0.1f64..0.1,
            weights in proptest::collection::vec(1e-3f64..1e3, 1..4),
            seed in any::<u64>(),
        ) {
            let (_, m) = mesh(amplitude);
            let m = Arc::new(m);
            let states: Vec<EdgeState> = (0..m.edges().len())
                .map(|i| match (i + seed as usize) % 3 {
                    0 => EdgeState::Tied,
                    1 => EdgeState::Free,
                    _ => EdgeState::Penalized(weights[i % weights.len()] * std::f64::consts::PI),
                })
                .collect();
            let p = CouplingPattern::from_states(&m, states).unwrap();
            let mut buf = Vec::new();
            write_mesh(&mut buf, &m, Some(&p)).unwrap();
            let (m2, p2) = read_mesh(buf.as_slice()).unwrap();
            prop_assert_eq!(&m2, m.as_ref());
            prop_assert_eq!(p2.as_ref(), Some(&p));

            let space = FieldSpace::new(m.clone(), p).unwrap();
            let u = Field::from_fn(&space, |v, q| ((v as u64 ^ seed) as f64 * 1e-3).sin() * q[0].exp());
            let mut fb = Vec::new();
            write_field(&mut fb, "u", &u).unwrap();
            let (name, u2) = read_field(fb.as_slice(), &space).unwrap();
            prop_assert_eq!(name, "u");
            for (a, b) in u.coeffs().iter().zip(u2.coeffs()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
