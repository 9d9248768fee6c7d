use std::f64::consts::TAU;
use std::sync::Arc;

use sievelab_core::energy::*;
use sievelab_core::geometry::*;
use sievelab_core::mesh::*;
use sievelab_core::solve::*;

fn slab_mesh(h: f64) -> Arc<InterfaceMesh> {
    let d = Domain::new(-1.0, 1.0, 0.0, 1.0).unwrap();
    let iface = build_interface(
        Segment::new([0.0, 0.0], [0.0, 1.0]),
        Profile::Flat,
        InterfaceOptions {
            test_mode: true,
            ..Default::default()
        },
    )
    .unwrap();
    Arc::new(triangulate(&d, &iface, h).unwrap())
}

fn step() -> LowerOrderConfig {
    LowerOrderConfig::new(2.0, Datum::function(|p| if p[0] > 0.0 { 1.0 } else { 0.0 })).unwrap()
}

fn mean_jump(field: &Field) -> f64 {
    let j = jump_of(field);
    j.iter().map(|v| 0.5 * (v[0] + v[1])).sum::<f64>() / j.len() as f64
}

#[test]
fn transmission_jump_follows_ode_solution() {
    let mesh = slab_mesh(1.0 / 64.0);
    let (c, s) = (1f64.cosh(), 1f64.sinh());
    for theta in [0.5, 1.0, 4.0] {
        let coupling = Coupling::Measure(InterfaceMeasure::uniform(Weight::Finite(theta)));
        let sol = solve_global(&mesh, &coupling, &BulkConfig::isotropic(2.0).unwrap(), Some(&step()), &SolverOptions::default()).unwrap();
        let exact = s / (2.0 * theta * c + s);
        assert!((mean_jump(&sol.field) - exact).abs() < 1e-4, "θ = {theta}");
    }
}

/// On the left half `-u'' + u = 0`, so `∫_{x<0} u = u'(0-) = θ [u]`.
#[test]
fn flux_balance_matches_jump() {
    let mesh = slab_mesh(1.0 / 64.0);
    let theta = 2.0;
    let coupling = Coupling::Measure(InterfaceMeasure::uniform(Weight::Finite(theta)));
    let sol = solve_global(&mesh, &coupling, &BulkConfig::isotropic(2.0).unwrap(), Some(&step()), &SolverOptions::default()).unwrap();
    let mut left = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if mesh.centroid(t)[0] < 0.0 {
            let avg: f64 = tri.iter().map(|&v| sol.field.node_value(v).unwrap()).sum::<f64>() / 3.0;
            left += mesh.triangle_area(t) * avg;
        }
    }
    assert!((left - theta * mean_jump(&sol.field)).abs() < 1e-3);
}

#[test]
fn decoupled_halves_solve_separately() {
    let mesh = slab_mesh(1.0 / 32.0);
    let coupling = Coupling::Measure(InterfaceMeasure::uniform(Weight::Zero));
    let sol = solve_global(&mesh, &coupling, &BulkConfig::isotropic(2.0).unwrap(), Some(&step()), &SolverOptions::default()).unwrap();
    assert!(sol.value.abs() < 1e-12);
    assert!((mean_jump(&sol.field) - 1.0).abs() < 1e-10);
}

fn p_capacity(p: f64, r: f64, big_r: f64) -> f64 {
    let a = (p - 2.0) / (p - 1.0);
    TAU * a.powf(p - 1.0) / (big_r.powf(a) - r.powf(a)).powf(p - 1.0)
}

#[test]
fn annulus_p_capacity() {
    let outer = Region::Disk {
        center: [0.0, 0.0],
        radius: 1.0,
    };
    let inner = Region::Disk {
        center: [0.0, 0.0],
        radius: 0.1,
    };
    let mesh = CapacityMesh {
        h: 1.0 / 32.0,
        sectors: 96,
    };
    let c = capacity(&outer, &inner, 3.0, mesh, &SolverOptions::default()).unwrap();
    let exact = p_capacity(3.0, 0.1, 1.0);
    assert!(c.conforming);
    assert!((c.value - exact).abs() / exact < 0.03, "{} vs {exact}", c.value);
}

#[test]
fn off_center_condenser_is_bounded_by_enclosing_annuli() {
    let outer = Region::Disk {
        center: [0.0, 0.0],
        radius: 1.0,
    };
    let inner = Region::Disk {
        center: [0.3, 0.0],
        radius: 0.2,
    };
    let mesh = CapacityMesh {
        h: 1.0 / 32.0,
        sectors: 128,
    };
    let c = capacity(&outer, &inner, 2.0, mesh, &SolverOptions::default()).unwrap();
    assert!(!c.conforming);
    // B(0.3, 0.2) ⊂ B(0, 0.5) and B(0, 1) ⊂ B((0.3, 0), 1.3)
    let lower = TAU / (1.3f64 / 0.2).ln();
    let upper = TAU / (1.0f64 / 0.5).ln();
    assert!(c.value > lower && c.value < upper, "{}", c.value);
}
