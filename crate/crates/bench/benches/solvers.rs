use std::f64::consts::LN_2;
use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use sievelab_bench::{bulk, datum, flat_interface, unit_mesh};
use sievelab_core::energy::{EnergyModel, InterfaceMeasure, Weight};
use sievelab_core::geometry::{Law, SieveSpec};
use sievelab_core::homogenize::{cell_table, CellSource, CellTableSpec, Window};
use sievelab_core::mesh::FieldSpace;
use sievelab_core::solve::{solve_global, Coupling, SolverOptions};

fn triangulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("triangulate");
    for k in [16usize, 32, 64] {
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| unit_mesh(black_box(1.0 / k as f64)))
        });
    }
    g.finish();
}

fn energy_gradient(c: &mut Criterion) {
    let mesh = unit_mesh(1.0 / 64.0);
    let coupling = Coupling::Measure(InterfaceMeasure::uniform(Weight::Finite(1.0)));
    let space = FieldSpace::new(Arc::clone(&mesh), coupling.pattern(&mesh)).unwrap();
    let lower = datum(2.0);
    let model = EnergyModel::from_pattern(&space, &bulk(3.0), Some(&lower));
    let u: Vec<f64> = (0..model.dof_count()).map(|i| (i as f64 * 0.37).sin()).collect();
    c.bench_function("value_and_gradient p=3 h=1/64", |b| {
        b.iter(|| model.value_and_gradient(black_box(&u)))
    });
}

fn global_solves(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_global");
    g.sample_size(10);
    let mesh = unit_mesh(1.0 / 32.0);
    let coupling = Coupling::Measure(InterfaceMeasure::uniform(Weight::Finite(2.0)));
    let lower = datum(2.0);
    let opts = SolverOptions::default();
    for p in [2.0, 3.0] {
        let bulk = bulk(p);
        g.bench_with_input(BenchmarkId::new("p", p), &p, |b, _| {
            b.iter(|| solve_global(&mesh, &coupling, &bulk, Some(&lower), &opts).unwrap())
        });
    }
    g.finish();
}

fn crack_cells(c: &mut Criterion) {
    let mut g = c.benchmark_group("cell_table");
    g.sample_size(10);
    let sieve = SieveSpec::CrackSieve {
        period: Law::exp(1.0, LN_2),
        gap: Law::exp(0.5, LN_2),
    };
    let spec = CellTableSpec {
        windows: vec![Window::new(0.0, 0.5), Window::new(0.5, 1.0)],
        rhos: vec![0.25, 0.125],
        js: vec![2, 3, 4],
        h: 1.0 / 32.0,
        tail: 3,
    };
    let iface = flat_interface();
    let source = CellSource::Sieve(sieve);
    let opts = SolverOptions::default();
    g.bench_function("crack 2x2x3 h=1/32", |b| {
        b.iter(|| cell_table(&iface, &source, &spec, &bulk(2.0), &opts).unwrap())
    });
    g.finish();
}

criterion_group!(benches, triangulation, energy_gradient, global_solves, crack_cells);
criterion_main!(benches);
