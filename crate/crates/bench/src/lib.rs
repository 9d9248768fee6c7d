//! Shared fixtures for the sievelab benchmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use sievelab_core::energy::{BulkConfig, Datum, LowerOrderConfig};
use sievelab_core::geometry::{build_interface, Domain, Interface, InterfaceOptions, Profile, Segment};
use sievelab_core::mesh::{triangulate, InterfaceMesh};

/// The unit segment on the x axis, in test mode.
pub fn flat_interface() -> Interface {
    build_interface(
        Segment::new([0.0, 0.0], [1.0, 0.0]),
        Profile::Flat,
        InterfaceOptions {
            test_mode: true,
            ..Default::default()
        },
    )
    .expect("flat interface")
}

/// `[0,1] x [-1/2,1/2]` cut by [`flat_interface`].
pub fn unit_mesh(h: f64) -> Arc<InterfaceMesh> {
    let d = Domain::new(0.0, 1.0, -0.5, 0.5).expect("domain");
    Arc::new(triangulate(&d, &flat_interface(), h).expect("mesh"))
}

pub fn bulk(p: f64) -> BulkConfig {
    BulkConfig::isotropic(p).expect("bulk")
}

/// A smooth datum on the upper half, zero below.
pub fn datum(q: f64) -> LowerOrderConfig {
    LowerOrderConfig::new(
        q,
        Datum::function(|x| if x[1] > 0.0 { 1.0 + 0.5 * (PI * x[0]).cos() } else { 0.0 }),
    )
    .expect("datum")
}
