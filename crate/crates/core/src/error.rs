use thiserror::Error;

/// Errors raised while building geometry, meshes or solving.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),
    #[error("degenerate interface segment: endpoints coincide or are not finite")]
    DegenerateSegment,
    #[error("interface profile value {value} at sample {index} is outside (-{bound}, {bound})")]
    ProfileOutOfRange { index: usize, value: f64, bound: f64 },
    #[error("interface profile does not vanish at the segment center (value {0})")]
    ProfileNotCentered(f64),
    #[error("interface is not contained in the domain: {0}")]
    InterfaceOutsideDomain(String),
    #[error("strip half-thickness {rho} must lie in (0, {max})")]
    StripOutOfRange { rho: f64, max: f64 },
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("sieve index j must be at least 1")]
    InvalidIndex,
    #[error("gap width {gap} exceeds period {period} at j = {j}")]
    GapExceedsPeriod { j: usize, gap: f64, period: f64 },
    #[error("slab of half-thickness {half} leaves the cylinder of radius {radius}")]
    SlabOutsideCylinder { half: f64, radius: f64 },
    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),
    #[error("invalid mesh size h = {0}")]
    InvalidMeshSize(f64),
    #[error("not representable at resolution h = {h}: {what}")]
    Unresolvable { h: f64, what: String },
    #[error("snapping displacement {displacement} exceeds h/2 = {limit}")]
    SnapTooLarge { displacement: f64, limit: f64 },
    #[error("empty submesh: {0}")]
    EmptySubmesh(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid energy configuration: {0}")]
    InvalidConfig(String),
    #[error("jump on an arc carrying infinite weight (interface edge {edge})")]
    Infeasible { edge: usize },
    #[error("{solver} did not converge within {iterations} iterations (residual {residual:e})")]
    IterationCap {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("inner set touches the outer boundary")]
    InnerTouchesBoundary,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("mesh file parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
