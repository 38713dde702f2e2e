//! Meshless solver for 2D linear-elastic fracture problems.
//!
//! A small residual network per displacement component is trained by
//! minimizing the total potential energy on a trapezoid quadrature grid.
//! Cracks and material interfaces enter as extra network inputs built from
//! signed distance functions, so the trial function inherits the right jump
//! (strong) or derivative-kink (weak) structure without domain
//! decomposition. Post-processing extracts stress intensity factors by
//! displacement extrapolation and drives quasi-static crack growth with the
//! maximum circumferential stress criterion.

pub mod autodiff;
pub mod elasticity;
pub mod expr;
pub mod field;
pub mod geometry;
pub mod network;
pub mod optimizer;
pub mod quadrature;
pub mod scalar;
pub mod scenario;
pub mod snapshot;

pub use scalar::Scalar;

/// Default precision used by the CLI and the shipped presets.
pub type Real = f64;

/// Crate-wide error; module errors surface with a module-qualified message.
#[derive(Debug)]
pub enum Error {
    Expr(expr::ExprError),
    Geometry(geometry::GeometryError),
    Ad(autodiff::AdError),
    Quad(quadrature::QuadError),
    Field(field::FieldError),
    Scenario(scenario::ScenarioError),
    Io(std::io::Error),
    Invalid(String),
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::Expr(e) => write!(f, "expr: {e}"),
            Error::Geometry(e) => write!(f, "geometry: {e}"),
            Error::Ad(e) => write!(f, "autodiff: {e}"),
            Error::Quad(e) => write!(f, "quadrature: {e}"),
            Error::Field(e) => write!(f, "field: {e}"),
            Error::Scenario(e) => write!(f, "scenario: {e}"),
            Error::Io(e) => write!(f, "io: {e}"),
            Error::Invalid(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<expr::ExprError> for Error {
    fn from(e: expr::ExprError) -> Self {
        Error::Expr(e)
    }
}

impl From<geometry::GeometryError> for Error {
    fn from(e: geometry::GeometryError) -> Self {
        Error::Geometry(e)
    }
}

impl From<autodiff::AdError> for Error {
    fn from(e: autodiff::AdError) -> Self {
        Error::Ad(e)
    }
}

impl From<quadrature::QuadError> for Error {
    fn from(e: quadrature::QuadError) -> Self {
        Error::Quad(e)
    }
}

impl From<field::FieldError> for Error {
    fn from(e: field::FieldError) -> Self {
        Error::Field(e)
    }
}

impl From<scenario::ScenarioError> for Error {
    fn from(e: scenario::ScenarioError) -> Self {
        Error::Scenario(e)
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
