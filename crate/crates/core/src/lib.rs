//! Schrödinger perturbation series of forward space-time kernels.
//!
//! Given a kernel κ(s,x,t,y) and a potential q ≥ 0, the terms
//! k_n = ∫∫ k_{n-1} q κ are computed by singularity-aware quadrature and
//! checked against comparability bounds k̃ ≤ k₀·envelope(η, Q). Around that
//! sit 3P and Kato-class scans, the Weyl fractional-derivative identity and a
//! batch CLI ([`cli`]).
//!
//! Everything numerical is generic over [`scalar::Real`]. The aliases below
//! fix the scalar to `f64`; [`single`] has the same names for `f32`.

// `!(x > 0)` guards double as NaN rejection
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod kernels;
pub mod quadrature;
pub mod scalar;
pub mod special;
pub mod analysis;
pub mod series;
pub mod weyl;
pub mod cli;

pub use error::{Error, Result};

pub type KernelDensity = kernels::KernelDensity<f64>;
pub type Potential = kernels::Potential<f64>;
pub type StateSpace = kernels::StateSpace<f64>;
pub type State = kernels::State<f64>;
pub type SpaceTimeGrid = grid::SpaceTimeGrid<f64>;
pub type Quadrature = quadrature::Quadrature<f64>;
pub type SeriesEngine = series::SeriesEngine<f64>;
pub type SeriesTable = series::SeriesTable<f64>;
pub type ControlPair = analysis::ControlPair<f64>;
pub type Certificate = analysis::Certificate<f64>;
pub type TestFunction = weyl::TestFunction<f64>;

/// `f32` counterparts of the root aliases.
pub mod single {
    pub type KernelDensity = crate::kernels::KernelDensity<f32>;
    pub type Potential = crate::kernels::Potential<f32>;
    pub type StateSpace = crate::kernels::StateSpace<f32>;
    pub type State = crate::kernels::State<f32>;
    pub type SpaceTimeGrid = crate::grid::SpaceTimeGrid<f32>;
    pub type Quadrature = crate::quadrature::Quadrature<f32>;
    pub type SeriesEngine = crate::series::SeriesEngine<f32>;
    pub type SeriesTable = crate::series::SeriesTable<f32>;
    pub type ControlPair = crate::analysis::ControlPair<f32>;
    pub type Certificate = crate::analysis::Certificate<f32>;
    pub type TestFunction = crate::weyl::TestFunction<f32>;
}
