//! Kernel densities, potentials and state spaces.

mod ck;
mod kernel;
mod potential;
mod space;
mod tabulated;

pub use ck::{ck_residual, CkReport};
pub use kernel::{forward_violations, KernelDensity, KernelFamily, KernelFn, SpatialProfile};
pub use potential::{Potential, PotentialFn, PotentialShape};
pub use space::{State, StateSpace};
pub use tabulated::TabulatedKernel;
