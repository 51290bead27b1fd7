//! Discrete-time Cucker-Smale flocking with independent random link failures.
//!
//! The numerical core ([`dynamics`], [`spectral`], [`analysis`]) is generic over
//! the floating point type through [`Scalar`]; the experiment harness and the
//! file formats work in `f64`. Aliases for the common concrete types live at the
//! crate root.

pub mod analysis;
pub mod check;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod io;
pub mod matrix;
pub mod scalar;
pub mod spectral;
pub mod verify;

pub use check::Inequality;
pub use dynamics::{FailureMask, FlockState, ModelParams, WeightMatrix};
pub use error::{FlockError, Result};
pub use scalar::{Scalar, Vec3};
pub use spectral::{LaplacianMatrix, SpectralResult};

pub type FlockStateF64 = FlockState<f64>;
pub type FlockStateF32 = FlockState<f32>;
pub type ModelParamsF64 = ModelParams<f64>;
pub type ModelParamsF32 = ModelParams<f32>;
pub type WeightMatrixF64 = WeightMatrix<f64>;
pub type WeightMatrixF32 = WeightMatrix<f32>;
pub type LaplacianF64 = LaplacianMatrix<f64>;
pub type LaplacianF32 = LaplacianMatrix<f32>;
pub type BoundConstantsF64 = analysis::BoundConstants<f64>;
