//! Simultaneous input and state estimation for linear discrete-time systems
//! with unknown inputs entering both the dynamics and the measurements.

pub mod benchmarks;
pub mod decomposition;
pub mod error;
pub mod filter;
pub mod model;
pub mod numeric;
pub mod sim;
pub mod structural;

pub use decomposition::{decompose, transform_measurement, OutputDecomposition};
pub use error::{Error, Result};
pub use filter::{AnyFilter, FilterKind, GammaPolicy, StepOutput};
pub use model::{Dims, SystemModel, SystemStep};
pub use numeric::{Mat, Tolerance, Vector};
