//! Parameter vectors, random streams and the differentiable models.

pub mod checkpoint;
pub mod extended;
mod model;
mod rng;
mod scalar;
mod vector;

pub use model::{ascent_shift, Activation, BatchObjective, Model, ModelKind, Objective, INIT_STD, TOL_ZERO_NORM};
pub use rng::{gaussian_vector, Purpose, StreamRng, Streams};
pub use scalar::Scalar;
pub use vector::{sum_in_order, Params};
