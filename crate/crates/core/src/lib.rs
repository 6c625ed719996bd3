//! Client-level differentially private federated learning laboratory.
//!
//! The crate implements federated training with server pseudo-gradient
//! momentum and a global gradient-norm penalty (`dp-fedpgn`, optionally with
//! Laplacian smoothing of the aggregate) next to the `dp-fedavg` and
//! `dp-fedsam` baselines, a Rényi-DP accountant for the subsampled Gaussian
//! mechanism, and loss-landscape and update-norm probes.
//!
//! Numeric kernels ([`numerics::Params`], the models, clipping and smoothing)
//! are generic over [`numerics::Scalar`]; the training loop runs on `f64`
//! through the aliases below.

pub mod accountant;
pub mod data;
pub mod dp;
pub mod engine;
mod error;
pub mod io;
pub mod numerics;
pub mod probes;
pub mod smoothing;

pub use error::{Error, Result};

/// Double-precision parameter vector used by the training loop.
pub type ParamVector = numerics::Params<f64>;
/// Single-precision parameter vector.
pub type ParamVector32 = numerics::Params<f32>;

pub use accountant::PrivacyLedger;
pub use data::{Batch as DataBatch, Dataset, Partition};
pub use engine::{AlgorithmSpec, ClientUpdate, Engine, RoundState, RunConfig};
pub use numerics::Model;
