//! Gaussian-surrogate inference for hierarchical models.
//!
//! A hierarchical model draws a random function `f ~ G` and observes a noisy
//! nonlinear functional `X = η_θ(f) + γ`. This crate replaces the intractable
//! law of `X` by a Gaussian with the exact mean and covariance, and provides
//! the tools to study the resulting misspecified posterior:
//!
//! * [`model`]: the [`MomentModel`](model::MomentModel) interface, the
//!   surrogate log-likelihood and its score, observation batches.
//! * [`bvm`]: Gaussian KL divergences, the precision `V`, the centering
//!   point `T_N`, grid posteriors and the L1 distance to the Gaussian limit.
//! * [`square_integral`]: the squared-Brownian-integral example with closed
//!   form moments.
//! * [`schrodinger`] and [`parabolic`]: Feynman-Kac Monte Carlo forward maps
//!   with Monte Carlo surrogate moments.
//! * [`fisher`]: nested Monte Carlo estimation of the true Fisher information.
//!
//! Deterministic numerics are generic over [`Real`](scalar::Real); the
//! aliases below fix the scalar to `f64`.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bvm;
pub mod error;
pub mod fisher;
pub mod legendre;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod parabolic;
pub mod rng;
pub mod scalar;
pub mod schrodinger;
pub mod square_integral;

pub use error::{Error, Result};
pub use mc::{McEstimate, McMatrix, McScalar, McVector};
pub use rng::RandomStream;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Theta64 = model::ThetaVector<f64>;
pub type Theta32 = model::ThetaVector<f32>;
pub type Batch64 = model::ObservationBatch<f64>;
pub type MomentPair64 = model::MomentPair<f64>;
pub type MomentPair32 = model::MomentPair<f32>;
pub type BvmLimit64 = bvm::BvmLimit<f64>;
pub type PosteriorGrid64 = bvm::PosteriorGrid<f64>;
pub type SquareIntModel64 = square_integral::SquareIntModel<f64>;
pub type SquareIntModel32 = square_integral::SquareIntModel<f32>;

/// Library version recorded in experiment metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
