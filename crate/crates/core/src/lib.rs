//! Projection of Itô SDEs onto embedded submanifolds.
//!
//! An ambient SDE `dX = a dt + b_α dW^α` on `ℝʳ` is approximated by an SDE
//! `dY = A dt + B_α dW^α` in the coordinates of a chart `φ: ℝⁿ → ℝʳ`. Three
//! projections are provided:
//!
//! * **Stratonovich**: project the Stratonovich coefficients with the
//!   tangent projection and convert back to Itô form.
//! * **Itô-vector**: the drift/diffusion minimising the truncated Itô–Taylor
//!   error of `X - φ(Y)`.
//! * **Itô-jet**: the SDE whose 2-jet is the metric projection composed with
//!   the ambient 2-jet; optimal for tracking the nearest-point projection of `X`.
//!
//! The [`filter`] module applies these to the Kushner–Stratonovich equation
//! of the cubic sensor and benchmarks Gaussian projection filters against a
//! finite-difference reference.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the common `f64` instantiation.

pub mod circle;
pub mod error;
pub mod filter;
pub mod geometry;
pub mod ito_taylor;
pub mod projection;
pub mod quadrature;
pub mod scalar;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use geometry::{Embedding, ProjectionJet};
pub use ito_taylor::{JetData, MultiIndex};
pub use projection::{ChartCoefficients, ChartSde, ProjectionKind};
pub use sde::{AmbientSde, NoiseSource, SamplePath};

pub type AmbientSde64 = sde::AmbientSde<f64>;
pub type AmbientSde32 = sde::AmbientSde<f32>;
pub type SamplePath64 = sde::SamplePath<f64>;
pub type Embedding64 = geometry::Embedding<f64>;
pub type Embedding32 = geometry::Embedding<f32>;
pub type ProjectionJet64 = geometry::ProjectionJet<f64>;
pub type ChartSde64 = projection::ChartSde<f64>;
pub type JetData64 = ito_taylor::JetData<f64>;
pub type GaussianParams64 = filter::GaussianParams<f64>;
pub type DensityGrid64 = filter::DensityGrid<f64>;
pub type FilterModel64 = filter::FilterModel<f64>;
pub type ObservationRecord64 = filter::ObservationRecord<f64>;
pub type CrossDiffusionSpec64 = circle::CrossDiffusionSpec<f64>;
