//! Unsupervised morphing-attack detection with a convolutional autoencoder
//! trained under a self-paced sample weighting.
//!
//! The model learns to reconstruct bona fide faces. At test time the
//! per-sample reconstruction error is the score: attacks tend to
//! reconstruct better, so a low score flags an attack.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision.

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod scalar;
pub mod spl;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{ArchSpec, Cae, ImageTensor, LatentTensor, ParamSet, Tensor3};
pub use scalar::Scalar;

pub type Cae32 = Cae<f32>;
pub type Cae64 = Cae<f64>;
pub type Image32 = ImageTensor<f32>;
pub type Image64 = ImageTensor<f64>;
pub type Params32 = ParamSet<f32>;
pub type Params64 = ParamSet<f64>;
pub type Checkpoint32 = trainer::Checkpoint<f32>;
pub type Checkpoint64 = trainer::Checkpoint<f64>;
pub type Trainer32 = trainer::Trainer<f32>;
pub type Trainer64 = trainer::Trainer<f64>;
pub type TrainingSet32 = data::TrainingSet<f32>;
pub type TrainingSet64 = data::TrainingSet<f64>;
