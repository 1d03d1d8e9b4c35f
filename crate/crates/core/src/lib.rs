//! Conditional denoising diffusion over graph signals with a U-shaped graph
//! neural network (U-GNN) noise predictor, plus the data, baseline and
//! evaluation pieces for probabilistic stock log-return forecasting.
//!
//! The numeric core (graph algebra, autodiff, model, diffusion, metrics) is
//! generic over [`Scalar`]; the aliases below fix it to `f64`, the precision
//! used for training and checkpoints.

pub mod autodiff;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod graph;
pub mod market;
pub mod model;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type GraphShiftF64 = graph::GraphShift<f64>;
pub type TapeF64 = autodiff::Tape<f64>;
pub type ParamsF64 = autodiff::ParameterStore<f64>;
pub type UGnnF64 = model::UGnn<f64>;
pub type NoiseScheduleF64 = diffusion::NoiseSchedule<f64>;
pub type GraphShiftF32 = graph::GraphShift<f32>;
pub type UGnnF32 = model::UGnn<f32>;
pub type TrainerF64<'a, D> = train::Trainer<'a, f64, D>;
pub type AdamWF64 = train::AdamW<f64>;
