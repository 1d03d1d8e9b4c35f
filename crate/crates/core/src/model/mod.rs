//! U-shaped graph neural network: sinusoidal time and conditioning
//! embeddings, polynomial graph convolutions with strided sampled shifts,
//! B encoder and B decoder blocks joined by skip connections, a bottleneck
//! MLP, and per-node read-in/read-out maps.

mod config;
mod conv;
mod embed;
mod unet;

pub use config::{Activation, ConvView, Normalization, UGnnConfig};
pub use conv::{activate, dense_polynomial_filter, sampled_graph_conv, BatchGraph, LayerParams, Resolution};
pub use embed::{batched_time_embedding, time_embedding};
pub use unet::{decoder_block, encoder_block, input_embedding, linear, BlockParams, UGnn};
