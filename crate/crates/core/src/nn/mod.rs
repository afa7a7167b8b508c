//! Minimal dense neural-network engine: layers with explicit backward passes,
//! gradient reversal, softmax cross-entropy, Adam and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod stack;

pub use adam::AdamState;
pub use checkpoint::{ArchitectureTag, Checkpoint};
pub use layers::{
    BatchNormLayer, DropoutLayer, GradReversalLayer, Layer, LayerCache, LinearLayer, Mode, Pass,
};
pub use loss::{softmax, softmax_cross_entropy};
pub use matrix::Matrix;
pub use stack::{ForwardCache, LayerStack, ParamSlot};
