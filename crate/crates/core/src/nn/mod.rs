//! Minimal tensor library and the fixed CNN layer set.

pub mod checkpoint;
pub mod layers;
pub mod network;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_weights, save_weights};
pub use network::{build_table2_network, LayerSpec, Network, NetworkSpec};
pub use tensor::{Scalar, Tensor};
pub use train::{predict, train, Optimizer, TrainConfig, Trainer};
