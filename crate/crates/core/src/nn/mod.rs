//! The segmentation network: tensor kernels, architecture, weights and the
//! optimizer.

mod adam;
mod conv;
mod network;
mod scalar;
mod spec;
pub mod tensor;
mod weights;

pub use adam::{Adam, AdamConfig};
pub use conv::Conv2d;
pub use network::{ForwardCache, LayerInfo, LayerRole, Network};
pub use scalar::Scalar;
pub use spec::NetworkSpec;
pub use tensor::Tensor;
pub use weights::{NamedTensor, WeightSet};
