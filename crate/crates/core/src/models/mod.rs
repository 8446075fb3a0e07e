//! Real and quaternion classifiers and their parameter registry.

pub mod checkpoint;
pub mod layers;
mod network;
mod spec;

pub use layers::{quat_conv, quat_linear, split_relu, QuatConvLayer, QuatLinearLayer};
pub use network::{build_network, count_parameters, input_shape, Layer, Network, Param, ParamFilter, ParamRole};
pub use spec::{Architecture, ConvItem, DatasetKind, Field, ModelSpec};
