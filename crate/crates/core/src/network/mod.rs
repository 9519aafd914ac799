//! Declarative model construction: layer lists, shape inference, parameter
//! accounting, initialization, forward passes and checkpoints.

mod builders;
pub mod checkpoint;
mod graph;
mod layer;
mod optim;

pub use builders::{build_classifier, build_discriminator, build_generator, ClassifierArch, GanArch};
pub use graph::{ForwardOptions, ForwardPass, ModelGraph, ModelKind, Param, ParamReport, INIT_STD};
pub use layer::{infer_shapes, LayerSpec, ParamCountConvention};
pub use optim::ModelOptimizer;
