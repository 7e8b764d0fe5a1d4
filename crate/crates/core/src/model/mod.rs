//! The four separation networks as declarative layer graphs, their
//! parameter bookkeeping, and a graph executor with backpropagation.

mod network;
mod params;
mod report;
mod spec;
mod zoo;

pub use network::{Gradients, Network, Optimizer};
pub use params::{count_params, init_weights, Param, ParamReport, ParamRole, WeightSet};
pub use report::{band_row, describe};
pub use spec::{LayerKind, LayerSpec, ModelKind, ModelSpec};
pub use zoo::{build, build_dnn, build_fcn, build_mbr_fcn, build_unet, FilterSet, MbrFcnConfig, BINS};
