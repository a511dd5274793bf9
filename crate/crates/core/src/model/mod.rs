//! PS8-Net building blocks and the assembled network.

pub mod blocks;
pub mod config;
pub mod net;
pub mod params;

pub use blocks::{ConvLayer, DeepSeries, DenseLayer, ModuleShape, NormLayer, Ps8Module, SkBlock};
pub use config::{BranchWidth, FeatureSet, Ps8Config, BLOCK_WIDTH, INPUT_WIDTH};
pub use net::{Forward, Ps8Net, Stage};
pub use params::{ForwardCtx, ParamBuilder, ParamId, ParamStore, StatsId, StatsStore};
