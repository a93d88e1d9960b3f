//! Toy-scale conditioned scene-coordinate network with analytic gradients.

pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod film;
pub mod layers;
pub mod model;
pub mod params;

pub use adam::Adam;
pub use checkpoint::{config_hash, read_checkpoint, write_checkpoint};
pub use model::{
    argmax, predict_coords, ConditionedNet, FeatureMap, ForwardCache, ForwardOutput, Mode,
    NetConfig, NetError, OutputGrads, PredictionSet,
};
pub use params::ParamStore;
