//! Threshold classifiers on spectral energy and tiny neural classifiers.

mod adam;
mod energy;
mod net;
mod train;

pub use adam::Adam;
pub use energy::{classify_energy, classify_energy_band, EnergyBandParams, EnergyParams};
pub use net::{
    build_tiny_net, Architecture, InputKind, LayerSpec, ModelFile, ModelLayer, NetShape, TinyNet,
    CONV_CHANNELS, CONV_KERNEL, CONV_STRIDE, FC_HIDDEN_RATE, FC_HIDDEN_SPECTRUM, MIN_CONV_INPUT,
    MIN_FC_INPUT, MODEL_VERSION,
};
pub use train::{inverse_frequency_weights, train, TrainConfig, TrainReport};
