//! Trainable layers over the tape: parameter storage, initialization,
//! VGG-style convolution blocks and dense layers.

mod layers;
mod params;

pub use layers::{Activation, Conv2dLayer, ConvBlock, ConvBlockSpec, Dense};
pub use params::{InitScheme, InitSpec, Initializer, ParamId, ParamStore, Session};

/// Anything owning parameters in a [`ParamStore`].
pub trait Parameterized {
    fn param_ids(&self) -> Vec<ParamId>;

    /// Exact count of scalar parameters, biases included.
    fn count_params<T: crate::tensor::Real>(&self, store: &ParamStore<T>) -> usize {
        self.param_ids().iter().map(|&id| store.get(id).len()).sum()
    }
}
