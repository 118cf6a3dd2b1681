//! Reverse-mode differentiation over dense matrices, plus the two pieces of
//! optimizer machinery every trainer here needs: Adam and spectral
//! normalization.

mod adam;
mod finitediff;
mod graph;
mod spectral;
mod tensor;

pub use adam::{AdamParams, AdamState};
pub use finitediff::finite_diff_grad;
pub use graph::{Gradients, Graph, NodeId};
pub use spectral::{power_iterate, sigma_readout, spectral_normalize, SpectralState};
pub use tensor::Tensor;
