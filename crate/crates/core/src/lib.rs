//! Drug-pair synergy classification with a residual graph isomorphism
//! network, LSTM layer fusion and cross-attention pooling.
//!
//! The crate is organised bottom-up:
//!
//! - [`chem`]: SMILES parsing, molecular graphs and atom features
//! - [`diffcore`]: dense tensors and reverse-mode gradients
//! - [`model`]: the network and its checkpoints
//! - [`data`]: sample and expression-table loading, folds and batches
//! - [`train`]: loss, Adam and the cross-validation loop
//! - [`eval`]: metrics and the ablation / sweep / smoothing experiments

pub mod chem;
pub mod diffcore;
pub mod model;
pub mod data;
pub mod train;
pub mod eval;
