//! The synergy network: residual GIN encoder, LSTM fusion over layer outputs,
//! cross-attention pooling on both paths and an MLP prediction head.

pub mod checkpoint;
pub mod layers;
mod network;
pub mod params;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::ATOM_FEATURE_DIM;
use crate::diffcore::DiffError;

pub use layers::{AttentionVars, Dropout, PROB_CLAMP};
pub use network::{AttentionWeights, EncodedDrug, ForwardOutput, ForwardVars, Mode, Model};
pub use params::{parameter_shapes, ParamLayout};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("layer changes width {d_in} -> {d_out} but has no skip projection")]
    MissingSkipProjection { d_in: usize, d_out: usize },
    #[error("LSTM needs at least one layer output")]
    EmptySequence,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown variant {0:?} (expected resgin, gin-nores or gcn-res)")]
    UnknownVariant(String),
    #[error("missing parameter {0}")]
    MissingParameter(String),
    #[error("unexpected parameter {0}")]
    UnexpectedParameter(String),
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ParameterShape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Numeric(#[from] DiffError),
}

/// Encoder variants: the full model and the two ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Variant {
    #[default]
    #[serde(rename = "resgin")]
    ResGin,
    /// GIN layers without the skip connection.
    #[serde(rename = "gin-nores")]
    GinNoRes,
    /// GCN layers in place of GIN, residuals kept.
    #[serde(rename = "gcn-res")]
    GcnRes,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::ResGin, Variant::GinNoRes, Variant::GcnRes];

    pub fn name(self) -> &'static str {
        match self {
            Variant::ResGin => "resgin",
            Variant::GinNoRes => "gin-nores",
            Variant::GcnRes => "gcn-res",
        }
    }

    pub fn residual(self) -> bool {
        !matches!(self, Variant::GinNoRes)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ModelError::UnknownVariant(s.to_string()))
    }
}

/// Network dimensions. Defaults follow the reference hyperparameter table;
/// `d_gene` is bound from the expression data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_atom: usize,
    pub d_gene: usize,
    pub d_hidden: usize,
    pub d_middle: usize,
    pub layers: usize,
    pub d_attn: usize,
    pub d_lstm: usize,
    /// Recorded only; pooling is single-head.
    pub n_heads: usize,
    pub dropout: f64,
    /// Recorded only; the head emits one sigmoid probability.
    pub out_classes: usize,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_atom: ATOM_FEATURE_DIM,
            d_gene: 0,
            d_hidden: 128,
            d_middle: 64,
            layers: 2,
            d_attn: 64,
            d_lstm: 128,
            n_heads: 4,
            dropout: 0.2,
            out_classes: 2,
            variant: Variant::ResGin,
        }
    }
}

impl ModelConfig {
    pub fn with_gene_dim(d_gene: usize) -> Self {
        Self {
            d_gene,
            ..Self::default()
        }
    }

    /// Width of `z = g_f ∥ c`.
    pub fn head_input_dim(&self) -> usize {
        4 * self.d_hidden + self.d_atom
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("d_atom", self.d_atom),
            ("d_gene", self.d_gene),
            ("d_hidden", self.d_hidden),
            ("d_middle", self.d_middle),
            ("layers", self.layers),
            ("d_attn", self.d_attn),
            ("d_lstm", self.d_lstm),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidConfig(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}
