use rand_chacha::ChaCha8Rng;

use super::layers::{
    cross_attention, embed_cell_line, fuse, gcn_layer, gin_layer, init_node_states, lstm_fuse, predict_head,
    residual_step, AttentionVars, Dropout,
};
use super::params::{init_params, LayerParams, ParamLayout};
use super::{ModelConfig, ModelError};
use crate::chem::MolecularGraph;
use crate::diffcore::{Gradients, ParamStore, Tape, Tensor, Var};

/// Whether dropout is active. Training carries the generator for its masks.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Mode {
    Infer,
    Train(ChaCha8Rng),
}

/// Node states of one drug after encoding.
#[derive(Debug, Clone)]
pub struct EncodedDrug {
    /// `H⁽¹⁾ … H⁽ᴷ⁾`.
    pub layers: Vec<Var>,
    /// LSTM-fused node states `S`.
    pub fused: Var,
}

/// Every intermediate of one forward pass that callers may want to inspect.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub c: Var,
    pub drug_a: EncodedDrug,
    pub drug_b: EncodedDrug,
    pub attn_gin: AttentionVars,
    pub attn_lstm: AttentionVars,
    pub g_f: Var,
    pub logit: Var,
    pub p: Var,
}

/// Per-node attention weights of both drugs on both pooling paths.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub gin_a: Vec<f64>,
    pub gin_b: Vec<f64>,
    pub lstm_a: Vec<f64>,
    pub lstm_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub p: f64,
    pub attention: AttentionWeights,
}

/// A configured network together with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    layout: ParamLayout,
}

impl Model {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = init_params(&config, seed)?;
        Self::from_params(config, params)
    }

    /// Wraps existing parameters, checking every name and shape against `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = ParamLayout::resolve(&config, &params)?;
        Ok(Self { config, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn dropout_for(&self, mode: Mode) -> Dropout {
        match mode {
            Mode::Infer => Dropout::off(),
            Mode::Train(rng) => Dropout::train(self.config.dropout, rng),
        }
    }

    fn profile_var(&self, tape: &mut Tape, profile: &[f64]) -> Result<Var, ModelError> {
        if profile.len() != self.config.d_gene {
            return Err(ModelError::DimensionMismatch {
                what: "cell-line profile",
                expected: self.config.d_gene,
                found: profile.len(),
            });
        }
        Ok(tape.constant(Tensor::row_vector(profile.to_vec()))?)
    }

    /// Runs the graph layers and LSTM fusion for one drug.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        graph: &MolecularGraph,
        c: Var,
        dropout: &mut Dropout,
    ) -> Result<EncodedDrug, ModelError> {
        if graph.node_features().cols() != self.config.d_atom {
            return Err(ModelError::DimensionMismatch {
                what: "atom features",
                expected: self.config.d_atom,
                found: graph.node_features().cols(),
            });
        }
        let x = tape.constant(graph.node_features().clone())?;
        let mut h = init_node_states(tape, x, c)?;
        let neighbors = graph.neighbor_lists();
        let mut layers = Vec::with_capacity(self.layout.layers.len());
        for layer in &self.layout.layers {
            let h_tilde = match layer {
                LayerParams::Gin(p) => gin_layer(tape, store, h, neighbors, p, dropout)?,
                LayerParams::Gcn(p) => gcn_layer(tape, store, h, neighbors, p, dropout)?,
            };
            h = if self.config.variant.residual() {
                residual_step(tape, store, h, h_tilde, layer.skip())?
            } else {
                h_tilde
            };
            layers.push(h);
        }
        let fused = lstm_fuse(tape, store, &layers, &self.layout.lstm)?;
        Ok(EncodedDrug { layers, fused })
    }

    /// Records the full forward pass for `(drug_a, drug_b, profile)` on `tape`,
    /// reading parameters from `store` (normally [`Model::params`]).
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        drug_a: &MolecularGraph,
        drug_b: &MolecularGraph,
        profile: &[f64],
        dropout: &mut Dropout,
    ) -> Result<ForwardVars, ModelError> {
        let r = self.profile_var(tape, profile)?;
        let c = embed_cell_line(tape, store, r, &self.layout.cell)?;
        let enc_a = self.encode(tape, store, drug_a, c, dropout)?;
        let enc_b = self.encode(tape, store, drug_b, c, dropout)?;
        let last_a = *enc_a.layers.last().expect("at least one layer");
        let last_b = *enc_b.layers.last().expect("at least one layer");
        let attn_gin = cross_attention(tape, store, last_a, last_b, &self.layout.attn_gin)?;
        let attn_lstm = cross_attention(tape, store, enc_a.fused, enc_b.fused, &self.layout.attn_lstm)?;
        let g_f = fuse(
            tape,
            [attn_gin.g_x, attn_gin.g_y, attn_lstm.g_x, attn_lstm.g_y],
            self.config.d_hidden,
        )?;
        let (logit, p) = predict_head(tape, store, g_f, c, &self.layout.head, dropout)?;
        Ok(ForwardVars {
            c,
            drug_a: enc_a,
            drug_b: enc_b,
            attn_gin,
            attn_lstm,
            g_f,
            logit,
            p,
        })
    }

    pub fn forward(
        &self,
        drug_a: &MolecularGraph,
        drug_b: &MolecularGraph,
        profile: &[f64],
        mode: Mode,
    ) -> Result<ForwardOutput, ModelError> {
        let mut tape = Tape::new();
        let mut dropout = self.dropout_for(mode);
        let vars = self.forward_on_tape(&mut tape, &self.params, drug_a, drug_b, profile, &mut dropout)?;
        let read = |v: Var| tape.value(v).data().to_vec();
        Ok(ForwardOutput {
            p: tape.value(vars.p).item()?,
            attention: AttentionWeights {
                gin_a: read(vars.attn_gin.a_x),
                gin_b: read(vars.attn_gin.a_y),
                lstm_a: read(vars.attn_lstm.a_x),
                lstm_b: read(vars.attn_lstm.a_y),
            },
        })
    }

    pub fn predict(&self, drug_a: &MolecularGraph, drug_b: &MolecularGraph, profile: &[f64]) -> Result<f64, ModelError> {
        Ok(self.forward(drug_a, drug_b, profile, Mode::Infer)?.p)
    }

    /// Cross-entropy of one labelled pair and its gradient for every parameter.
    /// Returns `(loss, p, gradients)`.
    pub fn loss_and_gradients(
        &self,
        drug_a: &MolecularGraph,
        drug_b: &MolecularGraph,
        profile: &[f64],
        label: f64,
        mode: Mode,
    ) -> Result<(f64, f64, Gradients), ModelError> {
        let mut tape = Tape::new();
        let mut dropout = self.dropout_for(mode);
        let vars = self.forward_on_tape(&mut tape, &self.params, drug_a, drug_b, profile, &mut dropout)?;
        let loss = tape.bce(vars.p, &[label])?;
        let grads = tape.gradients(loss, &self.params)?;
        Ok((tape.value(loss).item()?, tape.value(vars.p).item()?, grads))
    }

    /// Node states `H⁽¹⁾ … H⁽ᴷ⁾` of one drug at inference.
    pub fn node_states(&self, graph: &MolecularGraph, profile: &[f64]) -> Result<Vec<Tensor>, ModelError> {
        let mut tape = Tape::new();
        let r = self.profile_var(&mut tape, profile)?;
        let c = embed_cell_line(&mut tape, &self.params, r, &self.layout.cell)?;
        let enc = self.encode(&mut tape, &self.params, graph, c, &mut Dropout::off())?;
        Ok(enc.layers.iter().map(|v| tape.value(*v).clone()).collect())
    }
}
