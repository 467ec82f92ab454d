//! Building blocks of the forward pass, each recorded on a [`Tape`].

use rand_chacha::ChaCha8Rng;

use super::params::{Affine, AttentionParams, GateParams, GcnLayerParams, GinLayerParams, HeadParams, LstmParams};
use super::ModelError;
use crate::diffcore::{ParamStore, Tape, Tensor, Var};

/// Dropout state for one forward pass; inactive at inference.
#[derive(Debug)]
pub struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn train(rate: f64, rng: ChaCha8Rng) -> Self {
        Self { rate, rng: Some(rng) }
    }

    pub fn off() -> Self {
        Self { rate: 0.0, rng: None }
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var, ModelError> {
        match &mut self.rng {
            Some(rng) => Ok(tape.dropout(x, self.rate, rng)?),
            None => Ok(x),
        }
    }
}

fn expect_dim(what: &'static str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected != found {
        return Err(ModelError::DimensionMismatch { what, expected, found });
    }
    Ok(())
}

pub fn affine(tape: &mut Tape, store: &ParamStore, x: Var, params: &Affine) -> Result<Var, ModelError> {
    expect_dim("affine input", store.value(params.weight).rows(), tape.shape(x).1)?;
    let w = tape.param(store, params.weight)?;
    let b = tape.param(store, params.bias)?;
    let xw = tape.matmul(x, w)?;
    Ok(tape.add_row(xw, b)?)
}

/// `c = ReLU(profile · W + b)`, mapping an expression profile into atom-feature space.
pub fn embed_cell_line(tape: &mut Tape, store: &ParamStore, profile: Var, cell: &Affine) -> Result<Var, ModelError> {
    expect_dim("cell-line profile", store.value(cell.weight).rows(), tape.shape(profile).1)?;
    let z = affine(tape, store, profile, cell)?;
    Ok(tape.relu(z)?)
}

/// `H⁰[i] = x_i + c`.
pub fn init_node_states(tape: &mut Tape, features: Var, c: Var) -> Result<Var, ModelError> {
    expect_dim("cell embedding", tape.shape(features).1, tape.shape(c).1)?;
    Ok(tape.add_row(features, c)?)
}

/// Flattens neighbour lists into `(segment, source)` pairs for [`Tape::segment_sum`].
pub fn neighbor_pairs(neighbors: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    let mut segment_of = Vec::new();
    let mut gather_from = Vec::new();
    for (v, list) in neighbors.iter().enumerate() {
        for &u in list {
            segment_of.push(v);
            gather_from.push(u);
        }
    }
    (segment_of, gather_from)
}

/// `H̃[v] = MLP((1 + ε)·H[v] + Σ_{u∈N(v)} H[u])` with
/// `MLP = affine → ReLU → dropout → affine`.
pub fn gin_layer(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    neighbors: &[Vec<usize>],
    layer: &GinLayerParams,
    dropout: &mut Dropout,
) -> Result<Var, ModelError> {
    let (n, _) = tape.shape(h);
    expect_dim("neighbour lists", n, neighbors.len())?;
    let (segment_of, gather_from) = neighbor_pairs(neighbors);
    let aggregated = tape.segment_sum(h, &segment_of, &gather_from, n)?;
    let eps = tape.param(store, layer.eps)?;
    let self_weight = tape.add_scalar(eps, 1.0)?;
    let own = tape.scale_by(h, self_weight)?;
    let combined = tape.add(own, aggregated)?;
    let hidden = affine(tape, store, combined, &layer.mlp_in)?;
    let hidden = tape.relu(hidden)?;
    let hidden = dropout.apply(tape, hidden)?;
    affine(tape, store, hidden, &layer.mlp_out)
}

/// `H = H_prev + H̃`, projecting `H_prev` first when the widths differ.
pub fn residual_step(
    tape: &mut Tape,
    store: &ParamStore,
    h_prev: Var,
    h_tilde: Var,
    skip: Option<&Affine>,
) -> Result<Var, ModelError> {
    let (prev_rows, d_in) = tape.shape(h_prev);
    let (rows, d_out) = tape.shape(h_tilde);
    expect_dim("residual rows", prev_rows, rows)?;
    if d_in == d_out {
        return Ok(tape.add(h_prev, h_tilde)?);
    }
    let skip = skip.ok_or(ModelError::MissingSkipProjection { d_in, d_out })?;
    let projected = affine(tape, store, h_prev, skip)?;
    expect_dim("skip projection output", d_out, tape.shape(projected).1)?;
    Ok(tape.add(projected, h_tilde)?)
}

/// Symmetrically normalised adjacency with self loops:
/// `Â[v][u] = 1/√((deg v + 1)(deg u + 1))` for `u ∈ N(v) ∪ {v}`.
pub fn normalized_adjacency(neighbors: &[Vec<usize>]) -> Tensor {
    let n = neighbors.len();
    let degree: Vec<f64> = neighbors.iter().map(|l| l.len() as f64 + 1.0).collect();
    let mut adj = Tensor::zeros(n, n);
    for (v, list) in neighbors.iter().enumerate() {
        adj.set(v, v, 1.0 / degree[v]);
        for &u in list {
            adj.set(v, u, 1.0 / (degree[v] * degree[u]).sqrt());
        }
    }
    adj
}

/// `H'[v] = ReLU(W · Σ_{u∈N(v)∪{v}} H[u] / √((deg v + 1)(deg u + 1)))`, then dropout.
pub fn gcn_layer(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    neighbors: &[Vec<usize>],
    layer: &GcnLayerParams,
    dropout: &mut Dropout,
) -> Result<Var, ModelError> {
    let (n, _) = tape.shape(h);
    expect_dim("neighbour lists", n, neighbors.len())?;
    if neighbors.iter().flatten().any(|&u| u >= n) {
        return Err(ModelError::DimensionMismatch {
            what: "neighbour index",
            expected: n,
            found: neighbors.iter().flatten().copied().max().unwrap_or(0),
        });
    }
    let adj = tape.constant(normalized_adjacency(neighbors))?;
    let aggregated = tape.matmul(adj, h)?;
    let out = affine(tape, store, aggregated, &layer.linear)?;
    let out = tape.relu(out)?;
    dropout.apply(tape, out)
}

fn gate(tape: &mut Tape, store: &ParamStore, x: Var, h: Var, params: &GateParams) -> Result<Var, ModelError> {
    let wx = tape.param(store, params.input)?;
    let wh = tape.param(store, params.hidden)?;
    let b = tape.param(store, params.bias)?;
    let from_x = tape.matmul(x, wx)?;
    let from_h = tape.matmul(h, wh)?;
    let sum = tape.add(from_x, from_h)?;
    Ok(tape.add_row(sum, b)?)
}

/// Runs an LSTM over the per-layer node states, treating layer index as time.
/// Hidden and cell states start at zero; returns the final hidden state per node.
pub fn lstm_fuse(tape: &mut Tape, store: &ParamStore, sequence: &[Var], lstm: &LstmParams) -> Result<Var, ModelError> {
    let first = *sequence.first().ok_or(ModelError::EmptySequence)?;
    let n = tape.shape(first).0;
    let d_in = store.value(lstm.input_gate.input).rows();
    let d_lstm = store.value(lstm.input_gate.hidden).rows();
    let mut hidden = tape.constant(Tensor::zeros(n, d_lstm))?;
    let mut cell = tape.constant(Tensor::zeros(n, d_lstm))?;
    for &x in sequence {
        let (rows, cols) = tape.shape(x);
        expect_dim("lstm sequence rows", n, rows)?;
        expect_dim("lstm input width", d_in, cols)?;
        let i = gate(tape, store, x, hidden, &lstm.input_gate)?;
        let i = tape.sigmoid(i)?;
        let f = gate(tape, store, x, hidden, &lstm.forget_gate)?;
        let f = tape.sigmoid(f)?;
        let g = gate(tape, store, x, hidden, &lstm.cell_gate)?;
        let g = tape.tanh(g)?;
        let o = gate(tape, store, x, hidden, &lstm.output_gate)?;
        let o = tape.sigmoid(o)?;
        let kept = tape.mul(f, cell)?;
        let written = tape.mul(i, g)?;
        cell = tape.add(kept, written)?;
        let squashed = tape.tanh(cell)?;
        hidden = tape.mul(o, squashed)?;
    }
    Ok(hidden)
}

/// Variables produced by one cross-attention pooling call.
#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    /// `1 × N_x` node weights of the first drug.
    pub a_x: Var,
    /// `1 × N_y` node weights of the second drug.
    pub a_y: Var,
    /// `1 × d` pooled representation of the first drug.
    pub g_x: Var,
    pub g_y: Var,
}

/// Cross-attention pooling of two node sets:
///
/// ```text
/// A_x = tanh(H_x W_q (H_y W_k)ᵀ)        A_y = tanh(H_y W_q (H_x W_k)ᵀ)
/// a_x = softmax_i(Σ_j A_x[i, j])         a_y = softmax_j(Σ_i A_y[j, i])
/// g_x = Σ_i a_x[i] (H_x W_v)[i]          g_y = Σ_j a_y[j] (H_y W_v)[j]
/// ```
pub fn cross_attention(
    tape: &mut Tape,
    store: &ParamStore,
    hx: Var,
    hy: Var,
    params: &AttentionParams,
) -> Result<AttentionVars, ModelError> {
    let d = store.value(params.w_q).rows();
    expect_dim("attention input (first drug)", d, tape.shape(hx).1)?;
    expect_dim("attention input (second drug)", d, tape.shape(hy).1)?;
    let w_q = tape.param(store, params.w_q)?;
    let w_k = tape.param(store, params.w_k)?;
    let w_v = tape.param(store, params.w_v)?;

    let qx = tape.matmul(hx, w_q)?;
    let kx = tape.matmul(hx, w_k)?;
    let qy = tape.matmul(hy, w_q)?;
    let ky = tape.matmul(hy, w_k)?;

    let pool = |tape: &mut Tape, q: Var, k_partner: Var, h: Var| -> Result<(Var, Var), ModelError> {
        let kt = tape.transpose(k_partner)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.tanh(scores)?;
        let totals = tape.row_sum(scores)?;
        let totals = tape.transpose(totals)?;
        let weights = tape.row_softmax(totals)?;
        let values = tape.matmul(h, w_v)?;
        let pooled = tape.matmul(weights, values)?;
        Ok((weights, pooled))
    };
    let (a_x, g_x) = pool(tape, qx, ky, hx)?;
    let (a_y, g_y) = pool(tape, qy, kx, hy)?;
    Ok(AttentionVars { a_x, a_y, g_x, g_y })
}

/// `g_f = g_x^GIN ∥ g_y^GIN ∥ g_x^LSTM ∥ g_y^LSTM`.
pub fn fuse(tape: &mut Tape, parts: [Var; 4], d_hidden: usize) -> Result<Var, ModelError> {
    for p in parts {
        let (rows, cols) = tape.shape(p);
        expect_dim("pooled representation rows", 1, rows)?;
        expect_dim("pooled representation width", d_hidden, cols)?;
    }
    Ok(tape.concat_cols(&parts)?)
}

/// Lower clamp on predicted probabilities (upper clamp is `1 − PROB_CLAMP`).
pub const PROB_CLAMP: f64 = 1e-7;

/// Prediction head over `z = g_f ∥ c`: affine → ReLU → dropout → affine → ReLU
/// → affine → sigmoid. Returns `(logit, p)` with `p` clamped into
/// `[PROB_CLAMP, 1 − PROB_CLAMP]`.
pub fn predict_head(
    tape: &mut Tape,
    store: &ParamStore,
    g_f: Var,
    c: Var,
    head: &HeadParams,
    dropout: &mut Dropout,
) -> Result<(Var, Var), ModelError> {
    let z = tape.concat_cols(&[g_f, c])?;
    expect_dim("prediction head input", store.value(head.hidden.weight).rows(), tape.shape(z).1)?;
    let h = affine(tape, store, z, &head.hidden)?;
    let h = tape.relu(h)?;
    let h = dropout.apply(tape, h)?;
    let h = affine(tape, store, h, &head.middle)?;
    let h = tape.relu(h)?;
    let logit = affine(tape, store, h, &head.logit)?;
    let p = tape.sigmoid(logit)?;
    let p = tape.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
    Ok((logit, p))
}
