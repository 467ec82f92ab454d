use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError, Variant};
use crate::diffcore::{ParamId, ParamStore, Tensor};

/// `x · weight + bias` with `weight: in × out` and `bias: 1 × out`.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct GinLayerParams {
    pub eps: ParamId,
    pub mlp_in: Affine,
    pub mlp_out: Affine,
    /// Present only when the layer changes width.
    pub skip: Option<Affine>,
}

#[derive(Debug, Clone, Copy)]
pub struct GcnLayerParams {
    pub linear: Affine,
    pub skip: Option<Affine>,
}

#[derive(Debug, Clone, Copy)]
pub enum LayerParams {
    Gin(GinLayerParams),
    Gcn(GcnLayerParams),
}

impl LayerParams {
    pub fn skip(&self) -> Option<&Affine> {
        match self {
            LayerParams::Gin(p) => p.skip.as_ref(),
            LayerParams::Gcn(p) => p.skip.as_ref(),
        }
    }
}

/// Input-to-gate, hidden-to-gate and bias for one LSTM gate.
#[derive(Debug, Clone, Copy)]
pub struct GateParams {
    pub input: ParamId,
    pub hidden: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub cell_gate: GateParams,
    pub output_gate: GateParams,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    /// Value projection shared by both drugs of the pair.
    pub w_v: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadParams {
    pub hidden: Affine,
    pub middle: Affine,
    pub logit: Affine,
}

/// Where every learnable tensor of the network lives in its [`ParamStore`].
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub cell: Affine,
    pub layers: Vec<LayerParams>,
    pub lstm: LstmParams,
    pub attn_gin: AttentionParams,
    pub attn_lstm: AttentionParams,
    pub head: HeadParams,
}

/// Expected name and shape of every parameter, in creation order.
pub fn parameter_shapes(config: &ModelConfig) -> Vec<(String, (usize, usize))> {
    let mut shapes = Vec::new();
    let affine = |shapes: &mut Vec<_>, name: &str, fan_in: usize, fan_out: usize| {
        shapes.push((format!("{name}.weight"), (fan_in, fan_out)));
        shapes.push((format!("{name}.bias"), (1, fan_out)));
    };
    let h = config.d_hidden;
    affine(&mut shapes, "cell", config.d_gene, config.d_atom);
    for k in 0..config.layers {
        let d_in = if k == 0 { config.d_atom } else { h };
        match config.variant {
            Variant::ResGin | Variant::GinNoRes => {
                shapes.push((format!("gin.{k}.eps"), (1, 1)));
                affine(&mut shapes, &format!("gin.{k}.mlp_in"), d_in, h);
                affine(&mut shapes, &format!("gin.{k}.mlp_out"), h, h);
                if d_in != h {
                    affine(&mut shapes, &format!("gin.{k}.skip"), d_in, h);
                }
            }
            Variant::GcnRes => {
                affine(&mut shapes, &format!("gcn.{k}.linear"), d_in, h);
                if d_in != h {
                    affine(&mut shapes, &format!("gcn.{k}.skip"), d_in, h);
                }
            }
        }
    }
    for gate in ["i", "f", "g", "o"] {
        shapes.push((format!("lstm.{gate}.input"), (h, config.d_lstm)));
        shapes.push((format!("lstm.{gate}.hidden"), (config.d_lstm, config.d_lstm)));
        shapes.push((format!("lstm.{gate}.bias"), (1, config.d_lstm)));
    }
    for (path, d_in) in [("attn_gin", h), ("attn_lstm", config.d_lstm)] {
        shapes.push((format!("{path}.w_q"), (d_in, config.d_attn)));
        shapes.push((format!("{path}.w_k"), (d_in, config.d_attn)));
        shapes.push((format!("{path}.w_v"), (d_in, h)));
    }
    affine(&mut shapes, "head.hidden", config.head_input_dim(), h);
    affine(&mut shapes, "head.middle", h, config.d_middle);
    affine(&mut shapes, "head.logit", config.d_middle, 1);
    shapes
}

fn uniform(shape: (usize, usize), bound: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..shape.0 * shape.1).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.0, shape.1, data).expect("shape matches data")
}

/// Creates every parameter from `seed`. Weights and biases are uniform in
/// ±1/√fan_in of their affine map; ε starts at zero; LSTM biases are zero
/// except the forget gate, which starts at one.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ParamStore, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let mut fan_in = 1;
    for (name, shape) in parameter_shapes(config) {
        let value = if name.ends_with(".eps") {
            Tensor::zeros(1, 1)
        } else if name.starts_with("lstm.") && name.ends_with(".bias") {
            Tensor::filled(1, shape.1, if name == "lstm.f.bias" { 1.0 } else { 0.0 })
        } else if name.starts_with("lstm.") {
            uniform(shape, 1.0 / (config.d_lstm as f64).sqrt(), &mut rng)
        } else if name.ends_with(".bias") {
            uniform(shape, 1.0 / (fan_in as f64).sqrt(), &mut rng)
        } else {
            fan_in = shape.0.max(1);
            uniform(shape, 1.0 / (fan_in as f64).sqrt(), &mut rng)
        };
        store.add(name, value)?;
    }
    Ok(store)
}

fn lookup(store: &ParamStore, name: &str) -> Result<ParamId, ModelError> {
    store
        .id(name)
        .ok_or_else(|| ModelError::MissingParameter(name.to_string()))
}

fn affine(store: &ParamStore, name: &str) -> Result<Affine, ModelError> {
    Ok(Affine {
        weight: lookup(store, &format!("{name}.weight"))?,
        bias: lookup(store, &format!("{name}.bias"))?,
    })
}

fn optional_affine(store: &ParamStore, name: &str) -> Result<Option<Affine>, ModelError> {
    if store.id(&format!("{name}.weight")).is_some() {
        affine(store, name).map(Some)
    } else {
        Ok(None)
    }
}

impl ParamLayout {
    /// Checks `store` against the shapes `config` implies and resolves every id.
    pub fn resolve(config: &ModelConfig, store: &ParamStore) -> Result<Self, ModelError> {
        let expected = parameter_shapes(config);
        for (name, shape) in &expected {
            let id = lookup(store, name)?;
            let found = store.value(id).shape();
            if found != *shape {
                return Err(ModelError::ParameterShape {
                    name: name.clone(),
                    expected: *shape,
                    found,
                });
            }
        }
        if let Some(extra) = store
            .iter()
            .find(|p| !expected.iter().any(|(name, _)| *name == p.name))
        {
            return Err(ModelError::UnexpectedParameter(extra.name.clone()));
        }

        let mut layers = Vec::with_capacity(config.layers);
        for k in 0..config.layers {
            let layer = match config.variant {
                Variant::ResGin | Variant::GinNoRes => LayerParams::Gin(GinLayerParams {
                    eps: lookup(store, &format!("gin.{k}.eps"))?,
                    mlp_in: affine(store, &format!("gin.{k}.mlp_in"))?,
                    mlp_out: affine(store, &format!("gin.{k}.mlp_out"))?,
                    skip: optional_affine(store, &format!("gin.{k}.skip"))?,
                }),
                Variant::GcnRes => LayerParams::Gcn(GcnLayerParams {
                    linear: affine(store, &format!("gcn.{k}.linear"))?,
                    skip: optional_affine(store, &format!("gcn.{k}.skip"))?,
                }),
            };
            layers.push(layer);
        }
        let gate = |g: &str| -> Result<GateParams, ModelError> {
            Ok(GateParams {
                input: lookup(store, &format!("lstm.{g}.input"))?,
                hidden: lookup(store, &format!("lstm.{g}.hidden"))?,
                bias: lookup(store, &format!("lstm.{g}.bias"))?,
            })
        };
        let attention = |path: &str| -> Result<AttentionParams, ModelError> {
            Ok(AttentionParams {
                w_q: lookup(store, &format!("{path}.w_q"))?,
                w_k: lookup(store, &format!("{path}.w_k"))?,
                w_v: lookup(store, &format!("{path}.w_v"))?,
            })
        };
        Ok(Self {
            cell: affine(store, "cell")?,
            layers,
            lstm: LstmParams {
                input_gate: gate("i")?,
                forget_gate: gate("f")?,
                cell_gate: gate("g")?,
                output_gate: gate("o")?,
            },
            attn_gin: attention("attn_gin")?,
            attn_lstm: attention("attn_lstm")?,
            head: HeadParams {
                hidden: affine(store, "head.hidden")?,
                middle: affine(store, "head.middle")?,
                logit: affine(store, "head.logit")?,
            },
        })
    }
}
