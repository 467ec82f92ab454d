//! Run configuration: a flat JSON file keyed by the reference hyperparameter
//! names, overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use resgin::chem::ATOM_FEATURE_DIM;
use resgin::eval::TnrForm;
use resgin::model::{ModelConfig, Variant};
use resgin::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Every key a config file may contain. Absent keys fall back to defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub molecule_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub middle_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lstm_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_heads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold_limit: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parallel_folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tnr_form: Option<TnrForm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_name: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Fills every field of `self` that is unset from `lower`.
    pub fn or(self, lower: FileConfig) -> FileConfig {
        macro_rules! pick {
            ($($f:ident),*) => { FileConfig { $($f: self.$f.or(lower.$f)),* } };
        }
        pick!(
            molecule_channels, hidden_channels, middle_channels, attention_channels, lstm_channels,
            layer_count, out_channels, num_heads, dropout, variant, train_batch_size, test_batch_size,
            lr, num_epochs, n_folds, fold_limit, parallel_folds, seed, tnr_form, data, cells, out, run_name
        )
    }
}

/// The effective configuration of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub test_batch_size: usize,
    pub data: Option<PathBuf>,
    pub cells: Option<PathBuf>,
    pub out: PathBuf,
    pub run_name: String,
}

impl RunConfig {
    /// Resolves `flags` over `file` over defaults.
    pub fn resolve(flags: FileConfig, file: FileConfig, default_run_name: &str) -> Result<Self, CliError> {
        let c = flags.or(file);
        let base = TrainConfig::default();
        let model_base = ModelConfig::default();
        if let Some(m) = c.molecule_channels {
            if m != ATOM_FEATURE_DIM {
                return Err(CliError::Config(format!(
                    "molecule_channels is fixed by the atom featurizer at {ATOM_FEATURE_DIM}, got {m}"
                )));
            }
        }
        let middle = c.middle_channels.unwrap_or(model_base.d_middle);
        let hidden = c.hidden_channels.unwrap_or(model_base.d_hidden);
        let model = ModelConfig {
            d_hidden: hidden,
            d_middle: middle,
            d_attn: c.attention_channels.unwrap_or(middle),
            d_lstm: c.lstm_channels.unwrap_or(hidden),
            layers: c.layer_count.unwrap_or(model_base.layers),
            out_classes: c.out_channels.unwrap_or(model_base.out_classes),
            n_heads: c.num_heads.unwrap_or(model_base.n_heads),
            dropout: c.dropout.unwrap_or(model_base.dropout),
            variant: c.variant.unwrap_or(model_base.variant),
            ..model_base
        };
        let train = TrainConfig {
            lr: c.lr.unwrap_or(base.lr),
            epochs: c.num_epochs.unwrap_or(base.epochs),
            batch_size: c.train_batch_size.unwrap_or(base.batch_size),
            folds: c.n_folds.unwrap_or(base.folds),
            seed: c.seed.unwrap_or(base.seed),
            model,
            tnr_form: c.tnr_form.unwrap_or(base.tnr_form),
            fold_limit: c.fold_limit,
            parallel_folds: c.parallel_folds.unwrap_or(base.parallel_folds),
        };
        train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let test_batch_size = c.test_batch_size.unwrap_or(base.batch_size);
        if test_batch_size == 0 {
            return Err(CliError::Config("test_batch_size must be at least 1".into()));
        }
        Ok(Self {
            train,
            test_batch_size,
            data: c.data,
            cells: c.cells,
            out: c.out.unwrap_or_else(|| PathBuf::from("out")),
            run_name: c.run_name.unwrap_or_else(|| default_run_name.to_string()),
        })
    }

    /// The fully populated file form, suitable for `--config`.
    pub fn to_file(&self) -> FileConfig {
        let m = &self.train.model;
        FileConfig {
            molecule_channels: Some(m.d_atom),
            hidden_channels: Some(m.d_hidden),
            middle_channels: Some(m.d_middle),
            attention_channels: Some(m.d_attn),
            lstm_channels: Some(m.d_lstm),
            layer_count: Some(m.layers),
            out_channels: Some(m.out_classes),
            num_heads: Some(m.n_heads),
            dropout: Some(m.dropout),
            variant: Some(m.variant),
            train_batch_size: Some(self.train.batch_size),
            test_batch_size: Some(self.test_batch_size),
            lr: Some(self.train.lr),
            num_epochs: Some(self.train.epochs),
            n_folds: Some(self.train.folds),
            fold_limit: self.train.fold_limit,
            parallel_folds: Some(self.train.parallel_folds),
            seed: Some(self.train.seed),
            tnr_form: Some(self.train.tnr_form),
            data: self.data.clone(),
            cells: self.cells.clone(),
            out: Some(self.out.clone()),
            run_name: Some(self.run_name.clone()),
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.join(&self.run_name)
    }

    /// Both input paths, checked to exist.
    pub fn inputs(&self) -> Result<(&Path, &Path), CliError> {
        let data = self
            .data
            .as_deref()
            .ok_or_else(|| CliError::Usage("missing --data (or \"data\" in the config file)".into()))?;
        let cells = self
            .cells
            .as_deref()
            .ok_or_else(|| CliError::Usage("missing --cells (or \"cells\" in the config file)".into()))?;
        for p in [data, cells] {
            if !p.is_file() {
                return Err(CliError::Data(resgin::data::DataError::FileNotFound(p.to_path_buf())));
            }
        }
        Ok((data, cells))
    }
}
