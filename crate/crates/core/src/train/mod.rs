//! Cross-entropy training with Adam and k-fold cross-validation.

mod adam;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{batch_iter, kfold_split, DataError, Dataset, FoldSplit};
use crate::diffcore::Gradients;
use crate::eval::{evaluate, EvalError, MetricsReport, TnrForm};
use crate::model::{Mode, Model, ModelConfig, ModelError, PROB_CLAMP};

pub use adam::Adam;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("loss over an empty batch")]
    EmptyBatch,
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("optimizer state for {name} has shape {expected:?}, gradient has {found:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("fold {fold}, epoch {epoch}: non-finite loss")]
    NonFiniteLoss { fold: usize, epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Offsets added to a fold's seed for each consumer of randomness.
pub mod seeds {
    pub const INIT: u64 = 0;
    pub const SHUFFLE: u64 = 1_000_003;
    pub const DROPOUT: u64 = 2_000_003;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub folds: usize,
    pub seed: u64,
    pub model: ModelConfig,
    pub tnr_form: TnrForm,
    /// Train only the first `n` folds of the split.
    pub fold_limit: Option<usize>,
    /// Number of folds trained concurrently.
    pub parallel_folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            epochs: 200,
            batch_size: 128,
            folds: 5,
            seed: 0,
            model: ModelConfig::default(),
            tnr_form: TnrForm::Standard,
            fold_limit: None,
            parallel_folds: 1,
        }
    }
}

impl TrainConfig {
    /// Checks every field. `model.d_gene` is ignored because training binds it from the dataset.
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: String| Err(TrainError::InvalidConfig(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if self.folds < 2 {
            return fail(format!("need at least 2 folds, got {}", self.folds));
        }
        if self.fold_limit == Some(0) {
            return fail("fold limit must be at least 1".into());
        }
        if self.parallel_folds == 0 {
            return fail("parallel folds must be at least 1".into());
        }
        ModelConfig {
            d_gene: self.model.d_gene.max(1),
            ..self.model.clone()
        }
        .validate()?;
        Ok(())
    }
}

/// Mean binary cross-entropy with probabilities clamped into
/// `[PROB_CLAMP, 1 − PROB_CLAMP]`.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<f64, TrainError> {
    if p.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    if p.len() != y.len() {
        return Err(TrainError::LengthMismatch {
            predictions: p.len(),
            labels: y.len(),
        });
    }
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / p.len() as f64)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub fold: usize,
    pub epoch: usize,
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    /// Mean training loss of each epoch, dropout active.
    pub epoch_losses: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub test_indices: Vec<usize>,
    pub test_scores: Vec<f64>,
    pub metrics: MetricsReport,
    pub model: Model,
}

impl FoldResult {
    pub fn records(&self) -> impl Iterator<Item = EpochRecord> + '_ {
        self.epoch_losses
            .iter()
            .zip(&self.epoch_seconds)
            .enumerate()
            .map(|(e, (&loss, &seconds))| EpochRecord {
                fold: self.fold,
                epoch: e + 1,
                loss,
                seconds,
            })
    }
}

/// Callback invoked after every epoch. Must tolerate calls from several folds at once.
pub type Progress<'a> = &'a (dyn Fn(&EpochRecord) + Sync);

const CHUNK: usize = 8;

/// Mean loss and gradient over `batch`. Samples are processed in fixed-size
/// chunks whose partial sums are combined in index order, so the result does
/// not depend on thread scheduling.
pub fn batch_gradients(
    model: &Model,
    dataset: &Dataset,
    batch: &[usize],
    dropout_seed: Option<(u64, usize)>,
) -> Result<(f64, Gradients), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let partials: Vec<Result<(f64, Gradients), ModelError>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut grads = model.params().zero_gradients();
            for &i in chunk {
                let ex = dataset.example(i);
                let mode = match dropout_seed {
                    Some((seed, epoch)) => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(((epoch as u64) << 32) | i as u64);
                        Mode::Train(rng)
                    }
                    None => Mode::Infer,
                };
                let (l, _, g) = model.loss_and_gradients(ex.drug_a, ex.drug_b, ex.profile, ex.label, mode)?;
                loss += l;
                grads.add_assign(&g);
            }
            Ok((loss, grads))
        })
        .collect();
    let mut loss = 0.0;
    let mut grads = model.params().zero_gradients();
    for part in partials {
        let (l, g) = part?;
        loss += l;
        grads.add_assign(&g);
    }
    let scale = 1.0 / batch.len() as f64;
    grads.scale(scale);
    Ok((loss * scale, grads))
}

/// Inference-mode probabilities for `indices`, in order.
pub fn predict_indices(model: &Model, dataset: &Dataset, indices: &[usize]) -> Result<Vec<f64>, TrainError> {
    let scores: Result<Vec<f64>, ModelError> = indices
        .par_iter()
        .map(|&i| {
            let ex = dataset.example(i);
            model.predict(ex.drug_a, ex.drug_b, ex.profile)
        })
        .collect();
    Ok(scores?)
}

/// Trains a fresh model on every fold except `fold` and evaluates it on `fold`.
pub fn train_fold(
    dataset: &Dataset,
    split: &FoldSplit,
    fold: usize,
    config: &TrainConfig,
    progress: Option<Progress<'_>>,
) -> Result<FoldResult, TrainError> {
    config.validate()?;
    if fold >= split.k() {
        return Err(TrainError::InvalidConfig(format!(
            "fold {fold} out of range for {} folds",
            split.k()
        )));
    }
    let model_config = ModelConfig {
        d_gene: dataset.d_gene(),
        ..config.model.clone()
    };
    let fold_seed = config.seed.wrapping_add(fold as u64);
    let mut model = Model::init(model_config, fold_seed.wrapping_add(seeds::INIT))?;
    let mut adam = Adam::new(model.params(), config.lr);
    let train = split.train(fold);
    if train.is_empty() {
        return Err(TrainError::EmptyBatch);
    }

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut epoch_seconds = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let shuffle_seed = fold_seed
            .wrapping_add(seeds::SHUFFLE)
            .wrapping_add(epoch as u64);
        let mut weighted = 0.0;
        for batch in batch_iter(&train, config.batch_size, true, shuffle_seed) {
            let dropout = Some((fold_seed.wrapping_add(seeds::DROPOUT), epoch));
            let (loss, grads) = batch_gradients(&model, dataset, &batch, dropout)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { fold, epoch });
            }
            weighted += loss * batch.len() as f64;
            adam.step(model.params_mut(), &grads)?;
        }
        let loss = weighted / train.len() as f64;
        let seconds = start.elapsed().as_secs_f64();
        epoch_losses.push(loss);
        epoch_seconds.push(seconds);
        if let Some(report) = progress {
            report(&EpochRecord {
                fold,
                epoch,
                loss,
                seconds,
            });
        }
    }

    let test_indices = split.test(fold).to_vec();
    let test_scores = predict_indices(&model, dataset, &test_indices)?;
    let labels: Vec<f64> = test_indices.iter().map(|&i| dataset.example(i).label).collect();
    let metrics = evaluate(&test_scores, &labels, config.tnr_form)?;
    Ok(FoldResult {
        fold,
        epoch_losses,
        epoch_seconds,
        test_indices,
        test_scores,
        metrics,
        model,
    })
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub split: FoldSplit,
    pub folds: Vec<FoldResult>,
    pub mean: MetricsReport,
    /// Sample standard deviation across folds.
    pub std: MetricsReport,
}

/// Per-metric mean and sample standard deviation over the reports in which
/// the metric is defined. The deviation is empty for fewer than two values.
pub fn aggregate(reports: &[MetricsReport]) -> (MetricsReport, MetricsReport) {
    let mut mean = [None; 8];
    let mut std = [None; 8];
    for k in 0..8 {
        let vals: Vec<f64> = reports.iter().filter_map(|r| r.values()[k]).collect();
        if vals.is_empty() {
            continue;
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        mean[k] = Some(m);
        if vals.iter().all(|&v| v == vals[0]) && vals.len() > 1 {
            std[k] = Some(0.0);
        } else if vals.len() > 1 {
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64;
            std[k] = Some(var.sqrt());
        }
    }
    let build = |v: [Option<f64>; 8]| MetricsReport {
        acc: v[0],
        prec: v[1],
        recall: v[2],
        tpr: v[3],
        tnr: v[4],
        bacc: v[5],
        f1: v[6],
        auc: v[7],
    };
    (build(mean), build(std))
}

/// Splits `dataset` into `config.folds` folds and trains one model per fold.
pub fn run_cv(dataset: &Dataset, config: &TrainConfig, progress: Option<Progress<'_>>) -> Result<CvResult, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let split = kfold_split(dataset.len(), config.folds, config.seed)?;
    run_cv_with_split(dataset, &split, config, progress)
}

pub fn run_cv_with_split(
    dataset: &Dataset,
    split: &FoldSplit,
    config: &TrainConfig,
    progress: Option<Progress<'_>>,
) -> Result<CvResult, TrainError> {
    let n = config.fold_limit.map_or(split.k(), |l| l.min(split.k()));
    let folds: Vec<FoldResult> = if config.parallel_folds > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallel_folds)
            .build()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|f| train_fold(dataset, split, f, config, progress))
                .collect::<Result<_, _>>()
        })?
    } else {
        (0..n)
            .map(|f| train_fold(dataset, split, f, config, progress))
            .collect::<Result<_, _>>()?
    };
    let reports: Vec<MetricsReport> = folds.iter().map(|f| f.metrics).collect();
    let (mean, std) = aggregate(&reports);
    Ok(CvResult {
        split: split.clone(),
        folds,
        mean,
        std,
    })
}
