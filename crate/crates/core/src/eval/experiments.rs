//! Ablation, learning-rate/dropout grid and depth sweep runners.
//!
//! Every runner trains under the caller's root seed and returns rows in a
//! fixed order, so the CSV and JSON tables they produce are reproducible
//! byte for byte.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use super::{smoothing_profile, MetricsReport, SmoothingProfile};
use crate::data::{kfold_split, DataError, Dataset};
use crate::diffcore::Tensor;
use crate::model::{Model, ModelError, Variant};
use crate::train::{run_cv_with_split, CvResult, Progress, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot write results: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write results: {0}")]
    Csv(#[from] csv::Error),
}

pub const DEFAULT_DEPTHS: [usize; 4] = [1, 2, 3, 4];
pub const DEFAULT_LRS: [f64; 3] = [5e-5, 5e-4, 5e-3];
pub const DEFAULT_DROPOUTS: [f64; 4] = [0.1, 0.2, 0.3, 0.4];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub mean: MetricsReport,
    pub std: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub lr: f64,
    pub dropout: f64,
    pub mean: MetricsReport,
    pub std: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthRow {
    pub variant: Variant,
    pub depth: usize,
    pub mean: MetricsReport,
    pub std: MetricsReport,
    pub smoothing: SmoothingProfile,
}

fn cross_validate(dataset: &Dataset, config: &TrainConfig, progress: Option<Progress<'_>>) -> Result<CvResult, ExperimentError> {
    config.validate()?;
    let split = kfold_split(dataset.len(), config.folds, config.seed)?;
    Ok(run_cv_with_split(dataset, &split, config, progress)?)
}

/// Trains the three variants on one shared split and seed.
pub fn ablation_run(dataset: &Dataset, config: &TrainConfig, progress: Option<Progress<'_>>) -> Result<Vec<AblationRow>, ExperimentError> {
    config.validate()?;
    let split = kfold_split(dataset.len(), config.folds, config.seed)?;
    Variant::ALL
        .iter()
        .map(|&variant| {
            let mut cfg = config.clone();
            cfg.model.variant = variant;
            let cv = run_cv_with_split(dataset, &split, &cfg, progress)?;
            Ok(AblationRow {
                variant,
                mean: cv.mean,
                std: cv.std,
            })
        })
        .collect()
}

/// One cross-validated run per (learning rate, dropout) pair, learning rate outermost.
pub fn sensitivity_sweep(
    dataset: &Dataset,
    base: &TrainConfig,
    lrs: &[f64],
    dropouts: &[f64],
    progress: Option<Progress<'_>>,
) -> Result<Vec<SensitivityRow>, ExperimentError> {
    if lrs.is_empty() {
        return Err(ExperimentError::EmptyGrid("learning rates"));
    }
    if dropouts.is_empty() {
        return Err(ExperimentError::EmptyGrid("dropout rates"));
    }
    let mut rows = Vec::with_capacity(lrs.len() * dropouts.len());
    for &lr in lrs {
        for &dropout in dropouts {
            let mut cfg = base.clone();
            cfg.lr = lr;
            cfg.model.dropout = dropout;
            let cv = cross_validate(dataset, &cfg, progress)?;
            rows.push(SensitivityRow {
                lr,
                dropout,
                mean: cv.mean,
                std: cv.std,
            });
        }
    }
    Ok(rows)
}

/// Per-layer smoothing of `model` averaged over `graphs`, each conditioned on `profile`.
pub fn average_smoothing<'a>(
    model: &Model,
    graphs: impl IntoIterator<Item = &'a crate::chem::MolecularGraph>,
    profile: &[f64],
) -> Result<SmoothingProfile, ModelError> {
    let mut sums: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for g in graphs {
        let states: Vec<Tensor> = model.node_states(g, profile)?;
        let p = smoothing_profile(&states);
        if sums.is_empty() {
            sums = vec![0.0; p.per_layer.len()];
        }
        for (s, v) in sums.iter_mut().zip(&p.per_layer) {
            *s += v;
        }
        count += 1;
    }
    if count > 0 {
        sums.iter_mut().for_each(|s| *s /= count as f64);
    }
    Ok(SmoothingProfile { per_layer: sums })
}

/// Trains every (variant, depth) pair under the same seed and split. The
/// smoothing column is measured with the first fold's model over every
/// distinct drug in the dataset, using the first cell line's profile.
pub fn depth_sweep(
    dataset: &Dataset,
    base: &TrainConfig,
    depths: &[usize],
    variants: &[Variant],
    progress: Option<Progress<'_>>,
) -> Result<Vec<DepthRow>, ExperimentError> {
    if depths.is_empty() {
        return Err(ExperimentError::EmptyGrid("depths"));
    }
    if variants.is_empty() {
        return Err(ExperimentError::EmptyGrid("variants"));
    }
    base.validate()?;
    let split = kfold_split(dataset.len(), base.folds, base.seed)?;
    let mut smiles: Vec<&str> = dataset
        .samples()
        .iter()
        .flat_map(|s| [s.drug_a.as_str(), s.drug_b.as_str()])
        .collect();
    smiles.sort_unstable();
    smiles.dedup();
    let graphs: Vec<_> = smiles.iter().filter_map(|s| dataset.graphs().get(s)).collect();
    let profile = dataset
        .cells()
        .ids()
        .first()
        .and_then(|id| dataset.cells().profile(id))
        .unwrap_or(&[]);

    let mut rows = Vec::with_capacity(depths.len() * variants.len());
    for &variant in variants {
        for &depth in depths {
            let mut cfg = base.clone();
            cfg.model.variant = variant;
            cfg.model.layers = depth;
            let cv = run_cv_with_split(dataset, &split, &cfg, progress)?;
            let smoothing = average_smoothing(&cv.folds[0].model, graphs.iter().copied(), profile)?;
            rows.push(DepthRow {
                variant,
                depth,
                mean: cv.mean,
                std: cv.std,
                smoothing,
            });
        }
    }
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metric_header(prefix: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    h.extend(MetricsReport::NAMES.iter().map(|n| n.to_string()));
    h.extend(MetricsReport::NAMES.iter().map(|n| format!("{n}_std")));
    h
}

fn metric_cells(mean: &MetricsReport, std: &MetricsReport) -> impl Iterator<Item = String> {
    mean.values().into_iter().chain(std.values()).map(cell)
}

/// Columns: `variant`, the eight metric means, the eight `<metric>_std` columns.
pub fn write_ablation_csv<W: Write>(out: W, rows: &[AblationRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(metric_header(&["variant"]))?;
    for r in rows {
        let mut rec = vec![r.variant.to_string()];
        rec.extend(metric_cells(&r.mean, &r.std));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `lr`, `dropout`, then the metric means and deviations.
pub fn write_sensitivity_csv<W: Write>(out: W, rows: &[SensitivityRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(metric_header(&["lr", "dropout"]))?;
    for r in rows {
        let mut rec = vec![r.lr.to_string(), r.dropout.to_string()];
        rec.extend(metric_cells(&r.mean, &r.std));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `variant`, `depth`, metric means and deviations, then
/// `smoothing_mean`, `smoothing_last` and `smoothing_per_layer`
/// (semicolon-separated, first layer first).
pub fn write_depth_csv<W: Write>(out: W, rows: &[DepthRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = metric_header(&["variant", "depth"]);
    header.extend(["smoothing_mean", "smoothing_last", "smoothing_per_layer"].map(String::from));
    w.write_record(header)?;
    for r in rows {
        let mut rec = vec![r.variant.to_string(), r.depth.to_string()];
        rec.extend(metric_cells(&r.mean, &r.std));
        rec.push(r.smoothing.mean().to_string());
        rec.push(cell(r.smoothing.last()));
        rec.push(
            r.smoothing
                .per_layer
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(";"),
        );
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}
