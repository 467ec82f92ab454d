use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use resgin::data::toy::write_toy_files;
use resgin::data::{DataError, Dataset, GraphCache, LoadOptions, RowError, RowErrorKind, SAMPLE_HEADER};
use resgin::eval::experiments::{
    ablation_run, depth_sweep, sensitivity_sweep, write_ablation_csv, write_depth_csv, write_sensitivity_csv,
    DEFAULT_DEPTHS, DEFAULT_DROPOUTS, DEFAULT_LRS,
};
use resgin::eval::MetricsReport;
use resgin::model::{checkpoint, Mode, Variant};
use resgin::train::{run_cv, EpochRecord};
use serde::Serialize;

use crate::config::{FileConfig, RunConfig};
use crate::error::CliError;
use crate::{ExperimentArgs, ExperimentName, PredictArgs, RunArgs, ToyArgs};

/// Streams epoch records to `log.jsonl` and, unless quiet, to stderr.
struct EpochLog {
    file: Mutex<BufWriter<File>>,
    failure: Mutex<Option<io::Error>>,
    quiet: bool,
}

impl EpochLog {
    fn create(path: &Path, quiet: bool) -> Result<Self, CliError> {
        let file = File::create(path).map_err(CliError::io(path))?;
        Ok(Self {
            file: Mutex::new(BufWriter::new(file)),
            failure: Mutex::new(None),
            quiet,
        })
    }

    fn record(&self, r: &EpochRecord) {
        if !self.quiet {
            eprintln!("fold {} epoch {:>4}  loss {:.6}  ({:.2}s)", r.fold + 1, r.epoch, r.loss, r.seconds);
        }
        let line = serde_json::json!({
            "fold": r.fold + 1,
            "epoch": r.epoch,
            "loss": r.loss,
            "seconds": r.seconds,
        });
        let mut file = self.file.lock().expect("log lock");
        if let Err(e) = writeln!(file, "{line}").and_then(|_| file.flush()) {
            self.failure.lock().expect("log lock").get_or_insert(e);
        }
    }

    fn finish(self, path: &Path) -> Result<(), CliError> {
        match self.failure.into_inner().expect("log lock") {
            Some(e) => Err(CliError::Io {
                path: path.to_path_buf(),
                source: e,
            }),
            None => Ok(()),
        }
    }
}

struct Prepared {
    config: RunConfig,
    dataset: Dataset,
    dir: std::path::PathBuf,
}

/// Resolves the configuration, validates inputs, creates the run directory,
/// echoes the effective config and loads the dataset.
fn prepare(args: &RunArgs, default_run_name: &str) -> Result<Prepared, CliError> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let config = RunConfig::resolve(args.flags(), file, default_run_name)?;
    let (data, cells) = config.inputs()?;
    let dir = config.run_dir();
    fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    let dataset = Dataset::load(
        data,
        cells,
        LoadOptions {
            fail_fast: args.fail_fast,
        },
    )?;
    let mut echoed = config.clone();
    echoed.train.model.d_gene = dataset.d_gene();
    let json = serde_json::to_string_pretty(&echoed.to_file()).expect("config serializes");
    let path = dir.join("config.json");
    fs::write(&path, json + "\n").map_err(CliError::io(&path))?;
    Ok(Prepared { config, dataset, dir })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_summary(path: &Path, per_fold: &[(usize, MetricsReport)], mean: &MetricsReport, std: &MetricsReport) -> Result<(), CliError> {
    let mut out = String::from("fold");
    for n in MetricsReport::NAMES {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    let mut row = |label: String, r: &MetricsReport| {
        out.push_str(&label);
        for v in r.values() {
            out.push(',');
            out.push_str(&cell(v));
        }
        out.push('\n');
    };
    for (fold, r) in per_fold {
        row((fold + 1).to_string(), r);
    }
    row("mean".into(), mean);
    row("std".into(), std);
    fs::write(path, out).map_err(CliError::io(path))
}

fn format_pm(mean: Option<f64>, std: Option<f64>) -> String {
    match (mean, std) {
        (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
        (Some(m), None) => format!("{m:.4}"),
        _ => "undefined".into(),
    }
}

pub fn train(args: &RunArgs) -> Result<(), CliError> {
    let Prepared { config, dataset, dir } = prepare(args, "train")?;
    let log_path = dir.join("log.jsonl");
    let log = EpochLog::create(&log_path, args.quiet)?;
    let cv = run_cv(&dataset, &config.train, Some(&|r: &EpochRecord| log.record(r)))?;
    log.finish(&log_path)?;

    for fold in &cv.folds {
        let path = dir.join(format!("fold{}.ckpt", fold.fold + 1));
        checkpoint::save(&fold.model, &path)?;
    }
    let per_fold: Vec<_> = cv.folds.iter().map(|f| (f.fold, f.metrics)).collect();
    write_summary(&dir.join("summary.csv"), &per_fold, &cv.mean, &cv.std)?;

    println!("{} folds trained, results in {}", cv.folds.len(), dir.display());
    for (k, name) in MetricsReport::NAMES.iter().enumerate() {
        println!("{name:>6}  {}", format_pm(cv.mean.values()[k], cv.std.values()[k]));
    }
    Ok(())
}

#[derive(Serialize)]
struct ExperimentSummary<'a, T: Serialize> {
    experiment: &'a str,
    rows: &'a [T],
}

fn write_results<T: Serialize>(
    dir: &Path,
    stem: &str,
    rows: &[T],
    write_csv: impl FnOnce(&mut Vec<u8>, &[T]) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, &buf).map_err(CliError::io(&csv_path))?;
    let json = serde_json::to_string_pretty(&ExperimentSummary { experiment: stem, rows }).expect("rows serialize");
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&json_path, json + "\n").map_err(CliError::io(&json_path))?;
    io::stdout().write_all(&buf).map_err(CliError::io("<stdout>"))?;
    Ok(())
}

pub fn experiment(args: &ExperimentArgs) -> Result<(), CliError> {
    let stem = match args.name {
        ExperimentName::Ablate => "ablation",
        ExperimentName::DepthSweep => "depth_sweep",
        ExperimentName::Sensitivity => "sensitivity",
    };
    let Prepared { config, dataset, dir } = prepare(&args.run, stem)?;
    let log_path = dir.join("log.jsonl");
    let log = EpochLog::create(&log_path, args.run.quiet)?;
    let progress = |r: &EpochRecord| log.record(r);
    match args.name {
        ExperimentName::Ablate => {
            let rows = ablation_run(&dataset, &config.train, Some(&progress))?;
            write_results(&dir, stem, &rows, |w, r| Ok(write_ablation_csv(w, r)?))?;
        }
        ExperimentName::DepthSweep => {
            let depths = args.depths.clone().unwrap_or_else(|| DEFAULT_DEPTHS.to_vec());
            let variants = args.variants.clone().unwrap_or_else(|| Variant::ALL.to_vec());
            let rows = depth_sweep(&dataset, &config.train, &depths, &variants, Some(&progress))?;
            write_results(&dir, stem, &rows, |w, r| Ok(write_depth_csv(w, r)?))?;
        }
        ExperimentName::Sensitivity => {
            let lrs = args.lrs.clone().unwrap_or_else(|| DEFAULT_LRS.to_vec());
            let dropouts = args.dropouts.clone().unwrap_or_else(|| DEFAULT_DROPOUTS.to_vec());
            let rows = sensitivity_sweep(&dataset, &config.train, &lrs, &dropouts, Some(&progress))?;
            write_results(&dir, stem, &rows, |w, r| Ok(write_sensitivity_csv(w, r)?))?;
        }
    }
    log.finish(&log_path)
}

/// Indices of the `k` largest weights, largest first; ties keep atom order.
pub fn top_atoms(weights: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn joined(idx: &[usize]) -> String {
    idx.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

fn row_error(line: u64, kind: RowErrorKind) -> CliError {
    CliError::Data(DataError::Rows(vec![RowError { line, kind }]))
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    for p in [&args.checkpoint, &args.pairs, &args.cells] {
        if !p.is_file() {
            return Err(DataError::FileNotFound(p.clone()).into());
        }
    }
    let model = checkpoint::load(&args.checkpoint).map_err(|e| CliError::Checkpoint(e.to_string()))?;
    let cells = resgin::data::load_cell_lines(&args.cells)?;
    if cells.d_gene() != model.config().d_gene {
        return Err(CliError::Checkpoint(format!(
            "checkpoint expects {} genes per profile, {} has {}",
            model.config().d_gene,
            args.cells.display(),
            cells.d_gene()
        )));
    }

    let file = File::open(&args.pairs).map_err(CliError::io(&args.pairs))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(DataError::from)?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.len() < 3 || header[..3] != SAMPLE_HEADER[..3] {
        return Err(DataError::BadHeader(format!(
            "expected {} [, label], found {}",
            SAMPLE_HEADER[..3].join(", "),
            header.join(", ")
        ))
        .into());
    }

    let mut out = csv::Writer::from_writer(Vec::new());
    let _ = out.write_record(["drug_a_smiles", "drug_b_smiles", "cell_line", "p", "top_atoms_a", "top_atoms_b"]);
    let mut graphs = GraphCache::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(DataError::from)?;
        let line = i as u64 + 2;
        if record.len() < 3 {
            return Err(row_error(line, RowErrorKind::FieldCount(record.len())));
        }
        let (a, b, cell_id) = (&record[0], &record[1], &record[2]);
        let profile = cells
            .profile(cell_id)
            .ok_or_else(|| row_error(line, RowErrorKind::UnknownCellLine(cell_id.to_string())))?;
        for s in [a, b] {
            graphs.get_or_parse(s).map_err(|error| {
                row_error(
                    line,
                    RowErrorKind::BadSmiles {
                        smiles: s.to_string(),
                        error,
                    },
                )
            })?;
        }
        let (ga, gb) = (graphs.get(a).expect("parsed"), graphs.get(b).expect("parsed"));
        let output = model.forward(ga, gb, profile, Mode::Infer)?;
        if !output.p.is_finite() {
            return Err(CliError::Numeric(format!("line {line}: non-finite probability")));
        }
        let att = &output.attention;
        let avg = |g: &[f64], l: &[f64]| g.iter().zip(l).map(|(x, y)| 0.5 * (x + y)).collect::<Vec<f64>>();
        let top_a = top_atoms(&avg(&att.gin_a, &att.lstm_a), args.top_k);
        let top_b = top_atoms(&avg(&att.gin_b, &att.lstm_b), args.top_k);
        out.write_record([a, b, cell_id, &output.p.to_string(), &joined(&top_a), &joined(&top_b)])
            .map_err(DataError::from)?;
    }
    let bytes = out.into_inner().map_err(|e| CliError::Io {
        path: "<buffer>".into(),
        source: io::Error::other(e.to_string()),
    })?;
    match &args.out {
        Some(path) => fs::write(path, bytes).map_err(CliError::io(path)),
        None => io::stdout().write_all(&bytes).map_err(CliError::io("<stdout>")),
    }
}

pub fn toy_data(args: &ToyArgs) -> Result<(), CliError> {
    if args.pairs > resgin::data::toy::max_pairs() {
        return Err(CliError::Usage(format!(
            "--pairs {} exceeds the {} distinct toy combinations",
            args.pairs,
            resgin::data::toy::max_pairs()
        )));
    }
    let (samples, cells) = write_toy_files(&args.out, args.pairs, args.seed).map_err(CliError::io(&args.out))?;
    println!("{}", samples.display());
    println!("{}", cells.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_atoms_orders_by_weight_then_index() {
        assert_eq!(top_atoms(&[0.1, 0.5, 0.2, 0.5], 3), vec![1, 3, 2]);
        assert_eq!(top_atoms(&[0.3], 5), vec![0]);
        assert!(top_atoms(&[0.3, 0.7], 0).is_empty());
    }

    #[test]
    fn summary_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let r = MetricsReport {
            acc: Some(0.5),
            ..Default::default()
        };
        write_summary(&path, &[(0, r)], &r, &MetricsReport::default()).unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert_eq!(
            text,
            "fold,acc,prec,recall,tpr,tnr,bacc,f1,auc\n1,0.5,,,,,,,\nmean,0.5,,,,,,,\nstd,,,,,,,,\n"
        );
    }
}
