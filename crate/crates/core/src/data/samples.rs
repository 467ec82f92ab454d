use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{open, CellLineTable, DataError, GraphCache, RowError, RowErrorKind};

pub const SAMPLE_HEADER: [&str; 4] = ["drug_a_smiles", "drug_b_smiles", "cell_line", "label"];

/// One labelled drug pair on one cell line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SynergySample {
    pub drug_a: String,
    pub drug_b: String,
    pub cell_line: String,
    /// 1 for a synergistic pair, 0 otherwise.
    pub label: u8,
}

impl SynergySample {
    pub fn new(drug_a: impl Into<String>, drug_b: impl Into<String>, cell_line: impl Into<String>, label: u8) -> Self {
        Self {
            drug_a: drug_a.into(),
            drug_b: drug_b.into(),
            cell_line: cell_line.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Stop at the first bad row instead of collecting all of them.
    pub fail_fast: bool,
}

pub(super) fn validate(sample: &SynergySample, line: u64, cells: &CellLineTable, graphs: &mut GraphCache) -> Vec<RowError> {
    let mut errors = Vec::new();
    for smiles in [&sample.drug_a, &sample.drug_b] {
        if let Err(error) = graphs.get_or_parse(smiles) {
            errors.push(RowError {
                line,
                kind: RowErrorKind::BadSmiles {
                    smiles: smiles.clone(),
                    error,
                },
            });
        }
    }
    if !cells.contains(&sample.cell_line) {
        errors.push(RowError {
            line,
            kind: RowErrorKind::UnknownCellLine(sample.cell_line.clone()),
        });
    }
    if sample.label > 1 {
        errors.push(RowError {
            line,
            kind: RowErrorKind::InvalidLabel(sample.label.to_string()),
        });
    }
    errors
}

pub fn load_samples(
    path: impl AsRef<Path>,
    cells: &CellLineTable,
    graphs: &mut GraphCache,
    options: LoadOptions,
) -> Result<Vec<SynergySample>, DataError> {
    read_samples(open(path.as_ref())?, cells, graphs, options)
}

/// Reads `drug_a_smiles,drug_b_smiles,cell_line,label` rows, parsing every
/// SMILES into `graphs` and checking each cell line against `cells`.
pub fn read_samples<R: Read>(
    reader: R,
    cells: &CellLineTable,
    graphs: &mut GraphCache,
    options: LoadOptions,
) -> Result<Vec<SynergySample>, DataError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = csv.records();
    let header = match records.next() {
        None => return Err(DataError::BadHeader("sample file is empty".into())),
        Some(r) => r?,
    };
    let names: Vec<&str> = header.iter().map(|h| h.trim_start_matches('\u{feff}')).collect();
    if names != SAMPLE_HEADER {
        return Err(DataError::BadHeader(format!(
            "expected {:?}, found {:?}",
            SAMPLE_HEADER.join(","),
            names.join(",")
        )));
    }

    let mut samples = Vec::new();
    let mut errors = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row_errors = if record.len() != 4 {
            vec![RowError {
                line,
                kind: RowErrorKind::FieldCount(record.len()),
            }]
        } else {
            let label = match &record[3] {
                "0" => Some(0),
                "1" => Some(1),
                _ => None,
            };
            let sample = SynergySample::new(&record[0], &record[1], &record[2], label.unwrap_or(0));
            let mut errs = validate(&sample, line, cells, graphs);
            if label.is_none() {
                errs.push(RowError {
                    line,
                    kind: RowErrorKind::InvalidLabel(record[3].to_string()),
                });
            }
            if errs.is_empty() {
                samples.push(sample);
            }
            errs
        };
        if !row_errors.is_empty() {
            errors.extend(row_errors);
            if options.fail_fast {
                break;
            }
        }
    }
    if errors.is_empty() {
        Ok(samples)
    } else {
        Err(DataError::Rows(errors))
    }
}

pub fn write_samples<W: Write>(out: W, samples: &[SynergySample]) -> Result<(), DataError> {
    let mut csv = csv::WriterBuilder::new().from_writer(out);
    csv.write_record(SAMPLE_HEADER)?;
    for s in samples {
        let label = s.label.to_string();
        csv.write_record([s.drug_a.as_str(), s.drug_b.as_str(), s.cell_line.as_str(), label.as_str()])?;
    }
    csv.flush()?;
    Ok(())
}
