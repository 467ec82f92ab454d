//! Synergy samples, expression tables, parsed-graph caching and fold splits.

mod cells;
mod samples;
mod split;
pub mod toy;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::chem::{build_graph, parse_smiles, ChemError, MolecularGraph};

pub use cells::{load_cell_lines, read_cell_lines, CellLineTable};
pub use samples::{load_samples, read_samples, write_samples, LoadOptions, SynergySample, SAMPLE_HEADER};
pub use split::{batch_iter, kfold_split, FoldSplit};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("{0} has no data rows")]
    NoRows(String),
    #[error("line {line}: expected {expected} values, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },
    #[error("line {line}: duplicate cell line id {id:?}")]
    DuplicateId { id: String, line: u64 },
    #[error("line {line}: value {value:?} is not a finite number")]
    BadNumber { line: u64, value: String },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{}", format_rows(.0))]
    Rows(Vec<RowError>),
    #[error("invalid fold count k={k} for {n} samples (need 2 <= k <= n)")]
    InvalidK { k: usize, n: usize },
}

fn format_rows(rows: &[RowError]) -> String {
    let mut out = format!("{} invalid row(s)", rows.len());
    for r in rows.iter().take(20) {
        out.push_str(&format!("\n  {r}"));
    }
    if rows.len() > 20 {
        out.push_str(&format!("\n  ... and {} more", rows.len() - 20));
    }
    out
}

/// A defect in one sample row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub kind: RowErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowErrorKind {
    InvalidLabel(String),
    BadSmiles { smiles: String, error: ChemError },
    UnknownCellLine(String),
    FieldCount(usize),
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: ", self.line)?;
        match &self.kind {
            RowErrorKind::InvalidLabel(v) => write!(f, "invalid label {v:?} (expected 0 or 1)"),
            RowErrorKind::BadSmiles { smiles, error } => write!(f, "cannot parse {smiles:?}: {error}"),
            RowErrorKind::UnknownCellLine(id) => write!(f, "unknown cell line {id:?}"),
            RowErrorKind::FieldCount(n) => write!(f, "expected 4 fields, found {n}"),
        }
    }
}

fn open(path: &Path) -> Result<std::fs::File, DataError> {
    std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DataError::FileNotFound(path.to_path_buf()),
        _ => DataError::Io(e),
    })
}

/// Parsed graphs keyed by SMILES text. Each distinct string is parsed once,
/// failures included.
#[derive(Debug, Default, Clone)]
pub struct GraphCache {
    graphs: HashMap<String, Result<MolecularGraph, ChemError>>,
    parses: usize,
}

impl GraphCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_parse(&mut self, smiles: &str) -> Result<&MolecularGraph, ChemError> {
        if !self.graphs.contains_key(smiles) {
            self.parses += 1;
            let parsed = parse_smiles(smiles).map(|m| build_graph(&m));
            self.graphs.insert(smiles.to_string(), parsed);
        }
        self.graphs[smiles].as_ref().map_err(Clone::clone)
    }

    pub fn get(&self, smiles: &str) -> Option<&MolecularGraph> {
        self.graphs.get(smiles).and_then(|r| r.as_ref().ok())
    }

    /// Number of parser invocations so far.
    pub fn parse_count(&self) -> usize {
        self.parses
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// One training example resolved against the cache and expression table.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub drug_a: &'a MolecularGraph,
    pub drug_b: &'a MolecularGraph,
    pub profile: &'a [f64],
    pub label: f64,
}

/// Samples with every graph and profile they reference. Immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    samples: Vec<SynergySample>,
    cells: CellLineTable,
    graphs: GraphCache,
}

impl Dataset {
    /// Builds a dataset from in-memory samples, validating every row.
    pub fn new(samples: Vec<SynergySample>, cells: CellLineTable) -> Result<Self, DataError> {
        let mut graphs = GraphCache::new();
        let mut errors = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            errors.extend(samples::validate(s, i as u64 + 2, &cells, &mut graphs));
        }
        if !errors.is_empty() {
            return Err(DataError::Rows(errors));
        }
        Ok(Self { samples, cells, graphs })
    }

    pub fn load(samples: impl AsRef<Path>, cells: impl AsRef<Path>, options: LoadOptions) -> Result<Self, DataError> {
        let cells = load_cell_lines(cells)?;
        let mut graphs = GraphCache::new();
        let samples = load_samples(samples, &cells, &mut graphs, options)?;
        Ok(Self { samples, cells, graphs })
    }

    pub fn samples(&self) -> &[SynergySample] {
        &self.samples
    }

    pub fn cells(&self) -> &CellLineTable {
        &self.cells
    }

    pub fn graphs(&self) -> &GraphCache {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn d_gene(&self) -> usize {
        self.cells.d_gene()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| f64::from(s.label)).collect()
    }

    pub fn example(&self, i: usize) -> Example<'_> {
        let s = &self.samples[i];
        Example {
            drug_a: self.graphs.get(&s.drug_a).expect("validated at load"),
            drug_b: self.graphs.get(&s.drug_b).expect("validated at load"),
            profile: self.cells.profile(&s.cell_line).expect("validated at load"),
            label: f64::from(s.label),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_parses_each_string_once() {
        let mut cache = GraphCache::new();
        for s in ["CCO", "CCO", "c1ccccc1", "CCO", "C1CC", "C1CC"] {
            let _ = cache.get_or_parse(s);
        }
        assert_eq!(cache.parse_count(), 3);
        assert_eq!(cache.get("CCO").unwrap().num_nodes(), 3);
        assert!(cache.get("C1CC").is_none());
        assert!(matches!(
            cache.get_or_parse("C1CC"),
            Err(ChemError::UnmatchedRingBond { .. })
        ));
        assert_eq!(cache.parse_count(), 3);
    }

    #[test]
    fn dataset_from_memory_validates_rows() {
        let cells = CellLineTable::from_rows(vec![("A".into(), vec![1.0, 2.0])]).unwrap();
        let good = SynergySample::new("CCO", "CCN", "A", 1);
        let ds = Dataset::new(vec![good.clone()], cells.clone()).unwrap();
        let ex = ds.example(0);
        assert_eq!((ex.drug_a.num_nodes(), ex.profile, ex.label), (3, &[1.0, 2.0][..], 1.0));

        let bad = SynergySample::new("CCO", "C(", "B", 1);
        match Dataset::new(vec![good, bad], cells) {
            Err(DataError::Rows(rows)) => {
                assert_eq!(rows.len(), 2);
                assert!(rows.iter().all(|r| r.line == 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
