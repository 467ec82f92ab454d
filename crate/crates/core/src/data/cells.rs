use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use super::{open, DataError};

/// Expression profiles keyed by cell-line id, all of width `d_gene`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellLineTable {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    profiles: Vec<Vec<f64>>,
    d_gene: usize,
}

impl CellLineTable {
    pub fn from_rows(rows: Vec<(String, Vec<f64>)>) -> Result<Self, DataError> {
        let d_gene = rows.first().map_or(0, |(_, p)| p.len());
        let mut table = Self {
            ids: Vec::with_capacity(rows.len()),
            index: HashMap::with_capacity(rows.len()),
            profiles: Vec::with_capacity(rows.len()),
            d_gene,
        };
        for (i, (id, profile)) in rows.into_iter().enumerate() {
            table.push(id, profile, i as u64 + 1)?;
        }
        Ok(table)
    }

    fn push(&mut self, id: String, profile: Vec<f64>, line: u64) -> Result<(), DataError> {
        if profile.len() != self.d_gene {
            return Err(DataError::RaggedRow {
                line,
                expected: self.d_gene,
                found: profile.len(),
            });
        }
        if self.index.contains_key(&id) {
            return Err(DataError::DuplicateId { id, line });
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.profiles.push(profile);
        Ok(())
    }

    pub fn d_gene(&self) -> usize {
        self.d_gene
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn profile(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.profiles[i].as_slice())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Writes the table as TSV with a `cell_line` header and `g0, g1, …` gene columns.
    pub fn write_tsv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "cell_line")?;
        for g in 0..self.d_gene {
            write!(out, "\tg{g}")?;
        }
        writeln!(out)?;
        for (id, profile) in self.ids.iter().zip(&self.profiles) {
            write!(out, "{id}")?;
            for v in profile {
                write!(out, "\t{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn load_cell_lines(path: impl AsRef<Path>) -> Result<CellLineTable, DataError> {
    let path = path.as_ref();
    let table = read_cell_lines(open(path)?)?;
    if table.is_empty() {
        return Err(DataError::NoRows(path.display().to_string()));
    }
    Ok(table)
}

/// Reads a header line followed by `id, value, value, …` rows. The delimiter
/// is a tab if the header contains one, otherwise a comma.
pub fn read_cell_lines<R: Read>(mut reader: R) -> Result<CellLineTable, DataError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let header = text.lines().next().unwrap_or("");
    if header.trim().is_empty() {
        return Err(DataError::BadHeader("expression table is empty".into()));
    }
    let delimiter = if header.contains('\t') { b'\t' } else { b',' };

    let mut csv = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut table = CellLineTable {
        ids: Vec::new(),
        index: HashMap::new(),
        profiles: Vec::new(),
        d_gene: 0,
    };
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let id = record.get(0).unwrap_or("").to_string();
        let profile = record
            .iter()
            .skip(1)
            .map(|v| match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(DataError::BadNumber {
                    line,
                    value: v.to_string(),
                }),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if table.is_empty() {
            if profile.is_empty() {
                return Err(DataError::RaggedRow {
                    line,
                    expected: 1,
                    found: 0,
                });
            }
            table.d_gene = profile.len();
        }
        table.push(id, profile, line)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows_five_genes() {
        let text = "id\tg1\tg2\tg3\tg4\tg5\nA\t1\t2\t3\t4\t5\nB\t0\t0\t0\t0\t0\nC\t-1\t.5\t2e-3\t7\t8\n";
        let t = read_cell_lines(text.as_bytes()).unwrap();
        assert_eq!((t.len(), t.d_gene()), (3, 5));
        assert_eq!(t.profile("C").unwrap(), &[-1.0, 0.5, 0.002, 7.0, 8.0]);
        assert_eq!(t.ids(), &["A", "B", "C"]);
    }

    #[test]
    fn comma_and_crlf_accepted() {
        let text = "id,a,b\r\nX,1,2\r\nY,3,4\r\n";
        let t = read_cell_lines(text.as_bytes()).unwrap();
        assert_eq!(t.profile("Y").unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn ragged_row_reports_line() {
        let text = "id\ta\tb\nX\t1\t2\nY\t3\n";
        assert!(matches!(
            read_cell_lines(text.as_bytes()),
            Err(DataError::RaggedRow { line: 3, expected: 2, found: 1 })
        ));
    }

    #[test]
    fn duplicate_id_rejected() {
        let text = "id,a\nX,1\nX,2\n";
        assert!(matches!(
            read_cell_lines(text.as_bytes()),
            Err(DataError::DuplicateId { line: 3, .. })
        ));
    }

    #[test]
    fn bad_values_and_empty_input() {
        assert!(matches!(
            read_cell_lines("id,a\nX,abc\n".as_bytes()),
            Err(DataError::BadNumber { line: 2, .. })
        ));
        assert!(matches!(read_cell_lines("".as_bytes()), Err(DataError::BadHeader(_))));
    }

    #[test]
    fn tsv_round_trip() {
        let t = CellLineTable::from_rows(vec![("A".into(), vec![0.1, -2.5]), ("B".into(), vec![3.0, 1e-9])]).unwrap();
        let mut buf = Vec::new();
        t.write_tsv(&mut buf).unwrap();
        assert_eq!(read_cell_lines(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_cell_lines("/nonexistent/expr.tsv"),
            Err(DataError::FileNotFound(_))
        ));
    }
}
