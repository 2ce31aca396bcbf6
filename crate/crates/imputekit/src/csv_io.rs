//! Comma-separated data files: header row of names, `NA` for missing cells,
//! LF line endings.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use imputekit_core::data::{ColumnKind, DataMatrix};

use crate::error::{io, Error, Result};

/// The only token read or written as a missing cell (case-sensitive).
pub const NA: &str = "NA";

pub fn load_csv(path: &Path) -> Result<DataMatrix> {
    let file = File::open(path).map_err(io(path))?;
    read_csv(file, path, None)
}

/// Like [`load_csv`] with explicit column kinds instead of inference.
pub fn load_csv_with_kinds(path: &Path, kinds: Vec<ColumnKind>) -> Result<DataMatrix> {
    let file = File::open(path).map_err(io(path))?;
    read_csv(file, path, Some(kinds))
}

/// Parses CSV text from `reader`; `origin` only labels errors.
pub fn read_csv(reader: impl Read, origin: &Path, kinds: Option<Vec<ColumnKind>>) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: origin.to_path_buf(), source },
        other => Error::Format { path: origin.to_path_buf(), message: format!("{other:?}") },
    };
    let names: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Format { path: origin.to_path_buf(), message: "missing header row".into() });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != names.len() {
            return Err(Error::RaggedRow {
                path: origin.to_path_buf(),
                row: line,
                expected: names.len(),
                found: rec.len(),
            });
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, tok)| parse_cell(tok).ok_or_else(|| Error::BadCell {
                path: origin.to_path_buf(),
                row: line,
                col: j + 1,
                token: tok.to_string(),
            }))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(DataMatrix::from_rows(names, &rows, kinds)?)
}

fn parse_cell(tok: &str) -> Option<Option<f64>> {
    if tok == NA {
        return Some(None);
    }
    tok.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some)
}

pub fn write_csv(dm: &DataMatrix, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io(path))?;
    write_csv_to(dm, file, path)
}

/// Writes `dm` to `writer`. Values use the shortest decimal text that
/// parses back to the same `f64`.
pub fn write_csv_to(dm: &DataMatrix, writer: impl Write, origin: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: origin.to_path_buf(), source },
        other => Error::Format { path: origin.to_path_buf(), message: format!("{other:?}") },
    };
    w.write_record(dm.names()).map_err(err)?;
    let mut cells = Vec::with_capacity(dm.n_cols());
    for i in 0..dm.n_rows() {
        cells.clear();
        cells.extend((0..dm.n_cols()).map(|j| dm.get(i, j).map_or_else(|| NA.to_string(), |v| v.to_string())));
        w.write_record(&cells).map_err(err)?;
    }
    w.flush().map_err(io(origin))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<DataMatrix> {
        read_csv(text.as_bytes(), Path::new("mem.csv"), None)
    }

    #[test]
    fn na_marks_exactly_one_cell() {
        let dm = parse("a,b\n1,2\nNA,4\n5,6\n").unwrap();
        assert_eq!(dm.mask().iter().filter(|p| !**p).count(), 1);
        assert!(!dm.is_present(1, 0));
    }

    #[test]
    fn zero_one_column_is_binary() {
        let dm = parse("a,b\n0,2.5\n1,NA\n1,3\n").unwrap();
        assert_eq!(dm.kinds(), &[ColumnKind::Binary, ColumnKind::Continuous]);
    }

    #[test]
    fn ragged_row_reports_line() {
        match parse("1,2\n3\n") {
            Err(Error::RaggedRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_token_reports_cell() {
        match parse("a,b\n1,2\n3,na\n") {
            Err(Error::BadCell { row, col, token, .. }) => assert_eq!((row, col, token.as_str()), (3, 2, "na")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_cells_written_as_na() {
        let dm = parse("a,b\n1,NA\n").unwrap();
        let mut buf = Vec::new();
        write_csv_to(&dm, &mut buf, Path::new("mem.csv")).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1,NA\n");
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dm = parse("a\n1\n").unwrap();
        let path = Path::new("/nonexistent-dir/out.csv");
        assert!(matches!(write_csv(&dm, path), Err(Error::Io { .. })));
    }
}
