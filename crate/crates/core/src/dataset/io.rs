//! Encoded dataset files: one `# {json}` header line carrying the mode and
//! schema, then one `label<TAB>col:val,col:val,...` line per row.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EncodedDataset, EncodingMode, FeatureSchema, SparseMatrix};
use crate::UrgencyLevel;

#[derive(Debug, Error)]
pub enum EncodedIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Serialize, Deserialize)]
struct Header {
    mode: EncodingMode,
    columns: Vec<super::Column>,
}

pub fn write_encoded<W: Write>(dataset: &EncodedDataset, mut out: W) -> std::io::Result<()> {
    let header = Header {
        mode: dataset.mode,
        columns: dataset.schema.columns.clone(),
    };
    writeln!(out, "# {}", serde_json::to_string(&header).map_err(std::io::Error::other)?)?;
    for (row, &label) in dataset.matrix.rows().zip(&dataset.labels) {
        let level = UrgencyLevel::from_ordinal(label).expect("label ordinal in range");
        write!(out, "{level}\t")?;
        for (i, (col, value)) in row.entries().enumerate() {
            if i > 0 {
                out.write_all(b",")?;
            }
            write!(out, "{col}:{value}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_encoded<R: BufRead>(input: R) -> Result<EncodedDataset, EncodedIoError> {
    let mut lines = input.lines();
    let fail = |line: usize, message: String| EncodedIoError::Format { line, message };
    let first = lines.next().ok_or_else(|| fail(1, "missing header".into()))??;
    let json = first
        .strip_prefix("# ")
        .ok_or_else(|| fail(1, "header must start with '# '".into()))?;
    let header: Header = serde_json::from_str(json).map_err(|e| fail(1, e.to_string()))?;
    let schema = FeatureSchema::new(header.columns);

    let mut matrix = SparseMatrix::new(schema.len());
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (label, rest) = line
            .split_once('\t')
            .ok_or_else(|| fail(n, "expected label<TAB>entries".into()))?;
        let level: UrgencyLevel = label.parse().map_err(|e| fail(n, format!("{e}")))?;
        let mut entries = Vec::new();
        for item in rest.split(',').filter(|s| !s.is_empty()) {
            let (col, value) = item
                .split_once(':')
                .ok_or_else(|| fail(n, format!("bad entry {item:?}")))?;
            let col: u32 = col.parse().map_err(|_| fail(n, format!("bad column in {item:?}")))?;
            let value: f64 = value.parse().map_err(|_| fail(n, format!("bad value in {item:?}")))?;
            entries.push((col, value));
        }
        matrix.push_row(&entries).map_err(|e| fail(n, e.to_string()))?;
        labels.push(level.ordinal());
    }
    Ok(EncodedDataset {
        matrix,
        labels,
        schema,
        mode: header.mode,
    })
}
