//! Data ingestion and graph export.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::graph::{ExportedGraph, GraphEstimate};
use crate::linalg::DataMatrix;

/// Reads a numeric CSV file (see [`ingest_csv_reader`]).
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ingest_csv_reader(file)
}

fn parse_number(field: &str) -> Option<f64> {
    field.parse::<f64>().ok()
}

/// Reads comma-separated numbers, one observation per line. A first row in
/// which no field is numeric is taken as the feature labels. Line and column
/// numbers in errors are 1-based.
pub fn ingest_csv_reader<R: Read>(reader: R) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut labels: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                line,
                column: 0,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if idx == 0 && record.iter().all(|f| parse_number(f).is_none()) {
            labels = Some(record.iter().map(str::to_string).collect());
            width = Some(record.len());
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRows {
                line,
                expected,
                found: record.len(),
            });
        }
        for (col, field) in record.iter().enumerate() {
            let v = parse_number(field).ok_or_else(|| Error::Parse {
                line,
                column: col + 1,
                message: format!("{field:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: col + 1,
                    message: format!("{field:?} is not finite"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    let d = width.unwrap_or(0);
    let m = DMatrix::from_row_iterator(rows, d, values);
    match labels {
        Some(l) => DataMatrix::with_labels(m, l),
        None => DataMatrix::new(m),
    }
}

/// Writes one line per observation, preceded by a header of labels when no
/// label looks numeric (a numeric header would be read back as data).
pub fn write_csv<W: Write>(x: &DataMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| Error::Io(e.to_string());
    if x.labels().iter().all(|l| parse_number(l.trim()).is_none()) {
        w.write_record(x.labels()).map_err(io_err)?;
    }
    let v = x.values();
    for i in 0..x.n() {
        w.write_record((0..x.dim()).map(|j| v[(i, j)].to_string()))
            .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// JSON formatter writing every float with 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedPrecision;

impl serde_json::ser::Formatter for FixedPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Compact JSON with fixed float formatting, so identical values always
/// produce identical bytes.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedPrecision);
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Json,
    Dot,
}

fn dot_quote(label: &str) -> String {
    let mut out = String::with_capacity(label.len() + 2);
    out.push('"');
    for c in label.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

pub fn export_graph(g: &GraphEstimate, format: GraphFormat) -> String {
    match format {
        GraphFormat::Json => to_json_string(&g.to_export()),
        GraphFormat::Dot => {
            let labels = g.node_labels();
            let mut out = String::from("graph G {\n");
            for label in labels {
                out.push_str(&format!("  {};\n", dot_quote(label)));
            }
            for &(i, j) in g.edges() {
                out.push_str(&format!("  {} -- {};\n", dot_quote(&labels[i]), dot_quote(&labels[j])));
            }
            out.push_str("}\n");
            out
        }
    }
}

pub fn parse_graph_json(text: &str) -> Result<ExportedGraph> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}
