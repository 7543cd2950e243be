//! Flat result tables in CSV or JSON-lines form.
//!
//! Both formats start with metadata (the result kind and, for scenario
//! outputs, the resolved configuration) followed by one row per record in a
//! fixed column order. Floats are written with 6 significant digits, so two
//! emits of the same records are byte-identical.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    JsonLines,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "json-lines" | "jsonlines" => Ok(Format::JsonLines),
            other => Err(Error::param(
                "format",
                format!("unknown format `{other}` (csv or json-lines)"),
            )),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::JsonLines => "json-lines",
        })
    }
}

/// Ordered key/value header of a table file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Metadata(pub Vec<(String, String)>);

impl Metadata {
    pub fn new(kind: &str) -> Self {
        Metadata(vec![("kind".into(), kind.into())])
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.0.push((key.into(), value.into()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// One typed cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    OptFloat(Option<f64>),
    Bool(bool),
    Text(String),
    Floats(Vec<f64>),
}

/// A record type with a fixed column layout.
pub trait Tabular: Sized {
    /// Value of the `kind` metadata key.
    const KIND: &'static str;
    const COLUMNS: &'static [&'static str];
    /// Columns whose values differ between identical runs (timings). They
    /// are written only on request.
    const VOLATILE: &'static [&'static str] = &[];

    /// Cells in `COLUMNS` order.
    fn cells(&self) -> Vec<Cell>;

    fn from_row(row: &Row<'_>) -> Result<Self>;
}

/// Float text with 6 significant digits, shortest form.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("scientific text parses");
    format!("{rounded}")
}

/// Round to what [`format_float`] would write.
pub fn round_float(x: f64) -> f64 {
    format_float(x).parse().unwrap_or(x)
}

fn csv_text(cell: &Cell) -> String {
    match cell {
        Cell::Int(v) => v.to_string(),
        Cell::Float(v) => format_float(*v),
        Cell::OptFloat(v) => v.map(format_float).unwrap_or_default(),
        Cell::Bool(v) => v.to_string(),
        Cell::Text(v) => v.clone(),
        Cell::Floats(v) => v.iter().map(|x| format_float(*x)).collect::<Vec<_>>().join(";"),
    }
}

fn json_float(x: f64) -> String {
    if x.is_finite() {
        format_float(x)
    } else {
        "null".into()
    }
}

fn json_text(cell: &Cell) -> String {
    match cell {
        Cell::Int(v) => v.to_string(),
        Cell::Float(v) => json_float(*v),
        Cell::OptFloat(v) => v.map(json_float).unwrap_or_else(|| "null".into()),
        Cell::Bool(v) => v.to_string(),
        Cell::Text(v) => serde_json::to_string(v).expect("strings serialize"),
        Cell::Floats(v) => format!("[{}]", v.iter().map(|x| json_float(*x)).collect::<Vec<_>>().join(",")),
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn selected<T: Tabular>(timings: bool) -> Vec<usize> {
    (0..T::COLUMNS.len())
        .filter(|&c| timings || !T::VOLATILE.contains(&T::COLUMNS[c]))
        .collect()
}

/// Write `rows` with a metadata header.
pub fn write_table<T: Tabular, W: Write>(
    out: &mut W,
    rows: &[T],
    meta: &Metadata,
    format: Format,
    timings: bool,
) -> std::io::Result<()> {
    let keep = selected::<T>(timings);
    match format {
        Format::Csv => {
            for (k, v) in &meta.0 {
                let mut lines = v.lines();
                writeln!(out, "# {k}: {}", lines.next().unwrap_or(""))?;
                for line in lines {
                    writeln!(out, "# | {line}")?;
                }
            }
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(out);
            w.write_record(keep.iter().map(|&c| T::COLUMNS[c]))?;
            for row in rows {
                let cells = row.cells();
                w.write_record(keep.iter().map(|&c| csv_text(&cells[c])))?;
            }
            w.flush()?;
        }
        Format::JsonLines => {
            let meta_body: Vec<String> = meta
                .0
                .iter()
                .map(|(k, v)| format!("[{},{}]", quote(k), quote(v)))
                .collect();
            let columns: Vec<String> = keep.iter().map(|&c| quote(T::COLUMNS[c])).collect();
            writeln!(
                out,
                "{{\"meta\":[{}],\"columns\":[{}]}}",
                meta_body.join(","),
                columns.join(",")
            )?;
            for row in rows {
                let cells = row.cells();
                let body: Vec<String> = keep
                    .iter()
                    .map(|&c| format!("{}:{}", quote(T::COLUMNS[c]), json_text(&cells[c])))
                    .collect();
                writeln!(out, "{{{}}}", body.join(","))?;
            }
        }
    }
    Ok(())
}

/// Table as a string; see [`write_table`].
pub fn render_table<T: Tabular>(rows: &[T], meta: &Metadata, format: Format, timings: bool) -> String {
    let mut buf = Vec::new();
    write_table(&mut buf, rows, meta, format, timings).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("tables are UTF-8")
}

/// Write `rows` to `path`, creating parent directories.
pub fn emit_results<T: Tabular>(
    rows: &[T],
    meta: &Metadata,
    format: Format,
    path: impl AsRef<Path>,
    timings: bool,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_table(&mut out, rows, meta, format, timings).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Cells of one parsed row, by column name.
pub struct Row<'a> {
    values: &'a HashMap<String, String>,
    line: usize,
    path: &'a str,
}

impl Row<'_> {
    fn error(&self, reason: String) -> Error {
        Error::Parse {
            path: self.path.into(),
            line: self.line,
            reason,
        }
    }

    pub fn raw(&self, column: &str) -> Result<&str> {
        self.values
            .get(column)
            .map(String::as_str)
            .ok_or_else(|| self.error(format!("missing column `{column}`")))
    }

    pub fn get<T: FromStr>(&self, column: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(column)?;
        raw.parse()
            .map_err(|e: T::Err| self.error(format!("column `{column}`: cannot parse `{raw}`: {e}")))
    }

    /// Float where an empty cell means NaN.
    pub fn float(&self, column: &str) -> Result<f64> {
        match self.raw(column)? {
            "" => Ok(f64::NAN),
            _ => self.get(column),
        }
    }

    pub fn opt_float(&self, column: &str) -> Result<Option<f64>> {
        match self.raw(column)? {
            "" => Ok(None),
            _ => self.get(column).map(Some),
        }
    }

    /// Absent volatile columns read as NaN.
    pub fn float_or_nan(&self, column: &str) -> Result<f64> {
        if self.values.contains_key(column) {
            self.float(column)
        } else {
            Ok(f64::NAN)
        }
    }

    pub fn floats(&self, column: &str) -> Result<Vec<f64>> {
        let raw = self.raw(column)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(';')
            .map(|v| {
                v.parse()
                    .map_err(|_| self.error(format!("column `{column}`: bad list entry `{v}`")))
            })
            .collect()
    }
}

fn json_cell(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Null => String::new(),
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Array(items) => items.iter().map(json_cell).collect::<Vec<_>>().join(";"),
        other => other.to_string(),
    }
}

/// Parse a table written by [`write_table`]; the format is detected.
pub fn parse_table<T: Tabular>(text: &str, path: &str) -> Result<(Metadata, Vec<T>)> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.into(),
        line,
        reason,
    };
    let mut meta = Metadata::default();
    let mut rows = Vec::new();
    if text.trim_start().starts_with('{') {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))?;
        let head: serde_json::Value = serde_json::from_str(head).map_err(|e| parse_err(1, e.to_string()))?;
        let pairs = head.get("meta").and_then(|m| m.as_array()).cloned().unwrap_or_default();
        for pair in &pairs {
            match pair.as_array().map(Vec::as_slice) {
                Some([serde_json::Value::String(k), serde_json::Value::String(v)]) => {
                    meta.0.push((k.clone(), v.clone()))
                }
                _ => {
                    return Err(parse_err(
                        1,
                        "metadata entries must be [key, value] string pairs".into(),
                    ))
                }
            }
        }
        for (idx, line) in lines {
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| parse_err(idx + 1, e.to_string()))?;
            let obj = value
                .as_object()
                .ok_or_else(|| parse_err(idx + 1, "row is not an object".into()))?;
            let values: HashMap<String, String> = obj.iter().map(|(k, v)| (k.clone(), json_cell(v))).collect();
            rows.push(T::from_row(&Row {
                values: &values,
                line: idx + 1,
                path,
            })?);
        }
    } else {
        let mut body_start = 0usize;
        let mut header_lines = 0usize;
        for line in text.split_inclusive('\n') {
            let Some(rest) = line.strip_prefix('#') else {
                break;
            };
            body_start += line.len();
            header_lines += 1;
            let rest = rest.trim_end_matches(['\n', '\r']);
            if let Some(cont) = rest.strip_prefix(" | ") {
                if let Some(last) = meta.0.last_mut() {
                    last.1.push('\n');
                    last.1.push_str(cont);
                }
            } else if let Some((k, v)) = rest.trim_start().split_once(": ") {
                meta.0.push((k.to_string(), v.to_string()));
            } else if let Some(k) = rest.trim().strip_suffix(':') {
                meta.0.push((k.to_string(), String::new()));
            }
        }
        let mut reader = csv::ReaderBuilder::new().from_reader(&text.as_bytes()[body_start..]);
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| parse_err(header_lines + 1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        for (idx, record) in reader.records().enumerate() {
            let line = header_lines + idx + 2;
            let record = record.map_err(|e| parse_err(line, e.to_string()))?;
            let values: HashMap<String, String> =
                headers.iter().cloned().zip(record.iter().map(str::to_string)).collect();
            rows.push(T::from_row(&Row {
                values: &values,
                line,
                path,
            })?);
        }
    }
    if let Some(kind) = meta.get("kind") {
        if kind != T::KIND {
            return Err(parse_err(1, format!("expected a `{}` table, found `{kind}`", T::KIND)));
        }
    }
    Ok((meta, rows))
}

pub fn read_table<T: Tabular>(path: impl AsRef<Path>) -> Result<(Metadata, Vec<T>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, &path.display().to_string())
}
