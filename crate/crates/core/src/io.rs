//! Visit-matrix files.
//!
//! Text form: a header line `# visits users=N sites=M horizon=T` followed by
//! one comma-separated row per user. Values use the shortest decimal form
//! that parses back to the same bits.
//!
//! Binary form, little-endian:
//!
//! | bytes | content                  |
//! |-------|--------------------------|
//! | 8     | magic `QOEVISIT`         |
//! | 4     | format version (1)       |
//! | 8     | N, users (u64)           |
//! | 8     | M, sites (u64)           |
//! | 8     | T, horizon (f64)         |
//! | 8·N·M | times, row-major (f64)   |

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mobility::VisitMatrix;

const MAGIC: &[u8; 8] = b"QOEVISIT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VisitFormat {
    #[default]
    Text,
    Binary,
}

pub fn write_visit_matrix(path: impl AsRef<Path>, visits: &VisitMatrix, format: VisitFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let written = match format {
        VisitFormat::Text => write_text(&mut out, visits),
        VisitFormat::Binary => write_binary(&mut out, visits),
    };
    written.and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

fn write_text<W: Write>(out: &mut W, v: &VisitMatrix) -> std::io::Result<()> {
    writeln!(
        out,
        "# visits users={} sites={} horizon={}",
        v.users(),
        v.sites(),
        v.horizon()
    )?;
    let mut line = String::new();
    for row in v.rows() {
        line.clear();
        for (j, t) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&t.to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn write_binary<W: Write>(out: &mut W, v: &VisitMatrix) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(v.users() as u64).to_le_bytes())?;
    out.write_all(&(v.sites() as u64).to_le_bytes())?;
    out.write_all(&v.horizon().to_le_bytes())?;
    for t in v.as_flat() {
        out.write_all(&t.to_le_bytes())?;
    }
    Ok(())
}

/// Read either form; the format is detected from the first bytes.
pub fn read_visit_matrix(path: impl AsRef<Path>) -> Result<VisitMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let head = reader.fill_buf().map_err(|e| Error::io(path, e))?;
    if head.starts_with(MAGIC) {
        read_binary(path, reader)
    } else {
        read_text(path, reader)
    }
}

fn read_binary<R: Read>(path: &Path, mut reader: R) -> Result<VisitMatrix> {
    let bad = |reason: &str| Error::Input {
        path: path.into(),
        reason: reason.into(),
    };
    let mut header = [0u8; 36];
    reader
        .read_exact(&mut header)
        .map_err(|_| bad("truncated binary header"))?;
    let word = |at: usize| u64::from_le_bytes(header[at..at + 8].try_into().expect("8-byte slice"));
    let version = u32::from_le_bytes(header[8..12].try_into().expect("4-byte slice"));
    if version != VERSION {
        return Err(bad(&format!("unsupported binary version {version}")));
    }
    let users = usize::try_from(word(12)).map_err(|_| bad("user count overflows"))?;
    let sites = usize::try_from(word(20)).map_err(|_| bad("site count overflows"))?;
    let horizon = f64::from_bits(word(28));
    let cells = users.checked_mul(sites).ok_or_else(|| bad("matrix size overflows"))?;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() != cells * 8 {
        return Err(bad(&format!(
            "expected {} payload bytes, found {}",
            cells * 8,
            bytes.len()
        )));
    }
    let times = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    VisitMatrix::from_flat(times, users, sites, horizon)
}

fn read_text<R: BufRead>(path: &Path, reader: R) -> Result<VisitMatrix> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.into(),
        line,
        reason,
    };
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let mut dims = (None, None, None);
    for field in header.trim_start_matches('#').split_whitespace().skip(1) {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header field `{field}`")))?;
        let number = |v: &str| v.parse::<f64>().map_err(|e| parse_err(1, format!("{key}: {e}")));
        match key {
            "users" => dims.0 = Some(number(value)? as usize),
            "sites" => dims.1 = Some(number(value)? as usize),
            "horizon" => dims.2 = Some(number(value)?),
            _ => return Err(parse_err(1, format!("unknown header field `{key}`"))),
        }
    }
    let (Some(users), Some(sites), Some(horizon)) = dims else {
        return Err(parse_err(1, "header must give users, sites and horizon".into()));
    };
    let mut times = Vec::with_capacity(users * sites);
    let mut rows = 0usize;
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let before = times.len();
        for cell in line.split(',') {
            let t: f64 = cell
                .trim()
                .parse()
                .map_err(|e| parse_err(idx + 1, format!("bad value `{cell}`: {e}")))?;
            times.push(t);
        }
        if times.len() - before != sites {
            return Err(parse_err(
                idx + 1,
                format!("expected {sites} values, found {}", times.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != users {
        return Err(Error::Input {
            path: path.into(),
            reason: format!("header declares {users} users, found {rows} rows"),
        });
    }
    VisitMatrix::from_flat(times, users, sites, horizon)
}
