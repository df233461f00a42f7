//! Table files and CSV emission.
//!
//! Lattice tables are read from CSV (`mask,<column>` with one row per
//! coalition, masks in decimal or `0b` binary, any order) or JSON
//! (`{"n_agents": N, "values"|"energies": [...]}` in mask order). Reals are written
//! with 17 significant digits so every value survives a round trip bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cfe_core::lattice::HARD_MAX_AGENTS;
use cfe_core::PairwiseEnergy;
use serde::Deserialize;

use crate::error::{CliError, Result};

/// Formats a real with 17 significant digits, or `NaN`/`inf`/`-inf`.
pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Line-feed terminated CSV built in memory and written in one go.
#[derive(Debug, Clone)]
pub struct CsvBuilder {
    buf: String,
}

impl CsvBuilder {
    pub fn new(header: &[&str]) -> Self {
        let mut b = Self { buf: String::new() };
        b.row(header.iter().map(|h| h.to_string()));
        b
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for (k, f) in fields.into_iter().enumerate() {
            if k > 0 {
                self.buf.push(',');
            }
            self.buf.push_str(f.as_ref());
        }
        self.buf.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf.into_bytes()
    }
}

/// Which quantity a lattice file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Value,
    Energy,
}

impl TableKind {
    /// CSV column name.
    pub fn column(self) -> &'static str {
        match self {
            TableKind::Value => "value",
            TableKind::Energy => "energy",
        }
    }

    /// JSON array key.
    pub fn json_key(self) -> &'static str {
        match self {
            TableKind::Value => "values",
            TableKind::Energy => "energies",
        }
    }
}

/// A dense lattice table as read from disk, with the source line of every
/// entry for diagnostics (0 when the file format has no line per entry).
#[derive(Debug, Clone, PartialEq)]
pub struct TableFile {
    pub n_agents: usize,
    pub values: Vec<f64>,
    pub lines: Vec<u64>,
}

/// Reads a lattice table; JSON when the extension is `.json`, CSV otherwise.
pub fn read_table(path: &Path, kind: TableKind) -> Result<TableFile> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    {
        parse_table_json(path, &bytes, kind)
    } else {
        parse_table_csv(path, &bytes, kind)
    }
}

fn parse_mask(s: &str) -> Option<u64> {
    match s.strip_prefix("0b") {
        Some(bin) => u64::from_str_radix(bin, 2).ok(),
        None => s.parse().ok(),
    }
}

pub fn parse_table_csv(path: &Path, bytes: &[u8], kind: TableKind) -> Result<TableFile> {
    let column = kind.column();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes);
    let header = rdr
        .headers()
        .map_err(|e| CliError::parse(path, csv_line(&e).unwrap_or(1), e.to_string()))?
        .clone();
    if header.len() != 2 || &header[0] != "mask" || &header[1] != column {
        return Err(CliError::parse(
            path,
            1,
            format!("expected header `mask,{column}`"),
        ));
    }
    let mut rows: BTreeMap<u64, (f64, u64)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| CliError::parse(path, csv_line(&e).unwrap_or(0), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mask = parse_mask(&rec[0])
            .ok_or_else(|| CliError::parse(path, line, format!("bad mask `{}`", &rec[0])))?;
        let value: f64 = rec[1]
            .parse()
            .map_err(|_| CliError::parse(path, line, format!("bad number `{}`", &rec[1])))?;
        if !value.is_finite() {
            return Err(CliError::parse(path, line, "value must be finite"));
        }
        if let Some((_, first)) = rows.insert(mask, (value, line)) {
            return Err(CliError::parse(
                path,
                line,
                format!("mask {mask} already given on line {first}"),
            ));
        }
    }
    if rows.is_empty() {
        return Err(CliError::parse(path, 1, "no table rows"));
    }
    let len = rows.len();
    if !len.is_power_of_two() || len.trailing_zeros() as usize > HARD_MAX_AGENTS || len < 2 {
        return Err(CliError::file(
            path,
            format!("{len} rows is not 2^N for 1 <= N <= {HARD_MAX_AGENTS}"),
        ));
    }
    let n_agents = len.trailing_zeros() as usize;
    if let Some((&mask, &(_, line))) = rows.iter().find(|(&m, _)| m >= len as u64) {
        return Err(CliError::parse(
            path,
            line,
            format!("mask {mask} out of range for {n_agents} agents"),
        ));
    }
    // Distinct masks below 2^N, 2^N of them: the lattice is complete.
    let (values, lines) = rows.into_values().unzip();
    Ok(TableFile {
        n_agents,
        values,
        lines,
    })
}

fn csv_line(e: &csv::Error) -> Option<u64> {
    e.position().map(|p| p.line())
}

pub fn parse_table_json(path: &Path, bytes: &[u8], kind: TableKind) -> Result<TableFile> {
    let doc: serde_json::Value = serde_json::from_slice(bytes)
        .map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))?;
    let key = kind.json_key();
    let obj = doc
        .as_object()
        .ok_or_else(|| CliError::file(path, "expected a JSON object"))?;
    if let Some(extra) = obj.keys().find(|k| *k != "n_agents" && *k != key) {
        return Err(CliError::file(path, format!("unknown field `{extra}`")));
    }
    let n_agents =
        obj.get("n_agents")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| CliError::file(path, "missing integer `n_agents`"))? as usize;
    if n_agents == 0 || n_agents > HARD_MAX_AGENTS {
        return Err(CliError::file(
            path,
            format!("n_agents must lie in 1..={HARD_MAX_AGENTS}"),
        ));
    }
    let values: Vec<f64> = obj
        .get(key)
        .and_then(|v| v.as_array())
        .ok_or_else(|| CliError::file(path, format!("missing array `{key}`")))?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_f64()
                .ok_or_else(|| CliError::file(path, format!("`{key}[{i}]` is not a number")))
        })
        .collect::<Result<_>>()?;
    if values.len() != 1 << n_agents {
        return Err(CliError::file(
            path,
            format!(
                "`{key}` has {} entries, expected {}",
                values.len(),
                1u64 << n_agents
            ),
        ));
    }
    let lines = vec![0; values.len()];
    Ok(TableFile {
        n_agents,
        values,
        lines,
    })
}

/// `mask,<column>` CSV for a dense table.
pub fn table_csv(kind: TableKind, values: &[f64]) -> Vec<u8> {
    let mut csv = CsvBuilder::new(&["mask", kind.column()]);
    for (mask, &v) in values.iter().enumerate() {
        csv.row([mask.to_string(), real(v)]);
    }
    csv.into_bytes()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairwiseFile {
    phi: Vec<f64>,
    psi: Vec<Vec<f64>>,
}

/// Reads a pairwise energy `{"phi": [...], "psi": [[...], ...]}`.
pub fn read_pairwise(path: &Path) -> Result<PairwiseEnergy> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let file: PairwiseFile = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))?;
    PairwiseEnergy::new(file.phi, file.psi).map_err(|e| CliError::file(path, e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s.into_bytes()
}

/// Joins lines with LF terminators.
pub fn text_bytes(lines: &[String]) -> Vec<u8> {
    let mut s = String::new();
    for l in lines {
        let _ = writeln!(s, "{l}");
    }
    s.into_bytes()
}
