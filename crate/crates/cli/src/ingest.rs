//! Reading gridded data from `row,col,value` or `row,col,member,value` CSV.

use std::collections::BTreeMap;
use std::path::Path;

use hybridsurf::{Error, GridGraph};

use crate::error::Result;

/// One or more realizations on a common `nx × ny` grid, each stored in the
/// grid's row-major flat order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridData {
    pub nx: usize,
    pub ny: usize,
    /// Member labels as they appear in the file (1 for single-grid files).
    pub labels: Vec<u64>,
    pub members: Vec<Vec<f64>>,
}

impl GridData {
    pub fn n(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_ensemble(&self) -> bool {
        self.members.len() > 1
    }

    pub fn grid(&self) -> Result<GridGraph> {
        Ok(GridGraph::new(self.nx, self.ny)?)
    }
}

fn ingest_err(msg: String) -> Error {
    Error::Ingest(msg)
}

/// Parses a grid file. Lines starting with `#` are ignored. Dimensions are
/// inferred from the largest row and column indices (0-based).
pub fn ingest_grid(path: &Path) -> Result<GridData> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ingest_err(format!("cannot read {}: {e}", path.display())))?;
    parse_grid(&text)
}

pub fn parse_grid(text: &str) -> Result<GridData> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let ensemble = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["row", "col", "value"] => false,
        ["row", "col", "member", "value"] => true,
        other => {
            return Err(ingest_err(format!(
                "header must be `row,col,value` or `row,col,member,value`, found `{}`",
                other.join(",")
            ))
            .into())
        }
    };

    let mut cells: BTreeMap<u64, BTreeMap<(usize, usize), f64>> = BTreeMap::new();
    let (mut max_row, mut max_col) = (0usize, 0usize);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        let field = |k: usize, what: &str| -> std::result::Result<&str, Error> {
            rec.get(k).ok_or_else(|| ingest_err(format!("line {line}: missing {what}")))
        };
        let int = |k: usize, what: &str| -> std::result::Result<usize, Error> {
            let s = field(k, what)?;
            s.parse().map_err(|_| ingest_err(format!("line {line}: {what} `{s}` is not a non-negative integer")))
        };
        let row = int(0, "row")?;
        let col = int(1, "col")?;
        let member = if ensemble { int(2, "member")? as u64 } else { 1 };
        let vs = field(if ensemble { 3 } else { 2 }, "value")?;
        let value: f64 =
            vs.parse().map_err(|_| ingest_err(format!("line {line}: value `{vs}` is not a number")))?;
        if !value.is_finite() {
            return Err(ingest_err(format!("line {line}: value at ({row},{col}) is not finite")).into());
        }
        if cells.entry(member).or_default().insert((row, col), value).is_some() {
            return Err(ingest_err(format!("line {line}: duplicate cell ({row},{col}) in member {member}")).into());
        }
        max_row = max_row.max(row);
        max_col = max_col.max(col);
    }
    if cells.is_empty() {
        return Err(ingest_err("file contains no data rows".into()).into());
    }
    let (ny, nx) = (max_row + 1, max_col + 1);
    let n = nx * ny;

    if cells.len() > 1 {
        let sizes: Vec<usize> = cells.values().map(|m| m.len()).collect();
        let largest = *sizes.iter().max().unwrap();
        if let Some((label, m)) = cells.iter().find(|(_, m)| m.len() != largest) {
            return Err(ingest_err(format!(
                "ragged ensemble: member {label} has {} cells, other members have {largest}",
                m.len()
            ))
            .into());
        }
        // Same count but different cells is ragged as well.
        let first = cells.values().next().unwrap();
        if let Some((label, _)) = cells.iter().find(|(_, m)| m.keys().ne(first.keys())) {
            return Err(ingest_err(format!("ragged ensemble: member {label} covers different cells")).into());
        }
    }

    let mut labels = Vec::with_capacity(cells.len());
    let mut members = Vec::with_capacity(cells.len());
    for (label, m) in cells {
        if m.len() != n {
            let missing: Vec<String> = (0..ny)
                .flat_map(|r| (0..nx).map(move |c| (r, c)))
                .filter(|rc| !m.contains_key(rc))
                .map(|(r, c)| format!("({r},{c})"))
                .collect();
            let shown = missing.iter().take(20).cloned().collect::<Vec<_>>().join(", ");
            let more = if missing.len() > 20 { format!(" and {} more", missing.len() - 20) } else { String::new() };
            return Err(ingest_err(format!(
                "{nx}x{ny} grid is missing {} cell(s): {shown}{more}",
                missing.len()
            ))
            .into());
        }
        let mut field = vec![0.0; n];
        for ((r, c), v) in m {
            field[r * nx + c] = v;
        }
        labels.push(label);
        members.push(field);
    }
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidGrid { nx, ny }.into());
    }
    Ok(GridData { nx, ny, labels, members })
}
