//! Canonical JSON and CSV output helpers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Serialize with lexicographically sorted object keys and a trailing newline.
pub fn to_canonical_json<S: Serialize>(value: &S) -> Result<String> {
    // serde_json's Map is a BTreeMap without the `preserve_order` feature,
    // so going through Value sorts every object's keys.
    let v = serde_json::to_value(value).map_err(|e| Error::json("<memory>", e))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::json("<memory>", e))?;
    s.push('\n');
    Ok(s)
}

/// One compact canonical JSON object per line.
pub fn to_canonical_json_line<S: Serialize>(value: &S) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::json("<memory>", e))?;
    let mut s = serde_json::to_string(&v).map_err(|e| Error::json("<memory>", e))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<S: Serialize>(value: &S, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_canonical_json(value)?).map_err(|e| Error::io(path, e))
}

pub fn write_json_lines<'a, S: Serialize + 'a>(
    values: impl IntoIterator<Item = &'a S>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for v in values {
        out.push_str(&to_canonical_json_line(v)?);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_json_lines<D: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<D>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}

pub fn read_json<D: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<D> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Minimal CSV table. Cells containing separators or quotes are quoted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: impl IntoIterator<Item = impl Into<String>>) {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = row.iter().map(|c| quote(c)).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

fn quote(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

/// Fixed-format float for CSV cells; `None` renders as an empty cell.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn canonical_json_sorts_keys() {
        #[derive(Serialize)]
        struct S {
            zeta: u8,
            alpha: u8,
        }
        let s = to_canonical_json_line(&S { zeta: 1, alpha: 2 }).unwrap();
        assert_eq!(s, "{\"alpha\":2,\"zeta\":1}\n");
        let nested = to_canonical_json_line(&json!({"b": {"y": 1, "x": 2}, "a": []})).unwrap();
        assert_eq!(nested, "{\"a\":[],\"b\":{\"x\":2,\"y\":1}}\n");
    }

    #[test]
    fn csv_quotes_when_needed() {
        let mut t = CsvTable::new(["class", "value"]);
        t.push(["car, horn", "1"]);
        t.push(["dog", "2"]);
        assert_eq!(t.render(), "class,value\n\"car, horn\",1\ndog,2\n");
    }
}
