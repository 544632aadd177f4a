//! Plain-text CSV I/O for matrices and labeled datasets.
//!
//! One row per line, comma separated, no header. Reals are written in the
//! shortest form that parses back to the identical `f64`, so a write/read
//! cycle is lossless.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// A dataset whose rows carry an integer class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub points: Array2<f64>,
    pub labels: Vec<usize>,
}

/// Formats a real so that `str::parse::<f64>` recovers it bit for bit.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let a = x.abs();
    if (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn format_row(row: impl IntoIterator<Item = f64>) -> String {
    row.into_iter().map(format_real).collect::<Vec<_>>().join(",")
}

/// Renders a matrix as CSV text, one line per row, each line newline-terminated.
pub fn format_matrix(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        out.push_str(&format_row(row.iter().copied()));
        out.push('\n');
    }
    out
}

fn parse_real(token: &str, line: usize, column: usize) -> Result<f64> {
    let t = token.trim();
    let v: f64 = t.parse().map_err(|_| Error::Unparsable {
        line,
        column,
        token: t.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFinite {
            line,
            column,
            token: t.to_string(),
        });
    }
    Ok(v)
}

/// Parses CSV lines into a matrix. `first_line` is the 1-based line number
/// of the first element of `lines`, used in error messages. Blank lines are
/// skipped.
pub fn parse_matrix_lines<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    first_line: usize,
) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (offset, raw) in lines.into_iter().enumerate() {
        let line_no = first_line + offset;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split(',').collect();
        match cols {
            None => cols = Some(tokens.len()),
            Some(c) if c != tokens.len() => {
                return Err(Error::RaggedRow {
                    line: line_no,
                    expected: c,
                    found: tokens.len(),
                })
            }
            _ => {}
        }
        for (j, tok) in tokens.iter().enumerate() {
            data.push(parse_real(tok, line_no, j + 1)?);
        }
        rows += 1;
    }
    let cols = cols.ok_or(Error::Empty)?;
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row lengths checked"))
}

pub fn parse_matrix(text: &str) -> Result<Array2<f64>> {
    parse_matrix_lines(text.split('\n'), 1)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text)
}

/// Writes `contents` to `path` through a temporary sibling file and a rename,
/// so readers never observe a partially written file.
pub fn write_atomic(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("not a file path")))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents.as_bytes())
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    write_atomic(path, &format_matrix(m))
}

pub fn parse_labeled(text: &str) -> Result<LabeledSet> {
    let mut raw_points = Vec::new();
    let mut labels = Vec::new();
    let mut cols = None;
    for (offset, raw) in text.split('\n').enumerate() {
        let line_no = offset + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split(',').collect();
        match cols {
            None => cols = Some(tokens.len()),
            Some(c) if c != tokens.len() => {
                return Err(Error::RaggedRow {
                    line: line_no,
                    expected: c,
                    found: tokens.len(),
                })
            }
            _ => {}
        }
        if tokens.len() < 2 {
            return Err(Error::format(
                line_no,
                "labeled rows need at least one coordinate and a label",
            ));
        }
        let (label_tok, coords) = tokens.split_last().expect("nonempty");
        let label_tok = label_tok.trim();
        let label = label_tok.parse::<usize>().map_err(|_| Error::NonIntegerLabel {
            line: line_no,
            token: label_tok.to_string(),
        })?;
        for (j, tok) in coords.iter().enumerate() {
            raw_points.push(parse_real(tok, line_no, j + 1)?);
        }
        labels.push(label);
    }
    let cols = cols.ok_or(Error::Empty)?;
    let points = Array2::from_shape_vec((labels.len(), cols - 1), raw_points).expect("row lengths checked");
    Ok(LabeledSet { points, labels })
}

pub fn read_labeled(path: impl AsRef<Path>) -> Result<LabeledSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labeled(&text)
}
