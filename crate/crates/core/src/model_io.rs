//! Line-oriented text encoding shared by the table and model file formats.
//!
//! Reals are written with 17 significant digits (`{:.16e}`), which round-trips
//! every finite `f64` exactly. Model files are a header line, a parameter line
//! and a sequence of labeled blocks:
//!
//! ```text
//! [label] ROWS COLS
//! v11 v12 ...
//! ...
//! ```

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_reals(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:.16e}").expect("writing to a String");
    }
    out.push('\n');
}

pub fn write_block(out: &mut String, label: &str, m: &Matrix) {
    writeln!(out, "[{label}] {} {}", m.rows(), m.cols()).expect("writing to a String");
    for row in m.row_iter() {
        write_reals(out, row);
    }
}

pub fn write_vector_block(out: &mut String, label: &str, v: &[f64]) {
    writeln!(out, "[{label}] 1 {}", v.len()).expect("writing to a String");
    write_reals(out, v);
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Line cursor over a text stream that remembers 1-based line numbers for errors.
pub struct LineReader<R> {
    inner: R,
    path: String,
    line_no: usize,
    buf: String,
}

impl LineReader<std::io::BufReader<std::fs::File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(LineReader::new(
            std::io::BufReader::new(file),
            path.display().to_string(),
        ))
    }
}

impl<R: BufRead> LineReader<R> {
    pub fn new(inner: R, path: impl Into<String>) -> Self {
        LineReader {
            inner,
            path: path.into(),
            line_no: 0,
            buf: String::new(),
        }
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    /// Number of the line most recently returned (0 before the first read).
    pub fn line_no(&self) -> usize {
        self.line_no
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(&self.path, self.line_no, message)
    }

    /// Next line without its terminator, or `None` at end of input.
    pub fn next_line(&mut self) -> Result<Option<&str>> {
        self.buf.clear();
        let n = self
            .inner
            .read_line(&mut self.buf)
            .map_err(|e| Error::io(self.path.clone(), e))?;
        if n == 0 {
            return Ok(None);
        }
        self.line_no += 1;
        let trimmed = self.buf.trim_end_matches(['\n', '\r']);
        Ok(Some(trimmed))
    }

    pub fn expect_line(&mut self, what: &str) -> Result<String> {
        match self.next_line()? {
            Some(line) => Ok(line.to_string()),
            None => Err(self.error(format!("unexpected end of file, expected {what}"))),
        }
    }

    /// Fails unless everything left is blank.
    pub fn expect_end(&mut self) -> Result<()> {
        while let Some(line) = self.next_line()? {
            if !line.trim().is_empty() {
                return Err(self.error("unexpected trailing content"));
            }
        }
        Ok(())
    }

    pub fn parse_reals(&self, tokens: &[&str], expected: usize) -> Result<Vec<f64>> {
        if tokens.len() != expected {
            return Err(self.error(format!(
                "expected {expected} values, found {}",
                tokens.len()
            )));
        }
        tokens
            .iter()
            .map(|t| {
                let v: f64 = t
                    .parse()
                    .map_err(|_| self.error(format!("cannot parse '{t}' as a real")))?;
                if !v.is_finite() {
                    return Err(self.error(format!("non-finite value '{t}'")));
                }
                Ok(v)
            })
            .collect()
    }

    pub fn parse_count(&self, token: Option<&str>, what: &str) -> Result<usize> {
        let token = token.ok_or_else(|| self.error(format!("missing {what}")))?;
        token
            .parse()
            .map_err(|_| self.error(format!("cannot parse {what} '{token}'")))
    }

    pub fn read_block(&mut self, label: &str) -> Result<Matrix> {
        let header = self.expect_line(&format!("block [{label}]"))?;
        let mut tokens = header.split_whitespace();
        let expected = format!("[{label}]");
        if tokens.next() != Some(expected.as_str()) {
            return Err(self.error(format!("expected block {expected}, found '{header}'")));
        }
        let rows = self.parse_count(tokens.next(), "row count")?;
        let cols = self.parse_count(tokens.next(), "column count")?;
        if tokens.next().is_some() || rows == 0 || cols == 0 {
            return Err(self.error(format!("malformed block header '{header}'")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.expect_line(&format!("row of block {expected}"))?;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            data.extend(self.parse_reals(&tokens, cols)?);
        }
        Matrix::new(rows, cols, data)
    }

    pub fn read_vector_block(&mut self, label: &str, len: usize) -> Result<Vec<f64>> {
        let m = self.read_block(label)?;
        if m.rows() != 1 || m.cols() != len {
            return Err(self.error(format!(
                "block [{label}] should be 1x{len}, found {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(m.into_vec())
    }

    pub fn read_block_shaped(&mut self, label: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let m = self.read_block(label)?;
        if m.shape() != (rows, cols) {
            return Err(self.error(format!(
                "block [{label}] should be {rows}x{cols}, found {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(m)
    }
}

/// Parses `key=value` tokens of a parameter line.
pub fn key_values(line: &str) -> Vec<(&str, &str)> {
    line.split_whitespace()
        .filter_map(|tok| tok.split_once('='))
        .collect()
}

pub fn lookup<'a>(pairs: &[(&'a str, &'a str)], key: &str) -> Option<&'a str> {
    pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

pub fn parse_list<T: std::str::FromStr>(value: &str) -> Option<Vec<T>> {
    value.split(',').map(|t| t.parse().ok()).collect()
}
