//! ID-keyed source embedding tables and their alignment into multi-view samples.
//!
//! Vector-table files are word2vec-style text: a header `N D`, then `N` lines
//! `id v1 ... vD`. Sequence-table files hold one variable-length matrix per ID:
//! a header `N D`, then `N` blocks of `#id S` followed by `S` rows of `D` reals.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model_io::{write_file, write_reals, LineReader};

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return Err(Error::InvalidArgument(format!(
            "item IDs must be non-empty and contain no whitespace, got '{id}'"
        )));
    }
    Ok(())
}

fn build_index(ids: &[String]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        check_id(id)?;
        if index.insert(id.clone(), i).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate ID '{id}'")));
        }
    }
    Ok(index)
}

fn source_name_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "source".to_string())
}

fn parse_header<R: BufRead>(reader: &mut LineReader<R>) -> Result<(usize, usize)> {
    let header = reader.expect_line("header 'N D'")?;
    let mut tokens = header.split_whitespace();
    let n = reader.parse_count(tokens.next(), "row count")?;
    let d = reader.parse_count(tokens.next(), "dimension")?;
    if tokens.next().is_some() {
        return Err(reader.error("header must be exactly 'N D'"));
    }
    if n == 0 || d == 0 {
        return Err(reader.error("row count and dimension must be positive"));
    }
    Ok((n, d))
}

/// True when the first non-blank line after the header opens a `#id S` block.
pub fn is_sequence_file(path: &Path) -> Result<bool> {
    let mut reader = LineReader::open(path)?;
    reader.expect_line("header 'N D'")?;
    while let Some(line) = reader.next_line()? {
        if !line.trim().is_empty() {
            return Ok(line.starts_with('#'));
        }
    }
    Ok(false)
}

/// Loads a sequence table, or a vector table as length-one sequences.
pub fn load_token_table(path: &Path) -> Result<SequenceTable> {
    if is_sequence_file(path)? {
        SequenceTable::load(path)
    } else {
        Ok(SequenceTable::from_vector_table(&VectorTable::load(path)?))
    }
}

/// Fixed-dimension embedding rows for one source, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorTable {
    source_name: String,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Matrix,
}

impl VectorTable {
    pub fn new(source_name: impl Into<String>, ids: Vec<String>, vectors: Matrix) -> Result<Self> {
        if ids.len() != vectors.rows() {
            return Err(Error::Shape(format!(
                "{} IDs for {} vectors",
                ids.len(),
                vectors.rows()
            )));
        }
        let index = build_index(&ids)?;
        Ok(VectorTable {
            source_name: source_name.into(),
            ids,
            index,
            vectors,
        })
    }

    pub fn from_pairs<S: Into<String>>(
        source_name: impl Into<String>,
        rows: Vec<(S, Vec<f64>)>,
    ) -> Result<Self> {
        let (ids, vecs): (Vec<String>, Vec<Vec<f64>>) =
            rows.into_iter().map(|(id, v)| (id.into(), v)).unzip();
        let vectors = Matrix::from_rows(&vecs)?;
        VectorTable::new(source_name, ids, vectors)
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn matrix(&self) -> &Matrix {
        &self.vectors
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.vectors.row(i))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.vectors.row_iter())
    }

    /// Every stored vector multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> VectorTable {
        VectorTable {
            vectors: self.vectors.scale(alpha),
            ..self.clone()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = LineReader::open(path)?;
        Self::read(&mut reader, source_name_of(path))
    }

    pub fn read<R: BufRead>(reader: &mut LineReader<R>, source_name: String) -> Result<Self> {
        let (n, d) = parse_header(reader)?;
        let mut ids = Vec::with_capacity(n);
        let mut index = HashMap::with_capacity(n);
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let line = match reader.next_line()? {
                Some(line) => line.to_string(),
                None => {
                    return Err(reader.error(format!(
                        "header declares {n} rows but the file ends after {}",
                        ids.len()
                    )))
                }
            };
            let mut tokens = line.split_whitespace();
            let id = tokens
                .next()
                .ok_or_else(|| reader.error("empty data line"))?
                .to_string();
            let values: Vec<&str> = tokens.collect();
            data.extend(reader.parse_reals(&values, d)?);
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(reader.error(format!("duplicate ID '{id}'")));
            }
            ids.push(id);
        }
        if let Err(e) = reader.expect_end() {
            return Err(match e {
                Error::Parse { path, line, .. } => Error::Parse {
                    path,
                    line,
                    message: format!("header declares {n} rows but more data follows"),
                },
                other => other,
            });
        }
        let vectors = Matrix::new(n, d, data)?;
        Ok(VectorTable {
            source_name,
            ids,
            index,
            vectors,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim());
        for (id, row) in self.iter() {
            out.push_str(id);
            out.push(' ');
            write_reals(&mut out, row);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_text())
    }
}

/// Variable-length sequences of fixed-dimension rows, one per ID.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceTable {
    source_name: String,
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    sequences: Vec<Matrix>,
}

impl SequenceTable {
    pub fn new(
        source_name: impl Into<String>,
        ids: Vec<String>,
        sequences: Vec<Matrix>,
    ) -> Result<Self> {
        if ids.len() != sequences.len() {
            return Err(Error::Shape(format!(
                "{} IDs for {} sequences",
                ids.len(),
                sequences.len()
            )));
        }
        let dim = sequences
            .first()
            .map(Matrix::cols)
            .ok_or_else(|| Error::InvalidArgument("sequence table needs at least one item".into()))?;
        if let Some(bad) = sequences.iter().position(|s| s.cols() != dim) {
            return Err(Error::Shape(format!(
                "sequence for '{}' has dimension {}, expected {dim}",
                ids[bad],
                sequences[bad].cols()
            )));
        }
        let index = build_index(&ids)?;
        Ok(SequenceTable {
            source_name: source_name.into(),
            dim,
            ids,
            index,
            sequences,
        })
    }

    /// Length-one sequences holding each vector of `table`.
    pub fn from_vector_table(table: &VectorTable) -> SequenceTable {
        let sequences = table
            .matrix()
            .row_iter()
            .map(|row| Matrix::new(1, row.len(), row.to_vec()).expect("finite row"))
            .collect();
        SequenceTable {
            source_name: table.source_name().to_string(),
            dim: table.dim(),
            ids: table.ids().to_vec(),
            index: table.index.clone(),
            sequences,
        }
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&Matrix> {
        self.index.get(id).map(|&i| &self.sequences[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.ids.iter().map(String::as_str).zip(&self.sequences)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = LineReader::open(path)?;
        Self::read(&mut reader, source_name_of(path))
    }

    pub fn read<R: BufRead>(reader: &mut LineReader<R>, source_name: String) -> Result<Self> {
        let (n, d) = parse_header(reader)?;
        let mut ids: Vec<String> = Vec::with_capacity(n);
        let mut index = HashMap::with_capacity(n);
        let mut sequences = Vec::with_capacity(n);
        for _ in 0..n {
            let line = reader.expect_line("block header '#id S'")?;
            let rest = line
                .strip_prefix('#')
                .ok_or_else(|| reader.error(format!("expected '#id S', found '{line}'")))?;
            let mut tokens = rest.split_whitespace();
            let id = tokens
                .next()
                .ok_or_else(|| reader.error("block header lacks an ID"))?
                .to_string();
            let len = reader.parse_count(tokens.next(), "sequence length")?;
            if len == 0 || tokens.next().is_some() {
                return Err(reader.error(format!("malformed block header '{line}'")));
            }
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(reader.error(format!("duplicate ID '{id}'")));
            }
            let mut data = Vec::with_capacity(len * d);
            for k in 0..len {
                let row = match reader.next_line()? {
                    Some(row) => row.to_string(),
                    None => {
                        return Err(reader.error(format!(
                            "block '#{id} {len}' ends after {k} row(s)"
                        )))
                    }
                };
                if row.starts_with('#') {
                    return Err(reader.error(format!(
                        "block '#{id} {len}' ends after {k} row(s)"
                    )));
                }
                let tokens: Vec<&str> = row.split_whitespace().collect();
                data.extend(reader.parse_reals(&tokens, d)?);
            }
            sequences.push(Matrix::new(len, d, data)?);
            ids.push(id);
        }
        reader.expect_end()?;
        Ok(SequenceTable {
            source_name,
            dim: d,
            ids,
            index,
            sequences,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        for (id, seq) in self.iter() {
            out.push_str(&format!("#{id} {}\n", seq.rows()));
            for row in seq.row_iter() {
                write_reals(&mut out, row);
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_text())
    }
}

/// Rows of several sources restricted to their common IDs, in sorted ID order.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedViews {
    pub ids: Vec<String>,
    pub views: Vec<(String, Matrix)>,
    /// Per source, how many of its IDs fell outside the intersection.
    pub dropped: Vec<usize>,
}

impl AlignedViews {
    /// Wraps matrices that are already row-aligned.
    pub fn from_matrices(ids: Vec<String>, views: Vec<(String, Matrix)>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::InvalidArgument("at least one view is required".into()));
        }
        if let Some((name, m)) = views.iter().find(|(_, m)| m.rows() != ids.len()) {
            return Err(Error::Shape(format!(
                "view '{name}' has {} rows for {} IDs",
                m.rows(),
                ids.len()
            )));
        }
        build_index(&ids)?;
        let dropped = vec![0; views.len()];
        Ok(AlignedViews { ids, views, dropped })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|(_, m)| m.cols()).collect()
    }

    pub fn matrices(&self) -> impl Iterator<Item = &Matrix> {
        self.views.iter().map(|(_, m)| m)
    }
}

pub fn align_by_id(tables: &[&VectorTable]) -> Result<AlignedViews> {
    let first = tables
        .first()
        .ok_or_else(|| Error::InvalidArgument("at least one table is required".into()))?;
    let mut common: BTreeSet<&str> = first.ids().iter().map(String::as_str).collect();
    for t in &tables[1..] {
        common.retain(|id| t.contains(id));
    }
    if common.is_empty() {
        let sizes: Vec<String> = tables
            .iter()
            .map(|t| format!("{}={}", t.source_name(), t.len()))
            .collect();
        return Err(Error::EmptyIntersection(sizes.join(", ")));
    }
    let ids: Vec<String> = common.iter().map(|s| s.to_string()).collect();
    let views = tables
        .iter()
        .map(|t| {
            let mut data = Vec::with_capacity(ids.len() * t.dim());
            for id in &ids {
                data.extend_from_slice(t.get(id).expect("ID in intersection"));
            }
            let m = Matrix::new(ids.len(), t.dim(), data).expect("finite table rows");
            (t.source_name().to_string(), m)
        })
        .collect();
    let dropped = tables.iter().map(|t| t.len() - ids.len()).collect();
    Ok(AlignedViews { ids, views, dropped })
}
