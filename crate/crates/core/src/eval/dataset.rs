//! Labeled sentence-pair datasets.
//!
//! Canonical TSV, one pair per line (blank lines and `#` comments skipped):
//!
//! ```text
//! id_a<TAB>id_b<TAB>label<TAB>sentence_a<TAB>sentence_b[<TAB>train|dev|test]
//! ```

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use crate::digest::Fingerprint;
use crate::error::{Error, Result};
use crate::model_io::LineReader;
use crate::rng::{permutation, seeded, stream};

#[derive(Clone, Debug, PartialEq)]
pub enum LabelKind {
    /// Real-valued score in `[lo, hi]`.
    Score { lo: f64, hi: f64 },
    /// Class names; labels are indices into this list.
    Classes(Vec<String>),
}

impl LabelKind {
    pub fn classes<S: AsRef<str>>(names: &[S]) -> LabelKind {
        LabelKind::Classes(names.iter().map(|s| s.as_ref().to_string()).collect())
    }

    fn parse(&self, token: &str) -> std::result::Result<Label, String> {
        match self {
            LabelKind::Score { lo, hi } => {
                let v: f64 = token
                    .trim()
                    .parse()
                    .map_err(|_| format!("cannot parse score '{token}'"))?;
                if !v.is_finite() || v < *lo || v > *hi {
                    return Err(format!("score {token} outside [{lo}, {hi}]"));
                }
                Ok(Label::Score(v))
            }
            LabelKind::Classes(names) => names
                .iter()
                .position(|n| n.eq_ignore_ascii_case(token.trim()))
                .map(Label::Class)
                .ok_or_else(|| format!("unknown class '{token}' (expected one of {})", names.join(", "))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Label {
    Score(f64),
    Class(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn parse(token: &str) -> Option<Split> {
        match token.trim().to_ascii_lowercase().as_str() {
            "train" => Some(Split::Train),
            "dev" | "trial" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub id_a: String,
    pub id_b: String,
    pub label: Label,
    pub sentence_a: String,
    pub sentence_b: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairDataset {
    pub name: String,
    pub kind: LabelKind,
    pub pairs: Vec<Pair>,
    /// One split per pair, when the source declares them.
    pub splits: Option<Vec<Split>>,
}

/// Pair indices of a train/dev/test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
    /// True when the partition was drawn from the seed rather than read from the data.
    pub generated: bool,
}

impl PairDataset {
    pub fn new(name: impl Into<String>, kind: LabelKind, pairs: Vec<Pair>, splits: Option<Vec<Split>>) -> Result<Self> {
        if let Some(s) = &splits {
            if s.len() != pairs.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} split tags for {} pairs",
                    s.len(),
                    pairs.len()
                )));
            }
        }
        for (i, p) in pairs.iter().enumerate() {
            let ok = match (&kind, p.label) {
                (LabelKind::Score { lo, hi }, Label::Score(v)) => v.is_finite() && v >= *lo && v <= *hi,
                (LabelKind::Classes(names), Label::Class(c)) => c < names.len(),
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidArgument(format!("pair {i}: label {:?} does not fit {kind:?}", p.label)));
            }
        }
        Ok(PairDataset {
            name: name.into(),
            kind,
            pairs,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn class_names(&self) -> Option<&[String]> {
        match &self.kind {
            LabelKind::Classes(names) => Some(names),
            LabelKind::Score { .. } => None,
        }
    }

    pub fn score_range(&self) -> Option<(f64, f64)> {
        match self.kind {
            LabelKind::Score { lo, hi } => Some((lo, hi)),
            LabelKind::Classes(_) => None,
        }
    }

    pub fn scores(&self) -> Option<Vec<f64>> {
        self.pairs
            .iter()
            .map(|p| match p.label {
                Label::Score(v) => Some(v),
                Label::Class(_) => None,
            })
            .collect()
    }

    pub fn classes(&self) -> Option<Vec<usize>> {
        self.pairs
            .iter()
            .map(|p| match p.label {
                Label::Class(c) => Some(c),
                Label::Score(_) => None,
            })
            .collect()
    }

    /// Every ID referenced by a pair, sorted.
    pub fn ids(&self) -> BTreeSet<&str> {
        self.pairs
            .iter()
            .flat_map(|p| [p.id_a.as_str(), p.id_b.as_str()])
            .collect()
    }

    /// The declared partition, or a 70/10/20 split drawn from `seed`.
    pub fn split_indices(&self, seed: u64) -> SplitIndices {
        match &self.splits {
            Some(tags) => {
                let pick = |want: Split| (0..tags.len()).filter(|&i| tags[i] == want).collect();
                SplitIndices {
                    train: pick(Split::Train),
                    dev: pick(Split::Dev),
                    test: pick(Split::Test),
                    generated: false,
                }
            }
            None => {
                let n = self.pairs.len();
                let order = permutation(&mut seeded(seed, stream::SPLIT), n);
                let n_train = (0.7 * n as f64).round() as usize;
                let n_dev = (0.1 * n as f64).round().max(1.0) as usize;
                let n_dev = n_dev.min(n.saturating_sub(n_train));
                let mut train = order[..n_train].to_vec();
                let mut dev = order[n_train..n_train + n_dev].to_vec();
                let mut test = order[n_train + n_dev..].to_vec();
                train.sort_unstable();
                dev.sort_unstable();
                test.sort_unstable();
                SplitIndices {
                    train,
                    dev,
                    test,
                    generated: true,
                }
            }
        }
    }

    pub fn fingerprint_into(&self, fp: &mut Fingerprint) {
        fp.field("dataset", &self.name);
        match &self.kind {
            LabelKind::Score { lo, hi } => {
                fp.reals("score_range", &[*lo, *hi]);
            }
            LabelKind::Classes(names) => {
                fp.field("classes", names.join("\t"));
            }
        }
        for p in &self.pairs {
            fp.field("a", &p.id_a).field("b", &p.id_b);
            match p.label {
                Label::Score(v) => fp.reals("score", &[v]),
                Label::Class(c) => fp.field("class", (c as u64).to_le_bytes()),
            };
        }
        if let Some(tags) = &self.splits {
            let joined: Vec<&str> = tags.iter().map(|s| s.label()).collect();
            fp.field("splits", joined.join(","));
        }
    }

    /// Subset with the given pair indices, keeping split tags.
    pub fn subset(&self, indices: &[usize]) -> PairDataset {
        PairDataset {
            name: self.name.clone(),
            kind: self.kind.clone(),
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
            splits: self.splits.as_ref().map(|s| indices.iter().map(|&i| s[i]).collect()),
        }
    }

    /// Canonical tab-separated form, readable by [`read_pair_dataset_tsv`].
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.pairs.iter().enumerate() {
            let label = match (p.label, &self.kind) {
                (Label::Score(v), _) => format!("{v}"),
                (Label::Class(c), LabelKind::Classes(names)) => names[c].clone(),
                (Label::Class(c), _) => c.to_string(),
            };
            out.push_str(&format!("{}\t{}\t{label}\t{}\t{}", p.id_a, p.id_b, p.sentence_a, p.sentence_b));
            if let Some(s) = &self.splits {
                out.push('\t');
                out.push_str(s[i].label());
            }
            out.push('\n');
        }
        out
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

pub fn load_pair_dataset_tsv(path: &Path, kind: LabelKind) -> Result<PairDataset> {
    let mut reader = LineReader::open(path)?;
    read_pair_dataset_tsv(&mut reader, dataset_name(path), kind)
}

pub fn read_pair_dataset_tsv<R: BufRead>(
    reader: &mut LineReader<R>,
    name: String,
    kind: LabelKind,
) -> Result<PairDataset> {
    let mut pairs = Vec::new();
    let mut tags: Vec<Option<Split>> = Vec::new();
    let mut first_split_line = None;
    let mut first_plain_line = None;
    while let Some(line) = reader.next_line()? {
        let line = line.to_string();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 && cols.len() != 6 {
            return Err(reader.error(format!("expected 5 or 6 tab-separated columns, found {}", cols.len())));
        }
        let label = kind.parse(cols[2]).map_err(|m| reader.error(m))?;
        if cols[0].trim().is_empty() || cols[1].trim().is_empty() {
            return Err(reader.error("empty pair id"));
        }
        let tag = match cols.get(5) {
            Some(t) => {
                first_split_line.get_or_insert(reader.line_no());
                Some(Split::parse(t).ok_or_else(|| reader.error(format!("unknown split '{t}'")))?)
            }
            None => {
                first_plain_line.get_or_insert(reader.line_no());
                None
            }
        };
        if first_split_line.is_some() && first_plain_line.is_some() {
            return Err(reader.error("split column must be present on every line or on none"));
        }
        tags.push(tag);
        pairs.push(Pair {
            id_a: cols[0].trim().to_string(),
            id_b: cols[1].trim().to_string(),
            label,
            sentence_a: cols[3].to_string(),
            sentence_b: cols[4].to_string(),
        });
    }
    if pairs.is_empty() {
        return Err(reader.error("dataset has no pairs"));
    }
    let splits = tags.into_iter().collect::<Option<Vec<Split>>>();
    PairDataset::new(name, kind, pairs, splits)
}

/// Class set made of the distinct labels in the third column of a canonical
/// TSV, sorted. Useful when the caller has no fixed class list.
pub fn infer_class_kind(path: &Path) -> Result<LabelKind> {
    let mut reader = LineReader::open(path)?;
    let mut names = BTreeSet::new();
    while let Some(line) = reader.next_line()? {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(label) = line.split('\t').nth(2) {
            names.insert(label.trim().to_string());
        }
    }
    Ok(LabelKind::Classes(names.into_iter().collect()))
}

/// True when the first line is an official SICK header (starts with `pair_ID`).
pub fn is_sick_file(path: &Path) -> Result<bool> {
    let mut reader = LineReader::open(path)?;
    Ok(reader
        .next_line()?
        .is_some_and(|l| l.split('\t').next().map(str::trim) == Some("pair_ID")))
}

/// Class names of the entailment half of the official SICK file.
pub const SICK_CLASSES: [&str; 3] = ["ENTAILMENT", "NEUTRAL", "CONTRADICTION"];

/// Relatedness-scored and entailment-classed views of an official SICK file.
///
/// Sentence IDs are `<pair_ID>:A` and `<pair_ID>:B`. A `SemEval_set` column,
/// when present, supplies the partition (TRIAL is the dev split).
pub fn load_sick_official(path: &Path) -> Result<(PairDataset, PairDataset)> {
    let mut reader = LineReader::open(path)?;
    read_sick_official(&mut reader, &dataset_name(path))
}

pub fn read_sick_official<R: BufRead>(reader: &mut LineReader<R>, name: &str) -> Result<(PairDataset, PairDataset)> {
    let header = reader.expect_line("SICK header line")?;
    let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
    let find = |names: &[&str]| columns.iter().position(|c| names.contains(c));
    let required = |names: &[&str]| {
        find(names).ok_or_else(|| reader.error(format!("missing required column {}", names.join(" or "))))
    };
    let id_col = required(&["pair_ID"])?;
    let a_col = required(&["sentence_A"])?;
    let b_col = required(&["sentence_B"])?;
    let score_col = required(&["relatedness_score"])?;
    let ent_col = required(&["entailment_judgment", "entailment_label"])?;
    let split_col = find(&["SemEval_set"]);

    let score_kind = LabelKind::Score { lo: 1.0, hi: 5.0 };
    let class_kind = LabelKind::classes(&SICK_CLASSES);
    let mut scored = Vec::new();
    let mut classed = Vec::new();
    let mut splits = Vec::new();
    while let Some(line) = reader.next_line()? {
        let line = line.to_string();
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != columns.len() {
            return Err(reader.error(format!("expected {} columns, found {}", columns.len(), cols.len())));
        }
        let id = cols[id_col].trim();
        let score = score_kind.parse(cols[score_col]).map_err(|m| reader.error(m))?;
        let class = class_kind.parse(cols[ent_col]).map_err(|m| reader.error(m))?;
        if let Some(c) = split_col {
            splits.push(Split::parse(cols[c]).ok_or_else(|| reader.error(format!("unknown split '{}'", cols[c])))?);
        }
        let pair = |label| Pair {
            id_a: format!("{id}:A"),
            id_b: format!("{id}:B"),
            label,
            sentence_a: cols[a_col].to_string(),
            sentence_b: cols[b_col].to_string(),
        };
        scored.push(pair(score));
        classed.push(pair(class));
    }
    if scored.is_empty() {
        return Err(reader.error("SICK file has no rows"));
    }
    let splits = split_col.map(|_| splits);
    Ok((
        PairDataset::new(format!("{name}-relatedness"), score_kind, scored, splits.clone())?,
        PairDataset::new(format!("{name}-entailment"), class_kind, classed, splits)?,
    ))
}
