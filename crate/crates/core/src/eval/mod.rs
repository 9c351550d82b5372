//! Evaluation of sentence vectors on labeled pairs: unsupervised cosine
//! similarity against gold scores, and supervised probes for relatedness
//! distributions and pair classification.

mod dataset;
mod metrics;
mod probe;

pub use dataset::{
    infer_class_kind, is_sick_file, load_pair_dataset_tsv, load_sick_official, read_pair_dataset_tsv, read_sick_official, Label, LabelKind, Pair,
    PairDataset, Split, SplitIndices, SICK_CLASSES,
};
pub use metrics::{accuracy, cosine_similarity, pearson, scale_similarity};
pub use probe::{train_probe, ProbeConfig, ProbeModel, ProbeOutcome};

use serde::Serialize;

use crate::digest::Fingerprint;
use crate::error::{Error, Result};
use crate::nn::{argmax, one_hot, pair_features};
use crate::store::VectorTable;

/// One measured cell: `{task, metric, value, n, fingerprint}` on the wire.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: String,
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub fingerprint: String,
    #[serde(skip)]
    pub probe: Option<ProbeSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSummary {
    pub rounds: usize,
    pub stale_rounds: usize,
    pub epochs: usize,
    pub best_dev: f64,
    pub generated_split: bool,
}

impl EvalReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Aligned plain-text rendering of several reports.
pub fn report_table(reports: &[EvalReport]) -> String {
    let rows: Vec<[String; 4]> = reports
        .iter()
        .map(|r| [r.task.clone(), r.metric.clone(), format!("{:.4}", r.value), r.n.to_string()])
        .collect();
    let header = ["task", "metric", "value", "n"].map(String::from);
    let mut widths = header.clone().map(|h| h.len());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&rows) {
        let cells: Vec<String> = row
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i >= 2 { format!("{c:>w$}") } else { format!("{c:<w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn vectors_fingerprint(fp: &mut Fingerprint, vectors: &VectorTable) {
    fp.field("vectors", vectors.source_name());
    for (id, v) in vectors.iter() {
        fp.field("id", id).reals("v", v);
    }
}

fn probe_fingerprint(fp: &mut Fingerprint, config: &ProbeConfig, splits: &SplitIndices) {
    fp.field("nhid", (config.nhid as u64).to_le_bytes())
        .field("optim", &config.optim)
        .field("batch", (config.batch_size as u64).to_le_bytes())
        .field("tenacity", (config.tenacity as u64).to_le_bytes())
        .field("epoch_size", (config.epoch_size as u64).to_le_bytes())
        .field("max_epochs", (config.max_epochs as u64).to_le_bytes())
        .field("seed", config.seed.to_le_bytes())
        .reals("lr", &[config.learning_rate]);
    for (name, idx) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        let bytes: Vec<u8> = idx.iter().flat_map(|&i| (i as u64).to_le_bytes()).collect();
        fp.field(name, bytes);
    }
}

/// Looks up both sides of every pair, reporting all missing IDs at once.
fn resolve<'a>(dataset: &PairDataset, vectors: &'a VectorTable) -> Result<Vec<(&'a [f64], &'a [f64])>> {
    let missing: Vec<&str> = dataset.ids().into_iter().filter(|id| !vectors.contains(id)).collect();
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(20).copied().collect();
        let more = if missing.len() > shown.len() {
            format!(" (and {} more)", missing.len() - shown.len())
        } else {
            String::new()
        };
        return Err(Error::MissingIds(format!(
            "{} of dataset {} missing from {}: {}{more}",
            missing.len(),
            dataset.name,
            vectors.source_name(),
            shown.join(", ")
        )));
    }
    Ok(dataset
        .pairs
        .iter()
        .map(|p| (vectors.get(&p.id_a).unwrap(), vectors.get(&p.id_b).unwrap()))
        .collect())
}

/// Pearson correlation between gold scores and range-scaled pair cosines.
pub fn similarity_eval_unsupervised(dataset: &PairDataset, vectors: &VectorTable) -> Result<EvalReport> {
    let (lo, hi) = dataset
        .score_range()
        .ok_or_else(|| Error::InvalidArgument(format!("dataset {} has class labels, not scores", dataset.name)))?;
    let gold = dataset.scores().expect("score dataset");
    let mut predicted = Vec::with_capacity(gold.len());
    for (a, b) in resolve(dataset, vectors)? {
        predicted.push(scale_similarity(cosine_similarity(a, b)?, lo, hi));
    }
    let value = pearson(&predicted, &gold)?;
    let mut fp = Fingerprint::new();
    fp.field("task", "similarity");
    dataset.fingerprint_into(&mut fp);
    vectors_fingerprint(&mut fp, vectors);
    Ok(EvalReport {
        task: dataset.name.clone(),
        metric: "pearson".into(),
        value,
        n: gold.len(),
        fingerprint: fp.finish(),
        probe: None,
    })
}

/// Target distribution over the integer bins `1..=bins` for a score in `[1, bins]`.
pub fn relatedness_target(score: f64, bins: usize) -> Vec<f64> {
    let floor = score.floor();
    let frac = score - floor;
    let mut t = vec![0.0; bins];
    let lower = floor as usize - 1;
    if frac == 0.0 {
        t[lower] = 1.0;
    } else {
        t[lower] = 1.0 - frac;
        t[lower + 1] = frac;
    }
    t
}

/// Expected bin value `Σ k p_k` with bins numbered from 1.
pub fn expected_score(distribution: &[f64]) -> f64 {
    distribution
        .iter()
        .enumerate()
        .map(|(k, p)| (k + 1) as f64 * p)
        .sum()
}

struct Prepared {
    features: Vec<Vec<f64>>,
    splits: SplitIndices,
}

fn prepare(dataset: &PairDataset, vectors: &VectorTable, seed: u64) -> Result<Prepared> {
    let features = resolve(dataset, vectors)?
        .into_iter()
        .map(|(a, b)| pair_features(a, b))
        .collect();
    let splits = dataset.split_indices(seed);
    for (name, idx) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        if idx.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "dataset {} has no {name} pairs",
                dataset.name
            )));
        }
    }
    Ok(Prepared { features, splits })
}

fn gather<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

fn summary(out: &ProbeOutcome, splits: &SplitIndices) -> ProbeSummary {
    ProbeSummary {
        rounds: out.rounds,
        stale_rounds: out.stale_rounds,
        epochs: out.epochs,
        best_dev: out.best_dev,
        generated_split: splits.generated,
    }
}

/// Probe that predicts a distribution over scores 1..5; reports test Pearson of its expectation.
pub fn relatedness_probe_eval(dataset: &PairDataset, vectors: &VectorTable, config: &ProbeConfig) -> Result<EvalReport> {
    let (lo, hi) = dataset
        .score_range()
        .ok_or_else(|| Error::InvalidArgument(format!("dataset {} has class labels, not scores", dataset.name)))?;
    if lo < 1.0 || hi > 5.0 {
        return Err(Error::InvalidArgument(format!(
            "relatedness probe needs scores within [1, 5], dataset declares [{lo}, {hi}]"
        )));
    }
    config.validate()?;
    let gold = dataset.scores().expect("score dataset");
    let Prepared { features, splits } = prepare(dataset, vectors, config.seed)?;
    let targets: Vec<Vec<f64>> = gold.iter().map(|&r| relatedness_target(r, 5)).collect();
    let predict = |m: &ProbeModel, idx: &[usize]| -> Vec<f64> {
        idx.iter().map(|&i| expected_score(&m.probabilities(&features[i]))).collect()
    };
    let dev_gold = gather(&gold, &splits.dev);
    let dev_score = |m: &ProbeModel| pearson(&predict(m, &splits.dev), &dev_gold).unwrap_or(-1.0);
    let outcome = train_probe(
        &gather(&features, &splits.train),
        &gather(&targets, &splits.train),
        5,
        config,
        dev_score,
    )?;
    let value = pearson(&predict(&outcome.model, &splits.test), &gather(&gold, &splits.test))?;
    let mut fp = Fingerprint::new();
    fp.field("task", "relatedness-probe");
    dataset.fingerprint_into(&mut fp);
    vectors_fingerprint(&mut fp, vectors);
    probe_fingerprint(&mut fp, config, &splits);
    Ok(EvalReport {
        task: dataset.name.clone(),
        metric: "pearson".into(),
        value,
        n: splits.test.len(),
        fingerprint: fp.finish(),
        probe: Some(summary(&outcome, &splits)),
    })
}

/// Logistic-regression (or one-hidden-layer) probe; reports test accuracy in percent.
pub fn pair_classification_probe_eval(
    dataset: &PairDataset,
    vectors: &VectorTable,
    config: &ProbeConfig,
) -> Result<EvalReport> {
    let names = dataset
        .class_names()
        .ok_or_else(|| Error::InvalidArgument(format!("dataset {} has scores, not classes", dataset.name)))?
        .to_vec();
    if names.len() < 2 {
        return Err(Error::InvalidArgument("pair classification needs at least 2 classes".into()));
    }
    config.validate()?;
    let gold = dataset.classes().expect("class dataset");
    let Prepared { features, splits } = prepare(dataset, vectors, config.seed)?;
    for (c, name) in names.iter().enumerate() {
        if !splits.train.iter().any(|&i| gold[i] == c) {
            return Err(Error::InvalidArgument(format!(
                "class '{name}' has no pairs in the train split"
            )));
        }
    }
    let predict = |m: &ProbeModel, idx: &[usize]| -> Vec<usize> {
        idx.iter().map(|&i| argmax(&m.logits(&features[i]))).collect()
    };
    let dev_gold = gather(&gold, &splits.dev);
    let dev_score = |m: &ProbeModel| accuracy(&predict(m, &splits.dev), &dev_gold).unwrap_or(0.0);
    let targets: Vec<Vec<f64>> = splits.train.iter().map(|&i| one_hot(gold[i], names.len())).collect();
    let outcome = train_probe(&gather(&features, &splits.train), &targets, names.len(), config, dev_score)?;
    let value = accuracy(&predict(&outcome.model, &splits.test), &gather(&gold, &splits.test))?;
    let mut fp = Fingerprint::new();
    fp.field("task", "classification-probe");
    dataset.fingerprint_into(&mut fp);
    vectors_fingerprint(&mut fp, vectors);
    probe_fingerprint(&mut fp, config, &splits);
    Ok(EvalReport {
        task: dataset.name.clone(),
        metric: "accuracy".into(),
        value,
        n: splits.test.len(),
        fingerprint: fp.finish(),
        probe: Some(summary(&outcome, &splits)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::rng::{normal, permutation, seeded};

    fn score_pair(i: usize, score: f64) -> Pair {
        Pair {
            id_a: format!("a{i}"),
            id_b: format!("b{i}"),
            label: Label::Score(score),
            sentence_a: String::new(),
            sentence_b: String::new(),
        }
    }

    #[test]
    fn relatedness_targets_and_expectation() {
        assert_eq!(relatedness_target(3.0, 5), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let t = relatedness_target(4.6, 5);
        assert!((t[4] - 0.6).abs() < 1e-12 && (t[3] - 0.4).abs() < 1e-12);
        assert_eq!(relatedness_target(5.0, 5), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!((expected_score(&[0.0, 0.0, 0.0, 0.4, 0.6]) - 4.6).abs() < 1e-12);
    }

    /// Pairs whose cosine is exactly `gold / 5`: unit `a` and `b` at angle acos(gold/5).
    fn perfect_fixture(n: usize) -> (PairDataset, VectorTable) {
        let mut pairs = Vec::new();
        let mut rows = Vec::new();
        let mut ids = Vec::new();
        for i in 0..n {
            let gold = 5.0 * i as f64 / (n - 1) as f64;
            let c = gold / 5.0;
            pairs.push(score_pair(i, gold));
            ids.push(format!("a{i}"));
            rows.push(vec![1.0, 0.0]);
            ids.push(format!("b{i}"));
            rows.push(vec![c, (1.0 - c * c).sqrt()]);
        }
        let ds = PairDataset::new("sts", LabelKind::Score { lo: 0.0, hi: 5.0 }, pairs, None).unwrap();
        let table = VectorTable::new("vec", ids, Matrix::from_rows(&rows).unwrap()).unwrap();
        (ds, table)
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let (ds, table) = perfect_fixture(11);
        let r = similarity_eval_unsupervised(&ds, &table).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert_eq!(r.n, 11);
        assert_eq!(r.metric, "pearson");
        let again = similarity_eval_unsupervised(&ds, &table).unwrap();
        assert_eq!(r, again);
        let scaled = similarity_eval_unsupervised(&ds, &table.scaled(3.5)).unwrap();
        assert!((scaled.value - r.value).abs() < 1e-12);
    }

    #[test]
    fn random_gold_is_uncorrelated() {
        let mut rng = seeded(3, 0);
        let n = 200;
        let pairs: Vec<Pair> = (0..n).map(|i| score_pair(i, 5.0 * (i as f64) / n as f64)).collect();
        let ds = PairDataset::new("null", LabelKind::Score { lo: 0.0, hi: 5.0 }, pairs, None).unwrap();
        let order = permutation(&mut rng, 2 * n);
        let ids: Vec<String> = (0..n).flat_map(|i| [format!("a{i}"), format!("b{i}")]).collect();
        let ids: Vec<String> = order.iter().map(|&i| ids[i].clone()).collect();
        let m = Matrix::from_fn(2 * n, 8, |_, _| normal(&mut rng));
        let table = VectorTable::new("rand", ids, m).unwrap();
        let r = similarity_eval_unsupervised(&ds, &table).unwrap();
        assert!(r.value.abs() < 0.2, "{}", r.value);
    }

    #[test]
    fn missing_ids_are_listed() {
        let (ds, table) = perfect_fixture(4);
        let partial = VectorTable::new(
            "partial",
            table.ids()[..6].to_vec(),
            table.matrix().row_block(0, 6),
        )
        .unwrap();
        match similarity_eval_unsupervised(&ds, &partial) {
            Err(Error::MissingIds(msg)) => assert!(msg.contains("a3") && msg.contains("b3")),
            r => panic!("unexpected {r:?}"),
        }
    }

    #[test]
    fn report_json_and_table() {
        let r = EvalReport {
            task: "sts".into(),
            metric: "pearson".into(),
            value: 0.5,
            n: 3,
            fingerprint: "ab".into(),
            probe: None,
        };
        assert_eq!(
            r.to_json_line(),
            r#"{"task":"sts","metric":"pearson","value":0.5,"n":3,"fingerprint":"ab"}"#
        );
        let table = report_table(&[r]);
        assert_eq!(table, "task  metric    value  n\nsts   pearson  0.5000  3\n");
    }

    fn class_fixture(n: usize, classes: usize, separable: bool, seed: u64) -> (PairDataset, VectorTable) {
        let mut rng = seeded(seed, 0);
        let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
        let mut pairs = Vec::new();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        let shuffled = permutation(&mut rng, n);
        for (i, &shuffled_i) in shuffled.iter().enumerate() {
            let class = i % classes;
            let label = if separable { class } else { shuffled_i % classes };
            let mut u: Vec<f64> = (0..4).map(|_| 0.1 * normal(&mut rng)).collect();
            let v: Vec<f64> = (0..4).map(|_| 0.1 * normal(&mut rng)).collect();
            u[class] += 3.0;
            pairs.push(Pair {
                id_a: format!("a{i}"),
                id_b: format!("b{i}"),
                label: Label::Class(label),
                sentence_a: String::new(),
                sentence_b: String::new(),
            });
            ids.push(format!("a{i}"));
            rows.push(u);
            ids.push(format!("b{i}"));
            rows.push(v);
        }
        let ds = PairDataset::new("cls", LabelKind::Classes(names), pairs, None).unwrap();
        (ds, VectorTable::new("v", ids, Matrix::from_rows(&rows).unwrap()).unwrap())
    }

    #[test]
    fn separable_classes_reach_full_accuracy() {
        let (ds, table) = class_fixture(600, 3, true, 5);
        let config = ProbeConfig {
            seed: 2,
            ..ProbeConfig::default()
        };
        let r = pair_classification_probe_eval(&ds, &table, &config).unwrap();
        assert_eq!(r.value, 100.0);
        assert_eq!(r.n, 120);
        assert!(r.probe.as_ref().unwrap().generated_split);
        assert_eq!(r, pair_classification_probe_eval(&ds, &table, &config).unwrap());
    }

    #[test]
    fn shuffled_labels_stay_near_chance() {
        let (ds, table) = class_fixture(300, 3, false, 6);
        let r = pair_classification_probe_eval(&ds, &table, &ProbeConfig::default()).unwrap();
        assert!((r.value - 100.0 / 3.0).abs() <= 10.0, "{}", r.value);
    }

    #[test]
    fn class_missing_from_train_is_named() {
        let (mut ds, table) = class_fixture(30, 3, true, 5);
        ds.splits = Some(
            ds.pairs
                .iter()
                .map(|p| match p.label {
                    Label::Class(2) => Split::Test,
                    _ => Split::Train,
                })
                .collect(),
        );
        ds.splits.as_mut().unwrap()[0] = Split::Dev;
        match pair_classification_probe_eval(&ds, &table, &ProbeConfig::default()) {
            Err(Error::InvalidArgument(msg)) => assert!(msg.contains("c2")),
            r => panic!("unexpected {r:?}"),
        }
    }

    #[test]
    fn relatedness_probe_learns_a_monotone_signal() {
        let mut rng = seeded(8, 0);
        let n = 300;
        let mut pairs = Vec::new();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for i in 0..n {
            let s = 1.0 + 4.0 * (i as f64 + 0.5) / n as f64;
            pairs.push(score_pair(i, (s * 10.0).round() / 10.0));
            ids.push(format!("a{i}"));
            rows.push(vec![s, normal(&mut rng) * 0.1, 1.0]);
            ids.push(format!("b{i}"));
            rows.push(vec![1.0, normal(&mut rng) * 0.1, 1.0]);
        }
        let ds = PairDataset::new("rel", LabelKind::Score { lo: 1.0, hi: 5.0 }, pairs, None).unwrap();
        let table = VectorTable::new("v", ids, Matrix::from_rows(&rows).unwrap()).unwrap();
        let config = ProbeConfig {
            learning_rate: 0.01,
            ..ProbeConfig::default()
        };
        let r = relatedness_probe_eval(&ds, &table, &config).unwrap();
        assert!(r.value > 0.9, "{}", r.value);
        let wrong = PairDataset::new("x", LabelKind::Score { lo: 0.0, hi: 5.0 }, vec![score_pair(0, 1.0)], None);
        assert!(relatedness_probe_eval(&wrong.unwrap(), &table, &config).is_err());
    }
}
