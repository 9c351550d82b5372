mod common;

use std::path::{Path, PathBuf};

use common::{check_manifest, ok, run, s};
use metaembed::dynamic::{Mode, ModelShape, PairModel};
use metaembed::ensemble::{fit_gcca, EnsembleModel};
use metaembed::eval::{Label, LabelKind, Pair, PairDataset};
use metaembed::store::align_by_id;
use metaembed::synth::{class_pair_task, class_vector_task, gaussian, latent_views};
use metaembed::{Matrix, VectorTable};
use tempfile::TempDir;

fn table(name: &str, rows: usize, dim: usize, seed: u64) -> VectorTable {
    let mut rng = metaembed::rng::seeded(seed, 0);
    let ids = (0..rows).map(|i| format!("w{i}")).collect();
    VectorTable::new(name, ids, gaussian(rows, dim, &mut rng)).unwrap()
}

fn save(dir: &TempDir, name: &str, t: &VectorTable) -> PathBuf {
    let path = dir.path().join(name);
    t.save(&path).unwrap();
    path
}

/// Three latent views written as tables.
fn views(dir: &TempDir) -> Vec<PathBuf> {
    let lv = latent_views(60, 2, &[5, 4, 3], 0.1, 3);
    lv.views
        .views
        .iter()
        .enumerate()
        .map(|(j, (name, m))| {
            let t = VectorTable::new(name.clone(), lv.views.ids.clone(), m.clone()).unwrap();
            save(dir, &format!("v{j}.txt"), &t)
        })
        .collect()
}

fn with_inputs<'a>(mut args: Vec<&'a str>, inputs: &'a [PathBuf]) -> Vec<&'a str> {
    for p in inputs {
        args.push("--inputs");
        args.push(s(p));
    }
    args
}

#[test]
fn combine_three_wide_tables() {
    let dir = TempDir::new().unwrap();
    let inputs: Vec<PathBuf> = [3072, 4096, 512]
        .iter()
        .enumerate()
        .map(|(j, &d)| save(&dir, &format!("t{j}.txt"), &table(&format!("t{j}"), 4, d, j as u64)))
        .collect();
    let out = dir.path().join("con.txt");
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let r = ok(&with_inputs(vec!["combine", "--method", "con", "--out", s(&out)], &inputs), &refs);
    assert!(r.stdout.contains("D=7680"), "{}", r.stdout);
    assert_eq!(VectorTable::load(&out).unwrap().dim(), 7680);
    check_manifest(&out, "combine");
}

#[test]
fn combine_single_table_is_identity() {
    let dir = TempDir::new().unwrap();
    let t = table("only", 7, 3, 1);
    let input = save(&dir, "only.txt", &t);
    let out = dir.path().join("out.txt");
    ok(&["combine", "--inputs", s(&input), "--out", s(&out)], &[&input]);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&input).unwrap());
}

#[test]
fn combine_disjoint_tables_exit_2() {
    let dir = TempDir::new().unwrap();
    let a = save(&dir, "a.txt", &table("a", 3, 2, 1));
    let renamed = VectorTable::new("b", vec!["x".into(), "y".into()], Matrix::zeros(2, 2)).unwrap();
    let b = save(&dir, "b.txt", &renamed);
    let out = dir.path().join("out.txt");
    let r = run(&["combine", "--inputs", s(&a), "--inputs", s(&b), "--out", s(&out)], &[&a, &b]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("empty ID intersection"), "{}", r.stderr);
    assert!(!out.exists());
}

#[test]
fn fit_gcca_defaults_tau_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let inputs = views(&dir);
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let out = dir.path().join("gcca.model");
    let args = with_inputs(vec!["fit", "--method", "gcca", "--d", "2", "--out", s(&out)], &inputs);
    let r = ok(&args, &refs);
    assert!(r.stdout.contains("d=2") && r.stdout.contains("tau=10") && r.stdout.contains("eigenvalues="), "{}", r.stdout);
    match EnsembleModel::load(&out).unwrap() {
        EnsembleModel::Gcca(m) => assert_eq!(m.tau, 10.0),
        other => panic!("unexpected {other:?}"),
    }
    check_manifest(&out, "fit");
    let first = std::fs::read(&out).unwrap();
    ok(&args, &refs);
    assert_eq!(std::fs::read(&out).unwrap(), first);
}

#[test]
fn fit_svd_zero_dim_exit_2() {
    let dir = TempDir::new().unwrap();
    let inputs = views(&dir);
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let out = dir.path().join("svd.model");
    let r = run(&with_inputs(vec!["fit", "--method", "svd", "--d", "0", "--out", s(&out)], &inputs), &refs);
    assert_eq!(r.code, 2);
    assert!(r.stderr.starts_with("error:"));
}

#[test]
fn apply_matches_fit_time_transform() {
    let dir = TempDir::new().unwrap();
    let inputs = views(&dir);
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let model = dir.path().join("gcca.model");
    ok(&with_inputs(vec!["fit", "--method", "gcca", "--d", "2", "--out", s(&model)], &inputs), &refs);
    let out = dir.path().join("meta.txt");
    let mut all = refs.clone();
    all.push(&model);
    ok(&with_inputs(vec!["apply", "--model", s(&model), "--out", s(&out)], &inputs), &all);
    check_manifest(&out, "apply");

    let tables: Vec<VectorTable> = inputs.iter().map(|p| VectorTable::load(p).unwrap()).collect();
    let aligned = align_by_id(&tables.iter().collect::<Vec<_>>()).unwrap();
    let expected = fit_gcca(&aligned, 2, 10.0).unwrap().apply(&aligned).unwrap();
    let got = VectorTable::load(&out).unwrap();
    assert_eq!(got.ids(), expected.ids());
    for (a, b) in got.matrix().as_slice().iter().zip(expected.matrix().as_slice()) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }

    // Applying row subsets one at a time gives the same rows as one batch.
    for (start, len) in [(0, 1), (1, 20), (21, 39)] {
        let parts: Vec<PathBuf> = tables
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let sub = VectorTable::new(
                    t.source_name(),
                    t.ids()[start..start + len].to_vec(),
                    t.matrix().row_block(start, len),
                )
                .unwrap();
                save(&dir, &format!("part{j}.txt"), &sub)
            })
            .collect();
        let part_out = dir.path().join("part_out.txt");
        let part_refs: Vec<&Path> = parts.iter().map(PathBuf::as_path).collect();
        ok(&with_inputs(vec!["apply", "--model", s(&model), "--out", s(&part_out)], &parts), &part_refs);
        let part = VectorTable::load(&part_out).unwrap();
        for (id, row) in part.iter() {
            assert_eq!(row, got.get(id).unwrap());
        }
    }
}

#[test]
fn apply_wrong_view_count_exit_2() {
    let dir = TempDir::new().unwrap();
    let inputs = views(&dir);
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let model = dir.path().join("gcca.model");
    ok(&with_inputs(vec!["fit", "--method", "gcca", "--out", s(&model)], &inputs), &refs);
    let out = dir.path().join("meta.txt");
    let r = run(
        &with_inputs(vec!["apply", "--model", s(&model), "--out", s(&out)], &inputs[..2]),
        &refs[..2],
    );
    assert_eq!(r.code, 2, "{}", r.stderr);
}

struct TrainFixture {
    dir: TempDir,
    inputs: Vec<PathBuf>,
    dataset: PathBuf,
}

fn train_fixture(pairs: usize) -> TrainFixture {
    let dir = TempDir::new().unwrap();
    let task = class_pair_task(pairs, &[6, 5], 2.0, 0.3, 4);
    let inputs = task
        .sources
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let p = dir.path().join(format!("seq{j}.txt"));
            t.save(&p).unwrap();
            p
        })
        .collect();
    let dataset = dir.path().join("pairs.tsv");
    std::fs::write(&dataset, task.dataset.to_tsv()).unwrap();
    TrainFixture { dir, inputs, dataset }
}

fn train_args<'a>(f: &'a TrainFixture, out: &'a Path, mode: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec!["train", "--mode", mode, "--dataset", s(&f.dataset), "--out", s(out)];
    args.extend_from_slice(&["--d-prime", "6", "--m-enc", "6"]);
    args.extend_from_slice(extra);
    with_inputs(args, &f.inputs)
}

fn all_inputs(f: &TrainFixture) -> Vec<&Path> {
    let mut v: Vec<&Path> = f.inputs.iter().map(PathBuf::as_path).collect();
    v.push(&f.dataset);
    v
}

#[test]
fn train_zero_epochs_writes_initial_model() {
    let f = train_fixture(20);
    let out = f.dir.path().join("dme.model");
    ok(&train_args(&f, &out, "dme", &["--epochs", "0", "--seed", "11"]), &all_inputs(&f));
    let init = PairModel::new(
        ModelShape {
            mode: Mode::Dme,
            source_dims: &[6, 5],
            d_prime: 6,
            m: 2,
            m_enc: 6,
            classes: 2,
        },
        11,
    )
    .unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), init.to_text());
    let mut loss = out.as_os_str().to_owned();
    loss.push(".loss.csv");
    assert_eq!(std::fs::read_to_string(PathBuf::from(loss)).unwrap(), "epoch,mean_loss\n");
    check_manifest(&out, "train");
}

#[test]
fn train_same_seed_same_model() {
    let f = train_fixture(20);
    let out = f.dir.path().join("cdme.model");
    let args = train_args(&f, &out, "cdme", &["--epochs", "2", "--seed", "5"]);
    ok(&args, &all_inputs(&f));
    let first = metaembed::digest::file_sha256(&out).unwrap();
    ok(&args, &all_inputs(&f));
    assert_eq!(metaembed::digest::file_sha256(&out).unwrap(), first);
    let loaded = PairModel::load(&out).unwrap();
    assert_eq!(loaded.combiner.mode, Mode::Cdme);
}

fn reported(stdout: &str, key: &str) -> f64 {
    let token = stdout
        .split_whitespace()
        .find_map(|t| t.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {stdout}"));
    token.parse().unwrap()
}

#[test]
fn train_learns_separable_pairs() {
    let f = train_fixture(150);
    let out = f.dir.path().join("dme.model");
    let r = ok(
        &train_args(&f, &out, "dme", &["--epochs", "30", "--lr", "0.01", "--batch", "16"]),
        &all_inputs(&f),
    );
    assert!(reported(&r.stdout, "train_accuracy") >= 0.95, "{}", r.stdout);
}

#[test]
fn train_diverging_run_exit_3() {
    let f = train_fixture(20);
    let out = f.dir.path().join("dme.model");
    let r = run(&train_args(&f, &out, "dme", &["--epochs", "5", "--lr", "1e300"]), &all_inputs(&f));
    assert_eq!(r.code, 3, "{}{}", r.stdout, r.stderr);
    assert!(r.stderr.contains("non-finite loss"), "{}", r.stderr);
}

#[test]
fn train_rejects_score_labels_and_missing_ids() {
    let f = train_fixture(10);
    std::fs::write(&f.dataset, "s00000\tnowhere\tyes\t\t\n").unwrap();
    let out = f.dir.path().join("m");
    let r = run(&train_args(&f, &out, "dme", &[]), &all_inputs(&f));
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("nowhere"), "{}", r.stderr);
}

fn perfect_sts(dir: &TempDir) -> (PathBuf, PathBuf) {
    let n = 21;
    let mut pairs = Vec::new();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for i in 0..n {
        let gold = 5.0 * i as f64 / (n - 1) as f64;
        let c = gold / 5.0;
        pairs.push(Pair {
            id_a: format!("a{i}"),
            id_b: format!("b{i}"),
            label: Label::Score(gold),
            sentence_a: "left".into(),
            sentence_b: "right".into(),
        });
        ids.extend([format!("a{i}"), format!("b{i}")]);
        rows.extend([vec![1.0, 0.0], vec![c, (1.0 - c * c).sqrt()]]);
    }
    let ds = PairDataset::new("sts", LabelKind::Score { lo: 0.0, hi: 5.0 }, pairs, None).unwrap();
    let tsv = dir.path().join("sts.tsv");
    std::fs::write(&tsv, ds.to_tsv()).unwrap();
    let table = VectorTable::new("vec", ids, Matrix::from_rows(&rows).unwrap()).unwrap();
    (save(dir, "vec.txt", &table), tsv)
}

#[test]
fn eval_sts_perfect_predictor() {
    let dir = TempDir::new().unwrap();
    let (vectors, dataset) = perfect_sts(&dir);
    let out = dir.path().join("report.jsonl");
    let r = ok(
        &["eval", "--task", "sts", "--inputs", s(&vectors), "--dataset", s(&dataset), "--out", s(&out)],
        &[&vectors, &dataset],
    );
    let line: serde_json::Value = serde_json::from_str(r.stdout.trim()).unwrap();
    assert_eq!(line["task"], "sts");
    assert_eq!(line["metric"], "pearson");
    assert!((line["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(std::fs::read_to_string(&out).unwrap().trim(), r.stdout.trim());
    check_manifest(&out, "eval");
}

#[test]
fn eval_sick_e_separable_reaches_100() {
    let dir = TempDir::new().unwrap();
    let (table, ds) = class_vector_task(600, &["entailment", "neutral", "contradiction"], 4, 3.0, 0.1, 5);
    let vectors = save(&dir, "vec.txt", &table);
    let dataset = dir.path().join("sick.tsv");
    std::fs::write(&dataset, ds.to_tsv()).unwrap();
    let out = dir.path().join("report.jsonl");
    let r = ok(
        &["eval", "--task", "sick-e", "--inputs", s(&vectors), "--dataset", s(&dataset), "--out", s(&out)],
        &[&vectors, &dataset],
    );
    let line: serde_json::Value = serde_json::from_str(r.stdout.trim()).unwrap();
    assert_eq!(line["metric"], "accuracy");
    assert_eq!(line["value"].as_f64().unwrap(), 100.0);
}

#[test]
fn eval_missing_ids_exit_2() {
    let dir = TempDir::new().unwrap();
    let (vectors, dataset) = perfect_sts(&dir);
    let table = VectorTable::load(&vectors).unwrap();
    let partial = VectorTable::new("partial", table.ids()[2..].to_vec(), table.matrix().row_block(2, table.len() - 2));
    let vectors = save(&dir, "partial.txt", &partial.unwrap());
    let out = dir.path().join("report.jsonl");
    let r = run(
        &["eval", "--task", "sts", "--inputs", s(&vectors), "--dataset", s(&dataset), "--out", s(&out)],
        &[&vectors, &dataset],
    );
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("a0") && r.stderr.contains("b0"), "{}", r.stderr);
}

#[test]
fn eval_through_trained_dynamic_model() {
    let f = train_fixture(40);
    let model = f.dir.path().join("dme.model");
    ok(&train_args(&f, &model, "dme", &["--epochs", "1"]), &all_inputs(&f));
    let out = f.dir.path().join("report.jsonl");
    let mut args = vec!["eval", "--task", "paraphrase", "--model", s(&model), "--dataset", s(&f.dataset)];
    args.extend(["--out", s(&out), "--tenacity", "1", "--epoch-size", "1"]);
    let mut inputs = all_inputs(&f);
    inputs.push(&model);
    let r = ok(&with_inputs(args, &f.inputs), &inputs);
    let line: serde_json::Value = serde_json::from_str(r.stdout.trim()).unwrap();
    assert_eq!(line["task"], "paraphrase");
    assert_eq!(line["n"], 8);
}

#[test]
fn info_describes_files() {
    let dir = TempDir::new().unwrap();
    let t = save(&dir, "t.txt", &table("t", 5, 3, 2));
    let r = ok(&["info", s(&t)], &[&t]);
    assert!(r.stdout.starts_with("vector-table N=5 D=3\n"), "{}", r.stdout);
    assert!(r.stdout.contains("sha256="));

    let inputs = views(&dir);
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let model = dir.path().join("gcca.model");
    ok(&with_inputs(vec!["fit", "--method", "gcca", "--d", "2", "--out", s(&model)], &inputs), &refs);
    let r = ok(&["info", s(&model)], &[&model]);
    assert!(r.stdout.starts_with("gcca-model J=3 d=2 tau=10 eigenvalues="), "{}", r.stdout);

    let garbage = dir.path().join("garbage.bin");
    std::fs::write(&garbage, "not a table\n\u{1}\u{2}\n").unwrap();
    assert_eq!(run(&["info", s(&garbage)], &[&garbage]).code, 2);
    assert!(!PathBuf::from(format!("{}.manifest.json", s(&garbage))).exists());
}

#[test]
fn argument_errors_exit_2() {
    assert_eq!(run(&["fit", "--method", "pca", "--inputs", "x", "--out", "y"], &[]).code, 2);
    assert_eq!(run(&["combine"], &[]).code, 2);
    assert_eq!(run(&["info", "/definitely/not/here"], &[]).code, 2);
    assert_eq!(run(&["--help"], &[]).code, 0);
}
