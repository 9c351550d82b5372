use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use metaembed::digest::file_sha256;
use metaembed::dynamic::{loss_history_csv, pair_examples, train_dynamic_combiner, Mode, ModelShape, PairExample, PairModel, TrainConfig};
use metaembed::ensemble::{concat_combine, default_svd_dim, fit_gcca, fit_svd_meta, EnsembleModel};
use metaembed::eval::{
    infer_class_kind, is_sick_file, load_pair_dataset_tsv, load_sick_official, pair_classification_probe_eval,
    relatedness_probe_eval, report_table, similarity_eval_unsupervised, EvalReport, LabelKind, PairDataset,
    ProbeConfig,
};
use metaembed::model_io::{write_file, LineReader};
use metaembed::store::{align_by_id, is_sequence_file, load_token_table};
use metaembed::{Error, Matrix, SequenceTable, VectorTable};

use crate::manifest::{manifest_path, FileDigest, RunManifest};
use crate::{ApplyArgs, CombineArgs, Command, EvalArgs, FitArgs, FitMethod, InfoArgs, Task, TrainArgs, TrainMode};

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

/// Bookkeeping shared by every command that writes outputs.
struct Run {
    command: &'static str,
    started: Instant,
    inputs: Vec<(PathBuf, String)>,
    outputs: Vec<PathBuf>,
    seeds: BTreeMap<String, u64>,
}

impl Run {
    fn start(command: &'static str, inputs: &[&Path]) -> CmdResult<Run> {
        let inputs = inputs
            .iter()
            .map(|p| Ok((p.to_path_buf(), file_sha256(p)?)))
            .collect::<Result<Vec<_>, Error>>()?;
        Ok(Run {
            command,
            started: Instant::now(),
            inputs,
            outputs: Vec::new(),
            seeds: BTreeMap::new(),
        })
    }

    fn write(&mut self, path: &Path, contents: &str) -> CmdResult {
        write_file(path, contents)?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    /// Re-verifies the input digests and writes the manifest next to `primary`.
    fn finish(self, primary: &Path, flags: &impl serde::Serialize) -> CmdResult {
        let mut inputs = Vec::with_capacity(self.inputs.len());
        for (path, before) in &self.inputs {
            let now = FileDigest::of(path)?;
            if &now.sha256 != before {
                return Err(invalid(format!("input {} changed while the command ran", path.display())));
            }
            inputs.push(now);
        }
        let outputs = self
            .outputs
            .iter()
            .map(|p| FileDigest::of(p))
            .collect::<Result<Vec<_>, Error>>()?;
        let manifest = RunManifest {
            command: self.command.to_string(),
            flags: serde_json::to_value(flags).expect("flags serialize"),
            seeds: self.seeds,
            inputs,
            outputs,
            duration_ms: self.started.elapsed().as_millis(),
        };
        write_file(&manifest_path(primary), &manifest.to_json())?;
        Ok(())
    }
}

fn paths(list: &[PathBuf]) -> Vec<&Path> {
    list.iter().map(PathBuf::as_path).collect()
}

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::Combine(args) => combine(&args),
        Command::Fit(args) => fit(&args),
        Command::Apply(args) => apply(&args),
        Command::Train(args) => train(&args),
        Command::Eval(args) => eval(&args),
        Command::Info(args) => info(&args),
    }
}

fn load_tables(inputs: &[PathBuf]) -> CmdResult<Vec<VectorTable>> {
    Ok(inputs
        .iter()
        .map(|p| VectorTable::load(p))
        .collect::<Result<Vec<_>, Error>>()?)
}

fn aligned(tables: &[VectorTable]) -> CmdResult<metaembed::AlignedViews> {
    let refs: Vec<&VectorTable> = tables.iter().collect();
    let views = align_by_id(&refs)?;
    if !views.dropped.iter().all(|&d| d == 0) {
        log::warn!("IDs outside the intersection were dropped per table: {:?}", views.dropped);
    }
    Ok(views)
}

fn combine(args: &CombineArgs) -> CmdResult {
    let mut run = Run::start("combine", &paths(&args.inputs))?;
    let tables = load_tables(&args.inputs)?;
    let out = concat_combine(&aligned(&tables)?);
    run.write(&args.out, &out.to_text())?;
    println!("vector-table N={} D={}", out.len(), out.dim());
    run.finish(&args.out, args)
}

fn fit(args: &FitArgs) -> CmdResult {
    let mut run = Run::start("fit", &paths(&args.inputs))?;
    let tables = load_tables(&args.inputs)?;
    let views = aligned(&tables)?;
    let model = match args.method {
        FitMethod::Svd => {
            let d = args.d.unwrap_or_else(|| default_svd_dim(&views));
            EnsembleModel::Svd(fit_svd_meta(&views, d)?)
        }
        FitMethod::Gcca => {
            let d = args
                .d
                .unwrap_or_else(|| views.dims().into_iter().min().expect("at least one view"));
            EnsembleModel::Gcca(fit_gcca(&views, d, args.tau)?)
        }
    };
    run.write(&args.out, &model.to_text())?;
    match &model {
        EnsembleModel::Svd(m) => println!("svd d={}", m.d),
        EnsembleModel::Gcca(m) => println!(
            "gcca d={} tau={} eigenvalues={}",
            m.d,
            m.tau,
            join_reals(&m.eigenvalues)
        ),
    }
    run.finish(&args.out, args)
}

fn join_reals(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(",")
}

fn apply(args: &ApplyArgs) -> CmdResult {
    let mut inputs = vec![args.model.as_path()];
    inputs.extend(paths(&args.inputs));
    let mut run = Run::start("apply", &inputs)?;
    let model = EnsembleModel::load(&args.model)?;
    let tables = load_tables(&args.inputs)?;
    let out = model.apply(&aligned(&tables)?)?;
    run.write(&args.out, &out.to_text())?;
    println!("vector-table N={} D={}", out.len(), out.dim());
    run.finish(&args.out, args)
}

fn load_class_dataset(path: &Path) -> CmdResult<PairDataset> {
    if is_sick_file(path)? {
        return Ok(load_sick_official(path)?.1);
    }
    Ok(load_pair_dataset_tsv(path, infer_class_kind(path)?)?)
}

/// Token matrices of `id` in every source, or the sources missing it.
fn token_views(tables: &[SequenceTable], id: &str, missing: &mut Vec<String>) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(tables.len());
    for t in tables {
        match t.get(id) {
            Some(m) => out.push(m.clone()),
            None => missing.push(format!("{id} ({})", t.source_name())),
        }
    }
    out
}

fn missing_ids(missing: &[String]) -> Failure {
    let shown: Vec<&str> = missing.iter().take(20).map(String::as_str).collect();
    Failure::from(Error::MissingIds(format!(
        "{} lookups failed: {}{}",
        missing.len(),
        shown.join(", "),
        if missing.len() > shown.len() { ", ..." } else { "" }
    )))
}

fn train(args: &TrainArgs) -> CmdResult {
    let mut inputs = paths(&args.inputs);
    inputs.push(&args.dataset);
    let mut run = Run::start("train", &inputs)?;
    run.seeds.insert("seed".into(), args.seed);
    let tables = args
        .inputs
        .iter()
        .map(|p| load_token_table(p))
        .collect::<Result<Vec<_>, Error>>()?;
    let dataset = load_class_dataset(&args.dataset)?;
    let classes = dataset.class_names().expect("class dataset").len();
    let examples = pair_examples(&tables, &dataset)?;
    let splits = dataset.split_indices(args.seed);
    let pick = |idx: &[usize]| -> Vec<PairExample> { idx.iter().map(|&i| examples[i].clone()).collect() };
    let (train_set, dev_set) = (pick(&splits.train), pick(&splits.dev));
    if train_set.is_empty() {
        return Err(invalid("the train split is empty"));
    }

    let dims: Vec<usize> = tables.iter().map(SequenceTable::dim).collect();
    let mode = match args.mode {
        TrainMode::Dme => Mode::Dme,
        TrainMode::Cdme => Mode::Cdme,
    };
    let shape = ModelShape {
        mode,
        source_dims: &dims,
        d_prime: args.d_prime,
        m: args.m,
        m_enc: args.m_enc,
        classes,
    };
    let mut model = PairModel::new(shape, args.seed)?;
    let config = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch,
        max_epochs: args.epochs,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let history = train_dynamic_combiner(&mut model, &train_set, &config)?;

    run.write(&args.out, &model.to_text())?;
    let mut loss_path = args.out.clone().into_os_string();
    loss_path.push(".loss.csv");
    run.write(Path::new(&loss_path), &loss_history_csv(&history))?;
    let train_acc = model.accuracy(&train_set)?;
    let dev = if dev_set.is_empty() {
        "n/a".to_string()
    } else {
        format!("{:.4}", model.accuracy(&dev_set)?)
    };
    println!(
        "{} epochs={} train_accuracy={train_acc:.4} dev_accuracy={dev} final_loss={}",
        mode.label(),
        history.len(),
        history.last().map_or("n/a".into(), |l| format!("{l:.6}"))
    );
    run.finish(&args.out, args)
}

fn model_header(path: &Path) -> CmdResult<Option<String>> {
    let mut reader = LineReader::open(path)?;
    Ok(reader.next_line()?.map(|l| l.trim().to_string()))
}

fn is_dynamic_header(header: &str) -> bool {
    Mode::from_header(header).is_some()
}

/// Sentence vectors for every ID the dataset references.
fn resolve_vectors(args: &EvalArgs, dataset: &PairDataset) -> CmdResult<VectorTable> {
    let Some(model_path) = &args.model else {
        if args.inputs.len() != 1 {
            return Err(invalid(format!(
                "eval takes one vector table without --model, got {}",
                args.inputs.len()
            )));
        }
        return Ok(VectorTable::load(&args.inputs[0])?);
    };
    let header = model_header(model_path)?.unwrap_or_default();
    if !is_dynamic_header(&header) {
        let model = EnsembleModel::load(model_path)?;
        return Ok(model.apply(&aligned(&load_tables(&args.inputs)?)?)?);
    }
    let model = PairModel::load(model_path)?;
    let tables = args
        .inputs
        .iter()
        .map(|p| load_token_table(p))
        .collect::<Result<Vec<_>, Error>>()?;
    let mut missing = Vec::new();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for id in dataset.ids() {
        let views = token_views(&tables, id, &mut missing);
        if views.len() == tables.len() {
            rows.push(model.embed(&views)?);
            ids.push(id.to_string());
        }
    }
    if !missing.is_empty() {
        return Err(missing_ids(&missing));
    }
    Ok(VectorTable::new(model.combiner.mode.label(), ids, Matrix::from_rows(&rows)?)?)
}

fn load_eval_dataset(task: Task, path: &Path) -> CmdResult<PairDataset> {
    let sick = is_sick_file(path)?;
    Ok(match task {
        Task::SickR if sick => load_sick_official(path)?.0,
        Task::SickE if sick => load_sick_official(path)?.1,
        Task::Sts => load_pair_dataset_tsv(path, LabelKind::Score { lo: 0.0, hi: 5.0 })?,
        Task::SickR => load_pair_dataset_tsv(path, LabelKind::Score { lo: 1.0, hi: 5.0 })?,
        Task::SickE | Task::Nli => {
            load_pair_dataset_tsv(path, LabelKind::classes(&["entailment", "neutral", "contradiction"]))?
        }
        Task::Paraphrase => load_pair_dataset_tsv(path, LabelKind::classes(&["0", "1"]))?,
    })
}

fn task_label(task: Task) -> &'static str {
    match task {
        Task::Sts => "sts",
        Task::SickR => "sick-r",
        Task::SickE => "sick-e",
        Task::Nli => "nli",
        Task::Paraphrase => "paraphrase",
    }
}

fn eval(args: &EvalArgs) -> CmdResult {
    let mut inputs = paths(&args.inputs);
    if let Some(m) = &args.model {
        inputs.push(m);
    }
    inputs.push(&args.dataset);
    let mut run = Run::start("eval", &inputs)?;
    run.seeds.insert("seed".into(), args.seed);
    let dataset = load_eval_dataset(args.task, &args.dataset)?;
    let vectors = resolve_vectors(args, &dataset)?;
    let config = ProbeConfig {
        nhid: args.nhid,
        batch_size: args.batch,
        tenacity: args.tenacity,
        epoch_size: args.epoch_size,
        seed: args.seed,
        learning_rate: args.lr,
        ..ProbeConfig::default()
    };
    let mut report: EvalReport = match args.task {
        Task::Sts => similarity_eval_unsupervised(&dataset, &vectors)?,
        Task::SickR if args.cosine => similarity_eval_unsupervised(&dataset, &vectors)?,
        Task::SickR => relatedness_probe_eval(&dataset, &vectors, &config)?,
        Task::SickE | Task::Nli | Task::Paraphrase => pair_classification_probe_eval(&dataset, &vectors, &config)?,
    };
    report.task = task_label(args.task).to_string();
    let line = report.to_json_line();
    run.write(&args.out, &format!("{line}\n"))?;
    println!("{line}");
    eprint!("{}", report_table(std::slice::from_ref(&report)));
    run.finish(&args.out, args)
}

fn info(args: &InfoArgs) -> CmdResult {
    let path = &args.path;
    let digest = file_sha256(path)?;
    let header = model_header(path)?.ok_or_else(|| invalid(format!("{} is empty", path.display())))?;
    if is_dynamic_header(&header) {
        let m = PairModel::load(path)?;
        let dims: Vec<String> = m.combiner.source_dims().iter().map(usize::to_string).collect();
        println!(
            "{}-model sources={} dims={} d_prime={} m={} m_enc={} classes={} seed={}",
            m.combiner.mode.label(),
            m.combiner.source_count(),
            dims.join(","),
            m.combiner.d_prime,
            m.combiner.attention_hidden(),
            m.encoder.hidden_dim(),
            m.classes(),
            m.combiner.seed
        );
    } else if header.split_whitespace().next().and_then(|t| t.parse::<usize>().ok()).is_none() {
        match EnsembleModel::load(path)? {
            EnsembleModel::Svd(m) => {
                let dims: Vec<String> = m.input_dims.iter().map(usize::to_string).collect();
                println!("svd-model dims={} d={}", dims.join(","), m.d);
            }
            EnsembleModel::Gcca(m) => println!(
                "gcca-model J={} d={} tau={} eigenvalues={}",
                m.view_count(),
                m.d,
                m.tau,
                join_reals(&m.eigenvalues)
            ),
        }
    } else if is_sequence_file(path)? {
        let t = SequenceTable::load(path)?;
        let tokens: usize = t.iter().map(|(_, m)| m.rows()).sum();
        println!("sequence-table N={} D={} tokens={tokens}", t.len(), t.dim());
    } else {
        let t = VectorTable::load(path)?;
        println!("vector-table N={} D={}", t.len(), t.dim());
    }
    println!("sha256={digest}");
    Ok(())
}
