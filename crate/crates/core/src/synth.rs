//! Seeded synthetic fixtures with planted structure, for tests, benches and
//! smoke runs of the command-line tool.

use crate::eval::{Label, LabelKind, Pair, PairDataset};
use crate::linalg::{dot, norm, Matrix};
use crate::rng::{normal, seeded, SeededRng};
use crate::store::{AlignedViews, SequenceTable, VectorTable};

pub fn gaussian(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| normal(rng))
}

fn sentence_id(i: usize) -> String {
    format!("s{i:05}")
}

/// A shared latent and several noisy linear views of it.
#[derive(Clone, Debug)]
pub struct LatentViews {
    pub latent: Matrix,
    pub views: AlignedViews,
}

/// Views `Z A_j + noise * E_j` of an `n x latent_dim` standard normal `Z`.
pub fn latent_views(n: usize, latent_dim: usize, dims: &[usize], noise: f64, seed: u64) -> LatentViews {
    let mut rng = seeded(seed, 100);
    let latent = gaussian(n, latent_dim, &mut rng);
    let views = dims
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            let mixing = gaussian(latent_dim, d, &mut rng);
            let mut x = latent.matmul(&mixing);
            for v in x.as_mut_slice() {
                *v += noise * normal(&mut rng);
            }
            (format!("view{j}"), x)
        })
        .collect();
    let ids = (0..n).map(sentence_id).collect();
    LatentViews {
        latent,
        views: AlignedViews::from_matrices(ids, views).expect("consistent shapes"),
    }
}

#[derive(Clone, Debug)]
pub struct SimilarityConfig {
    pub pairs: usize,
    pub latent_dim: usize,
    pub dims: Vec<usize>,
    /// Dimension and scale of the nuisance factors private to each source.
    pub private_dim: usize,
    pub private_scale: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            pairs: 300,
            latent_dim: 4,
            dims: vec![12, 10],
            private_dim: 3,
            private_scale: 1.5,
            noise: 0.3,
            seed: 0,
        }
    }
}

/// Source tables plus a `[0, 5]` scored pair dataset whose gold score is the
/// range-scaled latent cosine of the two sentences.
#[derive(Clone, Debug)]
pub struct SimilarityTask {
    pub sources: Vec<VectorTable>,
    pub dataset: PairDataset,
    pub latent: Matrix,
}

pub fn similarity_task(config: &SimilarityConfig) -> SimilarityTask {
    let mut rng = seeded(config.seed, 101);
    let k = config.latent_dim;
    let n = 2 * config.pairs;
    let mut latent = Matrix::zeros(n, k);
    let mut pairs = Vec::with_capacity(config.pairs);
    for p in 0..config.pairs {
        let a: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
        let mix: f64 = rng_unit(&mut rng);
        let b: Vec<f64> = a.iter().map(|&x| mix * x + (1.0 - mix) * normal(&mut rng)).collect();
        let cos = (dot(&a, &b) / (norm(&a) * norm(&b))).clamp(-1.0, 1.0);
        latent.row_mut(2 * p).copy_from_slice(&a);
        latent.row_mut(2 * p + 1).copy_from_slice(&b);
        pairs.push(Pair {
            id_a: sentence_id(2 * p),
            id_b: sentence_id(2 * p + 1),
            label: Label::Score(2.5 * (cos + 1.0)),
            sentence_a: String::new(),
            sentence_b: String::new(),
        });
    }
    let ids: Vec<String> = (0..n).map(sentence_id).collect();
    let sources = config
        .dims
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            let mixing = gaussian(k, d, &mut rng);
            let private = gaussian(n, config.private_dim, &mut rng).scale(config.private_scale);
            let private_mixing = gaussian(config.private_dim, d, &mut rng);
            let mut x = latent.matmul(&mixing);
            let nuisance = private.matmul(&private_mixing);
            for (v, e) in x.as_mut_slice().iter_mut().zip(nuisance.as_slice()) {
                *v += e + config.noise * normal(&mut rng);
            }
            VectorTable::new(format!("source{j}"), ids.clone(), x).expect("finite rows")
        })
        .collect();
    let dataset =
        PairDataset::new("similarity", LabelKind::Score { lo: 0.0, hi: 5.0 }, pairs, None).expect("valid scores");
    SimilarityTask {
        sources,
        dataset,
        latent,
    }
}

fn rng_unit(rng: &mut SeededRng) -> f64 {
    use rand::Rng;
    rng.random::<f64>()
}

/// Token-sequence sources plus a two-class pair dataset ("0" = different,
/// "1" = same) over sentences that each carry a hidden binary class.
#[derive(Clone, Debug)]
pub struct ClassPairTask {
    pub sources: Vec<SequenceTable>,
    pub dataset: PairDataset,
}

/// Every token of a class-`c` sentence is `(2c - 1) * signal * u_j + noise`
/// in source `j`, with `u_j` a fixed random unit direction.
pub fn class_pair_task(pairs: usize, dims: &[usize], signal: f64, noise: f64, seed: u64) -> ClassPairTask {
    let mut rng = seeded(seed, 102);
    let n = 2 * pairs;
    let classes: Vec<usize> = (0..n).map(|_| usize::from(rng_unit(&mut rng) < 0.5)).collect();
    let lengths: Vec<usize> = (0..n).map(|i| 2 + (i * 7 + 3) % 4).collect();
    let ids: Vec<String> = (0..n).map(sentence_id).collect();
    let sources = dims
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            let mut dir: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
            let len = norm(&dir);
            dir.iter_mut().for_each(|v| *v /= len);
            let sequences = (0..n)
                .map(|i| {
                    let sign = if classes[i] == 1 { signal } else { -signal };
                    Matrix::from_fn(lengths[i], d, |_, c| sign * dir[c] + noise * normal(&mut rng))
                })
                .collect();
            SequenceTable::new(format!("source{j}"), ids.clone(), sequences).expect("consistent dims")
        })
        .collect();
    let pairs = (0..pairs)
        .map(|p| {
            let (a, b) = (2 * p, (2 * p + 1 + 2 * (p % 3)) % n);
            Pair {
                id_a: sentence_id(a),
                id_b: sentence_id(b),
                label: Label::Class(usize::from(classes[a] == classes[b])),
                sentence_a: String::new(),
                sentence_b: String::new(),
            }
        })
        .collect();
    let dataset = PairDataset::new("pairs", LabelKind::classes(&["0", "1"]), pairs, None).expect("valid classes");
    ClassPairTask { sources, dataset }
}

/// One vector table and a class-labeled pair dataset where the left vector
/// of a class-`c` pair is offset by `signal` along axis `c`.
pub fn class_vector_task(
    pairs: usize,
    class_names: &[&str],
    dim: usize,
    signal: f64,
    noise: f64,
    seed: u64,
) -> (VectorTable, PairDataset) {
    assert!(dim >= class_names.len(), "need one axis per class");
    let mut rng = seeded(seed, 103);
    let mut rows = Vec::with_capacity(2 * pairs);
    let mut out = Vec::with_capacity(pairs);
    for p in 0..pairs {
        let class = p % class_names.len();
        let mut u: Vec<f64> = (0..dim).map(|_| noise * normal(&mut rng)).collect();
        let v: Vec<f64> = (0..dim).map(|_| noise * normal(&mut rng)).collect();
        u[class] += signal;
        rows.push(u);
        rows.push(v);
        out.push(Pair {
            id_a: sentence_id(2 * p),
            id_b: sentence_id(2 * p + 1),
            label: Label::Class(class),
            sentence_a: String::new(),
            sentence_b: String::new(),
        });
    }
    let ids = (0..2 * pairs).map(sentence_id).collect();
    let table = VectorTable::new("vectors", ids, Matrix::from_rows(&rows).expect("rows")).expect("finite rows");
    let dataset = PairDataset::new("classes", LabelKind::classes(class_names), out, None).expect("valid classes");
    (table, dataset)
}
