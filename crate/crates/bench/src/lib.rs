//! Benchmark inputs, sized to resemble real runs at a fraction of the cost.

use metaembed::dynamic::{pair_examples, Mode, ModelShape, PairExample, PairModel};
use metaembed::store::AlignedViews;
use metaembed::synth::{class_pair_task, latent_views};

/// Three views of a shared latent with `n` aligned rows.
pub fn views(n: usize, dims: &[usize]) -> AlignedViews {
    latent_views(n, 8, dims, 0.1, 17).views
}

/// A freshly initialized pair model with a batch of token-sequence examples.
pub fn pair_batch(mode: Mode, pairs: usize, dims: &[usize], d_prime: usize, m_enc: usize) -> (PairModel, Vec<PairExample>) {
    let task = class_pair_task(pairs, dims, 2.0, 0.3, 17);
    let examples = pair_examples(&task.sources, &task.dataset).expect("fixture resolves");
    let shape = ModelShape {
        mode,
        source_dims: dims,
        d_prime,
        m: 2,
        m_enc,
        classes: 2,
    };
    (PairModel::new(shape, 17).expect("valid shape"), examples)
}
