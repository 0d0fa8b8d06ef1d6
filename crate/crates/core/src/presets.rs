//! Settings behind the bundled corpora in `data/` and the desk-scale
//! acceptance run.

use std::path::Path;

use crate::corpus::{load_corpus, Corpus, CorpusFormat};
use crate::error::Result;
use crate::synth::{read_manifest, SynthConfig};
use crate::textcnn::{ModelConfig, Optimizer};

pub const TRAIN_FRAC: f64 = 0.8;
pub const SPLIT_SEED: u64 = 0;

pub fn binary_corpus() -> SynthConfig {
    SynthConfig {
        num_classes: 2,
        ordered_markers: true,
        ..SynthConfig::default()
    }
}

pub fn four_class_corpus() -> SynthConfig {
    SynthConfig {
        num_classes: 4,
        ordered_markers: true,
        ..SynthConfig::default()
    }
}

/// Bias-free model trained with Adam. Binary corpora get two epochs,
/// larger label sets three.
pub fn desk_model(corpus: &Corpus) -> ModelConfig {
    ModelConfig {
        vocab_size: corpus.vocab.len(),
        embed_dim: 48,
        filter_widths: vec![3, 4, 5],
        filters_per_width: 6,
        num_classes: corpus.num_classes,
        seq_len: corpus.seq_len,
        use_bias: false,
        seed: 0,
        learning_rate: 0.001,
        batch_size: 32,
        epochs: if corpus.num_classes == 2 { 2 } else { 3 },
        optimizer: Optimizer::adam(),
        ..ModelConfig::default()
    }
}

/// Loads a generated corpus file using the class order and sequence
/// length recorded in its manifest.
pub fn load_synthetic(corpus_path: &Path, manifest_path: &Path) -> Result<Corpus> {
    let manifest = read_manifest(manifest_path)?;
    load_corpus(
        corpus_path,
        CorpusFormat::Jsonl,
        &manifest.schema(),
        &manifest.options(TRAIN_FRAC, SPLIT_SEED),
    )
}
