//! Planted-signal corpora: filler text with class-specific marker tokens
//! inserted, so the words that should carry relevance are known.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, CorpusOptions, CorpusSchema, LabelColumn};
use crate::error::{Error, Result};

const CONSONANTS: [&str; 20] = [
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "x",
    "y", "z",
];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const BINARY_NAMES: [&str; 2] = ["negative", "positive"];
const GREEK: [&str; 8] = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_docs: usize,
    pub num_classes: usize,
    /// Distinct filler words, drawn with Zipf-like frequencies.
    pub filler_words: usize,
    pub zipf_exponent: f64,
    pub markers_per_class: usize,
    /// Inclusive range of marker tokens planted per document.
    pub min_markers: usize,
    pub max_markers: usize,
    /// Inclusive range of filler tokens per document.
    pub min_filler: usize,
    pub max_filler: usize,
    /// Probability of also planting one marker of a different class.
    pub decoy_rate: f64,
    /// Markers become runs of `num_classes` shared tokens and each class
    /// plants its own cyclic rotation of a run, so all classes draw on the
    /// same bag of marker words and only their order tells them apart.
    pub ordered_markers: bool,
    pub seq_len: usize,
    pub max_vocab: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_docs: 2000,
            num_classes: 2,
            filler_words: 700,
            zipf_exponent: 1.0,
            markers_per_class: 6,
            min_markers: 1,
            max_markers: 2,
            min_filler: 12,
            max_filler: 26,
            decoy_rate: 0.0,
            ordered_markers: false,
            seq_len: 30,
            max_vocab: 500,
            seed: 2024,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_docs == 0 {
            return fail("num_docs must be at least 1");
        }
        if !(2..=GREEK.len()).contains(&self.num_classes) {
            return fail("num_classes must be between 2 and 8");
        }
        if self.filler_words == 0 || self.markers_per_class == 0 {
            return fail("filler_words and markers_per_class must be at least 1");
        }
        if self.min_markers == 0 || self.min_markers > self.max_markers {
            return fail("need 1 <= min_markers <= max_markers");
        }
        if self.min_filler > self.max_filler {
            return fail("need min_filler <= max_filler");
        }
        if !(0.0..=1.0).contains(&self.decoy_rate) {
            return fail("decoy_rate must be in [0, 1]");
        }
        if self.ordered_markers && self.num_classes > 5 {
            return fail("ordered_markers supports at most 5 classes");
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        if self.num_classes == 2 {
            BINARY_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            GREEK[..self.num_classes].iter().map(|s| s.to_string()).collect()
        }
    }
}

/// Facts about a generated corpus, written next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub generator: String,
    pub config: SynthConfig,
    pub num_docs: usize,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub docs_per_class: Vec<usize>,
    pub seq_len: usize,
    /// Distinct tokens in the generated text.
    pub distinct_tokens: usize,
    /// Vocabulary size after adding PAD/UNK and capping at `max_vocab`.
    pub vocab_size: usize,
    pub markers: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthDoc {
    pub text: String,
    pub label: usize,
}

fn filler_word(i: usize) -> String {
    let syllable = |k: usize| format!("{}{}", CONSONANTS[k % 20], VOWELS[(k / 20) % 5]);
    format!("{}{}", syllable(i % 100), syllable(i / 100 + 3))
}

pub fn generate(config: &SynthConfig) -> Result<(Vec<SynthDoc>, SynthManifest)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let class_names = config.class_names();
    let markers: Vec<Vec<String>> = if config.ordered_markers {
        let runs: Vec<Vec<String>> = (0..config.markers_per_class)
            .map(|i| {
                (0..config.num_classes)
                    .map(|k| format!("cue{i}{}", VOWELS[k % 5]))
                    .collect()
            })
            .collect();
        (0..config.num_classes)
            .map(|c| {
                runs.iter()
                    .map(|run| {
                        let mut r = run.clone();
                        r.rotate_left(c);
                        r.join(" ")
                    })
                    .collect()
            })
            .collect()
    } else {
        class_names
            .iter()
            .map(|name| {
                (0..config.markers_per_class)
                    .map(|i| format!("{}{}", &name[..3], i))
                    .collect()
            })
            .collect()
    };
    let filler: Vec<String> = (0..config.filler_words).map(filler_word).collect();
    let zipf = WeightedIndex::new(
        (0..config.filler_words).map(|i| 1.0 / ((i + 1) as f64).powf(config.zipf_exponent)),
    )
    .map_err(|e| Error::Config(e.to_string()))?;

    let mut docs = Vec::with_capacity(config.num_docs);
    let mut docs_per_class = vec![0; config.num_classes];
    for i in 0..config.num_docs {
        let label = i % config.num_classes;
        let n_filler = rng.gen_range(config.min_filler..=config.max_filler);
        let mut words: Vec<String> = (0..n_filler)
            .map(|_| filler[zipf.sample(&mut rng)].clone())
            .collect();
        let n_markers = rng.gen_range(config.min_markers..=config.max_markers);
        for _ in 0..n_markers {
            let marker = markers[label][rng.gen_range(0..config.markers_per_class)].clone();
            let at = rng.gen_range(0..=words.len());
            words.insert(at, marker);
        }
        if rng.gen_bool(config.decoy_rate) {
            let other = (label + rng.gen_range(1..config.num_classes)) % config.num_classes;
            let marker = markers[other][rng.gen_range(0..config.markers_per_class)].clone();
            let at = rng.gen_range(0..=words.len());
            words.insert(at, marker);
        }
        let mut text = words.join(" ");
        if let Some(first) = text.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        text.push('.');
        docs_per_class[label] += 1;
        docs.push(SynthDoc { text, label });
    }

    let distinct: BTreeSet<String> = docs.iter().flat_map(|d| tokenize(&d.text)).collect();
    let manifest = SynthManifest {
        generator: "planted-signal".into(),
        config: config.clone(),
        num_docs: config.num_docs,
        num_classes: config.num_classes,
        class_names,
        docs_per_class,
        seq_len: config.seq_len,
        distinct_tokens: distinct.len(),
        vocab_size: (distinct.len() + 2).min(config.max_vocab),
        markers,
    };
    Ok((docs, manifest))
}

/// Writes `docs` as JSON lines with fields `text` and `label` (the class
/// name) and the manifest as pretty JSON.
pub fn write_corpus(
    docs: &[SynthDoc],
    manifest: &SynthManifest,
    corpus_path: &Path,
    manifest_path: &Path,
) -> Result<()> {
    let mut out = Vec::new();
    for doc in docs {
        let mut row = BTreeMap::new();
        row.insert("text", doc.text.as_str());
        row.insert("label", manifest.class_names[doc.label].as_str());
        serde_json::to_writer(&mut out, &row)?;
        out.push(b'\n');
    }
    if let Some(parent) = corpus_path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::File::create(corpus_path)?.write_all(&out)?;
    let mut json = serde_json::to_vec_pretty(manifest)?;
    json.push(b'\n');
    fs::write(manifest_path, json)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<SynthManifest> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

impl SynthManifest {
    /// Schema for reading the corpus file back with its class order.
    pub fn schema(&self) -> CorpusSchema {
        CorpusSchema {
            text_field: "text".into(),
            label: LabelColumn::Label("label".into()),
            class_names: Some(self.class_names.clone()),
        }
    }

    /// Corpus options matching the generator's sequence length and cap.
    pub fn options(&self, train_frac: f64, seed: u64) -> CorpusOptions {
        CorpusOptions {
            seq_len: self.seq_len,
            train_frac,
            seed,
            min_count: 1,
            max_vocab: self.config.max_vocab,
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::corpus::build_vocabulary;

    #[test]
    fn generation_is_deterministic_and_balanced() {
        let config = SynthConfig {
            num_docs: 200,
            num_classes: 4,
            ..Default::default()
        };
        let (a, ma) = generate(&config).unwrap();
        let (b, mb) = generate(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        assert_eq!(ma.docs_per_class, vec![50; 4]);
        for doc in &a {
            let tokens = tokenize(&doc.text);
            let planted = tokens.iter().filter(|t| ma.markers[doc.label].contains(t)).count();
            assert!((1..=2).contains(&planted), "{}", doc.text);
            assert!(tokens.len() <= config.seq_len);
        }
    }

    #[test]
    fn ordered_markers_share_one_bag_of_words() {
        let config = SynthConfig {
            num_docs: 40,
            num_classes: 4,
            ordered_markers: true,
            ..Default::default()
        };
        let (docs, manifest) = generate(&config).unwrap();
        assert_eq!(manifest.markers[0][2], "cue2a cue2e cue2i cue2o");
        assert_eq!(manifest.markers[1][2], "cue2e cue2i cue2o cue2a");
        for i in 0..config.markers_per_class {
            let mut bags: Vec<Vec<&str>> = manifest
                .markers
                .iter()
                .map(|m| {
                    let mut words: Vec<&str> = m[i].split(' ').collect();
                    words.sort_unstable();
                    words
                })
                .collect();
            bags.dedup();
            assert_eq!(bags.len(), 1);
        }
        for doc in &docs {
            let text = doc.text.to_lowercase();
            assert!(manifest.markers[doc.label].iter().any(|m| text.contains(m.as_str())));
        }
    }

    #[test]
    fn filler_words_are_distinct_from_markers() {
        let words: BTreeSet<String> = (0..1000).map(filler_word).collect();
        assert_eq!(words.len(), 1000);
        let (_, manifest) = generate(&SynthConfig::default()).unwrap();
        for m in manifest.markers.iter().flatten() {
            assert!(!words.contains(m));
        }
    }

    #[test]
    fn capped_vocabulary_keeps_the_most_frequent_tokens() {
        let (docs, manifest) = generate(&SynthConfig::default()).unwrap();
        let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
        let vocab = build_vocabulary(&texts, 1, 500).unwrap();
        assert_eq!(vocab.len(), 500);
        assert_eq!(manifest.vocab_size, 500);

        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in &texts {
            for token in tokenize(t) {
                *counts.entry(token).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let expected: Vec<String> = ranked.into_iter().take(498).map(|(t, _)| t).collect();
        assert_eq!(&vocab.tokens()[2..], expected.as_slice());
        for m in manifest.markers.iter().flatten() {
            assert!(vocab.contains(m), "{m}");
        }
    }
}
