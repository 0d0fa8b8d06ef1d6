//! Text ingestion: tokenization, vocabulary, fixed-length encoding and
//! labeled corpora with seeded train/validation splits.
//!
//! A corpus can be loaded from CSV (header row with `text` and `label` or
//! `stars` columns) or JSON lines (same field names), and saved as a bundle
//! of a JSON manifest plus a binary id matrix.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

const MANIFEST_FILE: &str = "corpus.json";
const IDS_FILE: &str = "corpus.ids";
const BUNDLE_VERSION: u32 = 1;

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Lowercases and splits on whitespace; every punctuation character becomes
/// its own token. Equivalent to matching `\w+|[^\w\s]` on lowercased text.
pub fn tokenize(raw_text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in raw_text.chars().flat_map(char::to_lowercase) {
        if is_word_char(c) {
            current.push(c);
            continue;
        }
        if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_string());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered token list. The list must start
    /// with the reserved PAD and UNK entries and contain no duplicates.
    pub fn from_tokens(id_to_token: Vec<String>) -> Result<Self> {
        if id_to_token.len() < 2 || id_to_token[0] != PAD_TOKEN || id_to_token[1] != UNK_TOKEN {
            return Err(Error::Config(
                "vocabulary must begin with <pad>, <unk>".into(),
            ));
        }
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (id, token) in id_to_token.iter().enumerate() {
            if token_to_id.insert(token.clone(), id as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {token:?}")));
            }
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    /// Id for `token`, or UNK when out of vocabulary.
    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

/// Frequency-ranked vocabulary. Tokens seen fewer than `min_count` times map
/// to UNK; at most `max_size` entries including PAD and UNK; ordering is
/// frequency descending then lexicographic.
pub fn build_vocabulary<S: AsRef<str>>(
    texts: &[S],
    min_count: usize,
    max_size: usize,
) -> Result<Vocabulary> {
    if texts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if max_size < 2 {
        return Err(Error::Config(format!(
            "max vocabulary size {max_size} cannot hold the reserved tokens"
        )));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in texts {
        for token in tokenize(text.as_ref()) {
            *counts.entry(token).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(token, count)| {
            *count >= min_count.max(1) && token != PAD_TOKEN && token != UNK_TOKEN
        })
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - 2);

    let mut id_to_token = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    id_to_token.extend(ranked.into_iter().map(|(token, _)| token));
    Vocabulary::from_tokens(id_to_token)
}

/// Maps tokens to ids, right-padding with PAD or truncating to `seq_len`.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, seq_len: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = tokens
        .iter()
        .take(seq_len)
        .map(|t| vocab.id(t.as_ref()))
        .collect();
    ids.resize(seq_len, PAD_ID);
    ids
}

/// Collapses a 1–5 star rating to a binary sentiment class: 1–2 are
/// negative (0), 4–5 positive (1), and neutral 3-star reviews are dropped
/// (`None`).
pub fn remap_labels_yelp(stars: i64) -> Result<Option<usize>> {
    match stars {
        1 | 2 => Ok(Some(0)),
        3 => Ok(None),
        4 | 5 => Ok(Some(1)),
        other => Err(Error::InvalidStars(other)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub doc_id: usize,
    pub raw_text: String,
    pub token_ids: Vec<u32>,
    pub label: usize,
}

impl LabeledDocument {
    /// The surface tokens aligned with `token_ids` (truncated to the
    /// encoded length; padding positions have no surface token).
    pub fn tokens(&self) -> Vec<String> {
        let mut tokens = tokenize(&self.raw_text);
        tokens.truncate(self.token_ids.len());
        tokens
    }

    /// Number of non-PAD positions.
    pub fn effective_len(&self) -> usize {
        self.token_ids.iter().filter(|&&id| id != PAD_ID).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<LabeledDocument>,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub vocab: Vocabulary,
    pub seq_len: usize,
    /// Indices into `documents`, ascending.
    pub train: Vec<usize>,
    /// Indices into `documents`, ascending; disjoint from `train`.
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Csv,
    Jsonl,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(CorpusFormat::Csv),
            "jsonl" | "ndjson" => Some(CorpusFormat::Jsonl),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    /// Use `label` if present, otherwise `stars`.
    Auto,
    Label(String),
    Stars(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSchema {
    pub text_field: String,
    pub label: LabelColumn,
    /// Declared class names. When absent, classes are inferred from the
    /// labels in file (numerically sorted if every label is an integer).
    pub class_names: Option<Vec<String>>,
}

impl Default for CorpusSchema {
    fn default() -> Self {
        CorpusSchema {
            text_field: "text".into(),
            label: LabelColumn::Auto,
            class_names: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusOptions {
    pub seq_len: usize,
    pub train_frac: f64,
    pub seed: u64,
    pub min_count: usize,
    pub max_vocab: usize,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            seq_len: 64,
            train_frac: 0.8,
            seed: 0,
            min_count: 1,
            max_vocab: 20_000,
        }
    }
}

/// A raw label as read from the file, before class resolution.
enum RawLabel {
    Named(String),
    Stars(i64),
}

struct RawRecord {
    line: usize,
    text: String,
    label: RawLabel,
}

pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    schema: &CorpusSchema,
    options: &CorpusOptions,
) -> Result<Corpus> {
    let records = match format {
        CorpusFormat::Csv => read_csv(path, schema)?,
        CorpusFormat::Jsonl => read_jsonl(path, schema)?,
    };
    resolve_records(records, schema, options)
}

fn label_from_str(stars_mode: bool, value: &str, line: usize) -> Result<RawLabel> {
    if stars_mode {
        let stars = value.trim().parse::<i64>().map_err(|_| Error::MalformedRow {
            row: line,
            message: format!("star rating {value:?} is not an integer"),
        })?;
        Ok(RawLabel::Stars(stars))
    } else {
        Ok(RawLabel::Named(value.trim().to_string()))
    }
}

fn read_csv(path: &Path, schema: &CorpusSchema) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h.trim() == name);
    let text_idx = position(&schema.text_field).ok_or_else(|| Error::MalformedRow {
        row: 1,
        message: format!("missing column {:?}", schema.text_field),
    })?;
    let (label_idx, stars_mode) = match &schema.label {
        LabelColumn::Label(name) => (position(name), false),
        LabelColumn::Stars(name) => (position(name), true),
        LabelColumn::Auto => match position("label") {
            Some(i) => (Some(i), false),
            None => (position("stars"), true),
        },
    };
    let label_idx = label_idx.ok_or_else(|| Error::MalformedRow {
        row: 1,
        message: "missing label column".into(),
    })?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::MalformedRow {
            row: line,
            message: e.to_string(),
        })?;
        let field = |idx: usize| {
            row.get(idx).ok_or_else(|| Error::MalformedRow {
                row: line,
                message: format!("expected at least {} fields, found {}", idx + 1, row.len()),
            })
        };
        let text = field(text_idx)?.to_string();
        let label = label_from_str(stars_mode, field(label_idx)?, line)?;
        records.push(RawRecord { line, text, label });
    }
    Ok(records)
}

fn read_jsonl(path: &Path, schema: &CorpusSchema) -> Result<Vec<RawRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedRow {
            row: line_no,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let object = value
            .as_object()
            .ok_or_else(|| malformed("expected a JSON object".into()))?;
        let text = object
            .get(&schema.text_field)
            .and_then(|v| v.as_str())
            .ok_or_else(|| malformed(format!("missing string field {:?}", schema.text_field)))?
            .to_string();
        let (field, stars_mode) = match &schema.label {
            LabelColumn::Label(name) => (name.as_str(), false),
            LabelColumn::Stars(name) => (name.as_str(), true),
            LabelColumn::Auto if object.contains_key("label") => ("label", false),
            LabelColumn::Auto => ("stars", true),
        };
        let raw = object
            .get(field)
            .ok_or_else(|| malformed(format!("missing field {field:?}")))?;
        let label = match raw {
            serde_json::Value::String(s) => label_from_str(stars_mode, s, line_no)?,
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(v) if stars_mode => RawLabel::Stars(v),
                Some(v) => RawLabel::Named(v.to_string()),
                None => return Err(malformed(format!("label {n} is not an integer"))),
            },
            other => return Err(malformed(format!("unsupported label value {other}"))),
        };
        records.push(RawRecord {
            line: line_no,
            text,
            label,
        });
    }
    Ok(records)
}

fn resolve_records(
    records: Vec<RawRecord>,
    schema: &CorpusSchema,
    options: &CorpusOptions,
) -> Result<Corpus> {
    let stars_mode = records
        .iter()
        .any(|r| matches!(r.label, RawLabel::Stars(_)));
    let class_names: Vec<String> = match (&schema.class_names, stars_mode) {
        (Some(names), _) => names.clone(),
        (None, true) => vec!["negative".into(), "positive".into()],
        (None, false) => infer_class_names(&records),
    };

    let mut labeled = Vec::with_capacity(records.len());
    for record in records {
        let class = match record.label {
            RawLabel::Stars(stars) => {
                match remap_labels_yelp(stars).map_err(|e| Error::MalformedRow {
                    row: record.line,
                    message: e.to_string(),
                })? {
                    Some(class) => class,
                    None => continue,
                }
            }
            RawLabel::Named(name) => resolve_class(&name, &class_names).ok_or(Error::UnknownLabel {
                row: record.line,
                label: name,
            })?,
        };
        labeled.push((record.text, class));
    }
    Corpus::from_labeled(labeled, class_names, options)
}

fn infer_class_names(records: &[RawRecord]) -> Vec<String> {
    let names: BTreeSet<&str> = records
        .iter()
        .filter_map(|r| match &r.label {
            RawLabel::Named(n) => Some(n.as_str()),
            RawLabel::Stars(_) => None,
        })
        .collect();
    let mut names: Vec<String> = names.into_iter().map(str::to_string).collect();
    if names.iter().all(|n| n.parse::<u64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<u64>().unwrap_or(u64::MAX));
    }
    names
}

fn resolve_class(name: &str, class_names: &[String]) -> Option<usize> {
    if let Some(i) = class_names.iter().position(|c| c == name) {
        return Some(i);
    }
    name.parse::<usize>().ok().filter(|&i| i < class_names.len())
}

impl Corpus {
    /// Builds a corpus from `(text, class)` pairs in file order: vocabulary
    /// over all texts, fixed-length encoding, and a seeded uniform split.
    pub fn from_labeled(
        labeled: Vec<(String, usize)>,
        class_names: Vec<String>,
        options: &CorpusOptions,
    ) -> Result<Corpus> {
        if labeled.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if options.seq_len == 0 {
            return Err(Error::Config("sequence length must be at least 1".into()));
        }
        if !(options.train_frac > 0.0 && options.train_frac <= 1.0) {
            return Err(Error::Config(format!(
                "train fraction {} outside (0, 1]",
                options.train_frac
            )));
        }
        let num_classes = class_names.len();
        if let Some((_, bad)) = labeled.iter().find(|(_, c)| *c >= num_classes) {
            return Err(Error::Config(format!(
                "class index {bad} out of range for {num_classes} classes"
            )));
        }

        let texts: Vec<&str> = labeled.iter().map(|(t, _)| t.as_str()).collect();
        let vocab = build_vocabulary(&texts, options.min_count, options.max_vocab)?;
        let documents: Vec<LabeledDocument> = labeled
            .into_iter()
            .enumerate()
            .map(|(doc_id, (raw_text, label))| {
                let token_ids = encode(&tokenize(&raw_text), &vocab, options.seq_len);
                LabeledDocument {
                    doc_id,
                    raw_text,
                    token_ids,
                    label,
                }
            })
            .collect();

        let (train, validation) = split_indices(documents.len(), options.train_frac, options.seed);
        let corpus = Corpus {
            documents,
            num_classes,
            class_names,
            vocab,
            seq_len: options.seq_len,
            train,
            validation,
        };
        corpus.check_train_classes()?;
        Ok(corpus)
    }

    fn check_train_classes(&self) -> Result<()> {
        let mut seen = vec![false; self.num_classes];
        for &i in &self.train {
            seen[self.documents[i].label] = true;
        }
        match seen.iter().position(|s| !s) {
            Some(class) => Err(Error::MissingClassInTrain { class }),
            None => Ok(()),
        }
    }

    pub fn train_docs(&self) -> impl Iterator<Item = &LabeledDocument> + '_ {
        self.train.iter().map(move |&i| &self.documents[i])
    }

    pub fn validation_docs(&self) -> impl Iterator<Item = &LabeledDocument> + '_ {
        self.validation.iter().map(move |&i| &self.documents[i])
    }

    pub fn doc(&self, doc_id: usize) -> Option<&LabeledDocument> {
        self.documents.get(doc_id)
    }

    /// Writes `corpus.json` (manifest) and `corpus.ids` (little-endian u32
    /// dims `[rows, cols]` followed by row-major u32 ids) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            format_version: BUNDLE_VERSION,
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
            seq_len: self.seq_len,
            vocab: self.vocab.tokens().to_vec(),
            train: self.train.clone(),
            validation: self.validation.clone(),
            documents: self
                .documents
                .iter()
                .map(|d| ManifestDoc {
                    doc_id: d.doc_id,
                    label: d.label,
                    raw_text: d.raw_text.clone(),
                })
                .collect(),
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        fs::write(dir.join(MANIFEST_FILE), json)?;

        let mut bytes = Vec::with_capacity(8 + 4 * self.documents.len() * self.seq_len);
        bytes.extend_from_slice(&(self.documents.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.seq_len as u32).to_le_bytes());
        for doc in &self.documents {
            for id in &doc.token_ids {
                bytes.extend_from_slice(&id.to_le_bytes());
            }
        }
        fs::File::create(dir.join(IDS_FILE))?.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Corpus> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: Manifest = serde_json::from_slice(&fs::read(&manifest_path)?)?;
        if manifest.format_version != BUNDLE_VERSION {
            return Err(Error::Version {
                found: manifest.format_version,
                expected: BUNDLE_VERSION,
            });
        }
        let ids_path = dir.join(IDS_FILE);
        let mut bytes = Vec::new();
        fs::File::open(&ids_path)?.read_to_end(&mut bytes)?;
        let corrupt = |reason: String| Error::Corrupt {
            path: ids_path.clone(),
            reason,
        };
        let words: Vec<u32> = bytes
            .chunks(4)
            .map(|c| c.try_into().map(u32::from_le_bytes))
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| corrupt("length is not a multiple of 4".into()))?;
        if words.len() < 2 {
            return Err(corrupt("missing dimensions".into()));
        }
        let (rows, cols) = (words[0] as usize, words[1] as usize);
        if words.len() != 2 + rows * cols {
            return Err(corrupt(format!(
                "expected {rows}x{cols} ids, found {}",
                words.len() - 2
            )));
        }
        if rows != manifest.documents.len() || cols != manifest.seq_len {
            return Err(corrupt("dimensions disagree with manifest".into()));
        }
        let vocab = Vocabulary::from_tokens(manifest.vocab)?;
        let documents = manifest
            .documents
            .into_iter()
            .enumerate()
            .map(|(row, d)| {
                let token_ids = words[2 + row * cols..2 + (row + 1) * cols].to_vec();
                if token_ids.iter().any(|&id| id as usize >= vocab.len()) {
                    return Err(corrupt(format!("row {row} has an id outside the vocabulary")));
                }
                Ok(LabeledDocument {
                    doc_id: d.doc_id,
                    raw_text: d.raw_text,
                    token_ids,
                    label: d.label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus {
            documents,
            num_classes: manifest.num_classes,
            class_names: manifest.class_names,
            vocab,
            seq_len: manifest.seq_len,
            train: manifest.train,
            validation: manifest.validation,
        })
    }
}

/// Seeded uniform shuffle; the first `round(n * frac)` indices (clamped so
/// both sides are non-empty when `n >= 2` and `frac < 1`) form the training
/// split.
fn split_indices(n: usize, train_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut n_train = (n as f64 * train_frac).round() as usize;
    n_train = n_train.clamp(1, n);
    if train_frac < 1.0 && n >= 2 {
        n_train = n_train.min(n - 1);
    }
    let mut train = order[..n_train].to_vec();
    let mut validation = order[n_train..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    (train, validation)
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    num_classes: usize,
    class_names: Vec<String>,
    seq_len: usize,
    vocab: Vec<String>,
    train: Vec<usize>,
    validation: Vec<usize>,
    documents: Vec<ManifestDoc>,
}

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    doc_id: usize,
    label: usize,
    raw_text: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn tokenize_separates_punctuation() {
        assert_eq!(tokenize("No stars!"), vec!["no", "stars", "!"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t\n").is_empty());
    }

    #[test]
    fn tokenize_matches_reference_regex_tokenizer() {
        // Expected output computed offline with Python:
        //   re.findall(r"\w+|[^\w\s]", text.lower())
        let review = "Worst service EVER... waited 45 mins for a cold burger; \
                      the manager didn't care. 1/5, would NOT return!!";
        let expected = [
            "worst", "service", "ever", ".", ".", ".", "waited", "45", "mins", "for", "a",
            "cold", "burger", ";", "the", "manager", "didn", "'", "t", "care", ".", "1", "/",
            "5", ",", "would", "not", "return", "!", "!",
        ];
        assert_eq!(tokenize(review), expected);
    }

    #[test]
    fn vocabulary_frequency_threshold() {
        let vocab = build_vocabulary(&["a b", "a c"], 2, 100).unwrap();
        assert_eq!(vocab.tokens(), &["<pad>", "<unk>", "a"]);
        assert_eq!(vocab.id("b"), UNK_ID);

        let vocab = build_vocabulary(&["x"], 1, 100).unwrap();
        assert_eq!(vocab.len(), 3);
        assert_eq!(vocab.id("x"), 2);
    }

    #[test]
    fn vocabulary_orders_by_frequency_then_lexicographic() {
        let vocab = build_vocabulary(&["b a c c", "b d"], 1, 100).unwrap();
        assert_eq!(vocab.tokens(), &["<pad>", "<unk>", "b", "c", "a", "d"]);
        let capped = build_vocabulary(&["b a c c", "b d"], 1, 4).unwrap();
        assert_eq!(capped.tokens(), &["<pad>", "<unk>", "b", "c"]);
    }

    #[test]
    fn vocabulary_rejects_empty_corpus() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            build_vocabulary(&empty, 1, 10),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn encode_pads_truncates_and_maps_oov() {
        let vocab = Vocabulary::from_tokens(vec![
            PAD_TOKEN.into(),
            UNK_TOKEN.into(),
            "a".into(),
            "b".into(),
        ])
        .unwrap();
        assert_eq!(encode(&["a"], &vocab, 3), vec![2, 0, 0]);

        let forty: Vec<String> = (0..40).map(|i| if i % 2 == 0 { "a" } else { "b" }.into()).collect();
        let ids = encode(&forty, &vocab, 30);
        assert_eq!(ids.len(), 30);
        assert_eq!(ids, (0..30).map(|i| if i % 2 == 0 { 2 } else { 3 }).collect::<Vec<_>>());

        // Manual lookup: "a"→2, "zebra"→UNK, "b"→3, "qq"→UNK.
        let ids = encode(&tokenize("a zebra b qq"), &vocab, 6);
        assert_eq!(ids, vec![2, 1, 3, 1, 0, 0]);
    }

    #[test]
    fn yelp_star_remap() {
        assert_eq!(remap_labels_yelp(1).unwrap(), Some(0));
        assert_eq!(remap_labels_yelp(2).unwrap(), Some(0));
        assert_eq!(remap_labels_yelp(3).unwrap(), None);
        assert_eq!(remap_labels_yelp(4).unwrap(), Some(1));
        assert_eq!(remap_labels_yelp(5).unwrap(), Some(1));
        assert!(matches!(remap_labels_yelp(0), Err(Error::InvalidStars(0))));
        assert!(matches!(remap_labels_yelp(6), Err(Error::InvalidStars(6))));
    }

    #[test]
    fn csv_split_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "c.csv",
            "text,label\ngood food,pos\nbad food,neg\ngreat place,pos\nawful place,neg\n",
        );
        let options = CorpusOptions {
            seq_len: 4,
            train_frac: 0.5,
            seed: 7,
            ..Default::default()
        };
        let schema = CorpusSchema {
            class_names: Some(vec!["neg".into(), "pos".into()]),
            ..Default::default()
        };
        match load_corpus(&path, CorpusFormat::Csv, &schema, &options) {
            Ok(corpus) => {
                assert_eq!(corpus.train.len(), 2);
                assert_eq!(corpus.validation.len(), 2);
            }
            // A uniform split of four rows can starve a class; any other
            // error is a bug.
            Err(Error::MissingClassInTrain { .. }) => {}
            Err(e) => panic!("{e}"),
        }
        let (train, validation) = split_indices(4, 0.5, 7);
        assert_eq!((train.len(), validation.len()), (2, 2));
    }

    #[test]
    fn jsonl_stars_drop_neutral_reviews() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "r.jsonl",
            concat!(
                "{\"text\": \"terrible\", \"stars\": 1}\n",
                "{\"text\": \"meh\", \"stars\": 3}\n",
                "{\"text\": \"lovely\", \"stars\": 5}\n",
                "{\"text\": \"bad\", \"stars\": 2}\n",
                "{\"text\": \"fine\", \"stars\": 4}\n",
            ),
        );
        let options = CorpusOptions {
            seq_len: 4,
            train_frac: 1.0,
            ..Default::default()
        };
        let corpus =
            load_corpus(&path, CorpusFormat::Jsonl, &CorpusSchema::default(), &options).unwrap();
        let labels: Vec<usize> = corpus.documents.iter().map(|d| d.label).collect();
        assert_eq!(labels, vec![0, 1, 0, 1]);
        assert!(corpus.documents.iter().all(|d| d.raw_text != "meh"));
        assert_eq!(corpus.class_names, vec!["negative", "positive"]);
    }

    #[test]
    fn malformed_and_unknown_rows_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "bad.jsonl", "{\"text\": \"a\", \"label\": \"x\"}\nnot json\n");
        let err = load_corpus(
            &path,
            CorpusFormat::Jsonl,
            &CorpusSchema::default(),
            &CorpusOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 2, .. }), "{err}");

        let path = write(dir.path(), "unk.csv", "text,label\na,x\nb,y\nc,z\n");
        let schema = CorpusSchema {
            class_names: Some(vec!["x".into(), "y".into()]),
            ..Default::default()
        };
        let err = load_corpus(&path, CorpusFormat::Csv, &schema, &CorpusOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { row: 4, ref label } if label == "z"), "{err}");

        let path = write(dir.path(), "stars.csv", "text,stars\na,7\n");
        let err = load_corpus(&path, CorpusFormat::Csv, &CorpusSchema::default(), &CorpusOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 2, .. }), "{err}");
    }

    #[test]
    fn bundle_round_trip_is_byte_stable() {
        let labeled = (0..20)
            .map(|i| (format!("doc {i} has words w{}", i % 3), i % 2))
            .collect();
        let options = CorpusOptions {
            seq_len: 6,
            seed: 3,
            ..Default::default()
        };
        let corpus = Corpus::from_labeled(labeled, vec!["a".into(), "b".into()], &options).unwrap();
        let dir = tempfile::tempdir().unwrap();
        corpus.save(&dir.path().join("one")).unwrap();
        let loaded = Corpus::load(&dir.path().join("one")).unwrap();
        assert_eq!(loaded, corpus);
        loaded.save(&dir.path().join("two")).unwrap();
        for file in [MANIFEST_FILE, IDS_FILE] {
            assert_eq!(
                fs::read(dir.path().join("one").join(file)).unwrap(),
                fs::read(dir.path().join("two").join(file)).unwrap()
            );
        }
    }

    #[test]
    fn truncated_ids_file_is_corrupt() {
        let labeled = vec![("a b".to_string(), 0), ("b c".to_string(), 1)];
        let options = CorpusOptions {
            seq_len: 3,
            train_frac: 1.0,
            ..Default::default()
        };
        let corpus = Corpus::from_labeled(labeled, vec!["x".into(), "y".into()], &options).unwrap();
        let dir = tempfile::tempdir().unwrap();
        corpus.save(dir.path()).unwrap();
        let ids = dir.path().join(IDS_FILE);
        let bytes = fs::read(&ids).unwrap();
        fs::write(&ids, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(Corpus::load(dir.path()), Err(Error::Corrupt { .. })));
    }

    proptest! {
        #[test]
        fn encoding_never_pads_before_content(
            words in proptest::collection::vec("[a-e]{1,2}", 0..20),
            seq_len in 1usize..12,
        ) {
            let vocab = build_vocabulary(&["a b c d e aa bb"], 1, 100).unwrap();
            let ids = encode(&words, &vocab, seq_len);
            prop_assert_eq!(ids.len(), seq_len);
            prop_assert!(ids.iter().all(|&id| (id as usize) < vocab.len()));
            if let Some(first_pad) = ids.iter().position(|&id| id == PAD_ID) {
                prop_assert!(ids[first_pad..].iter().all(|&id| id == PAD_ID));
            }
        }

        #[test]
        fn splits_are_disjoint_and_cover(n in 2usize..200, frac in 0.05f64..1.0, seed in any::<u64>()) {
            let (train, validation) = split_indices(n, frac, seed);
            prop_assert_eq!(train.len() + validation.len(), n);
            let all: BTreeSet<usize> = train.iter().chain(&validation).copied().collect();
            prop_assert_eq!(all.len(), n);
            prop_assert!(!train.is_empty());
        }
    }
}
