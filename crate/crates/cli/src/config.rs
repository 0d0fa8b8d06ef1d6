//! Layered run configuration: built-in defaults, then a TOML file, then
//! command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use embedrel::attribution::Method;
use embedrel::corpus::{CorpusFormat, CorpusOptions, CorpusSchema, LabelColumn};
use embedrel::pipeline::EvalSettings;
use embedrel::synth::{read_manifest, SynthConfig, SynthManifest};
use embedrel::textcnn::ModelConfig;
use serde::{Deserialize, Serialize};

pub const OUT_ENV: &str = "EMBEDREL_OUT";
pub const DEFAULT_OUT: &str = "embedrel-out";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: Option<PathBuf>,
    /// Parameter file read by commands that need a trained model.
    pub params: Option<PathBuf>,
    pub corpus: CorpusSection,
    /// `vocab_size`, `num_classes` and `seq_len` are always taken from the
    /// corpus.
    pub model: ModelConfig,
    pub eval: EvalSettings,
    pub attribute: AttributeSection,
    pub serve: ServeSection,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// A CSV/JSONL file, or a directory written by `ingest`.
    pub path: Option<PathBuf>,
    pub format: Option<CorpusFormat>,
    /// Generator manifest. Defaults to `<stem>.manifest.json` beside the
    /// corpus file when that exists.
    pub manifest: Option<PathBuf>,
    pub text_field: String,
    pub label_field: Option<String>,
    /// Star-rating column, remapped to two classes.
    pub stars_field: Option<String>,
    pub class_names: Option<Vec<String>>,
    pub seq_len: Option<usize>,
    pub train_frac: f64,
    pub split_seed: u64,
    pub min_count: usize,
    pub max_vocab: Option<usize>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            path: None,
            format: None,
            manifest: None,
            text_field: "text".into(),
            label_field: None,
            stars_field: None,
            class_names: None,
            seq_len: None,
            train_frac: 0.8,
            split_seed: 0,
            min_count: 1,
            max_vocab: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassChoice {
    True,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocSelection {
    Validation,
    Train,
    All,
    Ids(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributeSection {
    pub method: Method,
    /// Fixed class index; when unset, `target` picks the class per document.
    pub class: Option<usize>,
    pub target: ClassChoice,
    pub docs: DocSelection,
    /// Cap on documents processed; unset means no cap.
    pub limit: Option<usize>,
}

impl Default for AttributeSection {
    fn default() -> Self {
        AttributeSection {
            method: Method::Lrp,
            class: None,
            target: ClassChoice::Predicted,
            docs: DocSelection::Validation,
            limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub host: String,
    pub port: u16,
    /// Attribution cache entry cap; unset keeps every entry.
    pub cache_capacity: Option<usize>,
    pub cors_origin: Option<String>,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection {
            host: "127.0.0.1".into(),
            port: 8080,
            cache_capacity: None,
            cors_origin: None,
            static_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }

    /// `flag` beats the file's `out_dir`, which beats the environment.
    pub fn resolve_out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let c = &self.corpus;
        if !(c.train_frac > 0.0 && c.train_frac <= 1.0) {
            bail!("corpus.train_frac must be in (0, 1], got {}", c.train_frac);
        }
        if c.seq_len == Some(0) {
            bail!("corpus.seq_len must be at least 1");
        }
        if c.label_field.is_some() && c.stars_field.is_some() {
            bail!("set at most one of corpus.label_field and corpus.stars_field");
        }
        if self.eval.methods.is_empty() {
            bail!("eval.methods must name at least one method");
        }
        if self.eval.random_seeds.is_empty() {
            bail!("eval.random_seeds must not be empty");
        }
        if self.serve.cache_capacity == Some(0) {
            bail!("serve.cache_capacity must be at least 1");
        }
        self.synth.validate()?;
        Ok(())
    }
}

/// Manifest for a generated corpus file, if one is configured or sits next
/// to it.
pub fn find_manifest(section: &CorpusSection, corpus_path: &Path) -> anyhow::Result<Option<SynthManifest>> {
    let candidate = match &section.manifest {
        Some(p) => Some(p.clone()),
        None => {
            let stem = corpus_path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let beside = corpus_path.with_file_name(format!("{stem}.manifest.json"));
            beside.is_file().then_some(beside)
        }
    };
    candidate
        .map(|p| read_manifest(&p).with_context(|| format!("reading manifest {}", p.display())))
        .transpose()
}

pub fn schema_and_options(
    section: &CorpusSection,
    manifest: Option<&SynthManifest>,
) -> (CorpusSchema, CorpusOptions) {
    let label = match (&section.label_field, &section.stars_field) {
        (Some(f), _) => LabelColumn::Label(f.clone()),
        (None, Some(f)) => LabelColumn::Stars(f.clone()),
        (None, None) => match manifest {
            Some(_) => LabelColumn::Label("label".into()),
            None => LabelColumn::Auto,
        },
    };
    let schema = CorpusSchema {
        text_field: section.text_field.clone(),
        label,
        class_names: section
            .class_names
            .clone()
            .or_else(|| manifest.map(|m| m.class_names.clone())),
    };
    let defaults = CorpusOptions::default();
    let options = CorpusOptions {
        seq_len: section
            .seq_len
            .or(manifest.map(|m| m.seq_len))
            .unwrap_or(defaults.seq_len),
        train_frac: section.train_frac,
        seed: section.split_seed,
        min_count: section.min_count,
        max_vocab: section
            .max_vocab
            .or(manifest.map(|m| m.config.max_vocab))
            .unwrap_or(defaults.max_vocab),
    };
    (schema, options)
}
