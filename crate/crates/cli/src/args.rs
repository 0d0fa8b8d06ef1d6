use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use embedrel::attribution::Method;
use embedrel::corpus::CorpusFormat;
use embedrel::textcnn::Optimizer;

use crate::config::{ClassChoice, DocSelection, RunConfig, OUT_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "embedrel",
    version,
    about = "Train a TextCNN, explain it with saliency and LRP, and score the explanations by removing embedded features",
    after_help = format!("Outputs go to <OUT>/<command>/. OUT comes from --out, then the config file's out_dir, then ${OUT_ENV}, then ./embedrel-out.")
)]
pub struct Cli {
    /// TOML config file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted-signal corpus and its manifest.
    Synth(SynthArgs),
    /// Tokenize, encode and split a corpus file into a reusable bundle.
    Ingest(IngestArgs),
    /// Train a model and write its parameter file and log.
    Train(TrainArgs),
    /// Predict every document and write the results as JSON lines.
    Predict(ModelInput),
    /// Compute attribution tensors and word highlights.
    Attribute(AttributeArgs),
    /// Downstream accuracy of plain and attribution-weighted document vectors.
    EvalWords(EvalArgs),
    /// Accuracy as embedding columns are removed.
    EvalColumns(RemovalArgs),
    /// Accuracy as pooled filters are removed.
    EvalFilters(RemovalArgs),
    /// Where correctly classified documents go as features are removed.
    Steer(SteerArgs),
    /// Train, then run every evaluation into one report.
    Pipeline(PipelineArgs),
    /// Serve documents, attributions and what-if removal over HTTP.
    Serve(ServeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Ingest(_) => "ingest",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Attribute(_) => "attribute",
            Command::EvalWords(_) => "eval-words",
            Command::EvalColumns(_) => "eval-columns",
            Command::EvalFilters(_) => "eval-filters",
            Command::Steer(_) => "steer",
            Command::Pipeline(_) => "pipeline",
            Command::Serve(_) => "serve",
        }
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::Synth(a) => a.apply(cfg),
            Command::Ingest(a) => a.corpus.apply(cfg),
            Command::Train(a) => {
                a.corpus.apply(cfg);
                a.model.apply(cfg);
            }
            Command::Predict(a) => a.apply(cfg),
            Command::Attribute(a) => a.apply(cfg),
            Command::EvalWords(a) => a.apply(cfg),
            Command::EvalColumns(a) => {
                a.eval.apply(cfg);
                if let Some(c) = &a.counts {
                    cfg.eval.column_counts = c.clone();
                }
            }
            Command::EvalFilters(a) => {
                a.eval.apply(cfg);
                if let Some(c) = &a.counts {
                    cfg.eval.filter_counts = c.clone();
                }
            }
            Command::Steer(a) => a.apply(cfg),
            Command::Pipeline(a) => {
                a.corpus.apply(cfg);
                a.model.apply(cfg);
                a.eval.apply_settings(cfg);
            }
            Command::Serve(a) => a.apply(cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Binary,
    FourClass,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Start from a bundled corpus recipe instead of the defaults.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// File stem for `<stem>.jsonl` and `<stem>.manifest.json`.
    #[arg(long, default_value = "synth")]
    pub name: String,
    #[arg(long)]
    pub docs: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Plant class-specific orderings of shared marker words.
    #[arg(long)]
    pub ordered_markers: Option<bool>,
    #[arg(long)]
    pub decoy_rate: Option<f64>,
}

impl SynthArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        match self.preset {
            Some(Preset::Binary) => cfg.synth = embedrel::presets::binary_corpus(),
            Some(Preset::FourClass) => cfg.synth = embedrel::presets::four_class_corpus(),
            None => {}
        }
        let s = &mut cfg.synth;
        set(&mut s.num_docs, self.docs);
        set(&mut s.num_classes, self.classes);
        set(&mut s.seed, self.seed);
        set(&mut s.ordered_markers, self.ordered_markers);
        set(&mut s.decoy_rate, self.decoy_rate);
    }
}

fn set<T: Clone>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus file (csv/jsonl) or a directory written by `ingest`.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub text_field: Option<String>,
    #[arg(long)]
    pub label_field: Option<String>,
    #[arg(long)]
    pub stars_field: Option<String>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub max_vocab: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Jsonl,
}

impl CorpusArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let c = &mut cfg.corpus;
        if let Some(p) = &self.corpus {
            c.path = Some(p.clone());
        }
        if let Some(f) = self.format {
            c.format = Some(match f {
                FormatArg::Csv => CorpusFormat::Csv,
                FormatArg::Jsonl => CorpusFormat::Jsonl,
            });
        }
        if let Some(m) = &self.manifest {
            c.manifest = Some(m.clone());
        }
        set(&mut c.text_field, self.text_field.clone());
        if self.label_field.is_some() {
            c.label_field = self.label_field.clone();
            c.stars_field = None;
        }
        if self.stars_field.is_some() {
            c.stars_field = self.stars_field.clone();
            c.label_field = None;
        }
        if self.seq_len.is_some() {
            c.seq_len = self.seq_len;
        }
        set(&mut c.train_frac, self.train_frac);
        set(&mut c.split_seed, self.split_seed);
        set(&mut c.min_count, self.min_count);
        if self.max_vocab.is_some() {
            c.max_vocab = self.max_vocab;
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "RATE")]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Filters per width.
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long, value_delimiter = ',', value_name = "W,...")]
    pub widths: Option<Vec<usize>>,
    #[arg(long)]
    pub use_bias: Option<bool>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    /// LRP stabilizer.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let m = &mut cfg.model;
        set(&mut m.epochs, self.epochs);
        set(&mut m.seed, self.seed);
        set(&mut m.learning_rate, self.lr);
        set(&mut m.batch_size, self.batch_size);
        set(&mut m.embed_dim, self.embed_dim);
        set(&mut m.filters_per_width, self.filters);
        set(&mut m.filter_widths, self.widths.clone());
        set(&mut m.use_bias, self.use_bias);
        set(&mut m.epsilon_lrp, self.epsilon);
        match self.optimizer {
            Some(OptimizerArg::Sgd) => m.optimizer = Optimizer::Sgd,
            Some(OptimizerArg::Adam) if !matches!(m.optimizer, Optimizer::Adam { .. }) => {
                m.optimizer = Optimizer::adam()
            }
            _ => {}
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct ModelInput {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Parameter file; defaults to `<OUT>/train/model.atpr`.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
}

impl ModelInput {
    fn apply(&self, cfg: &mut RunConfig) {
        self.corpus.apply(cfg);
        if let Some(p) = &self.params {
            cfg.params = Some(p.clone());
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Lrp,
    Sa,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lrp => Method::Lrp,
            MethodArg::Sa => Method::Sa,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TargetArg {
    True,
    Predicted,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub input: ModelInput,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Explain this class for every document.
    #[arg(long)]
    pub class: Option<usize>,
    /// Per-document class when --class is not given.
    #[arg(long, value_enum, conflicts_with = "class")]
    pub target: Option<TargetArg>,
    /// `validation`, `train`, `all`, or comma-separated document ids.
    #[arg(long, value_name = "SELECTION", value_parser = parse_selection)]
    pub docs: Option<DocSelection>,
    #[arg(long)]
    pub limit: Option<usize>,
}

impl AttributeArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        self.input.apply(cfg);
        let a = &mut cfg.attribute;
        if let Some(m) = self.method {
            a.method = m.into();
        }
        if self.class.is_some() {
            a.class = self.class;
        }
        if let Some(t) = self.target {
            a.class = None;
            a.target = match t {
                TargetArg::True => ClassChoice::True,
                TargetArg::Predicted => ClassChoice::Predicted,
            };
        }
        set(&mut a.docs, self.docs.clone());
        if self.limit.is_some() {
            a.limit = self.limit;
        }
    }
}

fn parse_selection(raw: &str) -> Result<DocSelection, String> {
    match raw {
        "validation" => Ok(DocSelection::Validation),
        "train" => Ok(DocSelection::Train),
        "all" => Ok(DocSelection::All),
        ids => ids
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map(DocSelection::Ids)
            .map_err(|_| format!("expected validation, train, all or comma-separated ids, got {raw:?}")),
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: ModelInput,
    #[arg(long, value_enum, value_delimiter = ',', value_name = "M,...")]
    pub methods: Option<Vec<MethodArg>>,
    /// Seeds for the random removal baseline.
    #[arg(long, value_delimiter = ',', value_name = "S,...")]
    pub seeds: Option<Vec<u64>>,
    /// Skip class-difference curves.
    #[arg(long)]
    pub no_diff: bool,
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[arg(long)]
    pub classifier_seed: Option<u64>,
}

impl EvalArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        self.input.apply(cfg);
        self.apply_settings(cfg);
    }

    fn apply_settings(&self, cfg: &mut RunConfig) {
        let e = &mut cfg.eval;
        if let Some(m) = &self.methods {
            e.methods = m.iter().map(|&m| m.into()).collect();
        }
        set(&mut e.random_seeds, self.seeds.clone());
        if self.no_diff {
            e.diff_curves = false;
        }
        set(&mut e.knn_k, self.knn_k);
        set(&mut e.classifier_seed, self.classifier_seed);
    }
}

#[derive(Debug, Args)]
pub struct RemovalArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Removal counts, e.g. `0,8,16,24`.
    #[arg(long, value_delimiter = ',', value_name = "M,...")]
    pub counts: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Columns,
    Filters,
    Both,
}

#[derive(Debug, Args)]
pub struct SteerArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Class whose correctly classified documents are steered away.
    #[arg(long)]
    pub class: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    pub kind: KindArg,
    #[arg(long, value_delimiter = ',', value_name = "M,...")]
    pub column_counts: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', value_name = "M,...")]
    pub filter_counts: Option<Vec<usize>>,
}

impl SteerArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        self.eval.apply(cfg);
        let e = &mut cfg.eval;
        set(&mut e.steer_class, self.class);
        set(&mut e.steer_column_counts, self.column_counts.clone());
        set(&mut e.steer_filter_counts, self.filter_counts.clone());
    }
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub eval: PipelineEvalArgs,
}

#[derive(Debug, Args)]
pub struct PipelineEvalArgs {
    #[arg(long, value_enum, value_delimiter = ',', value_name = "M,...")]
    pub methods: Option<Vec<MethodArg>>,
    #[arg(long, value_delimiter = ',', value_name = "S,...")]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub no_diff: bool,
}

impl PipelineEvalArgs {
    fn apply_settings(&self, cfg: &mut RunConfig) {
        let e = &mut cfg.eval;
        if let Some(m) = &self.methods {
            e.methods = m.iter().map(|&m| m.into()).collect();
        }
        set(&mut e.random_seeds, self.seeds.clone());
        if self.no_diff {
            e.diff_curves = false;
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub input: ModelInput,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Attribution cache entry cap.
    #[arg(long)]
    pub cache_capacity: Option<usize>,
    #[arg(long)]
    pub cors_origin: Option<String>,
    /// Directory of static files (e.g. a built web UI).
    #[arg(long, value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
}

impl ServeArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        self.input.apply(cfg);
        let s = &mut cfg.serve;
        set(&mut s.host, self.host.clone());
        set(&mut s.port, self.port);
        if self.cache_capacity.is_some() {
            s.cache_capacity = self.cache_capacity;
        }
        if self.cors_origin.is_some() {
            s.cors_origin = self.cors_origin.clone();
        }
        if self.static_dir.is_some() {
            s.static_dir = self.static_dir.clone();
        }
    }
}
