use std::fs;
use std::future::IntoFuture;
use std::io::Write;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use embedrel::attribution::{attribute, render_highlights_html, word_highlights, write_attribution};
use embedrel::corpus::{load_corpus, Corpus, CorpusFormat, LabeledDocument};
use embedrel::evaluation::{emit_report, FeatureKind};
use embedrel::pipeline::{empty_report, eval_removal, eval_steering, eval_words, run_all};
use embedrel::synth::{generate, write_corpus};
use embedrel::textcnn::{train, ModelConfig, ModelParams};
use embedrel_service::{router, AppState, RouterOptions, ServiceSettings, Session};
use serde::Serialize;
use serde_json::json;

use crate::args::{Command, KindArg};
use crate::config::{find_manifest, schema_and_options, ClassChoice, DocSelection, RunConfig};

pub struct RunContext<'a> {
    pub config: &'a RunConfig,
    pub out: &'a Path,
    pub dir: PathBuf,
}

pub fn dispatch(command: &Command, ctx: &RunContext<'_>) -> anyhow::Result<()> {
    match command {
        Command::Synth(a) => synth(ctx, &a.name),
        Command::Ingest(_) => ingest(ctx),
        Command::Train(_) => train_cmd(ctx),
        Command::Predict(_) => predict(ctx),
        Command::Attribute(_) => attribute_cmd(ctx),
        Command::EvalWords(_) => evaluate(ctx, Evaluation::Words),
        Command::EvalColumns(_) => evaluate(ctx, Evaluation::Removal(FeatureKind::Column)),
        Command::EvalFilters(_) => evaluate(ctx, Evaluation::Removal(FeatureKind::Filter)),
        Command::Steer(a) => evaluate(ctx, Evaluation::Steer(a.kind)),
        Command::Pipeline(_) => pipeline(ctx),
        Command::Serve(_) => serve(ctx),
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, &row)?;
        out.push(b'\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn load_input_corpus(config: &RunConfig) -> anyhow::Result<Corpus> {
    let section = &config.corpus;
    let Some(path) = &section.path else {
        bail!("no corpus given: pass --corpus or set corpus.path in the config file");
    };
    if path.is_dir() {
        return Corpus::load(path).with_context(|| format!("loading corpus bundle {}", path.display()));
    }
    let format = section
        .format
        .or_else(|| CorpusFormat::from_path(path))
        .with_context(|| format!("cannot tell the format of {}; pass --format", path.display()))?;
    let manifest = find_manifest(section, path)?;
    let (schema, options) = schema_and_options(section, manifest.as_ref());
    load_corpus(path, format, &schema, &options)
        .with_context(|| format!("loading corpus {}", path.display()))
}

fn model_config(config: &RunConfig, corpus: &Corpus) -> anyhow::Result<ModelConfig> {
    let model = ModelConfig {
        vocab_size: corpus.vocab.len(),
        num_classes: corpus.num_classes,
        seq_len: corpus.seq_len,
        ..config.model.clone()
    };
    model.validate()?;
    Ok(model)
}

fn load_model(ctx: &RunContext<'_>, corpus: &Corpus) -> anyhow::Result<ModelParams> {
    let path = ctx
        .config
        .params
        .clone()
        .unwrap_or_else(|| ctx.out.join("train").join("model.atpr"));
    let params = ModelParams::load(&path)
        .with_context(|| format!("loading parameters {} (train a model first or pass --params)", path.display()))?;
    let cfg = &params.config;
    if (cfg.vocab_size, cfg.num_classes, cfg.seq_len)
        != (corpus.vocab.len(), corpus.num_classes, corpus.seq_len)
    {
        bail!(
            "model expects vocab {}, {} classes, length {}; corpus has vocab {}, {} classes, length {}",
            cfg.vocab_size,
            cfg.num_classes,
            cfg.seq_len,
            corpus.vocab.len(),
            corpus.num_classes,
            corpus.seq_len
        );
    }
    Ok(params)
}

fn synth(ctx: &RunContext<'_>, name: &str) -> anyhow::Result<()> {
    let (docs, manifest) = generate(&ctx.config.synth)?;
    let corpus_path = ctx.dir.join(format!("{name}.jsonl"));
    let manifest_path = ctx.dir.join(format!("{name}.manifest.json"));
    write_corpus(&docs, &manifest, &corpus_path, &manifest_path)?;
    println!(
        "wrote {} documents in {} classes to {}",
        docs.len(),
        manifest.num_classes,
        corpus_path.display()
    );
    Ok(())
}

fn ingest(ctx: &RunContext<'_>) -> anyhow::Result<()> {
    let corpus = load_input_corpus(ctx.config)?;
    corpus.save(&ctx.dir)?;
    println!(
        "{} documents, {} classes, vocabulary {}, {} train / {} validation -> {}",
        corpus.documents.len(),
        corpus.num_classes,
        corpus.vocab.len(),
        corpus.train.len(),
        corpus.validation.len(),
        ctx.dir.display()
    );
    Ok(())
}

fn train_and_save(ctx: &RunContext<'_>, corpus: &Corpus) -> anyhow::Result<ModelParams> {
    let config = model_config(ctx.config, corpus)?;
    tracing::info!(
        "training on {} documents for {} epochs",
        corpus.train.len(),
        config.epochs
    );
    let (params, log) = train(corpus, &config)?;
    for epoch in &log.epochs {
        tracing::info!(
            "epoch {}: loss {:.4}, accuracy {:.4}, validation accuracy {}",
            epoch.epoch,
            epoch.loss,
            epoch.accuracy,
            epoch.val_accuracy.map_or("n/a".into(), |a| format!("{a:.4}"))
        );
    }
    params.save(&ctx.dir.join("model.atpr"))?;
    log.write_jsonl(&ctx.dir.join("train_log.jsonl"))?;
    if let Some(acc) = log.last().and_then(|e| e.val_accuracy) {
        println!("validation accuracy {acc}");
    }
    Ok(params)
}

fn train_cmd(ctx: &RunContext<'_>) -> anyhow::Result<()> {
    let corpus = load_input_corpus(ctx.config)?;
    train_and_save(ctx, &corpus)?;
    Ok(())
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    doc_id: usize,
    split: &'a str,
    true_label: usize,
    predicted_label: usize,
    probs: Vec<f64>,
}

fn predict(ctx: &RunContext<'_>) -> anyhow::Result<()> {
    let corpus = load_input_corpus(ctx.config)?;
    let params = load_model(ctx, &corpus)?;
    let mut split = vec!["train"; corpus.documents.len()];
    for &i in &corpus.validation {
        split[i] = "validation";
    }
    let rows = corpus
        .documents
        .iter()
        .map(|doc| {
            let p = params.predict(&doc.token_ids)?;
            Ok(PredictionRow {
                doc_id: doc.doc_id,
                split: split[doc.doc_id],
                true_label: doc.label,
                predicted_label: p.class,
                probs: p.probs,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let correct = rows.iter().filter(|r| r.true_label == r.predicted_label).count();
    write_jsonl(&ctx.dir.join("predictions.jsonl"), rows.iter())?;
    println!("{correct}/{} documents predicted correctly", rows.len());
    Ok(())
}

fn select_docs<'c>(corpus: &'c Corpus, selection: &DocSelection) -> anyhow::Result<Vec<&'c LabeledDocument>> {
    Ok(match selection {
        DocSelection::Validation => corpus.validation_docs().collect(),
        DocSelection::Train => corpus.train_docs().collect(),
        DocSelection::All => corpus.documents.iter().collect(),
        DocSelection::Ids(ids) => ids
            .iter()
            .map(|&id| corpus.doc(id).with_context(|| format!("no document with id {id}")))
            .collect::<anyhow::Result<_>>()?,
    })
}

fn attribute_cmd(ctx: &RunContext<'_>) -> anyhow::Result<()> {
    let section = &ctx.config.attribute;
    let corpus = load_input_corpus(ctx.config)?;
    let params = load_model(ctx, &corpus)?;
    if let Some(c) = section.class {
        if c >= corpus.num_classes {
            bail!("class {c} out of range for {} classes", corpus.num_classes);
        }
    }
    let mut docs = select_docs(&corpus, &section.docs)?;
    if let Some(limit) = section.limit {
        docs.truncate(limit);
    }
    let tensors = ctx.dir.join("attributions");
    let pages = ctx.dir.join("html");
    fs::create_dir_all(&tensors)?;
    fs::create_dir_all(&pages)?;
    let mut rows = Vec::with_capacity(docs.len());
    for doc in &docs {
        let class = match (section.class, section.target) {
            (Some(c), _) => c,
            (None, ClassChoice::True) => doc.label,
            (None, ClassChoice::Predicted) => params.predict(&doc.token_ids)?.class,
        };
        let a = attribute(&params, section.method, doc.doc_id, &doc.token_ids, class)?;
        let stem = format!("doc{:05}_c{class}_{}", doc.doc_id, section.method);
        write_attribution(&tensors.join(format!("{stem}.attr")), &a)?;
        let highlights = word_highlights(&a, doc, &corpus.vocab);
        let title = format!(
            "doc {} ({}), {} relevance for {}",
            doc.doc_id, corpus.class_names[doc.label], section.method, corpus.class_names[class]
        );
        fs::write(pages.join(format!("{stem}.html")), render_highlights_html(&title, &highlights))?;
        rows.push(json!({
            "doc_id": doc.doc_id,
            "class": class,
            "method": section.method,
            "logit": a.logit_value,
            "total": a.total(),
            "highlights": highlights,
        }));
    }
    write_jsonl(&ctx.dir.join("highlights.jsonl"), &rows)?;
    println!("attributed {} documents -> {}", rows.len(), ctx.dir.display());
    Ok(())
}

enum Evaluation {
    Words,
    Removal(FeatureKind),
    Steer(KindArg),
}

fn evaluate(ctx: &RunContext<'_>, which: Evaluation) -> anyhow::Result<()> {
    let corpus = load_input_corpus(ctx.config)?;
    let params = load_model(ctx, &corpus)?;
    let settings = &ctx.config.eval;
    let mut report = empty_report(&params, &corpus, settings)?;
    match which {
        Evaluation::Words => report.downstream = eval_words(&params, &corpus, settings)?,
        Evaluation::Removal(kind) => report.curves = eval_removal(&params, &corpus, kind, settings)?,
        Evaluation::Steer(kinds) => {
            let kinds: &[FeatureKind] = match kinds {
                KindArg::Columns => &[FeatureKind::Column],
                KindArg::Filters => &[FeatureKind::Filter],
                KindArg::Both => &[FeatureKind::Column, FeatureKind::Filter],
            };
            for &kind in kinds {
                report.tables.push(eval_steering(&params, &corpus, kind, settings)?);
            }
        }
    }
    let files = emit_report(&ctx.dir, &report)?;
    println!("wrote {} report files to {}", files.len(), ctx.dir.display());
    Ok(())
}

fn pipeline(ctx: &RunContext<'_>) -> anyhow::Result<()> {
    let corpus = load_input_corpus(ctx.config)?;
    let params = train_and_save(ctx, &corpus)?;
    let report = run_all(&params, &corpus, &ctx.config.eval)?;
    let files = emit_report(&ctx.dir, &report)?;
    println!("wrote model and {} report files to {}", files.len(), ctx.dir.display());
    Ok(())
}

fn serve(ctx: &RunContext<'_>) -> anyhow::Result<()> {
    let section = &ctx.config.serve;
    let settings = ServiceSettings {
        cache_capacity: section.cache_capacity.and_then(NonZeroUsize::new),
        ..ServiceSettings::default()
    };
    let options = RouterOptions {
        cors_origin: section.cors_origin.clone(),
        static_dir: section.static_dir.clone(),
    };
    let address = format!("{}:{}", section.host, section.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&address)
            .await
            .with_context(|| format!("binding {address}"))?;
        let state = AppState::loading();
        let app = router(state.clone(), &options);
        let config = ctx.config.clone();
        let out = ctx.out.to_path_buf();
        let loader = tokio::task::spawn_blocking(move || -> anyhow::Result<()> {
            let corpus = load_input_corpus(&config)?;
            let load_ctx = RunContext {
                config: &config,
                out: &out,
                dir: PathBuf::new(),
            };
            let params = load_model(&load_ctx, &corpus)?;
            state.install(Session::new(params, corpus, settings));
            tracing::info!("model loaded");
            Ok(())
        });
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        let server = axum::serve(listener, app).into_future();
        tokio::pin!(server);
        tokio::select! {
            result = &mut server => return result.context("server stopped"),
            loaded = loader => loaded??,
        }
        server.await.context("server stopped")
    })
}
