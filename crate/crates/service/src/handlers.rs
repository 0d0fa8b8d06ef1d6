use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::Json;
use embedrel::attribution::{attribution_difference, word_highlights, AttributionDiff, Highlight, Method};
use embedrel::corpus::LabeledDocument;
use embedrel::textcnn::Overrides;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::state::{AppState, Session};

type ApiResult<T> = Result<Json<T>, ApiError>;

fn session(state: &AppState) -> Result<Arc<Session>, ApiError> {
    state.session().ok_or(ApiError::Loading)
}

fn lookup<'s>(session: &'s Session, raw_id: &str) -> Result<&'s LabeledDocument, ApiError> {
    let id: usize = raw_id
        .parse()
        .map_err(|_| ApiError::BadRequest(format!("document id {raw_id:?} is not a number")))?;
    session
        .doc(id)
        .ok_or_else(|| ApiError::NotFound(format!("no document with id {id}")))
}

fn parse_class(session: &Session, name: &str, raw: Option<&str>) -> Result<Option<usize>, ApiError> {
    let Some(raw) = raw else { return Ok(None) };
    let classes = session.params().config.num_classes;
    match raw.parse::<usize>() {
        Ok(c) if c < classes => Ok(Some(c)),
        _ => Err(ApiError::BadRequest(format!(
            "{name} must be a class index below {classes}, got {raw:?}"
        ))),
    }
}

fn parse_method(raw: Option<&str>) -> Result<Method, ApiError> {
    match raw {
        None => Ok(Method::Lrp),
        Some(m) => m
            .parse()
            .map_err(|_| ApiError::BadRequest(format!("method must be lrp or sa, got {m:?}"))),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelInfo {
    pub class_names: Vec<String>,
    pub num_classes: usize,
    pub embed_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
    pub seq_len: usize,
    pub use_bias: bool,
    pub epsilon_lrp: f64,
    pub documents: usize,
    pub dense_bias: Vec<f64>,
}

pub async fn meta(State(state): State<AppState>) -> ApiResult<ModelInfo> {
    let s = session(&state)?;
    let cfg = &s.params().config;
    Ok(Json(ModelInfo {
        class_names: s.corpus().class_names.clone(),
        num_classes: cfg.num_classes,
        embed_dim: cfg.embed_dim,
        filter_widths: cfg.filter_widths.clone(),
        filters_per_width: cfg.filters_per_width,
        seq_len: cfg.seq_len,
        use_bias: cfg.use_bias,
        epsilon_lrp: cfg.epsilon_lrp,
        documents: s.corpus().documents.len(),
        dense_bias: s.params().dense_bias.clone(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct PageQuery {
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DocSummary {
    pub doc_id: usize,
    pub snippet: String,
    pub true_label: usize,
    pub predicted_label: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DocPage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub docs: Vec<DocSummary>,
}

pub async fn list_docs(
    State(state): State<AppState>,
    Query(page): Query<PageQuery>,
) -> ApiResult<DocPage> {
    let s = session(&state)?;
    let settings = s.settings();
    let offset = page.offset.unwrap_or(0);
    let limit = page
        .limit
        .unwrap_or(settings.default_page_size)
        .min(settings.max_page_size);
    let documents = &s.corpus().documents;
    let docs = documents
        .iter()
        .skip(offset)
        .take(limit)
        .map(|doc| {
            let prediction = s.predict(doc)?;
            Ok(DocSummary {
                doc_id: doc.doc_id,
                snippet: doc.raw_text.chars().take(settings.snippet_chars).collect(),
                true_label: doc.label,
                predicted_label: prediction.class,
                probs: prediction.probs,
            })
        })
        .collect::<Result<Vec<_>, ApiError>>()?;
    Ok(Json(DocPage {
        total: documents.len(),
        offset,
        limit,
        docs,
    }))
}

#[derive(Debug, Deserialize)]
pub struct AttributionQuery {
    pub class: Option<String>,
    pub method: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AttributionPayload {
    pub doc_id: usize,
    pub class: usize,
    pub method: Method,
    pub epsilon: f64,
    pub logit: f64,
    /// Non-padding words only.
    pub highlights: Vec<Highlight>,
    /// One score per position, padding included.
    pub word_scores: Vec<f64>,
    pub column_scores: Vec<f64>,
    pub filter_scores: Vec<f64>,
}

/// Without `class`, the predicted class is explained.
pub async fn attribution(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<AttributionQuery>,
) -> ApiResult<AttributionPayload> {
    let s = session(&state)?;
    let doc = lookup(&s, &id)?;
    let method = parse_method(q.method.as_deref())?;
    let class = match parse_class(&s, "class", q.class.as_deref())? {
        Some(c) => c,
        None => s.predict(doc)?.class,
    };
    let a = s.attribution(doc, class, method)?;
    Ok(Json(AttributionPayload {
        doc_id: doc.doc_id,
        class,
        method,
        epsilon: a.epsilon,
        logit: a.logit_value,
        highlights: word_highlights(&a, doc, &s.corpus().vocab),
        word_scores: a.word_scores.clone(),
        column_scores: a.column_scores.clone(),
        filter_scores: a.filter_scores.clone(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct DiffQuery {
    pub class_a: Option<String>,
    pub class_b: Option<String>,
    pub method: Option<String>,
}

pub async fn diff(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<DiffQuery>,
) -> ApiResult<AttributionDiff> {
    let s = session(&state)?;
    let doc = lookup(&s, &id)?;
    let method = parse_method(q.method.as_deref())?;
    let required = |name: &str, v: Option<usize>| {
        v.ok_or_else(|| ApiError::BadRequest(format!("{name} is required")))
    };
    let a = required("class_a", parse_class(&s, "class_a", q.class_a.as_deref())?)?;
    let b = required("class_b", parse_class(&s, "class_b", q.class_b.as_deref())?)?;
    let ta = s.attribution(doc, a, method)?;
    let tb = s.attribution(doc, b, method)?;
    Ok(Json(attribution_difference(&ta, &tb)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub probs_before: Vec<f64>,
    pub probs_after: Vec<f64>,
    pub predicted_before: usize,
    pub predicted_after: usize,
}

/// One overridden forward pass; nothing is stored.
pub async fn whatif(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(overrides): Json<Overrides>,
) -> ApiResult<WhatIfResponse> {
    let s = session(&state)?;
    let doc = lookup(&s, &id)?;
    let cfg = &s.params().config;
    if let Some(k) = overrides.zero_columns.iter().find(|&&k| k >= cfg.embed_dim) {
        return Err(ApiError::BadRequest(format!(
            "zero_columns entry {k} out of range (embedding has {} columns)",
            cfg.embed_dim
        )));
    }
    if let Some(f) = overrides.zero_filters.iter().find(|&&f| f >= cfg.pooled_len()) {
        return Err(ApiError::BadRequest(format!(
            "zero_filters entry {f} out of range (model has {} filters)",
            cfg.pooled_len()
        )));
    }
    let before = s.params().forward(&doc.token_ids, &Overrides::none())?;
    let after = s.params().forward(&doc.token_ids, &overrides)?;
    Ok(Json(WhatIfResponse {
        predicted_before: before.predicted_class(),
        predicted_after: after.predicted_class(),
        probs_before: before.probs,
        probs_after: after.probs,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
}

pub async fn health(State(state): State<AppState>) -> Json<Health> {
    let status = if state.session().is_some() { "ready" } else { "loading" };
    Json(Health {
        status: status.into(),
    })
}
