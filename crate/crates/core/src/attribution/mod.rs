//! Per-feature attribution for the text CNN.
//!
//! Both methods produce an [`AttributionTensor`]: a relevance matrix over
//! word positions × embedding dimensions plus its word (row), column and
//! per-filter aggregates.
//!
//! * Signed saliency is the raw gradient of the target logit.
//! * LRP pushes the target logit back through the dense layer, the max-pool
//!   (all relevance to the winning window), the ReLU (unchanged) and the
//!   convolution using the ε-rule, stopping at the embedded input.

mod export;
mod highlight;
mod lrp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::textcnn::{ForwardTrace, ModelParams, Overrides};

pub use export::{read_attribution, render_highlights_html, write_attribution};
pub use highlight::{word_highlights, Highlight};
pub use lrp::{
    conservation_report, epsilon_rule, lrp_detailed, ClassPolicy, ConservationEntry,
    ConservationReport, LrpPass, RuleAccount,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lrp,
    Sa,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lrp => "lrp",
            Method::Sa => "sa",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lrp" => Ok(Method::Lrp),
            "sa" | "saliency" => Ok(Method::Sa),
            other => Err(Error::Config(format!("unknown attribution method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionTensor {
    pub doc_id: usize,
    pub target_class: usize,
    pub method: Method,
    /// LRP stabilizer in effect (0 for saliency).
    pub epsilon: f64,
    /// `L × D` relevance of each embedded input.
    pub relevance: Matrix,
    /// Row sums of `relevance`.
    pub word_scores: Vec<f64>,
    /// Column sums of `relevance`.
    pub column_scores: Vec<f64>,
    /// One score per pooled filter.
    pub filter_scores: Vec<f64>,
    /// Target logit at computation time.
    pub logit_value: f64,
}

impl AttributionTensor {
    pub(crate) fn new(
        doc_id: usize,
        target_class: usize,
        method: Method,
        epsilon: f64,
        relevance: Matrix,
        filter_scores: Vec<f64>,
        logit_value: f64,
    ) -> Self {
        AttributionTensor {
            doc_id,
            target_class,
            method,
            epsilon,
            word_scores: relevance.row_sums(),
            column_scores: relevance.col_sums(),
            relevance,
            filter_scores,
            logit_value,
        }
    }

    pub fn total(&self) -> f64 {
        self.relevance.sum()
    }
}

fn check_class(params: &ModelParams, class: usize) -> Result<()> {
    if class >= params.config.num_classes {
        return Err(Error::shape(
            "class",
            format!("< {}", params.config.num_classes),
            class,
        ));
    }
    Ok(())
}

/// Signed saliency: `∂ logit_c / ∂ embedded`, with the gradient at the
/// pooled layer as filter scores.
pub fn saliency(
    params: &ModelParams,
    doc_id: usize,
    token_ids: &[u32],
    class: usize,
) -> Result<AttributionTensor> {
    let trace = params.forward(token_ids, &Overrides::none())?;
    saliency_from_trace(params, &trace, doc_id, class)
}

pub fn saliency_from_trace(
    params: &ModelParams,
    trace: &ForwardTrace,
    doc_id: usize,
    class: usize,
) -> Result<AttributionTensor> {
    check_class(params, class)?;
    let grads = params.logit_gradients(trace, class)?;
    Ok(AttributionTensor::new(
        doc_id,
        class,
        Method::Sa,
        0.0,
        grads.embedded,
        grads.pooled,
        trace.logits[class],
    ))
}

/// LRP with the model's configured stabilizer.
pub fn lrp(
    params: &ModelParams,
    doc_id: usize,
    token_ids: &[u32],
    class: usize,
) -> Result<AttributionTensor> {
    let trace = params.forward(token_ids, &Overrides::none())?;
    lrp_from_trace(params, &trace, doc_id, class, params.config.epsilon_lrp)
}

pub fn lrp_from_trace(
    params: &ModelParams,
    trace: &ForwardTrace,
    doc_id: usize,
    class: usize,
    epsilon: f64,
) -> Result<AttributionTensor> {
    Ok(lrp_detailed(params, trace, doc_id, class, epsilon)?.tensor)
}

pub fn attribute(
    params: &ModelParams,
    method: Method,
    doc_id: usize,
    token_ids: &[u32],
    class: usize,
) -> Result<AttributionTensor> {
    match method {
        Method::Lrp => lrp(params, doc_id, token_ids, class),
        Method::Sa => saliency(params, doc_id, token_ids, class),
    }
}

pub fn attribute_from_trace(
    params: &ModelParams,
    trace: &ForwardTrace,
    method: Method,
    doc_id: usize,
    class: usize,
) -> Result<AttributionTensor> {
    match method {
        Method::Lrp => lrp_from_trace(params, trace, doc_id, class, params.config.epsilon_lrp),
        Method::Sa => saliency_from_trace(params, trace, doc_id, class),
    }
}

/// Per-feature difference between the attributions for two classes of the
/// same document: `Σ_j (R^a_jk − R^b_jk)` per column, and the filter score
/// difference per filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionDiff {
    pub doc_id: usize,
    pub method: Method,
    pub class_a: usize,
    pub class_b: usize,
    pub column_diffs: Vec<f64>,
    pub filter_diffs: Vec<f64>,
}

pub fn attribution_difference(
    a: &AttributionTensor,
    b: &AttributionTensor,
) -> Result<AttributionDiff> {
    if a.doc_id != b.doc_id {
        return Err(Error::AttributionMismatch(format!(
            "documents differ ({} vs {})",
            a.doc_id, b.doc_id
        )));
    }
    if a.method != b.method {
        return Err(Error::AttributionMismatch(format!(
            "methods differ ({} vs {})",
            a.method, b.method
        )));
    }
    if a.column_scores.len() != b.column_scores.len()
        || a.filter_scores.len() != b.filter_scores.len()
    {
        return Err(Error::AttributionMismatch("shapes differ".into()));
    }
    let sub = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p - q).collect();
    Ok(AttributionDiff {
        doc_id: a.doc_id,
        method: a.method,
        class_a: a.target_class,
        class_b: b.target_class,
        column_diffs: sub(&a.column_scores, &b.column_scores),
        filter_diffs: sub(&a.filter_scores, &b.filter_scores),
    })
}
