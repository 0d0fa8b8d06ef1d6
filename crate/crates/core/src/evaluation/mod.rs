//! Attribution quality measured by what happens when the features an
//! attribution ranks highest are taken away.
//!
//! * Word level: word scores weight the embeddings of a document's words;
//!   a better attribution gives document vectors that a downstream
//!   classifier separates more easily ([`weighted_embeddings`],
//!   [`downstream_classify`]).
//! * Document level: whole embedding columns are zeroed
//!   ([`column_removal_eval`]).
//! * N-gram level: pooled filter outputs are zeroed
//!   ([`filter_removal_eval`]).
//!
//! Rankings are computed once on the unperturbed model and removal is
//! cumulative: the top `m` features of that fixed ranking.

mod removal;
mod report;
mod words;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledDocument;
use crate::error::Result;
use crate::textcnn::{ModelParams, Overrides};

pub use removal::{
    column_removal_eval, filter_removal_eval, removal_curve, steering_eval,
    MisclassificationTable, PerturbationCurve, RemovalPolicy, RemovalSpec, SteeringMetric,
    SteeringRow,
};
pub use report::{emit_report, read_report, Report, DownstreamEntry, REPORT_SCHEMA_VERSION};
pub use words::{
    downstream_classify, embed_with_word_scores, weighted_embeddings, Classifier,
    LabeledVectors, WeightScheme, WeightedDocEmbedding,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// Embedding columns.
    Column,
    /// Pooled convolutional filters.
    Filter,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Column => "column",
            FeatureKind::Filter => "filter",
        }
    }

    /// Number of features of this kind in a model.
    pub fn count(self, params: &ModelParams) -> usize {
        match self {
            FeatureKind::Column => params.config.embed_dim,
            FeatureKind::Filter => params.config.pooled_len(),
        }
    }

    pub(crate) fn overrides(self, features: &[usize]) -> Overrides {
        match self {
            FeatureKind::Column => Overrides::columns(features.iter().copied()),
            FeatureKind::Filter => Overrides::filters(features.iter().copied()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankPolicy {
    /// Descending by signed score.
    Largest,
    /// Ascending by absolute score.
    SmallestAbs,
}

/// Feature indices ordered by `policy`; equal scores keep the lower index
/// first.
///
/// ```
/// use embedrel::evaluation::{rank_features, RankPolicy};
///
/// assert_eq!(rank_features(&[3.0, -5.0, 1.0], RankPolicy::Largest), vec![0, 2, 1]);
/// assert_eq!(rank_features(&[3.0, -5.0, 1.0], RankPolicy::SmallestAbs), vec![2, 0, 1]);
/// ```
pub fn rank_features(scores: &[f64], policy: RankPolicy) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    match policy {
        RankPolicy::Largest => order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a])),
        RankPolicy::SmallestAbs => {
            order.sort_by(|&a, &b| scores[a].abs().total_cmp(&scores[b].abs()))
        }
    }
    order
}

/// A named set of documents an evaluation runs over.
#[derive(Debug, Clone)]
pub struct DocSubset<'a> {
    pub description: String,
    /// Short identifier used in file names, e.g. `class0`.
    pub tag: String,
    pub docs: Vec<&'a LabeledDocument>,
}

impl<'a> DocSubset<'a> {
    pub fn new(
        description: impl Into<String>,
        tag: impl Into<String>,
        docs: Vec<&'a LabeledDocument>,
    ) -> Self {
        DocSubset {
            description: description.into(),
            tag: tag.into(),
            docs,
        }
    }

    /// Every document of a split.
    pub fn all(docs: impl IntoIterator<Item = &'a LabeledDocument>, split: &str) -> Self {
        DocSubset::new(format!("all {split} docs"), "all", docs.into_iter().collect())
    }

    /// Documents whose true label is `class`.
    pub fn with_label(
        docs: impl IntoIterator<Item = &'a LabeledDocument>,
        class: usize,
        split: &str,
    ) -> Self {
        DocSubset::new(
            format!("{split} docs with label {class}"),
            format!("class{class}"),
            docs.into_iter().filter(|d| d.label == class).collect(),
        )
    }

    /// Documents labelled `class` that the unperturbed model also predicts
    /// as `class`.
    pub fn correctly_classified(
        params: &ModelParams,
        docs: impl IntoIterator<Item = &'a LabeledDocument>,
        class: usize,
        split: &str,
    ) -> Result<Self> {
        let mut kept = Vec::new();
        for doc in docs {
            if doc.label == class && params.predict(&doc.token_ids)?.class == class {
                kept.push(doc);
            }
        }
        Ok(DocSubset::new(
            format!("{split} docs correctly classified as class {class}"),
            format!("correct{class}"),
            kept,
        ))
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}
