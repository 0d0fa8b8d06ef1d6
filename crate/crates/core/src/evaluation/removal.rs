use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rank_features, DocSubset, FeatureKind, RankPolicy};
use crate::attribution::{attribute_from_trace, attribution_difference, AttributionTensor, Method};
use crate::corpus::LabeledDocument;
use crate::error::{Error, Result};
use crate::tensor::{argmax, softmax};
use crate::textcnn::{ForwardTrace, ModelParams, Overrides};

/// How the features to remove are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RemovalPolicy {
    /// Largest signed score for the document's true class.
    Largest,
    /// Smallest absolute score for the document's true class.
    SmallestAbs,
    /// Largest difference between the true class and `other`.
    Diff { other: usize },
    /// Uniformly random order, one permutation per document and seed.
    Random,
}

impl RemovalPolicy {
    /// Name used in file names and tables.
    pub fn slug(&self) -> String {
        match self {
            RemovalPolicy::Largest => "largest".into(),
            RemovalPolicy::SmallestAbs => "smallest_abs".into(),
            RemovalPolicy::Diff { other } => format!("diff{other}"),
            RemovalPolicy::Random => "random".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalSpec {
    pub kind: FeatureKind,
    /// Ignored by [`RemovalPolicy::Random`].
    pub method: Method,
    pub policy: RemovalPolicy,
    pub counts: Vec<usize>,
    /// Random-policy seeds; the curve is their average.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub feature_kind: FeatureKind,
    pub policy: RemovalPolicy,
    /// `lrp`, `sa`, or `rand` for the random policy.
    pub method: String,
    pub removal_counts: Vec<usize>,
    pub accuracy_at: Vec<f64>,
    pub doc_subset: String,
    pub subset_tag: String,
    pub subset_size: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Per seed, accuracy at each count (random policy only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_seed: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy_min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy_max: Option<Vec<f64>>,
}

impl PerturbationCurve {
    pub fn accuracy_for(&self, count: usize) -> Option<f64> {
        self.removal_counts
            .iter()
            .position(|&m| m == count)
            .map(|i| self.accuracy_at[i])
    }

    pub fn file_name(&self) -> String {
        format!(
            "curve_{}_{}_{}_{}.csv",
            self.feature_kind.as_str(),
            self.policy.slug(),
            self.method,
            self.subset_tag
        )
    }
}

fn check_counts(kind: FeatureKind, params: &ModelParams, counts: &[usize]) -> Result<()> {
    let available = kind.count(params);
    if let Some(&m) = counts.iter().find(|&&m| m > available) {
        let name = match kind {
            FeatureKind::Column => "embedding columns",
            FeatureKind::Filter => "filters",
        };
        return Err(Error::Evaluation(format!(
            "cannot remove {m} {name}; the model has {available}"
        )));
    }
    Ok(())
}

fn feature_scores(kind: FeatureKind, a: &AttributionTensor) -> &[f64] {
    match kind {
        FeatureKind::Column => &a.column_scores,
        FeatureKind::Filter => &a.filter_scores,
    }
}

/// Predicted class with the top `features` removed. Filter removal only
/// touches the dense layer, so the cached trace is reused.
fn predict_removed(
    params: &ModelParams,
    doc: &LabeledDocument,
    trace: &ForwardTrace,
    kind: FeatureKind,
    features: &[usize],
) -> Result<usize> {
    if features.is_empty() {
        return Ok(trace.predicted_class());
    }
    match kind {
        FeatureKind::Column => Ok(params
            .forward(&doc.token_ids, &kind.overrides(features))?
            .predicted_class()),
        FeatureKind::Filter => {
            let mut pooled = trace.pooled.clone();
            for &f in features {
                pooled[f] = 0.0;
            }
            Ok(argmax(&softmax(&params.dense_logits(&pooled))))
        }
    }
}

/// Ranking of one document's features under an attribution-based policy.
#[allow(clippy::too_many_arguments)]
fn ranking(
    params: &ModelParams,
    doc: &LabeledDocument,
    trace: &ForwardTrace,
    kind: FeatureKind,
    method: Method,
    class: usize,
    contrast: Option<usize>,
    policy: RankPolicy,
) -> Result<Vec<usize>> {
    let a = attribute_from_trace(params, trace, method, doc.doc_id, class)?;
    match contrast {
        None => Ok(rank_features(feature_scores(kind, &a), policy)),
        Some(other) => {
            let b = attribute_from_trace(params, trace, method, doc.doc_id, other)?;
            let diff = attribution_difference(&a, &b)?;
            let scores = match kind {
                FeatureKind::Column => &diff.column_diffs,
                FeatureKind::Filter => &diff.filter_diffs,
            };
            Ok(rank_features(scores, policy))
        }
    }
}

/// Accuracy on `subset` as the top-`m` features are removed, for every `m`
/// in `spec.counts`.
pub fn removal_curve(
    params: &ModelParams,
    subset: &DocSubset<'_>,
    spec: &RemovalSpec,
) -> Result<PerturbationCurve> {
    let kind = spec.kind;
    check_counts(kind, params, &spec.counts)?;
    if subset.is_empty() {
        return Err(Error::Evaluation(format!(
            "document subset '{}' is empty",
            subset.description
        )));
    }
    if let RemovalPolicy::Diff { other } = spec.policy {
        if other >= params.config.num_classes {
            return Err(Error::shape(
                "contrast class",
                format!("< {}", params.config.num_classes),
                other,
            ));
        }
    }
    let n = subset.len();
    let counts = &spec.counts;
    let mut curve = PerturbationCurve {
        feature_kind: kind,
        policy: spec.policy,
        method: match spec.policy {
            RemovalPolicy::Random => "rand".into(),
            _ => spec.method.as_str().into(),
        },
        removal_counts: counts.clone(),
        accuracy_at: Vec::with_capacity(counts.len()),
        doc_subset: subset.description.clone(),
        subset_tag: subset.tag.clone(),
        subset_size: n,
        seeds: Vec::new(),
        per_seed: Vec::new(),
        accuracy_min: None,
        accuracy_max: None,
    };

    let traces = subset
        .docs
        .iter()
        .map(|doc| params.forward(&doc.token_ids, &Overrides::none()))
        .collect::<Result<Vec<_>>>()?;

    if spec.policy == RemovalPolicy::Random {
        if spec.seeds.is_empty() {
            return Err(Error::Evaluation("random policy needs at least one seed".into()));
        }
        let features = kind.count(params);
        let mut total = vec![0usize; counts.len()];
        let mut per_seed = Vec::with_capacity(spec.seeds.len());
        for &seed in &spec.seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut correct = vec![0usize; counts.len()];
            for (doc, trace) in subset.docs.iter().zip(&traces) {
                let mut order: Vec<usize> = (0..features).collect();
                order.shuffle(&mut rng);
                for (i, &m) in counts.iter().enumerate() {
                    if predict_removed(params, doc, trace, kind, &order[..m])? == doc.label {
                        correct[i] += 1;
                    }
                }
            }
            for (t, c) in total.iter_mut().zip(&correct) {
                *t += c;
            }
            per_seed.push(correct.iter().map(|&c| c as f64 / n as f64).collect::<Vec<_>>());
        }
        let runs = spec.seeds.len();
        curve.accuracy_at = total
            .iter()
            .map(|&t| t as f64 / (runs * n) as f64)
            .collect();
        curve.accuracy_min = Some(
            (0..counts.len())
                .map(|i| per_seed.iter().map(|s| s[i]).fold(f64::INFINITY, f64::min))
                .collect(),
        );
        curve.accuracy_max = Some(
            (0..counts.len())
                .map(|i| per_seed.iter().map(|s| s[i]).fold(f64::NEG_INFINITY, f64::max))
                .collect(),
        );
        curve.per_seed = per_seed;
        curve.seeds = spec.seeds.clone();
        return Ok(curve);
    }

    let (policy, contrast) = match spec.policy {
        RemovalPolicy::Largest => (RankPolicy::Largest, None),
        RemovalPolicy::SmallestAbs => (RankPolicy::SmallestAbs, None),
        RemovalPolicy::Diff { other } => (RankPolicy::Largest, Some(other)),
        RemovalPolicy::Random => unreachable!(),
    };
    let mut correct = vec![0usize; counts.len()];
    for (doc, trace) in subset.docs.iter().zip(&traces) {
        let order = ranking(
            params, doc, trace, kind, spec.method, doc.label, contrast, policy,
        )?;
        for (i, &m) in counts.iter().enumerate() {
            if predict_removed(params, doc, trace, kind, &order[..m])? == doc.label {
                correct[i] += 1;
            }
        }
    }
    curve.accuracy_at = correct.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(curve)
}

/// Zeroes embedding columns.
pub fn column_removal_eval(
    params: &ModelParams,
    subset: &DocSubset<'_>,
    method: Method,
    policy: RemovalPolicy,
    counts: &[usize],
    seeds: &[u64],
) -> Result<PerturbationCurve> {
    removal_curve(
        params,
        subset,
        &RemovalSpec {
            kind: FeatureKind::Column,
            method,
            policy,
            counts: counts.to_vec(),
            seeds: seeds.to_vec(),
        },
    )
}

/// Zeroes pooled filter outputs.
pub fn filter_removal_eval(
    params: &ModelParams,
    subset: &DocSubset<'_>,
    method: Method,
    policy: RemovalPolicy,
    counts: &[usize],
    seeds: &[u64],
) -> Result<PerturbationCurve> {
    removal_curve(
        params,
        subset,
        &RemovalSpec {
            kind: FeatureKind::Filter,
            method,
            policy,
            counts: counts.to_vec(),
            seeds: seeds.to_vec(),
        },
    )
}

/// Ranking used to steer documents of class `c` away from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SteeringMetric {
    /// Largest attribution for `c`.
    AttrC,
    /// Largest `attr_c − attr_other`.
    Diff { other: usize },
}

impl SteeringMetric {
    pub fn label(&self, class: usize) -> String {
        match self {
            SteeringMetric::AttrC => format!("attr_{class}"),
            SteeringMetric::Diff { other } => format!("attr_{class}-attr_{other}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SteeringRow {
    pub predicted_class: usize,
    pub removal_count: usize,
    pub metric: String,
    pub method: Method,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisclassificationTable {
    pub feature_kind: FeatureKind,
    pub class: usize,
    pub doc_subset: String,
    pub subset_size: usize,
    pub removal_counts: Vec<usize>,
    pub metrics: Vec<String>,
    pub rows: Vec<SteeringRow>,
}

impl MisclassificationTable {
    /// Documents predicted as `predicted` after removing `m` features.
    pub fn count(&self, method: Method, metric: &str, m: usize, predicted: usize) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| {
                r.method == method
                    && r.metric == metric
                    && r.removal_count == m
                    && r.predicted_class == predicted
            })
            .map(|r| r.count)
    }

    pub fn file_name(&self, metric: &str) -> String {
        format!(
            "steering_{}_{}_{}.csv",
            self.feature_kind.as_str(),
            self.class,
            metric
        )
    }
}

/// Removes the top-ranked features of documents the model correctly
/// assigns to `class` and counts where their predictions go.
pub fn steering_eval(
    params: &ModelParams,
    subset: &DocSubset<'_>,
    class: usize,
    kind: FeatureKind,
    methods: &[Method],
    metrics: &[SteeringMetric],
    counts: &[usize],
) -> Result<MisclassificationTable> {
    let num_classes = params.config.num_classes;
    if class >= num_classes {
        return Err(Error::shape("class", format!("< {num_classes}"), class));
    }
    if subset.is_empty() {
        return Err(Error::Evaluation(format!(
            "no documents correctly classified as class {class}"
        )));
    }
    check_counts(kind, params, counts)?;
    for metric in metrics {
        if let SteeringMetric::Diff { other } = metric {
            if *other >= num_classes {
                return Err(Error::shape("contrast class", format!("< {num_classes}"), other));
            }
        }
    }
    let traces = subset
        .docs
        .iter()
        .map(|doc| params.forward(&doc.token_ids, &Overrides::none()))
        .collect::<Result<Vec<_>>>()?;
    if let Some(doc) = subset
        .docs
        .iter()
        .zip(&traces)
        .find(|(_, t)| t.predicted_class() != class)
        .map(|(d, _)| d)
    {
        return Err(Error::Evaluation(format!(
            "doc {} is not predicted as class {class}",
            doc.doc_id
        )));
    }

    let mut rows = Vec::new();
    for &method in methods {
        for metric in metrics {
            let contrast = match metric {
                SteeringMetric::AttrC => None,
                SteeringMetric::Diff { other } => Some(*other),
            };
            let mut predicted = vec![vec![0usize; num_classes]; counts.len()];
            for (doc, trace) in subset.docs.iter().zip(&traces) {
                let order = ranking(
                    params,
                    doc,
                    trace,
                    kind,
                    method,
                    class,
                    contrast,
                    RankPolicy::Largest,
                )?;
                for (i, &m) in counts.iter().enumerate() {
                    predicted[i][predict_removed(params, doc, trace, kind, &order[..m])?] += 1;
                }
            }
            let label = metric.label(class);
            for (i, &m) in counts.iter().enumerate() {
                for (c, &count) in predicted[i].iter().enumerate() {
                    rows.push(SteeringRow {
                        predicted_class: c,
                        removal_count: m,
                        metric: label.clone(),
                        method,
                        count,
                    });
                }
            }
        }
    }
    Ok(MisclassificationTable {
        feature_kind: kind,
        class,
        doc_subset: subset.description.clone(),
        subset_size: subset.len(),
        removal_counts: counts.to_vec(),
        metrics: metrics.iter().map(|m| m.label(class)).collect(),
        rows,
    })
}
