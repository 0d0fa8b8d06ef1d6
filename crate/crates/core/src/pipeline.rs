//! The full evaluation run used by the command line and the acceptance
//! suite: word weighting, column and filter removal, and steering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::attribution::Method;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::evaluation::{
    downstream_classify, removal_curve, steering_eval, weighted_embeddings, Classifier,
    DocSubset, DownstreamEntry, FeatureKind, LabeledVectors, MisclassificationTable,
    PerturbationCurve, RemovalPolicy, RemovalSpec, Report, SteeringMetric, WeightScheme,
};
use crate::textcnn::ModelParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub methods: Vec<Method>,
    pub column_counts: Vec<usize>,
    pub filter_counts: Vec<usize>,
    pub random_seeds: Vec<u64>,
    /// Add `diff(c, c')` curves for every other class `c'`.
    pub diff_curves: bool,
    pub knn_k: usize,
    pub classifier_seed: u64,
    /// Class whose correctly classified documents are steered away.
    pub steer_class: usize,
    pub steer_column_counts: Vec<usize>,
    pub steer_filter_counts: Vec<usize>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            methods: vec![Method::Lrp, Method::Sa],
            column_counts: vec![0, 8, 16, 24],
            filter_counts: vec![0, 2, 4, 6],
            random_seeds: vec![0, 1, 2, 3, 4],
            diff_curves: true,
            knn_k: 5,
            classifier_seed: 0,
            steer_class: 0,
            steer_column_counts: vec![0, 4, 8, 12, 16],
            steer_filter_counts: vec![0, 2, 4, 6, 8],
        }
    }
}

impl EvalSettings {
    pub fn counts(&self, kind: FeatureKind) -> &[usize] {
        match kind {
            FeatureKind::Column => &self.column_counts,
            FeatureKind::Filter => &self.filter_counts,
        }
    }

    pub fn steer_counts(&self, kind: FeatureKind) -> &[usize] {
        match kind {
            FeatureKind::Column => &self.steer_column_counts,
            FeatureKind::Filter => &self.steer_filter_counts,
        }
    }
}

/// Downstream accuracy of each weighting scheme: classifiers are fit on
/// the training split's document vectors and scored on the validation
/// split's.
pub fn eval_words(
    params: &ModelParams,
    corpus: &Corpus,
    settings: &EvalSettings,
) -> Result<Vec<DownstreamEntry>> {
    let mut schemes = vec![WeightScheme::W0];
    for m in &settings.methods {
        schemes.push(match m {
            Method::Lrp => WeightScheme::Lrp,
            Method::Sa => WeightScheme::Sa,
        });
    }
    let classifiers = [
        Classifier::knn(settings.knn_k),
        Classifier::linear(settings.classifier_seed),
    ];
    let mut entries = Vec::new();
    for scheme in schemes {
        let train_vectors = weighted_embeddings(params, corpus.train_docs(), scheme)?;
        let test_vectors = weighted_embeddings(params, corpus.validation_docs(), scheme)?;
        let train = LabeledVectors::from_embeddings(&train_vectors, corpus.train_docs())?;
        let test = LabeledVectors::from_embeddings(&test_vectors, corpus.validation_docs())?;
        for classifier in classifiers {
            let accuracy = downstream_classify(&train, &test, corpus.num_classes, classifier)?;
            entries.push(DownstreamEntry {
                classifier: classifier.name(),
                scheme,
                accuracy,
                train_size: train.len(),
                test_size: test.len(),
            });
        }
    }
    Ok(entries)
}

/// Removal curves on the validation split: first over the whole split
/// (largest, smallest-absolute and random), then per class with class
/// differences added if enabled.
pub fn eval_removal(
    params: &ModelParams,
    corpus: &Corpus,
    kind: FeatureKind,
    settings: &EvalSettings,
) -> Result<Vec<PerturbationCurve>> {
    let mut curves = Vec::new();
    let whole = DocSubset::all(corpus.validation_docs(), "validation");
    if whole.is_empty() {
        return Err(Error::Evaluation("the validation split is empty".into()));
    }
    for spec in removal_specs(kind, settings, None) {
        curves.push(removal_curve(params, &whole, &spec)?);
    }
    for class in 0..corpus.num_classes {
        let subset = DocSubset::with_label(corpus.validation_docs(), class, "validation");
        if subset.is_empty() {
            continue;
        }
        let others: Vec<usize> = (0..corpus.num_classes).filter(|&o| o != class).collect();
        for spec in removal_specs(kind, settings, Some(&others)) {
            curves.push(removal_curve(params, &subset, &spec)?);
        }
    }
    Ok(curves)
}

fn removal_specs(
    kind: FeatureKind,
    settings: &EvalSettings,
    contrasts: Option<&[usize]>,
) -> Vec<RemovalSpec> {
    let counts = settings.counts(kind).to_vec();
    let mut specs = Vec::new();
    for &method in &settings.methods {
        let mut policies = vec![RemovalPolicy::Largest, RemovalPolicy::SmallestAbs];
        if let (true, Some(others)) = (settings.diff_curves, contrasts) {
            policies.extend(others.iter().map(|&other| RemovalPolicy::Diff { other }));
        }
        specs.extend(policies.into_iter().map(|policy| RemovalSpec {
            kind,
            method,
            policy,
            counts: counts.clone(),
            seeds: Vec::new(),
        }));
    }
    specs.push(RemovalSpec {
        kind,
        method: Method::Lrp,
        policy: RemovalPolicy::Random,
        counts,
        seeds: settings.random_seeds.clone(),
    });
    specs
}

/// Steers validation documents correctly classified as
/// `settings.steer_class` toward every other class.
pub fn eval_steering(
    params: &ModelParams,
    corpus: &Corpus,
    kind: FeatureKind,
    settings: &EvalSettings,
) -> Result<MisclassificationTable> {
    let class = settings.steer_class;
    if class >= corpus.num_classes {
        return Err(Error::Config(format!(
            "steer_class {class} but the corpus has {} classes",
            corpus.num_classes
        )));
    }
    let subset = DocSubset::correctly_classified(params, corpus.validation_docs(), class, "validation")?;
    let mut metrics = vec![SteeringMetric::AttrC];
    metrics.extend(
        (0..corpus.num_classes)
            .filter(|&o| o != class)
            .map(|other| SteeringMetric::Diff { other }),
    );
    steering_eval(
        params,
        &subset,
        class,
        kind,
        &settings.methods,
        &metrics,
        settings.steer_counts(kind),
    )
}

pub const REPORT_NOTES: [&str; 4] = [
    "Attributions explain the pre-softmax logit of the target class.",
    "Word-weighted document vectors use attributions for the true label on both splits, so the weighted schemes see label information at test time.",
    "Embedding rows of the padding token are trained like any other row.",
    "Random-policy curves average integer hit counts over all seeds; min and max give the per-seed band.",
];

/// Report metadata: model config, evaluation settings and corpus shape.
pub fn report_metadata(
    params: &ModelParams,
    corpus: &Corpus,
    settings: &EvalSettings,
) -> Result<BTreeMap<String, Value>> {
    let mut metadata = BTreeMap::new();
    metadata.insert("model".into(), serde_json::to_value(&params.config)?);
    metadata.insert("settings".into(), serde_json::to_value(settings)?);
    metadata.insert(
        "corpus".into(),
        serde_json::json!({
            "documents": corpus.documents.len(),
            "train": corpus.train.len(),
            "validation": corpus.validation.len(),
            "class_names": corpus.class_names,
            "vocab_size": corpus.vocab.len(),
            "seq_len": corpus.seq_len,
        }),
    );
    Ok(metadata)
}

/// A report skeleton with metadata and notes but no results.
pub fn empty_report(params: &ModelParams, corpus: &Corpus, settings: &EvalSettings) -> Result<Report> {
    Ok(Report {
        metadata: report_metadata(params, corpus, settings)?,
        notes: REPORT_NOTES.iter().map(|s| s.to_string()).collect(),
        ..Report::default()
    })
}

/// Everything: word weighting, both removal kinds and steering.
pub fn run_all(params: &ModelParams, corpus: &Corpus, settings: &EvalSettings) -> Result<Report> {
    let mut report = empty_report(params, corpus, settings)?;
    report.downstream = eval_words(params, corpus, settings)?;
    for kind in [FeatureKind::Column, FeatureKind::Filter] {
        report.curves.extend(eval_removal(params, corpus, kind, settings)?);
    }
    for kind in [FeatureKind::Column, FeatureKind::Filter] {
        report.tables.push(eval_steering(params, corpus, kind, settings)?);
    }
    Ok(report)
}
