use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::{attribute, Method};
use crate::corpus::{LabeledDocument, PAD_ID};
use crate::error::{Error, Result};
use crate::tensor::{argmax, softmax};
use crate::textcnn::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightScheme {
    /// Plain average of the word embeddings.
    #[serde(rename = "w0")]
    W0,
    #[serde(rename = "wLRP")]
    Lrp,
    #[serde(rename = "wSA")]
    Sa,
}

impl WeightScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightScheme::W0 => "w0",
            WeightScheme::Lrp => "wLRP",
            WeightScheme::Sa => "wSA",
        }
    }

    pub fn method(self) -> Option<Method> {
        match self {
            WeightScheme::W0 => None,
            WeightScheme::Lrp => Some(Method::Lrp),
            WeightScheme::Sa => Some(Method::Sa),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDocEmbedding {
    pub doc_id: usize,
    pub scheme: WeightScheme,
    pub vector: Vec<f64>,
}

/// `(1/L_eff) · Σ_j s_j · e(w_j)` over the non-PAD positions, with
/// `s_j = 1` when no scores are given. A document made only of padding maps
/// to the zero vector.
pub fn embed_with_word_scores(
    params: &ModelParams,
    token_ids: &[u32],
    word_scores: Option<&[f64]>,
) -> Vec<f64> {
    let d = params.config.embed_dim;
    let mut vector = vec![0.0; d];
    let mut effective = 0usize;
    for (j, &id) in token_ids.iter().enumerate() {
        if id == PAD_ID {
            continue;
        }
        effective += 1;
        let weight = word_scores.map_or(1.0, |s| s[j]);
        for (v, &e) in vector.iter_mut().zip(params.embedding.row(id as usize)) {
            *v += weight * e;
        }
    }
    if effective > 0 {
        let n = effective as f64;
        for v in &mut vector {
            *v /= n;
        }
    }
    vector
}

/// Document vectors under `scheme`. Attribution weights are taken with
/// respect to each document's true label.
pub fn weighted_embeddings<'a>(
    params: &ModelParams,
    docs: impl IntoIterator<Item = &'a LabeledDocument>,
    scheme: WeightScheme,
) -> Result<Vec<WeightedDocEmbedding>> {
    docs.into_iter()
        .map(|doc| {
            let vector = match scheme.method() {
                None => embed_with_word_scores(params, &doc.token_ids, None),
                Some(method) => {
                    let a = attribute(params, method, doc.doc_id, &doc.token_ids, doc.label)?;
                    embed_with_word_scores(params, &doc.token_ids, Some(&a.word_scores))
                }
            };
            Ok(WeightedDocEmbedding {
                doc_id: doc.doc_id,
                scheme,
                vector,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classifier {
    /// Euclidean k-nearest neighbours with majority vote.
    Knn { k: usize },
    /// Multinomial logistic regression on standardized features, trained by
    /// full-batch gradient descent.
    Linear {
        epochs: usize,
        learning_rate: f64,
        seed: u64,
    },
}

impl Classifier {
    pub fn knn(k: usize) -> Self {
        Classifier::Knn { k }
    }

    pub fn linear(seed: u64) -> Self {
        Classifier::Linear {
            epochs: 300,
            learning_rate: 0.5,
            seed,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Classifier::Knn { k } => format!("knn{k}"),
            Classifier::Linear { .. } => "linear".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledVectors {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl LabeledVectors {
    /// Pairs embeddings with the labels of the documents they came from.
    /// Both sequences must be in the same order.
    pub fn from_embeddings<'a>(
        embeddings: &[WeightedDocEmbedding],
        docs: impl IntoIterator<Item = &'a LabeledDocument>,
    ) -> Result<Self> {
        let docs: Vec<&LabeledDocument> = docs.into_iter().collect();
        if docs.len() != embeddings.len() {
            return Err(Error::shape("documents", embeddings.len(), docs.len()));
        }
        for (e, d) in embeddings.iter().zip(&docs) {
            if e.doc_id != d.doc_id {
                return Err(Error::Evaluation(format!(
                    "embedding for doc {} paired with doc {}",
                    e.doc_id, d.doc_id
                )));
            }
        }
        Ok(LabeledVectors {
            vectors: embeddings.iter().map(|e| e.vector.clone()).collect(),
            labels: docs.iter().map(|d| d.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Trains `classifier` on `train` and returns its accuracy on `test`.
pub fn downstream_classify(
    train: &LabeledVectors,
    test: &LabeledVectors,
    num_classes: usize,
    classifier: Classifier,
) -> Result<f64> {
    if train.vectors.len() != train.labels.len() || test.vectors.len() != test.labels.len() {
        return Err(Error::Evaluation("vectors and labels differ in length".into()));
    }
    if test.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    if let Some(&c) = train.labels.iter().chain(&test.labels).find(|&&c| c >= num_classes) {
        return Err(Error::shape("label", format!("< {num_classes}"), c));
    }
    let mut present = vec![false; num_classes];
    for &c in &train.labels {
        present[c] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Evaluation(
            "training set needs at least two classes".into(),
        ));
    }
    let dim = train.vectors[0].len();
    if let Some(v) = train.vectors.iter().chain(&test.vectors).find(|v| v.len() != dim) {
        return Err(Error::shape("vector length", dim, v.len()));
    }

    let predictions = match classifier {
        Classifier::Knn { k } => {
            if k == 0 || k > train.len() {
                return Err(Error::Evaluation(format!(
                    "k = {k} but the training set has {} vectors",
                    train.len()
                )));
            }
            test.vectors
                .iter()
                .map(|x| knn_predict(train, x, k, num_classes))
                .collect::<Vec<_>>()
        }
        Classifier::Linear {
            epochs,
            learning_rate,
            seed,
        } => {
            let model = SoftmaxRegression::fit(train, num_classes, epochs, learning_rate, seed);
            test.vectors.iter().map(|x| model.predict(x)).collect()
        }
    };
    let correct = predictions
        .iter()
        .zip(&test.labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(correct as f64 / test.len() as f64)
}

fn knn_predict(train: &LabeledVectors, x: &[f64], k: usize, num_classes: usize) -> usize {
    let mut by_distance: Vec<(f64, usize)> = train
        .vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let d: f64 = v.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, i)
        })
        .collect();
    by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = vec![0usize; num_classes];
    for &(_, i) in &by_distance[..k] {
        votes[train.labels[i]] += 1;
    }
    let mut best = 0;
    for c in 1..num_classes {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    best
}

struct SoftmaxRegression {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `C × (D + 1)`, bias last.
    weights: Vec<Vec<f64>>,
}

impl SoftmaxRegression {
    fn fit(
        train: &LabeledVectors,
        num_classes: usize,
        epochs: usize,
        learning_rate: f64,
        seed: u64,
    ) -> Self {
        let n = train.len() as f64;
        let dim = train.vectors[0].len();
        let mut mean = vec![0.0; dim];
        for v in &train.vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x / n;
            }
        }
        let mut scale = vec![0.0; dim];
        for v in &train.vectors {
            for ((s, x), m) in scale.iter_mut().zip(v).zip(&mean) {
                *s += (x - m) * (x - m) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = SoftmaxRegression {
            mean,
            scale,
            weights: (0..num_classes)
                .map(|_| (0..=dim).map(|_| rng.gen_range(-0.01..0.01)).collect())
                .collect(),
        };
        let inputs: Vec<Vec<f64>> = train.vectors.iter().map(|v| model.standardize(v)).collect();
        let mut grad = vec![vec![0.0; dim + 1]; num_classes];
        for _ in 0..epochs {
            for g in &mut grad {
                g.fill(0.0);
            }
            for (x, &y) in inputs.iter().zip(&train.labels) {
                let probs = softmax(&model.logits(x));
                for (c, g) in grad.iter_mut().enumerate() {
                    let delta = probs[c] - if c == y { 1.0 } else { 0.0 };
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi += delta * xi;
                    }
                    g[dim] += delta;
                }
            }
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                for (wi, gi) in w.iter_mut().zip(g) {
                    *wi -= learning_rate * gi / n;
                }
            }
        }
        model
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    fn logits(&self, standardized: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| {
                let bias = w[w.len() - 1];
                bias + w.iter().zip(standardized).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(&self.standardize(x)))
    }
}
