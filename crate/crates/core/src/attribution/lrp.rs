use serde::{Deserialize, Serialize};

use super::{check_class, AttributionTensor, Method};
use crate::corpus::LabeledDocument;
use crate::error::Result;
use crate::tensor::Matrix;
use crate::textcnn::{ForwardTrace, ModelParams, Overrides};

/// Bookkeeping for one application of the ε-rule to a single unit.
///
/// For a unit with pre-activation `z = Σ_j x_j w_j + b` and incoming
/// relevance `R`, inputs receive `x_j w_j · R / (z + ε·sign(z))`. What they
/// do not receive is split exactly between the bias and the stabilizer:
/// `R − Σ_j R_j = bias_absorbed + stabilizer_absorbed`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RuleAccount {
    pub z: f64,
    pub bias_absorbed: f64,
    pub stabilizer_absorbed: f64,
}

/// `z + ε·sign(z)` with `sign(0) = +1`.
fn stabilize(z: f64, epsilon: f64) -> f64 {
    if z >= 0.0 {
        z + epsilon
    } else {
        z - epsilon
    }
}

fn epsilon_rule_into(
    inputs: &[f64],
    weights: impl Iterator<Item = f64>,
    bias: f64,
    relevance: f64,
    epsilon: f64,
    out: &mut [f64],
) -> RuleAccount {
    let contributions = inputs.iter().zip(weights).map(|(x, w)| x * w);
    let mut z = bias;
    let mut buffer = Vec::with_capacity(inputs.len());
    for c in contributions {
        z += c;
        buffer.push(c);
    }
    let denominator = stabilize(z, epsilon);
    if denominator == 0.0 || relevance == 0.0 {
        return RuleAccount {
            z,
            bias_absorbed: 0.0,
            stabilizer_absorbed: relevance,
        };
    }
    let message = relevance / denominator;
    for (o, c) in out.iter_mut().zip(buffer) {
        *o += c * message;
    }
    RuleAccount {
        z,
        bias_absorbed: message * bias,
        stabilizer_absorbed: message * (denominator - z),
    }
}

/// The ε-rule for one linear unit: the relevance each input receives.
///
/// ```
/// use embedrel::attribution::epsilon_rule;
///
/// let (shares, _) = epsilon_rule(&[2.0, 0.0], &[0.5, 0.5], 0.0, 1.0, 0.0);
/// assert_eq!(shares, vec![1.0, 0.0]);
/// ```
pub fn epsilon_rule(
    inputs: &[f64],
    weights: &[f64],
    bias: f64,
    relevance: f64,
    epsilon: f64,
) -> (Vec<f64>, RuleAccount) {
    let mut out = vec![0.0; inputs.len()];
    let account = epsilon_rule_into(
        inputs,
        weights.iter().copied(),
        bias,
        relevance,
        epsilon,
        &mut out,
    );
    (out, account)
}

/// An LRP pass with its per-layer checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct LrpPass {
    pub tensor: AttributionTensor,
    /// Relevance at the pooled layer (equals `tensor.filter_scores`).
    pub pooled_relevance: Vec<f64>,
    /// Relevance absorbed by the dense bias / stabilizer.
    pub dense_account: RuleAccount,
    /// Summed over all winning conv windows.
    pub conv_bias_absorbed: f64,
    pub conv_stabilizer_absorbed: f64,
}

/// Runs LRP for `class` and keeps the accounting of every layer.
pub fn lrp_detailed(
    params: &ModelParams,
    trace: &ForwardTrace,
    doc_id: usize,
    class: usize,
    epsilon: f64,
) -> Result<LrpPass> {
    check_class(params, class)?;
    let cfg = &params.config;
    let logit = trace.logits[class];

    let mut pooled_relevance = vec![0.0; cfg.pooled_len()];
    let dense_account = epsilon_rule_into(
        &trace.pooled,
        (0..cfg.pooled_len()).map(|i| params.dense_weights.get(i, class)),
        params.dense_bias[class],
        logit,
        epsilon,
        &mut pooled_relevance,
    );

    let mut relevance = Matrix::zeros(cfg.seq_len, cfg.embed_dim);
    let mut conv_bias_absorbed = 0.0;
    let mut conv_stabilizer_absorbed = 0.0;
    for (b, (block, block_trace)) in params.conv.iter().zip(&trace.blocks).enumerate() {
        for (f, &p) in block_trace.argmax.iter().enumerate() {
            let incoming = pooled_relevance[b * cfg.filters_per_width + f];
            // A filter whose maximum is not positive carries no relevance.
            if incoming == 0.0 || block_trace.post.get(p, f) <= 0.0 {
                continue;
            }
            let window = trace.embedded.rows_slice(p, block.width);
            let account = epsilon_rule_into(
                window,
                block.weights.row(f).iter().copied(),
                block.bias[f],
                incoming,
                epsilon,
                relevance.rows_slice_mut(p, block.width),
            );
            conv_bias_absorbed += account.bias_absorbed;
            conv_stabilizer_absorbed += account.stabilizer_absorbed;
        }
    }

    let tensor = AttributionTensor::new(
        doc_id,
        class,
        Method::Lrp,
        epsilon,
        relevance,
        pooled_relevance.clone(),
        logit,
    );
    Ok(LrpPass {
        tensor,
        pooled_relevance,
        dense_account,
        conv_bias_absorbed,
        conv_stabilizer_absorbed,
    })
}

/// Which class each document is explained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassPolicy {
    TrueLabel,
    Predicted,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationEntry {
    pub doc_id: usize,
    pub class: usize,
    pub logit: f64,
    pub pooled_total: f64,
    pub embedded_total: f64,
    /// `|Σ R_pooled − f_c|`
    pub pooled_residual: f64,
    /// `|Σ R_embedded − f_c|`
    pub embedded_residual: f64,
    /// Relevance absorbed by bias terms across both layers.
    pub bias_absorbed: f64,
    /// Relevance absorbed by the ε stabilizer across both layers.
    pub stabilizer_absorbed: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub bias_free: bool,
    pub entries: Vec<ConservationEntry>,
}

impl ConservationReport {
    pub fn flagged(&self) -> impl Iterator<Item = &ConservationEntry> {
        self.entries.iter().filter(|e| e.flagged)
    }

    pub fn max_relative_residual(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.pooled_residual.max(e.embedded_residual) / e.logit.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

/// Checks `Σ R = f_c(x)` at the pooled and embedded layers.
///
/// For a bias-free model a document is flagged when either residual exceeds
/// `tolerance · max(1, |f_c|)`. With biases the residual is expected (the
/// biases absorb relevance) and is only flagged when it is not explained by
/// the absorbed amounts.
pub fn conservation_report<'a>(
    params: &ModelParams,
    docs: impl IntoIterator<Item = &'a LabeledDocument>,
    policy: ClassPolicy,
    epsilon: f64,
    tolerance: f64,
) -> Result<ConservationReport> {
    let bias_free = !params.config.use_bias;
    let mut entries = Vec::new();
    for doc in docs {
        let trace = params.forward(&doc.token_ids, &Overrides::none())?;
        let class = match policy {
            ClassPolicy::TrueLabel => doc.label,
            ClassPolicy::Predicted => trace.predicted_class(),
            ClassPolicy::Fixed(c) => c,
        };
        let pass = lrp_detailed(params, &trace, doc.doc_id, class, epsilon)?;
        let logit = pass.tensor.logit_value;
        let pooled_total: f64 = pass.pooled_relevance.iter().sum();
        let embedded_total = pass.tensor.total();
        let bias_absorbed = pass.dense_account.bias_absorbed + pass.conv_bias_absorbed;
        let stabilizer_absorbed =
            pass.dense_account.stabilizer_absorbed + pass.conv_stabilizer_absorbed;
        let pooled_residual = (pooled_total - logit).abs();
        let embedded_residual = (embedded_total - logit).abs();
        let bound = tolerance * logit.abs().max(1.0);
        let flagged = if bias_free {
            pooled_residual > bound || embedded_residual > bound
        } else {
            (logit - embedded_total - bias_absorbed - stabilizer_absorbed).abs() > bound
        };
        entries.push(ConservationEntry {
            doc_id: doc.doc_id,
            class,
            logit,
            pooled_total,
            embedded_total,
            pooled_residual,
            embedded_residual,
            bias_absorbed,
            stabilizer_absorbed,
            flagged,
        });
    }
    Ok(ConservationReport {
        epsilon,
        tolerance,
        bias_free,
        entries,
    })
}
