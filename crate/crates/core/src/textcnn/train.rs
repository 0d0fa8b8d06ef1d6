use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, ModelParams, Optimizer, Overrides};
use crate::corpus::{Corpus, LabeledDocument};
use crate::error::{Error, Result};

/// One line of the training log, mirroring the usual
/// epochs / loss / accuracy / validation columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for entry in &self.epochs {
            serde_json::to_writer(&mut out, entry)?;
            out.push(b'\n');
        }
        std::fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let epochs = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(TrainLog { epochs })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
}

/// Mean cross-entropy and accuracy of `params` on `docs`.
pub fn evaluate<'a>(
    params: &ModelParams,
    docs: impl IntoIterator<Item = &'a LabeledDocument>,
) -> Result<Evaluation> {
    let mut loss = 0.0;
    let mut correct = 0;
    let mut total = 0;
    for doc in docs {
        let trace = params.forward(&doc.token_ids, &Overrides::none())?;
        loss -= trace.probs[doc.label].max(f64::MIN_POSITIVE).ln();
        if trace.predicted_class() == doc.label {
            correct += 1;
        }
        total += 1;
    }
    Ok(Evaluation {
        loss: if total > 0 { loss / total as f64 } else { f64::NAN },
        accuracy: if total > 0 {
            correct as f64 / total as f64
        } else {
            f64::NAN
        },
        correct,
        total,
    })
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

/// Minibatch training on softmax cross-entropy. Training metrics are
/// running means over the epoch's batches; validation metrics are computed
/// on the parameters at the end of each epoch. Fully deterministic for a
/// given seed.
pub fn train(corpus: &Corpus, config: &ModelConfig) -> Result<(ModelParams, TrainLog)> {
    config.validate()?;
    if corpus.num_classes != config.num_classes {
        return Err(Error::Config(format!(
            "corpus has {} classes, model expects {}",
            corpus.num_classes, config.num_classes
        )));
    }
    if corpus.vocab.len() != config.vocab_size {
        return Err(Error::shape(
            "vocab_size",
            config.vocab_size,
            corpus.vocab.len(),
        ));
    }
    if corpus.seq_len != config.seq_len {
        return Err(Error::shape("seq_len", config.seq_len, corpus.seq_len));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(config, &mut rng)?;
    let mut grads = params.zeros_like();
    let mut adam = match config.optimizer {
        Optimizer::Adam { .. } => Some(AdamState {
            m: params.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
            v: params.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
            step: 0,
        }),
        Optimizer::Sgd => None,
    };

    let mut order = corpus.train.clone();
    let mut log = TrainLog::default();
    let mut dlogits = vec![0.0; config.num_classes];
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            for t in grads.tensors_mut() {
                t.fill(0.0);
            }
            let mut batch_loss = 0.0;
            for &doc_index in batch {
                let doc = &corpus.documents[doc_index];
                let trace = params.forward(&doc.token_ids, &Overrides::none())?;
                batch_loss -= trace.probs[doc.label].ln();
                if trace.predicted_class() == doc.label {
                    correct += 1;
                }
                for (c, d) in dlogits.iter_mut().enumerate() {
                    *d = trace.probs[c] - if c == doc.label { 1.0 } else { 0.0 };
                }
                let input_grad = params.backward(&trace, &dlogits, Some(&mut grads));
                for (j, &id) in doc.token_ids.iter().enumerate() {
                    for (g, &d) in grads
                        .embedding
                        .row_mut(id as usize)
                        .iter_mut()
                        .zip(input_grad.embedded.row(j))
                    {
                        *g += d;
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_index + 1,
                });
            }
            loss_sum += batch_loss;
            apply_update(
                &mut params,
                &grads,
                config,
                batch.len() as f64,
                adam.as_mut(),
            );
        }

        let n = order.len().max(1) as f64;
        let validation = if corpus.validation.is_empty() {
            None
        } else {
            Some(evaluate(&params, corpus.validation_docs())?)
        };
        log.epochs.push(EpochLog {
            epoch,
            loss: loss_sum / n,
            accuracy: correct as f64 / n,
            val_loss: validation.map(|v| v.loss),
            val_accuracy: validation.map(|v| v.accuracy),
        });
    }
    Ok((params, log))
}

fn apply_update(
    params: &mut ModelParams,
    grads: &ModelParams,
    config: &ModelConfig,
    batch_len: f64,
    adam: Option<&mut AdamState>,
) {
    let lr = config.learning_rate;
    match (config.optimizer, adam) {
        (Optimizer::Adam { beta1, beta2, eps }, Some(state)) => {
            state.step += 1;
            let correction1 = 1.0 - beta1.powi(state.step);
            let correction2 = 1.0 - beta2.powi(state.step);
            for (((p, g), m), v) in params
                .tensors_mut()
                .into_iter()
                .zip(grads.tensors())
                .zip(&mut state.m)
                .zip(&mut state.v)
            {
                for i in 0..p.len() {
                    let gi = g[i] / batch_len;
                    m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                    let m_hat = m[i] / correction1;
                    let v_hat = v[i] / correction2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        _ => {
            for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                for (pi, gi) in p.iter_mut().zip(g) {
                    *pi -= lr * (gi / batch_len);
                }
            }
        }
    }
}
