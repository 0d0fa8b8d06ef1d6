use serde::{Deserialize, Serialize};

use super::AttributionTensor;
use crate::corpus::{LabeledDocument, Vocabulary, PAD_ID};

/// One highlighted word. `intensity` is `|word_score|` relative to the
/// largest absolute score in the document; `sign` is -1, 0 or 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    pub position: usize,
    pub token: String,
    pub word_score: f64,
    pub intensity: f64,
    pub sign: i8,
}

/// Word-level highlights for a document, PAD positions omitted. Positive
/// scores support the target class (rendered red), negative ones oppose it
/// (blue).
pub fn word_highlights(
    attribution: &AttributionTensor,
    doc: &LabeledDocument,
    vocab: &Vocabulary,
) -> Vec<Highlight> {
    let surface = doc.tokens();
    let kept: Vec<usize> = doc
        .token_ids
        .iter()
        .enumerate()
        .filter(|(_, &id)| id != PAD_ID)
        .map(|(j, _)| j)
        .collect();
    let max_abs = kept
        .iter()
        .map(|&j| attribution.word_scores[j].abs())
        .fold(0.0, f64::max);
    kept.into_iter()
        .map(|j| {
            let score = attribution.word_scores[j];
            let token = surface
                .get(j)
                .cloned()
                .or_else(|| vocab.token(doc.token_ids[j]).map(str::to_string))
                .unwrap_or_default();
            Highlight {
                position: j,
                token,
                word_score: score,
                intensity: if max_abs > 0.0 { score.abs() / max_abs } else { 0.0 },
                sign: if score > 0.0 {
                    1
                } else if score < 0.0 {
                    -1
                } else {
                    0
                },
            }
        })
        .collect()
}
