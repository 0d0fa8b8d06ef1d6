//! Attribution files (`ATTR1` magic, `u64` header length, JSON header, then
//! little-endian `f64` arrays: relevance, word, column and filter scores)
//! and an HTML rendering of word highlights.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttributionTensor, Highlight, Method};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const MAGIC: &[u8; 5] = b"ATTR1";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    doc_id: usize,
    class: usize,
    method: Method,
    epsilon: f64,
    logit_value: f64,
    seq_len: usize,
    embed_dim: usize,
    num_filters: usize,
}

pub fn write_attribution(path: &Path, attribution: &AttributionTensor) -> Result<()> {
    let header = Header {
        format_version: FORMAT_VERSION,
        doc_id: attribution.doc_id,
        class: attribution.target_class,
        method: attribution.method,
        epsilon: attribution.epsilon,
        logit_value: attribution.logit_value,
        seq_len: attribution.relevance.rows(),
        embed_dim: attribution.relevance.cols(),
        num_filters: attribution.filter_scores.len(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut bytes = MAGIC.to_vec();
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    for v in attribution
        .relevance
        .as_slice()
        .iter()
        .chain(&attribution.word_scores)
        .chain(&attribution.column_scores)
        .chain(&attribution.filter_scores)
    {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_attribution(path: &Path) -> Result<AttributionTensor> {
    let bytes = fs::read(path)?;
    let corrupt = |reason: &str| Error::Corrupt {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    if bytes.len() < 13 || &bytes[..5] != MAGIC {
        return Err(corrupt("missing ATTR1 magic"));
    }
    let header_len = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
    let header_end = 13usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: Header =
        serde_json::from_slice(&bytes[13..header_end]).map_err(|e| corrupt(&e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: header.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let (l, d, f) = (header.seq_len, header.embed_dim, header.num_filters);
    let expected = l * d + l + d + f;
    let payload = &bytes[header_end..];
    if payload.len() != expected * 8 {
        return Err(corrupt("tensor data length does not match header"));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (relevance, rest) = values.split_at(l * d);
    let (word_scores, rest) = rest.split_at(l);
    let (column_scores, filter_scores) = rest.split_at(d);
    Ok(AttributionTensor {
        doc_id: header.doc_id,
        target_class: header.class,
        method: header.method,
        epsilon: header.epsilon,
        relevance: Matrix::from_vec(l, d, relevance.to_vec()),
        word_scores: word_scores.to_vec(),
        column_scores: column_scores.to_vec(),
        filter_scores: filter_scores.to_vec(),
        logit_value: header.logit_value,
    })
}

fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Standalone HTML page: positive words on a red background, negative on
/// blue, opacity proportional to intensity.
pub fn render_highlights_html(title: &str, highlights: &[Highlight]) -> String {
    let mut html = String::new();
    let _ = writeln!(html, "<!DOCTYPE html>");
    let _ = writeln!(html, "<html><head><meta charset=\"utf-8\"><title>{}</title></head>", escape_html(title));
    let _ = writeln!(html, "<body style=\"font-family: sans-serif; line-height: 2;\">");
    let _ = writeln!(html, "<h3>{}</h3>", escape_html(title));
    html.push_str("<p>");
    for h in highlights {
        let (r, g, b) = match h.sign {
            1 => (255, 0, 0),
            -1 => (0, 0, 255),
            _ => (255, 255, 255),
        };
        let _ = write!(
            html,
            "<span title=\"{:.6}\" style=\"background-color: rgba({r}, {g}, {b}, {:.3}); padding: 0 2px;\">{}</span> ",
            h.word_score,
            h.intensity,
            escape_html(&h.token)
        );
    }
    html.push_str("</p>\n</body></html>\n");
    html
}
