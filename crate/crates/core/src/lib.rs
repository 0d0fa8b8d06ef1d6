//! Word-level CNN text classification with per-feature attribution.
//!
//! The crate trains a small TextCNN, explains its predictions with signed
//! saliency and layer-wise relevance propagation (LRP), and measures how
//! good those explanations are by removing the features they rank highest:
//! embedding columns, convolutional filters, or by re-weighting words when
//! building document embeddings.
//!
//! ```
//! use embedrel::corpus::{Corpus, CorpusOptions};
//! use embedrel::textcnn::{train, ModelConfig};
//! use embedrel::attribution::lrp;
//!
//! let docs = vec![
//!     ("great food and great service".to_string(), 1),
//!     ("awful food , rude staff".to_string(), 0),
//!     ("great place".to_string(), 1),
//!     ("awful".to_string(), 0),
//! ];
//! let options = CorpusOptions { seq_len: 8, train_frac: 1.0, ..Default::default() };
//! let corpus = Corpus::from_labeled(docs, vec!["neg".into(), "pos".into()], &options).unwrap();
//! let config = ModelConfig {
//!     vocab_size: corpus.vocab.len(),
//!     seq_len: 8,
//!     embed_dim: 4,
//!     filters_per_width: 2,
//!     use_bias: false,
//!     ..Default::default()
//! };
//! let (params, _log) = train(&corpus, &config).unwrap();
//! let doc = &corpus.documents[0];
//! let relevance = lrp(&params, doc.doc_id, &doc.token_ids, 1).unwrap();
//! assert!((relevance.total() - relevance.logit_value).abs() < 1e-6);
//! ```

pub mod attribution;
pub mod corpus;
pub mod evaluation;
pub mod pipeline;
pub mod presets;
pub mod synth;
pub mod error;
pub mod tensor;
pub mod textcnn;

pub use error::{Error, Result};
pub use tensor::Matrix;
