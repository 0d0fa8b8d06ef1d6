use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{argmax, dot, softmax, Matrix};

const INIT_SCALE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
    pub num_classes: usize,
    pub seq_len: usize,
    pub use_bias: bool,
    pub seed: u64,
    /// Stabilizer added to LRP denominators as `z + ε·sign(z)`.
    pub epsilon_lrp: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 2,
            embed_dim: 32,
            filter_widths: vec![3, 4, 5],
            filters_per_width: 32,
            num_classes: 2,
            seq_len: 64,
            use_bias: true,
            seed: 0,
            epsilon_lrp: 1e-9,
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 3,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.vocab_size < 2 {
            return fail(format!("vocab_size {} < 2", self.vocab_size));
        }
        if self.embed_dim == 0 {
            return fail("embed_dim must be at least 1".into());
        }
        if self.filters_per_width == 0 {
            return fail("filters_per_width must be at least 1".into());
        }
        if self.num_classes == 0 {
            return fail("num_classes must be at least 1".into());
        }
        if self.filter_widths.is_empty() {
            return fail("filter_widths is empty".into());
        }
        if let Some(&w) = self
            .filter_widths
            .iter()
            .find(|&&w| w == 0 || w > self.seq_len)
        {
            return fail(format!(
                "filter width {w} must be in 1..={}",
                self.seq_len
            ));
        }
        if !(self.epsilon_lrp > 0.0 && self.epsilon_lrp.is_finite()) {
            return fail(format!("epsilon_lrp {} must be positive", self.epsilon_lrp));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate {} must be >= 0", self.learning_rate));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        Ok(())
    }

    /// Length of the pooled vector: one entry per filter across all blocks.
    pub fn pooled_len(&self) -> usize {
        self.filter_widths.len() * self.filters_per_width
    }

    /// `(block, filter)` of a pooled index.
    pub fn filter_position(&self, pooled_index: usize) -> (usize, usize) {
        (
            pooled_index / self.filters_per_width,
            pooled_index % self.filters_per_width,
        )
    }

    /// Named tensors in serialization order with their shapes.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = vec![(
            "embedding".to_string(),
            vec![self.vocab_size, self.embed_dim],
        )];
        for &w in &self.filter_widths {
            specs.push((
                format!("conv{w}.weights"),
                vec![self.filters_per_width, w * self.embed_dim],
            ));
            specs.push((format!("conv{w}.bias"), vec![self.filters_per_width]));
        }
        specs.push((
            "dense.weights".to_string(),
            vec![self.pooled_len(), self.num_classes],
        ));
        specs.push(("dense.bias".to_string(), vec![self.num_classes]));
        specs
    }
}

/// Convolution block for one n-gram width. Row `f` of `weights` holds the
/// filter over a flattened `width × D` window, position-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub width: usize,
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// `V × D`; row `w` is the embedding of token `w`.
    pub embedding: Matrix,
    pub conv: Vec<ConvBlock>,
    /// `(widths·F) × C`.
    pub dense_weights: Matrix,
    pub dense_bias: Vec<f64>,
}

/// Feature removals applied during a forward pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overrides {
    /// Embedding columns set to zero before convolution.
    #[serde(default)]
    pub zero_columns: Vec<usize>,
    /// Pooled entries set to zero before the dense layer.
    #[serde(default)]
    pub zero_filters: Vec<usize>,
}

impl Overrides {
    pub fn none() -> Self {
        Overrides::default()
    }

    pub fn columns(columns: impl IntoIterator<Item = usize>) -> Self {
        Overrides {
            zero_columns: columns.into_iter().collect(),
            zero_filters: Vec::new(),
        }
    }

    pub fn filters(filters: impl IntoIterator<Item = usize>) -> Self {
        Overrides {
            zero_columns: Vec::new(),
            zero_filters: filters.into_iter().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.zero_columns.is_empty() && self.zero_filters.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrace {
    pub width: usize,
    /// `(L − width + 1) × F` pre-activations.
    pub pre: Matrix,
    /// ReLU of `pre`.
    pub post: Matrix,
    /// Winning window of each filter (lowest index on ties).
    pub argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `L × D` embedded input after any column removal.
    pub embedded: Matrix,
    pub blocks: Vec<BlockTrace>,
    pub pooled: Vec<f64>,
    /// Filters removed by the overrides, indexed like `pooled`.
    pub removed_filters: Vec<bool>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    pub fn predicted_class(&self) -> usize {
        argmax(&self.probs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub probs: Vec<f64>,
}

impl Prediction {
    pub fn from_logits(logits: &[f64]) -> Self {
        let probs = softmax(logits);
        Prediction {
            class: argmax(&probs),
            probs,
        }
    }
}

/// Derivatives of one logit with respect to the embedded input and the
/// pooled vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedded: Matrix,
    pub pooled: Vec<f64>,
}

impl ModelParams {
    /// Fresh parameters drawn uniformly from `[-0.05, 0.05]`; biases start
    /// at zero.
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut uniform = |rows: usize, cols: usize| {
            let data = (0..rows * cols)
                .map(|_| rng.gen_range(-INIT_SCALE..=INIT_SCALE))
                .collect();
            Matrix::from_vec(rows, cols, data)
        };
        let embedding = uniform(config.vocab_size, config.embed_dim);
        let conv = config
            .filter_widths
            .iter()
            .map(|&width| ConvBlock {
                width,
                weights: uniform(config.filters_per_width, width * config.embed_dim),
                bias: vec![0.0; config.filters_per_width],
            })
            .collect();
        let dense_weights = uniform(config.pooled_len(), config.num_classes);
        Ok(ModelParams {
            config: config.clone(),
            embedding,
            conv,
            dense_weights,
            dense_bias: vec![0.0; config.num_classes],
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            config: self.config.clone(),
            embedding: Matrix::zeros(self.embedding.rows(), self.embedding.cols()),
            conv: self
                .conv
                .iter()
                .map(|b| ConvBlock {
                    width: b.width,
                    weights: Matrix::zeros(b.weights.rows(), b.weights.cols()),
                    bias: vec![0.0; b.bias.len()],
                })
                .collect(),
            dense_weights: Matrix::zeros(self.dense_weights.rows(), self.dense_weights.cols()),
            dense_bias: vec![0.0; self.dense_bias.len()],
        }
    }

    /// Tensors in serialization order (see [`ModelConfig::tensor_specs`]).
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.embedding.as_slice()];
        for block in &self.conv {
            out.push(block.weights.as_slice());
            out.push(&block.bias);
        }
        out.push(self.dense_weights.as_slice());
        out.push(&self.dense_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.embedding.as_mut_slice()];
        for block in &mut self.conv {
            out.push(block.weights.as_mut_slice());
            out.push(&mut block.bias);
        }
        out.push(self.dense_weights.as_mut_slice());
        out.push(&mut self.dense_bias);
        out
    }

    /// Checks tensor shapes against the config and the bias-free invariant.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let specs = self.config.tensor_specs();
        let tensors = self.tensors();
        if specs.len() != tensors.len() {
            return Err(Error::shape("conv", specs.len(), tensors.len()));
        }
        for ((name, shape), data) in specs.iter().zip(&tensors) {
            let expected: usize = shape.iter().product();
            if data.len() != expected {
                return Err(Error::shape(name.clone(), expected, data.len()));
            }
            if !data.iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("tensor {name} has non-finite entries")));
            }
        }
        if !self.config.use_bias {
            let nonzero = self.conv.iter().any(|b| b.bias.iter().any(|&v| v != 0.0))
                || self.dense_bias.iter().any(|&v| v != 0.0);
            if nonzero {
                return Err(Error::Config(
                    "use_bias is false but a bias vector is nonzero".into(),
                ));
            }
        }
        Ok(())
    }

    fn check_tokens(&self, token_ids: &[u32]) -> Result<()> {
        if token_ids.len() != self.config.seq_len {
            return Err(Error::shape(
                "token_ids",
                self.config.seq_len,
                token_ids.len(),
            ));
        }
        if let Some(&id) = token_ids
            .iter()
            .find(|&&id| id as usize >= self.config.vocab_size)
        {
            return Err(Error::shape(
                "token_ids",
                format!("ids < {}", self.config.vocab_size),
                id,
            ));
        }
        Ok(())
    }

    pub fn embed(&self, token_ids: &[u32]) -> Result<Matrix> {
        self.check_tokens(token_ids)?;
        let d = self.config.embed_dim;
        let mut embedded = Matrix::zeros(token_ids.len(), d);
        for (j, &id) in token_ids.iter().enumerate() {
            embedded
                .row_mut(j)
                .copy_from_slice(self.embedding.row(id as usize));
        }
        Ok(embedded)
    }

    pub fn forward(&self, token_ids: &[u32], overrides: &Overrides) -> Result<ForwardTrace> {
        let embedded = self.embed(token_ids)?;
        self.forward_embedded(embedded, overrides)
    }

    /// Forward pass from an explicit embedded matrix (`L × D`).
    pub fn forward_embedded(
        &self,
        mut embedded: Matrix,
        overrides: &Overrides,
    ) -> Result<ForwardTrace> {
        let cfg = &self.config;
        if embedded.shape() != (cfg.seq_len, cfg.embed_dim) {
            return Err(Error::shape(
                "embedded",
                format!("{}x{}", cfg.seq_len, cfg.embed_dim),
                format!("{}x{}", embedded.rows(), embedded.cols()),
            ));
        }
        if let Some(&k) = overrides.zero_columns.iter().find(|&&k| k >= cfg.embed_dim) {
            return Err(Error::shape("zero_columns", format!("< {}", cfg.embed_dim), k));
        }
        if let Some(&f) = overrides.zero_filters.iter().find(|&&f| f >= cfg.pooled_len()) {
            return Err(Error::shape("zero_filters", format!("< {}", cfg.pooled_len()), f));
        }
        for &k in &overrides.zero_columns {
            for j in 0..cfg.seq_len {
                embedded.set(j, k, 0.0);
            }
        }

        let num_filters = cfg.filters_per_width;
        let mut blocks = Vec::with_capacity(self.conv.len());
        let mut pooled = Vec::with_capacity(cfg.pooled_len());
        for block in &self.conv {
            let windows = cfg.seq_len - block.width + 1;
            let mut pre = Matrix::zeros(windows, num_filters);
            for p in 0..windows {
                let window = embedded.rows_slice(p, block.width);
                let out = pre.row_mut(p);
                for (f, value) in out.iter_mut().enumerate() {
                    *value = dot(block.weights.row(f), window) + block.bias[f];
                }
            }
            let mut post = pre.clone();
            for v in post.as_mut_slice() {
                *v = v.max(0.0);
            }
            let argmax: Vec<usize> = (0..num_filters)
                .map(|f| {
                    let mut best = 0;
                    for p in 1..windows {
                        if post.get(p, f) > post.get(best, f) {
                            best = p;
                        }
                    }
                    best
                })
                .collect();
            pooled.extend(argmax.iter().enumerate().map(|(f, &p)| post.get(p, f)));
            blocks.push(BlockTrace {
                width: block.width,
                pre,
                post,
                argmax,
            });
        }

        let mut removed_filters = vec![false; pooled.len()];
        for &f in &overrides.zero_filters {
            pooled[f] = 0.0;
            removed_filters[f] = true;
        }

        let logits = self.dense_logits(&pooled);
        let probs = softmax(&logits);
        Ok(ForwardTrace {
            embedded,
            blocks,
            pooled,
            removed_filters,
            logits,
            probs,
        })
    }

    /// The dense layer alone: logits for a pooled vector.
    pub fn dense_logits(&self, pooled: &[f64]) -> Vec<f64> {
        (0..self.config.num_classes)
            .map(|c| {
                let mut z = self.dense_bias[c];
                for (i, &x) in pooled.iter().enumerate() {
                    z += x * self.dense_weights.get(i, c);
                }
                z
            })
            .collect()
    }

    pub fn predict(&self, token_ids: &[u32]) -> Result<Prediction> {
        let trace = self.forward(token_ids, &Overrides::none())?;
        Ok(Prediction::from_logits(&trace.logits))
    }

    /// Exact derivatives of `logits[class]` with respect to the embedded
    /// input and the pooled vector. Max-pooling routes gradient to the
    /// winning window only; a ReLU with non-positive input passes none.
    pub fn gradients(&self, token_ids: &[u32], class: usize) -> Result<Gradients> {
        let trace = self.forward(token_ids, &Overrides::none())?;
        self.logit_gradients(&trace, class)
    }

    pub fn logit_gradients(&self, trace: &ForwardTrace, class: usize) -> Result<Gradients> {
        if class >= self.config.num_classes {
            return Err(Error::shape(
                "class",
                format!("< {}", self.config.num_classes),
                class,
            ));
        }
        let mut upstream = vec![0.0; self.config.num_classes];
        upstream[class] = 1.0;
        Ok(self.backward(trace, &upstream, None))
    }

    /// Reverse-mode pass given `∂loss/∂logits`. When `param_grads` is
    /// provided the parameter gradients are accumulated into it (biases
    /// only when the model uses them).
    pub(crate) fn backward(
        &self,
        trace: &ForwardTrace,
        dlogits: &[f64],
        mut param_grads: Option<&mut ModelParams>,
    ) -> Gradients {
        let cfg = &self.config;
        let use_bias = cfg.use_bias;

        let mut d_pooled = vec![0.0; cfg.pooled_len()];
        for (i, d) in d_pooled.iter_mut().enumerate() {
            *d = dot(self.dense_weights.row(i), dlogits);
        }
        if let Some(grads) = param_grads.as_deref_mut() {
            for (i, &x) in trace.pooled.iter().enumerate() {
                if x != 0.0 {
                    for (g, &d) in grads.dense_weights.row_mut(i).iter_mut().zip(dlogits) {
                        *g += x * d;
                    }
                }
            }
            if use_bias {
                for (g, &d) in grads.dense_bias.iter_mut().zip(dlogits) {
                    *g += d;
                }
            }
        }

        let mut d_embedded = Matrix::zeros(cfg.seq_len, cfg.embed_dim);
        for (b, (block, block_trace)) in self.conv.iter().zip(&trace.blocks).enumerate() {
            for (f, &p) in block_trace.argmax.iter().enumerate() {
                let i = b * cfg.filters_per_width + f;
                let g = d_pooled[i];
                if g == 0.0 || trace.removed_filters[i] || block_trace.pre.get(p, f) <= 0.0 {
                    continue;
                }
                let weights = block.weights.row(f);
                for (d, &w) in d_embedded
                    .rows_slice_mut(p, block.width)
                    .iter_mut()
                    .zip(weights)
                {
                    *d += g * w;
                }
                if let Some(grads) = param_grads.as_deref_mut() {
                    let window = trace.embedded.rows_slice(p, block.width);
                    for (gw, &x) in grads.conv[b].weights.row_mut(f).iter_mut().zip(window) {
                        *gw += g * x;
                    }
                    if use_bias {
                        grads.conv[b].bias[f] += g;
                    }
                }
            }
        }
        for (i, removed) in trace.removed_filters.iter().enumerate() {
            if *removed {
                d_pooled[i] = 0.0;
            }
        }
        Gradients {
            embedded: d_embedded,
            pooled: d_pooled,
        }
    }
}
