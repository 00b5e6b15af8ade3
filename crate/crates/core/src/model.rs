//! The toy layered network that erasure edits: an embedding table followed
//! by a stack of blocks, optionally ending in a cross-attention sink.
//!
//! Tokens are columns. A prompt of `T` tokens enters as a `d × T` matrix and
//! every block maps it to another `d × T` matrix, except the sink, which
//! attends from `M` fixed probe queries and emits `d × M`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LinalgError, ModelError};
use crate::linalg::{col_softmax, matmul, Matrix};

pub const MODEL_FILE_VERSION: u64 = 1;
/// Probe queries in a generated sink unless the caller asks otherwise.
pub const DEFAULT_SINK_QUERIES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    LinearChain,
    SelfAttn,
    CrossAttnSink,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::LinearChain => "linear_chain",
            BlockKind::SelfAttn => "self_attn",
            BlockKind::CrossAttnSink => "cross_attn_sink",
        }
    }

    /// Projections that erasure is allowed to rewrite, in solve order.
    pub fn editable(self) -> &'static [&'static str] {
        match self {
            BlockKind::LinearChain => &["W"],
            BlockKind::SelfAttn => &["W_Q", "W_K", "W_V"],
            BlockKind::CrossAttnSink => &["W_K", "W_V"],
        }
    }

    fn weight_names(self) -> &'static [&'static str] {
        match self {
            BlockKind::LinearChain => &["W"],
            BlockKind::SelfAttn => &["W_Q", "W_K", "W_V", "W_O", "W_1", "W_2"],
            BlockKind::CrossAttnSink => &["W_K", "W_V", "Q_p"],
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlockKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "linear_chain" => Ok(BlockKind::LinearChain),
            "self_attn" => Ok(BlockKind::SelfAttn),
            "cross_attn_sink" => Ok(BlockKind::CrossAttnSink),
            other => Err(ModelError::Param(format!(
                "unknown block kind '{other}' (expected linear_chain, self_attn or cross_attn_sink)"
            ))),
        }
    }
}

/// One block of the stack with its weights.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    LinearChain {
        w: Matrix,
    },
    SelfAttn {
        w_q: Matrix,
        w_k: Matrix,
        w_v: Matrix,
        w_o: Matrix,
        w_1: Matrix,
        w_2: Matrix,
    },
    CrossAttnSink {
        w_k: Matrix,
        w_v: Matrix,
        queries: Matrix,
    },
}

impl Block {
    pub fn kind(&self) -> BlockKind {
        match self {
            Block::LinearChain { .. } => BlockKind::LinearChain,
            Block::SelfAttn { .. } => BlockKind::SelfAttn,
            Block::CrossAttnSink { .. } => BlockKind::CrossAttnSink,
        }
    }

    pub fn weight(&self, name: &str) -> Option<&Matrix> {
        match (self, name) {
            (Block::LinearChain { w }, "W") => Some(w),
            (Block::SelfAttn { w_q, .. }, "W_Q") => Some(w_q),
            (Block::SelfAttn { w_k, .. }, "W_K") => Some(w_k),
            (Block::SelfAttn { w_v, .. }, "W_V") => Some(w_v),
            (Block::SelfAttn { w_o, .. }, "W_O") => Some(w_o),
            (Block::SelfAttn { w_1, .. }, "W_1") => Some(w_1),
            (Block::SelfAttn { w_2, .. }, "W_2") => Some(w_2),
            (Block::CrossAttnSink { w_k, .. }, "W_K") => Some(w_k),
            (Block::CrossAttnSink { w_v, .. }, "W_V") => Some(w_v),
            (Block::CrossAttnSink { queries, .. }, "Q_p") => Some(queries),
            _ => None,
        }
    }

    fn weight_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        match (self, name) {
            (Block::LinearChain { w }, "W") => Some(w),
            (Block::SelfAttn { w_q, .. }, "W_Q") => Some(w_q),
            (Block::SelfAttn { w_k, .. }, "W_K") => Some(w_k),
            (Block::SelfAttn { w_v, .. }, "W_V") => Some(w_v),
            (Block::SelfAttn { w_o, .. }, "W_O") => Some(w_o),
            (Block::SelfAttn { w_1, .. }, "W_1") => Some(w_1),
            (Block::SelfAttn { w_2, .. }, "W_2") => Some(w_2),
            (Block::CrossAttnSink { w_k, .. }, "W_K") => Some(w_k),
            (Block::CrossAttnSink { w_v, .. }, "W_V") => Some(w_v),
            (Block::CrossAttnSink { queries, .. }, "Q_p") => Some(queries),
            _ => None,
        }
    }

    /// Replaces a named weight; the replacement must keep its shape.
    pub fn set_weight(&mut self, name: &str, value: Matrix) -> Result<(), ModelError> {
        let kind = self.kind();
        let slot = self
            .weight_mut(name)
            .ok_or_else(|| ModelError::Param(format!("{kind} block has no weight named '{name}'")))?;
        if slot.shape() != value.shape() {
            return Err(LinalgError::Shape { op: "set_weight", left: slot.shape(), right: value.shape() }.into());
        }
        *slot = value;
        Ok(())
    }

    /// All weights in a fixed order.
    pub fn weights(&self) -> Vec<(&'static str, &Matrix)> {
        self.kind()
            .weight_names()
            .iter()
            .map(|n| (*n, self.weight(n).expect("known weight name")))
            .collect()
    }

    pub fn editable(&self) -> Vec<(&'static str, &Matrix)> {
        self.kind()
            .editable()
            .iter()
            .map(|n| (*n, self.weight(n).expect("known weight name")))
            .collect()
    }
}

/// Applies one block to a `d × T` feature matrix.
pub fn forward_block(block: &Block, h: &Matrix) -> Result<Matrix, LinalgError> {
    match block {
        Block::LinearChain { w } => matmul(w, h),
        Block::SelfAttn { w_q, w_k, w_v, w_o, w_1, w_2 } => {
            let scale = 1.0 / (h.rows() as f64).sqrt();
            let q = matmul(w_q, h)?;
            let k = matmul(w_k, h)?;
            let v = matmul(w_v, h)?;
            let scores = matmul(&k.transpose(), &q)?.scale(scale)?;
            let attn = matmul(&v, &col_softmax(&scores))?;
            let h1 = h.add(&matmul(w_o, &attn)?)?;
            let pre = matmul(w_1, &h1)?;
            let act = Matrix::from_vec(pre.rows(), pre.cols(), pre.data().iter().map(|v| v.tanh()).collect())?;
            h1.add(&matmul(w_2, &act)?)
        }
        Block::CrossAttnSink { w_k, w_v, queries } => {
            let scale = 1.0 / (h.rows() as f64).sqrt();
            let k = matmul(w_k, h)?;
            let v = matmul(w_v, h)?;
            let scores = matmul(&k.transpose(), queries)?.scale(scale)?;
            matmul(&v, &col_softmax(&scores))
        }
    }
}

/// Features for a batch of prompts at one stage. Columns of consecutive
/// prompts are concatenated; `segments` holds each prompt's column count.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub matrix: Matrix,
    pub segments: Vec<usize>,
    /// False once the sink has replaced token columns by probe-query columns.
    pub token_aligned: bool,
}

impl Features {
    pub fn segment(&self, index: usize) -> Matrix {
        let start: usize = self.segments[..index].iter().sum();
        self.matrix.col_range(start, start + self.segments[index])
    }

    /// Keeps the first `k` columns of every segment.
    pub fn truncate_segments(&self, k: usize) -> Result<Features, LinalgError> {
        let parts: Vec<Matrix> = (0..self.segments.len())
            .map(|i| {
                let seg = self.segment(i);
                let keep = seg.cols().min(k);
                seg.col_range(0, keep)
            })
            .collect();
        let segments = parts.iter().map(Matrix::cols).collect();
        Ok(Features { matrix: Matrix::hcat(&parts)?, segments, token_aligned: self.token_aligned })
    }
}

/// Runs a block over each prompt segment independently, so attention never
/// mixes tokens of different prompts.
pub fn forward_features(block: &Block, input: &Features) -> Result<Features, LinalgError> {
    let outputs = (0..input.segments.len())
        .map(|i| forward_block(block, &input.segment(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let segments = outputs.iter().map(Matrix::cols).collect();
    let token_aligned = input.token_aligned && block.kind() != BlockKind::CrossAttnSink;
    Ok(Features { matrix: Matrix::hcat(&outputs)?, segments, token_aligned })
}

/// Stage 0 (embeddings) through stage S (output of the last block).
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub stages: Vec<Features>,
}

impl Trace {
    pub fn stage(&self, i: usize) -> &Features {
        &self.stages[i]
    }

    pub fn last(&self) -> &Features {
        self.stages.last().expect("trace has at least the embedding stage")
    }
}

/// Generation parameters for [`ModelStack::generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub dim: usize,
    pub blocks: usize,
    pub hidden: usize,
    pub vocab: usize,
    pub seed: u64,
    /// One kind per block; `None` means self-attention blocks ending in a sink.
    pub kinds: Option<Vec<BlockKind>>,
    pub sink_queries: usize,
}

impl GenSpec {
    pub fn new(dim: usize, blocks: usize, hidden: usize, vocab: usize, seed: u64) -> Self {
        Self { dim, blocks, hidden, vocab, seed, kinds: None, sink_queries: DEFAULT_SINK_QUERIES }
    }

    pub fn with_kinds(mut self, kinds: Vec<BlockKind>) -> Self {
        self.kinds = Some(kinds);
        self
    }

    /// The block layout this spec will produce.
    pub fn resolved_kinds(&self) -> Vec<BlockKind> {
        match &self.kinds {
            Some(k) if k.len() == 1 => vec![k[0]; self.blocks],
            Some(k) => k.clone(),
            None => {
                let mut k = vec![BlockKind::SelfAttn; self.blocks.saturating_sub(1)];
                k.push(BlockKind::CrossAttnSink);
                k
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelStack {
    pub dim: usize,
    pub vocab_size: usize,
    pub pad_token_id: usize,
    pub seed: u64,
    pub layer_norm_enabled: bool,
    /// `dim × vocab_size`; column `t` embeds token `t`.
    pub embedding: Matrix,
    pub blocks: Vec<Block>,
}

impl ModelStack {
    /// Draws every weight i.i.d. from `N(0, 1/dim)` with a ChaCha stream seeded
    /// by `spec.seed`. Draw order: embedding, then blocks in order, each
    /// block's weights in [`Block::weights`] order.
    pub fn generate(spec: &GenSpec) -> Result<ModelStack, ModelError> {
        if spec.dim < 2 {
            return Err(ModelError::Param(format!("dim must be at least 2 (got {})", spec.dim)));
        }
        if spec.blocks < 1 {
            return Err(ModelError::Param("blocks must be at least 1".into()));
        }
        if spec.vocab < 2 {
            return Err(ModelError::Param(format!("vocab must be at least 2 (got {})", spec.vocab)));
        }
        let kinds = spec.resolved_kinds();
        if kinds.len() != spec.blocks {
            return Err(ModelError::Param(format!(
                "{} block kinds given for {} blocks",
                kinds.len(),
                spec.blocks
            )));
        }
        if kinds.contains(&BlockKind::SelfAttn) && spec.hidden < 1 {
            return Err(ModelError::Param("hidden must be at least 1 for self_attn blocks".into()));
        }
        if kinds.contains(&BlockKind::CrossAttnSink) && spec.sink_queries < 1 {
            return Err(ModelError::Param("sink needs at least one probe query".into()));
        }

        let d = spec.dim;
        let scale = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut draw = |r: usize, c: usize| Matrix::random_normal(r, c, scale, &mut rng);

        let embedding = draw(d, spec.vocab);
        let blocks = kinds
            .iter()
            .map(|kind| match kind {
                BlockKind::LinearChain => Block::LinearChain { w: draw(d, d) },
                BlockKind::SelfAttn => Block::SelfAttn {
                    w_q: draw(d, d),
                    w_k: draw(d, d),
                    w_v: draw(d, d),
                    w_o: draw(d, d),
                    w_1: draw(spec.hidden, d),
                    w_2: draw(d, spec.hidden),
                },
                BlockKind::CrossAttnSink => Block::CrossAttnSink {
                    w_k: draw(d, d),
                    w_v: draw(d, d),
                    queries: draw(d, spec.sink_queries),
                },
            })
            .collect();

        let model = ModelStack {
            dim: d,
            vocab_size: spec.vocab,
            pad_token_id: 0,
            seed: spec.seed,
            layer_norm_enabled: false,
            embedding,
            blocks,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn has_sink(&self) -> bool {
        self.blocks.last().is_some_and(|b| b.kind() == BlockKind::CrossAttnSink)
    }

    /// Checks every structural invariant of the stack.
    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.dim;
        if d < 1 || self.blocks.is_empty() {
            return Err(ModelError::Param("model needs dim ≥ 1 and at least one block".into()));
        }
        if self.layer_norm_enabled {
            return Err(ModelError::Param("layer normalization is not supported".into()));
        }
        if self.embedding.shape() != (d, self.vocab_size) {
            return Err(ModelError::load(
                "embedding",
                format!("expected {}x{}, found {}x{}", d, self.vocab_size, self.embedding.rows(), self.embedding.cols()),
            ));
        }
        if self.pad_token_id >= self.vocab_size {
            return Err(ModelError::Vocab { id: self.pad_token_id, vocab: self.vocab_size });
        }
        let hidden = self.blocks.iter().find_map(|b| b.weight("W_1").map(Matrix::rows));
        for (i, block) in self.blocks.iter().enumerate() {
            if block.kind() == BlockKind::CrossAttnSink && i + 1 != self.blocks.len() {
                return Err(ModelError::load(format!("blocks[{i}]"), "cross_attn_sink must be the last block"));
            }
            for (name, w) in block.weights() {
                let expected = match name {
                    "W_1" => (hidden.unwrap_or(w.rows()), d),
                    "W_2" => (d, hidden.unwrap_or(w.cols())),
                    "Q_p" => (d, w.cols().max(1)),
                    _ => (d, d),
                };
                if w.shape() != expected {
                    return Err(ModelError::load(
                        format!("blocks[{i}].weights.{name}"),
                        format!("expected {}x{}, found {}x{}", expected.0, expected.1, w.rows(), w.cols()),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn check_tokens(&self, tokens: &[usize]) -> Result<(), ModelError> {
        match tokens.iter().find(|&&t| t >= self.vocab_size) {
            Some(&id) => Err(ModelError::Vocab { id, vocab: self.vocab_size }),
            None => Ok(()),
        }
    }

    /// Stage-0 features: embedding columns of every prompt, concatenated.
    pub fn embed(&self, prompts: &[Vec<usize>]) -> Result<Features, ModelError> {
        if prompts.is_empty() {
            return Err(ModelError::Param("prompt list is empty".into()));
        }
        let mut cols = Vec::new();
        for p in prompts {
            self.check_tokens(p)?;
            cols.extend(p.iter().map(|&t| self.embedding.col(t)));
        }
        Ok(Features {
            matrix: Matrix::from_cols(self.dim, &cols)?,
            segments: prompts.iter().map(Vec::len).collect(),
            token_aligned: true,
        })
    }

    /// All `S + 1` feature stages for the given prompts.
    pub fn extract_features(&self, prompts: &[Vec<usize>]) -> Result<Trace, ModelError> {
        let mut stages = vec![self.embed(prompts)?];
        for block in &self.blocks {
            let next = forward_features(block, stages.last().expect("non-empty"))?;
            stages.push(next);
        }
        Ok(Trace { stages })
    }

    /// Final-stage output for each prompt, forwarded independently.
    pub fn outputs(&self, prompts: &[Vec<usize>]) -> Result<Vec<Matrix>, ModelError> {
        prompts
            .iter()
            .map(|p| {
                let trace = self.extract_features(std::slice::from_ref(p))?;
                Ok(trace.last().matrix.clone())
            })
            .collect()
    }

    /// Errors unless `other` has the same dimensions and block layout.
    pub fn check_same_structure(&self, other: &ModelStack) -> Result<(), String> {
        if self.dim != other.dim || self.vocab_size != other.vocab_size {
            return Err(format!(
                "dim/vocab {}x{} vs {}x{}",
                self.dim, self.vocab_size, other.dim, other.vocab_size
            ));
        }
        if self.blocks.len() != other.blocks.len() {
            return Err(format!("{} blocks vs {} blocks", self.blocks.len(), other.blocks.len()));
        }
        for (i, (a, b)) in self.blocks.iter().zip(&other.blocks).enumerate() {
            if a.kind() != b.kind() {
                return Err(format!("block {} is {} vs {}", i + 1, a.kind(), b.kind()));
            }
            for ((name, wa), (_, wb)) in a.weights().into_iter().zip(b.weights()) {
                if wa.shape() != wb.shape() {
                    return Err(format!("block {} weight {name} shapes differ", i + 1));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            dim: self.dim,
            vocab_size: self.vocab_size,
            pad_token_id: self.pad_token_id,
            seed: self.seed,
            layer_norm_enabled: self.layer_norm_enabled,
            embedding: self.embedding.to_rows(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockFile {
                    kind: b.kind(),
                    weights: b.weights().into_iter().map(|(n, w)| (n.to_string(), w.to_rows())).collect(),
                })
                .collect(),
        };
        to_exact_json(&file)
    }

    pub fn from_json(text: &str) -> Result<ModelStack, ModelError> {
        let root: Value = serde_json::from_str(text).map_err(|e| {
            ModelError::load(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        let obj = root.as_object().ok_or_else(|| ModelError::load("$", "expected a JSON object"))?;

        let version = get_u64(obj, "version", "$")?;
        if version != MODEL_FILE_VERSION {
            return Err(ModelError::Version { found: version, expected: MODEL_FILE_VERSION });
        }
        let dim = get_u64(obj, "dim", "$")? as usize;
        let vocab_size = get_u64(obj, "vocab_size", "$")? as usize;
        let pad_token_id = match obj.get("pad_token_id") {
            None => 0,
            Some(_) => get_u64(obj, "pad_token_id", "$")? as usize,
        };
        let seed = get_u64(obj, "seed", "$")?;
        let layer_norm_enabled = match obj.get("layer_norm_enabled") {
            None => false,
            Some(v) => v.as_bool().ok_or_else(|| ModelError::load("layer_norm_enabled", "expected a boolean"))?,
        };
        let embedding = parse_matrix(obj.get("embedding"), "embedding")?;
        let blocks_json = obj
            .get("blocks")
            .and_then(Value::as_array)
            .ok_or_else(|| ModelError::load("blocks", "missing block list"))?;
        if blocks_json.is_empty() {
            return Err(ModelError::load("blocks", "block list is empty"));
        }

        let mut blocks = Vec::with_capacity(blocks_json.len());
        for (i, bj) in blocks_json.iter().enumerate() {
            let at = format!("blocks[{i}]");
            let kind: BlockKind = bj
                .get("kind")
                .and_then(Value::as_str)
                .ok_or_else(|| ModelError::load(&at, "missing block kind"))?
                .parse()
                .map_err(|e: ModelError| ModelError::load(&at, e.to_string()))?;
            let weights = bj
                .get("weights")
                .and_then(Value::as_object)
                .ok_or_else(|| ModelError::load(&at, "missing weights"))?;
            let take = |name: &str| parse_matrix(weights.get(name), &format!("{at}.weights.{name}"));
            let block = match kind {
                BlockKind::LinearChain => Block::LinearChain { w: take("W")? },
                BlockKind::SelfAttn => Block::SelfAttn {
                    w_q: take("W_Q")?,
                    w_k: take("W_K")?,
                    w_v: take("W_V")?,
                    w_o: take("W_O")?,
                    w_1: take("W_1")?,
                    w_2: take("W_2")?,
                },
                BlockKind::CrossAttnSink => Block::CrossAttnSink {
                    w_k: take("W_K")?,
                    w_v: take("W_V")?,
                    queries: take("Q_p")?,
                },
            };
            if let Some(extra) = weights.keys().find(|k| !kind.weight_names().contains(&k.as_str())) {
                return Err(ModelError::load(&at, format!("unexpected weight '{extra}' for {kind}")));
            }
            blocks.push(block);
        }

        let model = ModelStack { dim, vocab_size, pad_token_id, seed, layer_norm_enabled, embedding, blocks };
        model.validate()?;
        Ok(model)
    }
}

fn get_u64(obj: &serde_json::Map<String, Value>, key: &str, at: &str) -> Result<u64, ModelError> {
    obj.get(key)
        .ok_or_else(|| ModelError::load(format!("{at}.{key}"), "missing field"))?
        .as_u64()
        .ok_or_else(|| ModelError::load(format!("{at}.{key}"), "expected a non-negative integer"))
}

fn parse_matrix(value: Option<&Value>, at: &str) -> Result<Matrix, ModelError> {
    let rows = value
        .ok_or_else(|| ModelError::load(at, "missing matrix"))?
        .as_array()
        .ok_or_else(|| ModelError::load(at, "expected an array of rows"))?;
    let mut parsed: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let row = row.as_array().ok_or_else(|| ModelError::load(format!("{at} row {r}"), "expected an array"))?;
        let vals = row
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| ModelError::load(format!("{at}[{r}][{c}]"), "expected a finite number"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        parsed.push(vals);
    }
    if parsed.is_empty() {
        return Err(ModelError::load(at, "matrix has no rows"));
    }
    Matrix::from_rows(&parsed).map_err(|e| ModelError::load(at, e.to_string()))
}

#[derive(Serialize)]
struct ModelFile {
    version: u64,
    dim: usize,
    vocab_size: usize,
    pad_token_id: usize,
    seed: u64,
    layer_norm_enabled: bool,
    embedding: Vec<Vec<f64>>,
    blocks: Vec<BlockFile>,
}

#[derive(Serialize)]
struct BlockFile {
    kind: BlockKind,
    weights: BTreeMap<String, Vec<Vec<f64>>>,
}

/// JSON formatter that writes every float with 17 significant digits.
struct ExactFloats;

impl serde_json::ser::Formatter for ExactFloats {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes with [`ExactFloats`]; parsing the output restores every float bit for bit.
pub fn to_exact_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloats);
    value.serialize(&mut ser).expect("serializing plain data cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("JSON output is UTF-8")
}

/// `{"prompts": [[ids], ...]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptFile {
    pub prompts: Vec<Vec<usize>>,
}

impl PromptFile {
    pub fn from_json(text: &str) -> Result<PromptFile, ModelError> {
        let file: PromptFile = serde_json::from_str(text).map_err(|e| {
            ModelError::load(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        if file.prompts.is_empty() || file.prompts.iter().any(Vec::is_empty) {
            return Err(ModelError::load("prompts", "prompt list and every prompt must be non-empty"));
        }
        Ok(file)
    }
}
