//! Toy encoder-decoder scorer and the three compatibility functions.
//!
//! The encoder averages token embeddings of `context ++ question`. The
//! decoder is order-1 Markov: each step sees the encoding, the embedding of
//! the previous answer token and a learned position embedding, and emits a
//! logit vector over the vocabulary through one tanh hidden layer.
//!
//! Compatibility scores are returned as `f = log ψ`:
//!
//! * [`CompatMode::Ln`]: sum of per-step log-softmax probabilities of the
//!   answer tokens and the closing EOS.
//! * [`CompatMode::Un`]: sum of the raw logits of the same tokens.
//! * [`CompatMode::Gs`]: raw logit of EOS at the final step.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Vocab, BOS, EOS, PAD};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    /// Token embedding width.
    pub d: usize,
    /// Position embedding width.
    pub d_pos: usize,
    pub hidden: usize,
    /// Maximum number of decoder steps, EOS included.
    pub max_len: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            d: 32,
            d_pos: 8,
            hidden: 64,
            max_len: 8,
        }
    }
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d_pos == 0 || self.hidden == 0 || self.max_len == 0 {
            return Err(Error::Config(format!("all dims must be positive: {self:?}")));
        }
        if self.max_len < 2 {
            return Err(Error::Config("max_len must be at least 2".into()));
        }
        Ok(())
    }

    pub fn decoder_input(&self) -> usize {
        2 * self.d + self.d_pos
    }
}

/// Trainable parameters. Also used as the gradient container, since a
/// gradient has exactly the parameter shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub dims: Dims,
    pub vocab_size: usize,
    /// `vocab_size x d`
    pub embedding: Vec<f64>,
    /// `max_len x d_pos`
    pub position: Vec<f64>,
    /// `hidden x (2d + d_pos)`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `vocab_size x hidden`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

pub const PARAM_NAMES: [&str; 6] = ["embedding", "position", "w1", "b1", "w2", "b2"];

impl ScorerParams {
    pub fn zeros(dims: Dims, vocab_size: usize) -> Result<Self> {
        dims.validate()?;
        if vocab_size == 0 {
            return Err(Error::Config("vocab_size must be positive".into()));
        }
        Ok(ScorerParams {
            dims,
            vocab_size,
            embedding: vec![0.0; vocab_size * dims.d],
            position: vec![0.0; dims.max_len * dims.d_pos],
            w1: vec![0.0; dims.hidden * dims.decoder_input()],
            b1: vec![0.0; dims.hidden],
            w2: vec![0.0; vocab_size * dims.hidden],
            b2: vec![0.0; vocab_size],
        })
    }

    /// A zero tensor set with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        ScorerParams {
            dims: self.dims,
            vocab_size: self.vocab_size,
            embedding: vec![0.0; self.embedding.len()],
            position: vec![0.0; self.position.len()],
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            &self.embedding,
            &self.position,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.embedding,
            &mut self.position,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Iterates every entry in a fixed order (tensor order, then row-major).
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors().into_iter().flat_map(|t| t.iter().copied())
    }

    fn locate(&self, mut k: usize) -> (usize, usize) {
        for (ti, t) in self.tensors().iter().enumerate() {
            if k < t.len() {
                return (ti, k);
            }
            k -= t.len();
        }
        panic!("flat index out of range");
    }

    /// Entry at flat index `k` in [`ScorerParams::iter`] order.
    pub fn get_flat(&self, k: usize) -> f64 {
        let (ti, i) = self.locate(k);
        self.tensors()[ti][i]
    }

    pub fn set_flat(&mut self, k: usize, v: f64) {
        let (ti, i) = self.locate(k);
        self.tensors_mut()[ti][i] = v;
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ScorerParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += alpha * b;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    pub fn same_shape(&self, other: &ScorerParams) -> bool {
        self.dims == other.dims && self.vocab_size == other.vocab_size
    }

    fn emb_row(&self, tok: usize) -> &[f64] {
        let d = self.dims.d;
        &self.embedding[tok * d..(tok + 1) * d]
    }

    fn check_token(&self, tok: usize) -> Result<()> {
        if tok >= self.vocab_size {
            return Err(Error::Range(format!(
                "token index {tok} outside vocab of {}",
                self.vocab_size
            )));
        }
        Ok(())
    }
}

/// Parameters drawn i.i.d. uniform in [-0.1, 0.1] from a seeded ChaCha8
/// stream, in [`PARAM_NAMES`] order.
pub fn init_params(seed: u64, dims: Dims, vocab_size: usize) -> Result<ScorerParams> {
    let mut p = ScorerParams::zeros(dims, vocab_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.gen_range(-0.1..=0.1);
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompatMode {
    Ln,
    Un,
    Gs,
}

impl CompatMode {
    pub const ALL: [CompatMode; 3] = [CompatMode::Ln, CompatMode::Un, CompatMode::Gs];
}

impl fmt::Display for CompatMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompatMode::Ln => "ln",
            CompatMode::Un => "un",
            CompatMode::Gs => "gs",
        })
    }
}

impl FromStr for CompatMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ln" => Ok(CompatMode::Ln),
            "un" => Ok(CompatMode::Un),
            "gs" => Ok(CompatMode::Gs),
            other => Err(Error::Config(format!("unknown compat mode {other:?}"))),
        }
    }
}

/// Mean of the embeddings of `context ++ question`; zero when both are empty.
pub fn encode(params: &ScorerParams, context: &[usize], question: &[usize]) -> Vec<f64> {
    let d = params.dims.d;
    let mut enc = vec![0.0; d];
    let n = context.len() + question.len();
    if n == 0 {
        return enc;
    }
    for &tok in context.iter().chain(question) {
        for (e, x) in enc.iter_mut().zip(params.emb_row(tok)) {
            *e += x;
        }
    }
    let inv = 1.0 / n as f64;
    enc.iter_mut().for_each(|e| *e *= inv);
    enc
}

fn encode_backward(
    params: &ScorerParams,
    context: &[usize],
    question: &[usize],
    denc: &[f64],
    grad: &mut ScorerParams,
) {
    let d = params.dims.d;
    let n = context.len() + question.len();
    if n == 0 {
        return;
    }
    let inv = 1.0 / n as f64;
    for &tok in context.iter().chain(question) {
        let row = &mut grad.embedding[tok * d..(tok + 1) * d];
        for (g, x) in row.iter_mut().zip(denc) {
            *g += inv * x;
        }
    }
}

/// Cached activations of one decoder step.
#[derive(Debug, Clone)]
pub(crate) struct Step {
    pub prev: usize,
    pub t: usize,
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

fn step_forward(params: &ScorerParams, enc: &[f64], prev: usize, t: usize) -> Result<Step> {
    let Dims {
        d,
        d_pos,
        hidden,
        max_len,
    } = params.dims;
    if t >= max_len {
        return Err(Error::Range(format!("decoder step {t} >= max_len {max_len}")));
    }
    params.check_token(prev)?;
    let mut input = Vec::with_capacity(2 * d + d_pos);
    input.extend_from_slice(enc);
    input.extend_from_slice(params.emb_row(prev));
    input.extend_from_slice(&params.position[t * d_pos..(t + 1) * d_pos]);
    let width = input.len();

    let mut h = params.b1.clone();
    for (k, hk) in h.iter_mut().enumerate() {
        let row = &params.w1[k * width..(k + 1) * width];
        *hk += row.iter().zip(&input).map(|(w, x)| w * x).sum::<f64>();
        *hk = hk.tanh();
    }
    let mut logits = params.b2.clone();
    for (v, lv) in logits.iter_mut().enumerate() {
        let row = &params.w2[v * hidden..(v + 1) * hidden];
        *lv += row.iter().zip(&h).map(|(w, x)| w * x).sum::<f64>();
    }
    Ok(Step {
        prev,
        t,
        input,
        hidden: h,
        logits,
    })
}

fn step_backward(
    params: &ScorerParams,
    step: &Step,
    dlogits: &[f64],
    denc: &mut [f64],
    grad: &mut ScorerParams,
) {
    let Dims {
        d, d_pos, hidden, ..
    } = params.dims;
    let width = step.input.len();
    let mut dh = vec![0.0; hidden];
    for (v, &g) in dlogits.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grad.b2[v] += g;
        let row = &params.w2[v * hidden..(v + 1) * hidden];
        let grow = &mut grad.w2[v * hidden..(v + 1) * hidden];
        for k in 0..hidden {
            grow[k] += g * step.hidden[k];
            dh[k] += g * row[k];
        }
    }
    let mut dinput = vec![0.0; width];
    for k in 0..hidden {
        let dpre = dh[k] * (1.0 - step.hidden[k] * step.hidden[k]);
        if dpre == 0.0 {
            continue;
        }
        grad.b1[k] += dpre;
        let row = &params.w1[k * width..(k + 1) * width];
        let grow = &mut grad.w1[k * width..(k + 1) * width];
        for j in 0..width {
            grow[j] += dpre * step.input[j];
            dinput[j] += dpre * row[j];
        }
    }
    for j in 0..d {
        denc[j] += dinput[j];
    }
    let prev = step.prev;
    for (g, x) in grad.embedding[prev * d..(prev + 1) * d]
        .iter_mut()
        .zip(&dinput[d..2 * d])
    {
        *g += x;
    }
    let t = step.t;
    for (g, x) in grad.position[t * d_pos..(t + 1) * d_pos]
        .iter_mut()
        .zip(&dinput[2 * d..])
    {
        *g += x;
    }
}

/// Logits over the vocabulary for one decoder step.
pub fn decoder_logits(params: &ScorerParams, encoding: &[f64], prev: usize, t: usize) -> Result<Vec<f64>> {
    if encoding.len() != params.dims.d {
        return Err(Error::Argument(format!(
            "encoding has length {}, expected {}",
            encoding.len(),
            params.dims.d
        )));
    }
    Ok(step_forward(params, encoding, prev, t)?.logits)
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - z).collect()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Teacher-forced decoder pass over one answer, EOS appended.
#[derive(Debug, Clone)]
pub(crate) struct Forward<'a> {
    context: &'a [usize],
    question: &'a [usize],
    pub steps: Vec<Step>,
    /// Target token at each step; the last is EOS.
    pub targets: Vec<usize>,
}

/// Drops trailing PAD tokens.
fn content(answer: &[usize]) -> &[usize] {
    let end = answer.iter().rposition(|&t| t != PAD).map_or(0, |i| i + 1);
    &answer[..end]
}

impl<'a> Forward<'a> {
    pub fn run(
        params: &ScorerParams,
        context: &'a [usize],
        question: &'a [usize],
        answer: &[usize],
    ) -> Result<Self> {
        let enc = encode_checked(params, context, question)?;
        Self::with_encoding(params, context, question, &enc, answer)
    }

    pub fn with_encoding(
        params: &ScorerParams,
        context: &'a [usize],
        question: &'a [usize],
        enc: &[f64],
        answer: &[usize],
    ) -> Result<Self> {
        let answer = content(answer);
        if answer.len() + 1 > params.dims.max_len {
            return Err(Error::Range(format!(
                "answer of {} tokens does not fit max_len {} with EOS",
                answer.len(),
                params.dims.max_len
            )));
        }
        let mut targets = answer.to_vec();
        targets.push(EOS);
        let mut steps = Vec::with_capacity(targets.len());
        let mut prev = BOS;
        for (t, &tok) in targets.iter().enumerate() {
            params.check_token(tok)?;
            steps.push(step_forward(params, enc, prev, t)?);
            prev = tok;
        }
        Ok(Forward {
            context,
            question,
            steps,
            targets,
        })
    }

    pub fn score(&self, mode: CompatMode) -> f64 {
        match mode {
            CompatMode::Ln => self
                .steps
                .iter()
                .zip(&self.targets)
                .map(|(s, &tok)| log_softmax(&s.logits)[tok])
                .sum(),
            CompatMode::Un => self
                .steps
                .iter()
                .zip(&self.targets)
                .map(|(s, &tok)| s.logits[tok])
                .sum(),
            CompatMode::Gs => self.steps.last().expect("at least the EOS step").logits[EOS],
        }
    }

    /// d score / d logits for each step.
    pub fn score_dlogits(&self, mode: CompatMode) -> Vec<Vec<f64>> {
        let n = self.steps.len();
        self.steps
            .iter()
            .zip(&self.targets)
            .enumerate()
            .map(|(i, (s, &tok))| {
                let mut g = vec![0.0; s.logits.len()];
                match mode {
                    CompatMode::Ln => {
                        for (gv, p) in g.iter_mut().zip(softmax(&s.logits)) {
                            *gv = -p;
                        }
                        g[tok] += 1.0;
                    }
                    CompatMode::Un => g[tok] = 1.0,
                    CompatMode::Gs => {
                        if i + 1 == n {
                            g[EOS] = 1.0;
                        }
                    }
                }
                g
            })
            .collect()
    }

    /// Accumulates `sum_t dlogits[t] . d logits_t / d params` into `grad`.
    pub fn backward(&self, params: &ScorerParams, dlogits: &[Vec<f64>], grad: &mut ScorerParams) {
        let mut denc = vec![0.0; params.dims.d];
        for (s, g) in self.steps.iter().zip(dlogits) {
            step_backward(params, s, g, &mut denc, grad);
        }
        encode_backward(params, self.context, self.question, &denc, grad);
    }
}

fn encode_checked(params: &ScorerParams, context: &[usize], question: &[usize]) -> Result<Vec<f64>> {
    for &t in context.iter().chain(question) {
        params.check_token(t)?;
    }
    Ok(encode(params, context, question))
}

/// `f(q, a) = log ψ(q, a)` under `mode`.
pub fn compat(
    params: &ScorerParams,
    mode: CompatMode,
    context: &[usize],
    question: &[usize],
    answer: &[usize],
) -> Result<f64> {
    Ok(Forward::run(params, context, question, answer)?.score(mode))
}

/// `weight * d f / d params` accumulated into `grad`; returns `f`.
pub fn compat_grad_into(
    params: &ScorerParams,
    mode: CompatMode,
    context: &[usize],
    question: &[usize],
    answer: &[usize],
    weight: f64,
    grad: &mut ScorerParams,
) -> Result<f64> {
    let fwd = Forward::run(params, context, question, answer)?;
    let mut dl = fwd.score_dlogits(mode);
    if weight != 1.0 {
        dl.iter_mut().flatten().for_each(|g| *g *= weight);
    }
    fwd.backward(params, &dl, grad);
    Ok(fwd.score(mode))
}

/// `f` and its gradient with respect to every parameter.
pub fn compat_grad(
    params: &ScorerParams,
    mode: CompatMode,
    context: &[usize],
    question: &[usize],
    answer: &[usize],
) -> Result<(f64, ScorerParams)> {
    let mut grad = params.zeros_like();
    let f = compat_grad_into(params, mode, context, question, answer, 1.0, &mut grad)?;
    Ok((f, grad))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFileRepr {
    dims: Dims,
    vocab: Vec<String>,
    params: std::collections::BTreeMap<String, Vec<f64>>,
}

/// A scorer together with the vocabulary it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: ScorerParams,
    pub vocab: Vocab,
}

impl Model {
    pub fn to_json(&self) -> Result<String> {
        let params = PARAM_NAMES
            .iter()
            .zip(self.params.tensors())
            .map(|(n, t)| (n.to_string(), t.to_vec()))
            .collect();
        let repr = ModelFileRepr {
            dims: self.params.dims,
            vocab: self.vocab.tokens().to_vec(),
            params,
        };
        Ok(serde_json::to_string(&repr)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut repr: ModelFileRepr = serde_json::from_str(s)?;
        let vocab = Vocab::from_list(repr.vocab)?;
        let mut params = ScorerParams::zeros(repr.dims, vocab.len())?;
        for (name, dst) in PARAM_NAMES.iter().zip(params.tensors_mut()) {
            let src = repr
                .params
                .remove(*name)
                .ok_or_else(|| Error::Data(format!("model file lacks tensor {name}")))?;
            if src.len() != dst.len() {
                return Err(Error::Data(format!(
                    "tensor {name} has {} entries, expected {}",
                    src.len(),
                    dst.len()
                )));
            }
            *dst = src;
        }
        if !params.is_finite() {
            return Err(Error::Data("model file contains non-finite values".into()));
        }
        Ok(Model { params, vocab })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
