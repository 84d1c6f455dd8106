//! Tiny autoregressive language model with exact gradients.
//!
//! The next-token distribution is computed by an MLP over a fixed window of
//! the most recent `context_window` tokens. Window slot `j` holds the token
//! `j` positions back from the end of the prefix; each slot has its own
//! block of first-layer weights over the shared token embedding, and slots
//! before the start of the sequence contribute nothing.
//!
//! ```text
//! x      = concat_j E[tok_{t-j}]                 (C * d)
//! a_1    = tanh(W_1 x + b_1)                     (H)
//! a_l    = tanh(W_l a_{l-1} + b_l)    l = 2..L   (H)
//! logits = W_out a_L + b_out                     (V)
//! ```
//!
//! All parameters live in one flat `f64` vector so that losses, optimizers
//! and checkpoints can treat the model as a point in R^n.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed::{rng_from_seed, Rng};
use crate::world::{SyntheticWorld, TokenId, TokenSeq, EOS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub context_window: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Default architecture sized for `world`.
    pub fn for_world(world: &SyntheticWorld, seed: u64) -> Self {
        ModelConfig {
            vocab_size: world.vocab.size(),
            // headroom for the two-token ICU prefix
            context_window: world.max_sequence_len() + 4,
            embed_dim: 16,
            hidden_dim: 128,
            n_layers: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("context_window", self.context_window),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("n_layers", self.n_layers),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("model {name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (v, c, d, h, l) = (
            self.vocab_size,
            self.context_window,
            self.embed_dim,
            self.hidden_dim,
            self.n_layers,
        );
        v * d + h * c * d + h + (l - 1) * (h * h + h) + v * h + v
    }
}

#[derive(Debug, Clone)]
struct DenseLayer {
    w: usize,
    b: usize,
    fan_in: usize,
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Debug, Clone)]
struct Layout {
    emb: usize,
    layers: Vec<DenseLayer>,
    out_w: usize,
    out_b: usize,
    len: usize,
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Self {
        let (v, d, h) = (cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim);
        let mut cursor = 0;
        let emb = cursor;
        cursor += v * d;
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let fan_in = if l == 0 { cfg.context_window * d } else { h };
            let w = cursor;
            cursor += h * fan_in;
            let b = cursor;
            cursor += h;
            layers.push(DenseLayer { w, b, fan_in });
        }
        let out_w = cursor;
        cursor += v * h;
        let out_b = cursor;
        cursor += v;
        Layout {
            emb,
            layers,
            out_w,
            out_b,
            len: cursor,
        }
    }
}

/// Parameter vector theta together with the config that shapes it.
#[derive(Debug, Clone)]
pub struct ModelParams {
    config: ModelConfig,
    layout: Layout,
    theta: Vec<f64>,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.theta == other.theta
    }
}

struct Activations {
    window: Vec<(usize, TokenId)>,
    layers: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

/// A scored continuation: positions `start..seq.len()` of `seq`, weighted.
#[derive(Debug, Clone, Copy)]
pub struct Span<'a> {
    pub seq: &'a [TokenId],
    pub start: usize,
    pub weight: f64,
}

impl<'a> Span<'a> {
    pub fn new(seq: &'a [TokenId], start: usize, weight: f64) -> Self {
        Span { seq, start, weight }
    }
}

/// Batch-local table of first-layer slot projections and their pending
/// gradients. Valid only while the parameters it was filled from are unchanged.
struct SlotCache {
    hidden: usize,
    vocab: usize,
    proj: Vec<f64>,
    proj_ready: Vec<bool>,
    pending: Vec<f64>,
    touched: Vec<bool>,
}

impl SlotCache {
    fn new(cfg: &ModelConfig) -> Self {
        let slots = cfg.context_window * cfg.vocab_size;
        SlotCache {
            hidden: cfg.hidden_dim,
            vocab: cfg.vocab_size,
            proj: vec![0.0; slots * cfg.hidden_dim],
            proj_ready: vec![false; slots],
            pending: Vec::new(),
            touched: vec![false; slots],
        }
    }

    fn projection(&mut self, model: &ModelParams, j: usize, tok: TokenId) -> &[f64] {
        let slot = j * self.vocab + tok;
        let range = slot * self.hidden..(slot + 1) * self.hidden;
        if !self.proj_ready[slot] {
            model.slot_projection(j, tok, &mut self.proj[range.clone()]);
            self.proj_ready[slot] = true;
        }
        &self.proj[range]
    }

    fn accumulate(&mut self, j: usize, tok: TokenId, dz: &[f64]) {
        if self.pending.is_empty() {
            self.pending = vec![0.0; self.proj.len()];
        }
        let slot = j * self.vocab + tok;
        self.touched[slot] = true;
        for (p, g) in self.pending[slot * self.hidden..(slot + 1) * self.hidden]
            .iter_mut()
            .zip(dz)
        {
            *p += g;
        }
    }

    fn flush(&mut self, model: &ModelParams, grad: &mut [f64]) {
        for slot in 0..self.touched.len() {
            if self.touched[slot] {
                let (j, tok) = (slot / self.vocab, slot % self.vocab);
                model.slot_backward(
                    j,
                    tok,
                    &self.pending[slot * self.hidden..(slot + 1) * self.hidden],
                    grad,
                );
                self.touched[slot] = false;
            }
        }
        self.pending.clear();
    }
}

pub fn init_model(config: &ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let layout = Layout::new(config);
    let mut theta = vec![0.0; layout.len];
    let mut rng = rng_from_seed(config.seed);
    let mut fill = |range: std::ops::Range<usize>, std: f64, rng: &mut Rng| {
        let normal = Normal::new(0.0, std).expect("positive std");
        for x in &mut theta[range] {
            *x = normal.sample(rng);
        }
    };
    let (v, d, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
    fill(layout.emb..layout.emb + v * d, 1.0, &mut rng);
    for (l, layer) in layout.layers.iter().enumerate() {
        // first layer: only a handful of window slots are occupied
        let scale = if l == 0 {
            1.0 / ((4 * d) as f64).sqrt()
        } else {
            1.0 / (h as f64).sqrt()
        };
        fill(layer.w..layer.w + h * layer.fan_in, scale, &mut rng);
    }
    fill(layout.out_w..layout.out_w + v * h, 1.0 / (h as f64).sqrt(), &mut rng);
    Ok(ModelParams {
        config: config.clone(),
        layout,
        theta,
    })
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl ModelParams {
    pub fn from_parts(config: ModelConfig, theta: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if theta.len() != layout.len {
            return Err(Error::Invalid(format!(
                "parameter vector has {} entries, config requires {}",
                theta.len(),
                layout.len
            )));
        }
        Ok(ModelParams { config, layout, theta })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// theta <- theta + scale * direction
    pub fn axpy(&mut self, scale: f64, direction: &[f64]) -> Result<()> {
        assert_eq!(direction.len(), self.theta.len());
        for (t, g) in self.theta.iter_mut().zip(direction) {
            *t += scale * g;
        }
        if self.theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("parameter update produced a non-finite value".into()));
        }
        Ok(())
    }

    /// Mutable access for tests and perturbation experiments.
    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Sets the output projection and bias to zero, making every next-token
    /// distribution uniform.
    pub fn zero_output_layer(&mut self) {
        let (v, h) = (self.config.vocab_size, self.config.hidden_dim);
        self.theta[self.layout.out_w..self.layout.out_w + v * h].fill(0.0);
        self.theta[self.layout.out_b..self.layout.out_b + v].fill(0.0);
    }

    /// Range of the output projection rows for one token (for perturbation tests).
    pub fn output_row(&self, token: TokenId) -> std::ops::Range<usize> {
        let h = self.config.hidden_dim;
        let start = self.layout.out_w + token * h;
        start..start + h
    }

    pub fn output_bias(&self, token: TokenId) -> usize {
        self.layout.out_b + token
    }

    /// SHA-256 of the little-endian parameter bytes, hex encoded.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for x in &self.theta {
            hasher.update(x.to_le_bytes());
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check_tokens(&self, seq: &[TokenId]) -> Result<()> {
        match seq.iter().find(|&&t| t >= self.config.vocab_size) {
            Some(t) => Err(Error::Invalid(format!(
                "token id {t} outside vocabulary of size {}",
                self.config.vocab_size
            ))),
            None => Ok(()),
        }
    }

    fn check_prefix(&self, prefix: &[TokenId]) -> Result<()> {
        if prefix.is_empty() {
            return Err(Error::Invalid("prefix must be nonempty".into()));
        }
        if prefix.len() > self.config.context_window {
            return Err(Error::Invalid(format!(
                "prefix of length {} exceeds context window {}",
                prefix.len(),
                self.config.context_window
            )));
        }
        self.check_tokens(prefix)
    }

    fn check_span(&self, span: &Span<'_>) -> Result<()> {
        if span.start == 0 {
            return Err(Error::Invalid("a scored span needs at least one context token".into()));
        }
        if span.start > span.seq.len() {
            return Err(Error::Invalid("span start beyond sequence end".into()));
        }
        if span.seq.len() > span.start && span.seq.len() - 1 > self.config.context_window {
            return Err(Error::Invalid(format!(
                "sequence of length {} exceeds context window {}",
                span.seq.len(),
                self.config.context_window
            )));
        }
        self.check_tokens(span.seq)
    }

    fn window(&self, context: &[TokenId]) -> Vec<(usize, TokenId)> {
        context
            .iter()
            .rev()
            .take(self.config.context_window)
            .enumerate()
            .map(|(j, &t)| (j, t))
            .collect()
    }

    /// Pre-activation contribution of token `tok` sitting in window slot `j`.
    fn slot_projection(&self, j: usize, tok: TokenId, out: &mut [f64]) {
        let d = self.config.embed_dim;
        let first = &self.layout.layers[0];
        let e = &self.theta[self.layout.emb + tok * d..self.layout.emb + (tok + 1) * d];
        for (unit, o) in out.iter_mut().enumerate() {
            let row = first.w + unit * first.fan_in + j * d;
            *o = self.theta[row..row + d].iter().zip(e).map(|(a, b)| a * b).sum();
        }
    }

    fn forward(&self, context: &[TokenId], mut cache: Option<&mut SlotCache>) -> Activations {
        let cfg = &self.config;
        let (h, v) = (cfg.hidden_dim, cfg.vocab_size);
        let window = self.window(context);
        let theta = &self.theta;
        let mut layers = Vec::with_capacity(cfg.n_layers);

        let first = &self.layout.layers[0];
        let mut z = theta[first.b..first.b + h].to_vec();
        let mut scratch = vec![0.0; h];
        for &(j, tok) in &window {
            let contribution = match cache.as_deref_mut() {
                Some(c) => c.projection(self, j, tok),
                None => {
                    self.slot_projection(j, tok, &mut scratch);
                    &scratch[..]
                }
            };
            for (zu, c) in z.iter_mut().zip(contribution) {
                *zu += c;
            }
        }
        for zu in &mut z {
            *zu = zu.tanh();
        }
        layers.push(z);

        for layer in &self.layout.layers[1..] {
            let prev = layers.last().expect("first layer present");
            let a: Vec<f64> = (0..h)
                .map(|unit| {
                    let row = &theta[layer.w + unit * h..layer.w + (unit + 1) * h];
                    (theta[layer.b + unit] + row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>()).tanh()
                })
                .collect();
            layers.push(a);
        }

        let top = layers.last().expect("at least one layer");
        let logits = (0..v)
            .map(|tok| {
                let row = &theta[self.layout.out_w + tok * h..self.layout.out_w + (tok + 1) * h];
                theta[self.layout.out_b + tok] + row.iter().zip(top).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Activations { window, layers, logits }
    }

    /// Accumulates d(sum_v dlogits[v] * logits[v]) / d theta into `grad`.
    /// First-layer terms go to the cache when one is supplied and must be
    /// flushed with `SlotCache::flush`.
    fn backward(&self, act: &Activations, dlogits: &[f64], grad: &mut [f64], cache: Option<&mut SlotCache>) {
        let cfg = &self.config;
        let h = cfg.hidden_dim;
        let theta = &self.theta;
        let top = act.layers.last().expect("at least one layer");

        let mut da = vec![0.0; h];
        for (tok, &g) in dlogits.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let w = self.layout.out_w + tok * h;
            grad[self.layout.out_b + tok] += g;
            for ((gw, &a), (&wt, dak)) in grad[w..w + h]
                .iter_mut()
                .zip(top)
                .zip(theta[w..w + h].iter().zip(da.iter_mut()))
            {
                *gw += g * a;
                *dak += g * wt;
            }
        }

        for l in (1..cfg.n_layers).rev() {
            let layer = &self.layout.layers[l];
            let a = &act.layers[l];
            let prev = &act.layers[l - 1];
            let mut dprev = vec![0.0; h];
            for unit in 0..h {
                let g = da[unit] * (1.0 - a[unit] * a[unit]);
                grad[layer.b + unit] += g;
                let row = layer.w + unit * h;
                for k in 0..h {
                    grad[row + k] += g * prev[k];
                    dprev[k] += g * theta[row + k];
                }
            }
            da = dprev;
        }

        let first = &self.layout.layers[0];
        let a = &act.layers[0];
        let dz: Vec<f64> = da.iter().zip(a).map(|(g, y)| g * (1.0 - y * y)).collect();
        for (unit, &g) in dz.iter().enumerate() {
            grad[first.b + unit] += g;
        }
        match cache {
            Some(c) => {
                for &(j, tok) in &act.window {
                    c.accumulate(j, tok, &dz);
                }
            }
            None => {
                for &(j, tok) in &act.window {
                    self.slot_backward(j, tok, &dz, grad);
                }
            }
        }
    }

    /// Chain rule through `slot_projection` for upstream gradient `dz`.
    fn slot_backward(&self, j: usize, tok: TokenId, dz: &[f64], grad: &mut [f64]) {
        let d = self.config.embed_dim;
        let first = &self.layout.layers[0];
        let e = self.layout.emb + tok * d;
        for (unit, &g) in dz.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = first.w + unit * first.fan_in + j * d;
            for k in 0..d {
                grad[row + k] += g * self.theta[e + k];
                grad[e + k] += g * self.theta[row + k];
            }
        }
    }

    /// Log-probability of `span` and, when `grad` is given, accumulation of
    /// `weight * d(log p)/d theta` into it.
    fn span_pass(&self, span: &Span<'_>, mut grad: Option<&mut [f64]>, mut cache: Option<&mut SlotCache>) -> f64 {
        let mut total = 0.0;
        for i in span.start..span.seq.len() {
            let act = self.forward(&span.seq[..i], cache.as_deref_mut());
            let logp = log_softmax(&act.logits);
            let target = span.seq[i];
            total += logp[target];
            if let Some(g) = grad.as_deref_mut() {
                if span.weight != 0.0 {
                    let dlogits: Vec<f64> = logp
                        .iter()
                        .enumerate()
                        .map(|(v, lp)| span.weight * (f64::from(u8::from(v == target)) - lp.exp()))
                        .collect();
                    self.backward(&act, &dlogits, g, cache.as_deref_mut());
                }
            }
        }
        total
    }

    pub fn next_token_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        self.check_prefix(prefix)?;
        Ok(log_softmax(&self.forward(prefix, None).logits))
    }

    pub fn next_token_dist(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        self.check_prefix(prefix)?;
        Ok(softmax(&self.forward(prefix, None).logits))
    }

    /// Greedy next token, ties to the lowest id.
    pub fn greedy_next(&self, prefix: &[TokenId]) -> Result<TokenId> {
        self.check_prefix(prefix)?;
        Ok(argmax(&self.forward(prefix, None).logits))
    }

    /// log p(continuation | prefix); zero for an empty continuation.
    pub fn cond_logprob(&self, prefix: &[TokenId], continuation: &[TokenId]) -> Result<f64> {
        if continuation.is_empty() {
            return Ok(0.0);
        }
        let seq = [prefix, continuation].concat();
        let span = Span::new(&seq, prefix.len(), 1.0);
        self.check_span(&span)?;
        Ok(self.span_pass(&span, None, None))
    }

    /// Log-likelihood of everything after the first token.
    pub fn seq_logprob(&self, seq: &[TokenId]) -> Result<f64> {
        if seq.is_empty() {
            return Err(Error::Invalid("empty sequence".into()));
        }
        self.cond_logprob(&seq[..1], &seq[1..])
    }

    /// Per-position log-probabilities of `seq[1..]`.
    pub fn token_logprobs(&self, seq: &[TokenId]) -> Result<Vec<f64>> {
        let span = Span::new(seq, 1, 0.0);
        self.check_span(&span)?;
        Ok((1..seq.len())
            .map(|i| log_softmax(&self.forward(&seq[..i], None).logits)[seq[i]])
            .collect())
    }

    pub fn grad_cond_logprob(&self, prefix: &[TokenId], continuation: &[TokenId]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.len()];
        if continuation.is_empty() {
            return Ok(grad);
        }
        let seq = [prefix, continuation].concat();
        let span = Span::new(&seq, prefix.len(), 1.0);
        self.check_span(&span)?;
        self.span_pass(&span, Some(&mut grad), None);
        finite_or_err(&grad, "log-probability gradient")?;
        Ok(grad)
    }

    /// Log-probability of every span (no gradient).
    pub fn span_logprobs(&self, spans: &[Span<'_>]) -> Result<Vec<f64>> {
        for s in spans {
            self.check_span(s)?;
        }
        let mut cache = SlotCache::new(&self.config);
        Ok(spans
            .iter()
            .map(|s| self.span_pass(s, None, Some(&mut cache)))
            .collect())
    }

    /// Gradient of `sum_i weight_i * log p(span_i)` plus the per-span
    /// log-probabilities.
    pub fn weighted_grad(&self, spans: &[Span<'_>]) -> Result<(Vec<f64>, Vec<f64>)> {
        for s in spans {
            self.check_span(s)?;
        }
        let mut cache = SlotCache::new(&self.config);
        let mut grad = vec![0.0; self.len()];
        let logps = spans
            .iter()
            .map(|s| self.span_pass(s, Some(&mut grad), Some(&mut cache)))
            .collect();
        cache.flush(self, &mut grad);
        finite_or_err(&grad, "batch gradient")?;
        Ok((grad, logps))
    }

    /// Greedy next token for each prefix.
    pub fn greedy_batch(&self, prefixes: &[TokenSeq]) -> Result<Vec<TokenId>> {
        for p in prefixes {
            self.check_prefix(p)?;
        }
        let mut cache = SlotCache::new(&self.config);
        Ok(prefixes
            .iter()
            .map(|p| argmax(&self.forward(p, Some(&mut cache)).logits))
            .collect())
    }

    pub fn greedy_decode(&self, prefix: &[TokenId], max_len: usize) -> Result<TokenSeq> {
        self.check_prefix(prefix)?;
        let mut out = prefix.to_vec();
        for _ in 0..max_len {
            if out.len() > self.config.context_window {
                break;
            }
            let next = argmax(&self.forward(&out, None).logits);
            out.push(next);
            if next == EOS {
                break;
            }
        }
        Ok(out)
    }

    /// One token drawn from the temperature-scaled next-token distribution.
    pub fn sample_next(&self, prefix: &[TokenId], temperature: f64, rng: &mut Rng) -> Result<TokenId> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Invalid(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        self.check_prefix(prefix)?;
        let scaled: Vec<f64> = self
            .forward(prefix, None)
            .logits
            .iter()
            .map(|l| l / temperature)
            .collect();
        let probs = softmax(&scaled);
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        for (tok, p) in probs.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                return Ok(tok);
            }
        }
        // rounding left u above the final cumulative sum
        Ok(probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1))
    }

    pub fn sample_decode(
        &self,
        prefix: &[TokenId],
        temperature: f64,
        rng: &mut Rng,
        max_len: usize,
    ) -> Result<TokenSeq> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Invalid(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        self.check_prefix(prefix)?;
        let mut out = prefix.to_vec();
        for _ in 0..max_len {
            if out.len() > self.config.context_window {
                break;
            }
            let next = self.sample_next(&out, temperature, rng)?;
            out.push(next);
            if next == EOS {
                break;
            }
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = &self.config;
        let mut out = Vec::with_capacity(64 + 8 * self.theta.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for field in [
            cfg.vocab_size as u64,
            cfg.context_window as u64,
            cfg.embed_dim as u64,
            cfg.hidden_dim as u64,
            cfg.n_layers as u64,
            cfg.seed,
            self.theta.len() as u64,
        ] {
            out.extend_from_slice(&field.to_le_bytes());
        }
        for x in &self.theta {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut reader = bytes;
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic).map_err(|_| "truncated header")?;
        if &magic != CHECKPOINT_MAGIC {
            return Err("bad magic".into());
        }
        let mut word = [0u8; 4];
        reader.read_exact(&mut word).map_err(|_| "truncated header")?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let mut next_u64 = || -> std::result::Result<u64, String> {
            let mut b = [0u8; 8];
            reader.read_exact(&mut b).map_err(|_| "truncated header".to_string())?;
            Ok(u64::from_le_bytes(b))
        };
        let config = ModelConfig {
            vocab_size: next_u64()? as usize,
            context_window: next_u64()? as usize,
            embed_dim: next_u64()? as usize,
            hidden_dim: next_u64()? as usize,
            n_layers: next_u64()? as usize,
            seed: next_u64()?,
        };
        let n = next_u64()? as usize;
        let body = &bytes[bytes.len() - reader.len()..];
        if body.len() != n * 8 {
            return Err(format!("expected {n} parameters, found {} bytes", body.len()));
        }
        let theta = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        ModelParams::from_parts(config, theta).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|message| Error::Format {
            path: path.to_path_buf(),
            message,
        })
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"CULM";
const CHECKPOINT_VERSION: u32 = 1;

fn finite_or_err(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} contains non-finite entries")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneReport {
    /// Mean per-token NLL before each epoch's update.
    pub losses: Vec<f64>,
    /// Mean per-token NLL after the last update.
    pub final_loss: f64,
}

/// Mean per-token negative log-likelihood over `corpus`.
pub fn corpus_nll(params: &ModelParams, corpus: &[TokenSeq]) -> Result<f64> {
    let spans: Vec<Span<'_>> = corpus.iter().map(|s| Span::new(s, 1, 0.0)).collect();
    let n_tokens: usize = corpus.iter().map(|s| s.len().saturating_sub(1)).sum();
    let total: f64 = params.span_logprobs(&spans)?.iter().sum();
    Ok(-total / n_tokens as f64)
}

/// Full-batch gradient descent at a fixed learning rate on the mean
/// per-token NLL of `corpus`.
pub fn finetune(
    params: &ModelParams,
    corpus: &[TokenSeq],
    epochs: usize,
    lr: f64,
) -> Result<(ModelParams, FinetuneReport)> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Invalid(format!("learning rate must be positive, got {lr}")));
    }
    if corpus.is_empty() {
        return Err(Error::Invalid("empty fine-tuning corpus".into()));
    }
    let n_tokens: usize = corpus.iter().map(|s| s.len().saturating_sub(1)).sum();
    if n_tokens == 0 {
        return Err(Error::Invalid("corpus has no scored tokens".into()));
    }
    let weight = 1.0 / n_tokens as f64;
    let spans: Vec<Span<'_>> = corpus.iter().map(|s| Span::new(s, 1, weight)).collect();
    let mut current = params.clone();
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let (grad, logps) = current
            .weighted_grad(&spans)
            .map_err(|e| Error::Numerical(format!("fine-tuning diverged at epoch {epoch}: {e}")))?;
        let loss = -logps.iter().sum::<f64>() / n_tokens as f64;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("fine-tuning loss is NaN at epoch {epoch}")));
        }
        losses.push(loss);
        current
            .axpy(lr, &grad)
            .map_err(|_| Error::Numerical(format!("fine-tuning diverged at epoch {epoch}")))?;
    }
    let final_loss = corpus_nll(&current, corpus)?;
    if !final_loss.is_finite() {
        return Err(Error::Numerical(format!("fine-tuning loss is NaN at epoch {epochs}")));
    }
    Ok((current, FinetuneReport { losses, final_loss }))
}
