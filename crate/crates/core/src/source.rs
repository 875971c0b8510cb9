//! Synthetic token source and downstream task head.
//!
//! Token sequences come from a first-order Markov chain over a `K`-ary
//! alphabet. Each token indexes a row of an embedding table; a linear
//! softmax head reads a position-weighted pool of the embeddings. The
//! label of a sample is the head's own decision on the clean sequence, so
//! a perfect link always classifies correctly and every loss of accuracy
//! is due to the channel.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose, StreamRng};

pub type Token = u32;

/// `ceil(log2(k))`, with a minimum of one bit.
pub fn bits_for_alphabet(k: usize) -> usize {
    let mut m = 0;
    while (1usize << m) < k {
        m += 1;
    }
    m.max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    pub alphabet_size: usize,
}

impl TokenSequence {
    pub fn new(tokens: Vec<Token>, alphabet_size: usize) -> Result<Self> {
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= alphabet_size) {
            return Err(Error::TokenOutOfRange { token: t, alphabet: alphabet_size });
        }
        Ok(Self { tokens, alphabet_size })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn bits_per_token(&self) -> usize {
        bits_for_alphabet(self.alphabet_size)
    }
}

/// First-order Markov transition structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransitionKernel {
    /// Explicit `K x K` row-stochastic matrix, row-major.
    Dense { initial: Vec<f64>, rows: Vec<f64> },
    /// `P(b | a) = stay * [a == b] + (1 - stay) * base[b]`, initial = `base`.
    /// Lets large alphabets run without a `K^2` matrix.
    Sticky { stay: f64, base: Vec<f64> },
}

fn dirichlet_ones(k: usize, rng: &mut StreamRng) -> Vec<f64> {
    let gamma = Gamma::new(1.0, 1.0).expect("valid gamma");
    let mut v: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn sample_categorical(p: impl Iterator<Item = f64>, rng: &mut StreamRng) -> Token {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, pk) in p.enumerate() {
        if pk > 0.0 {
            last = k;
        }
        acc += pk;
        if u < acc {
            return k as Token;
        }
    }
    last as Token
}

impl TransitionKernel {
    /// Dense kernel with a fixed self-transition mass and a random
    /// (flat-Dirichlet) remainder per row. Initial distribution uniform.
    pub fn random_sticky(k: usize, stay: f64, rng: &mut StreamRng) -> Self {
        let mut rows = Vec::with_capacity(k * k);
        for a in 0..k {
            let d = dirichlet_ones(k, rng);
            rows.extend(d.iter().enumerate().map(|(b, &x)| (1.0 - stay) * x + if a == b { stay } else { 0.0 }));
        }
        TransitionKernel::Dense { initial: vec![1.0 / k as f64; k], rows }
    }

    /// Sticky kernel sharing one flat-Dirichlet base across rows; `O(K)` memory.
    pub fn random_shared_sticky(k: usize, stay: f64, rng: &mut StreamRng) -> Self {
        TransitionKernel::Sticky { stay, base: dirichlet_ones(k, rng) }
    }

    pub fn alphabet_size(&self) -> usize {
        match self {
            TransitionKernel::Dense { initial, .. } => initial.len(),
            TransitionKernel::Sticky { base, .. } => base.len(),
        }
    }

    pub fn initial(&self, k: usize) -> f64 {
        match self {
            TransitionKernel::Dense { initial, .. } => initial[k],
            TransitionKernel::Sticky { base, .. } => base[k],
        }
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        match self {
            TransitionKernel::Dense { initial, rows } => rows[from * initial.len() + to],
            TransitionKernel::Sticky { stay, base } => (1.0 - stay) * base[to] + if from == to { *stay } else { 0.0 },
        }
    }

    /// `v^T P`: propagate a (possibly unnormalized) distribution one step.
    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        match self {
            TransitionKernel::Dense { initial, rows } => {
                let k = initial.len();
                let mut out = vec![0.0; k];
                for (a, &va) in v.iter().enumerate() {
                    if va == 0.0 {
                        continue;
                    }
                    for (o, &p) in out.iter_mut().zip(&rows[a * k..(a + 1) * k]) {
                        *o += va * p;
                    }
                }
                out
            }
            TransitionKernel::Sticky { stay, base } => {
                let total: f64 = v.iter().sum();
                v.iter().zip(base).map(|(&va, &b)| stay * va + (1.0 - stay) * b * total).collect()
            }
        }
    }

    /// `P u`: pull a likelihood vector back one step.
    pub fn backward(&self, u: &[f64]) -> Vec<f64> {
        match self {
            TransitionKernel::Dense { initial, rows } => {
                let k = initial.len();
                (0..k).map(|a| rows[a * k..(a + 1) * k].iter().zip(u).map(|(p, x)| p * x).sum()).collect()
            }
            TransitionKernel::Sticky { stay, base } => {
                let mix: f64 = base.iter().zip(u).map(|(b, x)| b * x).sum();
                u.iter().map(|&x| stay * x + (1.0 - stay) * mix).collect()
            }
        }
    }

    pub fn sample_initial(&self, rng: &mut StreamRng) -> Token {
        let k = self.alphabet_size();
        sample_categorical((0..k).map(|b| self.initial(b)), rng)
    }

    pub fn sample_next(&self, from: Token, rng: &mut StreamRng) -> Token {
        match self {
            TransitionKernel::Dense { initial, rows } => {
                let k = initial.len();
                let a = from as usize;
                sample_categorical(rows[a * k..(a + 1) * k].iter().copied(), rng)
            }
            TransitionKernel::Sticky { stay, base } => {
                if rng.random::<f64>() < *stay {
                    from
                } else {
                    sample_categorical(base.iter().copied(), rng)
                }
            }
        }
    }

    /// Most probable token under the stationary distribution (power
    /// iteration from the initial distribution, ties to the lowest index).
    pub fn stationary_mode(&self) -> Token {
        let k = self.alphabet_size();
        let mut v: Vec<f64> = (0..k).map(|b| self.initial(b)).collect();
        for _ in 0..1000 {
            let next = self.forward(&v);
            let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
            v = next;
            if delta < 1e-14 {
                break;
            }
        }
        argmax_lowest(&v) as Token
    }

    fn validate(&self) -> Result<()> {
        let k = self.alphabet_size();
        let check = |name: &str, s: f64| {
            if (s - 1.0).abs() > 1e-9 {
                Err(Error::InvalidSource(format!("{name} sums to {s}")))
            } else {
                Ok(())
            }
        };
        let init_sum: f64 = (0..k).map(|b| self.initial(b)).sum();
        check("initial distribution", init_sum)?;
        match self {
            TransitionKernel::Dense { rows, .. } => {
                if rows.len() != k * k {
                    return Err(Error::InvalidSource("transition matrix is not K x K".into()));
                }
                if rows.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::InvalidSource("transition entry outside [0,1]".into()));
                }
                for a in 0..k {
                    check(&format!("transition row {a}"), rows[a * k..(a + 1) * k].iter().sum())?;
                }
            }
            TransitionKernel::Sticky { stay, base } => {
                if !(0.0..=1.0).contains(stay) || base.iter().any(|&p| p < 0.0) {
                    return Err(Error::InvalidSource("sticky kernel out of range".into()));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub alphabet_size: usize,
    pub sequence_length: usize,
    pub bits_per_token: usize,
    pub kernel: TransitionKernel,
    pub seed: u64,
}

impl SourceModel {
    pub fn new(sequence_length: usize, kernel: TransitionKernel, seed: u64) -> Result<Self> {
        let alphabet_size = kernel.alphabet_size();
        if alphabet_size < 2 {
            return Err(Error::InvalidSource("alphabet size must be at least 2".into()));
        }
        if sequence_length < 1 {
            return Err(Error::InvalidSource("sequence length must be at least 1".into()));
        }
        kernel.validate()?;
        Ok(Self { alphabet_size, sequence_length, bits_per_token: bits_for_alphabet(alphabet_size), kernel, seed })
    }

    /// Random sticky dense kernel drawn from `seed`.
    pub fn random_sticky(alphabet_size: usize, sequence_length: usize, stay: f64, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, Purpose::Kernel, &[]);
        let kernel = TransitionKernel::random_sticky(alphabet_size, stay, &mut r);
        Self::new(sequence_length, kernel, seed)
    }

    pub fn sample_tokens(&self, rng: &mut StreamRng) -> TokenSequence {
        let mut tokens = Vec::with_capacity(self.sequence_length);
        let mut t = self.kernel.sample_initial(rng);
        tokens.push(t);
        for _ in 1..self.sequence_length {
            t = self.kernel.sample_next(t, rng);
            tokens.push(t);
        }
        TokenSequence { tokens, alphabet_size: self.alphabet_size }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingTable {
    alphabet_size: usize,
    dim: usize,
    rows: Vec<f64>,
    #[serde(skip)]
    diameter: OnceLock<f64>,
}

impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.alphabet_size == other.alphabet_size && self.dim == other.dim && self.rows == other.rows
    }
}

impl EmbeddingTable {
    pub fn new(alphabet_size: usize, dim: usize, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != alphabet_size * dim {
            return Err(Error::ShapeMismatch(format!(
                "embedding table has {} entries, expected {}x{}",
                rows.len(),
                alphabet_size,
                dim
            )));
        }
        if rows.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSource("non-finite embedding entry".into()));
        }
        Ok(Self { alphabet_size, dim, rows, diameter: OnceLock::new() })
    }

    /// Standard normal entries.
    pub fn random(alphabet_size: usize, dim: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, Purpose::Embedding, &[]);
        let rows = (0..alphabet_size * dim).map(|_| StandardNormal.sample(&mut r)).collect();
        Self { alphabet_size, dim, rows, diameter: OnceLock::new() }
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, token: Token) -> &[f64] {
        let k = token as usize;
        &self.rows[k * self.dim..(k + 1) * self.dim]
    }

    /// Largest Euclidean distance between two rows.
    pub fn diameter(&self) -> f64 {
        *self.diameter.get_or_init(|| {
            let mut best = 0.0f64;
            for a in 0..self.alphabet_size {
                for b in a + 1..self.alphabet_size {
                    let d2: f64 =
                        self.row(a as Token).iter().zip(self.row(b as Token)).map(|(x, y)| (x - y) * (x - y)).sum();
                    best = best.max(d2);
                }
            }
            best.sqrt()
        })
    }
}

/// `L x D` embedding matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub len: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl EmbeddingSequence {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn embed(tokens: &TokenSequence, table: &EmbeddingTable) -> Result<EmbeddingSequence> {
    embed_slice(&tokens.tokens, table)
}

pub fn embed_slice(tokens: &[Token], table: &EmbeddingTable) -> Result<EmbeddingSequence> {
    let mut data = Vec::with_capacity(tokens.len() * table.dim);
    for &t in tokens {
        if t as usize >= table.alphabet_size {
            return Err(Error::TokenOutOfRange { token: t, alphabet: table.alphabet_size });
        }
        data.extend_from_slice(table.row(t));
    }
    Ok(EmbeddingSequence { len: tokens.len(), dim: table.dim, data })
}

/// How positions are pooled before the linear layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pooling {
    Mean,
    /// Fixed per-position weights (should sum to 1).
    Weighted {
        weights: Vec<f64>,
    },
}

impl Pooling {
    /// Bump-shaped salience profile peaking mid-sequence:
    /// `1 + peak * exp(-((i - c) / (L / 6))^2)`, normalized to sum 1.
    pub fn centered(len: usize, peak: f64) -> Self {
        let c = (len as f64 - 1.0) / 2.0;
        let width = (len as f64 / 6.0).max(0.5);
        let raw: Vec<f64> = (0..len)
            .map(|i| {
                let z = (i as f64 - c) / width;
                1.0 + peak * (-z * z).exp()
            })
            .collect();
        let s: f64 = raw.iter().sum();
        Pooling::Weighted { weights: raw.into_iter().map(|x| x / s).collect() }
    }

    pub fn weight(&self, i: usize, len: usize) -> f64 {
        match self {
            Pooling::Mean => 1.0 / len as f64,
            Pooling::Weighted { weights } => weights[i],
        }
    }
}

/// Linear softmax classifier over pooled embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskHead {
    pub classes: usize,
    pub dim: usize,
    /// `C x D`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub pooling: Pooling,
}

impl TaskHead {
    pub fn new(classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>, pooling: Pooling) -> Result<Self> {
        if weights.len() != classes * dim || bias.len() != classes || classes == 0 {
            return Err(Error::ShapeMismatch("task head weights/bias".into()));
        }
        Ok(Self { classes, dim, weights, bias, pooling })
    }

    /// Gaussian weights with standard deviation `scale`, zero bias.
    pub fn random(classes: usize, dim: usize, scale: f64, pooling: Pooling, seed: u64) -> Self {
        let mut r = rng::stream(seed, Purpose::Head, &[]);
        let weights = (0..classes * dim)
            .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut r))
            .collect::<Vec<f64>>();
        Self { classes, dim, weights, bias: vec![0.0; classes], pooling }
    }

    pub fn pooled(&self, z: &EmbeddingSequence) -> Vec<f64> {
        let mut p = vec![0.0; z.dim];
        for i in 0..z.len {
            let a = self.pooling.weight(i, z.len);
            for (pd, e) in p.iter_mut().zip(z.row(i)) {
                *pd += a * e;
            }
        }
        p
    }

    pub fn logits(&self, z: &EmbeddingSequence) -> Vec<f64> {
        let pooled = self.pooled(z);
        (0..self.classes)
            .map(|c| {
                self.bias[c]
                    + self.weights[c * self.dim..(c + 1) * self.dim]
                        .iter()
                        .zip(&pooled)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn probabilities(&self, z: &EmbeddingSequence) -> Vec<f64> {
        softmax(&self.logits(z))
    }

    pub fn predict(&self, z: &EmbeddingSequence) -> usize {
        argmax_lowest(&self.logits(z))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mx + v.iter().map(|&x| (x - mx).exp()).sum::<f64>().ln()
}

/// Cross-entropy of the head's softmax against `label`.
pub fn task_loss(head: &TaskHead, z: &EmbeddingSequence, label: usize) -> f64 {
    let logits = head.logits(z);
    (log_sum_exp(&logits) - logits[label]).max(0.0)
}

/// Analytic `dL/de_i` for every position: `a_i * W^T (softmax - onehot)`.
pub fn loss_gradient_wrt_embeddings(head: &TaskHead, z: &EmbeddingSequence, label: usize) -> EmbeddingSequence {
    let mut delta = head.probabilities(z);
    delta[label] -= 1.0;
    let mut back = vec![0.0; head.dim];
    for (c, &dc) in delta.iter().enumerate() {
        for (b, w) in back.iter_mut().zip(&head.weights[c * head.dim..(c + 1) * head.dim]) {
            *b += dc * w;
        }
    }
    let mut data = Vec::with_capacity(z.len * z.dim);
    for i in 0..z.len {
        let a = head.pooling.weight(i, z.len);
        data.extend(back.iter().map(|b| a * b));
    }
    EmbeddingSequence { len: z.len, dim: z.dim, data }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub tokens: TokenSequence,
    pub label: usize,
}

/// Draw a token sequence and label it with the head's clean decision.
pub fn sample(model: &SourceModel, table: &EmbeddingTable, head: &TaskHead, rng_seed: u64) -> LabeledSample {
    let mut r = rng::stream(rng_seed, Purpose::Sample, &[]);
    sample_with(model, table, head, &mut r)
}

pub fn sample_with(model: &SourceModel, table: &EmbeddingTable, head: &TaskHead, rng: &mut StreamRng) -> LabeledSample {
    let tokens = model.sample_tokens(rng);
    let z = embed(&tokens, table).expect("sampled tokens are in range");
    let label = head.predict(&z);
    LabeledSample { tokens, label }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub const SUP_GRID_POINTS: usize = 101;
pub const SUP_SAFETY_FACTOR: f64 = 1.05;

/// Check the utility-weighted loss-degradation bound for one decoded
/// sequence. The per-position path supremum of the gradient norm is taken
/// over a uniform grid on `[0, 1]` and inflated by [`SUP_SAFETY_FACTOR`].
pub fn verify_prop1_bound(
    clean: &TokenSequence,
    decoded: &TokenSequence,
    table: &EmbeddingTable,
    head: &TaskHead,
    label: usize,
    alpha_grid_size: usize,
) -> Result<BoundCheck> {
    if clean.len() != decoded.len() {
        return Err(Error::ShapeMismatch(format!("clean length {} vs decoded length {}", clean.len(), decoded.len())));
    }
    if alpha_grid_size < 2 {
        return Err(Error::ShapeMismatch("alpha grid needs at least 2 points".into()));
    }
    let z = embed(clean, table)?;
    let zh = embed(decoded, table)?;
    let lhs = (task_loss(head, &zh, label) - task_loss(head, &z, label)).abs();

    let l = z.len;
    let mut w_sup = vec![0.0f64; l];
    let mut path = z.clone();
    for s in 0..alpha_grid_size {
        let alpha = s as f64 / (alpha_grid_size - 1) as f64;
        for ((p, a), b) in path.data.iter_mut().zip(&z.data).zip(&zh.data) {
            *p = a + alpha * (b - a);
        }
        let g = loss_gradient_wrt_embeddings(head, &path, label);
        for (i, w) in w_sup.iter_mut().enumerate() {
            let n = g.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            *w = w.max(n);
        }
    }
    let rhs = table.diameter()
        * clean
            .tokens
            .iter()
            .zip(&decoded.tokens)
            .zip(&w_sup)
            .filter(|((a, b), _)| a != b)
            .map(|(_, w)| SUP_SAFETY_FACTOR * w)
            .sum::<f64>();
    Ok(BoundCheck { lhs, rhs, holds: lhs <= rhs })
}
