//! Filling erased positions.
//!
//! `ExactMarkov` knows the source chain and fills each erased position with
//! its marginal MAP token given the nearest accepted tokens on either side
//! (forward-backward over the erased run). `ModeFill` writes the stationary
//! mode everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::GatedSequence;
use crate::source::{argmax_lowest, Token, TokenSequence, TransitionKernel};

pub trait Completer {
    fn complete(&self, gated: &GatedSequence) -> Result<TokenSequence>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionKind {
    ExactMarkov,
    ModeFill,
}

impl std::str::FromStr for CompletionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_markov" => Ok(Self::ExactMarkov),
            "mode_fill" => Ok(Self::ModeFill),
            other => Err(Error::InvalidConfig(format!("unknown completion model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompletionModel {
    ExactMarkov { kernel: TransitionKernel },
    ModeFill { mode: Token },
}

impl CompletionModel {
    pub fn build(kind: CompletionKind, kernel: &TransitionKernel) -> Self {
        match kind {
            CompletionKind::ExactMarkov => Self::ExactMarkov { kernel: kernel.clone() },
            CompletionKind::ModeFill => Self::ModeFill { mode: kernel.stationary_mode() },
        }
    }

    pub fn kind(&self) -> CompletionKind {
        match self {
            Self::ExactMarkov { .. } => CompletionKind::ExactMarkov,
            Self::ModeFill { .. } => CompletionKind::ModeFill,
        }
    }
}

impl Completer for CompletionModel {
    fn complete(&self, gated: &GatedSequence) -> Result<TokenSequence> {
        match self {
            Self::ModeFill { mode } => {
                TokenSequence::new(gated.tokens.iter().map(|t| t.unwrap_or(*mode)).collect(), gated.alphabet_size)
            }
            Self::ExactMarkov { kernel } => {
                if kernel.alphabet_size() != gated.alphabet_size {
                    return Err(Error::ShapeMismatch(format!(
                        "kernel over {} tokens, sequence over {}",
                        kernel.alphabet_size(),
                        gated.alphabet_size
                    )));
                }
                let mut out: Vec<Token> = gated.tokens.iter().map(|t| t.unwrap_or(0)).collect();
                for (a, b) in erased_runs(&gated.tokens) {
                    let left = if a == 0 { None } else { gated.tokens[a - 1] };
                    let right = gated.tokens.get(b).copied().flatten();
                    let fill = fill_run(kernel, left, right, b - a);
                    out[a..b].copy_from_slice(&fill);
                }
                TokenSequence::new(out, gated.alphabet_size)
            }
        }
    }
}

/// Maximal `[start, end)` ranges of erased positions.
pub fn erased_runs(tokens: &[Option<Token>]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i].is_none() {
            let start = i;
            while i < tokens.len() && tokens[i].is_none() {
                i += 1;
            }
            runs.push((start, i));
        } else {
            i += 1;
        }
    }
    runs
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Per-position marginal MAP over a run of `len` erasures between optional
/// flanking tokens. If the right flank cannot be reached from the left, it
/// is ignored.
pub fn fill_run(kernel: &TransitionKernel, left: Option<Token>, right: Option<Token>, len: usize) -> Vec<Token> {
    let k = kernel.alphabet_size();
    let mut alpha = Vec::with_capacity(len);
    let mut a: Vec<f64> = match left {
        Some(l) => (0..k).map(|b| kernel.prob(l as usize, b)).collect(),
        None => (0..k).map(|b| kernel.initial(b)).collect(),
    };
    normalize(&mut a);
    alpha.push(a);
    for i in 1..len {
        let mut next = kernel.forward(&alpha[i - 1]);
        normalize(&mut next);
        alpha.push(next);
    }

    let mut beta = vec![vec![1.0; k]; len];
    if let Some(r) = right {
        let mut u: Vec<f64> = (0..k).map(|a| kernel.prob(a, r as usize)).collect();
        let reachable: f64 = alpha[len - 1].iter().zip(&u).map(|(x, y)| x * y).sum();
        if reachable > 0.0 {
            normalize(&mut u);
            beta[len - 1] = u;
            for i in (0..len - 1).rev() {
                let mut prev = kernel.backward(&beta[i + 1]);
                normalize(&mut prev);
                beta[i] = prev;
            }
        }
    }

    alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| {
            let post: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
            argmax_lowest(&post) as Token
        })
        .collect()
}
