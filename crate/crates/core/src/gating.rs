//! Confidence gating at the receiver.
//!
//! Outputting token `u` at position `i` costs `w_i * (1 - p_i(u))` in
//! expectation, erasing costs `lambda_i`. The best output is always the MAP
//! token, so the decision collapses to `c_i >= 1 - lambda_i / w_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::Token;
use crate::tokenlink::PosteriorSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesGateSpec {
    pub utility: f64,
    pub erasure_penalty: f64,
}

impl BayesGateSpec {
    pub fn new(utility: f64, erasure_penalty: f64) -> Result<Self> {
        if !(utility > 0.0) || !utility.is_finite() {
            return Err(Error::InvalidGateSpec(format!("utility must be positive, got {utility}")));
        }
        if !(0.0..=utility).contains(&erasure_penalty) {
            return Err(Error::InvalidGateSpec(format!("erasure penalty {erasure_penalty} outside [0, {utility}]")));
        }
        Ok(Self { utility, erasure_penalty })
    }

    pub fn threshold(&self) -> f64 {
        1.0 - self.erasure_penalty / self.utility
    }

    /// Risk of emitting `token` given its posterior probability.
    pub fn output_risk(&self, prob: f64) -> f64 {
        self.utility * (1.0 - prob)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Accept(Token),
    Erase,
}

/// MAP token if `w (1 - c) <= lambda`, erasure otherwise.
pub fn bayes_optimal_action(probs: &[f64], spec: &BayesGateSpec) -> Action {
    let (map, c) = map_token(probs);
    if spec.output_risk(c) <= spec.erasure_penalty {
        Action::Accept(map)
    } else {
        Action::Erase
    }
}

/// Highest-probability entry, ties to the lowest index.
pub fn map_token(probs: &[f64]) -> (Token, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, &p) in probs.iter().enumerate() {
        if p > best.1 {
            best = (k as Token, p);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingPolicy {
    /// One threshold per group, each in `[0, 1]`.
    pub thresholds: Vec<f64>,
}

impl GatingPolicy {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidGateSpec(format!("threshold {t} outside [0, 1]")));
        }
        Ok(Self { thresholds })
    }

    pub fn uniform(groups: usize, tau: f64) -> Result<Self> {
        Self::new(vec![tau; groups])
    }

    /// Thresholds of zero: every hard decision is kept.
    pub fn accept_all(groups: usize) -> Self {
        Self { thresholds: vec![0.0; groups] }
    }

    pub fn groups(&self) -> usize {
        self.thresholds.len()
    }
}

/// Token sequence with erasures (`None`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatedSequence {
    pub tokens: Vec<Option<Token>>,
    pub alphabet_size: usize,
}

impl GatedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn accepted(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_some()).count()
    }

    /// The mask token is `K`, just past the alphabet.
    pub fn mask_token(&self) -> Token {
        self.alphabet_size as Token
    }

    pub fn to_wire(&self) -> Vec<Token> {
        let mask = self.mask_token();
        self.tokens.iter().map(|t| t.unwrap_or(mask)).collect()
    }

    pub fn from_wire(wire: &[Token], alphabet_size: usize) -> Result<Self> {
        let tokens = wire
            .iter()
            .map(|&t| match (t as usize).cmp(&alphabet_size) {
                std::cmp::Ordering::Less => Ok(Some(t)),
                std::cmp::Ordering::Equal => Ok(None),
                std::cmp::Ordering::Greater => Err(Error::TokenOutOfRange { token: t, alphabet: alphabet_size }),
            })
            .collect::<Result<_>>()?;
        Ok(Self { tokens, alphabet_size })
    }
}

/// Threshold rule over raw decisions; `c == tau` accepts.
pub fn gate_decisions(
    hard: &[Token],
    confidence: &[f64],
    group_of: &[usize],
    policy: &GatingPolicy,
    alphabet_size: usize,
) -> Result<GatedSequence> {
    if hard.len() != confidence.len() || hard.len() != group_of.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} decisions, {} confidences, {} group labels",
            hard.len(),
            confidence.len(),
            group_of.len()
        )));
    }
    if let Some(&g) = group_of.iter().find(|&&g| g >= policy.groups()) {
        return Err(Error::GroupCountOutOfRange { groups: g + 1, positions: policy.groups() });
    }
    let tokens = hard
        .iter()
        .zip(confidence)
        .zip(group_of)
        .map(|((&t, &c), &g)| (c >= policy.thresholds[g]).then_some(t))
        .collect();
    Ok(GatedSequence { tokens, alphabet_size })
}

pub fn gate(posteriors: &PosteriorSequence, policy: &GatingPolicy, group_of: &[usize]) -> Result<GatedSequence> {
    gate_decisions(&posteriors.hard, &posteriors.confidence, group_of, policy, posteriors.alphabet_size)
}
