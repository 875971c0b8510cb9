//! Token/bit mapping and token posteriors from bit LLRs.
//!
//! Tokens are written MSB first with `m = ceil(log2 K)` bits. The posterior
//! over tokens is kept in factored form (one probability per bit, bits
//! treated as independent) and renormalized over the valid codepoints
//! `0..K` when `2^m > K`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::{bits_for_alphabet, Token};

pub fn tokens_to_bits(tokens: &[Token], alphabet_size: usize) -> Result<Vec<u8>> {
    let m = bits_for_alphabet(alphabet_size);
    let mut bits = Vec::with_capacity(tokens.len() * m);
    for &t in tokens {
        if t as usize >= alphabet_size {
            return Err(Error::TokenOutOfRange { token: t, alphabet: alphabet_size });
        }
        bits.extend((0..m).rev().map(|b| ((t >> b) & 1) as u8));
    }
    Ok(bits)
}

/// Inverse of [`tokens_to_bits`]; trailing bits that do not fill a token are dropped.
pub fn bits_to_tokens(bits: &[u8], bits_per_token: usize) -> Vec<Token> {
    bits.chunks_exact(bits_per_token).map(|c| c.iter().fold(0u32, |acc, &b| (acc << 1) | (b & 1) as u32)).collect()
}

/// `P(bit = 0 | llr)`.
fn p_zero(llr: f64) -> f64 {
    if llr >= 0.0 {
        1.0 / (1.0 + (-llr).exp())
    } else {
        let e = llr.exp();
        e / (1.0 + e)
    }
}

fn bit_prob(llr: f64, bit: u8) -> f64 {
    if bit == 0 {
        p_zero(llr)
    } else {
        p_zero(-llr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSequence {
    pub alphabet_size: usize,
    pub bits_per_token: usize,
    /// `L * m` bit LLRs, token-major.
    pub bit_llrs: Vec<f64>,
    /// Probability mass of the valid codepoints under the factored model.
    pub normalizers: Vec<f64>,
    pub hard: Vec<Token>,
    pub confidence: Vec<f64>,
}

impl PosteriorSequence {
    pub fn len(&self) -> usize {
        self.hard.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hard.is_empty()
    }

    fn llrs(&self, i: usize) -> &[f64] {
        &self.bit_llrs[i * self.bits_per_token..(i + 1) * self.bits_per_token]
    }

    /// `p_i(k)`; zero for invalid codepoints.
    pub fn prob(&self, i: usize, k: Token) -> f64 {
        if k as usize >= self.alphabet_size {
            return 0.0;
        }
        let m = self.bits_per_token;
        let raw: f64 =
            self.llrs(i).iter().enumerate().map(|(j, &l)| bit_prob(l, ((k >> (m - 1 - j)) & 1) as u8)).product();
        raw / self.normalizers[i]
    }
}

/// Mass of `0..K` and the MAP codepoint within it, ties to the lowest index.
///
/// Any `k <= K - 1` either equals `K - 1` or first differs from it at a bit
/// where `K - 1` has a one and `k` a zero; the remaining bits are then free.
/// That gives `m + 1` candidate families, visited in increasing index order.
fn valid_mass_and_argmax(llrs: &[f64], alphabet_size: usize) -> (f64, Token, f64) {
    let m = llrs.len();
    let upper = (alphabet_size - 1) as u32;
    let best_bit: Vec<u8> = llrs.iter().map(|&l| u8::from(l < 0.0)).collect();
    let best_p: Vec<f64> = llrs.iter().zip(&best_bit).map(|(&l, &b)| bit_prob(l, b)).collect();
    let mut suffix_max = vec![1.0; m + 1];
    for j in (0..m).rev() {
        suffix_max[j] = suffix_max[j + 1] * best_p[j];
    }

    let mut mass = 0.0;
    let mut prefix_p = 1.0;
    let mut prefix_k = 0u32;
    let mut arg = (0u32, f64::NEG_INFINITY);
    for j in 0..m {
        let shift = m - 1 - j;
        let u = ((upper >> shift) & 1) as u8;
        if u == 1 {
            let p0 = bit_prob(llrs[j], 0);
            mass += prefix_p * p0;
            let val = prefix_p * p0 * suffix_max[j + 1];
            if val > arg.1 {
                let k = best_bit[j + 1..].iter().fold(prefix_k << 1, |acc, &b| (acc << 1) | b as u32);
                arg = (k, val);
            }
        }
        prefix_p *= bit_prob(llrs[j], u);
        prefix_k = (prefix_k << 1) | u as u32;
    }
    mass += prefix_p;
    if prefix_p > arg.1 {
        arg = (upper, prefix_p);
    }
    (mass, arg.0, arg.1)
}

/// Per-token posteriors, hard decisions and confidences from bit LLRs.
pub fn llrs_to_posterior(bit_llrs: &[f64], alphabet_size: usize) -> Result<PosteriorSequence> {
    let m = bits_for_alphabet(alphabet_size);
    if !bit_llrs.len().is_multiple_of(m) {
        return Err(Error::ShapeMismatch(format!("{} LLRs is not a multiple of {m} bits per token", bit_llrs.len())));
    }
    let l = bit_llrs.len() / m;
    let mut normalizers = Vec::with_capacity(l);
    let mut hard = Vec::with_capacity(l);
    let mut confidence = Vec::with_capacity(l);
    for chunk in bit_llrs.chunks_exact(m) {
        let (mass, k, p) = valid_mass_and_argmax(chunk, alphabet_size);
        normalizers.push(mass);
        hard.push(k);
        confidence.push((p / mass).min(1.0));
    }
    Ok(PosteriorSequence {
        alphabet_size,
        bits_per_token: m,
        bit_llrs: bit_llrs.to_vec(),
        normalizers,
        hard,
        confidence,
    })
}
