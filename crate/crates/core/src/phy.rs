//! 16QAM over a flat block-fading channel with coherent soft demapping.
//!
//! Label map (per quadrature, first bit of the pair is the sign bit):
//!
//! ```text
//!   bits  00   01   11   10
//!   level -3   -1   +1   +3
//! ```
//!
//! A 4-bit label `b0 b1 b2 b3` maps to `(I(b0 b1) + j Q(b2 b3)) * sqrt(P / 10)`,
//! so `0000` is the corner point `(-3 - 3j) * sqrt(P / 10)`.
//! LLRs use the convention `LLR > 0` means bit 0 is more likely.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

pub type Complex = Complex64;

pub const LLR_CLAMP: f64 = 30.0;
pub const DEFAULT_RICIAN_K: f64 = 5.0;

/// Gray levels indexed by the 2-bit value `b_hi b_lo`.
const LEVEL_OF_PAIR: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];
/// The four PAM levels in ascending order with their bit pairs.
const LEVELS: [(f64, [u8; 2]); 4] = [(-3.0, [0, 0]), (-1.0, [0, 1]), (1.0, [1, 1]), (3.0, [1, 0])];

fn unit_scale(power: f64) -> f64 {
    (power / 10.0).sqrt()
}

/// Constellation point for a 4-bit label (`label` in `0..16`, MSB = `b0`).
pub fn constellation_point(label: u8, power: f64) -> Complex {
    let i = LEVEL_OF_PAIR[(label >> 2) as usize & 3];
    let q = LEVEL_OF_PAIR[label as usize & 3];
    Complex::new(i, q) * unit_scale(power)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub symbols: Vec<Complex>,
    pub power: f64,
}

impl SymbolBlock {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Zero-fill unused channel uses up to the budget `n`.
    pub fn pad_to(&mut self, n: usize) {
        if self.symbols.len() < n {
            self.symbols.resize(n, Complex::new(0.0, 0.0));
        }
    }

    pub fn average_energy(&self) -> f64 {
        if self.symbols.is_empty() {
            return 0.0;
        }
        self.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.symbols.len() as f64
    }
}

pub fn modulate_16qam(bits: &[u8], power: f64) -> Result<SymbolBlock> {
    if !bits.len().is_multiple_of(4) {
        return Err(Error::BitsNotMultipleOfFour(bits.len()));
    }
    let symbols = bits
        .chunks_exact(4)
        .map(|c| {
            let label = (c[0] & 1) << 3 | (c[1] & 1) << 2 | (c[2] & 1) << 1 | (c[3] & 1);
            constellation_point(label, power)
        })
        .collect();
    Ok(SymbolBlock { symbols, power })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
    Rician,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
            ChannelKind::Rician => "rician",
        }
    }
}

impl std::str::FromStr for ChannelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "awgn" => Ok(ChannelKind::Awgn),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            "rician" => Ok(ChannelKind::Rician),
            other => Err(Error::InvalidConfig(format!("unknown channel kind {other:?}"))),
        }
    }
}

/// Channel family plus its parameters; draws realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub rician_k_factor: f64,
}

impl ChannelSpec {
    pub fn new(kind: ChannelKind) -> Self {
        Self { kind, rician_k_factor: DEFAULT_RICIAN_K }
    }

    /// Draw `h` for one block. All families satisfy `E|h|^2 = 1`.
    pub fn draw_coefficient(&self, rng: &mut impl Rng) -> Complex {
        let cn = |rng: &mut dyn rand::RngCore| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        };
        match self.kind {
            ChannelKind::Awgn => Complex::new(1.0, 0.0),
            ChannelKind::Rayleigh => cn(rng),
            ChannelKind::Rician => {
                let k = self.rician_k_factor;
                if k.is_infinite() {
                    return Complex::new(1.0, 0.0);
                }
                let los = (k / (k + 1.0)).sqrt();
                let scatter = (1.0 / (k + 1.0)).sqrt();
                Complex::new(los, 0.0) + cn(rng) * scatter
            }
        }
    }

    /// Realization for one block: `h` from `(seed, 0)`, noise from `(seed, 1)`.
    pub fn realize(&self, snr_db: f64, power: f64, seed: u64) -> ChannelRealization {
        let mut r = rng::stream(seed, Purpose::Channel, &[0]);
        ChannelRealization {
            kind: self.kind,
            h: self.draw_coefficient(&mut r),
            noise_variance: noise_variance_for(snr_db, power),
            rician_k_factor: self.rician_k_factor,
            seed,
        }
    }
}

/// `sigma^2 = P / 10^(snr_db / 10)`.
pub fn noise_variance_for(snr_db: f64, power: f64) -> f64 {
    power / 10f64.powf(snr_db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    pub kind: ChannelKind,
    pub h: Complex,
    pub noise_variance: f64,
    pub rician_k_factor: f64,
    pub seed: u64,
}

impl ChannelRealization {
    pub fn awgn(noise_variance: f64, seed: u64) -> Self {
        Self {
            kind: ChannelKind::Awgn,
            h: Complex::new(1.0, 0.0),
            noise_variance,
            rician_k_factor: DEFAULT_RICIAN_K,
            seed,
        }
    }
}

/// `r_j = h s_j + w_j`, `w_j ~ CN(0, sigma^2)`.
pub fn apply_channel(block: &SymbolBlock, ch: &ChannelRealization) -> Vec<Complex> {
    let mut r = rng::stream(ch.seed, Purpose::Channel, &[1]);
    let sd = (ch.noise_variance / 2.0).sqrt();
    block
        .symbols
        .iter()
        .map(|&s| {
            let re: f64 = StandardNormal.sample(&mut r);
            let im: f64 = StandardNormal.sample(&mut r);
            ch.h * s + Complex::new(re, im) * sd
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlrBlock {
    pub llrs: Vec<f64>,
    pub clamp: f64,
}

fn lse2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Exact per-quadrature LLRs for the two bits carried on one axis, given
/// the equalized coordinate `y` and the metric scale `|h|^2 / sigma^2`.
fn axis_llrs(y: f64, scale: f64, unit: f64) -> [f64; 2] {
    let metric: [f64; 4] = LEVELS.map(|(a, _)| {
        let d = y - a * unit;
        -scale * d * d
    });
    let mut out = [0.0; 2];
    for (bit, o) in out.iter_mut().enumerate() {
        let mut zero = f64::NEG_INFINITY;
        let mut one = f64::NEG_INFINITY;
        for (l, &(_, pair)) in LEVELS.iter().enumerate() {
            if pair[bit] == 0 {
                zero = lse2(zero, metric[l]);
            } else {
                one = lse2(one, metric[l]);
            }
        }
        *o = (zero - one).clamp(-LLR_CLAMP, LLR_CLAMP);
    }
    out
}

/// Exact bit LLRs by marginalizing over the constellation. Because the
/// square Gray map is separable, the 16-point sum factors into two 4-point
/// sums on the equalized I and Q coordinates.
pub fn demap_llr(received: &[Complex], ch: &ChannelRealization, power: f64) -> Result<LlrBlock> {
    if ch.noise_variance <= 0.0 || ch.noise_variance.is_nan() {
        return Err(Error::NonPositiveNoise(ch.noise_variance));
    }
    let gain = ch.h.norm_sqr();
    let mut llrs = Vec::with_capacity(received.len() * 4);
    if gain == 0.0 {
        llrs.resize(received.len() * 4, 0.0);
        return Ok(LlrBlock { llrs, clamp: LLR_CLAMP });
    }
    let scale = gain / ch.noise_variance;
    let unit = unit_scale(power);
    for &r in received {
        let y = r * ch.h.conj() / gain;
        llrs.extend(axis_llrs(y.re, scale, unit));
        llrs.extend(axis_llrs(y.im, scale, unit));
    }
    Ok(LlrBlock { llrs, clamp: LLR_CLAMP })
}

/// Minimum-distance label for each received symbol.
pub fn hard_demap(received: &[Complex], h: Complex, power: f64) -> Vec<u8> {
    let mut bits = Vec::with_capacity(received.len() * 4);
    for &r in received {
        let best = (0u8..16)
            .min_by(|&a, &b| {
                let da = (r - h * constellation_point(a, power)).norm_sqr();
                let db = (r - h * constellation_point(b, power)).norm_sqr();
                da.total_cmp(&db)
            })
            .unwrap();
        bits.extend([(best >> 3) & 1, (best >> 2) & 1, (best >> 1) & 1, best & 1]);
    }
    bits
}
