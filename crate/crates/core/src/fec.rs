//! LDPC protection policies.
//!
//! Each policy is a code rate under fixed 16QAM. Codes are built per
//! `(policy, info length)`: information columns are placed by progressive
//! edge growth (column weight 3, or fewer when there are fewer checks) and
//! the parity part is a dual-diagonal accumulator, which keeps `H` full
//! rank and makes systematic encoding a running XOR.
//!
//! A group's bit stream is split into `ceil(B / max_info_bits)` blocks whose
//! sizes differ by at most one, so no padding is ever transmitted.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, RwLock};

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::LLR_CLAMP;
use crate::rng::{self, Purpose, StreamRng};

pub const DEFAULT_MAX_ITERS: usize = 50;
pub const DEFAULT_MAX_INFO_BITS: usize = 1024;
const MESSAGE_CLAMP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CodeRate {
    pub num: u32,
    pub den: u32,
}

impl CodeRate {
    pub const UNCODED: CodeRate = CodeRate { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(Error::InvalidConfig(format!("bad code rate {num}/{den}")));
        }
        Ok(Self { num, den })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Codeword length for `k` information bits (rounded down, so the
    /// realized rate never falls below the nominal one).
    pub fn codeword_len(self, k: usize) -> usize {
        k * self.den as usize / self.num as usize
    }
}

impl std::fmt::Display for CodeRate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if *self == CodeRate::UNCODED {
            f.write_str("uncoded")
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl From<CodeRate> for String {
    fn from(r: CodeRate) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for CodeRate {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl std::str::FromStr for CodeRate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("uncoded") {
            return Ok(CodeRate::UNCODED);
        }
        let (a, b) = s.split_once('/').ok_or_else(|| Error::InvalidConfig(format!("bad code rate {s:?}")))?;
        let parse = |x: &str| x.trim().parse::<u32>().map_err(|_| Error::InvalidConfig(format!("bad code rate {s:?}")));
        CodeRate::new(parse(a)?, parse(b)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectionPolicy {
    pub id: usize,
    pub rate: CodeRate,
}

impl ProtectionPolicy {
    /// Channel uses per token: `m / (4 r)`.
    pub fn cost_per_token(&self, bits_per_token: usize) -> f64 {
        bits_per_token as f64 * self.rate.den as f64 / (4.0 * self.rate.num as f64)
    }

    pub fn is_uncoded(&self) -> bool {
        self.rate == CodeRate::UNCODED
    }
}

/// Sparse parity-check matrix `H` (`(n - k) x n`), information bits first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcCode {
    pub n: usize,
    pub k: usize,
    /// Column indices per check row.
    pub rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
}

impl LdpcCode {
    /// Build from explicit rows. The parity part must be the dual-diagonal
    /// accumulator layout produced by [`LdpcCode::construct`].
    pub fn from_rows(n: usize, k: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        if k > n || rows.len() != n - k {
            return Err(Error::ShapeMismatch(format!("{} rows for a ({n},{k}) code", rows.len())));
        }
        let mut cols = vec![Vec::new(); n];
        for (c, row) in rows.iter().enumerate() {
            for &v in row {
                if v >= n {
                    return Err(Error::ShapeMismatch(format!("column {v} out of range in row {c}")));
                }
                cols[v].push(c);
            }
        }
        for c in 0..n - k {
            let want: &[usize] = if c == 0 { &[k] } else { &[k + c - 1, k + c] };
            let parity: Vec<usize> = rows[c].iter().copied().filter(|&v| v >= k).collect();
            if parity != want {
                return Err(Error::ShapeMismatch(format!("row {c} is not dual-diagonal in the parity part")));
            }
        }
        Ok(Self { n, k, rows, cols })
    }

    /// Progressive-edge-growth placement of information columns on top of
    /// a fixed accumulator parity structure.
    pub fn construct(k: usize, rate: CodeRate, seed: u64) -> Self {
        let n = rate.codeword_len(k).max(k);
        let m = n - k;
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for p in 0..m {
            let v = k + p;
            for c in [p, p + 1] {
                if c < m {
                    rows[c].push(v);
                    cols[v].push(c);
                }
            }
        }
        if m > 0 {
            let mut rng = rng::stream(seed, Purpose::Code, &[k as u64, rate.num as u64, rate.den as u64]);
            let degree = m.min(3);
            for v in 0..k {
                for _ in 0..degree {
                    let candidates = peg_candidates(v, &rows, &cols, m);
                    let c = pick_min_degree(&candidates, &rows, &mut rng);
                    rows[c].push(v);
                    cols[v].push(c);
                }
            }
        }
        for row in rows.iter_mut() {
            row.sort_unstable();
        }
        for col in cols.iter_mut() {
            col.sort_unstable();
        }
        Self { n, k, rows, cols }
    }

    pub fn checks(&self) -> usize {
        self.n - self.k
    }

    pub fn syndrome_is_zero(&self, bits: &[u8]) -> bool {
        self.rows.iter().all(|row| row.iter().fold(0u8, |acc, &v| acc ^ bits[v]) == 0)
    }

    /// Systematic encoding: `[info | parity]`.
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k {
            return Err(Error::BadLength { expected: self.k, got: info.len() });
        }
        let mut word = info.to_vec();
        let mut prev = 0u8;
        for row in &self.rows {
            let s = row.iter().filter(|&&v| v < self.k).fold(0u8, |acc, &v| acc ^ info[v]);
            prev ^= s;
            word.push(prev);
        }
        Ok(word)
    }

    /// Flooding sum-product decoding. Returns information-bit posterior LLRs.
    pub fn decode(&self, llrs: &[f64], max_iters: usize) -> Result<DecodeOutput> {
        if llrs.len() != self.n {
            return Err(Error::BadLength { expected: self.n, got: llrs.len() });
        }
        let hard = |x: &[f64]| x.iter().map(|&l| u8::from(l < 0.0)).collect::<Vec<u8>>();
        let finish = |post: &[f64], converged, iterations| DecodeOutput {
            info_llrs: post[..self.k].iter().map(|l| l.clamp(-LLR_CLAMP, LLR_CLAMP)).collect(),
            converged,
            iterations,
        };
        // At least one iteration always runs: a valid hard word at the input
        // still gains parity evidence, which the confidence needs.
        // Edge e belongs to row r at slot s; `edge_of[r]` is its offset.
        let mut offset = Vec::with_capacity(self.rows.len() + 1);
        offset.push(0usize);
        for row in &self.rows {
            offset.push(offset.last().unwrap() + row.len());
        }
        let edges = *offset.last().unwrap();
        let mut v2c = vec![0.0; edges];
        let mut c2v = vec![0.0; edges];
        for (r, row) in self.rows.iter().enumerate() {
            for (s, &v) in row.iter().enumerate() {
                v2c[offset[r] + s] = llrs[v];
            }
        }
        let mut post = llrs.to_vec();
        let mut tanhs = Vec::new();
        let mut prefix = Vec::new();
        for it in 1..=max_iters {
            for r in 0..self.rows.len() {
                let (a, b) = (offset[r], offset[r + 1]);
                tanhs.clear();
                tanhs.extend(v2c[a..b].iter().map(|&x| (x / 2.0).tanh()));
                prefix.clear();
                let mut p = 1.0;
                for &t in &tanhs {
                    prefix.push(p);
                    p *= t;
                }
                let mut suffix = 1.0;
                for s in (0..tanhs.len()).rev() {
                    let prod = (prefix[s] * suffix).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    c2v[a + s] = (2.0 * prod.atanh()).clamp(-MESSAGE_CLAMP, MESSAGE_CLAMP);
                    suffix *= tanhs[s];
                }
            }
            post.copy_from_slice(llrs);
            for (r, row) in self.rows.iter().enumerate() {
                for (s, &v) in row.iter().enumerate() {
                    post[v] += c2v[offset[r] + s];
                }
            }
            for (r, row) in self.rows.iter().enumerate() {
                for (s, &v) in row.iter().enumerate() {
                    let e = offset[r] + s;
                    v2c[e] = (post[v] - c2v[e]).clamp(-MESSAGE_CLAMP, MESSAGE_CLAMP);
                }
            }
            if self.syndrome_is_zero(&hard(&post)) {
                return Ok(finish(&post, true, it));
            }
        }
        Ok(finish(&post, false, max_iters))
    }

    pub fn column(&self, v: usize) -> &[usize] {
        &self.cols[v]
    }
}

fn peg_candidates(v: usize, rows: &[Vec<usize>], cols: &[Vec<usize>], m: usize) -> Vec<usize> {
    let mut reached = vec![false; m];
    let mut seen_var = vec![false; cols.len()];
    seen_var[v] = true;
    let mut count = 0;
    let mut frontier = vec![v];
    loop {
        let mut new_checks = Vec::new();
        for &u in &frontier {
            for &c in &cols[u] {
                if !reached[c] {
                    reached[c] = true;
                    new_checks.push(c);
                }
            }
        }
        if new_checks.is_empty() {
            let out: Vec<usize> = (0..m).filter(|&c| !reached[c]).collect();
            if out.is_empty() {
                // Every check already neighbours v: impossible when degree <= m.
                return (0..m).filter(|c| !cols[v].contains(c)).collect();
            }
            return out;
        }
        if count + new_checks.len() == m {
            // Farthest level: prefer checks not already adjacent to v.
            let far: Vec<usize> = new_checks.iter().copied().filter(|c| !cols[v].contains(c)).collect();
            if !far.is_empty() {
                return far;
            }
            return (0..m).filter(|c| !cols[v].contains(c)).collect();
        }
        count += new_checks.len();
        let mut next = Vec::new();
        for &c in &new_checks {
            for &u in &rows[c] {
                if !seen_var[u] {
                    seen_var[u] = true;
                    next.push(u);
                }
            }
        }
        frontier = next;
    }
}

fn pick_min_degree(candidates: &[usize], rows: &[Vec<usize>], rng: &mut StreamRng) -> usize {
    let min = candidates.iter().map(|&c| rows[c].len()).min().expect("at least one candidate check");
    let ties: Vec<usize> = candidates.iter().copied().filter(|&c| rows[c].len() == min).collect();
    *ties.choose(rng).expect("nonempty ties")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub info_llrs: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Rank of a binary matrix given as column-index rows.
pub fn gf2_rank(rows: &[Vec<usize>], n: usize) -> usize {
    let words = n.div_ceil(64);
    let mut mat: Vec<Vec<u64>> = rows
        .iter()
        .map(|row| {
            let mut w = vec![0u64; words];
            for &v in row {
                w[v / 64] ^= 1 << (v % 64);
            }
            w
        })
        .collect();
    let mut rank = 0;
    for col in 0..n {
        let (wi, bit) = (col / 64, 1u64 << (col % 64));
        let Some(p) = (rank..mat.len()).find(|&r| mat[r][wi] & bit != 0) else {
            continue;
        };
        mat.swap(rank, p);
        let pivot = mat[rank].clone();
        for (r, row) in mat.iter_mut().enumerate() {
            if r != rank && row[wi] & bit != 0 {
                row.iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= b);
            }
        }
        rank += 1;
    }
    rank
}

/// Sizes of the blocks a `bits`-long stream is split into.
pub fn block_sizes(bits: usize, max_info_bits: usize) -> Vec<usize> {
    if bits == 0 {
        return Vec::new();
    }
    let blocks = bits.div_ceil(max_info_bits.max(1));
    let base = bits / blocks;
    let extra = bits % blocks;
    (0..blocks).map(|b| base + usize::from(b < extra)).collect()
}

/// The finite policy set, ordered by increasing cost.
#[derive(Debug)]
pub struct PolicySet {
    policies: Vec<ProtectionPolicy>,
    bits_per_token: usize,
    max_info_bits: usize,
    code_seed: u64,
    codes: RwLock<HashMap<(usize, usize), Arc<LdpcCode>>>,
}

impl Clone for PolicySet {
    fn clone(&self) -> Self {
        Self {
            policies: self.policies.clone(),
            bits_per_token: self.bits_per_token,
            max_info_bits: self.max_info_bits,
            code_seed: self.code_seed,
            codes: RwLock::new(self.codes.read().unwrap().clone()),
        }
    }
}

impl PolicySet {
    /// Policies get ids in order of increasing cost (uncoded, if present, is 0).
    pub fn new(rates: &[CodeRate], bits_per_token: usize, max_info_bits: usize, code_seed: u64) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Empty("policy set"));
        }
        let mut sorted = rates.to_vec();
        sorted.sort_by(|a, b| b.value().total_cmp(&a.value()));
        sorted.dedup();
        let policies = sorted.into_iter().enumerate().map(|(id, rate)| ProtectionPolicy { id, rate }).collect();
        Ok(Self {
            policies,
            bits_per_token,
            max_info_bits: max_info_bits.max(1),
            code_seed,
            codes: RwLock::new(HashMap::new()),
        })
    }

    /// Uncoded plus rates 5/6, 3/4, 2/3, 1/2.
    pub fn default_rates() -> Vec<CodeRate> {
        vec![
            CodeRate::UNCODED,
            CodeRate { num: 5, den: 6 },
            CodeRate { num: 3, den: 4 },
            CodeRate { num: 2, den: 3 },
            CodeRate { num: 1, den: 2 },
        ]
    }

    pub fn policies(&self) -> &[ProtectionPolicy] {
        &self.policies
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn policy(&self, id: usize) -> &ProtectionPolicy {
        &self.policies[id]
    }

    pub fn bits_per_token(&self) -> usize {
        self.bits_per_token
    }

    pub fn max_info_bits(&self) -> usize {
        self.max_info_bits
    }

    pub fn cost(&self, id: usize) -> f64 {
        self.policies[id].cost_per_token(self.bits_per_token)
    }

    pub fn code(&self, id: usize, k: usize) -> Arc<LdpcCode> {
        if let Some(c) = self.codes.read().unwrap().get(&(id, k)) {
            return c.clone();
        }
        let code = Arc::new(LdpcCode::construct(k, self.policies[id].rate, self.code_seed));
        self.codes.write().unwrap().entry((id, k)).or_insert(code).clone()
    }

    /// Coded length of a `bits`-long stream under policy `id`.
    pub fn coded_len(&self, id: usize, bits: usize) -> usize {
        let rate = self.policies[id].rate;
        block_sizes(bits, self.max_info_bits).into_iter().map(|k| rate.codeword_len(k)).sum()
    }

    /// Encode a stream of any length, block by block.
    pub fn encode(&self, id: usize, info: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.coded_len(id, info.len()));
        let mut at = 0;
        for k in block_sizes(info.len(), self.max_info_bits) {
            let code = self.code(id, k);
            out.extend(code.encode(&info[at..at + k]).expect("block length matches code"));
            at += k;
        }
        out
    }

    /// Decode the coded stream of an `info_bits`-long message. Returns the
    /// information LLRs and whether every block converged.
    pub fn decode(&self, id: usize, info_bits: usize, llrs: &[f64], max_iters: usize) -> Result<DecodeOutput> {
        let expected = self.coded_len(id, info_bits);
        if llrs.len() != expected {
            return Err(Error::BadLength { expected, got: llrs.len() });
        }
        let mut info_llrs = Vec::with_capacity(info_bits);
        let mut converged = true;
        let mut iterations = 0;
        let mut at = 0;
        for k in block_sizes(info_bits, self.max_info_bits) {
            let code = self.code(id, k);
            let out = code.decode(&llrs[at..at + code.n], max_iters)?;
            at += code.n;
            converged &= out.converged;
            iterations = iterations.max(out.iterations);
            info_llrs.extend(out.info_llrs);
        }
        Ok(DecodeOutput { info_llrs, converged, iterations })
    }

    /// Text form of the policy set plus the codes for the given info lengths.
    ///
    /// ```text
    /// tonic-policy-set 1
    /// bits_per_token <m>
    /// max_info_bits <kmax>
    /// code_seed <seed>
    /// policy <id> <rate | uncoded>
    /// code <policy id> <n> <k>
    /// <one line per check row: space-separated column indices>
    /// end
    /// ```
    pub fn to_text(&self, info_lengths: &[usize]) -> String {
        let mut s = String::new();
        writeln!(s, "tonic-policy-set 1").unwrap();
        writeln!(s, "bits_per_token {}", self.bits_per_token).unwrap();
        writeln!(s, "max_info_bits {}", self.max_info_bits).unwrap();
        writeln!(s, "code_seed {}", self.code_seed).unwrap();
        for p in &self.policies {
            writeln!(s, "policy {} {}", p.id, p.rate).unwrap();
        }
        for p in &self.policies {
            for &k in info_lengths {
                let code = self.code(p.id, k);
                writeln!(s, "code {} {} {}", p.id, code.n, code.k).unwrap();
                for row in &code.rows {
                    let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    writeln!(s, "{}", line.join(" ")).unwrap();
                }
            }
        }
        writeln!(s, "end").unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let perr = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };
        let mut header = |key: &str| -> Result<String> {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of input"))?;
            let rest = l.strip_prefix(key).ok_or_else(|| perr(ln, &format!("expected {key}")))?;
            Ok(rest.trim().to_string())
        };
        if header("tonic-policy-set")? != "1" {
            return Err(perr(1, "unsupported version"));
        }
        let num = |s: String| s.parse::<u64>().map_err(|_| perr(0, "bad number"));
        let bits_per_token = num(header("bits_per_token")?)? as usize;
        let max_info_bits = num(header("max_info_bits")?)? as usize;
        let code_seed = num(header("code_seed")?)?;
        let mut policies = Vec::new();
        let mut codes = HashMap::new();
        let mut pending: Option<(usize, usize, usize, usize, Vec<Vec<usize>>)> = None;
        let mut finished = false;
        for (ln, l) in lines.by_ref() {
            if let Some((id, n, k, line0, mut rows)) = pending.take() {
                if rows.len() < n - k {
                    let row: std::result::Result<Vec<usize>, _> = l.split_whitespace().map(str::parse).collect();
                    rows.push(row.map_err(|_| perr(ln, "bad column index"))?);
                    pending = Some((id, n, k, line0, rows));
                    continue;
                }
                let code = LdpcCode::from_rows(n, k, rows).map_err(|e| perr(line0, &e.to_string()))?;
                codes.insert((id, k), Arc::new(code));
            }
            let mut it = l.split_whitespace();
            match it.next() {
                Some("policy") => {
                    let id: usize = it.next().and_then(|x| x.parse().ok()).ok_or_else(|| perr(ln, "bad policy id"))?;
                    let rate: CodeRate =
                        it.next().ok_or_else(|| perr(ln, "missing rate"))?.parse().map_err(|_| perr(ln, "bad rate"))?;
                    if id != policies.len() {
                        return Err(perr(ln, "policy ids must be consecutive from 0"));
                    }
                    policies.push(ProtectionPolicy { id, rate });
                }
                Some("code") => {
                    let f: Vec<usize> = it
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| perr(ln, "bad code header"))?;
                    if f.len() != 3 || f[2] > f[1] || f[0] >= policies.len() {
                        return Err(perr(ln, "bad code header"));
                    }
                    pending = Some((f[0], f[1], f[2], ln, Vec::new()));
                }
                Some("end") => {
                    finished = true;
                    break;
                }
                _ => return Err(perr(ln, "unexpected line")),
            }
        }
        if let Some((id, n, k, line0, rows)) = pending.take() {
            let code = LdpcCode::from_rows(n, k, rows).map_err(|e| perr(line0, &e.to_string()))?;
            codes.insert((id, k), Arc::new(code));
        }
        if !finished {
            return Err(perr(0, "missing end marker"));
        }
        if policies.is_empty() {
            return Err(Error::Empty("policy set"));
        }
        Ok(Self { policies, bits_per_token, max_info_bits, code_seed, codes: RwLock::new(codes) })
    }
}
