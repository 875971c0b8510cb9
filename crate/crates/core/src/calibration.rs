//! Offline threshold calibration by coordinate search.
//!
//! Validation transcripts (hard decisions and confidences from one channel
//! pass per sample) are frozen, so the validation loss is a deterministic
//! function of the thresholds and every accepted update is a descent step.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::completion::Completer;
use crate::error::{Error, Result};
use crate::gating::{gate_decisions, GatingPolicy};
use crate::source::{embed_slice, task_loss, EmbeddingTable, TaskHead, Token};

pub const INITIAL_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Ascending candidates in `[0, 1]`.
    pub grid: Vec<f64>,
    pub passes: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { grid: (0..=20).map(|i| i as f64 / 20.0).collect(), passes: 2 }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("threshold grid is empty".into()));
        }
        if self.grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidConfig("threshold grid leaves [0, 1]".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("threshold grid must be strictly ascending".into()));
        }
        if self.passes == 0 {
            return Err(Error::InvalidConfig("calibration needs at least one pass".into()));
        }
        Ok(())
    }
}

/// Receiver view of one validation sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub hard: Vec<Token>,
    pub confidence: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub policy: GatingPolicy,
    pub initial_objective: f64,
    pub objective: f64,
    /// Objective after each coordinate update, starting value first.
    pub trace: Vec<f64>,
}

/// `passes` sweeps over the coordinates; each coordinate moves to the grid
/// value with the lowest objective (lowest value among equals) only if that
/// is strictly better than the incumbent.
pub fn coordinate_search<F>(groups: usize, config: &CalibrationConfig, objective: F) -> Result<CalibrationResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let mut tau = vec![INITIAL_THRESHOLD; groups];
    let initial = objective(&tau);
    let mut current = initial;
    let mut trace = vec![initial];
    for _ in 0..config.passes {
        for g in 0..groups {
            let scores: Vec<f64> = config
                .grid
                .par_iter()
                .map(|&t| {
                    let mut cand = tau.clone();
                    cand[g] = t;
                    objective(&cand)
                })
                .collect();
            let (best_i, best) =
                scores.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
            if best < current {
                tau[g] = config.grid[best_i];
                current = best;
            }
            trace.push(current);
        }
    }
    Ok(CalibrationResult { policy: GatingPolicy::new(tau)?, initial_objective: initial, objective: current, trace })
}

/// Frozen validation set plus the receiver pieces needed to score it.
/// A transcript's loss depends only on which positions are erased, so
/// losses are memoized per erasure pattern.
pub struct ValidationContext<'a, C: Completer + Sync> {
    transcripts: &'a [Transcript],
    group_of: &'a [usize],
    alphabet_size: usize,
    completer: &'a C,
    table: &'a EmbeddingTable,
    head: &'a TaskHead,
    cache: Vec<Mutex<HashMap<Vec<bool>, f64>>>,
}

impl<'a, C: Completer + Sync> ValidationContext<'a, C> {
    pub fn new(
        transcripts: &'a [Transcript],
        group_of: &'a [usize],
        alphabet_size: usize,
        completer: &'a C,
        table: &'a EmbeddingTable,
        head: &'a TaskHead,
    ) -> Self {
        let cache = transcripts.iter().map(|_| Mutex::new(HashMap::new())).collect();
        Self { transcripts, group_of, alphabet_size, completer, table, head, cache }
    }

    pub fn transcripts(&self) -> &[Transcript] {
        self.transcripts
    }

    fn sample_loss(&self, n: usize, policy: &GatingPolicy) -> Result<f64> {
        let t = &self.transcripts[n];
        let gated = gate_decisions(&t.hard, &t.confidence, self.group_of, policy, self.alphabet_size)?;
        let key: Vec<bool> = gated.tokens.iter().map(Option::is_none).collect();
        if let Some(&l) = self.cache[n].lock().expect("cache lock").get(&key) {
            return Ok(l);
        }
        let completed = self.completer.complete(&gated)?;
        let z = embed_slice(&completed.tokens, self.table)?;
        let l = task_loss(self.head, &z, t.label);
        self.cache[n].lock().expect("cache lock").insert(key, l);
        Ok(l)
    }

    /// Mean task loss after gating and completion.
    pub fn loss(&self, policy: &GatingPolicy) -> Result<f64> {
        if self.transcripts.is_empty() {
            return Err(Error::Empty("validation set"));
        }
        let losses = (0..self.transcripts.len())
            .into_par_iter()
            .map(|n| self.sample_loss(n, policy))
            .collect::<Result<Vec<f64>>>()?;
        Ok(losses.iter().sum::<f64>() / losses.len() as f64)
    }
}

pub fn calibrate<C: Completer + Sync>(
    config: &CalibrationConfig,
    groups: usize,
    ctx: &ValidationContext<'_, C>,
) -> Result<CalibrationResult> {
    if ctx.transcripts.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    // Shapes are checked once so the objective itself cannot fail.
    ctx.loss(&GatingPolicy::uniform(groups, INITIAL_THRESHOLD)?)?;
    coordinate_search(groups, config, |tau| {
        ctx.loss(&GatingPolicy { thresholds: tau.to_vec() }).expect("shapes validated")
    })
}
