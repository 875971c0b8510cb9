//! Per-trial records and their aggregates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::Token;

/// 97.5% standard normal quantile.
pub const WILSON_Z: f64 = 1.959963984540054;

/// The four token states of one trial plus the task outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub source: Vec<Token>,
    pub hard: Vec<Token>,
    pub gated: Vec<Option<Token>>,
    pub completed: Vec<Token>,
    pub confidence: Vec<f64>,
    pub prediction: usize,
    pub label: usize,
    pub loss: f64,
}

impl TrialRecord {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn correct(&self) -> bool {
        self.prediction == self.label
    }

    pub fn final_errors(&self) -> usize {
        self.completed.iter().zip(&self.source).filter(|(a, b)| a != b).count()
    }

    pub fn accepted(&self) -> usize {
        self.gated.iter().filter(|t| t.is_some()).count()
    }

    pub fn accepted_errors(&self) -> usize {
        self.gated.iter().zip(&self.hard).zip(&self.source).filter(|((g, h), s)| g.is_some() && h != s).count()
    }

    pub fn hard_errors(&self) -> usize {
        self.hard.iter().zip(&self.source).filter(|(a, b)| a != b).count()
    }
}

/// Final token error rate.
pub fn ter(record: &TrialRecord) -> f64 {
    if record.is_empty() {
        return 0.0;
    }
    record.final_errors() as f64 / record.len() as f64
}

/// Wrong-acceptance rate; zero when nothing was accepted.
pub fn war(record: &TrialRecord) -> f64 {
    match record.accepted() {
        0 => 0.0,
        n => record.accepted_errors() as f64 / n as f64,
    }
}

/// Hard-decision token error rate before gating.
pub fn hard_error_rate(record: &TrialRecord) -> f64 {
    if record.is_empty() {
        return 0.0;
    }
    record.hard_errors() as f64 / record.len() as f64
}

/// Streaming sums; `merge` is associative.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: u64,
    pub correct: u64,
    pub loss_sum: f64,
    pub ter_sum: f64,
    pub ter_sq_sum: f64,
    pub war_sum: f64,
    pub war_sq_sum: f64,
    pub positions: u64,
    pub accepted: u64,
    pub hard_errors: u64,
}

impl Aggregate {
    pub fn push(&mut self, r: &TrialRecord) {
        let (t, w) = (ter(r), war(r));
        self.trials += 1;
        self.correct += u64::from(r.correct());
        self.loss_sum += r.loss;
        self.ter_sum += t;
        self.ter_sq_sum += t * t;
        self.war_sum += w;
        self.war_sq_sum += w * w;
        self.positions += r.len() as u64;
        self.accepted += r.accepted() as u64;
        self.hard_errors += r.hard_errors() as u64;
    }

    pub fn merge(&mut self, o: &Aggregate) {
        self.trials += o.trials;
        self.correct += o.correct;
        self.loss_sum += o.loss_sum;
        self.ter_sum += o.ter_sum;
        self.ter_sq_sum += o.ter_sq_sum;
        self.war_sum += o.war_sum;
        self.war_sq_sum += o.war_sq_sum;
        self.positions += o.positions;
        self.accepted += o.accepted;
        self.hard_errors += o.hard_errors;
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a TrialRecord>) -> Self {
        let mut a = Self::default();
        for r in records {
            a.push(r);
        }
        a
    }

    pub fn summary(&self) -> Result<Summary> {
        if self.trials == 0 {
            return Err(Error::Empty("aggregate"));
        }
        let n = self.trials as f64;
        let (lo, hi) = wilson_interval(self.correct, self.trials, WILSON_Z);
        let std_err = |sum: f64, sq: f64| {
            let mean = sum / n;
            ((sq / n - mean * mean).max(0.0) / n).sqrt()
        };
        Ok(Summary {
            trials: self.trials,
            accuracy: self.correct as f64 / n,
            acc_ci_lo: lo,
            acc_ci_hi: hi,
            mean_loss: self.loss_sum / n,
            mean_ter: self.ter_sum / n,
            ter_std_err: std_err(self.ter_sum, self.ter_sq_sum),
            mean_war: self.war_sum / n,
            war_std_err: std_err(self.war_sum, self.war_sq_sum),
            hard_error_rate: self.hard_errors as f64 / self.positions.max(1) as f64,
            erasure_rate: (self.positions - self.accepted) as f64 / self.positions.max(1) as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: u64,
    pub accuracy: f64,
    pub acc_ci_lo: f64,
    pub acc_ci_hi: f64,
    pub mean_loss: f64,
    pub mean_ter: f64,
    pub ter_std_err: f64,
    pub mean_war: f64,
    pub war_std_err: f64,
    pub hard_error_rate: f64,
    pub erasure_rate: f64,
}

impl Summary {
    /// Binomial standard error of the accuracy.
    pub fn acc_std_err(&self) -> f64 {
        (self.accuracy * (1.0 - self.accuracy) / self.trials as f64).sqrt()
    }
}

pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(source: Vec<Token>, hard: Vec<Token>, gated: Vec<Option<Token>>, completed: Vec<Token>) -> TrialRecord {
        let n = source.len();
        TrialRecord { source, hard, gated, completed, confidence: vec![1.0; n], prediction: 0, label: 0, loss: 0.5 }
    }

    #[test]
    fn ter_examples() {
        let r = rec(vec![1, 2, 3, 4], vec![1, 2, 3, 4], vec![Some(1); 4], vec![1, 2, 9, 4]);
        assert_eq!(ter(&r), 0.25);
        let clean = rec(vec![1, 2], vec![1, 2], vec![Some(1), Some(2)], vec![1, 2]);
        assert_eq!(ter(&clean), 0.0);
    }

    #[test]
    fn war_examples() {
        let all_erased = rec(vec![1, 2, 3], vec![0, 0, 0], vec![None; 3], vec![1, 2, 3]);
        assert_eq!(war(&all_erased), 0.0);
        let r = rec(vec![1, 2, 3, 4], vec![1, 7, 3, 5], vec![Some(1), Some(7), Some(3), None], vec![1, 7, 3, 4]);
        assert!((war(&r) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn aggregate_means() {
        let a = rec(vec![1, 2], vec![1, 2], vec![Some(1), Some(2)], vec![1, 2]);
        let mut b = rec(vec![1, 2], vec![1, 3], vec![Some(1), Some(3)], vec![1, 3]);
        b.prediction = 1;
        b.loss = 1.5;
        let one = Aggregate::from_records([&a]).summary().unwrap();
        assert_eq!((one.accuracy, one.mean_loss, one.mean_ter), (1.0, 0.5, 0.0));
        let two = Aggregate::from_records([&a, &b]).summary().unwrap();
        assert_eq!((two.accuracy, two.mean_loss, two.mean_ter, two.mean_war), (0.5, 1.0, 0.25, 0.25));
        assert!(Aggregate::default().summary().is_err());
    }

    #[test]
    fn wilson_known_values() {
        let (lo, hi) = wilson_interval(50, 100, WILSON_Z);
        assert!((lo - 0.403831).abs() < 1e-6 && (hi - 0.596169).abs() < 1e-6);
        let (lo, hi) = wilson_interval(0, 10, WILSON_Z);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.277533).abs() < 1e-6);
    }
}
