//! Error-curve profiling and the utility-weighted group scheduler.
//!
//! The scheduler solves
//!
//! ```text
//!   min  sum_g W_g eps_g(pi_g)   s.t.  sum_g L_g c(pi_g) <= N
//! ```
//!
//! greedily: start every group at the cheapest policy and keep applying the
//! single-step upgrade with the best `W_g * (error drop) / (L_g * cost rise)`
//! while one with positive gain still fits the budget.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fec::{PolicySet, DEFAULT_MAX_ITERS};
use crate::link::{transmit, LinkParams, LinkPlan};
use crate::phy::ChannelSpec;
use crate::rng::{self, Purpose};
use crate::source::Token;
use crate::utility::UtilityGrouping;

const COST_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurves {
    pub channel: ChannelSpec,
    pub snr_db: f64,
    pub trials: usize,
    /// `values[g][policy]`: pre-gating token error rate.
    pub values: Vec<Vec<f64>>,
    /// Places where the error rate rose as protection increased.
    pub inversions: usize,
}

#[derive(Debug, Clone)]
pub struct ProfilingSetup {
    pub alphabet_size: usize,
    pub power: f64,
    pub trials: usize,
    pub seed: u64,
    pub max_iters: usize,
}

/// Monte Carlo token error rate of every (group, policy) cell. Groups with
/// the same size share their measurement; within a size, policies see the
/// same tokens and channel draws.
pub fn profile_error_curves(
    grouping: &UtilityGrouping,
    policies: &PolicySet,
    channel: &ChannelSpec,
    snr_db: f64,
    setup: &ProfilingSetup,
) -> Result<ErrorCurves> {
    if setup.trials == 0 {
        return Err(Error::InvalidConfig("profiling needs at least one trial".into()));
    }
    let mut by_size: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &size in &grouping.sizes {
        if by_size.contains_key(&size) {
            continue;
        }
        let curve = (0..policies.len())
            .map(|p| profile_cell(size, p, policies, channel, snr_db, setup))
            .collect::<Result<Vec<f64>>>()?;
        by_size.insert(size, curve);
    }
    let values: Vec<Vec<f64>> = grouping.sizes.iter().map(|s| by_size[s].clone()).collect();
    let inversions = values.iter().map(|c| c.windows(2).filter(|w| w[1] > w[0]).count()).sum();
    Ok(ErrorCurves { channel: *channel, snr_db, trials: setup.trials, values, inversions })
}

fn profile_cell(
    size: usize,
    policy: usize,
    set: &PolicySet,
    channel: &ChannelSpec,
    snr_db: f64,
    setup: &ProfilingSetup,
) -> Result<f64> {
    let plan = LinkPlan { groups: vec![(0..size).collect()], policies: vec![policy] };
    let params = LinkParams {
        alphabet_size: setup.alphabet_size,
        power: setup.power,
        budget: plan.symbols_used(set),
        max_iters: setup.max_iters,
    };
    let errors = (0..setup.trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(setup.seed, Purpose::Profiling, &[size as u64, t as u64]);
            let tokens: Vec<Token> = (0..size).map(|_| r.random_range(0..setup.alphabet_size as Token)).collect();
            let ch_seed = rng::derive_seed(setup.seed, Purpose::Profiling, &[size as u64, t as u64, 1]);
            let realization = channel.realize(snr_db, setup.power, ch_seed);
            let post = transmit(&tokens, &plan, set, &realization, &params)?;
            Ok(post.hard.iter().zip(&tokens).filter(|(a, b)| a != b).count())
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(errors as f64 / (setup.trials * size) as f64)
}

/// Plain-number view of a scheduling instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub masses: Vec<f64>,
    pub sizes: Vec<usize>,
    /// Per-token cost of each policy, strictly increasing.
    pub costs: Vec<f64>,
    /// `errors[g][p]`.
    pub errors: Vec<Vec<f64>>,
    pub budget: f64,
}

impl Instance {
    pub fn from_parts(grouping: &UtilityGrouping, curves: &ErrorCurves, policies: &PolicySet, budget: f64) -> Self {
        Self {
            masses: grouping.masses.clone(),
            sizes: grouping.sizes.clone(),
            costs: (0..policies.len()).map(|p| policies.cost(p)).collect(),
            errors: curves.values.clone(),
            budget,
        }
    }

    pub fn cost_of(&self, assignment: &[usize]) -> f64 {
        assignment.iter().zip(&self.sizes).map(|(&p, &l)| l as f64 * self.costs[p]).sum()
    }

    pub fn surrogate(&self, assignment: &[usize]) -> f64 {
        assignment.iter().enumerate().map(|(g, &p)| self.masses[g] * self.errors[g][p]).sum()
    }

    pub fn feasible(&self, assignment: &[usize]) -> bool {
        self.cost_of(assignment) <= self.budget + COST_EPS
    }

    /// Best single-step upgrade: `(ratio, group)`; ties keep the lowest group.
    pub fn best_upgrade(&self, assignment: &[usize]) -> Option<(f64, usize)> {
        let spent = self.cost_of(assignment);
        let mut best: Option<(f64, usize)> = None;
        for (g, &p) in assignment.iter().enumerate() {
            if p + 1 >= self.costs.len() {
                continue;
            }
            let extra = self.sizes[g] as f64 * (self.costs[p + 1] - self.costs[p]);
            if spent + extra > self.budget + COST_EPS {
                continue;
            }
            let gain = self.masses[g] * (self.errors[g][p] - self.errors[g][p + 1]);
            if gain <= 0.0 {
                continue;
            }
            let ratio = gain / extra;
            if best.is_none_or(|(r, _)| ratio > r) {
                best = Some((ratio, g));
            }
        }
        best
    }

    /// Greedy descent from `start`; returns the final assignment and the
    /// surrogate value after each step (starting value first).
    pub fn greedy_from(&self, start: Vec<usize>) -> (Vec<usize>, Vec<f64>) {
        let mut a = start;
        let mut trace = vec![self.surrogate(&a)];
        while let Some((_, g)) = self.best_upgrade(&a) {
            a[g] += 1;
            trace.push(self.surrogate(&a));
        }
        (a, trace)
    }

    /// Uniform assignment with the smallest surrogate among feasible ones
    /// (ties to the cheaper policy).
    pub fn best_uniform(&self) -> Option<Vec<usize>> {
        let g = self.sizes.len();
        (0..self.costs.len())
            .map(|p| vec![p; g])
            .filter(|a| self.feasible(a))
            .min_by(|a, b| self.surrogate(a).total_cmp(&self.surrogate(b)))
    }

    /// Most protective uniform assignment that fits.
    pub fn strongest_uniform(&self) -> Option<Vec<usize>> {
        let g = self.sizes.len();
        (0..self.costs.len()).rev().map(|p| vec![p; g]).find(|a| self.feasible(a))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectionProfile {
    /// Policy id per group.
    pub assignment: Vec<usize>,
    pub total_cost: f64,
    pub budget: f64,
    pub surrogate_value: f64,
    /// Surrogate after each accepted upgrade.
    pub trace: Vec<f64>,
}

fn finish(inst: &Instance, assignment: Vec<usize>, trace: Vec<f64>) -> ProtectionProfile {
    ProtectionProfile {
        total_cost: inst.cost_of(&assignment),
        surrogate_value: inst.surrogate(&assignment),
        budget: inst.budget,
        assignment,
        trace,
    }
}

/// Greedy utility-weighted scheduler.
///
/// The descent is run from the cheapest profile and again from the best
/// uniform profile; the lower surrogate wins (ties go to the cheapest-start
/// run). Both results are local optima for single-step upgrades, and the
/// second guarantees the output is never worse than uniform protection.
pub fn schedule(inst: &Instance) -> Result<ProtectionProfile> {
    let g = inst.sizes.len();
    let cheapest = vec![0; g];
    if !inst.feasible(&cheapest) {
        return Err(Error::InfeasibleBudget { required: inst.cost_of(&cheapest), budget: inst.budget });
    }
    let (a, trace) = inst.greedy_from(cheapest);
    let uniform = inst.best_uniform().expect("cheapest uniform profile is feasible");
    let (b, trace_b) = inst.greedy_from(uniform);
    if inst.surrogate(&b) < inst.surrogate(&a) {
        Ok(finish(inst, b, trace_b))
    } else {
        Ok(finish(inst, a, trace))
    }
}

pub fn schedule_uep(
    grouping: &UtilityGrouping,
    curves: &ErrorCurves,
    policies: &PolicySet,
    budget: f64,
) -> Result<ProtectionProfile> {
    schedule(&Instance::from_parts(grouping, curves, policies, budget))
}

/// Same policy everywhere: the most protective one that fits.
pub fn uniform_profile(
    grouping: &UtilityGrouping,
    curves: &ErrorCurves,
    policies: &PolicySet,
    budget: f64,
) -> Result<ProtectionProfile> {
    let inst = Instance::from_parts(grouping, curves, policies, budget);
    let a = inst
        .strongest_uniform()
        .ok_or_else(|| Error::InfeasibleBudget { required: inst.cost_of(&vec![0; inst.sizes.len()]), budget })?;
    let s = inst.surrogate(&a);
    Ok(finish(&inst, a, vec![s]))
}

/// Exhaustive minimum over all `|P|^G` assignments (small instances only).
pub fn exhaustive_optimum(inst: &Instance) -> Option<(Vec<usize>, f64)> {
    let g = inst.sizes.len();
    let p = inst.costs.len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut a = vec![0; g];
    loop {
        if inst.feasible(&a) {
            let s = inst.surrogate(&a);
            if best.as_ref().is_none_or(|(_, b)| s < *b) {
                best = Some((a.clone(), s));
            }
        }
        let mut i = 0;
        loop {
            if i == g {
                return best;
            }
            a[i] += 1;
            if a[i] < p {
                break;
            }
            a[i] = 0;
            i += 1;
        }
    }
}

pub fn default_profiling_setup(alphabet_size: usize, seed: u64) -> ProfilingSetup {
    ProfilingSetup { alphabet_size, power: 1.0, trials: 10_000, seed, max_iters: DEFAULT_MAX_ITERS }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::ChannelKind;
    use crate::utility::{quantize_groups, UtilityMode};

    fn inst(masses: Vec<f64>, sizes: Vec<usize>, costs: Vec<f64>, errors: Vec<Vec<f64>>, budget: f64) -> Instance {
        Instance { masses, sizes, costs, errors, budget }
    }

    #[test]
    fn tight_budget_keeps_everything_cheapest() {
        let i = inst(vec![3.0, 2.0], vec![2, 2], vec![1.0, 1.5, 2.0], vec![vec![0.5, 0.2, 0.1]; 2], 4.0);
        let p = schedule(&i).unwrap();
        assert_eq!(p.assignment, vec![0, 0]);
        assert!((p.total_cost - 4.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_budget_rejected() {
        let i = inst(vec![1.0], vec![4], vec![1.0, 2.0], vec![vec![0.5, 0.1]], 3.9);
        assert!(matches!(schedule(&i), Err(Error::InfeasibleBudget { .. })));
    }

    #[test]
    fn huge_budget_goes_to_last_positive_gain() {
        let errors = vec![vec![0.5, 0.2, 0.1, 0.1], vec![0.4, 0.3, 0.2, 0.0]];
        let i = inst(vec![1.0, 1.0], vec![3, 3], vec![1.0, 1.2, 1.5, 2.0], errors, 1e9);
        let p = schedule(&i).unwrap();
        assert_eq!(p.assignment, vec![2, 3]);
    }

    #[test]
    fn greedy_prefers_heavier_group() {
        let errors = vec![vec![0.5, 0.1]; 2];
        let i = inst(vec![1.0, 5.0], vec![2, 2], vec![1.0, 2.0], errors, 6.0);
        let p = schedule(&i).unwrap();
        assert_eq!(p.assignment, vec![0, 1]);
        assert!(p.trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn uniform_start_rescues_knapsack_trap() {
        // From the cheapest start greedy spends on group 0 twice and can no
        // longer afford group 1's single big step; uniform level 1 is better.
        let errors = vec![vec![1.0, 0.5, 0.1], vec![1.0, 0.1, 0.05]];
        let i = inst(vec![1.0, 1.0], vec![1, 3], vec![0.0, 1.0, 2.0], errors, 4.0);
        let (a, _) = i.greedy_from(vec![0, 0]);
        assert_eq!(a, vec![2, 0]);
        let p = schedule(&i).unwrap();
        assert_eq!(p.assignment, vec![1, 1]);
        assert!(p.surrogate_value <= i.surrogate(&i.best_uniform().unwrap()));
    }

    #[test]
    fn matches_exhaustive_on_concave_instance() {
        // Diminishing returns per unit cost in every group.
        let errors = vec![vec![0.6, 0.3, 0.15], vec![0.5, 0.3, 0.2], vec![0.4, 0.3, 0.25]];
        let i = inst(vec![4.0, 2.0, 1.0], vec![2, 2, 2], vec![1.0, 2.0, 3.0], errors, 10.0);
        let p = schedule(&i).unwrap();
        let (_, opt) = exhaustive_optimum(&i).unwrap();
        assert!((p.surrogate_value - opt).abs() < 1e-12);
        assert!(i.best_upgrade(&p.assignment).is_none());
    }

    #[test]
    fn table_one_cost_arithmetic() {
        let set = PolicySet::new(&PolicySet::default_rates(), 14, 1024, 0).unwrap();
        let half = set.len() - 1;
        assert_eq!(576.0 * set.cost(half), 4032.0);
        assert!(576.0 * set.cost(half) <= 4096.0);
    }

    #[test]
    fn noiseless_profiling_is_error_free_and_deterministic() {
        let grouping = quantize_groups(&[4.0, 3.0, 2.0, 1.0, 0.5, 0.2, 0.1, 0.0], 2, UtilityMode::Grad).unwrap();
        let set = PolicySet::new(&PolicySet::default_rates(), 4, 1024, 0).unwrap();
        let setup = ProfilingSetup { trials: 50, ..default_profiling_setup(16, 3) };
        let ch = ChannelSpec::new(ChannelKind::Awgn);
        let c = profile_error_curves(&grouping, &set, &ch, 200.0, &setup).unwrap();
        assert!(c.values.iter().flatten().all(|&e| e == 0.0));
        let noisy1 = profile_error_curves(&grouping, &set, &ch, 4.0, &setup).unwrap();
        let noisy2 = profile_error_curves(&grouping, &set, &ch, 4.0, &setup).unwrap();
        assert_eq!(noisy1, noisy2);
        assert!(noisy1.values.iter().flatten().any(|&e| e > 0.0));
    }

    /// Standard normal tail by Simpson quadrature of the density.
    fn q_function(x: f64) -> f64 {
        let (a, b, n) = (x, x + 40.0, 200_000);
        let h = (b - a) / n as f64;
        let f = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn uncoded_awgn_matches_closed_form_gray_ber() {
        let snr_db: f64 = 0.0;
        let sigma2 = 1.0 / 10f64.powf(snr_db / 10.0);
        // Per-axis distance unit over per-axis noise deviation.
        let u = (0.1f64).sqrt() / (sigma2 / 2.0).sqrt();
        let (q1, q3, q5) = (q_function(u), q_function(3.0 * u), q_function(5.0 * u));
        let sign_bit = (q1 + q3) / 2.0;
        let inner_bit = q1 + (q3 - q5) / 2.0;
        let ber = (sign_bit + inner_bit) / 2.0;
        let ter = 1.0 - (1.0 - ber).powi(4);

        let grouping = quantize_groups(&[1.0; 4], 1, UtilityMode::Grad).unwrap();
        let set = PolicySet::new(&PolicySet::default_rates(), 4, 1024, 0).unwrap();
        let setup = default_profiling_setup(16, 99);
        let c = profile_error_curves(&grouping, &set, &ChannelSpec::new(ChannelKind::Awgn), snr_db, &setup).unwrap();
        let n = (setup.trials * 4) as f64;
        let sd = (ter * (1.0 - ter) / n).sqrt();
        assert!((c.values[0][0] - ter).abs() <= 3.0 * sd, "measured {} vs analytic {ter} ± {sd}", c.values[0][0]);
    }
}
