//! Experiment runner: offline preparation, per-trial receiver chain and
//! sweeps over channel, SNR, budget and variant.
//!
//! Random streams are keyed so that every variant and budget at a given
//! (channel, SNR) sees the same samples and the same channel draws.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{calibrate, CalibrationConfig, CalibrationResult, Transcript, ValidationContext};
use crate::completion::{Completer, CompletionKind, CompletionModel};
use crate::error::{Error, Result};
use crate::fec::{CodeRate, PolicySet, DEFAULT_MAX_INFO_BITS, DEFAULT_MAX_ITERS};
use crate::gating::{gate, GatedSequence, GatingPolicy};
use crate::link::{transmit, LinkParams, LinkPlan};
use crate::metrics::{Aggregate, Summary, TrialRecord};
use crate::phy::{ChannelKind, ChannelRealization, ChannelSpec, DEFAULT_RICIAN_K};
use crate::rng::{self, Purpose};
use crate::source::{
    embed_slice, sample_with, task_loss, EmbeddingTable, LabeledSample, Pooling, SourceModel, TaskHead,
    TransitionKernel,
};
use crate::uep::{profile_error_curves, schedule_uep, uniform_profile, ErrorCurves, ProfilingSetup, ProtectionProfile};
use crate::utility::{average_profile, quantize_groups, UtilityGrouping, UtilityMode};

/// Alphabets above this size use a shared-base sticky kernel instead of a dense matrix.
pub const DENSE_KERNEL_MAX_ALPHABET: usize = 1024;

pub const CSV_HEADER: &str =
    "run_id,variant,channel,snr_db,budget,trials,accuracy,acc_ci_lo,acc_ci_hi,mean_loss,mean_ter,mean_war,seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "UNI")]
    Uni,
    #[serde(rename = "UEP")]
    Uep,
    #[serde(rename = "GateComp")]
    GateComp,
    #[serde(rename = "Full-Grad")]
    FullGrad,
    #[serde(rename = "Full-Oracle")]
    FullOracle,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::Uni, Variant::Uep, Variant::GateComp, Variant::FullGrad, Variant::FullOracle];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Uni => "UNI",
            Variant::Uep => "UEP",
            Variant::GateComp => "GateComp",
            Variant::FullGrad => "Full-Grad",
            Variant::FullOracle => "Full-Oracle",
        }
    }

    pub fn gates(self) -> bool {
        matches!(self, Variant::GateComp | Variant::FullGrad | Variant::FullOracle)
    }

    /// Grouping that drives scheduling; `None` means uniform protection.
    pub fn scheduling_mode(self) -> Option<UtilityMode> {
        match self {
            Variant::Uni | Variant::GateComp => None,
            Variant::Uep | Variant::FullGrad => Some(UtilityMode::Grad),
            Variant::FullOracle => Some(UtilityMode::Mask),
        }
    }

    /// Grouping used for transmission blocks and thresholds.
    pub fn grouping_mode(self) -> UtilityMode {
        self.scheduling_mode().unwrap_or(UtilityMode::Grad)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub alphabet_size: usize,
    pub sequence_length: usize,
    /// Self-transition mass of the source chain.
    pub stay: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_seed: Option<u64>,
    pub embedding_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table_seed: Option<u64>,
    pub classes: usize,
    pub head_scale: f64,
    /// Height of the positional salience bump; 0 gives mean pooling.
    pub pooling_peak: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head_seed: Option<u64>,
    pub channels: Vec<ChannelKind>,
    pub rician_k_factor: f64,
    pub snr_db: Vec<f64>,
    /// Reference budget `B0` in symbols; defaults to the cost of sending
    /// every token under the most protective policy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nominal_budget: Option<usize>,
    /// Defaults to `{B0 / 2, B0, 2 B0}`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budgets: Option<Vec<usize>>,
    pub variants: Vec<Variant>,
    pub groups: usize,
    pub rates: Vec<CodeRate>,
    pub max_info_bits: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code_seed: Option<u64>,
    pub max_iters: usize,
    pub power: f64,
    pub trials: usize,
    pub utility_samples: usize,
    pub profiling_trials: usize,
    pub calibration_samples: usize,
    pub threshold_grid: Vec<f64>,
    pub calibration_passes: usize,
    pub completion: CompletionKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cal = CalibrationConfig::default();
        Self {
            seed: 1,
            alphabet_size: 16,
            sequence_length: 16,
            stay: 0.9,
            kernel_seed: None,
            embedding_dim: 8,
            table_seed: None,
            classes: 4,
            head_scale: 3.0,
            pooling_peak: 4.0,
            head_seed: None,
            channels: vec![ChannelKind::Awgn, ChannelKind::Rician, ChannelKind::Rayleigh],
            rician_k_factor: DEFAULT_RICIAN_K,
            snr_db: (0..=7).map(|i| 2.0 * i as f64).collect(),
            nominal_budget: None,
            budgets: None,
            variants: Variant::ALL.to_vec(),
            groups: 4,
            rates: PolicySet::default_rates(),
            max_info_bits: DEFAULT_MAX_INFO_BITS,
            code_seed: None,
            max_iters: DEFAULT_MAX_ITERS,
            power: 1.0,
            trials: 2000,
            utility_samples: 500,
            profiling_trials: 2000,
            calibration_samples: 1000,
            threshold_grid: cal.grid,
            calibration_passes: cal.passes,
            completion: CompletionKind::ExactMarkov,
        }
    }
}

impl RunConfig {
    /// Full-scale constants: `K = 16384`, `L = 576`, `B0 = 4096`.
    pub fn table_scale() -> Self {
        Self {
            alphabet_size: 16384,
            sequence_length: 576,
            embedding_dim: 16,
            groups: 8,
            nominal_budget: Some(4096),
            completion: CompletionKind::ExactMarkov,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.alphabet_size < 2 {
            return bad("alphabet_size must be at least 2");
        }
        if self.sequence_length == 0 || self.embedding_dim == 0 || self.classes == 0 {
            return bad("sequence_length, embedding_dim and classes must be positive");
        }
        if !(0.0..1.0).contains(&self.stay) {
            return bad("stay must be in [0, 1)");
        }
        if self.channels.is_empty() || self.snr_db.is_empty() || self.variants.is_empty() || self.rates.is_empty() {
            return bad("channels, snr_db, variants and rates must be nonempty");
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db values must be finite");
        }
        if self.budgets.as_ref().is_some_and(|b| b.is_empty()) {
            return bad("budgets must be nonempty");
        }
        if self.groups == 0 || self.groups > self.sequence_length {
            return bad("groups must be in 1..=sequence_length");
        }
        if self.trials == 0 || self.utility_samples == 0 || self.profiling_trials == 0 || self.calibration_samples == 0
        {
            return bad("trial and sample counts must be at least 1");
        }
        if self.max_info_bits == 0 || self.max_iters == 0 {
            return bad("max_info_bits and max_iters must be positive");
        }
        if !(self.power > 0.0) || !(self.rician_k_factor >= 0.0) {
            return bad("power must be positive and rician_k_factor nonnegative");
        }
        self.calibration_config().validate()
    }

    pub fn calibration_config(&self) -> CalibrationConfig {
        CalibrationConfig { grid: self.threshold_grid.clone(), passes: self.calibration_passes }
    }

    fn sub_seed(&self, explicit: Option<u64>, purpose: Purpose) -> u64 {
        explicit.unwrap_or_else(|| rng::derive_seed(self.seed, purpose, &[]))
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn run_id(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Source, embeddings, head, codes and completer derived from a config.
#[derive(Debug, Clone)]
pub struct World {
    pub model: SourceModel,
    pub table: EmbeddingTable,
    pub head: TaskHead,
    pub policies: PolicySet,
    pub completer: CompletionModel,
}

impl World {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let kernel_seed = cfg.sub_seed(cfg.kernel_seed, Purpose::Kernel);
        let mut kr = rng::stream(kernel_seed, Purpose::Kernel, &[]);
        let kernel = if cfg.alphabet_size <= DENSE_KERNEL_MAX_ALPHABET {
            TransitionKernel::random_sticky(cfg.alphabet_size, cfg.stay, &mut kr)
        } else {
            TransitionKernel::random_shared_sticky(cfg.alphabet_size, cfg.stay, &mut kr)
        };
        let model = SourceModel::new(cfg.sequence_length, kernel, kernel_seed)?;
        let table = EmbeddingTable::random(
            cfg.alphabet_size,
            cfg.embedding_dim,
            cfg.sub_seed(cfg.table_seed, Purpose::Embedding),
        );
        let pooling = if cfg.pooling_peak == 0.0 {
            Pooling::Mean
        } else {
            Pooling::centered(cfg.sequence_length, cfg.pooling_peak)
        };
        let head = TaskHead::random(
            cfg.classes,
            cfg.embedding_dim,
            cfg.head_scale,
            pooling,
            cfg.sub_seed(cfg.head_seed, Purpose::Head),
        );
        let policies = PolicySet::new(
            &cfg.rates,
            model.bits_per_token,
            cfg.max_info_bits,
            cfg.sub_seed(cfg.code_seed, Purpose::Code),
        )?;
        let completer = CompletionModel::build(cfg.completion, &model.kernel);
        Ok(Self { model, table, head, policies, completer })
    }

    /// Symbols needed to send every token under the most protective policy.
    pub fn default_nominal_budget(&self) -> usize {
        let top = self.policies.len() - 1;
        (self.model.sequence_length as f64 * self.policies.cost(top)).ceil() as usize
    }

    pub fn sample(&self, seed: u64, purpose: Purpose, keys: &[u64]) -> LabeledSample {
        let mut r = rng::stream(seed, purpose, keys);
        sample_with(&self.model, &self.table, &self.head, &mut r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedPoint {
    pub budget: usize,
    pub variant: Variant,
    pub profile: ProtectionProfile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedCondition {
    pub channel: ChannelKind,
    pub snr_db: f64,
    pub grad_curves: ErrorCurves,
    pub mask_curves: ErrorCurves,
    pub points: Vec<PreparedPoint>,
}

/// Everything the offline phase produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub run_id: String,
    pub nominal_budget: usize,
    pub budgets: Vec<usize>,
    pub grad_grouping: UtilityGrouping,
    pub mask_grouping: UtilityGrouping,
    pub conditions: Vec<PreparedCondition>,
}

impl Artifacts {
    pub fn grouping(&self, mode: UtilityMode) -> &UtilityGrouping {
        match mode {
            UtilityMode::Grad => &self.grad_grouping,
            UtilityMode::Mask => &self.mask_grouping,
        }
    }
}

/// Budgets of a run: explicit list, or halves and doubles of `B0`.
pub fn resolve_budgets(cfg: &RunConfig, world: &World) -> (usize, Vec<usize>) {
    let b0 = cfg.nominal_budget.unwrap_or_else(|| world.default_nominal_budget());
    let budgets = cfg.budgets.clone().unwrap_or_else(|| vec![b0.div_ceil(2), b0, 2 * b0]);
    (b0, budgets)
}

fn channel_spec(cfg: &RunConfig, kind: ChannelKind) -> ChannelSpec {
    ChannelSpec { kind, rician_k_factor: cfg.rician_k_factor }
}

/// Receiver-side state for one grid point.
#[derive(Debug, Clone)]
pub struct PointContext {
    pub variant: Variant,
    pub plan: LinkPlan,
    pub group_of: Vec<usize>,
    pub gating: Option<GatingPolicy>,
    pub params: LinkParams,
}

impl PointContext {
    pub fn new(
        cfg: &RunConfig,
        variant: Variant,
        grouping: &UtilityGrouping,
        assignment: &[usize],
        gating: Option<GatingPolicy>,
        budget: usize,
    ) -> Self {
        Self {
            variant,
            plan: LinkPlan::from_group_map(&grouping.group_of, assignment.to_vec()),
            group_of: grouping.group_of.clone(),
            gating,
            params: LinkParams { alphabet_size: cfg.alphabet_size, power: cfg.power, budget, max_iters: cfg.max_iters },
        }
    }
}

/// Transmit, decode, gate, complete and classify one sample.
pub fn run_trial(
    world: &World,
    ctx: &PointContext,
    sample: &LabeledSample,
    channel: &ChannelRealization,
) -> Result<TrialRecord> {
    let source = &sample.tokens.tokens;
    let post = transmit(source, &ctx.plan, &world.policies, channel, &ctx.params)?;
    let (gated, completed) = match &ctx.gating {
        Some(policy) => {
            let gated = gate(&post, policy, &ctx.group_of)?;
            let completed = world.completer.complete(&gated)?.tokens;
            (gated, completed)
        }
        None => (
            GatedSequence { tokens: post.hard.iter().map(|&t| Some(t)).collect(), alphabet_size: post.alphabet_size },
            post.hard.clone(),
        ),
    };
    let z = embed_slice(&completed, &world.table)?;
    Ok(TrialRecord {
        source: source.clone(),
        hard: post.hard,
        gated: gated.tokens,
        completed,
        confidence: post.confidence,
        prediction: world.head.predict(&z),
        label: sample.label,
        loss: task_loss(&world.head, &z, sample.label),
    })
}

fn transcripts(
    cfg: &RunConfig,
    world: &World,
    ctx: &PointContext,
    spec: &ChannelSpec,
    condition: &[u64],
) -> Result<Vec<Transcript>> {
    (0..cfg.calibration_samples)
        .into_par_iter()
        .map(|n| {
            let sample = world.sample(cfg.seed, Purpose::Calibration, &[0, n as u64]);
            let mut keys = vec![1];
            keys.extend_from_slice(condition);
            keys.push(n as u64);
            let ch = spec.realize(
                condition_snr(cfg, condition),
                cfg.power,
                rng::derive_seed(cfg.seed, Purpose::Calibration, &keys),
            );
            let post = transmit(&sample.tokens.tokens, &ctx.plan, &world.policies, &ch, &ctx.params)?;
            Ok(Transcript { hard: post.hard, confidence: post.confidence, label: sample.label })
        })
        .collect()
}

fn condition_snr(cfg: &RunConfig, condition: &[u64]) -> f64 {
    cfg.snr_db[condition[1] as usize]
}

/// Offline phase: utilities and groupings, error curves, protection
/// profiles per budget and calibrated thresholds per condition.
pub fn prepare(cfg: &RunConfig) -> Result<Artifacts> {
    let world = World::build(cfg)?;
    prepare_with(cfg, &world)
}

pub fn prepare_with(cfg: &RunConfig, world: &World) -> Result<Artifacts> {
    let (nominal_budget, budgets) = resolve_budgets(cfg, world);
    let samples: Vec<LabeledSample> =
        (0..cfg.utility_samples).map(|n| world.sample(cfg.seed, Purpose::UtilitySet, &[n as u64])).collect();
    let grouping = |mode| -> Result<UtilityGrouping> {
        let profile = average_profile(&samples, &world.table, &world.head, mode)?;
        quantize_groups(&profile, cfg.groups, mode)
    };
    let grad_grouping = grouping(UtilityMode::Grad)?;
    let mask_grouping = grouping(UtilityMode::Mask)?;

    let mut conditions = Vec::new();
    for (ci, &kind) in cfg.channels.iter().enumerate() {
        let spec = channel_spec(cfg, kind);
        for (si, &snr) in cfg.snr_db.iter().enumerate() {
            let setup = ProfilingSetup {
                alphabet_size: cfg.alphabet_size,
                power: cfg.power,
                trials: cfg.profiling_trials,
                seed: rng::derive_seed(cfg.seed, Purpose::Profiling, &[ci as u64, si as u64]),
                max_iters: cfg.max_iters,
            };
            let grad_curves = profile_error_curves(&grad_grouping, &world.policies, &spec, snr, &setup)?;
            let mask_curves = if mask_grouping.sizes == grad_grouping.sizes {
                ErrorCurves { values: grad_curves.values.clone(), ..grad_curves.clone() }
            } else {
                profile_error_curves(&mask_grouping, &world.policies, &spec, snr, &setup)?
            };
            let mut points = Vec::new();
            for (bi, &budget) in budgets.iter().enumerate() {
                for &variant in &cfg.variants {
                    let g = if variant.grouping_mode() == UtilityMode::Grad { &grad_grouping } else { &mask_grouping };
                    let curves = if variant.grouping_mode() == UtilityMode::Grad { &grad_curves } else { &mask_curves };
                    let profile = match variant.scheduling_mode() {
                        Some(_) => schedule_uep(g, curves, &world.policies, budget as f64)?,
                        None => uniform_profile(g, curves, &world.policies, budget as f64)?,
                    };
                    let calibration = if variant.gates() {
                        let ctx = PointContext::new(cfg, variant, g, &profile.assignment, None, budget);
                        let condition = [ci as u64, si as u64, bi as u64, variant as u64];
                        let ts = transcripts(cfg, world, &ctx, &spec, &condition)?;
                        let vctx = ValidationContext::new(
                            &ts,
                            &g.group_of,
                            cfg.alphabet_size,
                            &world.completer,
                            &world.table,
                            &world.head,
                        );
                        Some(calibrate(&cfg.calibration_config(), cfg.groups, &vctx)?)
                    } else {
                        None
                    };
                    points.push(PreparedPoint { budget, variant, profile, calibration });
                }
            }
            conditions.push(PreparedCondition { channel: kind, snr_db: snr, grad_curves, mask_curves, points });
        }
    }
    Ok(Artifacts { run_id: cfg.run_id(), nominal_budget, budgets, grad_grouping, mask_grouping, conditions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub variant: Variant,
    pub channel: ChannelKind,
    pub snr_db: f64,
    pub budget: usize,
    pub seed: u64,
    pub summary: Summary,
    pub profile: ProtectionProfile,
    pub rates: Vec<CodeRate>,
    pub symbols_used: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub config: RunConfig,
    pub nominal_budget: usize,
    pub budgets: Vec<usize>,
    pub grad_grouping: UtilityGrouping,
    pub mask_grouping: UtilityGrouping,
    pub points: Vec<PointReport>,
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn point(&self, variant: Variant, channel: ChannelKind, snr_db: f64, budget: usize) -> Option<&PointReport> {
        self.points
            .iter()
            .find(|p| p.variant == variant && p.channel == channel && p.snr_db == snr_db && p.budget == budget)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let s = &p.summary;
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                self.run_id,
                p.variant,
                p.channel.name(),
                p.snr_db,
                p.budget,
                s.trials,
                s.accuracy,
                s.acc_ci_lo,
                s.acc_ci_hi,
                s.mean_loss,
                s.mean_ter,
                s.mean_war,
                p.seed
            );
        }
        out
    }
}

/// Monte Carlo over one grid point. Trials run in parallel and are folded
/// in trial order.
pub fn run_point(
    cfg: &RunConfig,
    world: &World,
    ctx: &PointContext,
    spec: &ChannelSpec,
    channel_index: usize,
    snr_db: f64,
    snr_index: usize,
) -> Result<Aggregate> {
    let records = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let sample = world.sample(cfg.seed, Purpose::Sample, &[t as u64]);
            let seed =
                rng::derive_seed(cfg.seed, Purpose::Channel, &[channel_index as u64, snr_index as u64, t as u64]);
            let ch = spec.realize(snr_db, cfg.power, seed);
            run_trial(world, ctx, &sample, &ch)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Aggregate::from_records(&records))
}

/// Online phase over prepared artifacts.
pub fn run_prepared(cfg: &RunConfig, world: &World, artifacts: &Artifacts) -> Result<RunReport> {
    if artifacts.run_id != cfg.run_id() {
        return Err(Error::InvalidConfig(format!(
            "artifacts belong to run {}, config is run {}",
            artifacts.run_id,
            cfg.run_id()
        )));
    }
    let start = Instant::now();
    let mut points = Vec::new();
    for (ci, &kind) in cfg.channels.iter().enumerate() {
        let spec = channel_spec(cfg, kind);
        for (si, &snr) in cfg.snr_db.iter().enumerate() {
            let cond = &artifacts.conditions[ci * cfg.snr_db.len() + si];
            for prepared in &cond.points {
                let t0 = Instant::now();
                let grouping = artifacts.grouping(prepared.variant.grouping_mode());
                let gating = prepared.calibration.as_ref().map(|c| c.policy.clone());
                let ctx = PointContext::new(
                    cfg,
                    prepared.variant,
                    grouping,
                    &prepared.profile.assignment,
                    gating.clone(),
                    prepared.budget,
                );
                let agg = run_point(cfg, world, &ctx, &spec, ci, snr, si)?;
                points.push(PointReport {
                    variant: prepared.variant,
                    channel: kind,
                    snr_db: snr,
                    budget: prepared.budget,
                    seed: cfg.seed,
                    summary: agg.summary()?,
                    rates: prepared.profile.assignment.iter().map(|&p| world.policies.policy(p).rate).collect(),
                    symbols_used: ctx.plan.symbols_used(&world.policies),
                    profile: prepared.profile.clone(),
                    thresholds: gating.map(|g| g.thresholds),
                    wall_clock_secs: t0.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok(RunReport {
        run_id: artifacts.run_id.clone(),
        config: cfg.clone(),
        nominal_budget: artifacts.nominal_budget,
        budgets: artifacts.budgets.clone(),
        grad_grouping: artifacts.grad_grouping.clone(),
        mask_grouping: artifacts.mask_grouping.clone(),
        points,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Offline and online phases back to back.
pub fn run_sweep(cfg: &RunConfig) -> Result<RunReport> {
    let world = World::build(cfg)?;
    let artifacts = prepare_with(cfg, &world)?;
    run_prepared(cfg, &world, &artifacts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            channels: vec![ChannelKind::Awgn],
            snr_db: vec![6.0],
            trials: 20,
            utility_samples: 20,
            profiling_trials: 20,
            calibration_samples: 10,
            threshold_grid: vec![0.0, 0.5, 0.9],
            calibration_passes: 1,
            ..RunConfig::default()
        }
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = small();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let partial = RunConfig::from_toml("seed = 9\nsnr_db = [3.0]\nvariants = [\"Full-Grad\"]\n").unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.variants, vec![Variant::FullGrad]);
        assert_eq!(partial.alphabet_size, 16);
        assert!(RunConfig::from_toml("sed = 9").is_err());
        assert!(RunConfig::from_toml("trials = 0").is_err());
        assert!(RunConfig::from_toml("snr_db = []").is_err());
    }

    #[test]
    fn run_id_tracks_config() {
        let a = small();
        let mut b = small();
        assert_eq!(a.run_id(), b.run_id());
        assert_eq!(a.run_id().len(), 16);
        b.seed += 1;
        assert_ne!(a.run_id(), b.run_id());
    }

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
    }

    #[test]
    fn desk_budgets() {
        let cfg = small();
        let world = World::build(&cfg).unwrap();
        assert_eq!(resolve_budgets(&cfg, &world), (32, vec![16, 32, 64]));
    }

    #[test]
    fn one_point_report() {
        let cfg = RunConfig { variants: vec![Variant::FullGrad], budgets: Some(vec![32]), trials: 10, ..small() };
        let report = run_sweep(&cfg).unwrap();
        assert_eq!(report.points.len(), 1);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with(CSV_HEADER));
        let p = &report.points[0];
        assert!(p.profile.total_cost <= 32.0);
        assert!(p.symbols_used <= 32);
        assert_eq!(p.thresholds.as_ref().unwrap().len(), cfg.groups);
    }

    #[test]
    fn infeasible_budget_surfaces() {
        let cfg = RunConfig { budgets: Some(vec![15]), variants: vec![Variant::Uni], ..small() };
        assert!(matches!(run_sweep(&cfg), Err(Error::InfeasibleBudget { .. })));
    }
}
