use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tonic_core::harness::{prepare_with, run_prepared, Artifacts, RunConfig, RunReport, Variant, World};
use tonic_core::{ChannelKind, CodeRate, CompletionKind};

const ARTIFACTS_FILE: &str = "artifacts.json";
const REPORT_FILE: &str = "report.json";
const CSV_FILE: &str = "results.csv";
const CONFIG_FILE: &str = "config.toml";

#[derive(Parser)]
#[command(name = "tonic", version, about = "Token-centric semantic link simulator")]
struct Cli {
    /// Where artifacts, reports and CSV files are written.
    #[arg(long, global = true, env = "TONIC_ARTIFACT_DIR", default_value = "artifacts")]
    artifact_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Offline phase: utility groupings, error curves, protection profiles, thresholds.
    Prepare(ConfigArgs),
    /// Monte Carlo sweep; reuses prepared artifacts when they match the config.
    Run(ConfigArgs),
    /// Re-emit the CSV (or a readable table) from a saved JSON report.
    Report(ReportArgs),
}

#[derive(Args)]
struct ReportArgs {
    /// Report to read; defaults to report.json in the artifact directory.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Print an aligned table instead of CSV.
    #[arg(long)]
    table: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct ConfigArgs {
    /// TOML file with RunConfig keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the full-scale constants (K=16384, L=576, B0=4096).
    #[arg(long)]
    table_scale: bool,

    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alphabet_size: Option<usize>,
    #[arg(long)]
    sequence_length: Option<usize>,
    #[arg(long)]
    stay: Option<f64>,
    #[arg(long)]
    kernel_seed: Option<u64>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    table_seed: Option<u64>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    head_scale: Option<f64>,
    #[arg(long)]
    pooling_peak: Option<f64>,
    #[arg(long)]
    head_seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<ChannelKind>>,
    #[arg(long)]
    rician_k_factor: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    #[arg(long)]
    nominal_budget: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<Variant>>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<CodeRate>>,
    #[arg(long)]
    max_info_bits: Option<usize>,
    #[arg(long)]
    code_seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    power: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    utility_samples: Option<usize>,
    #[arg(long)]
    profiling_trials: Option<usize>,
    #[arg(long)]
    calibration_samples: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    threshold_grid: Option<Vec<f64>>,
    #[arg(long)]
    calibration_passes: Option<usize>,
    #[arg(long)]
    completion: Option<CompletionKind>,
}

macro_rules! overlay {
    ($cfg:ident, $args:ident, $($field:ident),* $(,)?) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}

macro_rules! overlay_opt {
    ($cfg:ident, $args:ident, $($field:ident),* $(,)?) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = Some(v); })*
    };
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                RunConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None if self.table_scale => RunConfig::table_scale(),
            None => RunConfig::default(),
        };
        if self.config.is_some() && self.table_scale {
            bail!("--table-scale and --config are mutually exclusive");
        }
        overlay!(
            cfg,
            self,
            seed,
            alphabet_size,
            sequence_length,
            stay,
            embedding_dim,
            classes,
            head_scale,
            pooling_peak,
            channels,
            rician_k_factor,
            snr_db,
            variants,
            groups,
            rates,
            max_info_bits,
            max_iters,
            power,
            trials,
            utility_samples,
            profiling_trials,
            calibration_samples,
            threshold_grid,
            calibration_passes,
            completion,
        );
        overlay_opt!(cfg, self, kernel_seed, table_seed, head_seed, nominal_budget, budgets, code_seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn load_artifacts(dir: &Path, cfg: &RunConfig) -> Result<Option<Artifacts>> {
    let path = dir.join(ARTIFACTS_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let artifacts: Artifacts = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok((artifacts.run_id == cfg.run_id()).then_some(artifacts))
}

fn prepare_cmd(dir: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let world = World::build(&cfg)?;
    let artifacts = prepare_with(&cfg, &world)?;
    write(dir, CONFIG_FILE, &cfg.to_toml())?;
    let path = write(dir, ARTIFACTS_FILE, &serde_json::to_string_pretty(&artifacts)?)?;
    eprintln!("run {}: prepared {} conditions -> {}", artifacts.run_id, artifacts.conditions.len(), path.display());
    Ok(())
}

fn run_cmd(dir: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let world = World::build(&cfg)?;
    let artifacts = match load_artifacts(dir, &cfg)? {
        Some(a) => {
            eprintln!("run {}: reusing prepared artifacts", a.run_id);
            a
        }
        None => {
            let a = prepare_with(&cfg, &world)?;
            write(dir, ARTIFACTS_FILE, &serde_json::to_string_pretty(&a)?)?;
            a
        }
    };
    let report = run_prepared(&cfg, &world, &artifacts)?;
    write(dir, CONFIG_FILE, &cfg.to_toml())?;
    write(dir, REPORT_FILE, &serde_json::to_string_pretty(&report)?)?;
    let csv = write(dir, CSV_FILE, &report.to_csv())?;
    eprintln!(
        "run {}: {} points in {:.1}s -> {}",
        report.run_id,
        report.points.len(),
        report.wall_clock_secs,
        csv.display()
    );
    Ok(())
}

fn table(report: &RunReport) -> String {
    let mut out = format!(
        "{:<12} {:<9} {:>7} {:>7} {:>9} {:>17} {:>9} {:>9} {:>9}\n",
        "variant", "channel", "snr_db", "budget", "accuracy", "95% CI", "loss", "TER", "WAR"
    );
    for p in &report.points {
        let s = &p.summary;
        out.push_str(&format!(
            "{:<12} {:<9} {:>7.1} {:>7} {:>9.4} {:>8.4}-{:<8.4} {:>9.4} {:>9.4} {:>9.4}\n",
            p.variant.name(),
            p.channel.name(),
            p.snr_db,
            p.budget,
            s.accuracy,
            s.acc_ci_lo,
            s.acc_ci_hi,
            s.mean_loss,
            s.mean_ter,
            s.mean_war
        ));
    }
    out
}

fn report_cmd(dir: &Path, args: &ReportArgs) -> Result<()> {
    let path = args.input.clone().unwrap_or_else(|| dir.join(REPORT_FILE));
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report: RunReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let body = if args.table { table(&report) } else { report.to_csv() };
    match &args.out {
        Some(out) => fs::write(out, body).with_context(|| format!("writing {}", out.display()))?,
        None => print!("{body}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Prepare(args) => prepare_cmd(&cli.artifact_dir, args),
        Command::Run(args) => run_cmd(&cli.artifact_dir, args),
        Command::Report(args) => report_cmd(&cli.artifact_dir, args),
    }
}
