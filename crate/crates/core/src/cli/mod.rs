//! Command-line surface: data ingestion, persisted models and the
//! calibrate / monitor / simulate / diagnose / generate commands.

mod bundle;
mod ingest;
mod svg;

pub use bundle::{ModelBundle, FORMAT_VERSION};
pub use ingest::{ingest_profiles, read_group_map, read_long_csv, write_long_csv, GroupCentering, LongCsv};
pub use svg::lambda_trajectory_svg;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{diagnose, DiagnosisResult};
use crate::error::{MpcError, Result};
use crate::fda::ProfileSample;
use crate::monitor::{default_sparsity_grid, phase1_calibrate, MonitorConfig, StepResult};
use crate::seeding::{derive_rng, tag};
use crate::simgen::{
    apply_scenario, base_matrix, build_theta0, evaluate_arl, generate_profiles, ModelId, ProfileGenerator,
    Scenario, ScenarioSpec, SimModelSpec,
};

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "MPC_SEED";

#[derive(Debug, Parser)]
#[command(name = "mpc", version, about = "Multichannel profile covariance control chart")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Phase I: fit the chart on in-control profiles.
    Calibrate(CalibrateArgs),
    /// Phase II: monitor a stream until the first alarm.
    Monitor(MonitorArgs),
    /// Estimate the ARL of a calibrated chart on synthetic data.
    Simulate(SimulateArgs),
    /// Change point and shifted channel pairs after an alarm.
    Diagnose(DiagnoseArgs),
    /// Write synthetic profiles as long CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// In-control profiles (obs_id,channel,time_index,value).
    #[arg(long)]
    pub ic: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Calibration report; defaults to `<out stem>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Base configuration (JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub arl0: Option<f64>,
    /// MEWMC weight.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Number of sparsity levels.
    #[arg(long)]
    pub ns: Option<usize>,
    #[arg(long)]
    pub n_seq: Option<usize>,
    #[arg(long)]
    pub l_seq: Option<usize>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Channel-to-group map (JSON object or CSV channel,group); each
    /// group's mean function is removed before calibration.
    #[arg(long)]
    pub center_by_group: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Phase II profiles in long CSV; observations are processed in order of
    /// first appearance.
    #[arg(long)]
    pub stream: PathBuf,
    /// JSONL output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Use this calibrated chart instead of calibrating on synthetic data.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-sequence run lengths as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// JSONL written by `monitor`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub fdr: f64,
    /// Result JSON; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// SVG of the Λ trajectory.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "I")]
    pub model_id: String,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    /// Number of observations.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub n_grid: usize,
    #[arg(long, default_value_t = 5)]
    pub basis_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub noise_sd: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Independent draw index under the same seed.
    #[arg(long, default_value_t = 0)]
    pub draw: u64,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub severity: u8,
    #[arg(long, default_value_t = 1)]
    pub n_el: usize,
    /// In-control observations before the shift starts.
    #[arg(long, default_value_t = 0)]
    pub shift_after: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Scenario ARL study settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub model: SimModelSpec,
    pub scenario: Option<ScenarioSpec>,
    /// Phase I sample size when calibrating.
    pub n_phase1: usize,
    pub monitor: MonitorConfig,
    pub n_seq: usize,
    pub l_seq: usize,
    /// ARL stream seed; the command-line seed applies when absent.
    pub seed: Option<u64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            model: SimModelSpec::default(),
            scenario: None,
            n_phase1: 800,
            monitor: MonitorConfig::default(),
            n_seq: 100,
            l_seq: 200,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    Alarm,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Clean => 0,
            Outcome::Alarm => 2,
        }
    }
}

/// Single-line JSON error for standard error.
pub fn error_line(kind: &str, message: &str) -> String {
    let flat = message.split_whitespace().collect::<Vec<_>>().join(" ");
    serde_json::json!({ "error": { "kind": kind, "message": flat } }).to_string()
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Calibrate(a) => calibrate(&a),
        Command::Monitor(a) => monitor(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Diagnose(a) => run_diagnose(&a),
        Command::Generate(a) => generate(&a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MpcError::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn default_report_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    out.with_file_name(format!("{stem}.report.json"))
}

fn calibrate(a: &CalibrateArgs) -> Result<Outcome> {
    let data = ingest_profiles(&a.ic)?;
    let mut cfg: MonitorConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => MonitorConfig::default(),
    };
    if let Some(v) = a.arl0 {
        cfg.arl0 = v;
    }
    if let Some(v) = a.rho {
        cfg.ewma_weight = v;
    }
    if let Some(v) = a.ns {
        if v == 0 {
            return Err(MpcError::InvalidInput("--ns must be positive".into()));
        }
        cfg.sparsity_grid = Some(default_sparsity_grid(data.sample.n_channels(), v));
    }
    if let Some(v) = a.n_seq {
        cfg.n_seq_ic = v;
    }
    if let Some(v) = a.l_seq {
        cfg.l_seq_ic = v;
    }
    if let Some(v) = a.seed {
        cfg.rng_seed = v;
    }
    cfg.validate()?;
    let centering = match &a.center_by_group {
        Some(p) => Some(GroupCentering::fit(&data.sample, &data.channels, &read_group_map(p)?)?),
        None => None,
    };
    let ic = match &centering {
        Some(c) => c.apply_sample(&data.sample)?,
        None => data.sample.clone(),
    };
    info!(
        "calibrating on {} observations, {} channels, {} points",
        ic.n_obs(),
        ic.n_channels(),
        ic.n_points()
    );
    let (chart, report) = phase1_calibrate(&ic, &cfg)?;
    let bundle = ModelBundle::new(chart, data.channels.clone(), centering)?;
    bundle.save(&a.out)?;
    let report_path = a.report.clone().unwrap_or_else(|| default_report_path(&a.out));
    write_json(&report_path, &report)?;
    Ok(Outcome::Clean)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn step_line(obs_id: &str, r: &StepResult) -> Result<String> {
    let mut v = serde_json::to_value(r)?;
    if let serde_json::Value::Object(m) = &mut v {
        m.insert("obs_id".into(), obs_id.into());
    }
    Ok(serde_json::to_string(&v)?)
}

fn monitor(a: &MonitorArgs) -> Result<Outcome> {
    let bundle = ModelBundle::load(&a.model)?;
    let stream = ingest_profiles(&a.stream)?;
    let mut obs = stream.aligned(&bundle.channels, &bundle.raw_grid)?;
    if let Some(c) = &bundle.centering {
        obs.iter_mut().for_each(|o| c.apply(o));
    }
    let chart = bundle.chart();
    let mut session = chart.session()?;
    let mut out = open_output(a.out.as_deref())?;
    for (o, id) in obs.iter().zip(&stream.obs_ids) {
        match session.step_raw(o) {
            Ok(r) => {
                writeln!(out, "{}", step_line(id, &r)?)?;
                out.flush()?;
                if r.signal {
                    info!("alarm at step {} (obs {id})", r.step_index);
                    return Ok(Outcome::Alarm);
                }
            }
            Err(e) => {
                let rec = serde_json::json!({
                    "step_index": session.step_count() + 1,
                    "obs_id": id,
                    "error": { "kind": e.kind(), "message": e.to_string() },
                });
                writeln!(out, "{rec}")?;
                out.flush()?;
                eprintln!("{}", error_line(e.kind(), &format!("obs {id}: {e}")));
            }
        }
    }
    Ok(Outcome::Clean)
}

fn simulate(a: &SimulateArgs) -> Result<Outcome> {
    let cfg: SimulationConfig = read_json(&a.config)?;
    cfg.model.validate()?;
    let seed = cfg.seed.or(a.seed).unwrap_or(0);
    let theta0 = build_theta0(&cfg.model)?;
    let chart = match &a.model {
        Some(p) => ModelBundle::load(p)?.chart(),
        None => {
            cfg.monitor.validate()?;
            let ic = generate_profiles(&theta0, cfg.n_phase1, &cfg.model)?;
            phase1_calibrate(&ic, &cfg.monitor)?.0
        }
    };
    if chart.n_channels() != cfg.model.p {
        return Err(MpcError::DimensionMismatch(format!(
            "chart has {} channels, simulation model has {}",
            chart.n_channels(),
            cfg.model.p
        )));
    }
    let outcome = match &cfg.scenario {
        Some(s) => Some(apply_scenario(&theta0, s, &base_matrix(cfg.model.basis_size))?),
        None => None,
    };
    let theta1 = outcome.as_ref().map_or(&theta0, |o| &o.theta1);
    let mut report = evaluate_arl(&chart, theta1, &cfg.model, cfg.n_seq, cfg.l_seq, seed)?;
    report.settings.scenario = outcome;
    write_json(&a.out, &report)?;
    if let Some(p) = &a.csv {
        std::fs::write(p, report.to_csv()?)?;
    }
    info!("ARL {:.2} [{:.2}, {:.2}]", report.arl, report.ci_low, report.ci_high);
    Ok(Outcome::Clean)
}

/// Step records of a monitoring run up to and including the first alarm.
pub fn read_run(path: &Path) -> Result<Vec<StepResult>> {
    let f = File::open(path).map_err(|e| MpcError::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    let mut steps: Vec<StepResult> = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut v: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| MpcError::Format(format!("run line {}: {e}", n + 1)))?;
        let Some(m) = v.as_object_mut() else {
            return Err(MpcError::Format(format!("run line {} is not an object", n + 1)));
        };
        if m.contains_key("error") {
            continue;
        }
        m.remove("obs_id");
        let r: StepResult =
            serde_json::from_value(v).map_err(|e| MpcError::Format(format!("run line {}: {e}", n + 1)))?;
        if r.step_index != steps.len() + 1 {
            return Err(MpcError::Format(format!(
                "run line {}: step {} follows step {}",
                n + 1,
                r.step_index,
                steps.len()
            )));
        }
        let signal = r.signal;
        steps.push(r);
        if signal {
            return Ok(steps);
        }
    }
    Err(MpcError::InvalidInput("run contains no alarm".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    #[serde(flatten)]
    pub result: DiagnosisResult,
    /// `shifted_pairs` with channel labels.
    pub shifted_channels: Vec<(String, String)>,
}

fn run_diagnose(a: &DiagnoseArgs) -> Result<Outcome> {
    let bundle = ModelBundle::load(&a.model)?;
    let history = read_run(&a.run)?;
    let chart = bundle.chart();
    let result = diagnose(&chart, &history, a.fdr)?;
    let report = DiagnosisReport {
        shifted_channels: result
            .shifted_pairs
            .iter()
            .map(|&(j, l)| (bundle.channels[j].clone(), bundle.channels[l].clone()))
            .collect(),
        result,
    };
    let mut s = serde_json::to_string_pretty(&report)?;
    s.push('\n');
    match &a.out {
        Some(p) => std::fs::write(p, s)?,
        None => print!("{s}"),
    }
    if let Some(p) = &a.svg {
        let lambda: Vec<f64> = history.iter().map(|r| r.lambda).collect();
        let svg = lambda_trajectory_svg(
            &lambda,
            chart.refs.control_limit,
            Some(report.result.signal_step),
            Some(report.result.change_point),
        );
        std::fs::write(p, svg)?;
    }
    Ok(Outcome::Clean)
}

fn generate(a: &GenerateArgs) -> Result<Outcome> {
    let spec = SimModelSpec {
        model: a.model_id.parse::<ModelId>()?,
        p: a.p,
        basis_size: a.basis_size,
        noise_sd: a.noise_sd,
        n_grid: a.n_grid,
        seed: a.seed,
        ..Default::default()
    };
    let theta0 = build_theta0(&spec)?;
    let mut rng = derive_rng(a.seed, tag::PHASE1_DATA, a.draw);
    let ic = ProfileGenerator::new(&theta0, &spec)?;
    let oc = match &a.scenario {
        Some(s) => {
            let sc = ScenarioSpec {
                scenario: s.parse::<Scenario>()?,
                n_el: a.n_el,
                severity: a.severity,
                seed: a.seed,
                selected_blocks: Vec::new(),
            };
            let o = apply_scenario(&theta0, &sc, &base_matrix(a.basis_size))?;
            info!("scenario blocks {:?}, delta {}", o.spec.selected_blocks, o.delta);
            Some(ProfileGenerator::new(&o.theta1, &spec)?)
        }
        None => None,
    };
    let obs: Vec<Vec<f64>> = (0..a.n)
        .map(|i| match &oc {
            Some(g) if i >= a.shift_after => g.observation(&mut rng),
            _ => ic.observation(&mut rng),
        })
        .collect();
    let sample = ProfileSample::from_observations(ic.grid().to_vec(), &obs, a.p)?;
    let channels: Vec<String> = (1..=a.p).map(|j| format!("ch{j}")).collect();
    let f = BufWriter::new(File::create(&a.out)?);
    write_long_csv(f, &sample, &channels, 1)?;
    Ok(Outcome::Clean)
}
