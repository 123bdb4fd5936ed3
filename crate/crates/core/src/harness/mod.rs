//! Load-level sweeps: dispatch, Monte Carlo and result files for each level.
//!
//! A sweep writes into one output directory:
//!
//! ```text
//! manifest.json          config echo, config hash, case digest, tool version
//! risk.csv               one row per (level, bin)
//! dispatch_summary.csv   one row per level
//! plot_bins.csv          rolling-averaged risk per (level, bin)
//! plot_total.csv         rolling-averaged total risk per level
//! timing.csv             wall-clock seconds per level
//! levels/L<level>.json   finished level records, used to resume
//! cascades/L<level>.jsonl  tier events of every nonzero blackout (optional)
//! ```
//!
//! Everything except `timing.csv` and the level records depends only on the
//! config and the case file, not on the worker count or on how often the sweep
//! was interrupted and resumed.

mod plot;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cascade_sim::{simulate_cascade, CascadeConfig, CascadeError, TierEvent};
use crate::dispatch::{proportional_dispatch, solve_scdcopf, DispatchError, DispatchSolution};
use crate::grid_model::{
    adjust_limits_for_feasibility, parse_case_with, scale_load, CaseError, GridCase, ParseOptions, DEFAULT_LIMIT_MARGIN,
    DEFAULT_STRESS_FACTOR,
};
use crate::risk_mc::{
    build_outage_model, iteration_rng, run_monte_carlo_events, sample_contingency, BinEdges, McConfig, RiskError,
    RiskEstimate,
};

pub use plot::{emit_plot_data, write_plot_data, PlotData};

/// Highest accepted load level, percent.
pub const MAX_LEVEL: u32 = 200;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("dispatch at level {level}%: {source}")]
    Dispatch { level: u32, source: DispatchError },
    #[error("risk at level {level}%: {source}")]
    Risk { level: u32, source: RiskError },
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Process exit code: 2 config, 3 dispatch non-convergence, 4 cascade
    /// nontermination, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Case(_) => 2,
            HarnessError::Dispatch { .. } => 3,
            HarnessError::Risk { source: RiskError::Cascade { source: CascadeError::Nontermination { .. }, .. }, .. }
            | HarnessError::Cascade(CascadeError::Nontermination { .. }) => 4,
            HarnessError::Risk { source: RiskError::Domain(_) | RiskError::Bins(_), .. } => 2,
            _ => 1,
        }
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
        move |source| HarnessError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DispatchPolicy {
    /// Fresh security-constrained OPF at every level.
    Scdcopf,
    /// One security-constrained OPF at `anchor_level`, scaled down to each level.
    Proportional { anchor_level: u32 },
}

/// Raise continuous ratings before the sweep; see
/// [`adjust_limits_for_feasibility`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitAdjustment {
    pub stress_factor: f64,
    pub margin: f64,
}

impl Default for LimitAdjustment {
    fn default() -> Self {
        LimitAdjustment { stress_factor: DEFAULT_STRESS_FACTOR, margin: DEFAULT_LIMIT_MARGIN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub case_path: PathBuf,
    /// Integer percentages of nominal load.
    pub load_levels: Vec<u32>,
    pub dispatch_policy: DispatchPolicy,
    pub n_iterations: u64,
    pub master_seed: u64,
    pub bins: BinEdges,
    #[serde(default)]
    pub cascade: CascadeConfig,
    #[serde(default)]
    pub simulate_single_outages: bool,
    #[serde(default)]
    pub parse: ParseOptions,
    #[serde(default)]
    pub limit_adjustment: Option<LimitAdjustment>,
    /// Write `cascades/L<level>.jsonl`.
    #[serde(default)]
    pub record_cascades: bool,
    /// Does not affect results, so it is neither hashed nor echoed.
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.load_levels.is_empty() {
            return bad("no load levels".into());
        }
        if let Some(l) = self.load_levels.iter().find(|&&l| l == 0 || l > MAX_LEVEL) {
            return bad(format!("load level {l}% outside 1..={MAX_LEVEL}"));
        }
        if self.load_levels.windows(2).any(|w| w[1] <= w[0]) {
            return bad("load levels must be strictly increasing".into());
        }
        if let DispatchPolicy::Proportional { anchor_level } = self.dispatch_policy {
            if anchor_level == 0 || anchor_level > MAX_LEVEL {
                return bad(format!("anchor level {anchor_level}% outside 1..={MAX_LEVEL}"));
            }
            if let Some(l) = self.load_levels.iter().find(|&&l| l > anchor_level) {
                return bad(format!("level {l}% is above the proportional anchor {anchor_level}%"));
            }
        }
        if self.n_iterations == 0 {
            return bad("n_iterations must be at least 1".into());
        }
        self.cascade.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }

    fn mc_config(&self) -> McConfig {
        McConfig {
            cascade: self.cascade.clone(),
            workers: self.workers,
            simulate_single_outages: self.simulate_single_outages,
        }
    }
}

/// Parses `50:119`, `50:115:5`, `90` or comma-separated mixtures of them.
pub fn parse_levels(spec: &str) -> Result<Vec<u32>, HarnessError> {
    let bad = || HarnessError::Config(format!("cannot read load levels '{spec}'"));
    let mut levels = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let nums: Vec<u32> = part.split(':').map(|n| n.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
        match nums[..] {
            [l] => levels.push(l),
            [a, b] if a <= b => levels.extend(a..=b),
            [a, b, step] if a <= b && step > 0 => levels.extend((a..=b).step_by(step as usize)),
            _ => return Err(bad()),
        }
    }
    levels.sort_unstable();
    levels.dedup();
    if levels.is_empty() {
        return Err(bad());
    }
    Ok(levels)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the config echo and the case file contents.
pub fn config_hash(config: &ExperimentConfig, case_text: &str) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    h.update([0u8]);
    h.update(case_text.as_bytes());
    hex(&h.finalize())
}

/// Reads a case and applies the optional limit adjustment.
pub fn load_case(path: &Path, parse: &ParseOptions, adjust: Option<LimitAdjustment>) -> Result<(GridCase, String), HarnessError> {
    let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
    let mut case = parse_case_with(&text, parse)?;
    if let Some(a) = adjust {
        case = adjust_limits_for_feasibility(&case, a.stress_factor, a.margin)?;
    }
    Ok((case, text))
}

/// Load factor for an integer percentage.
pub fn level_factor(level: u32) -> f64 {
    level as f64 / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSummary {
    pub objective: f64,
    pub shed_total: f64,
    pub cycles: usize,
    pub security_rows: usize,
    pub generation_mw: f64,
    pub served_mw: f64,
}

impl From<&DispatchSolution> for DispatchSummary {
    fn from(s: &DispatchSolution) -> Self {
        DispatchSummary {
            objective: s.objective,
            shed_total: s.shed_total,
            cycles: s.cycles,
            security_rows: s.security_constraints_active.len(),
            generation_mw: s.total_generation(),
            served_mw: s.total_served(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: u32,
    pub config_hash: String,
    pub dispatch: DispatchSummary,
    pub estimate: RiskEstimate,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub config_hash: String,
    pub levels: Vec<LevelResult>,
}

impl SweepResult {
    pub fn total_risk(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.estimate.expected_blackout_mw).collect()
    }

    /// Total risk smoothed over neighbouring integer levels.
    pub fn smoothed_total(&self) -> Vec<f64> {
        let levels: Vec<u32> = self.levels.iter().map(|l| l.level).collect();
        crate::risk_mc::rolling_average_levels(&levels, &self.total_risk())
    }
}

/// Dispatch at `level` under `policy`; `anchor` caches the proportional anchor.
pub fn dispatch_for_level(
    case: &GridCase,
    policy: DispatchPolicy,
    level: u32,
    anchor: &mut Option<DispatchSolution>,
) -> Result<DispatchSolution, HarnessError> {
    match policy {
        DispatchPolicy::Scdcopf => {
            let scaled = scale_load(case, level_factor(level))?;
            solve_scdcopf(&scaled).map_err(|source| HarnessError::Dispatch { level, source })
        }
        DispatchPolicy::Proportional { anchor_level } => {
            if anchor.is_none() {
                let scaled = scale_load(case, level_factor(anchor_level))?;
                let sol = solve_scdcopf(&scaled).map_err(|source| HarnessError::Dispatch { level: anchor_level, source })?;
                *anchor = Some(sol);
            }
            let reference = anchor.as_ref().expect("anchor solved");
            proportional_dispatch(reference, level_factor(level)).map_err(|source| HarnessError::Dispatch { level, source })
        }
    }
}

#[derive(Serialize)]
struct CascadeRecord<'a> {
    iteration: u64,
    contingency: &'a [usize],
    #[serde(flatten)]
    event: &'a TierEvent,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| HarnessError::Json { path: path.into(), source })?;
    text.push('\n');
    // write then rename so an interrupted run never leaves a truncated record
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(HarnessError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(HarnessError::io(path))
}

fn read_level(path: &Path) -> Option<LevelResult> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    config_hash: &'a str,
    case_sha256: String,
    master_seed: u64,
    levels: &'a [u32],
    completed_levels: Vec<u32>,
}

fn write_outputs(config: &ExperimentConfig, case_text: &str, result: &SweepResult) -> Result<(), HarnessError> {
    let out = &config.output_dir;
    let manifest = Manifest {
        tool: "gridrisk",
        version: env!("CARGO_PKG_VERSION"),
        config,
        config_hash: &result.config_hash,
        case_sha256: hex(&Sha256::digest(case_text.as_bytes())),
        master_seed: config.master_seed,
        levels: &config.load_levels,
        completed_levels: result.levels.iter().map(|l| l.level).collect(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;

    let mut risk = csv::Writer::from_path(out.join("risk.csv"))?;
    risk.write_record(RiskEstimate::CSV_HEADER)?;
    for l in &result.levels {
        l.estimate.write_csv(l.level, &mut risk)?;
    }
    risk.flush().map_err(HarnessError::io(out))?;

    let mut summary = csv::Writer::from_path(out.join("dispatch_summary.csv"))?;
    summary.write_record([
        "level",
        "load_factor",
        "objective",
        "shed_total_mw",
        "cycles",
        "security_rows",
        "generation_mw",
        "served_mw",
    ])?;
    for l in &result.levels {
        let d = &l.dispatch;
        summary.write_record([
            l.level.to_string(),
            level_factor(l.level).to_string(),
            d.objective.to_string(),
            d.shed_total.to_string(),
            d.cycles.to_string(),
            d.security_rows.to_string(),
            d.generation_mw.to_string(),
            d.served_mw.to_string(),
        ])?;
    }
    summary.flush().map_err(HarnessError::io(out))?;

    let mut timing = csv::Writer::from_path(out.join("timing.csv"))?;
    timing.write_record(["level", "wall_clock_s"])?;
    for l in &result.levels {
        timing.write_record([l.level.to_string(), l.wall_clock_s.to_string()])?;
    }
    timing.flush().map_err(HarnessError::io(out))?;

    if !result.levels.is_empty() {
        write_plot_data(&emit_plot_data(result), out)?;
    }
    Ok(())
}

fn record_cascades(
    path: &Path,
    case: &GridCase,
    dispatch: &DispatchSolution,
    model: &crate::risk_mc::OutageModel,
    config: &ExperimentConfig,
    events: &[crate::risk_mc::McEvent],
) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(HarnessError::io(path))?;
    let mut w = BufWriter::new(file);
    for e in events {
        let c = sample_contingency(model, &mut iteration_rng(config.master_seed, e.iteration));
        let r = simulate_cascade(case, dispatch, &c.branch_ids, &config.cascade)?;
        for tier in &r.events {
            let rec = CascadeRecord { iteration: e.iteration, contingency: &c.branch_ids, event: tier };
            serde_json::to_writer(&mut w, &rec).map_err(|source| HarnessError::Json { path: path.into(), source })?;
            w.write_all(b"\n").map_err(HarnessError::io(path))?;
        }
    }
    w.flush().map_err(HarnessError::io(path))
}

/// Runs every level of the sweep, skipping levels already finished under the
/// same config hash. On failure the finished levels are still written out.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    config.validate()?;
    let (case, case_text) = load_case(&config.case_path, &config.parse, config.limit_adjustment)?;
    let model = build_outage_model(&case).map_err(|e| HarnessError::Config(e.to_string()))?;
    let hash = config_hash(config, &case_text);
    let out = &config.output_dir;
    let level_dir = out.join("levels");
    fs::create_dir_all(&level_dir).map_err(HarnessError::io(&level_dir))?;
    let cascade_dir = out.join("cascades");
    if config.record_cascades {
        fs::create_dir_all(&cascade_dir).map_err(HarnessError::io(&cascade_dir))?;
    }
    let mc = config.mc_config();
    let mut anchor = None;
    let mut result = SweepResult { config_hash: hash.clone(), levels: Vec::new() };
    for &level in &config.load_levels {
        let path = level_dir.join(format!("L{level:03}.json"));
        if let Some(done) = read_level(&path).filter(|r| r.config_hash == hash && r.level == level) {
            result.levels.push(done);
            continue;
        }
        let started = Instant::now();
        let outcome = (|| {
            let scaled = scale_load(&case, level_factor(level))?;
            let dispatch = dispatch_for_level(&case, config.dispatch_policy, level, &mut anchor)?;
            let (estimate, events) =
                run_monte_carlo_events(&scaled, &dispatch, &model, config.n_iterations, config.master_seed, &config.bins, &mc)
                    .map_err(|source| HarnessError::Risk { level, source })?;
            if config.record_cascades {
                record_cascades(&cascade_dir.join(format!("L{level:03}.jsonl")), &scaled, &dispatch, &model, config, &events)?;
            }
            Ok::<_, HarnessError>(LevelResult {
                level,
                config_hash: hash.clone(),
                dispatch: DispatchSummary::from(&dispatch),
                estimate,
                wall_clock_s: started.elapsed().as_secs_f64(),
            })
        })();
        match outcome {
            Ok(record) => {
                write_json(&path, &record)?;
                result.levels.push(record);
            }
            Err(e) => {
                write_outputs(config, &case_text, &result)?;
                return Err(e);
            }
        }
    }
    write_outputs(config, &case_text, &result)?;
    Ok(result)
}
