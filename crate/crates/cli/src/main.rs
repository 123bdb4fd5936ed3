use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridrisk::cascade_sim::{simulate_cascade, CascadeConfig, RebalanceMode, TripThreshold};
use gridrisk::grid_model::{scale_load, ParseOptions, RateColumn, ShortRatingColumn, DEFAULT_LIMIT_MARGIN};
use gridrisk::harness::{
    dispatch_for_level, level_factor, load_case, parse_levels, run_sweep, DispatchPolicy, ExperimentConfig,
    HarnessError, LimitAdjustment,
};
use gridrisk::risk_mc::{
    build_outage_model, exhaustive_risk, run_monte_carlo, BinEdges, McConfig, ProbabilityForm, RiskEstimate,
};

#[derive(Parser)]
#[command(name = "gridrisk", version, about = "Cascading-failure risk of a dispatched transmission grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one security-constrained dispatch and print it as a table.
    Dispatch {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, default_value_t = 100)]
        level: u32,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Play out one contingency and print the tier log as JSON lines.
    Cascade {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        cascade: CascadeArgs,
        #[arg(long, default_value_t = 100)]
        level: u32,
        /// Zero-based branch indices, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        branches: Vec<usize>,
    },
    /// Monte Carlo risk at one load level.
    Mc {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        cascade: CascadeArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long, default_value_t = 100)]
        level: u32,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full load-level sweep into an output directory.
    Sweep {
        /// JSON experiment config; command-line flags are ignored except --workers and --out.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        cascade: CascadeArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        /// `A:B`, `A:B:step` or a comma-separated list.
        #[arg(long, default_value = "50:119")]
        levels: String,
        /// Keep per-tier logs of every nonzero blackout.
        #[arg(long)]
        record_cascades: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact risk by enumerating every contingency up to --max-k branches.
    Oracle {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        cascade: CascadeArgs,
        #[arg(long, default_value_t = 100)]
        level: u32,
        #[arg(long, default_value_t = 2)]
        max_k: usize,
        #[arg(long, value_enum, default_value_t = FormArg::Full)]
        probability_form: FormArg,
        #[arg(long, default_value = "rts")]
        bins: String,
        #[arg(long)]
        single_outages: bool,
    },
}

#[derive(Args)]
struct CaseArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long, value_enum, default_value_t = RateArg::Permanent)]
    rate_column: RateArg,
    /// Outages per year for branches without reliability data.
    #[arg(long)]
    default_outage_rate: Option<f64>,
    /// Raise continuous ratings to cover single outages at this load factor (usually 1.1).
    #[arg(long)]
    stress_factor: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_LIMIT_MARGIN, requires = "stress_factor")]
    limit_margin: f64,
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long, value_enum, default_value_t = PolicyArg::Scdcopf)]
    policy: PolicyArg,
    /// Anchor level for the proportional policy.
    #[arg(long, default_value_t = 119)]
    anchor: u32,
}

#[derive(Args)]
struct CascadeArgs {
    /// Trip on the continuous rating instead of the short-term one.
    #[arg(long)]
    trip_continuous: bool,
    /// Upward ramp per generator per tier, MW.
    #[arg(long)]
    ramp_limit: Option<f64>,
    /// Cover island deficits by shedding only.
    #[arg(long)]
    pro_rata: bool,
    #[arg(long, default_value_t = 200)]
    max_tiers: usize,
}

#[derive(Args)]
struct SamplingArgs {
    #[arg(long, default_value_t = 100_000)]
    iterations: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// `rts`, `deciles`, or comma-separated edges such as `0,0.05,0.25,0.5,1`.
    #[arg(long, default_value = "rts")]
    bins: String,
    /// Simulate single-branch outages instead of scoring them zero.
    #[arg(long)]
    single_outages: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateArg {
    Permanent,
    Transient,
    Total,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Scdcopf,
    Proportional,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    Full,
    ProductOnly,
}

impl CaseArgs {
    fn parse_options(&self) -> ParseOptions {
        let mut opts = ParseOptions {
            rate_column: match self.rate_column {
                RateArg::Permanent => RateColumn::Permanent,
                RateArg::Transient => RateColumn::Transient,
                RateArg::Total => RateColumn::Total,
            },
            short_rating_column: ShortRatingColumn::RateC,
            ..ParseOptions::default()
        };
        if let Some(r) = self.default_outage_rate {
            opts.default_outage_rate = r;
        }
        opts
    }

    fn adjustment(&self) -> Option<LimitAdjustment> {
        self.stress_factor.map(|stress_factor| LimitAdjustment { stress_factor, margin: self.limit_margin })
    }
}

impl PolicyArgs {
    fn policy(&self) -> DispatchPolicy {
        match self.policy {
            PolicyArg::Scdcopf => DispatchPolicy::Scdcopf,
            PolicyArg::Proportional => DispatchPolicy::Proportional { anchor_level: self.anchor },
        }
    }
}

impl CascadeArgs {
    fn config(&self) -> CascadeConfig {
        CascadeConfig {
            trip_threshold: if self.trip_continuous { TripThreshold::Continuous } else { TripThreshold::ShortTerm },
            gen_ramp_limit: self.ramp_limit,
            rebalance: if self.pro_rata { RebalanceMode::ProRata } else { RebalanceMode::MinShed },
            max_tiers: self.max_tiers,
            ..CascadeConfig::default()
        }
    }
}

fn parse_bins(spec: &str) -> Result<BinEdges, HarnessError> {
    match spec {
        "rts" => Ok(BinEdges::small_system()),
        "deciles" => Ok(BinEdges::deciles()),
        list => {
            let edges = list
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| HarnessError::Config(format!("cannot read bin edges '{list}'")))?;
            BinEdges::new(edges).map_err(|e| HarnessError::Config(e.to_string()))
        }
    }
}

fn check_level(level: u32) -> Result<(), HarnessError> {
    if level == 0 || level > gridrisk::harness::MAX_LEVEL {
        return Err(HarnessError::Config(format!("load level {level}% outside 1..={}", gridrisk::harness::MAX_LEVEL)));
    }
    Ok(())
}

fn write_out(out: Option<&PathBuf>, text: &[u8]) -> Result<(), HarnessError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| HarnessError::Io { path: path.clone(), source }),
        None => io::stdout().write_all(text).map_err(|source| HarnessError::Io { path: "<stdout>".into(), source }),
    }
}

fn estimate_csv(level: u32, estimate: &RiskEstimate) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RiskEstimate::CSV_HEADER)?;
    estimate.write_csv(level, &mut w)?;
    w.into_inner().map_err(|e| HarnessError::Io { path: "<buffer>".into(), source: e.into_error() })
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Dispatch { case, policy, level, out } => {
            check_level(level)?;
            let (grid, _) = load_case(&case.case, &case.parse_options(), case.adjustment())?;
            let sol = dispatch_for_level(&grid, policy.policy(), level, &mut None)?;
            let scaled = scale_load(&grid, level_factor(level))?;
            write_out(out.as_ref(), sol.to_table(&scaled).as_bytes())
        }
        Command::Cascade { case, policy, cascade, level, branches } => {
            check_level(level)?;
            let (grid, _) = load_case(&case.case, &case.parse_options(), case.adjustment())?;
            let sol = dispatch_for_level(&grid, policy.policy(), level, &mut None)?;
            let scaled = scale_load(&grid, level_factor(level))?;
            let result = simulate_cascade(&scaled, &sol, &branches, &cascade.config())?;
            let mut buf = Vec::new();
            result.write_event_log(&mut buf).map_err(|source| HarnessError::Io { path: "<buffer>".into(), source })?;
            write_out(None, &buf)?;
            eprintln!("blackout_mw {} tiers {} islands {}", result.blackout_mw, result.tiers, result.final_islands);
            Ok(())
        }
        Command::Mc { case, policy, cascade, sampling, level, out } => {
            check_level(level)?;
            let (grid, _) = load_case(&case.case, &case.parse_options(), case.adjustment())?;
            let sol = dispatch_for_level(&grid, policy.policy(), level, &mut None)?;
            let scaled = scale_load(&grid, level_factor(level))?;
            let model = build_outage_model(&scaled).map_err(|e| HarnessError::Config(e.to_string()))?;
            let mc = McConfig {
                cascade: cascade.config(),
                workers: sampling.workers,
                simulate_single_outages: sampling.single_outages,
            };
            let bins = parse_bins(&sampling.bins)?;
            let est = run_monte_carlo(&scaled, &sol, &model, sampling.iterations, sampling.seed, &bins, &mc)
                .map_err(|source| HarnessError::Risk { level, source })?;
            write_out(out.as_ref(), &estimate_csv(level, &est)?)
        }
        Command::Sweep { config, case, policy, cascade, sampling, levels, record_cascades, out } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
                    serde_json::from_str::<ExperimentConfig>(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
                }
                None => ExperimentConfig {
                    parse: case.parse_options(),
                    limit_adjustment: case.adjustment(),
                    case_path: case.case,
                    load_levels: parse_levels(&levels)?,
                    dispatch_policy: policy.policy(),
                    n_iterations: sampling.iterations,
                    master_seed: sampling.seed,
                    bins: parse_bins(&sampling.bins)?,
                    cascade: cascade.config(),
                    simulate_single_outages: sampling.single_outages,
                    record_cascades,
                    workers: 0,
                    output_dir: PathBuf::new(),
                },
            };
            cfg.workers = sampling.workers;
            cfg.output_dir = out;
            let result = run_sweep(&cfg)?;
            for l in &result.levels {
                eprintln!(
                    "level {:>3}%  risk {:.6} MW  stderr {:.6}  shed {:.3} MW  cycles {}",
                    l.level, l.estimate.expected_blackout_mw, l.estimate.total_standard_error_mw, l.dispatch.shed_total, l.dispatch.cycles
                );
            }
            Ok(())
        }
        Command::Oracle { case, policy, cascade, level, max_k, probability_form, bins, single_outages } => {
            check_level(level)?;
            let (grid, _) = load_case(&case.case, &case.parse_options(), case.adjustment())?;
            let sol = dispatch_for_level(&grid, policy.policy(), level, &mut None)?;
            let scaled = scale_load(&grid, level_factor(level))?;
            let model = build_outage_model(&scaled).map_err(|e| HarnessError::Config(e.to_string()))?;
            let mc = McConfig { cascade: cascade.config(), workers: 0, simulate_single_outages: single_outages };
            let form = match probability_form {
                FormArg::Full => ProbabilityForm::Full,
                FormArg::ProductOnly => ProbabilityForm::ProductOnly,
            };
            let est = exhaustive_risk(&scaled, &sol, &model, max_k, &parse_bins(&bins)?, &mc, form)
                .map_err(|source| HarnessError::Risk { level, source })?;
            write_out(None, &estimate_csv(level, &est)?)?;
            if let Some(m) = est.unenumerated_probability {
                eprintln!("unenumerated probability {m:e}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
