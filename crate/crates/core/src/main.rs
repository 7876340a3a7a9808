use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use cellfree_fl::experiment::{
    drop_lambda, emit_results, point_gain, run_experiment_training, run_sweep, solve_drop, Drop, ExperimentConfig,
    Mode, OutputFormat, PowerMode,
};
use cellfree_fl::privacy::{dp_violation_bound, max_bits_for_budget, min_bits_for_budget, AdcPrivacyScenario, DpBudget, PrivacyRound};
use cellfree_fl::schedule::schedule_to_csv;
use cellfree_fl::topology::beta_to_csv;
use cellfree_fl::{Error, Result};

#[derive(Parser)]
#[command(name = "cellfree-fl", version, about = "Federated learning over quantized cell-free massive MIMO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Uplink timing at full power for each drop.
    Simulate(Common),
    /// Power control for each drop, with the solver trace of drop 0.
    OptimizePower(Common),
    /// Privacy ledger and violation bound for each drop.
    DpCheck(Common),
    /// FL training trace on drop 0.
    Train(Common),
    /// Sweep over the configured axis.
    Sweep(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Svg,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    drops: Option<usize>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = self.drops {
            cfg.num_drops = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.workers {
            b = b.num_threads(n.max(1));
        }
        b.build().map_err(|e| Error::Internal(format!("thread pool: {e}")))
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<String> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    Ok(name.to_string())
}

#[derive(Serialize)]
struct DropLine {
    drop: usize,
    time_s: f64,
    full_power_time_s: f64,
    lambda: f64,
}

fn per_drop(args: &Common, cfg: &ExperimentConfig) -> Result<Vec<DropLine>> {
    let point = cfg.point_base()?;
    let pool = args.pool()?;
    pool.install(|| {
        (0..cfg.num_drops)
            .into_par_iter()
            .map(|d| {
                let drop = Drop::sample(&point.system, cfg.drop_seed(d));
                let sol = solve_drop(cfg, &point, &drop)?;
                Ok(DropLine {
                    drop: d,
                    time_s: sol.timing.total,
                    full_power_time_s: sol.full_power_timing.total,
                    lambda: drop_lambda(cfg, &point, &drop, &sol)?,
                })
            })
            .collect()
    })
}

fn drops_csv(cfg: &ExperimentConfig, lines: &[DropLine]) -> String {
    let hash = cfg.config_hash();
    let mut out = String::from("seed,config_hash,drop,time_s,full_power_time_s,lambda\n");
    for l in lines {
        out.push_str(&format!("{},{hash},{},{},{},{}\n", cfg.seed, l.drop, l.time_s, l.full_power_time_s, l.lambda));
    }
    out
}

fn drop0_files(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let point = cfg.point_base()?;
    let drop = Drop::sample(&point.system, cfg.drop_seed(0));
    let sol = solve_drop(cfg, &point, &drop)?;
    let mut files = vec![write(out, "beta.csv", &beta_to_csv(&drop.beta))?];
    if !sol.schedule.is_empty() {
        files.push(write(out, "schedule.csv", &schedule_to_csv(&sol.schedule))?);
    }
    let mut powers = String::from("round,ue,power_w\n");
    for (t, p) in sol.powers.iter().enumerate() {
        for (k, v) in p.0.iter().enumerate() {
            powers.push_str(&format!("{t},{k},{v}\n"));
        }
    }
    files.push(write(out, "powers.csv", &powers)?);
    if !sol.trace.is_empty() {
        let mut tr = String::from("iteration,time_s\n");
        for (i, v) in sol.trace.iter().enumerate() {
            tr.push_str(&format!("{i},{v}\n"));
        }
        files.push(write(out, "sca_trace.csv", &tr)?);
    }
    Ok(files)
}

fn simulate(args: &Common) -> Result<serde_json::Value> {
    let mut cfg = args.load()?;
    cfg.power = PowerMode::Full;
    let lines = per_drop(args, &cfg)?;
    let mut files = vec![write(&args.out, "simulate.csv", &drops_csv(&cfg, &lines))?];
    files.extend(drop0_files(&cfg, &args.out)?);
    let mean = lines.iter().map(|l| l.time_s).sum::<f64>() / lines.len() as f64;
    Ok(json!({ "command": "simulate", "config_hash": cfg.config_hash(), "mean_time_s": mean, "drops": lines, "files": files }))
}

fn optimize(args: &Common) -> Result<serde_json::Value> {
    let mut cfg = args.load()?;
    cfg.power = PowerMode::Sca;
    let lines = per_drop(args, &cfg)?;
    let mut files = vec![write(&args.out, "optimize_power.csv", &drops_csv(&cfg, &lines))?];
    files.extend(drop0_files(&cfg, &args.out)?);
    let n = lines.len() as f64;
    let mean = lines.iter().map(|l| l.time_s).sum::<f64>() / n;
    let mean_full = lines.iter().map(|l| l.full_power_time_s).sum::<f64>() / n;
    Ok(json!({
        "command": "optimize-power",
        "config_hash": cfg.config_hash(),
        "mean_time_s": mean,
        "mean_full_power_time_s": mean_full,
        "reduction": 1.0 - mean / mean_full,
        "drops": lines,
        "files": files,
    }))
}

fn dp_check(args: &Common) -> Result<serde_json::Value> {
    let cfg = args.load()?;
    let lines = per_drop(args, &cfg)?;
    let budget = DpBudget::new(cfg.privacy.epsilon, cfg.privacy.delta)?;
    let mut csv = String::from("seed,config_hash,drop,lambda,epsilon,bound,certified\n");
    let hash = cfg.config_hash();
    let mut reports = Vec::with_capacity(lines.len());
    for l in &lines {
        let (bound, certified) = match dp_violation_bound(l.lambda, budget.epsilon) {
            Ok(b) => (Some(b), b < budget.delta),
            Err(Error::MarginViolation { .. }) => (None, false),
            Err(e) => return Err(e),
        };
        let b_txt = bound.map_or_else(|| "margin-violation".to_string(), |b| b.to_string());
        csv.push_str(&format!("{},{hash},{},{},{},{b_txt},{certified}\n", cfg.seed, l.drop, l.lambda, budget.epsilon));
        reports.push(json!({ "drop": l.drop, "lambda": l.lambda, "bound": bound, "certified": certified }));
    }
    let files = vec![write(&args.out, "dp_check.csv", &csv)?];
    let mut out = json!({ "command": "dp-check", "config_hash": hash, "epsilon": budget.epsilon, "delta": budget.delta, "drops": reports, "files": files });
    if cfg.mode == Mode::SyncAdc {
        // bit-depth window of drop 0 at its optimized powers
        let point = cfg.point_base()?;
        let drop = Drop::sample(&point.system, cfg.drop_seed(0));
        let sol = solve_drop(&cfg, &point, &drop)?;
        let scen = AdcPrivacyScenario {
            rounds: (0..sol.powers.len())
                .map(|t| PrivacyRound {
                    channel: drop.channel(t),
                    powers: sol.powers[t].0.clone(),
                })
                .collect(),
            noise_power: point.system.noise_power_w,
            mode: cfg.privacy.sensitivity,
            table: cfg.distortion_table,
        };
        out["min_bits"] = json!(min_bits_for_budget(&budget, &scen, 1..=16)?);
        out["max_bits"] = json!(max_bits_for_budget(&budget, &scen, 1..=16)?);
        out["gain"] = json!(point_gain(&cfg, &point)?);
    }
    Ok(out)
}

fn train(args: &Common) -> Result<serde_json::Value> {
    let cfg = args.load()?;
    let trace = args.pool()?.install(|| run_experiment_training(&cfg, 0))?;
    let files = vec![write(&args.out, "train.csv", &trace.to_csv())?];
    let last = trace.rows.last().expect("initial row");
    Ok(json!({
        "command": "train",
        "config_hash": cfg.config_hash(),
        "rounds": last.round,
        "final_gap": last.gap,
        "final_bound": last.bound,
        "final_lambda": last.lambda,
        "contraction": trace.params.contraction(),
        "files": files,
    }))
}

fn sweep(args: &Common) -> Result<serde_json::Value> {
    let cfg = args.load()?;
    let table = run_sweep(&cfg, args.workers)?;
    let format = match args.format {
        Format::Csv => OutputFormat::Csv,
        Format::Svg => OutputFormat::Svg,
    };
    let files: Vec<String> = emit_results(&table, &args.out, format)?
        .iter()
        .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
        .collect();
    Ok(json!({ "command": "sweep", "config_hash": table.config_hash, "summary": table.summary(), "files": files }))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": "usage", "message": e.to_string().trim() } }));
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::OptimizePower(a) => optimize(a),
        Command::DpCheck(a) => dp_check(a),
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": e.kind(), "message": e.to_string() } }));
            ExitCode::FAILURE
        }
    }
}
