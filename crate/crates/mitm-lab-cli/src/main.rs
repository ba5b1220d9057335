//! `mitm-lab`: batch front end for the simulation laboratory.
//!
//! Exit codes: 0 on success, 1 for config errors, 2 for runtime errors.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mitm_lab::harness::{self, presets, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "mitm-lab", version, about = "Learning-based MITM attack simulation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct CommonArgs {
    /// JSON config file (flat keys, matrices as nested arrays).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset.
    #[arg(long)]
    preset: Option<String>,
    /// Override one config key, e.g. `--set sigma2=2.0`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output format (csv or json); default emits both.
    #[arg(long)]
    format: Option<String>,
    /// Trial-count override.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker-thread override.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a nominal (attack-free) trajectory and dump it as CSV.
    Simulate(CommonArgs),
    /// Simulate a single attacked trajectory and dump it as CSV.
    Attack(CommonArgs),
    /// Run the configured detectors on a dumped trajectory.
    Detect {
        #[command(flatten)]
        common: CommonArgs,
        /// Trajectory dump produced by `simulate` or `attack`.
        #[arg(long)]
        traj: PathBuf,
    },
    /// Evaluate the deception-time bound calculators on a stored curve.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
        /// Deception-cost curve JSON (from a bound-suite run).
        #[arg(long)]
        curve: PathBuf,
    },
    /// Run a full experiment from a preset name or a config file.
    Experiment {
        #[command(flatten)]
        common: CommonArgs,
        /// Preset name or config path.
        name_or_path: Option<String>,
    },
    /// Static config checks; exits non-zero when any check fails.
    Validate(CommonArgs),
}

fn resolve(common: &CommonArgs, positional: Option<&str>) -> Result<ExperimentConfig> {
    let mut preset = common.preset.as_deref();
    let mut path = common.config.as_deref();
    let positional_path;
    if let Some(name) = positional {
        if presets::by_name(name).is_some() {
            if preset.is_some() && preset != Some(name) {
                bail!("conflicting presets `{}` and `{name}`", preset.unwrap());
            }
            preset = Some(name);
        } else {
            positional_path = PathBuf::from(name);
            if !positional_path.exists() {
                bail!(
                    "`{name}` is neither a preset (available: {}) nor a config file",
                    presets::PRESET_NAMES.join(", ")
                );
            }
            path = Some(positional_path.as_path());
        }
    }
    let mut config = config::resolve_config(preset, path, &common.set)?;
    config::apply_shorthands(&mut config, common.seed, common.trials, common.workers);
    Ok(config)
}

/// Invariant checks shared by every subcommand; failures name the key.
fn check_invariants(config: &ExperimentConfig) -> Result<()> {
    config.model().map_err(|e| anyhow!("{e}"))?;
    if !(config.sigma2 >= 0.0) {
        bail!("config error for key `sigma2`: must be non-negative");
    }
    if let Some(g) = config.gamma {
        if !(g > 0.0) {
            bail!("config error for key `gamma`: must be positive, got {g}");
        }
    }
    if let Some(eps) = &config.epsilon_grid {
        for e in eps {
            if !(*e > 0.0 && *e < 1.0) {
                bail!("config error for key `epsilon_grid`: epsilon must lie in (0,1), got {e}");
            }
        }
    }
    Ok(())
}

fn cmd_simulate(common: &CommonArgs) -> Result<()> {
    let config = resolve(common, None).map_err(ConfigError::wrap)?;
    check_invariants(&config).map_err(ConfigError::wrap)?;
    let model = config.model()?;
    let policy = config.control_policy(None)?;
    let x0 = config.x0(&model)?;
    let seed = harness::cell_trial_seed(config.master_seed, "cli/simulate", 0);
    let traj = mitm_lab::lti::simulate_nominal_from(&model, &policy, config.horizon, seed, x0)?;
    std::fs::create_dir_all(&common.out)?;
    let path = common.out.join("trajectory.csv");
    std::fs::write(&path, output::dump_nominal(&traj))?;
    println!("wrote {}", path.display());
    if let Some(k) = traj.diverged_at {
        println!("note: overflow guard tripped at step {k}; trajectory truncated");
    }
    Ok(())
}

fn cmd_attack(common: &CommonArgs) -> Result<()> {
    let config = resolve(common, None).map_err(ConfigError::wrap)?;
    check_invariants(&config).map_err(ConfigError::wrap)?;
    let model = config.model()?;
    let policy = config.control_policy(None)?;
    let l = config
        .exploration_len
        .or_else(|| config.l_grid.as_ref().and_then(|g| g.first().copied()))
        .ok_or_else(|| ConfigError::wrap(anyhow!("config error for key `exploration_len`: required by attack")))?;
    let strategy = config.strategy(l)?;
    let x0 = config.x0(&model)?;
    let seed = harness::cell_trial_seed(config.master_seed, "cli/attack", 0);
    let traj =
        mitm_lab::attacker::run_attack_from(&model, &policy, &strategy, config.horizon, seed, x0)?;
    std::fs::create_dir_all(&common.out)?;
    let path = common.out.join("trajectory.csv");
    std::fs::write(&path, output::dump_attacked(&traj))?;
    println!("wrote {}", path.display());
    if let Some(k) = traj.diverged_at {
        println!("note: overflow guard tripped at step {k}; trajectory truncated");
    }
    if let Some(k) = traj.plant_overflow_at {
        println!("note: hijacked plant exceeded the overflow guard at step {k}; state frozen");
    }
    Ok(())
}

fn cmd_detect(common: &CommonArgs, traj_path: &PathBuf) -> Result<()> {
    let config = resolve(common, None).map_err(ConfigError::wrap)?;
    check_invariants(&config).map_err(ConfigError::wrap)?;
    let model = config.model()?;
    let text = std::fs::read_to_string(traj_path)
        .with_context(|| format!("reading trajectory {}", traj_path.display()))?;
    let dump = output::read_dump(&text)?;
    if dump.dim != model.dim() {
        bail!(
            "trajectory dimension {} does not match the configured model ({})",
            dump.dim,
            model.dim()
        );
    }

    let mut verdicts = Vec::new();
    if let (Some(gamma), Some(tau)) = (config.gamma, config.tau) {
        if model.dim() == 1 {
            let theta = mitm_lab::detection::variance_test(
                &dump.feedback,
                &dump.inputs,
                model.gain(),
                gamma,
                tau,
                model.sigma2(),
            )?;
            verdicts.push(serde_json::json!({
                "detector": "variance_test",
                "tau": tau,
                "theta_hat": theta,
            }));
        } else {
            let sigma = config.noise_covariance(&model)?;
            let theta = mitm_lab::detection::covariance_test(
                &dump.feedback,
                &dump.inputs,
                model.gain(),
                &sigma,
                gamma,
                tau,
            )?;
            verdicts.push(serde_json::json!({
                "detector": "covariance_test",
                "tau": tau,
                "theta_hat": theta,
            }));
        }
    }
    if let (Some(eps_grid), Some(reference)) = (&config.epsilon_grid, &config.sprt_reference) {
        let reference = mitm_lab::harness::to_matrix("sprt_reference", reference)
            .map_err(|e| anyhow!("{e}"))?;
        let attack_start = config.exploration_len.unwrap_or(0);
        for &eps in eps_grid {
            let rec = mitm_lab::detection::sprt_run(
                &dump.feedback,
                &dump.inputs,
                model.gain(),
                &reference,
                model.sigma2(),
                attack_start,
                eps,
                dump.feedback.len() - 1,
            )?;
            verdicts.push(serde_json::json!({
                "detector": "sprt",
                "epsilon": eps,
                "tau": rec.tau,
                "theta_hat": rec.theta_hat,
                "censored": rec.censored,
                "statistic_final": rec.statistic_path.last().copied().unwrap_or(0.0),
            }));
        }
    }
    if verdicts.is_empty() {
        bail!("no detector configured: set gamma+tau and/or epsilon_grid+sprt_reference");
    }
    // ground truth carried by the dump, for scoring the verdicts
    let first_hijack = dump.theta.iter().position(|t| *t == 1);
    let final_estimate: Vec<f64> = dump
        .estimates
        .last()
        .map(|m| m.iter().copied().collect())
        .unwrap_or_default();
    verdicts.push(serde_json::json!({
        "truth": {
            "hijacked": first_hijack.is_some(),
            "first_hijacked_step": first_hijack,
            "final_estimate_row_major": final_estimate,
        }
    }));

    let text = serde_json::to_string_pretty(&serde_json::Value::Array(verdicts))?;
    std::fs::create_dir_all(&common.out)?;
    let path = common.out.join("detections.json");
    std::fs::write(&path, format!("{text}\n"))?;
    println!("{text}");
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_bounds(common: &CommonArgs, curve_path: &PathBuf) -> Result<()> {
    let config = resolve(common, None).map_err(ConfigError::wrap)?;
    check_invariants(&config).map_err(ConfigError::wrap)?;
    let text = std::fs::read_to_string(curve_path)
        .with_context(|| format!("reading curve {}", curve_path.display()))?;
    let curve: mitm_lab::metrics::DeceptionCostCurve = serde_json::from_str(&text)
        .with_context(|| format!("parsing curve {}", curve_path.display()))?;
    let eps_grid = config
        .epsilon_grid
        .clone()
        .ok_or_else(|| ConfigError::wrap(anyhow!("config error for key `epsilon_grid`: required by bounds")))?;

    let mut rows = Vec::new();
    for &eps in &eps_grid {
        let n0 = mitm_lab::metrics::compute_n0(&curve, eps)?;
        let mut row = serde_json::json!({ "epsilon": eps, "n0": n0 });
        if let mitm_lab::metrics::CriticalHorizon::Finite(n) = n0 {
            row["c_hat_at_n0"] = serde_json::json!(curve.c_at(n));
            if let Ok(b) = mitm_lab::metrics::deception_time_bounds(&curve, eps) {
                row["thm1_lower"] = serde_json::json!(b.lower);
                row["thm2_upper"] = serde_json::json!(b.upper);
            }
        }
        rows.push(row);
    }
    let text = serde_json::to_string_pretty(&serde_json::Value::Array(rows))?;
    std::fs::create_dir_all(&common.out)?;
    let path = common.out.join("bounds.json");
    std::fs::write(&path, format!("{text}\n"))?;
    println!("{text}");
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_experiment(common: &CommonArgs, name_or_path: Option<&str>) -> Result<()> {
    let config = resolve(common, name_or_path).map_err(ConfigError::wrap)?;
    check_invariants(&config).map_err(ConfigError::wrap)?;
    let failures = harness::validate_config(&config);
    if !failures.is_empty() {
        return Err(ConfigError::wrap(anyhow!(
            "config validation failed:\n  {}",
            failures.join("\n  ")
        )));
    }
    let result = harness::run_experiment(&config)?;
    let written = output::emit_results(&result, common.format.as_deref(), &common.out)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    for warning in &result.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "experiment {} finished: {} cells, seed {}, config {}",
        result.provenance.experiment,
        result.cells.len(),
        result.provenance.master_seed,
        &result.provenance.config_hash[..12],
    );
    Ok(())
}

fn cmd_validate(common: &CommonArgs) -> Result<()> {
    let config = resolve(common, None).map_err(ConfigError::wrap)?;
    let mut failures = harness::validate_config(&config);
    if let Err(e) = check_invariants(&config) {
        failures.push(e.to_string());
    }
    if failures.is_empty() {
        println!("config ok");
        Ok(())
    } else {
        for f in &failures {
            eprintln!("validate: {f}");
        }
        Err(ConfigError::wrap(anyhow!("{} check(s) failed", failures.len())))
    }
}

/// Marker wrapper distinguishing config errors (exit 1) from runtime
/// errors (exit 2).
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl ConfigError {
    fn wrap(e: anyhow::Error) -> anyhow::Error {
        anyhow::Error::new(ConfigError(e))
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(common) => cmd_simulate(common),
        Command::Attack(common) => cmd_attack(common),
        Command::Detect { common, traj } => cmd_detect(common, traj),
        Command::Bounds { common, curve } => cmd_bounds(common, curve),
        Command::Experiment {
            common,
            name_or_path,
        } => cmd_experiment(common, name_or_path.as_deref()),
        Command::Validate(common) => cmd_validate(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<ConfigError>()) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
