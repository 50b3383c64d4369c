//! `tarc-lab`: certificate checks, delay-boundary search and closed-loop
//! experiments for the time-delayed adaptive-robust control family.
//!
//! Exit codes: 0 success/feasible, 2 infeasible condition or diverged run,
//! 1 configuration or I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use tarc_core::controllers::Strategy;
use tarc_core::simulator::{compute_metrics, run};
use tarc_core::stability::{
    assemble_psi, assemble_theta, max_feasible_delay, CertificateKind, StabilityCertificate,
};
use tarc_core::Error as CoreError;

use tarc_lab::config::{self, load, parse_strategy, Experiment};
use tarc_lab::report;

#[derive(Parser)]
#[command(name = "tarc-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report files; defaults to the config's
    /// output.dir, then the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides plant.seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Lyapunov equation and test the delay/gain conditions.
    CheckGains(Common),
    /// Bisect for the largest feasible delay at the configured gains.
    MaxDelay(Common),
    /// Run one closed-loop simulation; writes trace.csv and metrics.csv.
    Simulate(Common),
    /// Run several strategies on the identical scenario; one metrics row each.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated strategy list, e.g. TDC,ASMC,TARC.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<String>,
    },
    /// Re-run the experiment over a list of values for one numeric config key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted config path, e.g. controller.alpha or sim.dt.
        #[arg(long)]
        key: String,
        /// Comma-separated numeric values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
}

fn out_dir(common: &Common, exp: &Experiment) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| exp.cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Prints a one-line summary of a certificate.
fn print_certificate(label: &str, cert: &StabilityCertificate<f64>) {
    let p_eig = tarc_core::linalg::sym_eigenvalues(&cert.p);
    println!(
        "{label}: lambda_min = {:.6e}, feasible = {}",
        cert.lambda_min, cert.feasible
    );
    let eigs: Vec<String> = p_eig.iter().map(|e| format!("{e:.6e}")).collect();
    println!("  P eigenvalues: [{}]", eigs.join(", "));
}

fn cmd_check_gains(common: &Common) -> Result<ExitCode> {
    let exp = load(&common.config, common.seed)?;
    let dir = out_dir(common, &exp);
    let n = exp.controller.gains.n;
    let h = exp.stability.h;

    let psi = assemble_psi(&exp.controller.gains, &exp.stability)?;
    print_certificate("Psi (full-state condition)", &psi);
    let mut rows = vec![report::certificate_row(&psi, n, h, &exp.hash)];
    let mut all_feasible = psi.feasible;

    // position-only strategies also need the filtered condition
    if matches!(exp.controller.strategy, Strategy::Ftdc | Strategy::Tarc) {
        let theta = assemble_theta(&exp.controller.gains, &exp.stability, &exp.controller.kernel_j1)?;
        print_certificate("Theta (position-only condition)", &theta);
        all_feasible = all_feasible && theta.feasible;
        rows.push(report::certificate_row(&theta, n, h, &exp.hash));
    }

    report::write_certificates_csv(&dir.join("certificates.csv"), &rows)?;
    println!("report: {}", dir.join("certificates.csv").display());
    Ok(if all_feasible {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_max_delay(common: &Common) -> Result<ExitCode> {
    let exp = load(&common.config, common.seed)?;
    let dir = out_dir(common, &exp);
    let (kind, kernel) = match exp.controller.strategy {
        Strategy::Ftdc | Strategy::Tarc => (CertificateKind::Ftdc, Some(&exp.controller.kernel_j1)),
        _ => (CertificateKind::Tdc, None),
    };
    let h_lo = exp.stability.h;
    match max_feasible_delay(&exp.controller.gains, &exp.stability, kind, kernel) {
        Ok(search) => {
            println!(
                "h_star = {:.9e}  (feasible at {:.9e}, infeasible at {:.9e}, {} evaluations)",
                search.h_star, search.h_feasible, search.h_infeasible, search.evals
            );
            report::write_delay_csv(
                &dir.join("max_delay.csv"),
                &format!("{kind:?}"),
                h_lo,
                &search,
                &exp.hash,
            )?;
            println!("report: {}", dir.join("max_delay.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ CoreError::NoFeasiblePoint { .. }) => {
            eprintln!("{e}");
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_simulate(common: &Common) -> Result<ExitCode> {
    let exp = load(&common.config, common.seed)?;
    let dir = out_dir(common, &exp);

    // warn-only certificate precheck for the position-only strategies
    if matches!(exp.controller.strategy, Strategy::Ftdc | Strategy::Tarc) {
        let theta = assemble_theta(&exp.controller.gains, &exp.stability, &exp.controller.kernel_j1)?;
        if !theta.feasible {
            eprintln!(
                "warning: position-only condition infeasible (lambda_min = {:.3e}); running anyway",
                theta.lambda_min
            );
        }
    }

    let trace = run(&exp.plant, &exp.controller, &exp.reference, &exp.sim)?;
    report::write_trace_csv(&dir.join("trace.csv"), &trace)?;
    let metrics = compute_metrics(&trace, true)?;
    let strategy = exp.controller.strategy.name().to_string();
    report::write_metrics_csv(&dir.join("metrics.csv"), &[(strategy, metrics.clone())], &exp.hash)?;

    println!(
        "rms_e1 = {:.6e}, max_e1 = {:.6e}, chattering = {:.3e}, c_hat_max = {:.4e}",
        metrics.rms_e1, metrics.max_e1, metrics.chattering_index, metrics.c_hat_max
    );
    if let Some(jump) = trace.warmup_tau_jump {
        println!("warmup torque jump: {jump:.3e}");
    }
    println!("trace:   {}", dir.join("trace.csv").display());
    println!("metrics: {}", dir.join("metrics.csv").display());

    if trace.diverged() {
        eprintln!("run diverged: {:?}", trace.outcome);
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(common: &Common, strategies: &[String]) -> Result<ExitCode> {
    if strategies.is_empty() {
        bail!("--strategies must list at least one strategy");
    }
    let parsed: Vec<Strategy> = strategies
        .iter()
        .map(|s| parse_strategy(s))
        .collect::<Result<_>>()?;
    let exp = load(&common.config, common.seed)?;
    let dir = out_dir(common, &exp);

    let mut rows = Vec::new();
    for &strategy in &parsed {
        let mut ctrl = exp.controller.clone();
        ctrl.strategy = strategy;
        ctrl.validate()
            .map_err(|e| anyhow!("strategy {}: {e}", strategy.name()))?;
        let trace = run(&exp.plant, &ctrl, &exp.reference, &exp.sim)?;
        let metrics = compute_metrics(&trace, true)?;
        println!(
            "{:<5} rms_e1 = {:.6e}, max_e1 = {:.6e}, c_hat_max = {:.4e}{}",
            strategy.name(),
            metrics.rms_e1,
            metrics.max_e1,
            metrics.c_hat_max,
            if metrics.diverged { "  [diverged]" } else { "" }
        );
        rows.push((strategy.name().to_string(), metrics));
    }
    report::write_metrics_csv(&dir.join("compare.csv"), &rows, &exp.hash)?;
    println!("report: {}", dir.join("compare.csv").display());
    Ok(ExitCode::SUCCESS)
}

/// Replaces the value at a dotted key path in the raw TOML document.
fn set_key(doc: &mut toml::Value, key: &str, value: f64) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.is_empty() {
        bail!("empty key");
    }
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        node = node
            .get_mut(part)
            .ok_or_else(|| anyhow!("unknown key: no table {part:?} in {key:?}"))?;
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| anyhow!("unknown key: {key:?} does not address a table entry"))?;
    let leaf = parts[parts.len() - 1];
    // integer-typed fields must stay integers for serde
    let new_value = match table.get(leaf) {
        Some(toml::Value::Integer(_)) => {
            if value.fract() != 0.0 {
                bail!("key {key:?} is integer-typed, got {value}");
            }
            toml::Value::Integer(value as i64)
        }
        Some(toml::Value::Float(_)) | None => toml::Value::Float(value),
        Some(other) => bail!("key {key:?} is not numeric (found {})", other.type_str()),
    };
    table.insert(leaf.to_string(), new_value);
    Ok(())
}

fn cmd_sweep(common: &Common, key: &str, values: &[f64]) -> Result<ExitCode> {
    if values.is_empty() {
        bail!("--values must list at least one value");
    }
    let text = std::fs::read_to_string(&common.config)
        .with_context(|| format!("reading config {}", common.config.display()))?;
    let base_doc: toml::Value =
        toml::Value::Table(text.parse::<toml::Table>().context("config parse error")?);

    // validate the key once up front so typos fail before any run
    {
        let mut probe = base_doc.clone();
        set_key(&mut probe, key, values[0])?;
        let cfg: config::ExperimentConfig =
            probe.try_into().map_err(|e| anyhow!("config with {key} set: {e}"))?;
        let mut cfg = cfg;
        if let Some(seed) = common.seed {
            cfg.plant.seed = seed;
        }
        cfg.build()?;
    }

    let seed = common.seed;
    let results: Vec<(usize, Result<(f64, tarc_core::simulator::Metrics<f64>, String)>)> = values
        .par_iter()
        .enumerate()
        .map(|(idx, &value)| {
            let run_one = || -> Result<(f64, tarc_core::simulator::Metrics<f64>, String)> {
                let mut doc = base_doc.clone();
                set_key(&mut doc, key, value)?;
                let mut cfg: config::ExperimentConfig = doc
                    .try_into()
                    .map_err(|e| anyhow!("config with {key} = {value}: {e}"))?;
                if let Some(seed) = seed {
                    cfg.plant.seed = seed;
                }
                let exp = cfg.build()?;
                let trace = run(&exp.plant, &exp.controller, &exp.reference, &exp.sim)?;
                let metrics = compute_metrics(&trace, true)?;
                Ok((value, metrics, exp.hash))
            };
            (idx, run_one())
        })
        .collect();

    let mut ordered: Vec<_> = results;
    ordered.sort_by_key(|(idx, _)| *idx);

    // need one experiment for the out dir
    let exp = load(&common.config, common.seed)?;
    let dir = out_dir(common, &exp);
    let mut out = format!("key,value,{}\n", report::METRICS_HEADER);
    for (_, res) in ordered {
        let (value, metrics, hash) = res?;
        out.push_str(&format!(
            "{},{},{}\n",
            key,
            report::fmt17(value),
            report::metrics_row(exp.controller.strategy.name(), &metrics, &hash)
        ));
        println!("{key} = {value}: rms_e1 = {:.6e}", metrics.rms_e1);
    }
    let path = dir.join("sweep.csv");
    std::fs::create_dir_all(&dir).ok();
    std::fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
    println!("report: {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn try_main() -> Result<ExitCode> {
    // TARC_LAB_THREADS caps sweep parallelism
    if let Ok(threads) = std::env::var("TARC_LAB_THREADS") {
        let n: usize = threads
            .parse()
            .map_err(|_| anyhow!("TARC_LAB_THREADS must be a positive integer"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .ok();
    }

    let cli = Cli::parse();
    match &cli.command {
        Command::CheckGains(c) => cmd_check_gains(c),
        Command::MaxDelay(c) => cmd_max_delay(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Compare { common, strategies } => cmd_compare(common, strategies),
        Command::Sweep {
            common,
            key,
            values,
        } => cmd_sweep(common, key, values),
    }
}

fn main() -> ExitCode {
    match try_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
