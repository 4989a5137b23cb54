//! `qlink`: reproduces the link's drift, visibility and distance studies as CSV tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod format;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qlink_core::{default_paper_scenario, Scenario};
use serde::de::DeserializeOwned;
use serde::Serialize;

use commands::{CalibrateArgs, DriftArgs, HistArgs, MultiArgs, Outcome, SweepArgs, UsageError};
use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "qlink", version, about = "Two-way quantum link simulator sharing fiber with DWDM traffic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario file (TOML); the built-in baseline when omitted.
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Scenario override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed- or open-loop polarization drift run.
    DriftRun {
        #[command(flatten)]
        common: ScenarioArgs,
        #[command(flatten)]
        args: DriftArgs,
    },
    /// Histogram of per-window visibilities from a drift-run CSV.
    VisibilityHist {
        #[command(flatten)]
        args: HistArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Visibility and classical BER against link length.
    DistanceSweep {
        #[command(flatten)]
        common: ScenarioArgs,
        #[command(flatten)]
        args: SweepArgs,
    },
    /// Visibility against link length for several classical channel counts.
    MultichannelSweep {
        #[command(flatten)]
        common: ScenarioArgs,
        #[command(flatten)]
        args: MultiArgs,
    },
    /// Raman coefficients from quantum-off count measurements.
    Calibrate {
        #[command(flatten)]
        common: ScenarioArgs,
        #[command(flatten)]
        args: CalibrateArgs,
    },
    /// Repeats a run from its manifest.
    Rerun {
        manifest: PathBuf,
        /// Output directory; defaults to the manifest's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the baseline scenario as TOML.
    InitConfig {
        /// Destination; stdout when omitted.
        path: Option<PathBuf>,
    },
}

const DRIFT_RUN: &str = "drift-run";
const VISIBILITY_HIST: &str = "visibility-hist";
const DISTANCE_SWEEP: &str = "distance-sweep";
const MULTICHANNEL_SWEEP: &str = "multichannel-sweep";
const CALIBRATE: &str = "calibrate";

fn resolve_scenario(c: &ScenarioArgs) -> Result<Scenario> {
    let base = match &c.config {
        Some(p) => Scenario::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => default_paper_scenario(),
    };
    let mut s = base.with_override_strings(&c.set)?;
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn args_table<A: Serialize>(args: &A) -> Result<toml::Table> {
    match toml::Value::try_from(args)? {
        toml::Value::Table(t) => Ok(t),
        _ => bail!("arguments did not serialize to a table"),
    }
}

fn finish(outcome: Outcome, mut manifest: RunManifest, out: &Path, started: Instant) -> Result<()> {
    for line in &outcome.summary {
        println!("{line}");
    }
    manifest.outputs = outcome.outputs;
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    manifest.write(out)?;
    Ok(())
}

fn run_with_scenario<A: Serialize>(
    command: &str,
    scenario: Scenario,
    scenario_path: Option<String>,
    overrides: Vec<String>,
    args: &A,
    out: &Path,
    f: fn(&Scenario, &A, &Path) -> Result<Outcome>,
) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let outcome = f(&scenario, args, out)?;
    let manifest = RunManifest {
        command: command.to_owned(),
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        scenario_path,
        overrides,
        seed: Some(scenario.seed),
        outputs: vec![],
        wall_clock_s: 0.0,
        args: args_table(args)?,
        scenario: Some(scenario),
    };
    finish(outcome, manifest, out, started)
}

fn run_fresh<A: Serialize>(
    command: &str,
    common: &ScenarioArgs,
    args: &A,
    f: fn(&Scenario, &A, &Path) -> Result<Outcome>,
) -> Result<()> {
    let scenario = resolve_scenario(common)?;
    let path = common.config.as_ref().map(|p| p.display().to_string());
    run_with_scenario(command, scenario, path, common.set.clone(), args, &common.out, f)
}

fn run_hist(mut args: HistArgs, out: &Path) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    if let Ok(abs) = std::fs::canonicalize(&args.input) {
        args.input = abs;
    }
    let outcome = commands::visibility_hist(&args, out)?;
    let manifest = RunManifest {
        command: VISIBILITY_HIST.to_owned(),
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        scenario_path: None,
        overrides: vec![],
        seed: None,
        outputs: vec![],
        wall_clock_s: 0.0,
        args: args_table(&args)?,
        scenario: None,
    };
    finish(outcome, manifest, out, started)
}

fn recorded_args<A: DeserializeOwned>(m: &RunManifest) -> Result<A> {
    toml::Value::Table(m.args.clone())
        .try_into()
        .with_context(|| format!("manifest arguments for `{}`", m.command))
}

fn rerun(path: &Path, out: Option<PathBuf>) -> Result<()> {
    let m = RunManifest::load(path)?;
    let out = out.unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
    if m.command == VISIBILITY_HIST {
        return run_hist(recorded_args(&m)?, &out);
    }
    let scenario = m
        .scenario
        .clone()
        .with_context(|| format!("manifest for `{}` has no scenario", m.command))?
        .checked()?;
    let (sp, ov) = (m.scenario_path.clone(), m.overrides.clone());
    match m.command.as_str() {
        DRIFT_RUN => run_with_scenario(DRIFT_RUN, scenario, sp, ov, &recorded_args::<DriftArgs>(&m)?, &out, commands::drift_run),
        DISTANCE_SWEEP => run_with_scenario(
            DISTANCE_SWEEP,
            scenario,
            sp,
            ov,
            &recorded_args::<SweepArgs>(&m)?,
            &out,
            commands::distance_sweep,
        ),
        MULTICHANNEL_SWEEP => run_with_scenario(
            MULTICHANNEL_SWEEP,
            scenario,
            sp,
            ov,
            &recorded_args::<MultiArgs>(&m)?,
            &out,
            commands::multichannel_sweep,
        ),
        CALIBRATE => run_with_scenario(
            CALIBRATE,
            scenario,
            sp,
            ov,
            &recorded_args::<CalibrateArgs>(&m)?,
            &out,
            commands::calibrate_cmd,
        ),
        other => bail!("unknown command `{other}` in manifest"),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::DriftRun { common, args } => run_fresh(DRIFT_RUN, &common, &args, commands::drift_run),
        Command::VisibilityHist { args, out } => run_hist(args, &out),
        Command::DistanceSweep { common, args } => run_fresh(DISTANCE_SWEEP, &common, &args, commands::distance_sweep),
        Command::MultichannelSweep { common, args } => {
            run_fresh(MULTICHANNEL_SWEEP, &common, &args, commands::multichannel_sweep)
        }
        Command::Calibrate { common, args } => run_fresh(CALIBRATE, &common, &args, commands::calibrate_cmd),
        Command::Rerun { manifest, out } => rerun(&manifest, out),
        Command::InitConfig { path } => {
            let text = default_paper_scenario().to_toml_string()?;
            match path {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
