//! Deterministic scenario runner.
//!
//! Reads a JSON scenario, runs the simulation, and writes metrics CSV,
//! snapshot CSVs, a bound report, optional SVG plots, and a run manifest
//! (written last, as the completion marker). Exit codes: 0 success, 1
//! configuration error, 2 runtime error.

mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;

use d2oc::config::{ControllerMode, ScenarioConfig};
use d2oc::metrics::ControllerKind;
use d2oc::swarm::{run_simulation, SimOutput};

#[derive(Parser, Debug)]
#[command(name = "d2oc-sim", about = "Multi-agent density tracking simulator")]
struct Cli {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the controller mode.
    #[arg(long, value_parser = parse_mode)]
    controller: Option<ControllerMode>,
    /// Override the number of steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Emit SVG plots alongside the CSVs.
    #[arg(long)]
    emit_plots: bool,
    /// Fail (exit 2) unless every feedforward agent satisfies its ultimate
    /// bound.
    #[arg(long)]
    require_bound: bool,
    /// Re-plan every step and apply only the first input.
    #[arg(long)]
    receding: bool,
}

fn parse_mode(s: &str) -> Result<ControllerMode, String> {
    match s {
        "nominal" => Ok(ControllerMode::Nominal),
        "ff" => Ok(ControllerMode::Ff),
        "both" => Ok(ControllerMode::Both),
        other => Err(format!("unknown controller mode '{other}' (expected nominal|ff|both)")),
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    config_path: &'a Path,
    resolved_seed: u64,
    output_dir: &'a Path,
    files: &'a [String],
    duration_seconds: f64,
}

struct Emitter {
    dir: PathBuf,
    files: Vec<String>,
}

impl Emitter {
    fn write(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(RunError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(RunError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(2)
        }
    }
}

enum RunError {
    Config(String),
    Runtime(String),
}

fn run(cli: &Cli) -> Result<ExitCode, RunError> {
    let raw = std::fs::read_to_string(&cli.config)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut config =
        ScenarioConfig::from_json_str(&raw).map_err(|e| RunError::Config(e.to_string()))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(mode) = cli.controller {
        config.controller.mode = mode;
    }
    if let Some(steps) = cli.steps {
        config.steps = steps;
    }
    if cli.receding {
        config.horizon.receding = true;
    }
    config
        .validate()
        .map_err(|e| RunError::Config(e.to_string()))?;

    let started = Instant::now();
    let output = run_simulation(&config).map_err(|e| RunError::Runtime(e.to_string()))?;

    std::fs::create_dir_all(&cli.out)
        .map_err(|e| RunError::Runtime(format!("cannot create {}: {e}", cli.out.display())))?;
    let mut emitter = Emitter {
        dir: cli.out.clone(),
        files: Vec::new(),
    };
    write_artifacts(&mut emitter, &config, &output, cli.emit_plots)
        .map_err(|e| RunError::Runtime(format!("cannot write artifacts: {e}")))?;

    if let Some(step) = output.completed_early {
        println!("coverage completed at step {step}; partial log written");
    }

    let bound_ok = bound_satisfied(&output);
    if cli.require_bound && !bound_ok {
        // Manifest still records what was written before the failure.
        finish_manifest(&mut emitter, cli, &config, started)
            .map_err(|e| RunError::Runtime(e.to_string()))?;
        return Err(RunError::Runtime(
            "ultimate bound violated or undefined for a feedforward agent".into(),
        ));
    }

    finish_manifest(&mut emitter, cli, &config, started)
        .map_err(|e| RunError::Runtime(e.to_string()))?;
    println!(
        "wrote {} files to {} in {:.2}s",
        emitter.files.len(),
        cli.out.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(ExitCode::SUCCESS)
}

fn bound_satisfied(output: &SimOutput) -> bool {
    let ff_reports: Vec<_> = output
        .bound_reports
        .iter()
        .filter(|r| r.controller == ControllerKind::Feedforward.label())
        .collect();
    !ff_reports.is_empty() && ff_reports.iter().all(|r| r.pass && r.bound.is_some())
}

fn write_artifacts(
    emitter: &mut Emitter,
    config: &ScenarioConfig,
    output: &SimOutput,
    emit_plots: bool,
) -> std::io::Result<()> {
    emitter.write("metrics.csv", &output.metrics.to_csv_string())?;
    let report_json = serde_json::to_string_pretty(&output.bound_reports)
        .expect("bound reports always serialize");
    emitter.write("bound_report.json", &format!("{report_json}\n"))?;

    for snap in &output.snapshots {
        for (kind, _) in &snap.beta {
            if let Some(csv) = snap.samples_csv(*kind) {
                emitter.write(
                    &format!("snapshot_samples_{}_{:06}.csv", kind.label(), snap.step),
                    &csv,
                )?;
            }
        }
        emitter.write(
            &format!("snapshot_agents_{:06}.csv", snap.step),
            &snap.agents_csv(),
        )?;
    }

    if emit_plots {
        let n_agents = config.agents.count;
        emitter.write(
            "ratio_vs_time.svg",
            &plot::ratio_plot(&output.metrics, n_agents),
        )?;
        emitter.write(
            "wasserstein_vs_time.svg",
            &plot::wasserstein_plot(&output.metrics, &output.bound_reports, n_agents),
        )?;
        if !output.snapshots.is_empty() {
            emitter.write(
                "trajectories.svg",
                &plot::trajectory_plot(&output.snapshots, config.plume.domain),
            )?;
        }
    }
    Ok(())
}

fn finish_manifest(
    emitter: &mut Emitter,
    cli: &Cli,
    config: &ScenarioConfig,
    started: Instant,
) -> std::io::Result<()> {
    let manifest = RunManifest {
        config_path: &cli.config,
        resolved_seed: config.seed,
        output_dir: &cli.out,
        files: &emitter.files,
        duration_seconds: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest always serializes");
    std::fs::write(emitter.dir.join("run_manifest.json"), format!("{json}\n"))
}
