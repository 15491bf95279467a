use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flare_core::sim::report::{self, write_atomic};
use flare_core::sim::{
    run_simulation, summarize, sweep, RunSummary, Scenario, SchedulerKind, SchedulerName, SimConfig, SimOutput,
    SweepParam,
};
use flare_core::{FlareError, Result};

#[derive(Parser)]
#[command(name = "flare", version, about = "Simulate drift-aware model scheduling in a federated sensor network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario with one scheduler.
    Run {
        #[command(flatten)]
        common: Common,
        /// Scheduler name; defaults to flare, or the config file's scheduler.
        #[arg(long)]
        scheduler: Option<SchedulerName>,
    },
    /// Run several schedulers on identical data and report them side by side.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "flare,fixed,none")]
        schedulers: Vec<SchedulerName>,
    },
    /// Vary one scheduler coefficient and report trigger counts.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Preset scenario; ignored when --config is given.
    #[arg(long, default_value = "preliminary")]
    scenario: Scenario,
    /// TOML file with a full simulation configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "FLARE_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "flare-out")]
    out: PathBuf,
    /// Also write an SVG chart of normalized accuracy.
    #[arg(long)]
    svg: bool,
}

struct Base {
    config: SimConfig,
    scenario: Option<Scenario>,
}

impl Common {
    fn base(&self) -> Result<Base> {
        match &self.config {
            Some(path) => {
                let mut config = SimConfig::load(path)?;
                if let Some(seed) = self.seed {
                    config.seed = seed;
                }
                Ok(Base { config, scenario: None })
            }
            None => Ok(Base {
                config: self.scenario.config(self.seed.unwrap_or(0)),
                scenario: Some(self.scenario),
            }),
        }
    }
}

impl Base {
    fn with(&self, name: SchedulerName) -> SimConfig {
        let scheduler = match self.scenario {
            Some(sc) => sc.scheduler(name),
            None => Scenario::RealWorld.scheduler(name),
        };
        SimConfig {
            scheduler,
            ..self.config.clone()
        }
    }
}

fn execute(config: &SimConfig, dir: &Path, svg: bool) -> Result<(SimOutput, RunSummary)> {
    config.validate()?;
    let output = run_simulation(config)?;
    let summary = summarize(&output)?;
    report::write_run(dir, &output, &summary)?;
    if svg {
        let chart = report::accuracy_svg(&[(summary.scheduler.as_str(), &output)])?;
        write_atomic(&dir.join("accuracy.svg"), &chart)?;
    }
    Ok((output, summary))
}

fn run(command: Command) -> Result<String> {
    match command {
        Command::Run { common, scheduler } => {
            let base = common.base()?;
            let config = match scheduler {
                Some(name) => base.with(name),
                None if base.scenario.is_some() => base.with(SchedulerName::Flare),
                None => base.config.clone(),
            };
            let (_, summary) = execute(&config, &common.out, common.svg)?;
            Ok(report::summary_table(&[summary]))
        }
        Command::Compare { common, schedulers } => {
            let base = common.base()?;
            let configs: Vec<(SchedulerName, SimConfig)> = schedulers.iter().map(|&n| (n, base.with(n))).collect();
            for (_, c) in &configs {
                c.validate()?;
            }
            let mut outputs = Vec::with_capacity(configs.len());
            for (name, config) in &configs {
                let (output, summary) = execute(config, &common.out.join(name.name()), false)?;
                outputs.push((name.name(), output, summary));
            }
            let summaries: Vec<RunSummary> = outputs.iter().map(|(_, _, s)| s.clone()).collect();
            write_atomic(&common.out.join(report::SUMMARY_FILE), &report::summary_csv(&summaries))?;
            if common.svg {
                let runs: Vec<(&str, &SimOutput)> = outputs.iter().map(|(n, o, _)| (*n, o)).collect();
                write_atomic(&common.out.join("accuracy.svg"), &report::accuracy_svg(&runs)?)?;
            }
            Ok(report::summary_table(&summaries))
        }
        Command::Sweep { common, param, values } => {
            let base = common.base()?;
            let config = match (&base.scenario, common.config.is_some()) {
                (_, true) => base.config.clone(),
                _ => base.with(SchedulerName::Flare),
            };
            if !matches!(config.scheduler, SchedulerKind::Flare) {
                return Err(FlareError::Config("sweeps need the flare scheduler".into()));
            }
            let rows = sweep(&config, param, &values)?;
            std::fs::create_dir_all(&common.out).map_err(|e| FlareError::Io {
                path: common.out.clone(),
                source: e,
            })?;
            let csv = report::sweep_csv(param, &rows);
            write_atomic(&common.out.join("sweep.csv"), &csv)?;
            Ok(csv)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
