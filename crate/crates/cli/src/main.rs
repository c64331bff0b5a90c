use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use temperate::scenario::{run_scenario, shipped_scenarios, ScenarioConfig, ScenarioOutcome};

#[derive(Parser)]
#[command(
    name = "temperate",
    version,
    about = "Temperate dbar solves on pseudoconvex domains"
)]
struct Cli {
    /// List the shipped scenarios and exit.
    #[arg(long)]
    list_scenarios: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenarios (file paths or shipped scenario names).
    Run {
        #[arg(required = true)]
        configs: Vec<String>,
        /// Dotted-path override, e.g. `grid.resolution=128`. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Write artifacts to DIR/<scenario name> instead of the configured directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Number of scenarios to run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print the scenario JSON schema.
    Schema,
}

fn report(o: &ScenarioOutcome) {
    match &o.report {
        Some(r) => {
            println!("== {} ({})", o.name, o.message);
            print!("{}", r.summary());
            if let Some(dir) = &o.output_dir {
                println!("artifacts in {}", dir.display());
            }
        }
        None => eprintln!("== {}: error: {}", o.name, o.message),
    }
}

fn run_all(configs: &[String], overrides: &[String], out: Option<&PathBuf>, jobs: usize) -> i32 {
    let next = AtomicUsize::new(0);
    let worst = Mutex::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, configs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(source) = configs.get(i) else { break };
                let outcome = run_scenario(source, overrides, out.map(|p| p.as_path()));
                report(&outcome);
                let mut w = worst.lock().unwrap();
                *w = (*w).max(outcome.exit_code);
            });
        }
    });
    worst.into_inner().unwrap()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.list_scenarios {
        for (name, text) in shipped_scenarios() {
            let description = ScenarioConfig::from_json(text, &[])
                .map(|c| c.description)
                .unwrap_or_default();
            println!("{name:<28} {description}");
        }
        return ExitCode::SUCCESS;
    }
    match cli.command {
        Some(Command::Run {
            configs,
            overrides,
            out,
            jobs,
        }) => ExitCode::from(run_all(&configs, &overrides, out.as_ref(), jobs) as u8),
        Some(Command::Schema) => {
            print!("{}", temperate::scenario::SCENARIO_SCHEMA);
            ExitCode::SUCCESS
        }
        None => {
            eprintln!(
                "nothing to do; try `temperate run <config>` or `temperate --list-scenarios`"
            );
            ExitCode::from(2)
        }
    }
}
