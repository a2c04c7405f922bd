use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hydrosurrogate::harness::{
    self, report::text_report, ExperimentConfig, Task, TaskOutcome,
};
use hydrosurrogate::Result;

#[derive(Parser)]
#[command(name = "hydrosurrogate", version, about = "Surrogate models for a downstream river stage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the scenario and write the gauge records as CSV
    Generate(Common),
    /// Train every configured model family and save the models
    Train(Common),
    /// Score saved models on the test year
    Evaluate(Common),
    /// Draw figures and the text summary from the prediction tables
    Report(Common),
    /// generate, train, evaluate and report in one go
    All(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

impl TaskArg {
    fn tasks(self) -> Vec<Task> {
        match self {
            TaskArg::One => vec![Task::One],
            TaskArg::Two => vec![Task::Two],
            TaskArg::Both => Task::BOTH.to_vec(),
        }
    }
}

#[derive(Args)]
struct Common {
    /// Config file (key = value, dotted sections); defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overrides the config
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    task: TaskArg,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        Ok(cfg)
    }
}

fn summary(outcomes: &[TaskOutcome]) {
    print!("{}", text_report(outcomes));
}

fn run(cli: Cli) -> Result<()> {
    let (Command::Generate(c)
    | Command::Train(c)
    | Command::Evaluate(c)
    | Command::Report(c)
    | Command::All(c)) = &cli.command;
    let cfg = c.config().map_err(|e| hydrosurrogate::Error::Stage {
        stage: "config",
        source: Box::new(e),
    })?;
    let out = cfg.output_dir.clone();
    let tasks = c.task.tasks();
    match cli.command {
        Command::Generate(_) => {
            let d = harness::generate_command(&cfg, &out)?;
            println!(
                "wrote {} discharge, {} stage, {} task-1 and {} task-2 target points to {}",
                d.q.len(),
                d.h.len(),
                d.target_task1.len(),
                d.target_task2.len(),
                out.join("data").display()
            );
        }
        Command::Train(_) => {
            harness::train_command(&cfg, &out, &tasks)?;
            println!("models written to {}", out.join("models").display());
        }
        Command::Evaluate(_) => summary(&harness::evaluate_command(&cfg, &out, &tasks)?),
        Command::Report(_) => summary(&harness::report_command(&out, &tasks)?),
        Command::All(_) => {
            harness::run_tasks(&cfg, &tasks)?;
            let text = std::fs::read_to_string(out.join(harness::report::REPORT_FILE)).unwrap_or_default();
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
