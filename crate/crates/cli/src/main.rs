#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lassoprune_cli::experiments::{flow_diagnostics, implicit_reg, pipeline_compare, quadratic_nn, rip_report, verify};
use lassoprune_cli::Overrides;

#[derive(Parser)]
#[command(
    name = "lassoprune",
    version,
    about = "Group-Lasso pruning experiments for overparameterized matrix sensing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat TOML config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Render SVG charts next to the CSV files.
    #[arg(long)]
    plots: bool,
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Override a config key, e.g. `--set d=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl From<CommonArgs> for Overrides {
    fn from(a: CommonArgs) -> Self {
        Overrides {
            file: a.config,
            set: a.set,
            seed: a.seed,
            out: a.out,
            plots: a.plots,
            threads: a.threads,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Small-init gradient flow vs the regularized pipeline: active-column census.
    ImplicitReg(CommonArgs),
    /// Vanilla GD vs prune-and-fine-tune, plus the noisy sample-size sweep.
    PipelineCompare(CommonArgs),
    /// Rank-one gradient flow: signal/noise split and limiting column norms.
    FlowDiagnostics(CommonArgs),
    /// Quadratic-activation network through rank-one sensing.
    QuadraticNn(CommonArgs),
    /// Monte-Carlo RIP estimates for Gaussian sensing sets.
    RipReport(CommonArgs),
    /// Run the invariant suites; exits nonzero on any failure.
    Verify(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ImplicitReg(a) => implicit_reg::command(&a.into()),
        Command::PipelineCompare(a) => pipeline_compare::command(&a.into()),
        Command::FlowDiagnostics(a) => flow_diagnostics::command(&a.into()),
        Command::QuadraticNn(a) => quadratic_nn::command(&a.into()),
        Command::RipReport(a) => rip_report::command(&a.into()),
        Command::Verify(a) => verify::command(&a.into()),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
