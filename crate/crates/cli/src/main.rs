//! `icicap`: capacity of ICI-free constrained systems from the command line.
//!
//! Exit codes: 0 ok, 2 usage, 3 solver failure, 4 verification failure.

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::output::{Format, Probs};

#[derive(Debug, Parser)]
#[command(
    name = "icicap",
    version,
    about = "Capacity of q-ary ICI-free constrained systems"
)]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: Format,

    /// Seed for randomized subcommands (none of the current ones draw).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Acceptance tolerance for `verify` (bits).
    #[arg(long, global = true)]
    tolerance: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct Shape {
    /// Alphabet size.
    #[arg(long)]
    q: usize,
    /// Number of low symbols.
    #[arg(long)]
    a: usize,
    /// Number of high symbols.
    #[arg(long)]
    b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RouteArg {
    Closed,
    Dual,
    Direct,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    /// Vary rho_H; rho_I is held at `--other`.
    High,
    /// Vary rho_I; rho_H is held at `--other`.
    Mid,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Composition-constrained capacity.
    Capacity {
        #[command(flatten)]
        shape: Shape,
        /// Symbol probabilities, comma separated; fractions like 1/3 allowed.
        #[arg(long, value_parser = output::parse_probs)]
        p: Probs,
        #[arg(long, value_enum, default_value = "closed")]
        route: RouteArg,
    },
    /// Unconstrained capacity by the cubic and by the adjacency matrix.
    Ordinary {
        #[command(flatten)]
        shape: Shape,
    },
    /// Capacity along a line of class masses, mass split evenly inside classes.
    Sweep {
        #[command(flatten)]
        shape: Shape,
        #[arg(long, value_enum, default_value = "high")]
        axis: Axis,
        #[arg(long, default_value_t = 0.05)]
        from: f64,
        #[arg(long, default_value_t = 0.9)]
        to: f64,
        /// Number of intervals; the grid has `steps + 1` points.
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Mass of the class not being varied among I and H.
        #[arg(long, default_value_t = 0.0)]
        other: f64,
    },
    /// Compare the analytic capacity with exact windowed counts.
    Verify {
        #[command(flatten)]
        shape: Shape,
        #[arg(long, value_parser = output::parse_probs)]
        p: Probs,
        #[arg(long, default_value_t = 24)]
        n_max: usize,
        #[arg(long, default_value_t = 0.06)]
        epsilon: f64,
        /// Spacing of the lengths counted before `n_max`.
        #[arg(long, default_value_t = 4)]
        step: usize,
    },
    /// Capacity-achieving Markov chain as JSON (maxentropic without `--p`).
    Chain {
        #[command(flatten)]
        shape: Shape,
        #[arg(long, value_parser = output::parse_probs)]
        p: Option<Probs>,
    },
}

pub enum Outcome {
    Done(String),
    VerifyFailed(String),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    log::debug!("seed {}", cli.seed);
    let fmt = cli.format;
    let result = match cli.command {
        Command::Capacity { shape, p, route } => commands::capacity(shape, p.0, route, fmt),
        Command::Ordinary { shape } => commands::ordinary(shape, fmt),
        Command::Sweep {
            shape,
            axis,
            from,
            to,
            steps,
            other,
        } => commands::sweep(shape, axis, from, to, steps, other, fmt),
        Command::Verify {
            shape,
            p,
            n_max,
            epsilon,
            step,
        } => commands::verify(
            shape,
            p.0,
            n_max,
            epsilon,
            step,
            cli.tolerance.unwrap_or(0.15),
            fmt,
        ),
        Command::Chain { shape, p } => commands::chain(shape, p.map(|p| p.0), fmt),
    };
    match result {
        Ok(Outcome::Done(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Ok(Outcome::VerifyFailed(text)) => {
            print!("{text}");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 3 })
        }
    }
}
