use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rainbow_hedge_cli::config::{parse_config, FastPathMode, TableFormat};
use rainbow_hedge_cli::run::{gates, run_job, Command, RunError, RunOptions};

/// Guaranteed hedge prices and strategies for rainbow options.
#[derive(Debug, Parser)]
#[command(name = "rainbow-hedge", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Price the configured variant at `model.z0`.
    Price(Common),
    /// Price over the `output.surface` grid.
    Surface(Common),
    /// Write the per-node hedge table.
    Strategy(Common),
    /// Run the discrete-to-continuum convergence harness.
    Converge(Common),
    /// Check the configuration without pricing.
    Validate(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Job file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the sub-modular closed forms.
    #[arg(long, value_enum)]
    fast_path: Option<FastPathMode>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    threads: Option<usize>,
    /// Table format; overrides `output.format`.
    #[arg(long, value_enum)]
    format: Option<TableFormat>,
}

fn report(e: &RunError) -> ExitCode {
    eprintln!("error: {}", e.to_string().replace('\n', "\nerror: "));
    if let Some(h) = e.hint() {
        eprintln!("hint: {h}");
    }
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Cmd::Price(c) => (Some(Command::Price), c),
        Cmd::Surface(c) => (Some(Command::Surface), c),
        Cmd::Strategy(c) => (Some(Command::Strategy), c),
        Cmd::Converge(c) => (Some(Command::Converge), c),
        Cmd::Validate(c) => (None, c),
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let text = match fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => return report(&RunError::Io(e)),
    };
    let job = match parse_config(&text) {
        Ok(j) => j,
        Err(e) => return report(&RunError::Config(e)),
    };
    for w in &job.warnings {
        eprintln!("warning: {w}");
    }
    let Some(cmd) = cmd else {
        let out = json!({ "valid": true, "warnings": job.warnings, "gates": gates(&job) });
        println!("{}", serde_json::to_string_pretty(&out).expect("plain values serialise"));
        return ExitCode::SUCCESS;
    };
    let opts = RunOptions { out: common.out, fast_path: common.fast_path, format: common.format };
    match run_job(&job, cmd, &opts) {
        Ok(a) => {
            println!("{}", a.summary.display());
            for t in &a.tables {
                println!("{}", t.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => report(&e),
    }
}
