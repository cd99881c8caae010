use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

mod commands;
mod output;

use output::{CliError, Manifest};

#[derive(Parser)]
#[command(name = "nahmlab", version, about = "Local Nahm/ADHM transform experiments on the 4-ball")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bergmann dimensions, ADHM matrices and residuals up to the configured degree.
    FlatAdhm(Args),
    /// Oscillator spectrum with eigenstate and concentration diagnostics.
    Spectrum(Args),
    /// Fiber scan of the inverse transform plus a correlator table.
    Reconstruct(Args),
    /// Numerical Fredholm index of affine symbols.
    Index(Args),
    /// Concentrating BPST family sweep.
    Family(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::FlatAdhm(_) => "flat-adhm",
            Command::Spectrum(_) => "spectrum",
            Command::Reconstruct(_) => "reconstruct",
            Command::Index(_) => "index",
            Command::Family(_) => "family",
        }
    }

    fn args(&self) -> &Args {
        match self {
            Command::FlatAdhm(a) | Command::Spectrum(a) | Command::Reconstruct(a) | Command::Index(a) | Command::Family(a) => a,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let args = cli.command.args();
    let name = cli.command.name();

    let config = match output::load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            // still leave a manifest behind when the output directory is known
            let out = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let m = Manifest::new(name, None, start.elapsed().as_secs_f64(), e.code, Some(e.message.clone()), Vec::new());
            if std::fs::create_dir_all(&out).is_ok() {
                let _ = m.write(&out);
            }
            return e.report();
        }
    };
    let out = args.out.clone().or_else(|| config.out.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = std::fs::create_dir_all(&out) {
        return CliError::io(&out, e).report();
    }

    let result = match &cli.command {
        Command::FlatAdhm(_) => commands::flat_adhm(&config, &out),
        Command::Spectrum(_) => commands::spectrum(&config, &out),
        Command::Reconstruct(_) => commands::reconstruct(&config, &out),
        Command::Index(_) => commands::index(&config, &out),
        Command::Family(_) => commands::family(&config, &out),
    };
    let (code, reason, files) = match result {
        Ok(o) => (o.code, o.reason, o.files),
        Err(e) => (e.code, Some(e.message.clone()), Vec::new()),
    };
    let manifest = Manifest::new(name, Some(&config), start.elapsed().as_secs_f64(), code, reason.clone(), files);
    if let Err(e) = manifest.write(&out) {
        return e.report();
    }
    if let Some(r) = reason {
        eprintln!("{}", serde_json::json!({ "exit_code": code, "reason": r }));
    }
    ExitCode::from(code)
}
