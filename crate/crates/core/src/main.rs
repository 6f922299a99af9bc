use std::path::PathBuf;
use std::process::ExitCode;

use catlab::cli::run;
use catlab::config::parse_config;
use clap::Parser;

/// Cattaneo / heat equation finite-element laboratory.
#[derive(Debug, Parser)]
#[command(name = "catlab", version)]
struct Args {
    /// forward | optimize | study (may also be set in the config file)
    command: Option<String>,
    /// `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Study mode: forward | ocp
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long = "n-cells")]
    n_cells: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    /// Time horizon
    #[arg(long = "T")]
    horizon: Option<String>,
    /// Relative stopping tolerance of the optimizer
    #[arg(long)]
    tol: Option<String>,
    #[arg(long = "max-iters")]
    max_iters: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    /// Overwrite an existing output directory
    #[arg(long)]
    force: bool,
    /// Comma-separated, strictly decreasing sweep values of tau
    #[arg(long)]
    taus: Option<String>,
    /// Comma-separated sweep values of lambda
    #[arg(long)]
    lambdas: Option<String>,
    /// Use y1 = 0 instead of the compatible initial velocity
    #[arg(long)]
    incompatible: bool,
    /// Dump every s-th snapshot of a forward run
    #[arg(long)]
    stride: Option<String>,
    #[arg(long = "dump-mesh")]
    dump_mesh: bool,
}

impl Args {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |key: &str, value: &Option<String>| {
            if let Some(v) = value {
                out.push((key.to_string(), v.clone()));
            }
        };
        push("command", &self.command);
        push("mode", &self.mode);
        push("tau", &self.tau);
        push("lambda", &self.lambda);
        push("n_cells", &self.n_cells);
        push("dt", &self.dt);
        push("T", &self.horizon);
        push("tol", &self.tol);
        push("max_iters", &self.max_iters);
        push("out", &self.out);
        push("workers", &self.workers);
        push("taus", &self.taus);
        push("lambdas", &self.lambdas);
        push("snapshot_stride", &self.stride);
        if self.force {
            out.push(("force".into(), "true".into()));
        }
        if self.incompatible {
            out.push(("compatible_initial_velocity".into(), "false".into()));
        }
        if self.dump_mesh {
            out.push(("dump_mesh".into(), "true".into()));
        }
        out
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let file = match &args.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => Some(text),
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => None,
    };
    let env_workers = std::env::var("CATLAB_WORKERS").ok();
    let cfg = match parse_config(file.as_deref(), &args.overrides(), env_workers.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            println!("wrote {} files to {}", report.files.len() + 1, cfg.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
