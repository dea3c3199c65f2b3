//! `ringmaster`: run simulations, tuning grids and bound reports from a TOML
//! config.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ringmaster_core::experiment::{ExperimentConfig, GridTable};
use ringmaster_core::trace::to_csv_string;
use serde::Serialize;

const DEFAULT_OUT_DIR: &str = "ringmaster-out";

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] ringmaster_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Failed(String),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "ringmaster", version, about = "Asynchronous LMO optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation; writes trace.csv and summary.json.
    Run(CommonArgs),
    /// Run every cell of the schedule grid; writes one trace and summary per
    /// cell plus grid.json.
    Grid(CommonArgs),
    /// Evaluate the time-bound calculators; writes bounds.json.
    Bounds(CommonArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory (default: config `output`, then ./ringmaster-out).
    #[arg(long, value_name = "DIR", env = "RINGMASTER_OUT_DIR")]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let text = fs::read_to_string(&self.config).map_err(|source| CliError::Io { path: self.config.clone(), source })?;
        let mut cfg = ExperimentConfig::from_toml_str(&text)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let out = self.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| DEFAULT_OUT_DIR.into());
        fs::create_dir_all(&out).map_err(|source| CliError::Io { path: out.clone(), source })?;
        Ok((cfg, out))
    }
}

/// Writes to a sibling temp file, then renames over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| CliError::Io { path: path.to_path_buf(), source };
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let mut file = fs::File::create(&tmp).map_err(io_err)?;
    file.write_all(bytes).and_then(|()| file.sync_all()).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn cmd_run(args: &CommonArgs) -> Result<()> {
    let (cfg, out) = args.load()?;
    let run = cfg.run_single()?;
    write_atomic(&out.join("trace.csv"), to_csv_string(&run.trace).as_bytes())?;
    write_json(&out.join("summary.json"), &run.summary)?;
    let s = &run.summary;
    println!(
        "final_loss={:.6e} min_grad_dual_norm={:.6e} accepted={} rejected={} sim_time_s={:.3}",
        s.final_loss, s.min_grad_dual_norm, s.accepted, s.rejected, s.sim_time_s
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_grid(args: &CommonArgs) -> Result<()> {
    let (cfg, out) = args.load()?;
    let runs = cfg.run_grid()?;
    for (cell, run) in &runs {
        if let Ok(run) = run {
            let slug = cell.slug();
            write_atomic(&out.join(format!("trace_{slug}.csv")), to_csv_string(&run.trace).as_bytes())?;
            write_json(&out.join(format!("summary_{slug}.json")), &run.summary)?;
        }
    }
    let table = GridTable::from_runs(&runs);
    write_json(&out.join("grid.json"), &table)?;
    println!("{:<28} {:>24} {:>24} {:>9} {:>9}", "cell", "final_loss", "min_grad_dual_norm", "accepted", "rejected");
    for row in &table.rows {
        println!(
            "{:<28} {:>24.16e} {:>24.16e} {:>9} {:>9}{}",
            row.cell.to_string(),
            row.final_loss,
            row.min_grad_dual_norm,
            row.accepted,
            row.rejected,
            if row.best { "  <- best" } else { "" }
        );
    }
    println!("wrote {}", out.display());
    if table.failures.is_empty() {
        return Ok(());
    }
    let list: Vec<String> = table.failures.iter().map(|f| format!("  {}: {}", f.cell, f.error)).collect();
    Err(CliError::Failed(format!("{} grid cell(s) failed:\n{}", table.failures.len(), list.join("\n"))))
}

fn cmd_bounds(args: &CommonArgs) -> Result<()> {
    let (cfg, out) = args.load()?;
    let rep = cfg.bounds_report()?;
    write_json(&out.join("bounds.json"), &rep)?;
    println!("K={} R={} n={}", rep.iterations, rep.threshold, rep.taus.len());
    println!("t(R)                    {:.6}", rep.t_fixed);
    println!("ceil(K/R) t(R)          {:.6}", rep.total_time_fixed);
    println!("sqrt-threshold bound    {:.6}", rep.sqrt_time_bound);
    println!("universal t(R; 0)       {:.6}", rep.universal.t_universal);
    println!("universal T recursion   {:.6}", rep.universal.recursion_fixed);
    println!("universal S recursion   {:.6}", rep.universal.recursion_sqrt);
    if let Some(w) = &rep.window {
        let verdict = if w.passed { "PASS" } else { "FAIL" };
        println!("window check            {verdict} max ratio {:.6} over {} windows", w.max_ratio, w.windows);
        if let (false, Some(worst)) = (w.passed, w.worst) {
            println!(
                "  worst window: updates {}..{} from {:.6}s to {:.6}s",
                worst.first_update,
                worst.first_update + rep.threshold,
                worst.start_s,
                worst.end_s
            );
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Bounds(a) => cmd_bounds(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
