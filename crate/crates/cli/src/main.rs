mod commands;
mod config;
mod error;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::Outputs;
use config::RunConfig;
use error::CliError;

const OUT_DIR_ENV: &str = "PRIVPOLAR_OUT_DIR";

#[derive(Parser)]
#[command(name = "privpolar", version, about = "Polar lossy source coding with an equivocation constraint")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; falls back to `out_dir` in the config, then $PRIVPOLAR_OUT_DIR, then `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sweep the (R, D, Delta) frontier.
    Region { config: PathBuf },
    /// Construct index sets and write spec.polar and spectrum.csv.
    Construct { config: PathBuf },
    /// Run encoder/decoder trials.
    Simulate {
        config: PathBuf,
        /// Spec file from `construct`; built from the config when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Exact small-n analysis with inequality checks.
    Oracle {
        config: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Choose a frozen vector or time-shared pair meeting the target.
    Timeshare {
        config: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Region { .. } => "region",
            Cmd::Construct { .. } => "construct",
            Cmd::Simulate { .. } => "simulate",
            Cmd::Oracle { .. } => "oracle",
            Cmd::Timeshare { .. } => "timeshare",
        }
    }

    fn config(&self) -> &Path {
        match self {
            Cmd::Region { config }
            | Cmd::Construct { config }
            | Cmd::Simulate { config, .. }
            | Cmd::Oracle { config, .. }
            | Cmd::Timeshare { config, .. } => config,
        }
    }

    fn spec(&self) -> Option<&Path> {
        match self {
            Cmd::Simulate { spec, .. } | Cmd::Oracle { spec, .. } | Cmd::Timeshare { spec, .. } => spec.as_deref(),
            _ => None,
        }
    }
}

/// Write through a temporary file and rename, so readers never see a
/// partial file.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let wrap = |source| CliError::Write { path: path.clone(), source };
    let mut f = fs::File::create(&tmp).map_err(wrap)?;
    f.write_all(contents.as_bytes()).map_err(wrap)?;
    f.sync_all().map_err(wrap)?;
    fs::rename(&tmp, &path).map_err(wrap)?;
    Ok(path)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let path = cli.cmd.config();
    let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    let Outputs { files, summary } = match &cli.cmd {
        Cmd::Region { .. } => commands::region(&cfg)?,
        Cmd::Construct { .. } => commands::construct(&cfg)?,
        Cmd::Simulate { .. } => commands::simulate(&cfg, cli.cmd.spec())?,
        Cmd::Oracle { .. } => commands::oracle(&cfg, cli.cmd.spec())?,
        Cmd::Timeshare { .. } => commands::timeshare(&cfg, cli.cmd.spec())?,
    };

    fs::create_dir_all(&out_dir).map_err(|source| CliError::Write { path: out_dir.clone(), source })?;
    let mut written = Vec::new();
    for (name, contents) in &files {
        written.push(write_atomic(&out_dir, name, contents)?);
    }
    let meta = json!({
        "command": cli.cmd.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": path,
        "spec": cli.cmd.spec(),
        "seed": cfg.seed,
        "threads": rayon::current_num_threads(),
        "outputs": files.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        "started_unix_ms": started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
        "elapsed_ms": clock.elapsed().as_millis() as u64,
    });
    let mut meta_text = serde_json::to_string_pretty(&meta).expect("json values serialize");
    meta_text.push('\n');
    write_atomic(&out_dir, &format!("{}.meta.json", cli.cmd.name()), &meta_text)?;

    print!("{summary}");
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
