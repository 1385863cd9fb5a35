use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use equilab_cli::cache::{cache_gc, default_dir, Cache};
use equilab_cli::error::CliError;
use equilab_cli::{load_config, presets, run};

#[derive(Parser)]
#[command(name = "lab", version, about = "Numerical equidistribution laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or `preset:NAME`.
    Run {
        config: String,
        /// Output directory (default: `out/<experiment name>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the configured seed list by this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Compute every basis afresh and leave the cache untouched.
        #[arg(long)]
        no_cache: bool,
        /// Also write SVG plots.
        #[arg(long)]
        svg: bool,
    },
    /// Evict least-recently-used cache entries down to a byte budget.
    CacheGc {
        #[arg(long)]
        max_bytes: u64,
    },
    /// Print the config text of a named preset, or list the presets.
    Preset { name: Option<String> },
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run { config, out, seed, no_cache, svg } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.sampling.seeds = vec![s];
            }
            cfg.svg |= svg;
            let out = out.unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
            let cache = if no_cache { Cache::disabled() } else { Cache::open(default_dir())? };
            let bundle = run(cfg, cache, &out)?;
            for c in &bundle.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("report written to {}", out.display());
            Ok(bundle.passed())
        }
        Command::CacheGc { max_bytes } => {
            let r = cache_gc(&default_dir(), max_bytes)?;
            println!("evicted {} entries, freed {} bytes, {} bytes remain", r.evicted.len(), r.freed_bytes, r.remaining_bytes);
            Ok(true)
        }
        Command::Preset { name: None } => {
            for (name, _) in presets::PRESETS {
                println!("{name}");
            }
            Ok(true)
        }
        Command::Preset { name: Some(name) } => {
            let text = presets::preset(&name).ok_or_else(|| CliError::Usage(format!("unknown preset `{name}`")))?;
            print!("{text}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
