use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stab::config::{Format, GridConfig, RunConfig};
use stab::run::{self, Hooks, Overrides, EXIT_CONFIG, EXIT_IO};
use stab::{builtin_example, ConfigError};
use stab_core::ControlPath;

#[derive(Parser)]
#[command(
    name = "stab",
    version,
    about = "Synthesize and verify level-set stabilizing controls"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Clone)]
struct Flags {
    /// Override the control gain λ (> 0).
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, global = true, value_enum)]
    control_path: Option<PathArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    t_end: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    Hodge,
    Gram,
}

#[derive(Args, Clone)]
struct Source {
    /// Run configuration (JSON).
    config: Option<PathBuf>,
    /// Use a built-in example instead of a file.
    #[arg(long, conflicts_with = "config")]
    example: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the control on a point grid as CSV.
    Synth {
        #[command(flatten)]
        source: Source,
        /// Grid as `lo,hi,steps` applied to every coordinate.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
    },
    /// Integrate the initial states and write trajectory CSV.
    Simulate {
        #[command(flatten)]
        source: Source,
    },
    /// Run the requested checks and write the JSON report.
    Verify {
        #[command(flatten)]
        source: Source,
    },
    /// Print a built-in configuration, or run it with `--run`.
    Example {
        name: String,
        #[arg(long)]
        run: bool,
    },
    /// Run a configuration: trajectories, checks, tables and report.
    Run { config: PathBuf },
}

enum Failure {
    Config(ConfigError),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

fn overrides(flags: &Flags) -> Overrides {
    Overrides {
        lambda: flags.lambda,
        control_path: flags.control_path.map(|p| match p {
            PathArg::Hodge => ControlPath::Hodge,
            PathArg::Gram => ControlPath::Gram,
        }),
        seed: flags.seed,
        t_end: flags.t_end,
        out: flags.out.clone(),
    }
}

fn load(source: &Source) -> Result<RunConfig, Failure> {
    match (&source.config, &source.example) {
        (Some(path), None) => Ok(RunConfig::load(path)?),
        (None, Some(name)) => builtin_example(name).map_err(|e| ConfigError::new("", e.to_string()).into()),
        _ => Err(ConfigError::new("", "give a config path or --example NAME").into()),
    }
}

fn parse_grid(spec: &str, n: usize) -> Result<GridConfig, Failure> {
    let bad = || {
        Failure::Config(ConfigError::new(
            "",
            format!("--grid expects lo,hi,steps; got `{spec}`"),
        ))
    };
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let steps: usize = parts[2].parse().map_err(|_| bad())?;
    Ok(GridConfig {
        lo: vec![lo; n],
        hi: vec![hi; n],
        steps: vec![steps; n],
    })
}

fn execute_and_report(cfg: &RunConfig, write: bool) -> Result<i32, Failure> {
    let outcome = run::execute(cfg, &Hooks::default())?;
    if write {
        let dir = PathBuf::from(&cfg.output.dir);
        let written = outcome
            .write_artifacts(&dir, &cfg.output.formats)
            .map_err(|e| Failure::Io(format!("writing {}: {e}", dir.display())))?;
        for p in written {
            eprintln!("wrote {}", p.display());
        }
    }
    for line in run::summary_lines(&outcome) {
        eprintln!("{line}");
    }
    if !outcome.passed() {
        println!("{}", outcome.failures_json());
    }
    Ok(outcome.exit_code())
}

fn main_inner(cli: Cli) -> Result<i32, Failure> {
    let ov = overrides(&cli.flags);
    match cli.command {
        Command::Example { name, run: false } => {
            let mut cfg = builtin_example(&name).map_err(|e| ConfigError::new("", e.to_string()))?;
            ov.apply(&mut cfg);
            print!("{}", cfg.to_json_pretty());
            Ok(0)
        }
        Command::Example { name, run: true } => {
            let mut cfg = builtin_example(&name).map_err(|e| ConfigError::new("", e.to_string()))?;
            ov.apply(&mut cfg);
            execute_and_report(&cfg, true)
        }
        Command::Run { config } => {
            let mut cfg = RunConfig::load(&config)?;
            ov.apply(&mut cfg);
            execute_and_report(&cfg, true)
        }
        Command::Simulate { source } => {
            let mut cfg = load(&source)?;
            ov.apply(&mut cfg);
            cfg.checks.clear();
            cfg.synth_grid = None;
            cfg.output.formats = vec![Format::Csv];
            if cfg.initial_states.is_empty() {
                return Err(ConfigError::new("/initial_states", "simulate needs at least one initial state").into());
            }
            execute_and_report(&cfg, true)
        }
        Command::Verify { source } => {
            let mut cfg = load(&source)?;
            ov.apply(&mut cfg);
            cfg.synth_grid = None;
            cfg.output.formats = vec![Format::Json];
            if cfg.checks.is_empty() {
                return Err(ConfigError::new("/checks", "verify needs at least one check").into());
            }
            execute_and_report(&cfg, true)
        }
        Command::Synth { source, grid } => {
            let mut cfg = load(&source)?;
            ov.apply(&mut cfg);
            cfg.checks.clear();
            cfg.initial_states.clear();
            if let Some(g) = grid {
                cfg.synth_grid = Some(parse_grid(&g, cfg.dim())?);
            }
            if cfg.synth_grid.is_none() {
                return Err(ConfigError::new("/synth_grid", "synth needs a grid (config synth_grid or --grid)").into());
            }
            let outcome = run::execute(&cfg, &Hooks::default())?;
            let rows = outcome.synth_table.as_deref().unwrap_or_default();
            let stdout = io::stdout();
            stab::emit::write_synth_csv(stdout.lock(), outcome.n, rows).map_err(|e| Failure::Io(e.to_string()))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match main_inner(cli) {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            let _ = writeln!(
                io::stdout(),
                "{}",
                serde_json::json!({"status": "config_error", "pointer": e.pointer, "message": e.message})
            );
            EXIT_CONFIG
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_IO
        }
    };
    ExitCode::from(code as u8)
}
