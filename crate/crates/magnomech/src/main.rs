use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use magnomech::config::ParamFile;
use magnomech::error::{CliError, ConfigError};
use magnomech::output::{write_csv, write_json};
use magnomech::presets::preset;
use magnomech::sweep::{run_sweep, Format, Stage, SweepConfig};

#[derive(Parser)]
#[command(
    name = "magnomech",
    version,
    about = "Two-magnet magnomechanical entanglement sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads (all cores by default).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Time step in seconds.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Physicality tolerance on the uncertainty relation.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one parameter file.
    Point {
        params: PathBuf,
        #[arg(long, value_enum, default_value = "step1")]
        stage: StageArg,
    },
    /// Run a sweep file.
    Sweep { file: PathBuf },
    /// Run a built-in figure preset.
    Preset {
        name: String,
        /// Points per axis, or samples of a time series.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Check a parameter file and print the derived model.
    Validate { params: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Step1,
    Step2,
    Full,
    Step2Series,
    FreeSeries,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::Step1 => Stage::Step1,
            StageArg::Step2 => Stage::Step2,
            StageArg::Full => Stage::Full,
            StageArg::Step2Series => Stage::Step2Series,
            StageArg::FreeSeries => Stage::FreeSeries,
        }
    }
}

fn read_params(path: &Path) -> Result<ParamFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(ParamFile::from_toml(&text)?)
}

fn apply_overrides(cfg: &mut SweepConfig, cli: &Cli) -> Result<(), ConfigError> {
    if let Some(dt) = cli.dt {
        cfg.params.numerics.dt_s = Some(dt);
    }
    if let Some(tol) = cli.tol {
        cfg.params.numerics.physicality_tol = tol;
    }
    if let Some(path) = &cli.out {
        cfg.output.path = Some(path.clone());
    }
    if let Some(f) = cli.format {
        cfg.output.format = match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        };
    }
    cfg.validate()
}

fn emit(cfg: &SweepConfig, cli: &Cli) -> Result<(), CliError> {
    let result = run_sweep(cfg, cli.workers)?;
    let write = |out: &mut dyn Write| match cfg.output.format {
        Format::Csv => write_csv(&result, out),
        Format::Json => write_json(&result, out),
    };
    match &cfg.output.path {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            let mut out = BufWriter::new(file);
            write(&mut out)?;
            out.flush().map_err(|e| CliError::io(path, e))
        }
        None => write(&mut io::stdout().lock()),
    }
}

fn validate(path: &Path) -> Result<(), CliError> {
    let r = read_params(path)?.resolve()?;
    let p = &r.params;
    let hz = |w: f64| w / std::f64::consts::TAU;
    println!("{}: ok", path.display());
    println!("  cavity            {:.6e} Hz", hz(p.cavity_frequency));
    println!(
        "  magnon 1, 2       {:.6e} Hz, {:.6e} Hz",
        hz(p.magnon_frequency[0]),
        hz(p.magnon_frequency[1])
    );
    println!(
        "  drive 1, 2        {:.6e} Hz, {:.6e} Hz",
        hz(r.drive1.frequency),
        hz(r.drive2.frequency)
    );
    println!(
        "  rabi 1, 2         {:.6e} rad/s, {:.6e} rad/s",
        r.drive1.rabi_frequency(p).map_err(ConfigError::from)?,
        r.drive2.rabi_frequency(p).map_err(ConfigError::from)?
    );
    for w in &r.warnings {
        println!("  warning: {w}");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Point { params, stage } => {
            let mut cfg = SweepConfig::new(
                read_params(params)?,
                (*stage).into(),
                Vec::new(),
                Vec::new(),
            )?;
            apply_overrides(&mut cfg, cli)?;
            for w in cfg.params.resolve()?.warnings {
                eprintln!("warning: {w}");
            }
            emit(&cfg, cli)
        }
        Command::Sweep { file } => {
            let mut cfg = SweepConfig::load(file)?;
            apply_overrides(&mut cfg, cli)?;
            emit(&cfg, cli)
        }
        Command::Preset { name, points } => {
            let mut cfg = preset(name, *points)?;
            apply_overrides(&mut cfg, cli)?;
            emit(&cfg, cli)
        }
        Command::Validate { params } => validate(params),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
