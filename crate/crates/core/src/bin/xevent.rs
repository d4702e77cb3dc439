use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use xevent::pipeline::config::EventMode;
use xevent::pipeline::{plan, run_stages, Context, PipelineConfig, Stage};
use xevent::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "xevent", version, about = "Hidden-state diagnostics for extreme events")]
struct Cli {
    /// Pipeline configuration (JSON). Defaults to `<out>/config.json`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory. Overrides `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Simulation seed. Overrides `simulate.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run a single stage instead of the full pipeline.
    #[arg(long)]
    stage: Option<String>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Percentile,
    Tails,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the model and write trajectories.
    Simulate,
    /// Filter and smoother belief paths.
    Assimilate,
    /// Filter-smoother KL series and influence ranges.
    Diagnose,
    /// Detect events, with optional threshold overrides.
    Events {
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Percentile (percentile mode) or tail fraction (tails mode).
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        min_separation: Option<f64>,
    },
    /// Event features, k-means labels and PCA coordinates.
    Cluster,
    /// Aligned event paths and representative pathway.
    Pathways,
    /// Merge stage outputs into report.json and figure tables.
    Report,
    /// Every stage appropriate to the configured model.
    Run,
}

fn load_config(cli: &Cli) -> Result<(PipelineConfig, PathBuf)> {
    let path = match (&cli.config, &cli.out) {
        (Some(p), _) => p.clone(),
        (None, Some(out)) => out.join("config.json"),
        (None, None) => return Err(Error::Config("pass --config or --out".into())),
    };
    let mut cfg = PipelineConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.simulate.seed = seed;
    }
    if let Some(Command::Events { mode, q, min_separation }) = &cli.command {
        let e = &mut cfg.events;
        if let Some(m) = mode {
            e.mode = match m {
                Mode::Percentile => EventMode::Percentile,
                Mode::Tails => EventMode::Tails,
            };
            e.percentile = None;
            e.fraction = None;
            e.two_sided = None;
        }
        if let Some(q) = q {
            match e.mode {
                EventMode::Percentile => e.percentile = Some(*q),
                EventMode::Tails => e.fraction = Some(*q),
            }
        }
        if min_separation.is_some() {
            e.min_separation = *min_separation;
        }
        cfg.validate()?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.directory.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output.directory".into()))?;
    Ok((cfg, out))
}

fn stages(cli: &Cli, cfg: &PipelineConfig) -> Result<Vec<Stage>> {
    let one = |s| Ok(vec![s]);
    match (&cli.command, &cli.stage) {
        (Some(_), Some(_)) => Err(Error::Config("use either a subcommand or --stage, not both".into())),
        (None, Some(name)) if name == "run" => Ok(plan(cfg)),
        (None, Some(name)) => one(name.parse()?),
        (None, None) | (Some(Command::Run), None) => Ok(plan(cfg)),
        (Some(c), None) => one(match c {
            Command::Simulate => Stage::Simulate,
            Command::Assimilate => Stage::Assimilate,
            Command::Diagnose => Stage::Diagnose,
            Command::Events { .. } => Stage::Events,
            Command::Cluster => Stage::Cluster,
            Command::Pathways => Stage::Pathways,
            Command::Report => Stage::Report,
            Command::Run => unreachable!(),
        }),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("XEVENT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("XEVENT_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Config(e.to_string()))
}

fn main_inner(cli: &Cli) -> Result<()> {
    configure_threads()?;
    let (cfg, out) = load_config(cli)?;
    let stages = stages(cli, &cfg)?;
    let ctx = Context::new(cfg, &out)?;
    let manifest = run_stages(&ctx, &stages)?;
    for s in &manifest.stages {
        println!("{}: {}", s.name, s.status);
    }
    println!("manifest: {}", ctx.layout.manifest().display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
