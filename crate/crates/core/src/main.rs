use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mnl_mdp::env::InstanceDocument;
use mnl_mdp::harness::{
    parse_horizons, parse_seeds, run_sweep, summarize, write_records, write_summary, Algo, ConfigOverrides,
    InstanceKind, RunConfig,
};
use mnl_mdp::{Error, Result};

/// Regret benchmark for LIVAROT and UCRL-MNL-OL on MNL MDP instances.
#[derive(Debug, Parser)]
#[command(name = "livarot-bench", version)]
struct Cli {
    #[arg(long, value_parser = parse_algo)]
    algo: Option<Algo>,
    #[arg(long, value_parser = parse_instance)]
    instance: Option<InstanceKind>,
    #[arg(long)]
    d: Option<usize>,
    /// Horizon or comma-separated list of horizons.
    #[arg(long = "H", value_name = "INT[,INT...]")]
    horizons: Option<String>,
    /// Number of episodes.
    #[arg(long = "T")]
    episodes: Option<usize>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    lambda0: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eta_omd: Option<f64>,
    #[arg(long)]
    beta_scale: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Seed, inclusive range `A..B`, or comma list of either.
    #[arg(long, value_name = "INT or INT..INT")]
    seeds: Option<String>,
    #[arg(long)]
    fw_iters: Option<usize>,
    /// KL dual variable for `--instance kl-robust`.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    num_states: Option<usize>,
    #[arg(long)]
    num_actions: Option<usize>,
    #[arg(long)]
    param_bound: Option<f64>,
    /// Hard instance: one sign pattern shared by all stages.
    #[arg(long)]
    shared_signs: bool,
    /// Fill the wall_ms column (output is then no longer reproducible).
    #[arg(long)]
    record_timing: bool,
    /// Write estimator diagnostics every N episodes to PATH (JSON).
    #[arg(long, value_names = ["N", "PATH"], num_args = 2)]
    diagnostics: Option<Vec<String>>,
    /// Write the instance of the first (H, seed) pair as JSON and exit.
    #[arg(long)]
    dump_instance: Option<PathBuf>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file whose fields override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn parse_algo(s: &str) -> Result<Algo> {
    s.parse()
}

fn parse_instance(s: &str) -> Result<InstanceKind> {
    s.parse()
}

fn overrides(cli: &Cli) -> Result<ConfigOverrides> {
    Ok(ConfigOverrides {
        algo: cli.algo,
        instance: cli.instance,
        d: cli.d,
        horizons: cli.horizons.as_deref().map(parse_horizons).transpose()?,
        episodes: cli.episodes,
        tau: cli.tau,
        lambda0: cli.lambda0,
        lambda: cli.lambda,
        eta_omd: cli.eta_omd,
        beta_scale: cli.beta_scale,
        delta: cli.delta,
        seeds: cli
            .seeds
            .as_deref()
            .map(|s| parse_seeds(s).map(mnl_mdp::harness::SeedSpec::List))
            .transpose()?,
        fw_iters: cli.fw_iters,
        eta: cli.eta,
        num_states: cli.num_states,
        num_actions: cli.num_actions,
        param_bound: cli.param_bound,
        per_stage_resample: cli.shared_signs.then_some(false),
        record_timing: cli.record_timing.then_some(true),
        diagnostics_every: None,
        out: cli.out.clone(),
        summary: cli.summary.clone(),
    })
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let flags = overrides(cli)?;
    let file = match &cli.config {
        Some(p) => Some(ConfigOverrides::from_json(&fs::read_to_string(p)?)?),
        None => None,
    };
    let algo = file
        .as_ref()
        .and_then(|f| f.algo)
        .or(flags.algo)
        .unwrap_or(Algo::Livarot);
    let mut cfg = RunConfig::defaults_for(algo);
    flags.apply(&mut cfg)?;
    if let Some(f) = &file {
        f.apply(&mut cfg)?;
    }
    cfg.algo = algo;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve(&cli)?;
    let diagnostics_path = match &cli.diagnostics {
        Some(v) => {
            cfg.diagnostics_every = v[0]
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad diagnostics period '{}'", v[0])))?;
            Some(PathBuf::from(&v[1]))
        }
        None => None,
    };
    cfg.validate()?;

    if let Some(path) = &cli.dump_instance {
        let mdp = mnl_mdp::harness::build_instance(&cfg, cfg.horizons[0], cfg.seeds[0])?;
        fs::write(path, InstanceDocument::from_mdp(&mdp).to_json()?)?;
        return Ok(());
    }

    let sweep = run_sweep(&cfg)?;
    match &cfg.out {
        Some(p) => write_records(BufWriter::new(File::create(p)?), &sweep.records)?,
        None => write_records(std::io::stdout().lock(), &sweep.records)?,
    }
    if let Some(p) = &cfg.summary {
        write_summary(p, &summarize(&sweep.records))?;
    }
    if let Some(p) = diagnostics_path {
        fs::write(p, serde_json::to_string_pretty(&sweep.diagnostics)?)?;
    }
    if let Some(first) = sweep.failures.first() {
        for f in &sweep.failures {
            eprintln!(
                "run H={} seed={} failed after {} episodes: {}",
                f.horizon, f.seed, f.completed, f.message
            );
        }
        return Err(if sweep.failures.iter().any(|f| f.numerical) {
            Error::NumericalFailure {
                context: "run_sweep",
                detail: format!("{} of the runs failed", sweep.failures.len()),
            }
        } else {
            Error::InvalidInput(first.message.clone())
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
