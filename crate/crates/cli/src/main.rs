use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use medpath_core::boundary::{lrt_boundary, BoundaryTestResult, ChiBarMixture, Sided};
use medpath_core::causal::{bootstrap_contrasts, compute_contrasts, ContrastSeries, EffectRequest};
use medpath_core::estimation::{default_init, fit_mle};
use medpath_core::io::{self, FitArtifact, RunConfig};
use medpath_core::simulation::{generate, replicate_study, InitStrategy, ScenarioConfig};
use medpath_core::{Error, Model, Result};

#[derive(Parser, Debug)]
#[command(name = "medpath", about = "Causal mediation with latent-process mixed models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset from a scenario.
    Simulate(SimulateArgs),
    /// Maximum-likelihood fit of the configured model.
    Fit(FitArgs),
    /// Causal contrasts with parametric bootstrap bands from a fit.
    Effects(EffectsArgs),
    /// Repeated simulate/fit/contrast study against the oracle truth.
    Replicate(ReplicateArgs),
    /// One-sided boundary test for an added random effect.
    BoundaryTest(BoundaryArgs),
    /// Print the version.
    Version,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for baseline.csv and long.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also compute the oracle truth into truth.json.
    #[arg(long)]
    truth: bool,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory holding baseline.csv and long.csv.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EffectsArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    fit: PathBuf,
    /// Data to average over for marginal contrasts.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the bootstrap seed of the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ReplicateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.csv and truth.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Debug)]
struct BoundaryArgs {
    /// Observed statistic, tested against --mixture.
    #[arg(long, conflicts_with_all = ["null", "alt"], requires = "mixture")]
    statistic: Option<f64>,
    /// Mixture as `df:weight` pairs, e.g. `0:0.5,1:0.5`.
    #[arg(long)]
    mixture: Option<String>,
    /// Fit artifact under the null.
    #[arg(long, requires = "alt")]
    null: Option<PathBuf>,
    /// Fit artifact under the alternative.
    #[arg(long, requires = "null")]
    alt: Option<PathBuf>,
    /// Covariance parameters of the added effect already estimable under the null.
    #[arg(long, default_value_t = 0)]
    k: u32,
    /// Number of added random effects.
    #[arg(long, default_value_t = 1)]
    k_prime: u32,
    /// Added effects are uncorrelated with the existing ones.
    #[arg(long)]
    uncorrelated: bool,
}

fn parse_mixture(s: &str) -> Result<ChiBarMixture> {
    let mut comps = Vec::new();
    for part in s.split(',') {
        let (df, w) = part
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("mixture component `{part}` is not df:weight")))?;
        let df: u32 = df
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad degrees of freedom `{df}`")))?;
        let w: f64 = w
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad weight `{w}`")))?;
        comps.push((df, w));
    }
    ChiBarMixture::new(comps)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn scenario(cfg: &RunConfig) -> Result<ScenarioConfig> {
    cfg.scenario_config()?
        .ok_or_else(|| Error::InvalidArgument("this command needs a `scenario` block in the config".into()))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let sc = scenario(&cfg)?;
    let data = generate(&sc, a.seed)?;
    ensure_dir(&a.out)?;
    io::write_dataset(&data, &a.out)?;
    if a.truth {
        io::write_truth(&a.out.join("truth.json"), &sc.truth(a.seed)?)?;
    }
    println!("{} subjects written to {}", data.len(), a.out.display());
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let spec = cfg.model_spec()?;
    let model = Model::new(spec.clone())?;
    let data = io::read_dataset(&a.data)?;
    let mut init = match cfg.estimator.init {
        InitStrategy::Default => default_init(&model, &data)?,
        InitStrategy::Truth => scenario(&cfg)?.theta_true(&model)?,
    };
    model.layout().apply_named(&mut init, &cfg.estimator.init_values)?;
    let fit = fit_mle(&model, &data, &init, &cfg.fit_options())?;
    io::write_fit(&a.out, &FitArtifact::new(&spec, &fit))?;

    let se = fit.std_errors();
    println!("{:<24} {:>14} {:>12}", "parameter", "estimate", "se");
    for (i, name) in fit.param_names.iter().enumerate() {
        let s = se.as_ref().map_or(String::from("-"), |s| format!("{:.6}", s[i]));
        println!("{name:<24} {:>14.6} {s:>12}", fit.theta_hat[i]);
    }
    println!("loglik {:.6}, {} iterations, {}", fit.loglik, fit.iterations, fit.message);
    if !fit.converged {
        return Err(Error::NotConverged(fit.message));
    }
    Ok(())
}

fn effect_request(cfg: &RunConfig) -> Result<EffectRequest> {
    if let Some(r) = &cfg.effects {
        return Ok(r.clone());
    }
    let sc = scenario(cfg)
        .map_err(|_| Error::InvalidArgument("config needs an `effects` or a `scenario` block".into()))?;
    Ok(EffectRequest {
        decomposition: sc.decomposition(),
        x: 1.0,
        x_prime: 0.0,
        times: sc.contrast_times.clone(),
        profile: None,
    })
}

fn effects(a: EffectsArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let (model, fit) = io::read_fit(&a.fit)?.restore()?;
    let request = effect_request(&cfg)?;
    let data = a.data.as_deref().map(io::read_dataset).transpose()?;
    let series: Vec<ContrastSeries> = if cfg.bootstrap.r == 0 {
        compute_contrasts(&model, &fit.theta_hat, &request, data.as_ref())?
    } else {
        let seed = a.seed.unwrap_or(cfg.bootstrap.seed);
        bootstrap_contrasts(&model, &fit, &request, data.as_ref(), cfg.bootstrap.r, seed, cfg.bootstrap.level)?
    };
    io::write_effects(&a.out, &series)?;
    print!("{}", String::from_utf8_lossy(&io::effects_to_csv(&series)?));
    Ok(())
}

fn replicate(a: ReplicateArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let sc = scenario(&cfg)?;
    let k = a.k.unwrap_or(cfg.replicate.k);
    let seed = a.seed.unwrap_or(cfg.replicate.seed);
    let report = replicate_study(&sc, k, &cfg.estimator_options(), seed)?;
    ensure_dir(&a.out)?;
    io::write_report(&a.out.join("report.csv"), &report)?;
    io::write_truth(&a.out.join("truth.json"), &sc.truth(medpath_core::rng::derive_seed(seed, u64::MAX))?)?;
    for (i, msg) in &report.failure_messages {
        eprintln!("replicate {i} failed: {msg}");
    }
    print!("{}", String::from_utf8_lossy(&io::report_to_csv(&report)?));
    Ok(())
}

fn boundary_test(a: BoundaryArgs) -> Result<()> {
    let result: BoundaryTestResult = match (a.statistic, &a.null, &a.alt) {
        (Some(t), None, None) => {
            let mix = parse_mixture(a.mixture.as_deref().unwrap_or_default())?;
            BoundaryTestResult::new(t, mix, Sided::One)?
        }
        (None, Some(n), Some(alt)) => {
            let (n, alt) = (io::read_fit(n)?, io::read_fit(alt)?);
            if !n.converged || !alt.converged {
                return Err(Error::NotConverged("both fits must have converged".into()));
            }
            lrt_boundary(n.loglik, alt.loglik, a.k, a.k_prime, !a.uncorrelated)?
        }
        _ => {
            return Err(Error::InvalidArgument(
                "give either --statistic with --mixture, or --null with --alt".into(),
            ))
        }
    };
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MEDPATH_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("MEDPATH_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Effects(a) => effects(a),
        Command::Replicate(a) => replicate(a),
        Command::BoundaryTest(a) => boundary_test(a),
        Command::Version => {
            println!("medpath {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
