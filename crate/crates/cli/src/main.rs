use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dgmrf::baselines::{IgmrfGrid, DEFAULT_EPSILON};
use dgmrf::experiment::{
    evaluate, infer, load_or_generate, prepare_logdet, run_baseline, run_experiment, run_sweep, BaselineModel,
    DataSource, Dataset, ExperimentConfig, InferenceConfig, LogdetSettings, Recipe, SweepConfig, SynthConfig,
};
use dgmrf::logdet::LogdetBackend;
use dgmrf::posterior::{read_posterior_csv, write_posterior_csv};
use dgmrf::vi::{init_params, train_from, write_elbo_trace, Checkpoint, VariationalParams};

#[derive(Parser)]
#[command(name = "dgmrf", version, about = "Deep Gaussian Markov random fields on graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Generate(GenerateArgs),
    /// Pre-compute log-determinant data (eigenvalues or trace estimates).
    Preprocess(PreprocessArgs),
    /// Train a model from an experiment config; writes checkpoint and ELBO trace.
    Train(TrainArgs),
    /// Posterior mean and marginal std from a checkpoint.
    Infer(InferArgs),
    /// Score a posterior CSV against a dataset.
    Evaluate(EvaluateArgs),
    /// Fit and score a baseline (lp or igmrf).
    Baseline(BaselineArgs),
    /// Run the full pipeline of an experiment config.
    Run(ConfigArgs),
    /// Repeat an experiment over seeds and layer counts.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// dgmrf, dense or mix
    #[arg(long)]
    recipe: Recipe,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of nodes (recipe default when omitted).
    #[arg(long)]
    n: Option<usize>,
    /// Layers of the generating DGMRF (dgmrf recipe).
    #[arg(long, default_value_t = 1)]
    true_layers: usize,
    #[arg(long)]
    unobserved_fraction: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = LogdetBackend::Eigen)]
    backend: LogdetBackend,
    #[arg(long, default_value_t = LogdetSettings::default().series_terms)]
    terms: usize,
    #[arg(long, default_value_t = LogdetSettings::default().trace_probes)]
    probes: usize,
    #[arg(long, default_value_t = LogdetSettings::default().eigen_cap)]
    eigen_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cache directory for the pre-processed file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the output directory of the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Resume from a checkpoint instead of the default initialization.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = InferenceConfig::default().variance_samples)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    posterior: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "dgmrf")]
    model: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    /// lp or igmrf
    #[arg(long)]
    model: BaselineModel,
    #[arg(long)]
    data: PathBuf,
    /// IGMRF diagonal jitter.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = InferenceConfig::default().variance_samples)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    /// Comma separated layer counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    layers: Vec<usize>,
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn load_data(dir: &Path) -> Result<Dataset<f64>> {
    Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn generate(a: GenerateArgs) -> Result<()> {
    let d = SynthConfig::new(a.recipe, a.seed);
    let cfg = SynthConfig {
        n: a.n.unwrap_or(d.n),
        true_layers: a.true_layers,
        unobserved_fraction: a.unobserved_fraction,
        ..d
    };
    let ds = load_or_generate(&DataSource::Generate(cfg))?;
    ds.save(&a.out)?;
    println!("wrote {} ({} nodes, {} observed)", a.out.display(), ds.n_nodes(), ds.mask.m_count());
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let ds = load_data(&a.data)?;
    create_dir(&a.out)?;
    let settings = LogdetSettings {
        eigen_cap: a.eigen_cap,
        series_terms: a.terms,
        trace_probes: a.probes,
    };
    let pre = prepare_logdet(&ds.graph, a.backend, &settings, a.seed, Some(&a.out))?;
    println!("{} pre-process for graph {} cached in {}", pre.backend(), pre.graph_hash(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = load_config(&a.cfg)?;
    let tc = &cfg.train;
    let ds = load_or_generate(&cfg.data)?;
    let out = &cfg.output;
    create_dir(out)?;
    let g = &ds.graph;
    let pre = prepare_logdet(g, tc.logdet_backend, &cfg.logdet, tc.seed, Some(out))?;
    let (params, vp) = match &a.resume {
        Some(p) => {
            let ck = Checkpoint::<f64>::load(p)?;
            if ck.graph_hash != g.content_hash() {
                bail!("checkpoint {} belongs to a different graph", p.display());
            }
            (ck.params, ck.vp)
        }
        None => (init_params(tc)?, VariationalParams::init(&ds.y, &ds.mask, tc.vi_layers)?),
    };
    let ck_path = out.join("checkpoint.txt");
    let hash = g.content_hash();
    let r = train_from(g, &ds.y, &ds.mask, &pre, tc, params, vp, |p| {
        Checkpoint {
            graph_hash: hash.clone(),
            n_nodes: g.n_nodes(),
            seed: tc.seed,
            iteration: p.iteration,
            params: p.params.clone(),
            vp: p.vp.clone(),
        }
        .save(&ck_path)
    })?;
    write_elbo_trace(out.join("elbo.csv"), &r.elbo_trace)?;
    let last = r.elbo_trace.last().copied().unwrap_or(f64::NAN);
    println!("trained {} iterations, last ELBO {last}; checkpoint {}", tc.iterations, ck_path.display());
    Ok(())
}

fn infer_cmd(a: InferArgs) -> Result<()> {
    let ds = load_data(&a.data)?;
    let ck = Checkpoint::<f64>::load(&a.checkpoint)?;
    if ck.graph_hash != ds.graph.content_hash() {
        bail!("checkpoint does not match the dataset graph");
    }
    let inference = InferenceConfig {
        variance_samples: a.samples,
        ..InferenceConfig::default()
    };
    let s = infer(&ds.graph, &ck.params, &ds, &inference, a.seed)?;
    if !s.converged {
        eprintln!("warning: some CG solves did not reach the tolerance");
    }
    write_posterior_csv(&a.out, &s, &ds.mask)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let ds = load_data(&a.data)?;
    let (mean, std, _) = read_posterior_csv::<f64>(&a.posterior)?;
    let has_std = std.iter().any(|&s| s > 0.0);
    let report = evaluate(&mean, has_std.then_some(std.as_slice()), &ds, &a.model, a.seed)?;
    emit(&report.to_json(), a.out.as_deref())
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let ds = load_data(&a.data)?;
    create_dir(&a.out)?;
    let grid = IgmrfGrid {
        epsilon: a.epsilon,
        ..IgmrfGrid::default()
    };
    let inference = InferenceConfig {
        variance_samples: a.samples,
        ..InferenceConfig::default()
    };
    let (report, summary) = run_baseline(a.model, &ds, &grid, &inference, a.seed)?;
    write_posterior_csv(a.out.join("posterior.csv"), &summary, &ds.mask)?;
    emit(&report.to_json(), Some(&a.out.join("metrics.json")))?;
    println!("{}", report.to_json());
    Ok(())
}

fn run(a: ConfigArgs) -> Result<()> {
    let cfg = load_config(&a)?;
    let r = run_experiment(&cfg)?;
    println!("{}", r.metrics.to_json());
    println!("final ELBO {}; bundle {}", r.final_elbo, r.output.display());
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let base = load_config(&a.cfg)?;
    let out = base.output.clone();
    let rows = run_sweep(&SweepConfig {
        base,
        seeds: a.seeds,
        layers: a.layers,
    })?;
    for r in &rows {
        println!(
            "L={} rmse {:.5}+-{:.5} crps {:.5}+-{:.5} elbo {:.4}+-{:.4}",
            r.layers, r.rmse.mean, r.rmse.std, r.crps.mean, r.crps.std, r.elbo.mean, r.elbo.std
        );
    }
    println!("summary in {}", out.join("summary.csv").display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(a) => generate(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train(a),
        Command::Infer(a) => infer_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Baseline(a) => baseline(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
    }
}
