use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::dataset::{Dataset, Recipe};
use super::synth::{generate, SynthConfig, DEFAULT_TRUE_POSTERIOR_CAP};
use crate::baselines::{igmrf_fit, igmrf_posterior, label_propagation, mae, mean_crps, rmse, IgmrfGrid, MetricReport};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::kv::{KvFile, KvWriter};
use crate::linalg::CgConfig;
use crate::logdet::{
    cache_file_name, precompute_eigen, precompute_traces, LogdetBackend, Preprocess, DEFAULT_SERIES_TERMS,
    DEFAULT_TRACE_PROBES,
};
use crate::model::{DgmrfOperator, DgmrfParams};
use crate::posterior::{write_posterior_csv, GaussianPosterior, PosteriorSummary, DEFAULT_VARIANCE_SAMPLES};
use crate::vi::{init_params, train_from, write_elbo_trace, Checkpoint, TrainConfig, VariationalParams};

const CONFIG_HEADER: &str = "dgmrf-experiment v1";
/// Iterations averaged for the reported converged ELBO.
pub const ELBO_TAIL: usize = 1000;

/// Where the data of an experiment comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Generate(SynthConfig),
    /// A directory written by [`Dataset::save`].
    Directory(PathBuf),
    /// Plain edge list, observation vector and mask files.
    Files { graph: PathBuf, y: PathBuf, mask: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogdetSettings {
    pub eigen_cap: usize,
    pub series_terms: usize,
    pub trace_probes: usize,
}

impl Default for LogdetSettings {
    fn default() -> Self {
        LogdetSettings {
            eigen_cap: 5000,
            series_terms: DEFAULT_SERIES_TERMS,
            trace_probes: DEFAULT_TRACE_PROBES,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InferenceConfig {
    pub variance_samples: usize,
    pub cg: CgConfig<f64>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            variance_samples: DEFAULT_VARIANCE_SAMPLES,
            cg: CgConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub train: TrainConfig,
    pub logdet: LogdetSettings,
    pub inference: InferenceConfig,
    pub output: PathBuf,
}

fn resolve(base: Option<&Path>, p: String) -> PathBuf {
    let p = PathBuf::from(p);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

impl ExperimentConfig {
    /// Parses a flat `key=value` configuration. Relative paths are taken
    /// relative to `base` when given.
    pub fn from_kv(kv: &KvFile, base: Option<&Path>) -> Result<Self> {
        let data = if let Some(dir) = kv.get::<String>("data_dir")? {
            DataSource::Directory(resolve(base, dir))
        } else if let Some(graph) = kv.get::<String>("graph_file")? {
            DataSource::Files {
                graph: resolve(base, graph),
                y: resolve(base, kv.require("y_file")?),
                mask: resolve(base, kv.require("mask_file")?),
            }
        } else {
            let recipe: Recipe = kv.require("recipe")?;
            let d = SynthConfig::new(recipe, 0);
            DataSource::Generate(SynthConfig {
                recipe,
                n: kv.get_or("n", d.n)?,
                seed: kv.get_or("data_seed", 0)?,
                true_layers: kv.get_or("true_layers", d.true_layers)?,
                posterior_cap: kv.get_or("posterior_cap", DEFAULT_TRUE_POSTERIOR_CAP)?,
                unobserved_fraction: kv.get("unobserved_fraction")?,
            })
        };
        let ld = LogdetSettings::default();
        let id = InferenceConfig::default();
        Ok(ExperimentConfig {
            data,
            train: TrainConfig::from_kv(kv)?,
            logdet: LogdetSettings {
                eigen_cap: kv.get_or("eigen_cap", ld.eigen_cap)?,
                series_terms: kv.get_or("series_terms", ld.series_terms)?,
                trace_probes: kv.get_or("trace_probes", ld.trace_probes)?,
            },
            inference: InferenceConfig {
                variance_samples: kv.get_or("variance_samples", id.variance_samples)?,
                cg: CgConfig {
                    tol: kv.get_or("cg_tol", id.cg.tol)?,
                    max_iter: kv.get("cg_max_iter")?,
                },
            },
            output: resolve(base, kv.get_or("output", "results".to_string())?),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let kv = KvFile::load(path)?;
        Self::from_kv(&kv, path.parent())
    }

    pub fn write_kv(&self, w: &mut KvWriter) {
        match &self.data {
            DataSource::Generate(s) => {
                w.put("recipe", s.recipe)
                    .put("n", s.n)
                    .put("data_seed", s.seed)
                    .put("true_layers", s.true_layers)
                    .put("posterior_cap", s.posterior_cap);
                if let Some(f) = s.unobserved_fraction {
                    w.put("unobserved_fraction", f);
                }
            }
            DataSource::Directory(d) => {
                w.put("data_dir", d.display());
            }
            DataSource::Files { graph, y, mask } => {
                w.put("graph_file", graph.display())
                    .put("y_file", y.display())
                    .put("mask_file", mask.display());
            }
        }
        self.train.write_kv(w);
        w.put("eigen_cap", self.logdet.eigen_cap)
            .put("series_terms", self.logdet.series_terms)
            .put("trace_probes", self.logdet.trace_probes)
            .put("variance_samples", self.inference.variance_samples)
            .put("cg_tol", self.inference.cg.tol);
        if let Some(m) = self.inference.cg.max_iter {
            w.put("cg_max_iter", m);
        }
        w.put("output", self.output.display());
    }

    pub fn to_text(&self) -> String {
        let mut w = KvWriter::new(CONFIG_HEADER);
        self.write_kv(&mut w);
        w.finish().to_string()
    }
}

pub fn load_or_generate(source: &DataSource) -> Result<Dataset<f64>> {
    match source {
        DataSource::Generate(cfg) => generate(cfg),
        DataSource::Directory(dir) => Dataset::load(dir),
        DataSource::Files { graph, y, mask } => Dataset::from_files(graph, y, mask),
    }
}

/// Hex SHA-256 prefix over the observations and the mask.
pub fn data_hash(ds: &Dataset<f64>) -> String {
    let mut h = Sha256::new();
    for (v, &o) in ds.y.iter().zip(ds.mask.as_slice()) {
        let bits = if o { v.to_bits() } else { 0 };
        h.update(bits.to_le_bytes());
        h.update([u8::from(o)]);
    }
    hex::encode(&h.finalize()[..16])
}

/// Log-determinant pre-processing, read from or written to `cache_dir`.
pub fn prepare_logdet(
    g: &SparseGraph<f64>,
    backend: LogdetBackend,
    settings: &LogdetSettings,
    seed: u64,
    cache_dir: Option<&Path>,
) -> Result<Preprocess<f64>> {
    let name = cache_file_name(&g.content_hash(), backend, settings.series_terms, settings.trace_probes, seed);
    let cached = cache_dir.map(|d| d.join(name));
    if let Some(p) = cached.as_ref().filter(|p| p.exists()) {
        let pre = Preprocess::load(p)?;
        pre.check_graph(g)?;
        pre.expect_backend(backend)?;
        return Ok(pre);
    }
    let pre = match backend {
        LogdetBackend::Eigen => Preprocess::Eigen(precompute_eigen(g, settings.eigen_cap)?),
        LogdetBackend::PowerSeries => Preprocess::PowerSeries(precompute_traces(
            g,
            settings.series_terms,
            settings.trace_probes,
            seed,
        )?),
    };
    if let Some(p) = cached {
        pre.save(p)?;
    }
    Ok(pre)
}

/// Posterior mean and marginal standard deviations under trained parameters.
pub fn infer(
    g: &SparseGraph<f64>,
    params: &DgmrfParams<f64>,
    ds: &Dataset<f64>,
    inference: &InferenceConfig,
    seed: u64,
) -> Result<PosteriorSummary<f64>> {
    let op = DgmrfOperator::new(g, params);
    GaussianPosterior::new(&op, &ds.y, &ds.mask, params.sigma())?.summarize(inference.variance_samples, seed, &inference.cg)
}

/// Metrics of a prediction on the unobserved nodes: RMSE, MAE and CRPS against
/// `y`, plus MAE to the true posterior mean and std when the dataset carries them.
pub fn evaluate(
    mean: &[f64],
    std: Option<&[f64]>,
    ds: &Dataset<f64>,
    model: &str,
    seed: u64,
) -> Result<MetricReport> {
    let eval: Vec<bool> = ds.mask.as_slice().iter().map(|&o| !o).collect();
    let truth = ds.truth.as_ref();
    let mae_true_mean = match truth.and_then(|t| t.posterior_mean.as_ref()) {
        Some(m) => Some(mae(mean, m, &eval)?),
        None => None,
    };
    let mae_true_std = match (std, truth.and_then(|t| t.posterior_std.as_ref())) {
        (Some(s), Some(ts)) => Some(mae(s, ts, &eval)?),
        _ => None,
    };
    Ok(MetricReport {
        model: model.to_string(),
        dataset: ds.provenance.recipe.to_string(),
        seed,
        rmse: rmse(mean, &ds.y, &eval)?,
        mae: mae(mean, &ds.y, &eval)?,
        crps: std.map(|s| mean_crps(mean, s, &ds.y, &eval)).transpose()?,
        n_eval: eval.iter().filter(|&&b| b).count(),
        mae_true_mean,
        mae_true_std,
    })
}

/// Metrics of the exact posterior under the generating model, when stored.
pub fn true_posterior_report(ds: &Dataset<f64>) -> Result<Option<MetricReport>> {
    let Some(t) = &ds.truth else { return Ok(None) };
    let (Some(m), Some(s)) = (&t.posterior_mean, &t.posterior_std) else {
        return Ok(None);
    };
    evaluate(m, Some(s), ds, "true_posterior", ds.provenance.seed).map(Some)
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub metrics: MetricReport,
    /// Mean per-node ELBO over the last [`ELBO_TAIL`] iterations.
    pub final_elbo: f64,
    pub params: DgmrfParams<f64>,
    pub output: PathBuf,
}

fn stage<V>(name: &'static str, f: impl FnOnce() -> Result<V>) -> Result<V> {
    f().map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn tail_mean(trace: &[f64], tail: usize) -> f64 {
    let k = tail.clamp(1, trace.len().max(1));
    let s = &trace[trace.len().saturating_sub(k)..];
    s.iter().sum::<f64>() / s.len().max(1) as f64
}

/// Runs generate/load, pre-process, train, infer and evaluate, writing every
/// artifact into `config.output`. A failing stage is recorded in `status.txt`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let out = &config.output;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let result = run_stages(config, out);
    let status = match &result {
        Ok(_) => "status=ok\n".to_string(),
        Err(Error::Stage { stage, source }) => format!("status=failed\nstage={stage}\nerror={source}\n"),
        Err(e) => format!("status=failed\nerror={e}\n"),
    };
    write_text(&out.join("status.txt"), &status)?;
    result
}

fn run_stages(config: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let tc = &config.train;
    stage("config", || tc.validate())?;
    let ds = stage("data", || {
        let ds = load_or_generate(&config.data)?;
        if let DataSource::Generate(_) = config.data {
            ds.save(out.join("dataset"))?;
        }
        Ok(ds)
    })?;
    let mut w = KvWriter::new(CONFIG_HEADER);
    config.write_kv(&mut w);
    w.put("graph_hash", ds.graph.content_hash())
        .put("data_hash", data_hash(&ds))
        .put("crate_version", env!("CARGO_PKG_VERSION"));
    w.save(out.join("config.txt"))?;

    let g = &ds.graph;
    let pre = stage("preprocess", || prepare_logdet(g, tc.logdet_backend, &config.logdet, tc.seed, Some(out)))?;
    let result = stage("train", || {
        let params = init_params(tc)?;
        let vp = VariationalParams::init(&ds.y, &ds.mask, tc.vi_layers)?;
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
        Ok(r)
    })?;
    let summary = stage("infer", || {
        let s = infer(g, &result.params, &ds, &config.inference, tc.seed)?;
        write_posterior_csv(out.join("posterior.csv"), &s, &ds.mask)?;
        Ok(s)
    })?;
    let model = format!("dgmrf-L{}", tc.layers);
    let metrics = stage("evaluate", || {
        let m = evaluate(&summary.mean, Some(&summary.marginal_std), &ds, &model, tc.seed)?;
        write_text(&out.join("metrics.json"), &m.to_json())?;
        Ok(m)
    })?;
    Ok(RunReport {
        metrics,
        final_elbo: tail_mean(&result.elbo_trace, ELBO_TAIL),
        params: result.params,
        output: out.to_path_buf(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineModel {
    LabelPropagation,
    Igmrf,
}

impl FromStr for BaselineModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lp" => Ok(BaselineModel::LabelPropagation),
            "igmrf" => Ok(BaselineModel::Igmrf),
            other => Err(Error::Validation(format!("unknown baseline '{other}' (lp, igmrf)"))),
        }
    }
}

/// Fits and evaluates a baseline; returns the report and the predicted mean
/// and (for the IGMRF) standard deviations.
pub fn run_baseline(
    model: BaselineModel,
    ds: &Dataset<f64>,
    grid: &IgmrfGrid,
    inference: &InferenceConfig,
    seed: u64,
) -> Result<(MetricReport, PosteriorSummary<f64>)> {
    let summary = match model {
        BaselineModel::LabelPropagation => {
            let (mean, rep) = label_propagation(&ds.graph, &ds.y, &ds.mask, &inference.cg)?;
            PosteriorSummary {
                marginal_std: vec![0.0; mean.len()],
                mean,
                n_samples_used: 0,
                converged: rep.converged,
                cg_reports: vec![rep],
            }
        }
        BaselineModel::Igmrf => {
            let m = igmrf_fit(&ds.graph, &ds.y, &ds.mask, grid)?;
            igmrf_posterior(&m, &ds.graph, &ds.y, &ds.mask, inference.variance_samples, seed, &inference.cg)?
        }
    };
    let (name, std) = match model {
        BaselineModel::LabelPropagation => ("lp", None),
        BaselineModel::Igmrf => ("igmrf", Some(summary.marginal_std.as_slice())),
    };
    let report = evaluate(&summary.mean, std, ds, name, seed)?;
    Ok((report, summary))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub seeds: usize,
    pub layers: Vec<usize>,
}

/// Mean and sample standard deviation of one metric across seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Spread { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub layers: usize,
    pub runs: usize,
    pub rmse: Spread,
    pub mae: Spread,
    pub crps: Spread,
    pub mae_true_mean: Option<Spread>,
    pub mae_true_std: Option<Spread>,
    pub elbo: Spread,
}

fn spread_opt(v: &[Option<f64>]) -> Option<Spread> {
    v.iter().copied().collect::<Option<Vec<f64>>>().map(|v| Spread::of(&v))
}

/// Trains every layer count over `seeds` training seeds on one dataset and
/// writes `summary.csv` (one row per layer count, mean and std columns) and,
/// for synthetic data with a stored posterior, `reference.json`.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    if config.seeds == 0 || config.layers.is_empty() {
        return Err(Error::Validation("sweep needs at least one seed and one layer count".into()));
    }
    let root = &config.base.output;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut base = config.base.clone();
    if let DataSource::Generate(_) = base.data {
        let dir = root.join("dataset");
        load_or_generate(&base.data)?.save(&dir)?;
        base.data = DataSource::Directory(dir);
    }
    let ds = load_or_generate(&base.data)?;
    if let Some(r) = true_posterior_report(&ds)? {
        write_text(&root.join("reference.json"), &r.to_json())?;
    }
    let mut rows = Vec::new();
    for &layers in &config.layers {
        let mut runs = Vec::new();
        for s in 0..config.seeds {
            let mut c = base.clone();
            c.train.layers = layers;
            c.train.seed = base.train.seed + s as u64;
            c.output = root.join(format!("L{layers}-seed{s}"));
            runs.push(run_experiment(&c)?);
        }
        let col = |f: &dyn Fn(&RunReport) -> f64| Spread::of(&runs.iter().map(f).collect::<Vec<_>>());
        rows.push(SweepRow {
            layers,
            runs: runs.len(),
            rmse: col(&|r| r.metrics.rmse),
            mae: col(&|r| r.metrics.mae),
            crps: col(&|r| r.metrics.crps.unwrap_or(f64::NAN)),
            mae_true_mean: spread_opt(&runs.iter().map(|r| r.metrics.mae_true_mean).collect::<Vec<_>>()),
            mae_true_std: spread_opt(&runs.iter().map(|r| r.metrics.mae_true_std).collect::<Vec<_>>()),
            elbo: col(&|r| r.final_elbo),
        });
    }
    write_text(&root.join("summary.csv"), &summary_csv(&rows))?;
    Ok(rows)
}

pub fn summary_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(
        "layers,runs,rmse_mean,rmse_std,mae_mean,mae_std,crps_mean,crps_std,\
         mae_true_mean_mean,mae_true_mean_std,mae_true_std_mean,mae_true_std_std,elbo_mean,elbo_std\n",
    );
    let opt = |o: Option<Spread>| o.map_or(",".to_string(), |p| format!("{},{}", p.mean, p.std));
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.layers,
            r.runs,
            r.rmse.mean,
            r.rmse.std,
            r.mae.mean,
            r.mae.std,
            r.crps.mean,
            r.crps.std,
            opt(r.mae_true_mean),
            opt(r.mae_true_std),
            r.elbo.mean,
            r.elbo.std
        );
    }
    s
}
