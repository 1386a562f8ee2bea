mod common;

use common::{delaunay, dense_product};
use dgmrf::experiment::{
    evaluate, generate, make_dense, make_mix, run_experiment, run_sweep, sample_dgmrf_prior, DataSource, Dataset,
    ExperimentConfig, InferenceConfig, LogdetSettings, Recipe, SynthConfig, SYNTH_ALPHA, SYNTH_BETA,
};
use dgmrf::kv::KvFile;
use dgmrf::linalg::{standard_normal, CgConfig, Purpose, SeedStreams};
use dgmrf::model::{DgmrfParams, LayerOperator, LayerParams};
use dgmrf::vi::TrainConfig;
use nalgebra::DMatrix;

fn tight() -> CgConfig<f64> {
    CgConfig { tol: 1e-11, max_iter: None }
}

fn synth(recipe: Recipe, n: usize, layers: usize, seed: u64) -> SynthConfig {
    SynthConfig { n, true_layers: layers, ..SynthConfig::new(recipe, seed) }
}

fn true_layer() -> LayerParams<f64> {
    LayerParams::from_coefficients(SYNTH_ALPHA, SYNTH_BETA, 30.0, 0.0).unwrap()
}

#[test]
fn identity_model_returns_the_noise() {
    let g = delaunay(40, 1);
    let id = LayerParams { theta3: -30.0, ..LayerParams::zeroed() };
    let params = DgmrfParams::new(vec![id], 0.0).unwrap();
    let x = sample_dgmrf_prior(&g, &params, 5, &tight()).unwrap();
    let z: Vec<f64> = standard_normal(&mut SeedStreams::new(5).rng(Purpose::SyntheticField, 0), 40);
    for (a, b) in x.iter().zip(&z) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn prior_samples_have_zero_mean_and_precision_gtg() {
    let n = 30;
    let g = delaunay(n, 2);
    let layers = vec![
        LayerParams::from_coefficients(1.1, -0.6, 0.5, 0.0).unwrap(),
        LayerParams::from_coefficients(0.8, 0.3, -1.0, 0.0).unwrap(),
    ];
    let params = DgmrfParams::new(layers.clone(), 0.0).unwrap();
    let gm = dense_product(&g, &layers);
    let gd = DMatrix::from_fn(n, n, |i, j| gm.row(i)[j]);
    let cov = (gd.transpose() * &gd).try_inverse().unwrap();

    let draws = 100_000;
    let mut s1 = vec![0.0; n];
    let mut s2 = DMatrix::<f64>::zeros(n, n);
    for k in 0..draws {
        let x = sample_dgmrf_prior(&g, &params, 1000 + k as u64, &tight()).unwrap();
        let xv = nalgebra::DVector::from_vec(x.clone());
        for i in 0..n {
            s1[i] += x[i];
        }
        s2 += &xv * xv.transpose();
    }
    let m = draws as f64;
    let mut worst = 0.0f64;
    for i in 0..n {
        let mean = s1[i] / m;
        assert!(mean.abs() < 5.0 * (cov[(i, i)] / m).sqrt(), "mean {i}: {mean}");
        for j in 0..n {
            let emp = s2[(i, j)] / m - s1[i] * s1[j] / (m * m);
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / m).sqrt();
            worst = worst.max((emp - cov[(i, j)]).abs() / se);
        }
    }
    // 900 entries, a 5.5 standard-error bound is exceeded with negligible probability
    assert!(worst < 5.5, "worst covariance deviation {worst} standard errors");
}

#[test]
fn regeneration_is_bit_identical() {
    let cfg = synth(Recipe::Dgmrf, 200, 1, 3);
    let a: Dataset<f64> = generate(&cfg).unwrap();
    let b: Dataset<f64> = generate(&cfg).unwrap();
    assert_eq!(a.y, b.y);
    assert_eq!(a.mask, b.mask);
    assert_eq!(a.truth, b.truth);
    assert_eq!(a.graph.content_hash(), b.graph.content_hash());
}

#[test]
fn stored_posterior_matches_dense_recomputation() {
    let ds: Dataset<f64> = generate(&synth(Recipe::Dgmrf, 150, 2, 4)).unwrap();
    let n = ds.n_nodes();
    let gm = dense_product(&ds.graph, &[true_layer(), true_layer()]);
    let gd = DMatrix::from_fn(n, n, |i, j| gm.row(i)[j]);
    let mut qt = gd.transpose() * &gd;
    let mut rhs = nalgebra::DVector::zeros(n);
    for i in ds.mask.observed_indices() {
        qt[(i, i)] += 1e4;
        rhs[i] = 1e4 * ds.y[i];
    }
    let chol = qt.clone().cholesky().unwrap();
    let mean = chol.solve(&rhs);
    let cov = chol.inverse();
    let t = ds.truth.as_ref().unwrap();
    let (m, s) = (t.posterior_mean.as_ref().unwrap(), t.posterior_std.as_ref().unwrap());
    for i in 0..n {
        assert!((m[i] - mean[i]).abs() < 1e-8 * (1.0 + mean[i].abs()));
        assert!((s[i] - cov[(i, i)].sqrt()).abs() < 1e-8 * s[i]);
    }
}

#[test]
fn noise_level_is_one_percent() {
    let ds: Dataset<f64> = generate(&synth(Recipe::Dgmrf, 3000, 1, 5)).unwrap();
    let t = ds.truth.as_ref().unwrap();
    let n = ds.n_nodes() as f64;
    let ss: f64 = ds.y.iter().zip(&t.x).map(|(y, x)| (y - x).powi(2)).sum();
    let sd = (ss / n).sqrt();
    assert!((sd - 0.01).abs() < 0.0005, "noise std {sd}");
    assert_eq!(ds.mask.len() - ds.mask.m_count(), 750);
}

#[test]
fn mix_components_are_valid_and_half_masked() {
    let ds: Dataset<f64> = make_mix(&synth(Recipe::Mix, 300, 0, 6)).unwrap();
    let c = &ds.provenance.true_coefficients;
    assert_eq!(c.len(), 4);
    for &(a, b) in c {
        assert!((0.5..1.5).contains(&a) && (-1.1..-0.1).contains(&b) && b.abs() < a);
    }
    assert_eq!(ds.mask.m_count(), 150);
    assert!(ds.truth.as_ref().unwrap().posterior_std.is_some());
}

#[test]
fn dense_true_model_has_three_hop_pattern() {
    let ds: Dataset<f64> = make_dense(&synth(Recipe::Dense, 120, 1, 7)).unwrap();
    let g = &ds.graph;
    let hop3 = g.k_hop_graph(3).unwrap();
    let m = LayerOperator::new(&hop3, &true_layer()).to_csr(&hop3);
    for i in 0..g.n_nodes() {
        let dist = g.bfs_distances(i, usize::MAX);
        for j in 0..g.n_nodes() {
            let within = dist[j].is_some_and(|d| d <= 3);
            assert_eq!(m.get(i, j) != 0.0, within, "({i}, {j})");
        }
    }
}

#[test]
fn dataset_round_trip() {
    let ds: Dataset<f64> = generate(&synth(Recipe::Mix, 200, 0, 8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let back = Dataset::<f64>::load(dir.path()).unwrap();
    assert_eq!(back.y, ds.y);
    assert_eq!(back.mask, ds.mask);
    assert_eq!(back.truth, ds.truth);
    assert_eq!(back.points, ds.points);
    assert_eq!(back.provenance, ds.provenance);
    assert_eq!(back.graph.content_hash(), ds.graph.content_hash());
}

#[test]
fn identical_prediction_scores_zero() {
    let ds: Dataset<f64> = generate(&synth(Recipe::Dgmrf, 100, 1, 9)).unwrap();
    let r = evaluate(&ds.y, None, &ds, "oracle", 0).unwrap();
    assert_eq!(r.rmse, 0.0);
    assert_eq!(r.mae, 0.0);
    assert_eq!(r.n_eval, 25);
}

fn small_config(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        data: DataSource::Generate(synth(Recipe::Dgmrf, 80, 1, 10)),
        train: TrainConfig { iterations: 60, layers: 2, ..TrainConfig::default() },
        logdet: LogdetSettings::default(),
        inference: InferenceConfig { variance_samples: 10, ..InferenceConfig::default() },
        output: out.to_path_buf(),
    }
}

#[test]
fn experiment_bundle_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_experiment(&small_config(&dir.path().join("a"))).unwrap();
    let b = run_experiment(&small_config(&dir.path().join("b"))).unwrap();
    for f in ["config.txt", "checkpoint.txt", "elbo.csv", "posterior.csv", "metrics.json", "status.txt"] {
        assert!(dir.path().join("a").join(f).exists(), "{f}");
    }
    let read = |d: &str, f: &str| std::fs::read_to_string(dir.path().join(d).join(f)).unwrap();
    assert_eq!(read("a", "metrics.json"), read("b", "metrics.json"));
    assert_eq!(read("a", "checkpoint.txt"), read("b", "checkpoint.txt"));
    assert_eq!(a.metrics, b.metrics);
    assert!(read("a", "config.txt").contains("graph_hash="));
    assert!(a.metrics.mae_true_mean.is_some());

    // recorded config reproduces the run
    let kv = KvFile::load(dir.path().join("a/config.txt")).unwrap();
    let mut cfg = ExperimentConfig::from_kv(&kv, None).unwrap();
    cfg.output = dir.path().join("c");
    run_experiment(&cfg).unwrap();
    assert_eq!(read("a", "metrics.json"), read("c", "metrics.json"));
}

#[test]
fn failing_stage_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.logdet.eigen_cap = 10;
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(err, dgmrf::Error::Stage { stage: "preprocess", .. }), "{err}");
    let status = std::fs::read_to_string(dir.path().join("status.txt")).unwrap();
    assert!(status.contains("status=failed") && status.contains("stage=preprocess"));
}

#[test]
fn sweep_reports_mean_and_std() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = small_config(dir.path());
    base.train.iterations = 30;
    let rows = run_sweep(&dgmrf::experiment::SweepConfig { base, seeds: 2, layers: vec![1, 2] }).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.runs == 2 && r.rmse.std.is_finite()));
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.contains("rmse_mean") && header.contains("rmse_std"));
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("reference.json").exists());
}
