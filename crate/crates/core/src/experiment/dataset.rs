use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::graph::{
    load_edge_list, read_mask, read_node_vector, read_points_csv, write_edge_list, write_mask, write_node_vector,
    write_points_csv, ObservationMask, SparseGraph,
};
use crate::kv::{KvFile, KvWriter};
use crate::scalar::Scalar;

const META_HEADER: &str = "dgmrf-dataset v1";

/// How a dataset was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recipe {
    /// Sample from a DGMRF with fixed layers on a Delaunay graph.
    Dgmrf,
    /// One-layer DGMRF on the 3-hop graph of a Delaunay graph.
    Dense,
    /// GMRF with precision `sum_i G_i^T G_i`, `G_i` on the `i`-hop graph.
    Mix,
    /// Loaded from user files; no ground truth.
    External,
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Recipe::Dgmrf => "dgmrf",
            Recipe::Dense => "dense",
            Recipe::Mix => "mix",
            Recipe::External => "external",
        })
    }
}

impl FromStr for Recipe {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dgmrf" => Ok(Recipe::Dgmrf),
            "dense" => Ok(Recipe::Dense),
            "mix" => Ok(Recipe::Mix),
            "external" => Ok(Recipe::External),
            other => Err(Error::Validation(format!("unknown recipe '{other}' (dgmrf, dense, mix, external)"))),
        }
    }
}

/// Generation record of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub recipe: Recipe,
    pub seed: u64,
    /// Layers of the generating DGMRF (0 when not applicable).
    pub true_layers: usize,
    pub noise_std: f64,
    pub unobserved_fraction: f64,
    /// `(alpha, beta)` of every generating layer or mixture component.
    pub true_coefficients: Vec<(f64, f64)>,
}

/// Latent field and, when affordable, the exact posterior under the true model.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth<T> {
    pub x: Vec<T>,
    pub posterior_mean: Option<Vec<T>>,
    pub posterior_std: Option<Vec<T>>,
}

#[derive(Clone, Debug)]
pub struct Dataset<T> {
    pub graph: SparseGraph<T>,
    pub points: Option<Vec<[f64; 2]>>,
    /// Observations on every node; only the observed ones are used for fitting.
    pub y: Vec<T>,
    pub mask: ObservationMask,
    pub truth: Option<Truth<T>>,
    pub provenance: Provenance,
}

fn opt_vec<T: Scalar>(path: &Path) -> Result<Option<Vec<T>>> {
    if path.exists() {
        read_node_vector(path).map(Some)
    } else {
        Ok(None)
    }
}

impl<T: Scalar> Dataset<T> {
    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        check_len(n, self.y.len())?;
        check_len(n, self.mask.len())?;
        if self.mask.observed_indices().any(|i| !self.y[i].is_finite()) {
            return Err(Error::Validation("y must be finite on observed nodes".into()));
        }
        if let Some(t) = &self.truth {
            check_len(n, t.x.len())?;
            for v in [&t.posterior_mean, &t.posterior_std].into_iter().flatten() {
                check_len(n, v.len())?;
            }
        }
        if (self.provenance.recipe == Recipe::External) != self.truth.is_none() {
            return Err(Error::Validation("ground truth must be present exactly for synthetic data".into()));
        }
        Ok(())
    }

    /// Writes `graph.txt`, `y.txt`, `mask.txt`, `meta.txt` and, when present,
    /// `points.csv`, `x.txt`, `true_mean.txt`, `true_std.txt` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_edge_list(dir.join("graph.txt"), &self.graph)?;
        write_node_vector(dir.join("y.txt"), &self.y)?;
        write_mask(dir.join("mask.txt"), &self.mask)?;
        if let Some(p) = &self.points {
            write_points_csv(dir.join("points.csv"), p)?;
        }
        if let Some(t) = &self.truth {
            write_node_vector(dir.join("x.txt"), &t.x)?;
            if let Some(m) = &t.posterior_mean {
                write_node_vector(dir.join("true_mean.txt"), m)?;
            }
            if let Some(s) = &t.posterior_std {
                write_node_vector(dir.join("true_std.txt"), s)?;
            }
        }
        let p = &self.provenance;
        let mut w = KvWriter::new(META_HEADER);
        w.put("recipe", p.recipe)
            .put("n", self.n_nodes())
            .put("seed", p.seed)
            .put("true_layers", p.true_layers)
            .put("noise_std", p.noise_std)
            .put("unobserved_fraction", p.unobserved_fraction)
            .put("graph_hash", self.graph.content_hash());
        let (a, b): (Vec<f64>, Vec<f64>) = p.true_coefficients.iter().copied().unzip();
        w.put_vec("true_alpha", &a).put_vec("true_beta", &b);
        w.save(dir.join("meta.txt"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta = KvFile::load(dir.join("meta.txt"))?;
        let n: usize = meta.require("n")?;
        let graph = load_edge_list(dir.join("graph.txt"), n)?;
        let hash: String = meta.require("graph_hash")?;
        if hash != graph.content_hash() {
            return Err(Error::Validation(format!("graph in {} does not match its recorded hash", dir.display())));
        }
        let recipe: Recipe = meta.require("recipe")?;
        let a: Vec<f64> = meta.get_vec("true_alpha")?.unwrap_or_default();
        let b: Vec<f64> = meta.get_vec("true_beta")?.unwrap_or_default();
        check_len(a.len(), b.len())?;
        let points_path = dir.join("points.csv");
        let points = if points_path.exists() { Some(read_points_csv(points_path)?) } else { None };
        let truth = match opt_vec(&dir.join("x.txt"))? {
            Some(x) => Some(Truth {
                x,
                posterior_mean: opt_vec(&dir.join("true_mean.txt"))?,
                posterior_std: opt_vec(&dir.join("true_std.txt"))?,
            }),
            None => None,
        };
        let ds = Dataset {
            graph,
            points,
            y: read_node_vector(dir.join("y.txt"))?,
            mask: read_mask(dir.join("mask.txt"))?,
            truth,
            provenance: Provenance {
                recipe,
                seed: meta.require("seed")?,
                true_layers: meta.get_or("true_layers", 0)?,
                noise_std: meta.get_or("noise_std", f64::NAN)?,
                unobserved_fraction: meta.get_or("unobserved_fraction", f64::NAN)?,
                true_coefficients: a.into_iter().zip(b).collect(),
            },
        };
        ds.validate()?;
        Ok(ds)
    }

    /// A dataset from user-supplied files; `n` is taken from the length of `y`.
    pub fn from_files(graph: impl AsRef<Path>, y: impl AsRef<Path>, mask: impl AsRef<Path>) -> Result<Self> {
        let y: Vec<T> = read_node_vector(y)?;
        let mask = read_mask(mask)?;
        let graph = load_edge_list(graph, y.len())?;
        let unobserved = 1.0 - mask.m_count() as f64 / mask.len().max(1) as f64;
        let ds = Dataset {
            graph,
            points: None,
            y,
            mask,
            truth: None,
            provenance: Provenance {
                recipe: Recipe::External,
                seed: 0,
                true_layers: 0,
                noise_std: f64::NAN,
                unobserved_fraction: unobserved,
                true_coefficients: Vec::new(),
            },
        };
        ds.validate()?;
        Ok(ds)
    }
}
