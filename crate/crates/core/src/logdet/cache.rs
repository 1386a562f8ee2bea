//! Text persistence of pre-processed spectra and traces.
//!
//! Layout: a `#` header line, `key=value` lines, then one value (eigen) or one
//! `trace std_error` pair (power series) per line. Values are written with the
//! shortest round-tripping representation so reloads are bit-identical.

use std::fmt::Write as _;
use std::path::Path;

use super::{EigPreprocess, LogdetBackend, Preprocess, TracePreprocess};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const PREPROCESS_VERSION: u32 = 1;

const MAGIC: &str = "# dgmrf-preprocess";

/// Canonical cache file name for a pre-process configuration.
pub fn cache_file_name(graph_hash: &str, backend: LogdetBackend, k: usize, n_probes: usize, seed: u64) -> String {
    match backend {
        LogdetBackend::Eigen => format!("{graph_hash}.eigen.txt"),
        LogdetBackend::PowerSeries => format!("{graph_hash}.series-k{k}-p{n_probes}-s{seed}.txt"),
    }
}

impl<T: Scalar> Preprocess<T> {
    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC} v{PREPROCESS_VERSION}\n");
        match self {
            Preprocess::Eigen(e) => {
                let _ = writeln!(s, "method=eigen");
                let _ = writeln!(s, "graph_hash={}", e.graph_hash);
                let _ = writeln!(s, "n={}", e.lambda_prime.len());
                let _ = writeln!(s, "sum_log_degrees={}", e.sum_log_degrees);
                s.push_str("data\n");
                for l in &e.lambda_prime {
                    let _ = writeln!(s, "{l}");
                }
            }
            Preprocess::PowerSeries(t) => {
                let _ = writeln!(s, "method=power_series");
                let _ = writeln!(s, "graph_hash={}", t.graph_hash);
                let _ = writeln!(s, "n={}", t.n_nodes);
                let _ = writeln!(s, "k={}", t.k());
                let _ = writeln!(s, "n_probes={}", t.n_probes);
                let _ = writeln!(s, "seed={}", t.seed);
                let _ = writeln!(s, "sum_log_degrees={}", t.sum_log_degrees);
                s.push_str("data\n");
                for (v, e) in t.traces.iter().zip(&t.std_errors) {
                    let _ = writeln!(s, "{v} {e}");
                }
            }
        }
        s
    }

    pub fn from_text(text: &str, source: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or("");
        let version = header
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().strip_prefix('v'))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| Error::parse(source, 1, "missing pre-process header"))?;
        if version != PREPROCESS_VERSION {
            return Err(Error::parse(source, 1, format!("unsupported pre-process version {version}")));
        }
        let mut kv = std::collections::HashMap::new();
        for (i, line) in lines.by_ref() {
            if line == "data" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, i + 1, "expected key=value"))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |key: &str| -> Result<&String> {
            kv.get(key)
                .ok_or_else(|| Error::parse(source, 1, format!("missing key '{key}'")))
        };
        fn num<V: std::str::FromStr>(s: &str, source: &Path, line: usize) -> Result<V> {
            s.parse()
                .map_err(|_| Error::parse(source, line, format!("invalid number '{s}'")))
        }
        let n: usize = num(get("n")?, source, 1)?;
        let graph_hash = get("graph_hash")?.clone();
        let sum_log_degrees: T = num(get("sum_log_degrees")?, source, 1)?;
        let method: LogdetBackend = get("method")?.parse()?;
        match method {
            LogdetBackend::Eigen => {
                let mut lambda_prime = Vec::with_capacity(n);
                for (i, line) in lines {
                    lambda_prime.push(num(line.trim(), source, i + 1)?);
                }
                if lambda_prime.len() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        got: lambda_prime.len(),
                    });
                }
                Ok(Preprocess::Eigen(EigPreprocess {
                    lambda_prime,
                    sum_log_degrees,
                    graph_hash,
                }))
            }
            LogdetBackend::PowerSeries => {
                let k: usize = num(get("k")?, source, 1)?;
                let mut traces = Vec::with_capacity(k);
                let mut std_errors = Vec::with_capacity(k);
                for (i, line) in lines {
                    let mut it = line.split_whitespace();
                    let (Some(t), Some(e), None) = (it.next(), it.next(), it.next()) else {
                        return Err(Error::parse(source, i + 1, "expected 'trace std_error'"));
                    };
                    traces.push(num(t, source, i + 1)?);
                    std_errors.push(num(e, source, i + 1)?);
                }
                if traces.len() != k {
                    return Err(Error::Dimension {
                        expected: k,
                        got: traces.len(),
                    });
                }
                Ok(Preprocess::PowerSeries(TracePreprocess {
                    traces,
                    std_errors,
                    n_nodes: n,
                    n_probes: num(get("n_probes")?, source, 1)?,
                    seed: num(get("seed")?, source, 1)?,
                    sum_log_degrees,
                    graph_hash,
                }))
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}
