//! Plain-text graph, node-vector, mask and point files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ObservationMask, SparseGraph};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

/// Parses an edge list: `u v` or `u v w` per line, `#` starts a comment.
pub fn parse_edge_list<T: Scalar>(text: &str, source: &Path, n_nodes: usize) -> Result<SparseGraph<T>> {
    let mut edges = Vec::new();
    for (line, l) in content_lines(text) {
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::parse(source, line, format!("expected 2 or 3 fields, got {}", fields.len())));
        }
        let id = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(source, line, format!("bad node id {s:?}")))
        };
        let (u, v) = (id(fields[0])?, id(fields[1])?);
        let w = match fields.get(2) {
            Some(s) => s
                .parse::<T>()
                .map_err(|_| Error::parse(source, line, format!("bad weight {s:?}")))?,
            None => T::one(),
        };
        for x in [u, v] {
            if x >= n_nodes {
                return Err(Error::NodeOutOfBounds { id: x, n: n_nodes });
            }
        }
        edges.push((u, v, w));
    }
    SparseGraph::from_edges(n_nodes, edges)
}

pub fn load_edge_list<T: Scalar>(path: impl AsRef<Path>, n_nodes: usize) -> Result<SparseGraph<T>> {
    let path = path.as_ref();
    parse_edge_list(&read(path)?, path, n_nodes)
}

/// Writes each undirected edge once as `u v w`.
pub fn write_edge_list<T: Scalar>(path: impl AsRef<Path>, g: &SparseGraph<T>) -> Result<()> {
    let mut s = format!("# nodes {}\n", g.n_nodes());
    for (i, j, w) in g.edges() {
        let _ = writeln!(s, "{i} {j} {w}");
    }
    write(path.as_ref(), &s)
}

pub fn read_node_vector<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    content_lines(&read(path)?)
        .map(|(line, l)| {
            l.parse::<T>()
                .map_err(|_| Error::parse(path, line, format!("bad value {l:?}")))
        })
        .collect()
}

pub fn write_node_vector<T: Scalar>(path: impl AsRef<Path>, v: &[T]) -> Result<()> {
    let mut s = String::with_capacity(v.len() * 20);
    for x in v {
        let _ = writeln!(s, "{x}");
    }
    write(path.as_ref(), &s)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<ObservationMask> {
    let path = path.as_ref();
    let observed = content_lines(&read(path)?)
        .map(|(line, l)| match l {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            _ => Err(Error::parse(path, line, format!("bad mask entry {l:?}"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    ObservationMask::new(observed)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &ObservationMask) -> Result<()> {
    let s: String = mask
        .as_slice()
        .iter()
        .map(|&b| if b { "1\n" } else { "0\n" })
        .collect();
    write(path.as_ref(), &s)
}

pub fn write_points_csv(path: impl AsRef<Path>, points: &[[f64; 2]]) -> Result<()> {
    let mut s = String::from("id,x,y\n");
    for (i, p) in points.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{}", p[0], p[1]);
    }
    write(path.as_ref(), &s)
}

pub fn read_points_csv(path: impl AsRef<Path>) -> Result<Vec<[f64; 2]>> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut points = Vec::new();
    for (line, l) in content_lines(&text).skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("bad coordinate {s:?}")))
        };
        if f.len() != 3 {
            return Err(Error::parse(path, line, "expected id,x,y"));
        }
        points.push([parse(f[1])?, parse(f[2])?]);
    }
    Ok(points)
}
