//! Random planar graphs from incremental (Bowyer–Watson) Delaunay triangulation.
//!
//! Points that fall exactly on an existing circumcircle are treated as
//! outside it, so cocircular ties are resolved by insertion order. The
//! insertion order is the sampling order, so tie resolution is seed-dependent.

use std::collections::HashSet;

use rand::Rng;

use super::SparseGraph;
use crate::error::{Error, Result};
use crate::linalg::rng::{Purpose, SeedStreams};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelaunayConfig {
    /// Weight edges by `1 / (distance + epsilon)` instead of 1.
    pub inverse_distance_weights: bool,
    pub epsilon: f64,
}

impl Default for DelaunayConfig {
    fn default() -> Self {
        DelaunayConfig {
            inverse_distance_weights: false,
            epsilon: 1e-6,
        }
    }
}

/// A graph together with the planar positions it was built from.
#[derive(Clone, Debug)]
pub struct PlaneGraph<T> {
    pub graph: SparseGraph<T>,
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Copy)]
struct Triangle {
    v: [usize; 3],
    center: [f64; 2],
    radius2: f64,
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

impl Triangle {
    fn new(pts: &[[f64; 2]], mut v: [usize; 3]) -> Self {
        if orient(pts[v[0]], pts[v[1]], pts[v[2]]) < 0.0 {
            v.swap(1, 2);
        }
        let [a, b, c] = [pts[v[0]], pts[v[1]], pts[v[2]]];
        let (bx, by) = (b[0] - a[0], b[1] - a[1]);
        let (cx, cy) = (c[0] - a[0], c[1] - a[1]);
        let d = 2.0 * (bx * cy - by * cx);
        let b2 = bx * bx + by * by;
        let c2 = cx * cx + cy * cy;
        let ux = (cy * b2 - by * c2) / d;
        let uy = (bx * c2 - cx * b2) / d;
        Triangle {
            v,
            center: [a[0] + ux, a[1] + uy],
            radius2: ux * ux + uy * uy,
        }
    }

    fn circumcircle_contains(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        dx * dx + dy * dy < self.radius2
    }
}

/// Edges `(i, j)`, `i < j`, of the Delaunay triangulation of `points`, sorted.
///
/// Returns an error when the points are all collinear or a point cannot be
/// inserted (exact duplicates).
pub fn delaunay_edges(points: &[[f64; 2]]) -> Result<Vec<(usize, usize)>> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Validation("triangulation needs at least 3 points".into()));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let mut pts = points.to_vec();
    pts.push([mid[0] - 1.0e4 * span, mid[1] - 0.8e4 * span]);
    pts.push([mid[0] + 1.0e4 * span, mid[1] - 0.8e4 * span]);
    pts.push([mid[0], mid[1] + 1.0e4 * span]);

    let mut tris = vec![Triangle::new(&pts, [n, n + 1, n + 2])];
    let mut bad_edges: HashSet<(usize, usize)> = HashSet::new();
    for (pi, &p) in points.iter().enumerate() {
        bad_edges.clear();
        let mut any_bad = false;
        tris.retain(|t| {
            if t.circumcircle_contains(p) {
                any_bad = true;
                for k in 0..3 {
                    bad_edges.insert((t.v[k], t.v[(k + 1) % 3]));
                }
                false
            } else {
                true
            }
        });
        if !any_bad {
            return Err(Error::Validation(format!("point {pi} could not be inserted (duplicate?)")));
        }
        // cavity boundary: bad-triangle edges whose reverse is not also a bad edge
        let mut boundary: Vec<(usize, usize)> = bad_edges
            .iter()
            .copied()
            .filter(|&(a, b)| !bad_edges.contains(&(b, a)))
            .collect();
        boundary.sort_unstable();
        for (a, b) in boundary {
            tris.push(Triangle::new(&pts, [a, b, pi]));
        }
    }

    let mut edges: Vec<(usize, usize)> = tris
        .iter()
        .filter(|t| t.v.iter().all(|&v| v < n))
        .flat_map(|t| {
            (0..3).map(move |k| {
                let (a, b) = (t.v[k], t.v[(k + 1) % 3]);
                (a.min(b), a.max(b))
            })
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    if edges.is_empty() {
        return Err(Error::Validation("points are collinear".into()));
    }
    Ok(edges)
}

fn sample_points(n: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()
}

fn nondegenerate(points: &[[f64; 2]]) -> bool {
    let a = points[0];
    let b = points[1];
    points[2..].iter().any(|&c| orient(a, b, c).abs() > 1e-12)
}

/// `n` points uniform on the unit square, connected by their Delaunay
/// triangulation. Deterministic for a fixed seed.
pub fn generate_delaunay_graph<T: Scalar>(
    n: usize,
    seed: u64,
    config: &DelaunayConfig,
) -> Result<PlaneGraph<T>> {
    if n < 3 {
        return Err(Error::Validation("Delaunay graph needs n >= 3".into()));
    }
    let streams = SeedStreams::new(seed);
    for attempt in 0..64u64 {
        let points = sample_points(n, &mut streams.rng(Purpose::GraphPoints, attempt));
        if !nondegenerate(&points) {
            continue;
        }
        let Ok(edges) = delaunay_edges(&points) else {
            continue;
        };
        let weighted = edges.iter().map(|&(i, j)| {
            let w = if config.inverse_distance_weights {
                let d = ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt();
                1.0 / (d + config.epsilon)
            } else {
                1.0
            };
            (i, j, T::lit(w))
        });
        let graph = SparseGraph::from_edges(n, weighted)?;
        return Ok(PlaneGraph { graph, points });
    }
    Err(Error::Numeric("could not sample a non-degenerate point set".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Every triangle whose circumcircle is empty of the other points.
    fn brute_force_edges(p: &[[f64; 2]]) -> Vec<(usize, usize)> {
        let n = p.len();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    if orient(p[i], p[j], p[k]).abs() < 1e-14 {
                        continue;
                    }
                    let t = Triangle::new(p, [i, j, k]);
                    if (0..n)
                        .filter(|&m| m != i && m != j && m != k)
                        .all(|m| !t.circumcircle_contains(p[m]))
                    {
                        edges.extend([(i, j), (j, k), (i, k)]);
                    }
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    #[test]
    fn triangle_has_three_edges() {
        let e = delaunay_edges(&[[0.0, 0.0], [1.0, 0.0], [0.3, 0.8]]).unwrap();
        assert_eq!(e, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn convex_quadrilateral_has_five_edges() {
        let p = [[0.0, 0.0], [1.0, 0.1], [1.1, 0.9], [0.05, 1.2]];
        let e = delaunay_edges(&p).unwrap();
        assert_eq!(e.len(), 5);
        assert_eq!(e, brute_force_edges(&p));
    }

    #[test]
    fn matches_brute_force_on_random_sets() {
        for seed in 0..20 {
            let pts = sample_points(25 + seed as usize, &mut SeedStreams::new(seed).rng(Purpose::GraphPoints, 0));
            assert_eq!(delaunay_edges(&pts).unwrap(), brute_force_edges(&pts), "seed {seed}");
        }
    }

    #[test]
    fn collinear_points_are_rejected() {
        assert!(delaunay_edges(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).is_err());
    }

    #[test]
    fn large_graph_is_planar_and_deterministic() {
        let g = generate_delaunay_graph::<f64>(3000, 5, &DelaunayConfig::default()).unwrap();
        assert!(g.graph.n_edges() <= 3 * 3000 - 6);
        assert!(g.graph.n_edges() > 2 * 3000);
        let again = generate_delaunay_graph::<f64>(3000, 5, &DelaunayConfig::default()).unwrap();
        assert_eq!(g.graph, again.graph);
    }

    #[test]
    fn inverse_distance_weights() {
        let cfg = DelaunayConfig {
            inverse_distance_weights: true,
            epsilon: 1e-6,
        };
        let g = generate_delaunay_graph::<f64>(3, 1, &cfg).unwrap();
        for (i, j, w) in g.graph.edges() {
            let (a, b) = (g.points[i], g.points[j]);
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            assert!((w - 1.0 / (d + 1e-6)).abs() < 1e-9 * w);
        }
    }
}
