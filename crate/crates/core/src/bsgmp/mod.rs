//! Bipartite spectral graph multi-partitioning.
//!
//! A noisy many-to-many correspondence is cleaned by embedding both node
//! sets with singular vectors of the degree-normalized adjacency
//! `A_n = D1^{-1/2} A D2^{-1/2}`, clustering all nodes jointly with k-means
//! and dropping every edge whose endpoints land in different clusters.
//!
//! With `l = ⌈log2 k⌉`, the embedding uses singular pairs `2..l+1` of `A_n`
//! scaled back by the degrees:
//!
//! ```text
//! Z = [ D1^{-1/2} U ]
//!     [ D2^{-1/2} V ]
//! ```
//!
//! The leading pair of `A_n` is always `(D1^{1/2} 1, D2^{1/2} 1)/√|E|` with
//! singular value one. It is removed explicitly before the decomposition,
//! which keeps the selection well defined when that value is repeated, as
//! happens for disconnected graphs. k-means runs on the rows of `Z`, one row
//! per node.

pub mod kmeans;

use std::collections::HashSet;
use std::path::Path;

use serde::Serialize;

use crate::error::{MmclError, Result};
use crate::io;
use crate::linalg::{self, Mat};

/// Default number of k-means restarts.
pub const DEFAULT_RESTARTS: usize = 10;

/// Many-to-many edge list over two node sets.
#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteGraph {
    pub n_left: usize,
    pub n_right: usize,
    pub edges: Vec<(usize, usize)>,
    /// Optional nonnegative weight per edge; unit weights when absent.
    pub weights: Option<Vec<f64>>,
}

impl BipartiteGraph {
    pub fn new(
        n_left: usize,
        n_right: usize,
        edges: Vec<(usize, usize)>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if let Some(e) = edges.iter().find(|&&(i, j)| i >= n_left || j >= n_right) {
            return Err(MmclError::InvalidInput(format!(
                "edge {e:?} out of range for a {n_left}x{n_right} graph"
            )));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        if let Some(e) = edges.iter().find(|e| !seen.insert(**e)) {
            return Err(MmclError::InvalidInput(format!("duplicate edge {e:?}")));
        }
        if let Some(w) = &weights {
            if w.len() != edges.len() {
                return Err(MmclError::InvalidInput(
                    "one weight per edge is required".into(),
                ));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(MmclError::InvalidInput(
                    "edge weights must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(BipartiteGraph {
            n_left,
            n_right,
            edges,
            weights,
        })
    }

    fn weight(&self, e: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[e])
    }

    /// Weighted degrees of the left and right nodes.
    pub fn degrees(&self) -> (Vec<f64>, Vec<f64>) {
        let mut d1 = vec![0.0; self.n_left];
        let mut d2 = vec![0.0; self.n_right];
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            let w = self.weight(e);
            d1[i] += w;
            d2[j] += w;
        }
        (d1, d2)
    }

    /// Numbers of zero-degree nodes on the left and right.
    pub fn zero_degree_counts(&self) -> (usize, usize) {
        let (d1, d2) = self.degrees();
        (
            d1.iter().filter(|&&d| d == 0.0).count(),
            d2.iter().filter(|&&d| d == 0.0).count(),
        )
    }

    pub fn adjacency(&self) -> Mat {
        let mut a = Mat::zeros(self.n_left, self.n_right);
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            a[(i, j)] += self.weight(e);
        }
        a
    }

    /// Reads `i,j[,weight]` records. A header row is detected when its
    /// first field is not numeric; a third column is used as the weight only
    /// when its header is `weight`. Node counts default to one past the
    /// largest index.
    pub fn read_csv(path: &Path, n_left: Option<usize>, n_right: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(path)?;
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        let mut weighted = false;
        let mut headerless_weight = false;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let first = rec.get(0).unwrap_or("").trim();
            if row == 0 && first.parse::<usize>().is_err() {
                weighted = rec.get(2).map(|h| h.trim() == "weight").unwrap_or(false);
                continue;
            }
            if row == 0 && rec.len() >= 3 {
                headerless_weight = true;
            }
            let field = |k: usize| -> Result<&str> {
                rec.get(k).map(str::trim).ok_or_else(|| {
                    MmclError::InvalidInput(format!("{}: short record {}", path.display(), row + 1))
                })
            };
            let parse_idx = |s: &str| {
                s.parse::<usize>().map_err(|e| {
                    MmclError::InvalidInput(format!("{}: record {}: {e}", path.display(), row + 1))
                })
            };
            edges.push((parse_idx(field(0)?)?, parse_idx(field(1)?)?));
            if weighted || headerless_weight {
                let w = field(2)?.parse::<f64>().map_err(|e| {
                    MmclError::InvalidInput(format!("{}: record {}: {e}", path.display(), row + 1))
                })?;
                weights.push(w);
            }
        }
        let nl = n_left.unwrap_or_else(|| edges.iter().map(|e| e.0 + 1).max().unwrap_or(0));
        let nr = n_right.unwrap_or_else(|| edges.iter().map(|e| e.1 + 1).max().unwrap_or(0));
        let weights = (weighted || headerless_weight).then_some(weights);
        BipartiteGraph::new(nl, nr, edges, weights)
    }
}

fn inv_sqrt(d: &[f64]) -> Vec<f64> {
    d.iter()
        .map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 })
        .collect()
}

/// `D1^{-1/2} A D2^{-1/2}`, with zero rows and columns for zero-degree nodes.
pub fn normalized_adjacency(g: &BipartiteGraph) -> Mat {
    let (d1, d2) = g.degrees();
    let (s1, s2) = (inv_sqrt(&d1), inv_sqrt(&d2));
    let mut a = g.adjacency();
    for i in 0..g.n_left {
        for (j, v) in a.row_mut(i).iter_mut().enumerate() {
            *v *= s1[i] * s2[j];
        }
    }
    a
}

/// Node embedding produced by [`spectral_embed`].
#[derive(Clone, Debug)]
pub struct Embedding {
    /// `(n_left + n_right) × l`: left nodes first, then right nodes.
    pub z: Mat,
    pub l: usize,
    /// Singular values `2..l+1` of the normalized adjacency.
    pub singular_values: Vec<f64>,
    /// The used singular values vanish or tie with the next one.
    pub degenerate: bool,
}

/// `⌈log2 k⌉`.
pub fn embedding_dim(k: usize) -> usize {
    (usize::BITS - (k - 1).leading_zeros()) as usize
}

pub fn spectral_embed(
    a_n: &Mat,
    deg_left: &[f64],
    deg_right: &[f64],
    k: usize,
) -> Result<Embedding> {
    if k < 2 {
        return Err(MmclError::InvalidK {
            k,
            reason: "at least two clusters are required".into(),
        });
    }
    let (n1, n2) = a_n.shape();
    if deg_left.len() != n1 || deg_right.len() != n2 {
        return Err(MmclError::DimensionMismatch(
            "degree vectors vs adjacency shape".into(),
        ));
    }
    let l = embedding_dim(k);
    if l + 1 > n1.min(n2) {
        return Err(MmclError::InvalidK {
            k,
            reason: format!(
                "needs {} singular vectors but the graph is {n1}x{n2}",
                l + 1
            ),
        });
    }
    let total: f64 = deg_left.iter().sum();
    let mut deflated = a_n.clone();
    if total > 0.0 {
        let u0: Vec<f64> = deg_left.iter().map(|d| (d / total).sqrt()).collect();
        let v0: Vec<f64> = deg_right.iter().map(|d| (d / total).sqrt()).collect();
        for i in 0..n1 {
            for (j, v) in deflated.row_mut(i).iter_mut().enumerate() {
                *v -= u0[i] * v0[j];
            }
        }
    }
    let dec = linalg::svd(&deflated)?;
    let s = &dec.s;
    let tol = 1e-9;
    let next = s.get(l).copied().unwrap_or(0.0);
    let degenerate = s[l - 1] <= tol || (s[l - 1] - next).abs() <= linalg::GAP_TOL;
    let (s1, s2) = (inv_sqrt(deg_left), inv_sqrt(deg_right));
    let z = Mat::from_fn(n1 + n2, l, |row, c| {
        if row < n1 {
            s1[row] * dec.u[(row, c)]
        } else {
            s2[row - n1] * dec.v[(row - n1, c)]
        }
    });
    Ok(Embedding {
        z,
        l,
        singular_values: s[..l].to_vec(),
        degenerate,
    })
}

/// Cluster assignment of both node sets and the resulting edge split.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Partition {
    pub labels_left: Vec<usize>,
    pub labels_right: Vec<usize>,
    pub k: usize,
    pub l: usize,
    pub kept_edges: Vec<(usize, usize)>,
    pub dropped_edges: Vec<(usize, usize)>,
    pub inertia: f64,
    pub degenerate: bool,
    pub zero_degree_left: usize,
    pub zero_degree_right: usize,
}

#[derive(Serialize)]
struct PartitionReport {
    k: usize,
    l: usize,
    inertia: f64,
    n_left: usize,
    n_right: usize,
    input_edges: usize,
    kept: usize,
    dropped: usize,
    degenerate: bool,
    zero_degree_left: usize,
    zero_degree_right: usize,
    seed: u64,
    restarts: usize,
}

/// Spectral embedding, k-means++ over the rows of `Z` (nodes with nonzero
/// degree), nearest-centroid labels for isolated nodes, and removal of
/// inter-cluster edges.
pub fn partition(g: &BipartiteGraph, k: usize, seed: u64, restarts: usize) -> Result<Partition> {
    let (d1, d2) = g.degrees();
    let a_n = normalized_adjacency(g);
    let emb = spectral_embed(&a_n, &d1, &d2, k)?;
    let active: Vec<usize> = d1
        .iter()
        .chain(&d2)
        .enumerate()
        .filter(|(_, &d)| d > 0.0)
        .map(|(i, _)| i)
        .collect();
    if active.len() < k {
        return Err(MmclError::InvalidK {
            k,
            reason: format!("only {} nodes have edges", active.len()),
        });
    }
    let points = emb.z.select_rows(&active);
    let km = kmeans::kmeans(&points, k, restarts, seed)?;
    let (isolated_label, _) = kmeans::nearest(&vec![0.0; emb.l], &km.centroids);
    let mut labels = vec![isolated_label; g.n_left + g.n_right];
    for (pos, &node) in active.iter().enumerate() {
        labels[node] = km.labels[pos];
    }
    let labels_right = labels.split_off(g.n_left);
    let labels_left = labels;
    let (kept_edges, dropped_edges): (Vec<_>, Vec<_>) = g
        .edges
        .iter()
        .partition(|&&(i, j)| labels_left[i] == labels_right[j]);
    let (z1, z2) = (
        d1.iter().filter(|&&d| d == 0.0).count(),
        d2.iter().filter(|&&d| d == 0.0).count(),
    );
    Ok(Partition {
        labels_left,
        labels_right,
        k,
        l: emb.l,
        kept_edges,
        dropped_edges,
        inertia: km.inertia,
        degenerate: emb.degenerate,
        zero_degree_left: z1,
        zero_degree_right: z2,
    })
}

impl Partition {
    /// Writes `labels_left.csv`, `labels_right.csv`, `kept_edges.csv` and
    /// `report.json` into `dir`.
    pub fn write_dir(&self, dir: &Path, seed: u64, restarts: usize) -> Result<()> {
        io::ensure_dir(dir)?;
        io::write_usize_column(&dir.join("labels_left.csv"), "label", &self.labels_left)?;
        io::write_usize_column(&dir.join("labels_right.csv"), "label", &self.labels_right)?;
        let mut w = csv::Writer::from_path(dir.join("kept_edges.csv"))?;
        w.write_record(["i", "j"])?;
        for &(i, j) in &self.kept_edges {
            w.write_record([i.to_string(), j.to_string()])?;
        }
        w.flush()?;
        let report = PartitionReport {
            k: self.k,
            l: self.l,
            inertia: self.inertia,
            n_left: self.labels_left.len(),
            n_right: self.labels_right.len(),
            input_edges: self.kept_edges.len() + self.dropped_edges.len(),
            kept: self.kept_edges.len(),
            dropped: self.dropped_edges.len(),
            degenerate: self.degenerate,
            zero_degree_left: self.zero_degree_left,
            zero_degree_right: self.zero_degree_right,
            seed,
            restarts,
        };
        io::write_json(&dir.join("report.json"), &report)
    }
}
