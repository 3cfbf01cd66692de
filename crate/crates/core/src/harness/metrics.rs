//! Evaluation metrics and the reference bound curve.

use std::collections::{BTreeSet, HashMap};

use crate::datagen::LabeledBipartite;
use crate::error::{MmclError, Result};
use crate::losses::{self, EncoderPair};
use crate::solvers::EdgeEstimate;

/// Cross-modal retrieval accuracy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accuracy {
    pub value: f64,
    /// Every left item saw identical similarities to all right items, so
    /// the prediction came from tie-breaking alone.
    pub degenerate: bool,
}

/// For each left test item, predict the most similar right item (lowest
/// index on ties) and score whether the cluster labels agree.
pub fn downstream_accuracy(enc: &EncoderPair, test: &LabeledBipartite) -> Result<Accuracy> {
    if test.x.rows() == 0 || test.xt.rows() == 0 {
        return Err(MmclError::InvalidInput("empty test set".into()));
    }
    let sims = losses::similarity_matrix(enc, &test.x, &test.xt)?;
    let mut hits = 0usize;
    let mut flat_rows = 0usize;
    for i in 0..sims.rows() {
        let row = sims.row(i);
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        if row.iter().all(|&v| v == row[0]) {
            flat_rows += 1;
        }
        if test.labels_xt[best] == test.labels_x[i] {
            hits += 1;
        }
    }
    Ok(Accuracy {
        value: hits as f64 / sims.rows() as f64,
        degenerate: flat_rows == sims.rows(),
    })
}

/// Set precision and recall of predicted pairs against the truth.
/// Precision of an empty prediction and recall against an empty truth are 0.
pub fn precision_recall(predicted: &[(usize, usize)], truth: &[(usize, usize)]) -> (f64, f64) {
    let truth: BTreeSet<_> = truth.iter().copied().collect();
    let predicted: BTreeSet<_> = predicted.iter().copied().collect();
    let hits = predicted.intersection(&truth).count() as f64;
    let precision = if predicted.is_empty() {
        0.0
    } else {
        hits / predicted.len() as f64
    };
    let recall = if truth.is_empty() {
        0.0
    } else {
        hits / truth.len() as f64
    };
    (precision, recall)
}

pub fn edge_metrics(est: &EdgeEstimate, truth: &[(usize, usize)]) -> (f64, f64) {
    precision_recall(&est.edges, truth)
}

/// Shape of the distortion-robust recovery bound with its constant set to one:
/// `min(√r, η⁻¹ sqrt(r (r + r(Σξ) + r(Σξ̃)) log(n + d1 + d2) / n))`.
pub fn theory_bound(
    n: usize,
    r: usize,
    eff_xi: f64,
    eff_xit: f64,
    d1: usize,
    d2: usize,
    eta: f64,
) -> f64 {
    let rf = r as f64;
    let cap = rf.sqrt();
    if eta <= 0.0 {
        return cap;
    }
    let inner = rf * (rf + eff_xi + eff_xit) * ((n + d1 + d2) as f64).ln() / n as f64;
    cap.min(inner.sqrt() / eta)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len() as f64;
    let choose2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut ca: HashMap<usize, f64> = HashMap::new();
    let mut cb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *ca.entry(x).or_default() += 1.0;
        *cb.entry(y).or_default() += 1.0;
    }
    let index: f64 = joint.values().map(|&v| choose2(v)).sum();
    let sa: f64 = ca.values().map(|&v| choose2(v)).sum();
    let sb: f64 = cb.values().map(|&v| choose2(v)).sum();
    let expected = sa * sb / choose2(n);
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < 1e-15 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Linear-interpolation quantile of a sample (`q ∈ [0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}
