//! Shared fixtures and independent numerical oracles for the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use mmcl_core::datagen::seeded_rng;
use mmcl_core::linalg::Mat;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = seeded_rng(seed);
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// `d × r` matrix with orthonormal columns by modified Gram-Schmidt on a
/// Gaussian draw.
pub fn orthogonal(d: usize, r: usize, seed: u64) -> Mat {
    let g = gaussian(d, r, seed);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for j in 0..r {
        let mut v = g.col(j);
        for c in &cols {
            let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(c) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        cols.push(v.into_iter().map(|x| x / norm).collect());
    }
    Mat::from_fn(d, r, |i, j| cols[j][i])
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &Mat) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// `G1ᵀG2` written with explicit loops.
pub fn product_loops(g1: &Mat, g2: &Mat) -> Mat {
    Mat::from_fn(g1.cols(), g2.cols(), |a, b| {
        (0..g1.rows()).map(|k| g1[(k, a)] * g2[(k, b)]).sum()
    })
}

pub fn rel_err(a: &Mat, reference: &Mat) -> f64 {
    a.sub(reference).frobenius_norm() / reference.frobenius_norm()
}
