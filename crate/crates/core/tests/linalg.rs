//! Spectral primitives checked against a Jacobi eigenvalue oracle and
//! closed-form principal angles.

mod common;

use common::{gaussian, jacobi_eigenvalues, orthogonal};
use mmcl_core::linalg::{self, Mat, Subspace};
use proptest::prelude::*;

fn span(d: usize, cols: &[Vec<f64>]) -> Subspace {
    let m = Mat::from_fn(d, cols.len(), |i, j| cols[j][i]);
    Subspace::from_span(&m).unwrap()
}

#[test]
fn identity_singular_values() {
    let s = linalg::svd(&Mat::identity(3)).unwrap();
    assert_eq!(s.s, vec![1.0, 1.0, 1.0]);
}

#[test]
fn diagonal_svd_has_canonical_vectors() {
    let s = linalg::svd(&Mat::from_diag(&[3.0, 2.0, 1.0])).unwrap();
    assert_eq!(s.s, vec![3.0, 2.0, 1.0]);
    assert!(s.u.max_abs_diff(&Mat::identity(3)) < 1e-14);
    assert!(s.v.max_abs_diff(&Mat::identity(3)) < 1e-14);
}

#[test]
fn random_svd_matches_gram_eigenvalues() {
    let a = gaussian(5, 4, 11);
    let s = linalg::svd(&a).unwrap();
    assert!(s.reconstruct().max_abs_diff(&a) < 1e-10);
    let mut eig = jacobi_eigenvalues(&a.t_matmul(&a));
    eig.sort_by(|x, y| y.total_cmp(x));
    for (sv, ev) in s.s.iter().zip(&eig) {
        assert!(
            (sv * sv - ev).abs() < 1e-10 * eig[0].max(1.0),
            "{sv}² vs {ev}"
        );
    }
}

#[test]
fn singular_vectors_follow_sign_convention() {
    let s = linalg::svd(&gaussian(6, 5, 3)).unwrap();
    for j in 0..s.s.len() {
        let col = s.v.col(j);
        let (mut best, mut idx) = (0.0, 0);
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best + 1e-15 {
                best = v.abs();
                idx = i;
            }
        }
        assert!(col[idx] >= 0.0);
    }
}

#[test]
fn truncation_examples() {
    let d = Mat::from_diag(&[3.0, 2.0, 1.0]);
    assert!(linalg::svd_top_r(&d, 3).unwrap().max_abs_diff(&d) < 1e-14);
    assert!(
        linalg::svd_top_r(&d, 1)
            .unwrap()
            .max_abs_diff(&Mat::from_diag(&[3.0, 0.0, 0.0]))
            < 1e-14
    );
    assert!(linalg::svd_top_r(&d, 0).is_err());
    assert!(linalg::svd_top_r(&d, 4).is_err());

    let a = gaussian(6, 5, 8);
    let full = linalg::svd(&a).unwrap();
    let err = a.sub(&linalg::svd_top_r(&a, 2).unwrap()).frobenius_norm();
    let tail: f64 = full.s[2..].iter().map(|s| s * s).sum::<f64>().sqrt();
    assert!((err - tail).abs() < 1e-10);
}

#[test]
fn right_subspace_examples() {
    let d = Mat::from_diag(&[3.0, 2.0, 1.0]);
    let sub = linalg::right_singular_subspace(&d, 2).unwrap();
    let expect = span(3, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
    assert!(linalg::sin_theta(&sub, &expect).unwrap() < 1e-12);
    assert!(!sub.degenerate);

    let u = orthogonal(4, 3, 21);
    let v = orthogonal(3, 3, 22);
    let a = u.matmul(&Mat::from_diag(&[5.0, 4.0, 0.1])).matmul_t(&v);
    let sub = linalg::right_singular_subspace(&a, 2).unwrap();
    let target = Subspace::new(v.select_cols(&[0, 1])).unwrap();
    assert!(linalg::sin_theta(&sub, &target).unwrap() < 1e-9);

    let zero = linalg::right_singular_subspace(&Mat::zeros(3, 3), 1).unwrap();
    assert!(zero.degenerate);
}

#[test]
fn sin_theta_examples() {
    let e1 = span(3, &[vec![1.0, 0.0, 0.0]]);
    let e2 = span(3, &[vec![0.0, 1.0, 0.0]]);
    let diag = span(3, &[vec![1.0, 1.0, 0.0]]);
    assert!(linalg::sin_theta(&e1, &e1).unwrap() < 1e-15);
    assert!((linalg::sin_theta(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
    assert!((linalg::sin_theta(&e1, &diag).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn sin_theta_rejects_mismatched_shapes() {
    let a = span(3, &[vec![1.0, 0.0, 0.0]]);
    let b = span(4, &[vec![1.0, 0.0, 0.0, 0.0]]);
    assert!(linalg::sin_theta(&a, &b).is_err());
}

#[test]
fn effective_rank_examples() {
    assert!((linalg::effective_rank(&Mat::identity(7)).unwrap() - 7.0).abs() < 1e-12);
    assert!(
        (linalg::effective_rank(&Mat::from_diag(&[1.0, 0.0, 0.0])).unwrap() - 1.0).abs() < 1e-12
    );
    assert!(
        (linalg::effective_rank(&Mat::from_diag(&[4.0, 2.0, 2.0])).unwrap() - 2.0).abs() < 1e-12
    );
    assert!(linalg::effective_rank(&Mat::zeros(2, 2)).is_err());
    assert!(linalg::effective_rank(&Mat::zeros(2, 3)).is_err());
}

#[test]
fn symmetric_eigen_matches_jacobi() {
    let g = gaussian(6, 6, 4);
    let a = g.add(&g.transpose());
    let (vals, vecs) = linalg::sym_eigen(&a).unwrap();
    let mut oracle = jacobi_eigenvalues(&a);
    oracle.sort_by(|x, y| y.total_cmp(x));
    for (v, o) in vals.iter().zip(&oracle) {
        assert!((v - o).abs() < 1e-10);
    }
    let rebuilt = vecs.matmul(&Mat::from_diag(&vals)).matmul_t(&vecs);
    assert!(rebuilt.max_abs_diff(&a) < 1e-10);
}

#[test]
fn eckart_young_against_random_low_rank() {
    for t in 0..200u64 {
        let (m, n) = (3 + (t % 4) as usize, 3 + (t % 3) as usize);
        let r = 1 + (t % 2) as usize;
        let a = gaussian(m, n, 1000 + t);
        let best = a.sub(&linalg::svd_top_r(&a, r).unwrap()).frobenius_norm();
        for c in 0..50u64 {
            let b =
                gaussian(m, r, 50_000 + 100 * t + c).matmul(&gaussian(r, n, 90_000 + 100 * t + c));
            assert!(best <= a.sub(&b).frobenius_norm() + 1e-12);
        }
    }
}

fn seeds() -> impl Strategy<Value = u64> {
    any::<u64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sin_theta_is_symmetric_and_bounded(s1 in seeds(), s2 in seeds(), d in 3usize..8, r in 1usize..3) {
        let a = Subspace::new(orthogonal(d, r, s1)).unwrap();
        let b = Subspace::new(orthogonal(d, r, s2)).unwrap();
        let ab = linalg::sin_theta(&a, &b).unwrap();
        let ba = linalg::sin_theta(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-10);
        prop_assert!(ab >= 0.0 && ab <= (r as f64).sqrt() + 1e-12);
    }

    #[test]
    fn sin_theta_ignores_basis_rotation(s1 in seeds(), s2 in seeds(), sq in seeds()) {
        let (d, r) = (6, 2);
        let u1 = orthogonal(d, r, s1);
        let q = orthogonal(r, r, sq);
        let a = Subspace::new(u1.clone()).unwrap();
        let aq = Subspace::new(u1.matmul(&q)).unwrap();
        let b = Subspace::new(orthogonal(d, r, s2)).unwrap();
        let lhs = linalg::sin_theta(&aq, &b).unwrap();
        let rhs = linalg::sin_theta(&a, &b).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn right_subspace_ignores_left_rotation(sa in seeds(), sq in seeds()) {
        let a = gaussian(5, 4, sa);
        let sv = linalg::svd(&a).unwrap().s;
        prop_assume!(sv[1] - sv[2] > 0.05);
        let q = orthogonal(5, 5, sq);
        let p = linalg::right_singular_subspace(&a, 2).unwrap();
        let pq = linalg::right_singular_subspace(&q.matmul(&a), 2).unwrap();
        prop_assert!(linalg::sin_theta(&p, &pq).unwrap() < 1e-9);
    }

    #[test]
    fn svd_reconstructs(seed in seeds(), m in 1usize..7, n in 1usize..7) {
        let a = gaussian(m, n, seed);
        let s = linalg::svd(&a).unwrap();
        prop_assert!(s.reconstruct().max_abs_diff(&a) < 1e-10);
        prop_assert!(s.s.windows(2).all(|w| w[0] >= w[1]));
    }
}
