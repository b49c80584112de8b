mod common;

use faer::{Mat, Side};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resonances::linalg::{inverse_iteration, lu_factor, norm2, SparseComplexMatrix};

fn crand(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Random sparse matrix with `per_row` off-diagonal entries per row and a
/// diagonal scaled by `diag`.
fn random_sparse(n: usize, per_row: usize, diag: f64, seed: u64) -> SparseComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::new();
    for i in 0..n {
        for _ in 0..per_row {
            let j = rng.random_range(0..n);
            t.push((i, j, crand(&mut rng)));
        }
        t.push((i, i, diag * crand(&mut rng) + Complex64::new(diag, 0.0)));
    }
    SparseComplexMatrix::from_triplets(n, t).unwrap()
}

#[test]
fn diagonally_dominant_residual() {
    let a = random_sparse(500, 6, 20.0, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let b: Vec<_> = (0..500).map(|_| crand(&mut rng)).collect();
    let x = lu_factor(&a).unwrap().solve(&b).unwrap();
    let r: Vec<_> = a.mul_vec(&x).unwrap().iter().zip(&b).map(|(p, q)| p - q).collect();
    assert!(norm2(&r) <= 1e-12 * norm2(&b), "{}", norm2(&r) / norm2(&b));
}

#[test]
fn matches_dense_elimination() {
    let a = random_sparse(200, 10, 1.0, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let b: Vec<_> = (0..200).map(|_| crand(&mut rng)).collect();
    let x = lu_factor(&a).unwrap().solve(&b).unwrap();
    let y = common::dense::solve(&a.to_dense(), &b);
    let d: Vec<_> = x.iter().zip(&y).map(|(p, q)| p - q).collect();
    assert!(norm2(&d) <= 1e-10 * norm2(&y), "{}", norm2(&d) / norm2(&y));
}

#[test]
fn multiple_right_hand_sides() {
    let a = random_sparse(60, 4, 5.0, 8);
    let f = lu_factor(&a).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let b: Vec<_> = (0..180).map(|_| crand(&mut rng)).collect();
    let mut x = b.clone();
    f.solve_many_in_place(&mut x, 3).unwrap();
    for k in 0..3 {
        let single = f.solve(&b[60 * k..60 * (k + 1)]).unwrap();
        assert_eq!(&x[60 * k..60 * (k + 1)], single.as_slice());
    }
}

#[test]
fn inverse_iteration_matches_dense_hermitian_eigensolver() {
    let n = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let g: Vec<Vec<Complex64>> = (0..n).map(|_| (0..n).map(|_| crand(&mut rng)).collect()).collect();
    let h: Vec<Vec<Complex64>> = (0..n).map(|i| (0..n).map(|j| g[i][j] + g[j][i].conj()).collect()).collect();
    let a = SparseComplexMatrix::from_dense(&h);

    let m = Mat::<Complex64>::from_fn(n, n, |i, j| h[i][j]);
    let eig = m.self_adjoint_eigen(Side::Lower).unwrap();
    let vals: Vec<f64> = (0..n).map(|j| eig.S()[j].re).collect();
    let jmin = (0..n).min_by(|&p, &q| vals[p].abs().total_cmp(&vals[q].abs())).unwrap();

    let e = inverse_iteration(&a, 1e-13, 2000, 1).unwrap();
    assert!((e.lambda.re - vals[jmin]).abs() <= 1e-8 * vals[jmin].abs().max(1.0), "{} vs {}", e.lambda, vals[jmin]);
    let overlap: Complex64 = (0..n).map(|i| eig.U()[(i, jmin)].conj() * e.vector[i]).sum();
    assert!((overlap.norm() - 1.0).abs() <= 1e-8, "overlap {}", overlap.norm());
}
