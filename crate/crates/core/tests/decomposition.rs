use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use specreg::spectral::{decompose_design, DEFAULT_RANK_TOL};

fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

fn orthonormal(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    gaussian(rng, n, p).qr().q()
}

#[test]
fn recovers_chosen_singular_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let u = orthonormal(&mut rng, 10, 5);
        let v = orthonormal(&mut rng, 5, 5);
        let s = [7.0, 3.0, 1.5, 0.4, 0.05];
        let x = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&s)) * v.transpose();
        let d = decompose_design(&x, DEFAULT_RANK_TOL).unwrap();
        for (l, s) in d.spectrum.eigenvalues().iter().zip(s) {
            assert!((l - s * s).abs() <= 1e-8 * (s * s), "{l} vs {}", s * s);
        }
    }
}

#[test]
fn gram_matrix_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = gaussian(&mut rng, 30, 8);
    let d = decompose_design(&x, DEFAULT_RANK_TOL).unwrap();
    let lam = nalgebra::DVector::from_row_slice(d.spectrum.eigenvalues());
    let gram = &d.basis * DMatrix::from_diagonal(&lam) * d.basis.transpose();
    let want = x.transpose() * &x;
    assert!((gram - &want).norm() < 1e-10 * want.norm());
    let eye = d.basis.transpose() * &d.basis;
    assert!((eye - DMatrix::identity(8, 8)).norm() < 1e-12);
}

#[test]
fn identity_filter_is_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = gaussian(&mut rng, 40, 6);
    let y: Vec<f64> = (0..40).map(|_| rng.sample(StandardNormal)).collect();
    let d = decompose_design(&x, DEFAULT_RANK_TOL).unwrap();
    let data = d.to_spectral(&y).unwrap();
    let beta = d.reconstruct_estimate(&data.y).unwrap();

    let yv = nalgebra::DVector::from_vec(y);
    let xtx = x.transpose() * &x;
    let lsq = xtx.cholesky().unwrap().solve(&(x.transpose() * yv));
    for (a, b) in beta.iter().zip(lsq.iter()) {
        assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()));
    }
}

#[test]
fn noiseless_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = gaussian(&mut rng, 25, 7);
    let beta: Vec<f64> = (1..=7).map(|k| 1.0 / k as f64).collect();
    let y = &x * nalgebra::DVector::from_row_slice(&beta);
    let d = decompose_design(&x, DEFAULT_RANK_TOL).unwrap();
    let data = d.to_spectral(y.as_slice()).unwrap();
    let back = d.reconstruct_estimate(&data.y).unwrap();
    for (a, b) in back.iter().zip(&beta) {
        assert!((a - b).abs() < 1e-8);
    }
    let orth = data.orthogonal.unwrap();
    assert_eq!(orth.dof, 18);
    assert!(orth.sum_sq < 1e-20);
}

#[test]
fn spectral_loss_equals_coefficient_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = gaussian(&mut rng, 20, 9);
    let beta: Vec<f64> = (0..9).map(|_| rng.sample(StandardNormal)).collect();
    let d = decompose_design(&x, DEFAULT_RANK_TOL).unwrap();
    let y: Vec<f64> = (&x * nalgebra::DVector::from_row_slice(&beta))
        .iter()
        .map(|v| v + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let data = d.to_spectral(&y).unwrap();
    let coef = d.project(&beta).unwrap();
    for _ in 0..20 {
        let h: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
        let est: Vec<f64> = h.iter().zip(&data.y).map(|(h, y)| h * y).collect();
        let spectral: f64 = est.iter().zip(&coef).map(|(e, b)| (e - b).powi(2)).sum();
        let full = d.reconstruct_estimate(&est).unwrap();
        let direct: f64 = full.iter().zip(&beta).map(|(e, b)| (e - b).powi(2)).sum();
        assert!((spectral - direct).abs() <= 1e-10 * direct.max(1.0));
    }
}
