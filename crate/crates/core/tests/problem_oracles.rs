mod common;

use common::{jacobi_eigenvalues, Mat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ringmaster_core::problems::{quadratic_eigenvalue, SampleRng};
use ringmaster_core::{MatrixToy, NormSpec, Problem, Quadratic};

fn dense_a(d: usize) -> Mat {
    let mut a = Mat::zeros(d, d);
    for i in 0..d {
        a.set(i, i, 0.5);
        if i + 1 < d {
            a.set(i, i + 1, -0.25);
            a.set(i + 1, i, -0.25);
        }
    }
    a
}

fn dense_value_grad(d: usize, x: &[f64]) -> (f64, Vec<f64>) {
    let a = dense_a(d);
    let ax: Vec<f64> = (0..d).map(|i| (0..d).map(|j| a.at(i, j) * x[j]).sum()).collect();
    // b = −¼ e₁
    let f = 0.5 * x.iter().zip(&ax).map(|(p, q)| p * q).sum::<f64>() + 0.25 * x[0];
    let mut g = ax;
    g[0] += 0.25;
    (f, g)
}

#[test]
fn stencil_matches_dense_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in [1, 2, 5, 64] {
        let q = Quadratic::new(d, 0.0).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..d).map(|_| common::gaussian(&mut rng)).collect();
            let (f, g) = q.value_grad(&x).unwrap();
            let (fo, go) = dense_value_grad(d, &x);
            assert!((f - fo).abs() < 1e-12 * fo.abs().max(1.0));
            assert!(g.iter().zip(&go).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let q = Quadratic::new(16, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..16).map(|_| common::gaussian(&mut rng)).collect();
    let g = q.gradient(&x);
    let h = 1e-6;
    for i in 0..16 {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let fd = (q.value(&xp) - q.value(&xm)) / (2.0 * h);
        assert!((fd - g[i]).abs() < 1e-7, "coordinate {i}: {fd} vs {}", g[i]);
    }
}

#[test]
fn eigenvalue_formula_matches_dense_spectrum() {
    for d in [1, 2, 3, 8, 17, 32] {
        let numeric = jacobi_eigenvalues(&dense_a(d));
        for (j, lam) in numeric.iter().enumerate() {
            assert!((lam - quadratic_eigenvalue(d, j + 1)).abs() < 1e-9, "d = {d}, j = {}", j + 1);
        }
        assert!((Quadratic::new(d, 0.0).unwrap().lambda_max() - numeric[d - 1]).abs() < 1e-9);
    }
}

#[test]
fn minimizer_solves_the_dense_system() {
    for d in [1, 7, 64] {
        let q = Quadratic::new(d, 0.0).unwrap();
        let (_, g) = dense_value_grad(d, q.minimizer());
        assert!(g.iter().all(|v| v.abs() < 1e-12));
        let f_star = -(d as f64) / (8.0 * (d as f64 + 1.0));
        assert!((q.optimal_value().unwrap() - f_star).abs() < 1e-14);
    }
}

#[test]
fn stochastic_oracle_is_unbiased_with_known_variance() {
    let d = 64;
    let std = 0.3;
    let q = Quadratic::new(d, std).unwrap();
    let x = q.initial_point();
    let exact = q.gradient(x.as_slice());
    let mut rng = SampleRng::seed_from_u64(3);
    let n = 20_000;
    let mut mean = vec![0.0; d];
    let mut sq = 0.0;
    for _ in 0..n {
        let g = q.stochastic_gradient(x.as_slice(), &mut rng);
        let dev: Vec<f64> = g.iter().zip(&exact).map(|(a, b)| a - b).collect();
        sq += dev.iter().map(|v| v * v).sum::<f64>();
        mean.iter_mut().zip(&dev).for_each(|(m, v)| *m += v / n as f64);
    }
    let var = sq / n as f64;
    let expected = d as f64 * std * std;
    // the per-sample deviation is d·ξ² with ξ ~ N(0, std²): relative sd √(2/n)
    assert!((var / expected - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt(), "{var} vs {expected}");
    let mean_sd = std / (n as f64).sqrt();
    assert!(mean.iter().all(|m| m.abs() < 5.0 * mean_sd));
}

#[test]
fn constants_for_the_benchmark() {
    let q = Quadratic::new(64, 0.01).unwrap();
    let c = q.constants(&NormSpec::euclidean(q.layout())).unwrap();
    assert!((c.delta0 - (18.0 + 64.0 / 520.0)).abs() < 1e-12);
    assert!((c.sigma - 0.08).abs() < 1e-15);
    assert_eq!((c.l1, c.rho), (0.0, 1.0));
}

#[test]
fn matrix_toy_gradient_is_unbiased() {
    let toy = MatrixToy::new(3, 5, 0.5, 9).unwrap();
    let w = vec![0.25; 15];
    let exact = toy.gradient(&w);
    let mut rng = SampleRng::seed_from_u64(4);
    let n = 20_000;
    let mut mean = [0.0; 15];
    for _ in 0..n {
        let g = toy.stochastic_gradient(&w, &mut rng);
        mean.iter_mut().zip(&g).for_each(|(m, v)| *m += v / n as f64);
    }
    assert!(mean.iter().zip(&exact).all(|(m, e)| (m - e).abs() < 5.0 * 0.5 / (n as f64).sqrt()));
}
