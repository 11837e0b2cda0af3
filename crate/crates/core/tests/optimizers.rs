use nalgebra::{DMatrix, DVector};
use rand::Rng;

use sirude_core::neural::{bfgs_minimize, AdamState, BfgsOptions, BfgsStatus};
use sirude_core::rng::seeded;

fn spd_problem(seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = seeded(seed);
    let b = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
    let a = &b * b.transpose() + DMatrix::identity(5, 5) * 0.5;
    let rhs = DVector::from_fn(5, |_, _| rng.random_range(-2.0..2.0));
    (a, rhs)
}

fn quadratic(a: &DMatrix<f64>, b: &DVector<f64>, x: &[f64]) -> (f64, Vec<f64>) {
    let x = DVector::from_column_slice(x);
    let ax = a * &x;
    let value = 0.5 * x.dot(&ax) - b.dot(&x);
    (value, (ax - b).as_slice().to_vec())
}

#[test]
fn bfgs_solves_spd_quadratics() {
    for seed in 0..5 {
        let (a, b) = spd_problem(seed);
        let exact = a.clone().cholesky().unwrap().solve(&b);
        let out = bfgs_minimize(|x: &[f64]| quadratic(&a, &b, x), &[0.0; 5], &BfgsOptions::default());
        assert_eq!(out.status, BfgsStatus::Converged, "seed {seed}");
        for k in 0..5 {
            assert!((out.params[k] - exact[k]).abs() < 1e-8, "seed {seed}: {:?} vs {exact}", out.params);
        }
        assert!(out.iterations <= 10, "seed {seed}: {} iterations", out.iterations);
    }
}

#[test]
fn adam_approaches_the_same_minimizer() {
    let (a, b) = spd_problem(1);
    let exact = a.clone().cholesky().unwrap().solve(&b);
    let mut x = vec![0.0; 5];
    let mut adam = AdamState::new(5, 0.01);
    for _ in 0..20_000 {
        let (_, g) = quadratic(&a, &b, &x);
        adam.update(&mut x, &g).unwrap();
    }
    for k in 0..5 {
        assert!((x[k] - exact[k]).abs() < 1e-3, "{x:?} vs {exact}");
    }
}
