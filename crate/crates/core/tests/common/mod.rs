#![allow(dead_code)]

use drlqg::policy::causal_entries;
use drlqg::{AmbiguitySpec, ControlProblem, LinearPolicy};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

pub fn gauss_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// `G G' / d + floor I`.
pub fn spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> DMatrix<f64> {
    let g = gauss(rng, d, d, 1.0);
    &g * g.transpose() / d as f64 + DMatrix::identity(d, d) * floor
}

pub struct Instance {
    pub problem: ControlProblem<f64>,
    pub amb: AmbiguitySpec<f64>,
    pub policy: LinearPolicy<f64>,
}

/// Random time-varying system with PD references and a random causal policy.
pub fn instance(seed: u64, n: usize, m: usize, p: usize, horizon: usize) -> Instance {
    let mut r = rng(seed);
    let a = (0..horizon).map(|_| gauss(&mut r, n, n, 0.6)).collect();
    let b = (0..horizon).map(|_| gauss(&mut r, n, m, 0.8)).collect();
    let c = (0..horizon).map(|_| gauss(&mut r, p, n, 0.8)).collect();
    let q = (0..=horizon).map(|_| spd(&mut r, n, 0.05)).collect();
    let rr = (0..horizon).map(|_| spd(&mut r, m, 0.3)).collect();
    let x0 = gauss_vec(&mut r, n, 0.5);
    let problem = ControlProblem::new(horizon, a, b, c, q, rr, x0).expect("valid random problem");
    let ref_v = spd(&mut r, n, 0.2) * 0.5;
    let ref_w = spd(&mut r, p, 0.2) * 0.3;
    let rho_v = r.random_range(0.1..0.8);
    let rho_w = r.random_range(0.1..0.8);
    let amb = AmbiguitySpec::new(ref_v, ref_w, rho_v, rho_w).expect("valid ambiguity set");
    let policy = random_policy(&mut r, horizon, m, p, 0.4);
    Instance {
        problem,
        amb,
        policy,
    }
}

pub fn random_policy(
    r: &mut ChaCha8Rng,
    horizon: usize,
    m: usize,
    p: usize,
    scale: f64,
) -> LinearPolicy<f64> {
    let free: Vec<f64> = causal_entries(horizon, m, p)
        .iter()
        .map(|_| scale * r.sample::<f64, _>(StandardNormal))
        .collect();
    LinearPolicy::from_free(horizon, m, p, &free, gauss_vec(r, horizon * m, scale)).unwrap()
}

/// Dimensions `(n, m, p, T)` with `n, p <= 2` and `T <= 3`, cycling through shapes.
pub fn shape(i: u64) -> (usize, usize, usize, usize) {
    let n = 1 + (i % 2) as usize;
    let m = 1 + ((i / 2) % 2) as usize;
    let p = 1 + ((i / 3) % 2) as usize;
    let horizon = 1 + (i % 3) as usize;
    (n, m, p, horizon)
}
