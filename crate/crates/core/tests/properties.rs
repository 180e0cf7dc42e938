mod common;

use drlqg::equilibrium::sample_ball_moments;
use drlqg::sim_eval::rollout_cost;
use drlqg::worst_case::ChannelStatus;
use drlqg::{
    aggregate_noise_matrices, assemble_stacked, best_linear_response, closed_loop_cost, ell,
    expected_cost, f_matrices, gelbrich_distance, solve_worst_case, AmbiguitySpec, GaussianSpec,
    NoiseMoments, SolverOptions,
};
use nalgebra::DVector;
use proptest::prelude::*;

use common::{gauss_vec, instance, random_policy, rng, shape, spd};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn gaussian(r: &mut rand_chacha::ChaCha8Rng, d: usize) -> GaussianSpec<f64> {
    GaussianSpec::new(gauss_vec(r, d, 1.0), spd(r, d, 0.05)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stacked_trajectory_matches_recursion(seed in any::<u64>(), k in 0u64..12) {
        let (n, m, p, horizon) = shape(k);
        let inst = instance(seed, n, m, p, horizon);
        let pb = &inst.problem;
        let stacked = assemble_stacked(pb);
        let mut r = rng(seed ^ 1);
        let u = gauss_vec(&mut r, horizon * m, 1.0);
        let v = gauss_vec(&mut r, horizon * n, 1.0);
        let stacked_x = stacked.state_trajectory(&u, &v, &pb.x0);
        let mut x = pb.x0.clone();
        for t in 0..=horizon {
            for i in 0..n {
                prop_assert!(close(stacked_x[t * n + i], x[i], 1e-12));
            }
            if t < horizon {
                x = &pb.a[t] * &x + &pb.b[t] * u.rows(t * m, m) + v.rows(t * n, n);
            }
        }
    }

    #[test]
    fn quadratic_form_matches_rollout(seed in any::<u64>(), k in 0u64..12) {
        let (n, m, p, horizon) = shape(k);
        let inst = instance(seed, n, m, p, horizon);
        let stacked = assemble_stacked(&inst.problem);
        let f = f_matrices(&stacked, &inst.policy, &inst.problem.x0).unwrap();
        let mut r = rng(seed ^ 2);
        let v = gauss_vec(&mut r, horizon * n, 1.0);
        let w = gauss_vec(&mut r, horizon * p, 1.0);
        let direct = rollout_cost(&inst.problem, &inst.policy, &v, &w);
        prop_assert!(close(f.evaluate(&v, &w), direct, 1e-11));
    }

    #[test]
    fn aggregation_is_linear(seed in any::<u64>(), k in 0u64..12, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let (n, m, p, horizon) = shape(k);
        let inst = instance(seed, n, m, p, horizon);
        let stacked = assemble_stacked(&inst.problem);
        let other = random_policy(&mut rng(seed ^ 3), horizon, m, p, 0.5);
        let f1 = f_matrices(&stacked, &inst.policy, &inst.problem.x0).unwrap();
        let f2 = f_matrices(&stacked, &other, &inst.problem.x0).unwrap();
        let lhs = aggregate_noise_matrices(&f1.combine(a, &f2, b));
        let (g1, g2) = (aggregate_noise_matrices(&f1), aggregate_noise_matrices(&f2));
        let tol = 1e-12 * (1.0 + g1.scale() + g2.scale());
        prop_assert!((&lhs.p_v - (&g1.p_v * a + &g2.p_v * b)).amax() <= tol);
        prop_assert!((&lhs.cross_w - (&g1.cross_w * a + &g2.cross_w * b)).amax() <= tol);
        prop_assert!((&lhs.s - (&g1.s * a + &g2.s * b)).amax() <= tol);
        prop_assert!((&lhs.lin_v - (&g1.lin_v * a + &g2.lin_v * b)).amax() <= tol);
    }

    #[test]
    fn gelbrich_is_a_metric(seed in any::<u64>(), d in 1usize..4) {
        let mut r = rng(seed);
        let (x, y, z) = (gaussian(&mut r, d), gaussian(&mut r, d), gaussian(&mut r, d));
        let dxy = gelbrich_distance(&x, &y).unwrap();
        prop_assert!(gelbrich_distance(&x, &x).unwrap() <= 1e-6);
        prop_assert!(close(dxy, gelbrich_distance(&y, &x).unwrap(), 1e-9));
        prop_assert!(dxy <= gelbrich_distance(&x, &z).unwrap() + gelbrich_distance(&z, &y).unwrap() + 1e-9);
        prop_assert!(ell(&x.cov, &y.cov).unwrap() >= -1e-12);
    }

    #[test]
    fn worst_case_dominates_feasible_moments(seed in any::<u64>(), k in 0u64..12) {
        let (n, m, p, horizon) = shape(k);
        let inst = instance(seed, n, m, p, horizon);
        let stacked = assemble_stacked(&inst.problem);
        let nq = aggregate_noise_matrices(&f_matrices(&stacked, &inst.policy, &inst.problem.x0).unwrap());
        let sol = solve_worst_case(&nq, &inst.amb, &SolverOptions::default()).unwrap();
        let mut r = rng(seed ^ 4);
        for i in 0..20 {
            let fraction = if i % 2 == 0 { 1.0 } else { 0.5 };
            let moments = sample_ball_moments(&inst.amb, fraction, fraction, &mut r).unwrap();
            prop_assert!(expected_cost(&nq, &moments) <= sol.cost + 1e-9 * (1.0 + sol.cost.abs()));
        }
        prop_assert!(expected_cost(&nq, &inst.amb.reference_moments()) <= sol.cost + 1e-9);
    }

    #[test]
    fn worst_case_grows_with_radius(seed in any::<u64>(), k in 0u64..12, grow in 1.0f64..3.0) {
        let (n, m, p, horizon) = shape(k);
        let inst = instance(seed, n, m, p, horizon);
        let stacked = assemble_stacked(&inst.problem);
        let nq = aggregate_noise_matrices(&f_matrices(&stacked, &inst.policy, &inst.problem.x0).unwrap());
        let amb = &inst.amb;
        let small = solve_worst_case(&nq, amb, &SolverOptions::default()).unwrap();
        let wider = AmbiguitySpec::new(amb.ref_cov_v.clone(), amb.ref_cov_w.clone(), amb.rho_v * grow, amb.rho_w).unwrap();
        let large = solve_worst_case(&nq, &wider, &SolverOptions::default()).unwrap();
        prop_assert!(large.cost >= small.cost - 1e-10 * (1.0 + small.cost.abs()));
        if large.status_v == ChannelStatus::Active && small.status_v == ChannelStatus::Active {
            prop_assert!(large.lambda_v <= small.lambda_v * (1.0 + 1e-9));
        }
    }

    #[test]
    fn best_response_beats_random_policies(seed in any::<u64>(), k in 0u64..12) {
        let (n, m, p, horizon) = shape(k);
        let inst = instance(seed, n, m, p, horizon);
        let stacked = assemble_stacked(&inst.problem);
        let mut r = rng(seed ^ 5);
        let moments = NoiseMoments::new(
            gauss_vec(&mut r, n, 0.5),
            spd(&mut r, n, 0.1),
            gauss_vec(&mut r, p, 0.5),
            spd(&mut r, p, 0.1),
        ).unwrap();
        let x0 = &inst.problem.x0;
        let best = closed_loop_cost(&stacked, &best_linear_response(&stacked, &moments, x0).unwrap(), x0, &moments).unwrap();
        for _ in 0..5 {
            let other = random_policy(&mut r, horizon, m, p, 0.5);
            prop_assert!(best <= closed_loop_cost(&stacked, &other, x0, &moments).unwrap() + 1e-10);
        }
    }

    #[test]
    fn policy_file_round_trip(seed in any::<u64>(), k in 0u64..12) {
        let (_, m, p, horizon) = shape(k);
        let policy = random_policy(&mut rng(seed), horizon, m, p, 1.0);
        let text = drlqg::config::PolicyFile::from_policy(&policy).to_toml();
        let back: drlqg::config::PolicyFile = toml::from_str(&text).unwrap();
        prop_assert_eq!(back.policy().unwrap(), policy);
    }
}

#[test]
fn zero_noise_worst_case_is_deterministic_cost() {
    let inst = instance(11, 2, 1, 1, 3);
    let stacked = assemble_stacked(&inst.problem);
    let nq =
        aggregate_noise_matrices(&f_matrices(&stacked, &inst.policy, &inst.problem.x0).unwrap());
    let amb = AmbiguitySpec::new(
        inst.amb.ref_cov_v.clone(),
        inst.amb.ref_cov_w.clone(),
        0.0,
        0.0,
    )
    .unwrap();
    let sol = solve_worst_case(&nq, &amb, &SolverOptions::default()).unwrap();
    assert!(close(
        sol.cost,
        expected_cost(&nq, &amb.reference_moments()),
        1e-14
    ));
    let zero = rollout_cost(
        &inst.problem,
        &inst.policy,
        &DVector::zeros(6),
        &DVector::zeros(3),
    );
    assert!(close(nq.constant, zero, 1e-12));
}

#[test]
fn single_precision_worst_case() {
    use nalgebra::DMatrix;
    let s = |x: f32| DMatrix::from_element(1, 1, x);
    let nq = drlqg::NoiseQuadratic::<f32> {
        p_v: s(1.0),
        p_w: s(0.5),
        cross_v: s(0.0),
        cross_w: s(0.0),
        s: s(0.0),
        lin_v: nalgebra::DVector::zeros(1),
        lin_w: nalgebra::DVector::zeros(1),
        constant: 0.0,
    };
    let amb = AmbiguitySpec::new(s(1.0), s(1.0), 0.5f32, 0.5).unwrap();
    let opts = SolverOptions {
        tolerance: 1e-5,
        ..Default::default()
    };
    let sol = solve_worst_case(&nq, &amb, &opts).unwrap();
    assert!((sol.lambda_v - 3.0).abs() < 1e-3);
    assert!((sol.cost_core - 3.375).abs() < 1e-3);
}
