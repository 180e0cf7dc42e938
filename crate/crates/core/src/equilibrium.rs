//! Nash equilibrium between the linear policy and the adversarial noise moments.
//!
//! The worst-case value `phi(policy) = max_nature J(policy, nature)` is convex in `(U, q)`:
//! the closed-loop cost is a convex quadratic in the policy for every fixed nature. The
//! driver alternates exact best responses and accepts the policy step along
//! `best_response(nature) - policy` only as far as `phi` does not increase. That direction
//! is a descent direction of `phi` whenever the worst case is unique, so the iteration
//! cannot cycle.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::best_response::{best_linear_response, response_gradient};
use crate::error::{Error, Result};
use crate::gauss_ot::gelbrich_ball_point;
use crate::model::{assemble_stacked, ControlProblem, StackedMatrices};
use crate::policy::{
    aggregate_noise_matrices, closed_loop_cost, expected_cost, f_matrices, LinearPolicy,
    NoiseMoments,
};
use crate::scalar::{lit, to_f64, Scalar};
use crate::worst_case::{solve_worst_case, AmbiguitySpec, SolverOptions, WorstCaseSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Best responses with backtracking on the worst-case value.
    IteratedBestResponse,
    /// Projected-free gradient descent on the worst-case value, with the worst case as the
    /// inner maximizer and step `1/L` from the curvature of the quadratic.
    Danskin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumOptions {
    pub solver: SolverOptions,
    pub max_rounds: usize,
    /// Relative change of the worst-case value below which the value is considered settled.
    pub value_tolerance: f64,
    /// Frobenius distance between the policy and its best response below which the policy
    /// is considered settled.
    pub policy_tolerance: f64,
    /// Alternatively, the policy is settled once its best response improves the cost against
    /// the current worst case by at most this much (relative to `max(1, value)`). This is
    /// the test that binds when the value is flat along some policy directions.
    pub gain_tolerance: f64,
    /// Nature samples drawn by the gap certificate.
    pub gap_samples: usize,
    pub seed: u64,
    pub method: Method,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions {
            solver: SolverOptions::default(),
            max_rounds: 500,
            value_tolerance: 1e-9,
            policy_tolerance: 1e-8,
            gain_tolerance: 1e-11,
            gap_samples: 200,
            seed: 0,
            method: Method::IteratedBestResponse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub round: usize,
    pub value: f64,
    pub policy_delta: f64,
    pub nature_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium<T: Scalar> {
    pub policy: LinearPolicy<T>,
    /// Worst-case moments against `policy`.
    pub nature: NoiseMoments<T>,
    pub worst_case: WorstCaseSolution<T>,
    /// Worst-case expected cost of `policy` (the minmax value).
    pub value: T,
    /// Duality-gap certificate from [`nash_gap`].
    pub gap: T,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

fn worst_case_of<T: Scalar>(
    stacked: &StackedMatrices<T>,
    policy: &LinearPolicy<T>,
    x0: &DVector<T>,
    amb: &AmbiguitySpec<T>,
    opts: &SolverOptions,
) -> Result<WorstCaseSolution<T>> {
    let nq = aggregate_noise_matrices(&f_matrices(stacked, policy, x0)?);
    solve_worst_case(&nq, amb, opts)
}

/// Worst-case solution against a given policy.
pub fn worst_case_for_policy<T: Scalar>(
    problem: &ControlProblem<T>,
    policy: &LinearPolicy<T>,
    amb: &AmbiguitySpec<T>,
    opts: &SolverOptions,
) -> Result<WorstCaseSolution<T>> {
    worst_case_of(&assemble_stacked(problem), policy, &problem.x0, amb, opts)
}

fn blend<T: Scalar>(from: &LinearPolicy<T>, to: &LinearPolicy<T>, weight: T) -> LinearPolicy<T> {
    let keep = T::one() - weight;
    LinearPolicy::new(
        from.horizon(),
        from.input_dim(),
        from.output_dim(),
        from.gain() * keep + to.gain() * weight,
        from.offset() * keep + to.offset() * weight,
    )
    .expect("convex combination of causal policies is causal")
}

struct State<T: Scalar> {
    policy: LinearPolicy<T>,
    wc: WorstCaseSolution<T>,
}

/// Computes the equilibrium policy and worst-case moments, then certifies the gap.
pub fn iterated_best_response<T: Scalar>(
    problem: &ControlProblem<T>,
    amb: &AmbiguitySpec<T>,
    opts: &EquilibriumOptions,
) -> Result<Equilibrium<T>> {
    let stacked = assemble_stacked(problem);
    let x0 = &problem.x0;
    let reference = amb.reference_moments();
    let policy = best_linear_response(&stacked, &reference, x0)?;
    let wc = worst_case_of(&stacked, &policy, x0, amb, &opts.solver)?;
    let mut state = State { policy, wc };
    let mut trace = vec![TraceRow {
        round: 0,
        value: to_f64(state.wc.cost),
        policy_delta: f64::NAN,
        nature_delta: to_f64(state.wc.moments().distance(&reference)),
    }];

    let mut converged = false;
    let mut rounds = 0;
    let mut value_change = lit::<T>(f64::INFINITY);
    let mut residual: T;
    loop {
        let value = state.wc.cost;
        let nature = state.wc.moments();
        let response = best_linear_response(&stacked, &nature, x0)?;
        let distance = response.distance(&state.policy);
        let gain = value - closed_loop_cost(&stacked, &response, x0, &nature)?;
        residual = distance;
        let settled_policy = distance <= lit(opts.policy_tolerance)
            || gain <= lit::<T>(opts.gain_tolerance) * T::one().max(value.abs());
        if value_change <= lit(opts.value_tolerance) && settled_policy {
            converged = true;
            break;
        }
        if rounds == opts.max_rounds {
            break;
        }
        rounds += 1;
        let next = match opts.method {
            Method::IteratedBestResponse => ibr_step(&stacked, x0, amb, opts, &state, response)?,
            Method::Danskin => danskin_step(&stacked, x0, amb, opts, &state, &nature)?,
        };
        let policy_delta = next.policy.distance(&state.policy);
        let nature_delta = next.wc.moments().distance(&nature);
        let new_value = next.wc.cost;
        trace.push(TraceRow {
            round: rounds,
            value: to_f64(new_value),
            policy_delta: to_f64(policy_delta),
            nature_delta: to_f64(nature_delta),
        });
        value_change = (new_value - value).abs() / T::one().max(value.abs());
        state = next;
    }
    if !converged {
        return Err(Error::NoConvergence {
            solver: "iterated best response",
            iterations: rounds,
            residual: to_f64(residual),
        });
    }

    let mut eq = Equilibrium {
        nature: state.wc.moments(),
        value: state.wc.cost,
        policy: state.policy,
        worst_case: state.wc,
        gap: T::zero(),
        iterations: rounds,
        trace,
    };
    eq.gap = nash_gap(&eq, problem, amb, opts.gap_samples, opts.seed)?;
    Ok(eq)
}

/// Moves toward the best response as far as the worst-case value does not increase.
fn ibr_step<T: Scalar>(
    stacked: &StackedMatrices<T>,
    x0: &DVector<T>,
    amb: &AmbiguitySpec<T>,
    opts: &EquilibriumOptions,
    state: &State<T>,
    response: LinearPolicy<T>,
) -> Result<State<T>> {
    let value = state.wc.cost;
    let slack = lit::<T>(1e-13) * T::one().max(value.abs());
    let mut weight = T::one();
    for _ in 0..40 {
        let trial = if weight == T::one() {
            response.clone()
        } else {
            blend(&state.policy, &response, weight)
        };
        let wc = worst_case_of(stacked, &trial, x0, amb, &opts.solver)?;
        if wc.cost <= value + slack {
            return Ok(State { policy: trial, wc });
        }
        weight *= lit::<T>(0.5);
    }
    Ok(State {
        policy: state.policy.clone(),
        wc: state.wc.clone(),
    })
}

fn danskin_step<T: Scalar>(
    stacked: &StackedMatrices<T>,
    x0: &DVector<T>,
    amb: &AmbiguitySpec<T>,
    opts: &EquilibriumOptions,
    state: &State<T>,
    nature: &NoiseMoments<T>,
) -> Result<State<T>> {
    let (grad_u, grad_q) = response_gradient(stacked, nature, x0, &state.policy)?;
    let curvature = danskin_curvature(stacked, nature);
    let step = T::one() / curvature;
    let free: Vec<T> = state
        .policy
        .free_entries()
        .iter()
        .zip(grad_u.iter())
        .map(|(&u, &g)| u - g * step)
        .collect();
    let q = state.policy.offset() - &grad_q * step;
    let policy = LinearPolicy::from_free(stacked.horizon, stacked.m, stacked.p, &free, q)?;
    let wc = worst_case_of(stacked, &policy, x0, amb, &opts.solver)?;
    Ok(State { policy, wc })
}

/// Upper bound on the curvature of the cost in `(U, q)`:
/// `2 lmax(R + H'QH) (lmax(S_eta) + |E eta|^2 + 1)`.
fn danskin_curvature<T: Scalar>(stacked: &StackedMatrices<T>, nature: &NoiseMoments<T>) -> T {
    use crate::linalg::{lambda_max, repeat_diag, repeat_vec};
    let k = &stacked.r + stacked.h.transpose() * &stacked.q * &stacked.h;
    let cov_eta = &stacked.d * repeat_diag(&nature.cov_v, stacked.horizon) * stacked.d.transpose()
        + repeat_diag(&nature.cov_w, stacked.horizon);
    let mean_eta = &stacked.d * repeat_vec(&nature.mean_v, stacked.horizon)
        + repeat_vec(&nature.mean_w, stacked.horizon);
    lit::<T>(2.0) * lambda_max(&k) * (lambda_max(&cov_eta) + mean_eta.norm_squared() + T::one())
}

/// Random moments inside (or, with `radius_fraction = 1`, on) both Gelbrich balls.
pub fn sample_ball_moments<T: Scalar, R: Rng>(
    amb: &AmbiguitySpec<T>,
    radius_fraction_v: f64,
    radius_fraction_w: f64,
    rng: &mut R,
) -> Result<NoiseMoments<T>> {
    let channel = |cov: &DMatrix<T>, rho: T, fraction: f64, rng: &mut R| {
        let d = cov.nrows();
        let mean_dir = DVector::from_fn(d, |_, _| lit::<T>(rng.sample(StandardNormal)));
        let raw = DMatrix::from_fn(d, d, |_, _| lit::<T>(rng.sample::<f64, _>(StandardNormal)));
        let cov_dir = (&raw + raw.transpose()) * lit::<T>(0.5);
        gelbrich_ball_point(cov, &mean_dir, &cov_dir, rho * lit::<T>(fraction))
    };
    let v = channel(&amb.ref_cov_v, amb.rho_v, radius_fraction_v, rng)?;
    let w = channel(&amb.ref_cov_w, amb.rho_w, radius_fraction_w, rng)?;
    Ok(NoiseMoments {
        mean_v: v.mean,
        cov_v: v.cov,
        mean_w: w.mean,
        cov_w: w.cov,
    })
}

/// Draws `count` feasible moment pairs; every other draw sits on both ball boundaries and
/// the rest at uniformly random fractions of the radii.
pub fn sample_feasible_natures<T: Scalar>(
    amb: &AmbiguitySpec<T>,
    count: usize,
    seed: u64,
) -> Result<Vec<NoiseMoments<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let (fv, fw) = if i % 2 == 0 {
                (1.0, 1.0)
            } else {
                (rng.random::<f64>(), rng.random::<f64>())
            };
            sample_ball_moments(amb, fv, fw, &mut rng)
        })
        .collect()
}

/// `max(0, a, b)` where `a` is the largest gain any sampled feasible nature achieves over
/// the equilibrium nature against the equilibrium policy, and `b` is the improvement the
/// best linear response to the equilibrium nature achieves over the equilibrium policy.
pub fn nash_gap<T: Scalar>(
    eq: &Equilibrium<T>,
    problem: &ControlProblem<T>,
    amb: &AmbiguitySpec<T>,
    samples: usize,
    seed: u64,
) -> Result<T> {
    let report = saddle_report(eq, problem, amb, samples, 0, seed)?;
    Ok(T::zero().max(report.nature_excess).max(report.policy_gain))
}

/// Sampled two-sided saddle inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleReport<T: Scalar> {
    /// `max_sampled J(policy*, nature) - J(policy*, nature*)`; nonpositive at a saddle.
    pub nature_excess: T,
    /// `J(policy*, nature*) - min_policy J(policy, nature*)`; zero at a saddle.
    pub policy_gain: T,
    /// `J(policy*, nature*) - min over sampled perturbed policies of J(policy, nature*)`.
    pub perturbation_gain: T,
}

pub fn saddle_report<T: Scalar>(
    eq: &Equilibrium<T>,
    problem: &ControlProblem<T>,
    amb: &AmbiguitySpec<T>,
    nature_samples: usize,
    policy_samples: usize,
    seed: u64,
) -> Result<SaddleReport<T>> {
    let stacked = assemble_stacked(problem);
    let x0 = &problem.x0;
    let nq = aggregate_noise_matrices(&f_matrices(&stacked, &eq.policy, x0)?);
    let at_nature = expected_cost(&nq, &eq.nature);

    let mut nature_excess = lit::<T>(f64::NEG_INFINITY);
    for moments in sample_feasible_natures(amb, nature_samples, seed)? {
        nature_excess = nature_excess.max(expected_cost(&nq, &moments) - at_nature);
    }
    if nature_samples == 0 {
        nature_excess = T::zero();
    }

    let response = best_linear_response(&stacked, &eq.nature, x0)?;
    let policy_gain = at_nature - closed_loop_cost(&stacked, &response, x0, &eq.nature)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let base = eq.policy.free_entries();
    let size = T::one()
        + eq.policy
            .distance(&LinearPolicy::zero(stacked.horizon, stacked.m, stacked.p));
    let mut perturbation_gain = lit::<T>(f64::NEG_INFINITY);
    for i in 0..policy_samples {
        let eps = size * lit::<T>(10f64.powi(-((i % 4) as i32) - 1));
        let free: Vec<T> = base
            .iter()
            .map(|&u| u + eps * lit::<T>(rng.sample(StandardNormal)))
            .collect();
        let q = eq
            .policy
            .offset()
            .map(|x| x + eps * lit::<T>(rng.sample(StandardNormal)));
        let perturbed = LinearPolicy::from_free(stacked.horizon, stacked.m, stacked.p, &free, q)?;
        let cost = closed_loop_cost(&stacked, &perturbed, x0, &eq.nature)?;
        perturbation_gain = perturbation_gain.max(at_nature - cost);
    }
    if policy_samples == 0 {
        perturbation_gain = T::zero();
    }
    Ok(SaddleReport {
        nature_excess,
        policy_gain,
        perturbation_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::best_response::dp_lqg_value;
    use approx::assert_relative_eq;

    fn sc(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn scalar_problem() -> ControlProblem<f64> {
        ControlProblem::new(
            2,
            vec![sc(-1.0); 2],
            vec![sc(1.0); 2],
            vec![sc(1.0); 2],
            vec![sc(0.0), sc(0.0), sc(1.0)],
            vec![sc(0.5); 2],
            DVector::zeros(1),
        )
        .unwrap()
    }

    #[test]
    fn zero_radii_give_nominal_lqg() {
        let problem = scalar_problem();
        let amb = AmbiguitySpec::new(sc(1.0), sc(0.2), 0.0, 0.0).unwrap();
        let eq = iterated_best_response(&problem, &amb, &EquilibriumOptions::default()).unwrap();
        let nominal = dp_lqg_value(&problem, &amb.reference_moments()).unwrap();
        assert_relative_eq!(eq.value, nominal, epsilon = 1e-10);
        assert!(eq.gap <= 1e-12, "gap {}", eq.gap);
    }

    #[test]
    fn scalar_equilibrium_is_certified() {
        let problem = scalar_problem();
        let amb = AmbiguitySpec::new(sc(1.0), sc(0.1), 0.5, 0.2).unwrap();
        let eq = iterated_best_response(&problem, &amb, &EquilibriumOptions::default()).unwrap();
        assert!(eq.gap <= 1e-6, "gap {}", eq.gap);
        assert!(eq.value > dp_lqg_value(&problem, &amb.reference_moments()).unwrap());
    }

    #[test]
    fn scaled_policy_has_positive_response_gain() {
        let problem = scalar_problem();
        let amb = AmbiguitySpec::new(sc(1.0), sc(0.1), 0.5, 0.2).unwrap();
        let mut eq =
            iterated_best_response(&problem, &amb, &EquilibriumOptions::default()).unwrap();
        eq.policy = eq.policy.scaled(1.1);
        let report = saddle_report(&eq, &problem, &amb, 0, 0, 1).unwrap();
        assert!(report.policy_gain > 1e-6);
    }

    #[test]
    fn trace_is_deterministic() {
        let problem = scalar_problem();
        let amb = AmbiguitySpec::new(sc(1.0), sc(0.1), 0.5, 0.2).unwrap();
        let a = iterated_best_response(&problem, &amb, &EquilibriumOptions::default()).unwrap();
        let b = iterated_best_response(&problem, &amb, &EquilibriumOptions::default()).unwrap();
        assert_eq!(format!("{:?}", a.trace), format!("{:?}", b.trace));
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn danskin_path_reaches_same_value() {
        let problem = scalar_problem();
        let amb = AmbiguitySpec::new(sc(1.0), sc(0.1), 0.5, 0.2).unwrap();
        let ibr = iterated_best_response(&problem, &amb, &EquilibriumOptions::default()).unwrap();
        let opts = EquilibriumOptions {
            method: Method::Danskin,
            max_rounds: 20_000,
            value_tolerance: 1e-12,
            policy_tolerance: 1e-10,
            ..Default::default()
        };
        let dk = iterated_best_response(&problem, &amb, &opts).unwrap();
        assert_relative_eq!(ibr.value, dk.value, epsilon = 1e-6);
    }
}
