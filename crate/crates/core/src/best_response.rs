//! Best linear response to fixed stationary noise moments, and an independent
//! dynamic-programming oracle for the optimal Gaussian LQG cost.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, pinv_solve, repeat_diag, repeat_vec};
use crate::model::{ControlProblem, StackedMatrices};
use crate::policy::{causal_entries, LinearPolicy, NoiseMoments};
use crate::scalar::{lit, Scalar};

/// Second-order data of the expected cost as a function of `(U, q)`.
///
/// With `eta = D v + w`, `c = G E[v] + L x0` and `K = R + H'QH` the expected cost is
/// `tr(K U S_eta U') + 2 tr(B'U) + ubar'K ubar + 2 ubar'H'Q c + const`,
/// where `ubar = U E[eta] + q` is the mean input and `B = H'Q G S_v D'`.
struct ResponseData<T: Scalar> {
    k: DMatrix<T>,
    cov_eta: DMatrix<T>,
    mean_eta: DVector<T>,
    b: DMatrix<T>,
    /// `H'Q c`.
    drift: DVector<T>,
}

fn response_data<T: Scalar>(
    stacked: &StackedMatrices<T>,
    moments: &NoiseMoments<T>,
    x0: &DVector<T>,
) -> Result<ResponseData<T>> {
    let (horizon, n, p) = (stacked.horizon, stacked.n, stacked.p);
    if moments.mean_v.len() != n || moments.mean_w.len() != p {
        return Err(Error::dimension(
            "noise moments (process, measurement)",
            format!("({n}, {p})"),
            format!("({}, {})", moments.mean_v.len(), moments.mean_w.len()),
        ));
    }
    if x0.len() != n {
        return Err(Error::dimension("initial state", n, x0.len()));
    }
    let cov_v = repeat_diag(&moments.cov_v, horizon);
    let cov_w = repeat_diag(&moments.cov_w, horizon);
    let mean_v = repeat_vec(&moments.mean_v, horizon);
    let mean_w = repeat_vec(&moments.mean_w, horizon);
    let (d, h, g, q) = (&stacked.d, &stacked.h, &stacked.g, &stacked.q);

    let hq = h.transpose() * q;
    let k = linalg::symmetrize(&(&stacked.r + &hq * h));
    let cov_eta = linalg::symmetrize(&(d * &cov_v * d.transpose() + cov_w));
    let mean_eta = d * &mean_v + mean_w;
    let b = &hq * g * &cov_v * d.transpose();
    let drift = &hq * (g * &mean_v + &stacked.l * x0);
    Ok(ResponseData {
        k,
        cov_eta,
        mean_eta,
        b,
        drift,
    })
}

/// Minimizer of the expected closed-loop cost over causal `(U, q)`.
///
/// The covariance and mean parts decouple: the mean input `ubar = U E[eta] + q` solves
/// `K ubar = -H'Q c`, and the free gain entries solve the normal equations
/// `(K U S_eta + B)[free] = 0`. When `S_eta` is singular the gain is not unique and the
/// minimum-norm solution is returned.
pub fn best_linear_response<T: Scalar>(
    stacked: &StackedMatrices<T>,
    moments: &NoiseMoments<T>,
    x0: &DVector<T>,
) -> Result<LinearPolicy<T>> {
    let (horizon, m, p) = (stacked.horizon, stacked.m, stacked.p);
    let data = response_data(stacked, moments, x0)?;
    let entries = causal_entries(horizon, m, p);

    let dim = entries.len();
    let mut normal = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for (a, &(i, j)) in entries.iter().enumerate() {
        rhs[a] = -data.b[(i, j)];
        for (b, &(k, l)) in entries.iter().enumerate() {
            normal[(a, b)] = data.k[(i, k)] * data.cov_eta[(l, j)];
        }
    }
    let free = pinv_solve(&normal, &rhs);

    let mean_input = data
        .k
        .clone()
        .cholesky()
        .map(|c| c.solve(&(-&data.drift)))
        .unwrap_or_else(|| pinv_solve(&data.k, &(-&data.drift)));

    let mut u = DMatrix::zeros(horizon * m, horizon * p);
    for (&(i, j), &val) in entries.iter().zip(free.iter()) {
        u[(i, j)] = val;
    }
    let q = &mean_input - &u * &data.mean_eta;
    LinearPolicy::new(horizon, m, p, u, q)
}

/// Gradient of the expected cost with respect to the free gain entries (ordered as
/// [`causal_entries`]) and the offset `q`.
pub fn response_gradient<T: Scalar>(
    stacked: &StackedMatrices<T>,
    moments: &NoiseMoments<T>,
    x0: &DVector<T>,
    policy: &LinearPolicy<T>,
) -> Result<(DVector<T>, DVector<T>)> {
    let data = response_data(stacked, moments, x0)?;
    let two = lit::<T>(2.0);
    let u = policy.gain();
    let mean_input = u * &data.mean_eta + policy.offset();
    let grad_q = (&data.k * &mean_input + &data.drift) * two;
    let grad_u =
        (&data.k * u * &data.cov_eta + &data.b) * two + &grad_q * data.mean_eta.transpose();
    let free: Vec<T> = causal_entries(stacked.horizon, stacked.m, stacked.p)
        .into_iter()
        .map(|(i, j)| grad_u[(i, j)])
        .collect();
    Ok((DVector::from_vec(free), grad_q))
}

/// Optimal expected cost of the Gaussian LQG problem by Riccati recursion and Kalman
/// filtering: the full-information value plus the penalty for estimation error,
/// `sum_t tr(A'SB (R + B'SB)^{-1} B'SA P[t|t])`.
pub fn dp_lqg_value<T: Scalar>(
    problem: &ControlProblem<T>,
    moments: &NoiseMoments<T>,
) -> Result<T> {
    let horizon = problem.horizon;
    let (n, p) = (problem.state_dim(), problem.output_dim());
    if moments.mean_v.len() != n || moments.mean_w.len() != p {
        return Err(Error::dimension(
            "noise moments (process, measurement)",
            format!("({n}, {p})"),
            format!("({}, {})", moments.mean_v.len(), moments.mean_w.len()),
        ));
    }
    let (mv, cov_v, cov_w) = (&moments.mean_v, &moments.cov_v, &moments.cov_w);

    // Filtered error covariances P[t|t].
    let mut filtered = Vec::with_capacity(horizon);
    let mut prior = DMatrix::<T>::zeros(n, n);
    for t in 0..horizon {
        let c = &problem.c[t];
        let innovation = linalg::symmetrize(&(c * &prior * c.transpose() + cov_w));
        let pc = &prior * c.transpose();
        let inn_pinv = innovation
            .clone()
            .pseudo_inverse(T::default_epsilon() * lit::<T>(16.0) * innovation.amax().max(T::one()))
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let post = linalg::symmetrize(&(&prior - &pc * inn_pinv * pc.transpose()));
        prior = linalg::symmetrize(&(&problem.a[t] * &post * problem.a[t].transpose() + cov_v));
        filtered.push(post);
    }

    let mut s = problem.q[horizon].clone();
    let mut lin = DVector::<T>::zeros(n);
    let mut constant = T::zero();
    let mut penalty = T::zero();
    let two = lit::<T>(2.0);
    for t in (0..horizon).rev() {
        let (a, b) = (&problem.a[t], &problem.b[t]);
        let sb = &s * b;
        let gram = linalg::symmetrize(&(&problem.r[t] + b.transpose() * &sb));
        let chol = gram.cholesky().ok_or_else(|| {
            Error::InvalidParameter(format!("R[{t}] + B'SB is not positive definite"))
        })?;
        let sa_b = a.transpose() * &sb; // A'SB
        let drift = &s * mv + &lin; // S m + s
        let gain_x = chol.solve(&sa_b.transpose()); // Λ^{-1} B'SA
        let gain_d = chol.solve(&(b.transpose() * &drift)); // Λ^{-1} B'(Sm + s)
        let gamma = &sa_b * &gain_x;

        penalty += (&gamma * &filtered[t]).trace();
        constant += (&s * cov_v).trace() + mv.dot(&(&s * mv)) + two * lin.dot(mv)
            - (b.transpose() * &drift).dot(&gain_d);
        lin = a.transpose() * &drift - &sa_b * &gain_d;
        s = linalg::symmetrize(&(&problem.q[t] + a.transpose() * &s * a - gamma));
    }
    let x0 = &problem.x0;
    Ok(x0.dot(&(&s * x0)) + two * lin.dot(x0) + constant + penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::assemble_stacked;
    use crate::policy::closed_loop_cost;
    use approx::assert_relative_eq;

    fn sc(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn example() -> ControlProblem<f64> {
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

    fn unit_process_noise() -> NoiseMoments<f64> {
        NoiseMoments::centered(sc(1.0), sc(0.0)).unwrap()
    }

    #[test]
    fn example_response_is_two_thirds_feedback() {
        let problem = example();
        let st = assemble_stacked(&problem);
        let policy = best_linear_response(&st, &unit_process_noise(), &problem.x0).unwrap();
        assert_relative_eq!(policy.gain()[(1, 1)], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(policy.offset().amax(), 0.0, epsilon = 1e-14);
        let cost = closed_loop_cost(&st, &policy, &problem.x0, &unit_process_noise()).unwrap();
        assert_relative_eq!(cost, 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn example_dp_value() {
        assert_relative_eq!(
            dp_lqg_value(&example(), &unit_process_noise()).unwrap(),
            4.0 / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_noise_and_state_costs_nothing() {
        let zero = NoiseMoments::centered(sc(0.0), sc(0.0)).unwrap();
        assert_eq!(dp_lqg_value(&example(), &zero).unwrap(), 0.0);
    }

    #[test]
    fn no_state_weight_means_no_input() {
        let mut problem = example();
        problem.q = vec![sc(0.0); 3];
        let st = assemble_stacked(&problem);
        let moments = NoiseMoments::new(
            DVector::from_element(1, 0.4),
            sc(1.0),
            DVector::zeros(1),
            sc(0.2),
        )
        .unwrap();
        let policy = best_linear_response(&st, &moments, &problem.x0).unwrap();
        assert!(policy.gain().amax() < 1e-14);
        assert!(policy.offset().amax() < 1e-14);
    }

    #[test]
    fn gradient_vanishes_at_response() {
        let problem = example()
            .with_initial_state(DVector::from_element(1, 0.3))
            .unwrap();
        let st = assemble_stacked(&problem);
        let moments = NoiseMoments::new(
            DVector::from_element(1, 0.2),
            sc(1.0),
            DVector::from_element(1, -0.1),
            sc(0.5),
        )
        .unwrap();
        let policy = best_linear_response(&st, &moments, &problem.x0).unwrap();
        let (gu, gq) = response_gradient(&st, &moments, &problem.x0, &policy).unwrap();
        assert!(gu.norm() < 1e-10 && gq.norm() < 1e-10, "{gu} {gq}");
        let dp = dp_lqg_value(&problem, &moments).unwrap();
        let cost = closed_loop_cost(&st, &policy, &problem.x0, &moments).unwrap();
        assert_relative_eq!(cost, dp, epsilon = 1e-10);
    }
}
