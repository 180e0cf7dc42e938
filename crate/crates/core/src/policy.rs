//! Causal purified-output policies and the reduction of their closed-loop cost to a
//! quadratic in single-step noise moments.
//!
//! A policy `u = U eta + q` acts on purified outputs `eta = D v + w`, so the closed loop is
//! affine in the stacked noise:
//!
//! ```text
//! u = U D v + U w + q
//! x = (H U D + G) v + H U w + (H q + L x0)
//! ```
//!
//! and the realized cost `u'Ru + x'Qx` is the quadratic [`FMatrices`] in `(v, w)`.
//! Under stationary independent noise its expectation only depends on one step's moments,
//! which [`NoiseQuadratic`] captures.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, block, segment};
use crate::model::StackedMatrices;
use crate::scalar::{lit, Scalar};

/// Affine purified-output feedback `u = U eta + q` with `U` lower block triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy<T: Scalar> {
    horizon: usize,
    m: usize,
    p: usize,
    u: DMatrix<T>,
    q: DVector<T>,
}

impl<T: Scalar> LinearPolicy<T> {
    /// Rejects shape mismatches and any nonzero entry above the block diagonal.
    pub fn new(horizon: usize, m: usize, p: usize, u: DMatrix<T>, q: DVector<T>) -> Result<Self> {
        if u.shape() != (horizon * m, horizon * p) {
            return Err(Error::dimension(
                "policy gain U",
                format!("{}x{}", horizon * m, horizon * p),
                format!("{}x{}", u.nrows(), u.ncols()),
            ));
        }
        if q.len() != horizon * m {
            return Err(Error::dimension("policy offset q", horizon * m, q.len()));
        }
        for bi in 0..horizon {
            for bj in (bi + 1)..horizon {
                if block(&u, bi, bj, m, p).iter().any(|x| *x != T::zero()) {
                    return Err(Error::Causality { row: bi, col: bj });
                }
            }
        }
        Ok(LinearPolicy {
            horizon,
            m,
            p,
            u,
            q,
        })
    }

    pub fn zero(horizon: usize, m: usize, p: usize) -> Self {
        LinearPolicy {
            horizon,
            m,
            p,
            u: DMatrix::zeros(horizon * m, horizon * p),
            q: DVector::zeros(horizon * m),
        }
    }

    /// Policy with the given free gain entries (ordered as [`causal_entries`]) and offset.
    pub fn from_free(
        horizon: usize,
        m: usize,
        p: usize,
        free: &[T],
        q: DVector<T>,
    ) -> Result<Self> {
        let entries = causal_entries(horizon, m, p);
        if free.len() != entries.len() {
            return Err(Error::dimension(
                "free gain entries",
                entries.len(),
                free.len(),
            ));
        }
        let mut u = DMatrix::zeros(horizon * m, horizon * p);
        for (&(i, j), &val) in entries.iter().zip(free) {
            u[(i, j)] = val;
        }
        Self::new(horizon, m, p, u, q)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn output_dim(&self) -> usize {
        self.p
    }

    pub fn gain(&self) -> &DMatrix<T> {
        &self.u
    }

    pub fn offset(&self) -> &DVector<T> {
        &self.q
    }

    /// Gain entries on or below the block diagonal, ordered as [`causal_entries`].
    pub fn free_entries(&self) -> Vec<T> {
        causal_entries(self.horizon, self.m, self.p)
            .into_iter()
            .map(|(i, j)| self.u[(i, j)])
            .collect()
    }

    /// Same structure with the gain and offset scaled.
    pub fn scaled(&self, factor: T) -> Self {
        LinearPolicy {
            u: &self.u * factor,
            q: &self.q * factor,
            ..self.clone()
        }
    }

    /// Frobenius distance over `(U, q)`.
    pub fn distance(&self, other: &Self) -> T {
        ((&self.u - &other.u).norm_squared() + (&self.q - &other.q).norm_squared()).sqrt()
    }

    /// Input at step `t` given purified outputs `eta[0..=t]` (stacked, at least `t+1` blocks).
    pub fn input_at(&self, t: usize, eta: &DVector<T>) -> DVector<T> {
        let mut u = segment(&self.q, t, self.m);
        for s in 0..=t {
            u += block(&self.u, t, s, self.m, self.p) * segment(eta, s, self.p);
        }
        u
    }
}

/// `(row, col)` positions of the gain entries that causality leaves free, row-major.
pub fn causal_entries(horizon: usize, m: usize, p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..horizon * m {
        let t = i / m;
        for j in 0..(t + 1) * p {
            out.push((i, j));
        }
    }
    out
}

/// Closed-loop cost as a quadratic in the stacked noise:
/// `v'F1 v + f1'v + w'F2 w + f2'w + w'F3 v + c0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FMatrices<T: Scalar> {
    pub horizon: usize,
    pub n: usize,
    pub p: usize,
    /// `F1`, `Tn x Tn`.
    pub quad_v: DMatrix<T>,
    /// `F2`, `Tp x Tp`.
    pub quad_w: DMatrix<T>,
    /// `F3`, `Tp x Tn`.
    pub cross: DMatrix<T>,
    /// `f1`.
    pub lin_v: DVector<T>,
    /// `f2`.
    pub lin_w: DVector<T>,
    /// `q'Rq + (Hq + L x0)' Q (Hq + L x0)`.
    pub constant: T,
}

impl<T: Scalar> FMatrices<T> {
    /// Evaluates the quadratic at one noise realization.
    pub fn evaluate(&self, v: &DVector<T>, w: &DVector<T>) -> T {
        (v.transpose() * &self.quad_v * v)[(0, 0)]
            + self.lin_v.dot(v)
            + (w.transpose() * &self.quad_w * w)[(0, 0)]
            + self.lin_w.dot(w)
            + (w.transpose() * &self.cross * v)[(0, 0)]
            + self.constant
    }

    /// `alpha * self + beta * other`, entrywise.
    pub fn combine(&self, alpha: T, other: &Self, beta: T) -> Self {
        FMatrices {
            quad_v: &self.quad_v * alpha + &other.quad_v * beta,
            quad_w: &self.quad_w * alpha + &other.quad_w * beta,
            cross: &self.cross * alpha + &other.cross * beta,
            lin_v: &self.lin_v * alpha + &other.lin_v * beta,
            lin_w: &self.lin_w * alpha + &other.lin_w * beta,
            constant: self.constant * alpha + other.constant * beta,
            ..self.clone()
        }
    }
}

pub fn f_matrices<T: Scalar>(
    stacked: &StackedMatrices<T>,
    policy: &LinearPolicy<T>,
    x0: &DVector<T>,
) -> Result<FMatrices<T>> {
    let (horizon, n, m, p) = (stacked.horizon, stacked.n, stacked.m, stacked.p);
    if policy.horizon != horizon || policy.m != m || policy.p != p {
        return Err(Error::dimension(
            "policy (horizon, inputs, outputs)",
            format!("({horizon}, {m}, {p})"),
            format!("({}, {}, {})", policy.horizon, policy.m, policy.p),
        ));
    }
    if x0.len() != n {
        return Err(Error::dimension("initial state", n, x0.len()));
    }
    let (r, q) = (&stacked.r, &stacked.q);
    let u = &policy.u;

    // u = in_v v + in_w w + in_0, x = st_v v + st_w w + st_0
    let in_v = u * &stacked.d;
    let in_w = u.clone();
    let in_0 = policy.q.clone();
    let st_v = &stacked.h * &in_v + &stacked.g;
    let st_w = &stacked.h * u;
    let st_0 = &stacked.h * &policy.q + &stacked.l * x0;

    let two = lit::<T>(2.0);
    let quad_v = in_v.transpose() * r * &in_v + st_v.transpose() * q * &st_v;
    let quad_w = in_w.transpose() * r * &in_w + st_w.transpose() * q * &st_w;
    let cross = (in_w.transpose() * r * &in_v + st_w.transpose() * q * &st_v) * two;
    let lin_v = (in_v.transpose() * r * &in_0 + st_v.transpose() * q * &st_0) * two;
    let lin_w = (in_w.transpose() * r * &in_0 + st_w.transpose() * q * &st_0) * two;
    let constant = in_0.dot(&(r * &in_0)) + st_0.dot(&(q * &st_0));

    Ok(FMatrices {
        horizon,
        n,
        p,
        quad_v: linalg::symmetrize(&quad_v),
        quad_w: linalg::symmetrize(&quad_w),
        cross,
        lin_v,
        lin_w,
        constant,
    })
}

/// Expected closed-loop cost as a function of one step's noise moments:
/// `E[v'P_v v] + E[w'P_w w] + m_v'N_v m_v + m_w'N_w m_w + n_v'm_v + n_w'm_w + m_w'S m_v + c0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseQuadratic<T: Scalar> {
    /// Sum of the diagonal blocks of `F1`.
    pub p_v: DMatrix<T>,
    pub p_w: DMatrix<T>,
    /// `N_v`: twice the sum of the strictly upper blocks of `F1` (not symmetric in general).
    pub cross_v: DMatrix<T>,
    pub cross_w: DMatrix<T>,
    /// `S`: sum of all blocks of `F3`, `p x n`.
    pub s: DMatrix<T>,
    /// `n_v`: sum of the blocks of `f1`.
    pub lin_v: DVector<T>,
    pub lin_w: DVector<T>,
    pub constant: T,
}

impl<T: Scalar> NoiseQuadratic<T> {
    pub fn state_dim(&self) -> usize {
        self.p_v.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.p_w.nrows()
    }

    /// Largest absolute entry over every term, used to scale tolerances.
    pub fn scale(&self) -> T {
        [
            self.p_v.amax(),
            self.p_w.amax(),
            self.cross_v.amax(),
            self.cross_w.amax(),
            self.s.amax(),
            self.lin_v.amax(),
            self.lin_w.amax(),
        ]
        .into_iter()
        .fold(T::zero(), |a, b| a.max(b))
    }
}

pub fn aggregate_noise_matrices<T: Scalar>(f: &FMatrices<T>) -> NoiseQuadratic<T> {
    let (horizon, n, p) = (f.horizon, f.n, f.p);
    let mut p_v = DMatrix::zeros(n, n);
    let mut p_w = DMatrix::zeros(p, p);
    let mut cross_v = DMatrix::zeros(n, n);
    let mut cross_w = DMatrix::zeros(p, p);
    let mut s = DMatrix::zeros(p, n);
    let mut lin_v = DVector::zeros(n);
    let mut lin_w = DVector::zeros(p);
    let two = lit::<T>(2.0);
    for t in 0..horizon {
        p_v += block(&f.quad_v, t, t, n, n);
        p_w += block(&f.quad_w, t, t, p, p);
        for t2 in (t + 1)..horizon {
            cross_v += block(&f.quad_v, t, t2, n, n) * two;
            cross_w += block(&f.quad_w, t, t2, p, p) * two;
        }
        for t2 in 0..horizon {
            s += block(&f.cross, t, t2, p, n);
        }
        lin_v += segment(&f.lin_v, t, n);
        lin_w += segment(&f.lin_w, t, p);
    }
    NoiseQuadratic {
        p_v,
        p_w,
        cross_v,
        cross_w,
        s,
        lin_v,
        lin_w,
        constant: f.constant,
    }
}

/// Mean and covariance of the stationary process and measurement noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMoments<T: Scalar> {
    pub mean_v: DVector<T>,
    pub cov_v: DMatrix<T>,
    pub mean_w: DVector<T>,
    pub cov_w: DMatrix<T>,
}

impl<T: Scalar> NoiseMoments<T> {
    /// Validates shapes and positive semidefiniteness.
    pub fn new(
        mean_v: DVector<T>,
        cov_v: DMatrix<T>,
        mean_w: DVector<T>,
        cov_w: DMatrix<T>,
    ) -> Result<Self> {
        if cov_v.shape() != (mean_v.len(), mean_v.len()) {
            return Err(Error::dimension(
                "process noise covariance",
                format!("{0}x{0}", mean_v.len()),
                format!("{}x{}", cov_v.nrows(), cov_v.ncols()),
            ));
        }
        if cov_w.shape() != (mean_w.len(), mean_w.len()) {
            return Err(Error::dimension(
                "measurement noise covariance",
                format!("{0}x{0}", mean_w.len()),
                format!("{}x{}", cov_w.nrows(), cov_w.ncols()),
            ));
        }
        linalg::check_psd(&cov_v, "process noise covariance")?;
        linalg::check_psd(&cov_w, "measurement noise covariance")?;
        Ok(NoiseMoments {
            mean_v,
            cov_v,
            mean_w,
            cov_w,
        })
    }

    /// Zero-mean moments with the given covariances.
    pub fn centered(cov_v: DMatrix<T>, cov_w: DMatrix<T>) -> Result<Self> {
        Self::new(
            DVector::zeros(cov_v.nrows()),
            cov_v,
            DVector::zeros(cov_w.nrows()),
            cov_w,
        )
    }

    pub fn distance(&self, other: &Self) -> T {
        ((&self.mean_v - &other.mean_v).norm_squared()
            + (&self.cov_v - &other.cov_v).norm_squared()
            + (&self.mean_w - &other.mean_w).norm_squared()
            + (&self.cov_w - &other.cov_w).norm_squared())
        .sqrt()
    }

    /// Convex combination `(1 - weight) self + weight other`.
    pub fn blend(&self, other: &Self, weight: T) -> Self {
        let keep = T::one() - weight;
        NoiseMoments {
            mean_v: &self.mean_v * keep + &other.mean_v * weight,
            cov_v: &self.cov_v * keep + &other.cov_v * weight,
            mean_w: &self.mean_w * keep + &other.mean_w * weight,
            cov_w: &self.cov_w * keep + &other.cov_w * weight,
        }
    }
}

fn quad_form<T: Scalar>(m: &DMatrix<T>, x: &DVector<T>) -> T {
    x.dot(&(m * x))
}

pub fn expected_cost<T: Scalar>(nq: &NoiseQuadratic<T>, moments: &NoiseMoments<T>) -> T {
    let (mv, mw) = (&moments.mean_v, &moments.mean_w);
    (&nq.p_v * &moments.cov_v).trace()
        + (&nq.p_w * &moments.cov_w).trace()
        + quad_form(&(&nq.p_v + &nq.cross_v), mv)
        + quad_form(&(&nq.p_w + &nq.cross_w), mw)
        + mw.dot(&(&nq.s * mv))
        + nq.lin_v.dot(mv)
        + nq.lin_w.dot(mw)
        + nq.constant
}

/// Expected cost of `policy` on the closed loop under stationary noise `moments`.
pub fn closed_loop_cost<T: Scalar>(
    stacked: &StackedMatrices<T>,
    policy: &LinearPolicy<T>,
    x0: &DVector<T>,
    moments: &NoiseMoments<T>,
) -> Result<T> {
    let nq = aggregate_noise_matrices(&f_matrices(stacked, policy, x0)?);
    Ok(expected_cost(&nq, moments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_stacked, ControlProblem};
    use approx::assert_relative_eq;

    fn scalar_example() -> ControlProblem<f64> {
        let s = |x: f64| DMatrix::from_element(1, 1, x);
        ControlProblem::new(
            2,
            vec![s(-1.0); 2],
            vec![s(1.0); 2],
            vec![s(1.0); 2],
            vec![s(0.0), s(0.0), s(1.0)],
            vec![s(0.5); 2],
            DVector::zeros(1),
        )
        .unwrap()
    }

    fn example_policy(k1: f64) -> LinearPolicy<f64> {
        let u = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, k1]);
        LinearPolicy::new(2, 1, 1, u, DVector::zeros(2)).unwrap()
    }

    #[test]
    fn acausal_gain_is_rejected() {
        let u = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(
            LinearPolicy::new(2, 1, 1, u, DVector::zeros(2)),
            Err(Error::Causality { row: 0, col: 1 })
        );
    }

    #[test]
    fn causal_entry_layout() {
        assert_eq!(causal_entries(2, 1, 1), vec![(0, 0), (1, 0), (1, 1)]);
        assert_eq!(causal_entries(2, 1, 2).len(), 2 + 4);
    }

    #[test]
    fn zero_policy_f_matrices() {
        let p = scalar_example();
        let st = assemble_stacked(&p);
        let f = f_matrices(&st, &LinearPolicy::zero(2, 1, 1), &p.x0).unwrap();
        let expected = st.g.transpose() * &st.q * &st.g;
        assert_relative_eq!(f.quad_v, expected);
        assert_eq!(f.quad_w, DMatrix::zeros(2, 2));
        assert_eq!(f.cross, DMatrix::zeros(2, 2));
        assert_eq!(f.lin_v, DVector::zeros(2));
    }

    #[test]
    fn zero_policy_linear_term_from_initial_state() {
        let p = scalar_example()
            .with_initial_state(DVector::from_element(1, 0.7))
            .unwrap();
        let st = assemble_stacked(&p);
        let f = f_matrices(&st, &LinearPolicy::zero(2, 1, 1), &p.x0).unwrap();
        let expected = (st.g.transpose() * &st.q * &st.l * &p.x0) * 2.0;
        assert_relative_eq!(f.lin_v, expected, epsilon = 1e-14);
        assert_relative_eq!(f.constant, 0.49, epsilon = 1e-14);
    }

    #[test]
    fn example_policy_f_matrices_and_aggregate() {
        let p = scalar_example();
        let st = assemble_stacked(&p);
        let f = f_matrices(&st, &example_policy(2.0 / 3.0), &p.x0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0, 1.0]);
        assert_relative_eq!(f.quad_v, expected, epsilon = 1e-14);
        assert_relative_eq!(f.lin_v.amax(), 0.0);
        assert_relative_eq!(f.constant, 0.0);

        let nq = aggregate_noise_matrices(&f);
        assert_relative_eq!(nq.p_v[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(nq.cross_v[(0, 0)], -2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(nq.lin_v[0], 0.0);

        let at = |m: f64, var: f64| {
            let moments = NoiseMoments::new(
                DVector::from_element(1, m),
                DMatrix::from_element(1, 1, var),
                DVector::zeros(1),
                DMatrix::zeros(1, 1),
            )
            .unwrap();
            expected_cost(&nq, &moments)
        };
        assert_relative_eq!(at(0.0, 1.0), 4.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(
            at(0.5, 0.75),
            4.0 / 3.0 * 0.75 + 2.0 / 3.0 * 0.25,
            epsilon = 1e-14
        );
    }

    #[test]
    fn identity_f1_aggregates_to_diagonal_sum() {
        let f = FMatrices {
            horizon: 2,
            n: 1,
            p: 1,
            quad_v: DMatrix::identity(2, 2),
            quad_w: DMatrix::zeros(2, 2),
            cross: DMatrix::zeros(2, 2),
            lin_v: DVector::zeros(2),
            lin_w: DVector::zeros(2),
            constant: 0.0,
        };
        let nq = aggregate_noise_matrices(&f);
        assert_eq!(nq.p_v[(0, 0)], 2.0);
        assert_eq!(nq.cross_v[(0, 0)], 0.0);
    }

    #[test]
    fn zero_moments_give_zero_cost() {
        let p = scalar_example();
        let st = assemble_stacked(&p);
        let f = f_matrices(&st, &example_policy(0.3), &p.x0).unwrap();
        let nq = aggregate_noise_matrices(&f);
        let moments = NoiseMoments::centered(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(expected_cost(&nq, &moments), 0.0);
    }

    #[test]
    fn policy_dimension_mismatch() {
        let p = scalar_example();
        let st = assemble_stacked(&p);
        let bad = LinearPolicy::zero(3, 1, 1);
        assert!(matches!(
            f_matrices(&st, &bad, &p.x0),
            Err(Error::Dimension { .. })
        ));
    }
}
