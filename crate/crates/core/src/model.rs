//! Finite-horizon linear system with quadratic cost and its trajectory-space lift.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, block_diag, set_block};
use crate::scalar::{lit, to_f64, Scalar};

/// Minimum eigenvalue an input weight `R[t]` must exceed.
pub const INPUT_WEIGHT_MIN_EIGENVALUE: f64 = 1e-12;

/// Time-varying system
/// `x[t+1] = A[t] x[t] + B[t] u[t] + v[t]`, `y[t] = C[t] x[t] + w[t]`
/// with cost `sum_t u[t]' R[t] u[t] + sum_{t<=T} x[t]' Q[t] x[t]` and known initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem<T: Scalar> {
    pub horizon: usize,
    pub a: Vec<DMatrix<T>>,
    pub b: Vec<DMatrix<T>>,
    pub c: Vec<DMatrix<T>>,
    /// `horizon + 1` state weights.
    pub q: Vec<DMatrix<T>>,
    pub r: Vec<DMatrix<T>>,
    pub x0: DVector<T>,
}

impl<T: Scalar> ControlProblem<T> {
    /// Builds and validates a problem.
    pub fn new(
        horizon: usize,
        a: Vec<DMatrix<T>>,
        b: Vec<DMatrix<T>>,
        c: Vec<DMatrix<T>>,
        q: Vec<DMatrix<T>>,
        r: Vec<DMatrix<T>>,
        x0: DVector<T>,
    ) -> Result<Self> {
        validate_problem(ControlProblem {
            horizon,
            a,
            b,
            c,
            q,
            r,
            x0,
        })
    }

    /// Time-invariant system: the same matrices at every step, `q_terminal` at `t = T`.
    #[allow(clippy::too_many_arguments)]
    pub fn time_invariant(
        horizon: usize,
        a: DMatrix<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        q: DMatrix<T>,
        q_terminal: DMatrix<T>,
        r: DMatrix<T>,
        x0: DVector<T>,
    ) -> Result<Self> {
        let mut qs = vec![q; horizon];
        qs.push(q_terminal);
        Self::new(
            horizon,
            vec![a; horizon],
            vec![b; horizon],
            vec![c; horizon],
            qs,
            vec![r; horizon],
            x0,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.x0.len()
    }

    pub fn input_dim(&self) -> usize {
        self.b.first().map_or(0, |b| b.ncols())
    }

    pub fn output_dim(&self) -> usize {
        self.c.first().map_or(0, |c| c.nrows())
    }

    /// Copy of the problem with a different initial state.
    pub fn with_initial_state(&self, x0: DVector<T>) -> Result<Self> {
        validate_problem(ControlProblem { x0, ..self.clone() })
    }
}

fn check_shape<T: Scalar>(m: &DMatrix<T>, what: String, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::dimension(
            what,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

fn check_len<U>(v: &[U], what: &str, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::dimension(
            format!("number of {what} matrices"),
            expected,
            v.len(),
        ));
    }
    Ok(())
}

/// Returns the problem unchanged if dimensions agree, every `Q[t]` is symmetric PSD and
/// every `R[t]` is symmetric PD.
pub fn validate_problem<T: Scalar>(problem: ControlProblem<T>) -> Result<ControlProblem<T>> {
    let horizon = problem.horizon;
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    check_len(&problem.a, "A", horizon)?;
    check_len(&problem.b, "B", horizon)?;
    check_len(&problem.c, "C", horizon)?;
    check_len(&problem.q, "Q", horizon + 1)?;
    check_len(&problem.r, "R", horizon)?;

    let n = problem.x0.len();
    let m = problem.b[0].ncols();
    let p = problem.c[0].nrows();
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidParameter(
            "state, input and output dimensions must be positive".into(),
        ));
    }

    for t in 0..horizon {
        check_shape(&problem.a[t], format!("A[{t}]"), n, n)?;
        check_shape(&problem.b[t], format!("B[{t}]"), n, m)?;
        check_shape(&problem.c[t], format!("C[{t}]"), p, n)?;
        check_shape(&problem.r[t], format!("R[{t}]"), m, m)?;
    }
    for (t, q) in problem.q.iter().enumerate() {
        let what = format!("Q[{t}]");
        check_shape(q, what.clone(), n, n)?;
        linalg::check_psd(q, &what)?;
    }
    for (t, r) in problem.r.iter().enumerate() {
        let what = format!("R[{t}]");
        linalg::check_symmetric(r, &what, linalg::PSD_TOLERANCE)?;
        let min = linalg::lambda_min(r);
        if min <= lit(INPUT_WEIGHT_MIN_EIGENVALUE) {
            return Err(Error::Definiteness {
                what,
                required: "positive definite",
                min_eigenvalue: to_f64(min),
            });
        }
    }
    Ok(problem)
}

/// Composed state transition `A[t-1] ... A[s]` over `[s, t)`; identity when `s >= t`.
pub fn state_transition_product<T: Scalar>(
    problem: &ControlProblem<T>,
    s: usize,
    t: usize,
) -> Result<DMatrix<T>> {
    if s > problem.horizon || t > problem.horizon {
        return Err(Error::IndexOutOfRange {
            what: format!("transition [{s}, {t}) outside 0..={}", problem.horizon),
        });
    }
    let n = problem.state_dim();
    Ok((s..t).fold(DMatrix::identity(n, n), |acc, k| &problem.a[k] * acc))
}

/// Block matrices mapping trajectories: `x = H u + G v + L x0`, `eta = D v + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedMatrices<T: Scalar> {
    pub horizon: usize,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
    pub h: DMatrix<T>,
    pub g: DMatrix<T>,
    pub l: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
}

/// Lifts the recursion to trajectory space. Blocks are derived from the dynamics: state row
/// `t` receives `A[t-1]...A[k+1] B[k]` from input `k < t`.
pub fn assemble_stacked<T: Scalar>(problem: &ControlProblem<T>) -> StackedMatrices<T> {
    let horizon = problem.horizon;
    let (n, m, p) = (
        problem.state_dim(),
        problem.input_dim(),
        problem.output_dim(),
    );

    // phi[s][t] = A_s^t for s <= t
    let phi: Vec<Vec<DMatrix<T>>> = (0..=horizon)
        .map(|s| {
            (0..=horizon)
                .map(|t| state_transition_product(problem, s, t).expect("indices in range"))
                .collect()
        })
        .collect();

    let mut h = DMatrix::zeros((horizon + 1) * n, horizon * m);
    let mut g = DMatrix::zeros((horizon + 1) * n, horizon * n);
    let mut l = DMatrix::zeros((horizon + 1) * n, n);
    for (t, from_start) in phi[0].iter().enumerate() {
        set_block(&mut l, t, 0, from_start);
        for k in 0..t {
            set_block(&mut h, t, k, &(&phi[k + 1][t] * &problem.b[k]));
            set_block(&mut g, t, k, &phi[k + 1][t]);
        }
    }

    let mut c = DMatrix::zeros(horizon * p, (horizon + 1) * n);
    for t in 0..horizon {
        set_block(&mut c, t, t, &problem.c[t]);
    }
    let d = &c * &g;

    StackedMatrices {
        horizon,
        n,
        m,
        p,
        q: block_diag(&problem.q),
        r: block_diag(&problem.r),
        h,
        g,
        l,
        c,
        d,
    }
}

impl<T: Scalar> StackedMatrices<T> {
    /// `x = H u + G v + L x0`.
    pub fn state_trajectory(&self, u: &DVector<T>, v: &DVector<T>, x0: &DVector<T>) -> DVector<T> {
        &self.h * u + &self.g * v + &self.l * x0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

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

    #[test]
    fn example_system_is_accepted() {
        let p = scalar_example();
        assert_eq!((p.state_dim(), p.input_dim(), p.output_dim()), (1, 1, 1));
    }

    #[test]
    fn singular_input_weight_is_rejected() {
        let mut p = scalar_example();
        p.r[0] = DMatrix::zeros(1, 1);
        match validate_problem(p) {
            Err(Error::Definiteness { what, .. }) => assert_eq!(what, "R[0]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_input_shape_names_index() {
        let mut p = scalar_example();
        p.b[1] = DMatrix::zeros(1, 2);
        match validate_problem(p) {
            Err(Error::Dimension { what, .. }) => assert_eq!(what, "B[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn indefinite_state_weight_is_rejected() {
        let mut p = scalar_example();
        p.q[2] = DMatrix::from_element(1, 1, -1.0);
        assert!(matches!(
            validate_problem(p),
            Err(Error::Definiteness { .. })
        ));
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let mut p = scalar_example();
        p.horizon = 0;
        assert!(validate_problem(p).is_err());
    }

    #[test]
    fn transition_products() {
        let p = scalar_example();
        assert_eq!(state_transition_product(&p, 1, 1).unwrap()[(0, 0)], 1.0);
        assert_eq!(state_transition_product(&p, 2, 0).unwrap()[(0, 0)], 1.0);
        assert_eq!(state_transition_product(&p, 0, 2).unwrap()[(0, 0)], 1.0);
        assert_eq!(state_transition_product(&p, 0, 1).unwrap()[(0, 0)], -1.0);
        assert!(state_transition_product(&p, 0, 3).is_err());
    }

    #[test]
    fn example_stacked_matrices() {
        let st = assemble_stacked(&scalar_example());
        let expected_h = DMatrix::from_row_slice(3, 2, &[0., 0., 1., 0., -1., 1.]);
        assert_eq!(st.h, expected_h);
        assert_eq!(st.g, expected_h);
        assert_eq!(st.l, DMatrix::from_row_slice(3, 1, &[1., -1., 1.]));
        assert_eq!(st.d, DMatrix::from_row_slice(2, 2, &[0., 0., 1., 0.]));
        assert_eq!(st.c.shape(), (2, 3));
    }

    #[test]
    fn one_step_identity_system() {
        let i = DMatrix::<f64>::identity(2, 2);
        let p = ControlProblem::time_invariant(
            1,
            i.clone(),
            i.clone(),
            i.clone(),
            i.clone(),
            i.clone(),
            i.clone(),
            DVector::zeros(2),
        )
        .unwrap();
        let st = assemble_stacked(&p);
        let mut expected = DMatrix::zeros(4, 2);
        expected.view_mut((2, 0), (2, 2)).copy_from(&i);
        assert_eq!(st.h, expected);
        assert_eq!(st.g, expected);
        let mut l = DMatrix::zeros(4, 2);
        l.view_mut((0, 0), (2, 2)).copy_from(&i);
        l.view_mut((2, 0), (2, 2)).copy_from(&i);
        assert_eq!(st.l, l);
    }
}
