//! Monte Carlo closed-loop evaluation and the scalar stationary/non-stationary comparison.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, psd_sqrt, segment};
use crate::model::{assemble_stacked, ControlProblem};
use crate::policy::{
    aggregate_noise_matrices, expected_cost, f_matrices, LinearPolicy, NoiseMoments,
};
use crate::scalar::{lit, to_f64, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerKind<T: Scalar> {
    Gaussian {
        mean: DVector<T>,
        cov: DMatrix<T>,
    },
    Dirac {
        mean: DVector<T>,
    },
    /// Mixture `weight N(mean1, cov) + (1 - weight) N(mean2, cov)`.
    Bimodal {
        mean1: DVector<T>,
        mean2: DVector<T>,
        cov: DMatrix<T>,
        weight: T,
    },
}

/// Stationary per-step noise distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSampler<T: Scalar> {
    kind: SamplerKind<T>,
    /// Square root of the component covariance.
    factor: DMatrix<T>,
}

impl<T: Scalar> NoiseSampler<T> {
    pub fn gaussian(mean: DVector<T>, cov: DMatrix<T>) -> Result<Self> {
        check_component(&mean, &cov)?;
        let factor = psd_sqrt(&cov, "sampler covariance")?;
        Ok(NoiseSampler {
            kind: SamplerKind::Gaussian { mean, cov },
            factor,
        })
    }

    pub fn dirac(mean: DVector<T>) -> Self {
        let d = mean.len();
        NoiseSampler {
            kind: SamplerKind::Dirac { mean },
            factor: DMatrix::zeros(d, d),
        }
    }

    pub fn bimodal(
        mean1: DVector<T>,
        mean2: DVector<T>,
        cov: DMatrix<T>,
        weight: T,
    ) -> Result<Self> {
        check_component(&mean1, &cov)?;
        if mean2.len() != mean1.len() {
            return Err(Error::dimension("bimodal means", mean1.len(), mean2.len()));
        }
        if !(weight >= T::zero() && weight <= T::one()) {
            return Err(Error::InvalidParameter(format!(
                "mixture weight {weight} outside [0, 1]"
            )));
        }
        let factor = psd_sqrt(&cov, "sampler covariance")?;
        Ok(NoiseSampler {
            kind: SamplerKind::Bimodal {
                mean1,
                mean2,
                cov,
                weight,
            },
            factor,
        })
    }

    /// Equal-weight mixture of `N(m + offset, cov)` and `N(m - offset, cov)`.
    pub fn symmetric_bimodal(
        mean: DVector<T>,
        offset: DVector<T>,
        cov: DMatrix<T>,
    ) -> Result<Self> {
        Self::bimodal(&mean + &offset, &mean - &offset, cov, lit(0.5))
    }

    pub fn kind(&self) -> &SamplerKind<T> {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// Mean and covariance of one draw.
    pub fn moments(&self) -> (DVector<T>, DMatrix<T>) {
        match &self.kind {
            SamplerKind::Gaussian { mean, cov } => (mean.clone(), cov.clone()),
            SamplerKind::Dirac { mean } => (mean.clone(), DMatrix::zeros(mean.len(), mean.len())),
            SamplerKind::Bimodal {
                mean1,
                mean2,
                cov,
                weight,
            } => {
                let w = *weight;
                let mean = mean1 * w + mean2 * (T::one() - w);
                let diff = mean1 - mean2;
                let cov = cov + &diff * diff.transpose() * (w * (T::one() - w));
                (mean, cov)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<T> {
        let d = self.dim();
        let standard =
            |rng: &mut R| DVector::from_fn(d, |_, _| lit::<T>(rng.sample(StandardNormal)));
        match &self.kind {
            SamplerKind::Dirac { mean } => mean.clone(),
            SamplerKind::Gaussian { mean, .. } => mean + &self.factor * standard(rng),
            SamplerKind::Bimodal {
                mean1,
                mean2,
                weight,
                ..
            } => {
                let pick_first = rng.random::<f64>() < to_f64(*weight);
                let z = standard(rng);
                if pick_first {
                    mean1 + &self.factor * z
                } else {
                    mean2 + &self.factor * z
                }
            }
        }
    }
}

fn check_component<T: Scalar>(mean: &DVector<T>, cov: &DMatrix<T>) -> Result<()> {
    if cov.shape() != (mean.len(), mean.len()) {
        return Err(Error::dimension(
            "sampler covariance",
            format!("{0}x{0}", mean.len()),
            format!("{}x{}", cov.nrows(), cov.ncols()),
        ));
    }
    linalg::check_psd(cov, "sampler covariance")
}

/// Noise moments implied by a pair of samplers.
pub fn sampler_moments<T: Scalar>(v: &NoiseSampler<T>, w: &NoiseSampler<T>) -> NoiseMoments<T> {
    let (mean_v, cov_v) = v.moments();
    let (mean_w, cov_w) = w.moments();
    NoiseMoments {
        mean_v,
        cov_v,
        mean_w,
        cov_w,
    }
}

fn check_inputs<T: Scalar>(
    problem: &ControlProblem<T>,
    policy: &LinearPolicy<T>,
    v: &NoiseSampler<T>,
    w: &NoiseSampler<T>,
) -> Result<()> {
    if policy.horizon() != problem.horizon
        || policy.input_dim() != problem.input_dim()
        || policy.output_dim() != problem.output_dim()
    {
        return Err(Error::dimension(
            "policy (horizon, inputs, outputs)",
            format!(
                "({}, {}, {})",
                problem.horizon,
                problem.input_dim(),
                problem.output_dim()
            ),
            format!(
                "({}, {}, {})",
                policy.horizon(),
                policy.input_dim(),
                policy.output_dim()
            ),
        ));
    }
    if v.dim() != problem.state_dim() || w.dim() != problem.output_dim() {
        return Err(Error::dimension(
            "sampler dimensions (process, measurement)",
            format!("({}, {})", problem.state_dim(), problem.output_dim()),
            format!("({}, {})", v.dim(), w.dim()),
        ));
    }
    Ok(())
}

/// Realized cost of one closed-loop run with the given stacked noise sequences.
///
/// The controller sees purified outputs `y[t] - C[t] xhat[t]`, where `xhat` is the
/// noise-free replica driven by the same inputs.
pub fn rollout_cost<T: Scalar>(
    problem: &ControlProblem<T>,
    policy: &LinearPolicy<T>,
    v: &DVector<T>,
    w: &DVector<T>,
) -> T {
    let (n, p) = (problem.state_dim(), problem.output_dim());
    let mut x = problem.x0.clone();
    let mut replica = problem.x0.clone();
    let mut eta = DVector::zeros(problem.horizon * p);
    let mut cost = T::zero();
    for t in 0..problem.horizon {
        let c = &problem.c[t];
        let purified = c * (&x - &replica) + segment(w, t, p);
        eta.rows_mut(t * p, p).copy_from(&purified);
        let u = policy.input_at(t, &eta);
        cost += u.dot(&(&problem.r[t] * &u)) + x.dot(&(&problem.q[t] * &x));
        let drive = &problem.b[t] * &u;
        x = &problem.a[t] * &x + &drive + segment(v, t, n);
        replica = &problem.a[t] * &replica + drive;
    }
    cost + x.dot(&(&problem.q[problem.horizon] * &x))
}

fn draw_rollout<T: Scalar, R: Rng>(
    problem: &ControlProblem<T>,
    policy: &LinearPolicy<T>,
    v: &NoiseSampler<T>,
    w: &NoiseSampler<T>,
    rng: &mut R,
) -> T {
    let horizon = problem.horizon;
    let (n, p) = (problem.state_dim(), problem.output_dim());
    let mut vs = DVector::zeros(horizon * n);
    let mut ws = DVector::zeros(horizon * p);
    for t in 0..horizon {
        vs.rows_mut(t * n, n).copy_from(&v.sample(rng));
        ws.rows_mut(t * p, p).copy_from(&w.sample(rng));
    }
    rollout_cost(problem, policy, &vs, &ws)
}

/// Realized cost of a single closed-loop run, with noise drawn from `seed`.
pub fn simulate_cost<T: Scalar>(
    problem: &ControlProblem<T>,
    policy: &LinearPolicy<T>,
    v: &NoiseSampler<T>,
    w: &NoiseSampler<T>,
    seed: u64,
) -> Result<T> {
    check_inputs(problem, policy, v, w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(draw_rollout(problem, policy, v, w, &mut rng))
}

/// Rollouts per independently seeded chunk.
const CHUNK: usize = 4096;

/// Count, mean and sum of squared deviations, merged in a fixed order.
#[derive(Debug, Clone, Copy)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn of(values: &[f64]) -> Self {
        let count = values.len() as f64;
        let mean = pairwise_sum(values) / count;
        let dev: Vec<f64> = values.iter().map(|x| (x - mean) * (x - mean)).collect();
        Moments {
            count,
            mean,
            m2: pairwise_sum(&dev),
        }
    }

    fn merge(self, other: Moments) -> Moments {
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        Moments {
            count,
            mean: self.mean + delta * other.count / count,
            m2: self.m2 + other.m2 + delta * delta * self.count * other.count / count,
        }
    }
}

fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean realized cost and its standard error over `n_samples` independent rollouts.
///
/// Rollouts are split into chunks with independent ChaCha streams, so the result depends
/// only on `seed` and `n_samples`, not on the thread count.
pub fn monte_carlo_cost<T: Scalar>(
    problem: &ControlProblem<T>,
    policy: &LinearPolicy<T>,
    v: &NoiseSampler<T>,
    w: &NoiseSampler<T>,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_inputs(problem, policy, v, w)?;
    if n_samples == 0 {
        return Err(Error::InvalidParameter(
            "at least one sample is required".into(),
        ));
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(n_samples - c * CHUNK);
            let values: Vec<f64> = (0..len)
                .map(|_| to_f64(draw_rollout(problem, policy, v, w, &mut rng)))
                .collect();
            Moments::of(&values)
        })
        .collect();
    let total = parts
        .into_iter()
        .reduce(Moments::merge)
        .expect("at least one chunk");
    let variance = if total.count > 1.0 {
        total.m2 / (total.count - 1.0)
    } else {
        0.0
    };
    Ok((total.mean, (variance / total.count).sqrt()))
}

/// Analytic expected cost of `policy` under the samplers' moments.
pub fn analytic_cost<T: Scalar>(
    problem: &ControlProblem<T>,
    policy: &LinearPolicy<T>,
    v: &NoiseSampler<T>,
    w: &NoiseSampler<T>,
) -> Result<T> {
    check_inputs(problem, policy, v, w)?;
    let stacked = assemble_stacked(problem);
    let nq = aggregate_noise_matrices(&f_matrices(&stacked, policy, &problem.x0)?);
    Ok(expected_cost(&nq, &sampler_moments(v, w)))
}

/// One row of the stationary/non-stationary comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleRow {
    pub formulation: String,
    pub k1: f64,
    pub worst_case_cost: f64,
    pub adversary: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleReport {
    /// Non-stationary optimum, stationary optimum, stationary policy against a
    /// non-stationary adversary, non-stationary policy against a stationary adversary.
    pub rows: Vec<ExampleRow>,
}

impl ExampleReport {
    pub fn non_stationary(&self) -> &ExampleRow {
        &self.rows[0]
    }

    pub fn stationary(&self) -> &ExampleRow {
        &self.rows[1]
    }
}

/// `x[t+1] = -x[t] + u[t] + v[t]`, `y = x`, `T = 2`, `x0 = 0`, cost `x2^2 + (u0^2 + u1^2)/2`.
pub fn example_problem() -> ControlProblem<f64> {
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
    .expect("example problem is valid")
}

/// State feedback `u1 = K1 x1` as a purified-output policy (`x0 = 0` makes `u0` vanish and
/// `x1` equal to the purified output at `t = 1`).
pub fn example_policy(k1: f64) -> LinearPolicy<f64> {
    LinearPolicy::new(
        2,
        1,
        1,
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, k1]),
        DVector::zeros(2),
    )
    .expect("lower triangular")
}

/// Expected-cost coefficients of the example under policy `K1`: per-step noise moments
/// enter as `sum_t F[t][t] var[t] + mu' F mu`.
struct ExampleCost {
    f: [[f64; 2]; 2],
}

impl ExampleCost {
    fn new(k1: f64) -> Self {
        let problem = example_problem();
        let stacked = assemble_stacked(&problem);
        let fm =
            f_matrices(&stacked, &example_policy(k1), &problem.x0).expect("consistent example");
        let q = &fm.quad_v;
        ExampleCost {
            f: [[q[(0, 0)], q[(0, 1)]], [q[(1, 0)], q[(1, 1)]]],
        }
    }

    /// Boundary of the unit ball around `delta_0`: variance `1 - m^2`.
    fn non_stationary(&self, m0: f64, m1: f64) -> f64 {
        let f = &self.f;
        f[0][0] * (1.0 - m0 * m0)
            + f[1][1] * (1.0 - m1 * m1)
            + f[0][0] * m0 * m0
            + (f[0][1] + f[1][0]) * m0 * m1
            + f[1][1] * m1 * m1
    }

    fn stationary(&self, m: f64) -> f64 {
        self.non_stationary(m, m)
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let count = ((hi - lo) / step).round() as usize;
    (0..=count).map(move |i| (lo + i as f64 * step).min(hi))
}

/// Maximizer of `f` on `[lo, hi]`: grid at `step`, then golden section around the best
/// grid point. Returns `(argmax, max, max - min over the grid)`.
fn maximize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> (f64, f64, f64) {
    let (mut best_x, mut best, mut worst) = (lo, f64::NEG_INFINITY, f64::INFINITY);
    for x in grid(lo, hi, step) {
        let val = f(x);
        if val > best {
            best = val;
            best_x = x;
        }
        worst = worst.min(val);
    }
    let (a, b) = ((best_x - step).max(lo), (best_x + step).min(hi));
    let (x, val) = golden_section(|x| -f(x), a, b, 1e-12);
    if -val > best {
        (x, -val, best - worst)
    } else {
        (best_x, best, best - worst)
    }
}

/// Minimizer of a unimodal function on `[a, b]`.
fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Worst case over the non-stationary boundary: coarse grid at `1e-2`, then a `1e-3` grid
/// around the best coarse point. Returns `(value, m0, m1, spread)`.
fn non_stationary_worst(cost: &ExampleCost) -> (f64, f64, f64, f64) {
    let (mut best, mut worst) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut b0, mut b1) = (0.0, 0.0);
    for m0 in grid(-1.0, 1.0, 1e-2) {
        for m1 in grid(-1.0, 1.0, 1e-2) {
            let val = cost.non_stationary(m0, m1);
            if val > best {
                best = val;
                b0 = m0;
                b1 = m1;
            }
            worst = worst.min(val);
        }
    }
    let (c0, c1) = (b0, b1);
    for m0 in grid((c0 - 1e-2).max(-1.0), (c0 + 1e-2).min(1.0), 1e-3) {
        for m1 in grid((c1 - 1e-2).max(-1.0), (c1 + 1e-2).min(1.0), 1e-3) {
            let val = cost.non_stationary(m0, m1);
            if val > best {
                best = val;
                b0 = m0;
                b1 = m1;
            }
        }
    }
    (best, b0, b1, best - worst)
}

fn stationary_worst(cost: &ExampleCost) -> (f64, f64, f64) {
    maximize_1d(|m| cost.stationary(m), -1.0, 1.0, 1e-3)
}

/// Minimizes `worst(K1)` over `K1` by a `1e-2` grid on `[-1, 3]` and golden-section
/// refinement.
fn minimize_k1(worst: impl Fn(f64) -> f64) -> (f64, f64) {
    let (mut best_k, mut best) = (0.0, f64::INFINITY);
    for k in grid(-1.0, 3.0, 1e-2) {
        let val = worst(k);
        if val < best {
            best = val;
            best_k = k;
        }
    }
    let (k, val) = golden_section(&worst, best_k - 1e-2, best_k + 1e-2, 1e-10);
    if val < best {
        (k, val)
    } else {
        (best_k, best)
    }
}

/// Flat inner objectives mean every boundary distribution is a worst case.
const FLAT: f64 = 1e-9;

fn describe(m: f64) -> String {
    let var = 1.0 - m * m;
    if var.abs() < 1e-9 {
        format!("delta({})", short(m))
    } else {
        format!("N({},{})", short(m), short(var))
    }
}

fn short(x: f64) -> String {
    let x = if x.abs() < 5e-7 { 0.0 } else { x };
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

const ANY_BOUNDARY: &str = "boundary Diracs/Gaussians";

/// Worst-case comparison of stationary and non-stationary unit Wasserstein balls around
/// `delta_0` for the scalar example, over state feedback `u1 = K1 x1`.
pub fn reproduce_motivating_example() -> ExampleReport {
    let ns_value = |k: f64| non_stationary_worst(&ExampleCost::new(k)).0;
    let st_value = |k: f64| stationary_worst(&ExampleCost::new(k)).1;

    let (k_ns, _) = minimize_k1(ns_value);
    let (k_st, _) = minimize_k1(st_value);

    let ns_at = |k: f64| {
        let (val, m0, m1, spread) = non_stationary_worst(&ExampleCost::new(k));
        let adversary = if spread < FLAT {
            ANY_BOUNDARY.to_string()
        } else {
            format!("{} x {}", describe(m0), describe(m1))
        };
        (val, adversary)
    };
    let st_at = |k: f64| {
        let (m, val, spread) = stationary_worst(&ExampleCost::new(k));
        let adversary = if spread < FLAT {
            ANY_BOUNDARY.to_string()
        } else {
            describe(m)
        };
        (val, adversary)
    };

    let rows = [
        ("non-stationary", k_ns, ns_at(k_ns)),
        ("stationary", k_st, st_at(k_st)),
        (
            "stationary policy vs non-stationary adversary",
            k_st,
            ns_at(k_st),
        ),
        (
            "non-stationary policy vs stationary adversary",
            k_ns,
            st_at(k_ns),
        ),
    ]
    .into_iter()
    .map(
        |(formulation, k1, (worst_case_cost, adversary))| ExampleRow {
            formulation: formulation.to_string(),
            k1,
            worst_case_cost,
            adversary,
        },
    )
    .collect();
    ExampleReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn noise_free_zero_trajectory() {
        let problem = example_problem();
        let zero = NoiseSampler::dirac(DVector::zeros(1));
        let cost = simulate_cost(&problem, &example_policy(0.5), &zero, &zero, 3).unwrap();
        assert_eq!(cost, 0.0);
        let (mean, stderr) =
            monte_carlo_cost(&problem, &example_policy(0.5), &zero, &zero, 100, 3).unwrap();
        assert_eq!((mean, stderr), (0.0, 0.0));
    }

    #[test]
    fn dirac_samples_are_deterministic() {
        let problem = example_problem();
        let v = NoiseSampler::dirac(DVector::from_element(1, 0.7));
        let w = NoiseSampler::dirac(DVector::zeros(1));
        let single = simulate_cost(&problem, &example_policy(2.0 / 3.0), &v, &w, 1).unwrap();
        let (mean, stderr) =
            monte_carlo_cost(&problem, &example_policy(2.0 / 3.0), &v, &w, 5000, 9).unwrap();
        assert!(stderr < 1e-12);
        assert_relative_eq!(mean, single, epsilon = 1e-14);
        // x1 = 0.7, u1 = 0.7 * 2/3, x2 = -0.7 + u1 + 0.7
        let u1 = 0.7 * 2.0 / 3.0;
        assert_relative_eq!(single, u1 * u1 + 0.5 * u1 * u1, epsilon = 1e-14);
    }

    #[test]
    fn opposite_diracs_cost_two() {
        let problem = example_problem();
        let v = DVector::from_vec(vec![-1.0, 1.0]);
        let cost = rollout_cost(&problem, &example_policy(2.0 / 3.0), &v, &DVector::zeros(2));
        assert_relative_eq!(cost, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn seeds_reproduce_paths() {
        let problem = example_problem();
        let g = NoiseSampler::gaussian(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let z = NoiseSampler::dirac(DVector::zeros(1));
        let a = monte_carlo_cost(&problem, &example_policy(0.4), &g, &z, 10_000, 5).unwrap();
        let b = monte_carlo_cost(&problem, &example_policy(0.4), &g, &z, 10_000, 5).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo_cost(&problem, &example_policy(0.4), &g, &z, 10_000, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bimodal_moments() {
        let s = NoiseSampler::symmetric_bimodal(
            DVector::from_element(1, 0.5),
            DVector::from_element(1, 1.0),
            DMatrix::from_element(1, 1, 0.25),
        )
        .unwrap();
        let (m, c) = s.moments();
        assert_relative_eq!(m[0], 0.5);
        assert_relative_eq!(c[(0, 0)], 1.25);
        assert!(NoiseSampler::bimodal(
            DVector::zeros(1),
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            1.5
        )
        .is_err());
    }

    #[test]
    fn example_cost_matches_closed_form() {
        for k in [-0.5, 0.0, 2.0 / 3.0, 1.0, 1.7] {
            let c = ExampleCost::new(k);
            for (m0, m1) in [(0.0, 0.0), (-1.0, 1.0), (0.3, -0.6)] {
                let (s0, s1) = (1.0 - m0 * m0, 1.0 - m1 * m1);
                let expected = (k - 1.0) * (k - 1.0) * s0
                    + s1
                    + ((k - 1.0) * m0 + m1) * ((k - 1.0) * m0 + m1)
                    + k * k / 2.0 * (s0 + m0 * m0);
                assert_relative_eq!(c.non_stationary(m0, m1), expected, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, v) = golden_section(|x| (x - 0.3) * (x - 0.3) + 1.0, -1.0, 2.0, 1e-10);
        assert_relative_eq!(x, 0.3, epsilon = 1e-7);
        assert_relative_eq!(v, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn short_formatting() {
        assert_eq!(short(-1.0), "-1");
        assert_eq!(short(0.0), "0");
        assert_eq!(short(-1e-9), "0");
        assert_eq!(short(0.25), "0.25");
    }
}
