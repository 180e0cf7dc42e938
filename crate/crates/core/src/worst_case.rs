//! Worst-case stationary noise moments against a fixed linear policy.
//!
//! Over Gelbrich balls around zero-mean references, the adversary's optimum is an affine
//! pushforward `v = (I - P_v/lambda_v)^{-1} v_ref + m_v` (and likewise for `w`), where the
//! multipliers and means solve two scalar radius equations coupled with a linear mean
//! system. Those equations are the stationarity conditions of the convex dual
//!
//! ```text
//! g(lv, lw) = lv rho_v^2 + lv tr(Sv_ref P_v (lv I - P_v)^{-1}) + (same for w) + n' M(lv, lw)^{-1} n / 4
//! ```
//!
//! on the region where `M(lv, lw)`, the mean-system matrix, is positive definite. Each
//! partial derivative of `g` is minus a radius residual, so each residual is decreasing in
//! its own multiplier. The solver exploits this with coordinate-wise safeguarded bisection
//! and falls back to a two-variable Newton iteration if the sweeps stall.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::gauss_ot::{gelbrich_distance, GaussianSpec};
use crate::linalg::{self, symmetrize};
use crate::policy::{NoiseMoments, NoiseQuadratic};
use crate::scalar::{lit, rel, to_f64, Scalar};

/// Minimum eigenvalue a reference covariance must exceed.
pub const REFERENCE_MIN_EIGENVALUE: f64 = 1e-12;

/// Reference covariances and Wasserstein radii of the two ambiguity balls.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySpec<T: Scalar> {
    pub ref_cov_v: DMatrix<T>,
    pub ref_cov_w: DMatrix<T>,
    pub rho_v: T,
    pub rho_w: T,
}

impl<T: Scalar> AmbiguitySpec<T> {
    /// Checks shapes, symmetry, semidefiniteness and nonnegative radii. Positive
    /// definiteness is enforced by [`solve_worst_case`].
    pub fn new(ref_cov_v: DMatrix<T>, ref_cov_w: DMatrix<T>, rho_v: T, rho_w: T) -> Result<Self> {
        linalg::check_psd(&ref_cov_v, "process noise reference covariance")?;
        linalg::check_psd(&ref_cov_w, "measurement noise reference covariance")?;
        if rho_v < T::zero() || rho_w < T::zero() || !rho_v.is_finite() || !rho_w.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "radii must be finite and nonnegative (got {rho_v}, {rho_w})"
            )));
        }
        Ok(AmbiguitySpec {
            ref_cov_v,
            ref_cov_w,
            rho_v,
            rho_w,
        })
    }

    /// Zero-mean moments at the reference covariances.
    pub fn reference_moments(&self) -> NoiseMoments<T> {
        NoiseMoments {
            mean_v: DVector::zeros(self.ref_cov_v.nrows()),
            cov_v: self.ref_cov_v.clone(),
            mean_w: DVector::zeros(self.ref_cov_w.nrows()),
            cov_w: self.ref_cov_w.clone(),
        }
    }

    /// Gelbrich distances of `moments` from the two references.
    pub fn distances(&self, moments: &NoiseMoments<T>) -> Result<(T, T)> {
        let dv = gelbrich_distance(
            &GaussianSpec::new(moments.mean_v.clone(), moments.cov_v.clone())?,
            &GaussianSpec::centered(self.ref_cov_v.clone())?,
        )?;
        let dw = gelbrich_distance(
            &GaussianSpec::new(moments.mean_w.clone(), moments.cov_w.clone())?,
            &GaussianSpec::centered(self.ref_cov_w.clone())?,
        )?;
        Ok((dv, dw))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Joint tolerance on the radius equations, relative to `rho^2`.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Factor by which the upper bisection bracket grows until the residual turns negative.
    pub bracket_expansion: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-10,
            max_iter: 200,
            bracket_expansion: 2.0,
        }
    }
}

/// How a noise channel was handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelStatus {
    /// Radius equation active; finite multiplier above the largest eigenvalue of `P`.
    Active,
    /// Zero radius: the channel is pinned to its reference (multiplier reported as infinite).
    Frozen,
    /// The cost does not depend on this channel; it stays at its reference
    /// (multiplier reported as zero).
    Inert,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals<T: Scalar> {
    /// `tr(Sv_ref P_v^2 (lv I - P_v)^{-2}) + |m_v|^2 - rho_v^2` (zero for non-active channels).
    pub radius_v: T,
    pub radius_w: T,
    /// `|M m - n/2|` relative to `max(1, |n/2|)`.
    pub mean_system: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseSolution<T: Scalar> {
    pub lambda_v: T,
    pub lambda_w: T,
    pub mean_v: DVector<T>,
    pub mean_w: DVector<T>,
    pub cov_v: DMatrix<T>,
    pub cov_w: DMatrix<T>,
    /// Worst-case expected cost including the policy's constant term.
    pub cost: T,
    /// Worst-case cost without the constant term.
    pub cost_core: T,
    pub residuals: Residuals<T>,
    pub status_v: ChannelStatus,
    pub status_w: ChannelStatus,
    pub iterations: usize,
}

impl<T: Scalar> WorstCaseSolution<T> {
    pub fn moments(&self) -> NoiseMoments<T> {
        NoiseMoments {
            mean_v: self.mean_v.clone(),
            cov_v: self.cov_v.clone(),
            mean_w: self.mean_w.clone(),
            cov_w: self.cov_w.clone(),
        }
    }
}

/// `(I - P/lambda)^{-1}`, the linear part of the worst-case pushforward.
pub fn transport_matrix<T: Scalar>(p: &DMatrix<T>, lambda: T) -> Result<DMatrix<T>> {
    let eig = linalg::sym_eigen(p);
    let lmax = eig.eigenvalues.max();
    if lambda <= lmax {
        return Err(Error::MultiplierBound {
            channel: "given",
            lambda: to_f64(lambda),
            lambda_max: to_f64(lmax),
        });
    }
    let scaled = eig.eigenvalues.map(|ev| lambda / (lambda - ev));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&scaled) * eig.eigenvectors.transpose())
}

/// Per-channel data in the eigenbasis of its quadratic.
struct Channel<T: Scalar> {
    name: &'static str,
    eig: SymmetricEigen<T, nalgebra::Dyn>,
    /// Diagonal of `V' Sigma_ref V`.
    ref_diag: DVector<T>,
    lambda_max: T,
    rho: T,
    status: ChannelStatus,
}

impl<T: Scalar> Channel<T> {
    fn new(
        name: &'static str,
        p: &DMatrix<T>,
        ref_cov: &DMatrix<T>,
        rho: T,
        status: ChannelStatus,
    ) -> Self {
        let eig = linalg::sym_eigen(p);
        let ref_diag = (eig.eigenvectors.transpose() * ref_cov * &eig.eigenvectors).diagonal();
        let lambda_max = if p.is_empty() {
            T::zero()
        } else {
            eig.eigenvalues.max()
        };
        Channel {
            name,
            eig,
            ref_diag,
            lambda_max,
            rho,
            status,
        }
    }

    fn is_active(&self) -> bool {
        self.status == ChannelStatus::Active
    }

    /// `tr(Sigma_ref P^2 (lambda I - P)^{-2})`.
    fn spread(&self, lambda: T) -> T {
        self.eig
            .eigenvalues
            .iter()
            .zip(self.ref_diag.iter())
            .fold(T::zero(), |acc, (&ev, &d)| {
                let r = ev / (lambda - ev);
                acc + d * r * r
            })
    }

    /// `lambda tr(Sigma_ref P (lambda I - P)^{-1})`.
    fn dual_trace(&self, lambda: T) -> T {
        self.eig
            .eigenvalues
            .iter()
            .zip(self.ref_diag.iter())
            .fold(T::zero(), |acc, (&ev, &d)| {
                acc + lambda * d * ev / (lambda - ev)
            })
    }

    fn check_bound(&self, lambda: T) -> Result<()> {
        if lambda <= self.lambda_max {
            return Err(Error::MultiplierBound {
                channel: self.name,
                lambda: to_f64(lambda),
                lambda_max: to_f64(self.lambda_max),
            });
        }
        Ok(())
    }
}

/// `tr(Sigma_ref P^2 (lambda I - P)^{-2}) + |m|^2 - rho^2`.
pub fn radius_residual<T: Scalar>(
    p: &DMatrix<T>,
    ref_cov: &DMatrix<T>,
    lambda: T,
    mean: &DVector<T>,
    rho: T,
) -> Result<T> {
    if ref_cov.shape() != p.shape() || mean.len() != p.nrows() {
        return Err(Error::dimension(
            "radius equation operands",
            format!("{0}x{0} reference and mean of length {0}", p.nrows()),
            format!(
                "{}x{} reference and mean of length {}",
                ref_cov.nrows(),
                ref_cov.ncols(),
                mean.len()
            ),
        ));
    }
    let ch = Channel::new("given", p, ref_cov, rho, ChannelStatus::Active);
    ch.check_bound(lambda)?;
    Ok(ch.spread(lambda) + mean.norm_squared() - rho * rho)
}

/// Mean-system matrix `[[lv I - P_v - N_v, -S'/2], [-S/2, lw I - P_w - N_w]]` restricted to
/// the selected channels (`N` symmetrized).
fn mean_system_matrix<T: Scalar>(
    nq: &NoiseQuadratic<T>,
    lambda_v: T,
    lambda_w: T,
    use_v: bool,
    use_w: bool,
) -> DMatrix<T> {
    let n = if use_v { nq.state_dim() } else { 0 };
    let p = if use_w { nq.output_dim() } else { 0 };
    let half = lit::<T>(0.5);
    let mut mat = DMatrix::zeros(n + p, n + p);
    if use_v {
        let blk = DMatrix::identity(n, n) * lambda_v - &nq.p_v - symmetrize(&nq.cross_v);
        mat.view_mut((0, 0), (n, n)).copy_from(&blk);
    }
    if use_w {
        let blk = DMatrix::identity(p, p) * lambda_w - &nq.p_w - symmetrize(&nq.cross_w);
        mat.view_mut((n, n), (p, p)).copy_from(&blk);
    }
    if use_v && use_w {
        mat.view_mut((0, n), (n, p))
            .copy_from(&(nq.s.transpose() * -half));
        mat.view_mut((n, 0), (p, n)).copy_from(&(&nq.s * -half));
    }
    mat
}

fn mean_system_rhs<T: Scalar>(nq: &NoiseQuadratic<T>, use_v: bool, use_w: bool) -> DVector<T> {
    let half = lit::<T>(0.5);
    let mut parts: Vec<T> = Vec::new();
    if use_v {
        parts.extend((&nq.lin_v * half).iter());
    }
    if use_w {
        parts.extend((&nq.lin_w * half).iter());
    }
    DVector::from_vec(parts)
}

fn solve_reduced<T: Scalar>(
    nq: &NoiseQuadratic<T>,
    lambda_v: T,
    lambda_w: T,
    use_v: bool,
    use_w: bool,
) -> Result<(DVector<T>, DVector<T>)> {
    let (n, p) = (nq.state_dim(), nq.output_dim());
    let mat = mean_system_matrix(nq, lambda_v, lambda_w, use_v, use_w);
    let rhs = mean_system_rhs(nq, use_v, use_w);
    if mat.is_empty() {
        return Ok((DVector::zeros(n), DVector::zeros(p)));
    }
    let sv = mat.singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    let dim = lit::<T>(mat.nrows() as f64);
    if smin <= T::default_epsilon() * dim * smax.max(T::one()) {
        return Err(Error::SingularMeanSystem {
            min_singular_value: to_f64(smin),
        });
    }
    let sol = mat.lu().solve(&rhs).ok_or(Error::SingularMeanSystem {
        min_singular_value: to_f64(smin),
    })?;
    let mut mv = DVector::zeros(n);
    let mut mw = DVector::zeros(p);
    let mut k = 0;
    if use_v {
        mv.copy_from(&sol.rows(0, n));
        k = n;
    }
    if use_w {
        mw.copy_from(&sol.rows(k, p));
    }
    Ok((mv, mw))
}

/// Solves the block mean system for both channels at the given multipliers.
pub fn mean_system_solve<T: Scalar>(
    nq: &NoiseQuadratic<T>,
    lambda_v: T,
    lambda_w: T,
) -> Result<(DVector<T>, DVector<T>)> {
    let lv_max = linalg::lambda_max(&nq.p_v);
    if lambda_v <= lv_max {
        return Err(Error::MultiplierBound {
            channel: "process",
            lambda: to_f64(lambda_v),
            lambda_max: to_f64(lv_max),
        });
    }
    let lw_max = linalg::lambda_max(&nq.p_w);
    if lambda_w <= lw_max {
        return Err(Error::MultiplierBound {
            channel: "measurement",
            lambda: to_f64(lambda_w),
            lambda_max: to_f64(lw_max),
        });
    }
    solve_reduced(nq, lambda_v, lambda_w, true, true)
}

/// `|M m - n/2| / max(1, |n/2|)` over the active channels.
fn mean_system_residual<T: Scalar>(
    nq: &NoiseQuadratic<T>,
    lambda_v: T,
    lambda_w: T,
    mean_v: &DVector<T>,
    mean_w: &DVector<T>,
    use_v: bool,
    use_w: bool,
) -> T {
    let mat = mean_system_matrix(nq, lambda_v, lambda_w, use_v, use_w);
    if mat.is_empty() {
        return T::zero();
    }
    let rhs = mean_system_rhs(nq, use_v, use_w);
    let mut parts: Vec<T> = Vec::new();
    if use_v {
        parts.extend(mean_v.iter());
    }
    if use_w {
        parts.extend(mean_w.iter());
    }
    let m = DVector::from_vec(parts);
    (mat * m - &rhs).norm() / T::one().max(rhs.norm())
}

struct Problem<'a, T: Scalar> {
    nq: &'a NoiseQuadratic<T>,
    v: Channel<T>,
    w: Channel<T>,
    opts: SolverOptions,
    /// Absolute offset keeping bisection brackets strictly inside the domain.
    margin: T,
}

impl<T: Scalar> Problem<'_, T> {
    fn means(&self, lv: T, lw: T) -> Result<(DVector<T>, DVector<T>)> {
        solve_reduced(self.nq, lv, lw, self.v.is_active(), self.w.is_active())
    }

    /// Radius residuals; a singular mean system is retried at a slightly larger multiplier.
    fn residuals(&self, lv: T, lw: T) -> Result<(T, T, DVector<T>, DVector<T>)> {
        let bump = rel::<T>(1e-9);
        let (mut lv, mut lw) = (lv, lw);
        let mut last = None;
        for _ in 0..5 {
            match self.means(lv, lw) {
                Ok((mv, mw)) => {
                    let rv = if self.v.is_active() {
                        self.v.spread(lv) + mv.norm_squared() - self.v.rho * self.v.rho
                    } else {
                        T::zero()
                    };
                    let rw = if self.w.is_active() {
                        self.w.spread(lw) + mw.norm_squared() - self.w.rho * self.w.rho
                    } else {
                        T::zero()
                    };
                    return Ok((rv, rw, mv, mw));
                }
                Err(e) => {
                    last = Some(e);
                    if self.v.is_active() {
                        lv += bump * (T::one() + lv.abs());
                    }
                    if self.w.is_active() {
                        lw += bump * (T::one() + lw.abs());
                    }
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    /// Smallest multiplier for the process channel keeping the mean system positive definite.
    fn lower_v(&self, lw: T) -> T {
        let nq = self.nq;
        let mut k = &nq.p_v + symmetrize(&nq.cross_v);
        if self.w.is_active() {
            let p = nq.output_dim();
            let wblk = DMatrix::identity(p, p) * lw - &nq.p_w - symmetrize(&nq.cross_w);
            if let Some(inv) = wblk.try_inverse() {
                k += nq.s.transpose() * inv * &nq.s * lit::<T>(0.25);
            }
        }
        self.v.lambda_max.max(linalg::lambda_max(&k))
    }

    fn lower_w(&self, lv: T) -> T {
        let nq = self.nq;
        let mut k = &nq.p_w + symmetrize(&nq.cross_w);
        if self.v.is_active() {
            let n = nq.state_dim();
            let vblk = DMatrix::identity(n, n) * lv - &nq.p_v - symmetrize(&nq.cross_v);
            if let Some(inv) = vblk.try_inverse() {
                k += &nq.s * inv * nq.s.transpose() * lit::<T>(0.25);
            }
        }
        self.w.lambda_max.max(linalg::lambda_max(&k))
    }

    fn inside(&self, bound: T) -> T {
        bound + bound.abs() * rel::<T>(1e-10) + self.margin
    }

    /// Root of a decreasing residual on `(lo, inf)` by bracket expansion and bisection.
    fn bisect(&self, lo: T, f: impl Fn(T) -> Result<T>) -> Result<T> {
        let mut lo = lo;
        if f(lo)? <= T::zero() {
            return Ok(lo);
        }
        let expansion = lit::<T>(self.opts.bracket_expansion.max(1.0 + 1e-3));
        let mut width = lo.abs().max(T::one());
        let mut hi = lo + width;
        let mut grown = 0;
        while f(hi)? > T::zero() {
            lo = hi;
            width *= expansion;
            hi = lo + width;
            grown += 1;
            if grown > 4000 || !hi.is_finite() {
                return Err(Error::NoConvergence {
                    solver: "multiplier bracket",
                    iterations: grown,
                    residual: f64::INFINITY,
                });
            }
        }
        let two = lit::<T>(2.0);
        for _ in 0..400 {
            let mid = (lo + hi) / two;
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid)? > T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (flo, fhi) = (f(lo)?, f(hi)?);
        Ok(if flo.abs() < fhi.abs() { lo } else { hi })
    }

    fn normalized(&self, rv: T, rw: T) -> T {
        let tiny = lit::<T>(1e-300);
        let nv = if self.v.is_active() {
            rv.abs() / (self.v.rho * self.v.rho).max(tiny)
        } else {
            T::zero()
        };
        let nw = if self.w.is_active() {
            rw.abs() / (self.w.rho * self.w.rho).max(tiny)
        } else {
            T::zero()
        };
        nv.max(nw)
    }

    fn newton(&self, mut lv: T, mut lw: T, budget: usize) -> Result<(T, T, usize)> {
        let tol = lit::<T>(self.opts.tolerance);
        let feasible = |lv: T, lw: T| lv > self.lower_v(lw) && lw > self.lower_w(lv);
        for it in 0..budget {
            let (rv, rw, _, _) = self.residuals(lv, lw)?;
            let norm = self.normalized(rv, rw);
            if norm <= tol {
                return Ok((lv, lw, it));
            }
            let hv = lit::<T>(1e-7) * (T::one() + lv.abs());
            let hw = lit::<T>(1e-7) * (T::one() + lw.abs());
            let (rv_v, rw_v, _, _) = self.residuals(lv + hv, lw)?;
            let (rv_w, rw_w, _, _) = self.residuals(lv, lw + hw)?;
            let jac = nalgebra::Matrix2::new(
                (rv_v - rv) / hv,
                (rv_w - rv) / hw,
                (rw_v - rw) / hv,
                (rw_w - rw) / hw,
            );
            let step = match jac.try_inverse() {
                Some(inv) => inv * nalgebra::Vector2::new(-rv, -rw),
                None => break,
            };
            let mut t = T::one();
            let mut moved = false;
            for _ in 0..60 {
                let (cv, cw) = (lv + step[0] * t, lw + step[1] * t);
                if feasible(cv, cw) {
                    if let Ok((nrv, nrw, _, _)) = self.residuals(cv, cw) {
                        if self.normalized(nrv, nrw) < norm {
                            lv = cv;
                            lw = cw;
                            moved = true;
                            break;
                        }
                    }
                }
                t *= lit::<T>(0.5);
            }
            if !moved {
                break;
            }
        }
        let (rv, rw, _, _) = self.residuals(lv, lw)?;
        Err(Error::NoConvergence {
            solver: "worst-case multipliers",
            iterations: budget,
            residual: to_f64(self.normalized(rv, rw)),
        })
    }

    fn solve_multipliers(&self) -> Result<(T, T, usize)> {
        let nq = self.nq;
        let (n, p) = (nq.state_dim(), nq.output_dim());
        // Strictly feasible start: M(l, l) is positive definite once l exceeds the largest
        // eigenvalue of the symmetric block quadratic.
        let mut full = DMatrix::zeros(n + p, n + p);
        full.view_mut((0, 0), (n, n))
            .copy_from(&(&nq.p_v + symmetrize(&nq.cross_v)));
        full.view_mut((n, n), (p, p))
            .copy_from(&(&nq.p_w + symmetrize(&nq.cross_w)));
        full.view_mut((0, n), (n, p))
            .copy_from(&(nq.s.transpose() * lit::<T>(0.5)));
        full.view_mut((n, 0), (p, n))
            .copy_from(&(&nq.s * lit::<T>(0.5)));
        let top = linalg::lambda_max(&full)
            .max(self.v.lambda_max)
            .max(self.w.lambda_max)
            .max(T::zero());
        let start = T::one() + top * lit::<T>(2.0);
        let (mut lv, mut lw) = (start, start);

        let tol = lit::<T>(self.opts.tolerance);
        let mut history: Vec<T> = Vec::new();
        for iter in 1..=self.opts.max_iter {
            if self.v.is_active() {
                let lo = self.inside(self.lower_v(lw));
                lv = self.bisect(lo, |x| self.residuals(x, lw).map(|r| r.0))?;
            }
            if self.w.is_active() {
                let lo = self.inside(self.lower_w(lv));
                lw = self.bisect(lo, |x| self.residuals(lv, x).map(|r| r.1))?;
            }
            let (rv, rw, _, _) = self.residuals(lv, lw)?;
            let norm = self.normalized(rv, rw);
            if norm <= tol {
                return Ok((lv, lw, iter));
            }
            history.push(norm);
            if history.len() > 5 {
                let old = history[history.len() - 6];
                if (old - norm) <= rel::<T>(1e-14) * old {
                    let (lv, lw, extra) = self.newton(lv, lw, self.opts.max_iter - iter)?;
                    return Ok((lv, lw, iter + extra));
                }
            }
        }
        let (rv, rw, _, _) = self.residuals(lv, lw)?;
        Err(Error::NoConvergence {
            solver: "worst-case multipliers",
            iterations: self.opts.max_iter,
            residual: to_f64(self.normalized(rv, rw)),
        })
    }
}

fn channel_is_inert<T: Scalar>(
    quad: &DMatrix<T>,
    cross: &DMatrix<T>,
    lin: &DVector<T>,
    coupling: &DMatrix<T>,
    tiny: T,
) -> bool {
    quad.amax() <= tiny && cross.amax() <= tiny && lin.amax() <= tiny && coupling.amax() <= tiny
}

/// Worst-case moments, multipliers and cost of the quadratic over the two Gelbrich balls.
pub fn solve_worst_case<T: Scalar>(
    nq: &NoiseQuadratic<T>,
    amb: &AmbiguitySpec<T>,
    opts: &SolverOptions,
) -> Result<WorstCaseSolution<T>> {
    let (n, p) = (nq.state_dim(), nq.output_dim());
    if amb.ref_cov_v.nrows() != n || amb.ref_cov_w.nrows() != p {
        return Err(Error::dimension(
            "reference covariances",
            format!("{n}x{n} and {p}x{p}"),
            format!(
                "{0}x{0} and {1}x{1}",
                amb.ref_cov_v.nrows(),
                amb.ref_cov_w.nrows()
            ),
        ));
    }
    // Frozen channels never touch the transport map, so only open balls need a PD reference.
    for (name, cov, rho) in [
        ("process", &amb.ref_cov_v, amb.rho_v),
        ("measurement", &amb.ref_cov_w, amb.rho_w),
    ] {
        let min = linalg::lambda_min(cov);
        if rho > T::zero() && min <= lit(REFERENCE_MIN_EIGENVALUE) {
            return Err(Error::DegenerateReference {
                channel: name,
                min_eigenvalue: to_f64(min),
            });
        }
    }
    if opts.tolerance.is_nan()
        || opts.tolerance <= 0.0
        || opts.max_iter == 0
        || opts.bracket_expansion.is_nan()
        || opts.bracket_expansion <= 1.0
    {
        return Err(Error::InvalidParameter(format!(
            "solver options must have positive tolerance, max_iter and expansion > 1 (got {opts:?})"
        )));
    }

    let scale = T::one().max(nq.scale());
    let tiny = rel::<T>(1e-14) * scale;
    let status = |rho: T, inert: bool| {
        if rho == T::zero() {
            ChannelStatus::Frozen
        } else if inert {
            ChannelStatus::Inert
        } else {
            ChannelStatus::Active
        }
    };
    let status_v = status(
        amb.rho_v,
        channel_is_inert(&nq.p_v, &nq.cross_v, &nq.lin_v, &nq.s, tiny),
    );
    let status_w = status(
        amb.rho_w,
        channel_is_inert(&nq.p_w, &nq.cross_w, &nq.lin_w, &nq.s, tiny),
    );
    let problem = Problem {
        nq,
        v: Channel::new("process", &nq.p_v, &amb.ref_cov_v, amb.rho_v, status_v),
        w: Channel::new("measurement", &nq.p_w, &amb.ref_cov_w, amb.rho_w, status_w),
        opts: *opts,
        margin: rel::<T>(1e-14) * scale,
    };

    let (lv, lw, iterations) = if problem.v.is_active() || problem.w.is_active() {
        problem.solve_multipliers()?
    } else {
        (T::zero(), T::zero(), 0)
    };
    let (rv, rw, mean_v, mean_w) = problem.residuals(lv, lw)?;

    let finish = |ch: &Channel<T>,
                  lambda: T,
                  ref_cov: &DMatrix<T>,
                  quad: &DMatrix<T>,
                  mean: &DVector<T>,
                  lin: &DVector<T>|
     -> Result<(T, DMatrix<T>, T)> {
        match ch.status {
            ChannelStatus::Active => {
                let a = transport_matrix(quad, lambda)?;
                let cov = symmetrize(&(&a * ref_cov * &a));
                let core = lambda * ch.rho * ch.rho
                    + ch.dual_trace(lambda)
                    + mean.dot(lin) * lit::<T>(0.5);
                Ok((lambda, cov, core))
            }
            ChannelStatus::Frozen => Ok((
                T::one() / T::zero(),
                ref_cov.clone(),
                (quad * ref_cov).trace(),
            )),
            ChannelStatus::Inert => Ok((T::zero(), ref_cov.clone(), (quad * ref_cov).trace())),
        }
    };
    let (lambda_v, cov_v, core_v) =
        finish(&problem.v, lv, &amb.ref_cov_v, &nq.p_v, &mean_v, &nq.lin_v)?;
    let (lambda_w, cov_w, core_w) =
        finish(&problem.w, lw, &amb.ref_cov_w, &nq.p_w, &mean_w, &nq.lin_w)?;
    let mean_residual = mean_system_residual(
        nq,
        lv,
        lw,
        &mean_v,
        &mean_w,
        problem.v.is_active(),
        problem.w.is_active(),
    );
    let cost_core = core_v + core_w;
    Ok(WorstCaseSolution {
        lambda_v,
        lambda_w,
        mean_v,
        mean_w,
        cov_v,
        cov_w,
        cost: cost_core + nq.constant,
        cost_core,
        residuals: Residuals {
            radius_v: rv,
            radius_w: rw,
            mean_system: mean_residual,
        },
        status_v,
        status_w,
        iterations,
    })
}

/// Residuals of the pushforward fixed point and of ball activation at a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderReport<T: Scalar> {
    pub mean_v: T,
    pub mean_w: T,
    pub cov_v: T,
    pub cov_w: T,
    /// Gelbrich distance to the reference minus the radius (active channels only).
    pub boundary_v: T,
    pub boundary_w: T,
}

impl<T: Scalar> FirstOrderReport<T> {
    pub fn max(&self) -> T {
        [
            self.mean_v,
            self.mean_w,
            self.cov_v,
            self.cov_w,
            self.boundary_v.abs(),
            self.boundary_w.abs(),
        ]
        .into_iter()
        .fold(T::zero(), |a, b| a.max(b))
    }
}

/// Checks that the affine worst-case map reproduces the reported moments:
/// `(I - P/l)^{-1} (2 N m + S' m_other + n) / (2 l) = m` and
/// `(I - P/l)^{-1} S_ref (I - P/l)^{-1} = Sigma`, plus boundary activation.
pub fn verify_first_order<T: Scalar>(
    sol: &WorstCaseSolution<T>,
    nq: &NoiseQuadratic<T>,
    amb: &AmbiguitySpec<T>,
) -> Result<FirstOrderReport<T>> {
    let two = lit::<T>(2.0);
    let channel = |status: ChannelStatus,
                   lambda: T,
                   quad: &DMatrix<T>,
                   cross: &DMatrix<T>,
                   mean: &DVector<T>,
                   coupled: DVector<T>,
                   lin: &DVector<T>,
                   cov: &DMatrix<T>,
                   ref_cov: &DMatrix<T>,
                   rho: T|
     -> Result<(T, T, T)> {
        if status != ChannelStatus::Active {
            return Ok((mean.norm(), (cov - ref_cov).norm(), T::zero()));
        }
        let a = transport_matrix(quad, lambda)?;
        let drive = symmetrize(cross) * mean * two + coupled + lin;
        let mapped_mean = &a * drive / (two * lambda);
        let mapped_cov = &a * ref_cov * &a;
        let dist = gelbrich_distance(
            &GaussianSpec::new(mean.clone(), symmetrize(cov))?,
            &GaussianSpec::centered(ref_cov.clone())?,
        )?;
        let mean_scale = T::one().max(mean.norm());
        let cov_scale = T::one().max(cov.norm());
        Ok((
            (mapped_mean - mean).norm() / mean_scale,
            (mapped_cov - cov).norm() / cov_scale,
            dist - rho,
        ))
    };
    let (mean_v, cov_v, boundary_v) = channel(
        sol.status_v,
        sol.lambda_v,
        &nq.p_v,
        &nq.cross_v,
        &sol.mean_v,
        nq.s.transpose() * &sol.mean_w,
        &nq.lin_v,
        &sol.cov_v,
        &amb.ref_cov_v,
        amb.rho_v,
    )?;
    let (mean_w, cov_w, boundary_w) = channel(
        sol.status_w,
        sol.lambda_w,
        &nq.p_w,
        &nq.cross_w,
        &sol.mean_w,
        &nq.s * &sol.mean_v,
        &nq.lin_w,
        &sol.cov_w,
        &amb.ref_cov_w,
        amb.rho_w,
    )?;
    Ok(FirstOrderReport {
        mean_v,
        mean_w,
        cov_v,
        cov_w,
        boundary_v,
        boundary_w,
    })
}
