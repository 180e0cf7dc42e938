//! Gaussian optimal-transport geometry: Gelbrich distance and affine pushforwards.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, psd_sqrt};
use crate::scalar::Scalar;

/// Mean and covariance of a (not necessarily Gaussian) distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec<T: Scalar> {
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
}

impl<T: Scalar> GaussianSpec<T> {
    pub fn new(mean: DVector<T>, cov: DMatrix<T>) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(Error::dimension(
                "covariance",
                format!("{0}x{0}", mean.len()),
                format!("{}x{}", cov.nrows(), cov.ncols()),
            ));
        }
        linalg::check_psd(&cov, "covariance")?;
        Ok(GaussianSpec { mean, cov })
    }

    pub fn centered(cov: DMatrix<T>) -> Result<Self> {
        Self::new(DVector::zeros(cov.nrows()), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Squared covariance transport cost
/// `tr(S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2})`.
pub fn ell<T: Scalar>(s1: &DMatrix<T>, s2: &DMatrix<T>) -> Result<T> {
    if s1.shape() != s2.shape() {
        return Err(Error::dimension(
            "covariance pair",
            format!("{}x{}", s1.nrows(), s1.ncols()),
            format!("{}x{}", s2.nrows(), s2.ncols()),
        ));
    }
    linalg::check_psd(s1, "first covariance")?;
    linalg::check_psd(s2, "second covariance")?;
    let root2 = psd_sqrt(s2, "second covariance")?;
    let inner = linalg::symmetrize(&(&root2 * s1 * &root2));
    let cross = psd_sqrt(&inner, "covariance product")?;
    let value = s1.trace() + s2.trace() - cross.trace() * (T::one() + T::one());
    Ok(value.max(T::zero()))
}

/// `sqrt(|m1 - m2|^2 + ell(S1, S2))`; the type-2 Wasserstein distance when both are Gaussian.
pub fn gelbrich_distance<T: Scalar>(g1: &GaussianSpec<T>, g2: &GaussianSpec<T>) -> Result<T> {
    if g1.dim() != g2.dim() {
        return Err(Error::dimension("gaussian pair", g1.dim(), g2.dim()));
    }
    Ok(((&g1.mean - &g2.mean).norm_squared() + ell(&g1.cov, &g2.cov)?).sqrt())
}

/// Moments of `A X + b` for `X ~ g`.
pub fn affine_pushforward_moments<T: Scalar>(
    a: &DMatrix<T>,
    b: &DVector<T>,
    g: &GaussianSpec<T>,
) -> Result<GaussianSpec<T>> {
    if a.ncols() != g.dim() || a.nrows() != b.len() {
        return Err(Error::dimension(
            "affine map",
            format!("{}x{} with offset of length {}", b.len(), g.dim(), b.len()),
            format!(
                "{}x{} with offset of length {}",
                a.nrows(),
                a.ncols(),
                b.len()
            ),
        ));
    }
    Ok(GaussianSpec {
        mean: a * &g.mean + b,
        cov: linalg::symmetrize(&(a * &g.cov * a.transpose())),
    })
}

/// Point of the Gelbrich ball around `(0, ref_cov)` at distance `radius`, reached along the
/// direction `(mean_dir, cov_dir)`: the moments `(s m, e^{sE} ref_cov e^{sE})` with the
/// scale `s >= 0` chosen by bisection. `cov_dir` is symmetrized. Every positive definite
/// covariance is reachable this way, since any such matrix is a congruence of the
/// reference by a positive definite map.
pub fn gelbrich_ball_point<T: Scalar>(
    ref_cov: &DMatrix<T>,
    mean_dir: &DVector<T>,
    cov_dir: &DMatrix<T>,
    radius: T,
) -> Result<GaussianSpec<T>> {
    let d = ref_cov.nrows();
    if mean_dir.len() != d || cov_dir.shape() != (d, d) {
        return Err(Error::dimension("ball direction", d, mean_dir.len()));
    }
    let eig = linalg::sym_eigen(cov_dir);
    let rotated = (eig.eigenvectors.transpose() * ref_cov * &eig.eigenvectors).diagonal();
    let dist2 = |s: T| {
        let spread =
            eig.eigenvalues
                .iter()
                .zip(rotated.iter())
                .fold(T::zero(), |acc, (&ev, &r)| {
                    let g = (s * ev).exp() - T::one();
                    acc + g * g * r
                });
        mean_dir.norm_squared() * s * s + spread
    };
    let target = radius * radius;
    let point = |s: T| {
        let exp = eig.eigenvalues.map(|ev| (s * ev).exp());
        let a = &eig.eigenvectors * DMatrix::from_diagonal(&exp) * eig.eigenvectors.transpose();
        GaussianSpec {
            mean: mean_dir * s,
            cov: linalg::symmetrize(&(&a * ref_cov * &a)),
        }
    };
    if target <= T::zero() || dist2(T::one()) == T::zero() {
        return Ok(point(T::zero()));
    }
    let (mut lo, mut hi) = (T::zero(), T::one());
    let mut guard = 0;
    while dist2(hi) < target {
        hi *= crate::scalar::lit::<T>(2.0);
        guard += 1;
        if guard > 200 {
            return Err(Error::InvalidParameter(
                "ball direction does not reach the radius".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = (lo + hi) * crate::scalar::lit::<T>(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if dist2(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(point((lo + hi) * crate::scalar::lit::<T>(0.5)))
}
