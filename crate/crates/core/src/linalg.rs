//! Dense complex matrix helpers and the validated [`DensityMatrix`] type.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constants::{DENSITY_PSD_TOL, DENSITY_TRACE_TOL};
use crate::error::{Error, Result};
use crate::scalar::{cabs, cplx, Complex, Real};

/// Dense complex matrix.
pub type CMat<T> = DMatrix<Complex<T>>;
/// Dense complex column vector.
pub type CVec<T> = DVector<Complex<T>>;

pub fn identity<T: Real>(dim: usize) -> CMat<T> {
    CMat::identity(dim, dim)
}

pub fn kron<T: Real>(a: &CMat<T>, b: &CMat<T>) -> CMat<T> {
    a.kronecker(b)
}

pub fn trace<T: Real>(m: &CMat<T>) -> Complex<T> {
    m.diagonal().iter().fold(Complex::new(T::zero(), T::zero()), |acc, z| acc + *z)
}

/// Largest entry of `|M - M^†|`.
pub fn hermiticity_defect<T: Real>(m: &CMat<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let d = cabs(m[(i, j)] - m[(j, i)].conj());
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

pub fn max_abs_diff<T: Real>(a: &CMat<T>, b: &CMat<T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| cabs(*x - *y))
        .fold(T::zero(), |m, v| if v > m { v } else { m })
}

/// Eigenvalues (ascending) of the Hermitian part of `m`.
pub fn hermitian_eigenvalues<T: Real>(m: &CMat<T>) -> Vec<T> {
    let h = (m + m.adjoint()) * cplx(T::lit(0.5), T::zero());
    let mut ev: Vec<T> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Eigen-decomposition of the Hermitian part of `m`: eigenvalues with their
/// unit eigenvectors, sorted by descending eigenvalue.
pub fn hermitian_eigen<T: Real>(m: &CMat<T>) -> Vec<(T, CVec<T>)> {
    let h = (m + m.adjoint()) * cplx(T::lit(0.5), T::zero());
    let eig = h.symmetric_eigen();
    let mut pairs: Vec<(T, CVec<T>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &lambda)| (lambda, eig.eigenvectors.column(k).into_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    pairs
}

/// Haar-random pure state of dimension `dim`.
pub fn random_pure_state<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CVec<T> {
    let v = CVec::from_fn(dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        cplx(T::lit(re), T::lit(im))
    });
    let n = v.norm();
    v.map(|z| z / cplx(n, T::zero()))
}

/// Full-rank random density matrix from the Ginibre ensemble.
pub fn random_density_matrix<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMat<T> {
    let g = CMat::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        cplx(T::lit(re), T::lit(im))
    });
    let rho = &g * g.adjoint();
    let tr = trace(&rho);
    rho / tr
}

/// Hermitian, positive semidefinite, unit-trace complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T: Real>(CMat<T>);

impl<T: Real> DensityMatrix<T> {
    /// Validates `m` against the density-matrix tolerances.
    pub fn new(m: CMat<T>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let herm = hermiticity_defect(&m);
        if herm > T::lit(DENSITY_TRACE_TOL) {
            return Err(Error::NotDensityMatrix(format!(
                "Hermiticity defect {}",
                herm.as_f64()
            )));
        }
        let tr = trace(&m);
        if (tr.re - T::one()).abs() > T::lit(DENSITY_TRACE_TOL) || tr.im.abs() > T::lit(DENSITY_TRACE_TOL) {
            return Err(Error::NotDensityMatrix(format!(
                "trace {} + {}i",
                tr.re.as_f64(),
                tr.im.as_f64()
            )));
        }
        let min_ev = hermitian_eigenvalues(&m).first().copied().unwrap_or_else(T::zero);
        if min_ev < -T::lit(DENSITY_PSD_TOL) {
            return Err(Error::NotDensityMatrix(format!(
                "negative eigenvalue {}",
                min_ev.as_f64()
            )));
        }
        Ok(Self(m))
    }

    pub fn from_pure(psi: &CVec<T>) -> Self {
        Self(psi * psi.adjoint())
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(identity::<T>(dim) / cplx(T::from_int(dim as i64), T::zero()))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat<T> {
        &self.0
    }

    pub fn into_matrix(self) -> CMat<T> {
        self.0
    }
}

/// JSON wire form `{"dim": n, "re": [[..]], "im": [[..]]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix<T: Real>(m: &CMat<T>) -> Self {
        let dim = m.nrows();
        let re = (0..dim)
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)].re.as_f64()).collect())
            .collect();
        let im = (0..dim)
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)].im.as_f64()).collect())
            .collect();
        Self { dim, re, im }
    }

    pub fn to_matrix<T: Real>(&self) -> Result<CMat<T>> {
        let n = self.dim;
        let rows_ok = self.re.len() == n
            && self.im.len() == n
            && self.re.iter().chain(self.im.iter()).all(|row| row.len() == n);
        if !rows_ok {
            return Err(Error::InvalidArgument(format!(
                "matrix JSON rows do not match dim = {n}"
            )));
        }
        Ok(CMat::from_fn(n, n, |i, j| {
            cplx(T::lit(self.re[i][j]), T::lit(self.im[i][j]))
        }))
    }
}

impl<T: Real> DensityMatrix<T> {
    pub fn to_json(&self) -> MatrixJson {
        MatrixJson::from_matrix(&self.0)
    }

    pub fn from_json(json: &MatrixJson) -> Result<Self> {
        Self::new(json.to_matrix()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_density_matrices_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [2, 3, 8] {
            let rho = random_density_matrix::<f64, _>(dim, &mut rng);
            assert!(DensityMatrix::new(rho).is_ok());
        }
    }

    #[test]
    fn rejects_non_unit_trace_and_negative_spectrum() {
        let m = identity::<f64>(2);
        assert!(matches!(DensityMatrix::new(m), Err(Error::NotDensityMatrix(_))));
        let mut m = CMat::<f64>::zeros(2, 2);
        m[(0, 0)] = cplx(1.5, 0.0);
        m[(1, 1)] = cplx(-0.5, 0.0);
        assert!(matches!(DensityMatrix::new(m), Err(Error::NotDensityMatrix(_))));
    }

    #[test]
    fn json_round_trip_preserves_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = DensityMatrix::new(random_density_matrix::<f64, _>(4, &mut rng)).unwrap();
        let text = serde_json::to_string(&rho.to_json()).unwrap();
        let back: MatrixJson = serde_json::from_str(&text).unwrap();
        let rho2 = DensityMatrix::<f64>::from_json(&back).unwrap();
        assert_eq!(max_abs_diff(rho.matrix(), rho2.matrix()), 0.0);
    }

    #[test]
    fn eigen_pairs_reconstruct_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rho = random_density_matrix::<f64, _>(5, &mut rng);
        let mut rebuilt = CMat::<f64>::zeros(5, 5);
        for (lambda, v) in hermitian_eigen(&rho) {
            rebuilt += &v * v.adjoint() * cplx(lambda, 0.0);
        }
        assert!(max_abs_diff(&rho, &rebuilt) < 1e-13);
    }
}
