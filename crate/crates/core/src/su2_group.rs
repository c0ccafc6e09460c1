//! SU(2) elements as unit quaternions, Haar and heat-kernel sampling, class
//! angles, characters and Wigner D-matrices.
//!
//! A quaternion `(w, x, y, z)` represents
//! `U = [[w - iz, -y - ix], [y - ix, w + iz]]`, so the Hamilton product is the
//! matrix product. The class angle `ξ` satisfies `Tr U = 2 cos(ξ/2)`.

use std::ops::Mul;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::angular_momentum::HalfInteger;
use crate::constants::{KERNEL_T_MIN, KERNEL_TRUNCATION_TOL, SAMPLER_GRID_INTERVALS, WIGNER_D_TWICE_J_CAP};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::scalar::{cabs, cplx, Complex, Real};

/// Unit quaternion `w + xi + yj + zk`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Su2<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Su2<T> {
    pub fn identity() -> Self {
        Self {
            w: T::one(),
            x: T::zero(),
            y: T::zero(),
            z: T::zero(),
        }
    }

    /// Normalizes `(w, x, y, z)`; fails on a zero quaternion.
    pub fn from_quaternion(w: T, x: T, y: T, z: T) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::InvalidArgument("quaternion has zero or non-finite norm".into()));
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Rotation by class angle `xi` about the unit vector `axis`.
    pub fn from_axis_angle(axis: [T; 3], xi: T) -> Self {
        let half = xi * T::lit(0.5);
        let s = half.sin();
        Self {
            w: half.cos(),
            x: s * axis[0],
            y: s * axis[1],
            z: s * axis[2],
        }
    }

    /// Reads the quaternion back from a 2×2 matrix of the form above.
    pub fn from_matrix(m: &CMat<T>) -> Result<Self> {
        if m.nrows() != 2 || m.ncols() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: m.nrows(),
            });
        }
        Self::from_quaternion(m[(0, 0)].re, -m[(1, 0)].im, m[(1, 0)].re, -m[(0, 0)].im)
    }

    pub fn matrix(&self) -> CMat<T> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        CMat::from_row_slice(2, 2, &[cplx(w, -z), cplx(-y, -x), cplx(y, -x), cplx(w, z)])
    }

    /// `U^{⊗n}` on `n` qubits, qubit 1 most significant.
    pub fn tensor_power(&self, n: usize) -> CMat<T> {
        let u = self.matrix();
        (0..n).fold(CMat::identity(1, 1), |acc, _| crate::linalg::kron(&acc, &u))
    }

    pub fn inverse(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn norm_defect(&self) -> T {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z - T::one()).abs()
    }

    /// Largest entry of `|U^† U - I|`.
    pub fn unitarity_defect(&self) -> T {
        let m = self.matrix();
        let p = m.adjoint() * &m - CMat::<T>::identity(2, 2);
        p.iter().map(|z| cabs(*z)).fold(T::zero(), |a, b| if b > a { b } else { a })
    }
}

impl<T: Real> Mul for Su2<T> {
    type Output = Self;
    fn mul(self, r: Self) -> Self {
        Self {
            w: self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            x: self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            y: self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            z: self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        }
    }
}

/// Class angle `ξ ∈ [0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ClassAngle<T>(T);

impl<T: Real> ClassAngle<T> {
    pub fn new(xi: T) -> Result<Self> {
        if xi >= T::zero() && xi < T::two_pi() {
            Ok(Self(xi))
        } else {
            Err(Error::InvalidArgument(format!("class angle {} outside [0, 2π)", xi.as_f64())))
        }
    }

    pub fn value(self) -> T {
        self.0
    }
}

/// Class angle of `u`. `-I` maps to the largest representable value below `2π`.
pub fn class_angle<T: Real>(u: &Su2<T>) -> ClassAngle<T> {
    let c = u.w.clamp(-T::one(), T::one());
    let xi = T::lit(2.0) * c.acos();
    let top = T::two_pi() * (T::one() - T::machine_epsilon());
    ClassAngle(if xi >= top { top } else { xi })
}

/// Non-negative diffusion time.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct DiffusionTime<T>(T);

impl<T: Real> DiffusionTime<T> {
    pub fn new(t: T) -> Result<Self> {
        if t >= T::zero() && t.is_finite() {
            Ok(Self(t))
        } else {
            Err(Error::InvalidArgument(format!("diffusion time {} must be >= 0", t.as_f64())))
        }
    }

    pub fn value(self) -> T {
        self.0
    }

    /// Errors when `t` lies below the supported heat-kernel regime.
    pub fn require_kernel_regime(self) -> Result<Self> {
        if self.0.as_f64() < KERNEL_T_MIN {
            Err(Error::UnsupportedRegime {
                t: self.0.as_f64(),
                t_min: KERNEL_T_MIN,
            })
        } else {
            Ok(self)
        }
    }
}

/// Character `χ_j(ξ) = sin((j + 1/2) ξ) / sin(ξ/2)`.
pub fn character<T: Real>(j: HalfInteger, xi: T) -> T {
    let s = (xi * T::lit(0.5)).sin();
    if s.abs() > T::lit(1e-4) {
        return ((j.value::<T>() + T::lit(0.5)) * xi).sin() / s;
    }
    // Near ξ = 0 or 2π sum the weights directly.
    j.projections()
        .map(|m| (m.value::<T>() * xi).cos())
        .fold(T::zero(), |a, b| a + b)
}

/// Haar-random element: a uniform point on the unit 3-sphere.
pub fn haar_sample<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Su2<T> {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        if let Ok(u) = Su2::from_quaternion(T::lit(q[0]), T::lit(q[1]), T::lit(q[2]), T::lit(q[3])) {
            return u;
        }
    }
}

/// Uniform unit vector on the 2-sphere.
pub fn uniform_axis<T: Real, R: Rng + ?Sized>(rng: &mut R) -> [T; 3] {
    let z = T::lit(2.0 * rng.random::<f64>() - 1.0);
    let phi = T::two_pi() * T::lit(rng.random::<f64>());
    let r = (T::one() - z * z).max(T::zero()).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

/// Haar law of the class angle, `(1/π) sin²(ξ/2)`.
pub fn haar_class_density<T: Real>(xi: T) -> T {
    let s = (xi * T::lit(0.5)).sin();
    s * s / T::pi()
}

/// Haar class-angle CDF `(ξ - sin ξ) / 2π`.
pub fn haar_class_cdf<T: Real>(xi: T) -> T {
    (xi - xi.sin()) / T::two_pi()
}

/// Character-expansion coefficient `e^{-j(j+1)t/2}` of the heat kernel.
pub fn kernel_coefficient<T: Real>(j: HalfInteger, t: T) -> T {
    let jv = j.value::<T>();
    (-jv * (jv + T::one()) * t * T::lit(0.5)).exp()
}

/// Geometric bound `(2j+3)² e^{-(j+1)(j+2)t/2} / (1 - e^{-(j+2)t})` on the
/// integer-step character tail `j+1, j+2, ...`.
fn integer_step_tail_bound(j: f64, t: f64) -> f64 {
    (2.0 * j + 3.0).powi(2) * (-(j + 1.0) * (j + 2.0) * t / 2.0).exp() / (1.0 - (-(j + 2.0) * t).exp())
}

/// Smallest `2j` at which the omitted half-integer tail `j+1/2, j+1, ...` is
/// below `tol`. The tail splits into two integer-step ladders, starting at
/// `j+1/2` and `j+1`, each covered by the geometric bound.
pub fn truncation_twice_j(t: f64, tol: f64) -> i32 {
    let mut twice = 0;
    loop {
        let j = twice as f64 / 2.0;
        if integer_step_tail_bound(j - 0.5, t) + integer_step_tail_bound(j, t) < tol {
            return twice;
        }
        twice += 1;
    }
}

/// Heat-kernel density `p_t` with respect to Haar measure, as a truncated
/// character sum.
#[derive(Clone, Debug)]
pub struct HeatKernel<T> {
    t: T,
    coefficients: Vec<T>,
}

impl<T: Real> HeatKernel<T> {
    pub fn new(t: T) -> Result<Self> {
        Self::with_tolerance(t, KERNEL_TRUNCATION_TOL)
    }

    pub fn with_tolerance(t: T, tol: f64) -> Result<Self> {
        let t = DiffusionTime::new(t)?.require_kernel_regime()?.value();
        let max = truncation_twice_j(t.as_f64(), tol);
        let coefficients = (0..=max).map(|tj| kernel_coefficient(HalfInteger::from_twice(tj), t)).collect();
        Ok(Self { t, coefficients })
    }

    pub fn t(&self) -> T {
        self.t
    }

    /// Largest `2j` kept in the sum.
    pub fn max_twice_j(&self) -> i32 {
        self.coefficients.len() as i32 - 1
    }

    pub fn density(&self, xi: T) -> T {
        self.coefficients.iter().enumerate().fold(T::zero(), |acc, (tj, &c)| {
            let j = HalfInteger::from_twice(tj as i32);
            acc + T::from_int(j.multiplicity() as i64) * c * character(j, xi)
        })
    }

    pub fn density_at(&self, u: &Su2<T>) -> T {
        self.density(class_angle(u).value())
    }

    /// `∫₀^ξ (1/π) sin²(s/2) p_t(s) ds`, summed term by term in closed form.
    pub fn class_cdf(&self, xi: T) -> T {
        let mut acc = (xi - xi.sin()) / T::two_pi();
        for (tj, &c) in self.coefficients.iter().enumerate().skip(1) {
            let j = HalfInteger::from_twice(tj as i32).value::<T>();
            let j1 = j + T::one();
            let term = (j * xi).sin() / j - (j1 * xi).sin() / j1;
            acc += T::from_int(tj as i64 + 1) * c * term / T::two_pi();
        }
        acc
    }

    /// Class-angle density `(1/π) sin²(ξ/2) p_t(ξ)`.
    pub fn class_density(&self, xi: T) -> T {
        haar_class_density(xi) * self.density(xi)
    }
}

/// Exact sampler for the heat kernel: inverse CDF of the class angle on a
/// uniform grid, then a uniform rotation axis.
#[derive(Clone, Debug)]
pub struct HeatKernelSampler<T> {
    kernel: HeatKernel<T>,
    grid: Vec<T>,
    cdf: Vec<T>,
}

impl<T: Real> HeatKernelSampler<T> {
    pub fn new(t: T) -> Result<Self> {
        Self::with_intervals(t, SAMPLER_GRID_INTERVALS)
    }

    pub fn with_intervals(t: T, intervals: usize) -> Result<Self> {
        let kernel = HeatKernel::new(t)?;
        let n = T::from_int(intervals as i64);
        let grid: Vec<T> = (0..=intervals).map(|k| T::two_pi() * T::from_int(k as i64) / n).collect();
        let mut cdf: Vec<T> = grid.iter().map(|&xi| kernel.class_cdf(xi)).collect();
        // Enforce monotonicity against truncation noise, then normalize.
        for k in 1..cdf.len() {
            if cdf[k] < cdf[k - 1] {
                cdf[k] = cdf[k - 1];
            }
        }
        let total = cdf[intervals];
        cdf.iter_mut().for_each(|c| *c /= total);
        cdf[0] = T::zero();
        Ok(Self { kernel, grid, cdf })
    }

    pub fn kernel(&self) -> &HeatKernel<T> {
        &self.kernel
    }

    /// Inverse CDF with linear interpolation between grid nodes.
    pub fn quantile(&self, u: T) -> T {
        let k = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let (x0, x1) = (self.grid[k - 1], self.grid[k]);
        let xi = if c1 > c0 { x0 + (x1 - x0) * (u - c0) / (c1 - c0) } else { x0 };
        let top = T::two_pi() * (T::one() - T::machine_epsilon());
        if xi >= top {
            top
        } else {
            xi
        }
    }

    pub fn sample_class_angle<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        self.quantile(T::lit(rng.random::<f64>()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Su2<T> {
        let xi = self.sample_class_angle(rng);
        Su2::from_axis_angle(uniform_axis(rng), xi)
    }

    /// `count` samples generated in parallel; chunk `c` draws from stream `c`
    /// of `ChaCha8Rng::seed_from_u64(seed)`, so output depends only on `seed`.
    pub fn sample_batch(&self, count: usize, seed: u64) -> Vec<Su2<T>> {
        const CHUNK: usize = 4096;
        let chunks = count.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                let len = CHUNK.min(count - c * CHUNK);
                (0..len).map(move |_| self.sample(&mut rng)).collect::<Vec<_>>()
            })
            .collect()
    }
}

fn factorial<T: Real>(n: i32) -> T {
    (2..=n).fold(T::one(), |acc, k| acc * T::from_int(k as i64))
}

fn binomial<T: Real>(n: i32, k: i32) -> T {
    if k < 0 || k > n {
        T::zero()
    } else {
        factorial::<T>(n) / (factorial::<T>(k) * factorial::<T>(n - k))
    }
}

fn cpow<T: Real>(z: Complex<T>, n: i32) -> Complex<T> {
    (0..n).fold(cplx(T::one(), T::zero()), |acc, _| acc * z)
}

/// Irreducible representation `D^j(U)` with rows and columns ordered
/// `m = j, j-1, ..., -j`, as the symmetric tensor power of `U`.
pub fn wigner_d<T: Real>(j: HalfInteger, u: &Su2<T>) -> Result<CMat<T>> {
    wigner_d_capped(j, u, WIGNER_D_TWICE_J_CAP)
}

pub fn wigner_d_capped<T: Real>(j: HalfInteger, u: &Su2<T>, twice_j_cap: i32) -> Result<CMat<T>> {
    let tj = j.twice();
    if tj < 0 || tj > twice_j_cap {
        return Err(Error::InvalidArgument(format!(
            "Wigner D requested for j = {j}, supported range is 0..={}",
            HalfInteger::from_twice(twice_j_cap)
        )));
    }
    let m = u.matrix();
    let (u00, u01, u10, u11) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let dim = j.multiplicity();
    // With a = j + m and b = j + m', D_{m'm} collects the terms of
    // (u00 e0 + u10 e1)^a (u01 e0 + u11 e1)^(2j-a) holding b copies of e0.
    Ok(CMat::from_fn(dim, dim, |row, col| {
        let b = tj - row as i32;
        let a = tj - col as i32;
        let mut acc = cplx(T::zero(), T::zero());
        for k in 0..=a.min(b) {
            let l = b - k;
            if l < 0 || l > tj - a {
                continue;
            }
            let coeff = binomial::<T>(a, k) * binomial::<T>(tj - a, l);
            acc += cpow(u00, k) * cpow(u10, a - k) * cpow(u01, l) * cpow(u11, tj - a - l) * cplx(coeff, T::zero());
        }
        let norm = (factorial::<T>(b) * factorial::<T>(tj - b) / (factorial::<T>(a) * factorial::<T>(tj - a))).sqrt();
        acc * cplx(norm, T::zero())
    }))
}
