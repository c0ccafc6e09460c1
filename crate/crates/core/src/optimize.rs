//! Shared numerical kernels: entropies, a multi-start Nelder–Mead maximizer,
//! golden-section and bisection searches, Gauss–Legendre nodes and Bloch-sphere
//! quadrature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::constants::{
    DEFAULT_MAX_ITERS, DEFAULT_OPT_TOL, DEFAULT_RESTARTS, DEFAULT_SEED, DENSITY_PSD_TOL, DENSITY_TRACE_TOL,
};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, hermiticity_defect, trace, CMat};
use crate::scalar::Real;
use crate::stats::Welford;

/// Entropy in bits of a spectrum. Non-positive eigenvalues (round-off below
/// zero) contribute nothing and `0 log 0 = 0`.
pub fn entropy_from_eigenvalues<T: Real>(eigenvalues: &[T]) -> T {
    let ln2 = T::ln_2();
    eigenvalues.iter().fold(T::zero(), |acc, &lambda| {
        if lambda <= T::zero() {
            acc
        } else {
            acc - lambda * lambda.ln() / ln2
        }
    })
}

/// Von Neumann entropy `-Tr ρ log2 ρ` with no input validation.
pub fn entropy_unchecked<T: Real>(rho: &CMat<T>) -> T {
    entropy_from_eigenvalues(&hermitian_eigenvalues(rho))
}

/// Von Neumann entropy in bits of a validated density matrix.
pub fn von_neumann_entropy<T: Real>(rho: &CMat<T>) -> Result<T> {
    if rho.nrows() != rho.ncols() {
        return Err(Error::DimensionMismatch {
            expected: rho.nrows(),
            got: rho.ncols(),
        });
    }
    let tol = T::lit(DENSITY_TRACE_TOL);
    if hermiticity_defect(rho) > tol {
        return Err(Error::NotDensityMatrix("not Hermitian".into()));
    }
    let tr = trace(rho);
    if (tr.re - T::one()).abs() > tol || tr.im.abs() > tol {
        return Err(Error::NotDensityMatrix(format!("trace {}", tr.re.as_f64())));
    }
    let ev = hermitian_eigenvalues(rho);
    if let Some(&min) = ev.first() {
        if min < -T::lit(DENSITY_PSD_TOL) {
            return Err(Error::NotDensityMatrix(format!("eigenvalue {}", min.as_f64())));
        }
    }
    Ok(entropy_from_eigenvalues(&ev))
}

/// Multi-start simplex search settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig<T> {
    pub restarts: usize,
    pub max_iters: usize,
    /// Simplex-diameter convergence threshold.
    pub tolerance: T,
    pub seed: u64,
    /// Initial simplex edge and restart perturbation scale.
    pub step: T,
}

impl<T: Real> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            max_iters: DEFAULT_MAX_ITERS,
            tolerance: T::lit(DEFAULT_OPT_TOL),
            seed: DEFAULT_SEED,
            step: T::lit(0.5),
        }
    }
}

impl<T: Real> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be >= 1".into()));
        }
        if self.tolerance <= T::zero() {
            return Err(Error::InvalidArgument("tolerance must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Why a simplex run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Simplex diameter fell below the tolerance.
    Diameter,
    /// All vertices share one function value to rounding; the remaining
    /// spread lies along flat directions of the objective.
    FlatValues,
    /// Iteration cap reached; the best point so far is still reported.
    IterationCap,
}

#[derive(Clone, Debug)]
pub struct NelderMeadOutcome<T> {
    pub x: Vec<T>,
    pub value: T,
    pub termination: Termination,
    pub iterations: usize,
    /// Index of the winning restart (0 starts exactly at `x0`).
    pub restart: usize,
}

impl<T> NelderMeadOutcome<T> {
    pub fn converged(&self) -> bool {
        self.termination != Termination::IterationCap
    }
}

fn axpy<T: Real>(a: T, x: &[T], y: &[T]) -> Vec<T> {
    x.iter().zip(y).map(|(&xi, &yi)| a * xi + yi).collect()
}

/// One Nelder–Mead maximization from `start`.
pub fn nelder_mead_run<T: Real, F: Fn(&[T]) -> T>(
    f: &F,
    start: &[T],
    step: T,
    tolerance: T,
    max_iters: usize,
) -> NelderMeadOutcome<T> {
    let n = start.len();
    let neg = |x: &[T]| {
        let v = -f(x);
        if v.is_finite() {
            v
        } else {
            T::max_value().unwrap_or_else(|| T::lit(f64::MAX))
        }
    };
    if n == 0 {
        return NelderMeadOutcome {
            x: vec![],
            value: f(start),
            termination: Termination::Diameter,
            iterations: 0,
            restart: 0,
        };
    }
    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), neg(start)));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += step;
        let v = neg(&x);
        simplex.push((x, v));
    }
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let mut termination = Termination::IterationCap;
    let mut iterations = 0;
    while iterations < max_iters {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].0.clone();
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&best)
                    .map(|(a, b)| (*a - *b) * (*a - *b))
                    .fold(T::zero(), |s, v| s + v)
                    .sqrt()
            })
            .fold(T::zero(), |m, d| if d > m { d } else { m });
        if diameter < tolerance {
            termination = Termination::Diameter;
            break;
        }
        let f_best = simplex[0].1;
        let f_worst = simplex[n].1;
        let scale = T::one() + f_best.abs();
        if (f_worst - f_best).abs() <= T::machine_epsilon() * T::lit(4.0) * scale && iterations > 10 * n {
            termination = Termination::FlatValues;
            break;
        }
        iterations += 1;

        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += *xi;
            }
        }
        let inv = T::one() / T::from_int(n as i64);
        centroid.iter_mut().for_each(|c| *c *= inv);
        let worst = simplex[n].0.clone();
        let direction: Vec<T> = centroid.iter().zip(&worst).map(|(c, w)| *c - *w).collect();

        let reflected = axpy(T::one(), &direction, &centroid);
        let f_r = neg(&reflected);
        if f_r < simplex[0].1 {
            let expanded = axpy(two, &direction, &centroid);
            let f_e = neg(&expanded);
            simplex[n] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
            continue;
        }
        if f_r < simplex[n - 1].1 {
            simplex[n] = (reflected, f_r);
            continue;
        }
        let (contracted, f_c) = if f_r < simplex[n].1 {
            let x = axpy(half, &direction, &centroid);
            let v = neg(&x);
            (x, v)
        } else {
            let x = axpy(-half, &direction, &centroid);
            let v = neg(&x);
            (x, v)
        };
        if f_c < simplex[n].1.min(f_r) {
            simplex[n] = (contracted, f_c);
            continue;
        }
        for vertex in simplex.iter_mut().skip(1) {
            let shrunk: Vec<T> = vertex.0.iter().zip(&best).map(|(x, b)| *b + (*x - *b) * half).collect();
            let v = neg(&shrunk);
            *vertex = (shrunk, v);
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, v) = simplex.swap_remove(0);
    NelderMeadOutcome {
        x,
        value: -v,
        termination,
        iterations,
        restart: 0,
    }
}

/// Deterministic starting point of restart `index` (restart 0 is `x0`).
pub fn restart_point<T: Real>(x0: &[T], index: usize, config: &OptimizerConfig<T>) -> Vec<T> {
    if index == 0 {
        return x0.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    x0.iter()
        .map(|&xi| {
            let z: f64 = rng.sample(StandardNormal);
            xi + T::lit(z) * config.step * T::lit(4.0)
        })
        .collect()
}

/// Maximizes `f` from `x0` plus `config.restarts - 1` seeded perturbations,
/// running restarts in parallel. Ties go to the lowest restart index.
pub fn nelder_mead_maximize<T: Real, F: Fn(&[T]) -> T + Sync>(
    f: &F,
    x0: &[T],
    config: &OptimizerConfig<T>,
) -> Result<NelderMeadOutcome<T>> {
    config.validate()?;
    let outcomes: Vec<NelderMeadOutcome<T>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let start = restart_point(x0, r, config);
            let mut out = nelder_mead_run(f, &start, config.step, config.tolerance, config.max_iters);
            out.restart = r;
            out
        })
        .collect();
    Ok(best_outcome(outcomes))
}

pub(crate) fn best_outcome<T: Real>(outcomes: Vec<NelderMeadOutcome<T>>) -> NelderMeadOutcome<T> {
    let mut best: Option<NelderMeadOutcome<T>> = None;
    for o in outcomes {
        let better = match &best {
            None => true,
            Some(b) => o.value > b.value || (o.value == b.value && o.restart < b.restart),
        };
        if better {
            best = Some(o);
        }
    }
    best.expect("at least one restart")
}

/// Golden-section maximization of a unimodal `f` on `[a, b]`.
pub fn golden_section_maximize<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, tol: T) -> (T, T) {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (hi - lo).abs() > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Locates a sign change of `g` with `g(lo) > 0 >= g(hi)` to within `tol`.
/// Returns the upper end of the final bracket, the smallest resolved point
/// where `g <= 0`.
pub fn bisect_zero<T: Real, F: FnMut(T) -> T>(mut g: F, lo: T, hi: T, tol: T) -> Result<T> {
    let (mut a, mut b) = (lo, hi);
    let (ga, gb) = (g(a), g(b));
    if !(ga > T::zero() && gb <= T::zero()) {
        return Err(Error::BracketInvalid {
            g_lo: ga.as_f64(),
            g_hi: gb.as_f64(),
        });
    }
    while (b - a).abs() > tol {
        let mid = (a + b) * T::lit(0.5);
        if g(mid) > T::zero() {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(b)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = T::from_int(n as i64);
    for i in 0..n.div_ceil(2) {
        let mut x = (T::pi() * (T::from_int(i as i64) + T::lit(0.75)) / (nf + T::lit(0.5))).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            let (mut p0, mut p1) = (T::one(), x);
            for k in 2..=n {
                let kf = T::from_int(k as i64);
                let p2 = ((T::lit(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { T::one() } else if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { T::one() } else { p0 };
            dp = nf * (x * pn - pnm1) / (x * x - T::one());
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < T::machine_epsilon() * T::lit(4.0) {
                break;
            }
        }
        let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integrates `f` over `[a, b]` with `n`-point Gauss–Legendre.
pub fn integrate_gl<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, n: usize) -> T {
    let (x, w) = gauss_legendre::<T>(n);
    let half = (b - a) * T::lit(0.5);
    let mid = (b + a) * T::lit(0.5);
    x.iter().zip(&w).fold(T::zero(), |s, (&xi, &wi)| s + wi * f(mid + half * xi)) * half
}

/// Sampling rule for averages over the unit sphere in `(θ, φ)`.
#[derive(Clone, Copy, Debug)]
pub enum SphereRule {
    /// Uniform Monte Carlo points with a standard error.
    MonteCarlo { points: usize, seed: u64 },
    /// Gauss–Legendre in `cos θ` times the trapezoid rule in `φ`.
    Product { n_theta: usize, n_phi: usize },
}

#[derive(Clone, Copy, Debug)]
pub struct QuadratureEstimate<T> {
    pub mean: T,
    /// Zero for deterministic product rules.
    pub standard_error: T,
}

/// Average of `f(θ, φ)` under the uniform measure on the sphere.
pub fn sphere_quadrature<T: Real, F: Fn(T, T) -> T>(f: F, rule: SphereRule) -> QuadratureEstimate<T> {
    match rule {
        SphereRule::MonteCarlo { points, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut acc = Welford::new();
            for _ in 0..points {
                let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
                let phi: f64 = 2.0 * std::f64::consts::PI * rng.random::<f64>();
                acc.push(f(T::lit(z.acos()), T::lit(phi)));
            }
            QuadratureEstimate {
                mean: acc.mean,
                standard_error: acc.standard_error(),
            }
        }
        SphereRule::Product { n_theta, n_phi } => {
            let (x, w) = gauss_legendre::<T>(n_theta);
            let mut sum = T::zero();
            for (xi, wi) in x.iter().zip(&w) {
                let theta = xi.acos();
                for k in 0..n_phi {
                    let phi = T::two_pi() * T::from_int(k as i64) / T::from_int(n_phi as i64);
                    sum += *wi * f(theta, phi);
                }
            }
            QuadratureEstimate {
                mean: sum / (T::lit(2.0) * T::from_int(n_phi as i64)),
                standard_error: T::zero(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_density_matrix;
    use crate::scalar::cplx;

    #[test]
    fn entropy_examples() {
        let mut pure = CMat::<f64>::zeros(3, 3);
        pure[(1, 1)] = cplx(1.0, 0.0);
        assert_eq!(von_neumann_entropy(&pure).unwrap(), 0.0);
        let mixed = CMat::<f64>::identity(4, 4) / cplx(4.0, 0.0);
        assert!((von_neumann_entropy(&mixed).unwrap() - 2.0).abs() < 1e-14);
        // Binary entropy oracle at p = 3/4: -(3/4)log2(3/4) - (1/4)log2(1/4).
        let mut d = CMat::<f64>::zeros(2, 2);
        d[(0, 0)] = cplx(0.75, 0.0);
        d[(1, 1)] = cplx(0.25, 0.0);
        let oracle = -(0.75f64 * 0.75f64.log2()) - 0.25 * 0.25f64.log2();
        assert!((oracle - (2.0 - 0.75 * 3f64.log2())).abs() < 1e-15);
        assert!((von_neumann_entropy(&d).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn entropy_rejects_invalid_input() {
        let m = CMat::<f64>::identity(2, 2);
        assert!(von_neumann_entropy(&m).is_err());
        let mut neg = CMat::<f64>::zeros(2, 2);
        neg[(0, 0)] = cplx(1.1, 0.0);
        neg[(1, 1)] = cplx(-0.1, 0.0);
        assert!(von_neumann_entropy(&neg).is_err());
    }

    #[test]
    fn entropy_concavity_spot_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let a = random_density_matrix::<f64, _>(3, &mut rng);
            let b = random_density_matrix::<f64, _>(3, &mut rng);
            let lambda: f64 = rng.random();
            let mix = &a * cplx(lambda, 0.0) + &b * cplx(1.0 - lambda, 0.0);
            let lhs = von_neumann_entropy(&mix).unwrap();
            let rhs = lambda * von_neumann_entropy(&a).unwrap() + (1.0 - lambda) * von_neumann_entropy(&b).unwrap();
            assert!(lhs >= rhs - 1e-10);
        }
    }

    #[test]
    fn nelder_mead_finds_quadratic_peak() {
        let a = [0.3, -1.2, 2.5];
        let f = |x: &[f64]| -x.iter().zip(&a).map(|(xi, ai)| (xi - ai).powi(2)).sum::<f64>();
        let cfg = OptimizerConfig::<f64> {
            restarts: 4,
            tolerance: 1e-10,
            ..Default::default()
        };
        let out = nelder_mead_maximize(&f, &[0.0, 0.0, 0.0], &cfg).unwrap();
        assert!(out.converged());
        for (xi, ai) in out.x.iter().zip(&a) {
            assert!((xi - ai).abs() < 1e-7);
        }
    }

    #[test]
    fn nelder_mead_solves_rosenbrock() {
        let f = |x: &[f64]| -((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let cfg = OptimizerConfig::<f64> {
            restarts: 8,
            tolerance: 1e-10,
            ..Default::default()
        };
        let out = nelder_mead_maximize(&f, &[-1.2, 1.0], &cfg).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-4 && (out.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn nelder_mead_is_deterministic_and_never_worse_than_start() {
        let f = |x: &[f64]| (3.0 * x[0]).sin() * (2.0 * x[1]).cos() - 0.1 * (x[0] * x[0] + x[1] * x[1]);
        let cfg = OptimizerConfig::<f64> {
            restarts: 6,
            seed: 99,
            ..Default::default()
        };
        let a = nelder_mead_maximize(&f, &[0.4, 0.1], &cfg).unwrap();
        let b = nelder_mead_maximize(&f, &[0.4, 0.1], &cfg).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.value, b.value);
        assert_eq!(a.restart, b.restart);
        assert!(a.value >= f(&[0.4, 0.1]) - cfg.tolerance);
    }

    #[test]
    fn config_validation() {
        let bad = OptimizerConfig::<f64> {
            restarts: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig::<f64> {
            tolerance: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn bisection_examples() {
        let r = bisect_zero(|t: f64| 1.0 - t, 0.0, 2.0, 1e-10).unwrap();
        assert!((r - 1.0).abs() < 1e-10);
        let r = bisect_zero(|t: f64| (-t).exp() - 0.5, 0.0, 3.0, 1e-12).unwrap();
        assert!((r - std::f64::consts::LN_2).abs() < 1e-11);
        assert!(matches!(
            bisect_zero(|t: f64| t, 0.0, 1.0, 1e-6),
            Err(Error::BracketInvalid { .. })
        ));
    }

    #[test]
    fn golden_section_peak() {
        let (x, v) = golden_section_maximize(|x: f64| -(x - 0.3).powi(2) + 2.0, 0.0, 1.0, 1e-10);
        // A quadratic peak resolves x only to about sqrt(machine epsilon).
        assert!((x - 0.3).abs() < 1e-7);
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre::<f64>(5);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m8: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(8)).sum();
        assert!((m8 - 2.0 / 9.0).abs() < 1e-14);
        let odd = integrate_gl(|x: f64| x.powi(3), -1.0, 1.0, 4);
        assert!(odd.abs() < 1e-15);
        let (x1, w1) = gauss_legendre::<f64>(1);
        assert_eq!(x1, vec![0.0]);
        assert!((w1[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn sphere_quadrature_constants_and_odd_functions() {
        let c = sphere_quadrature(|_t: f64, _p: f64| 0.7, SphereRule::MonteCarlo { points: 1000, seed: 1 });
        assert!((c.mean - 0.7).abs() < 1e-15);
        let odd = sphere_quadrature(|t: f64, _p: f64| t.cos(), SphereRule::MonteCarlo { points: 100_000, seed: 2 });
        assert!(odd.mean.abs() < 3.0 * odd.standard_error);
        let exact = sphere_quadrature(|t: f64, p: f64| (t.sin() * p.cos()).powi(2), SphereRule::Product { n_theta: 8, n_phi: 16 });
        assert!((exact.mean - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_standard_error_scales_as_inverse_root_n() {
        let f = |t: f64, p: f64| (t.cos() + p.sin()).powi(2);
        let a = sphere_quadrature(f, SphereRule::MonteCarlo { points: 20_000, seed: 3 });
        let b = sphere_quadrature(f, SphereRule::MonteCarlo { points: 80_000, seed: 4 });
        let ratio = a.standard_error / b.standard_error;
        assert!((ratio - 2.0).abs() < 0.6, "ratio {ratio}");
    }
}
