//! The correlated SU(2)-diffusion channel on N qubits.
//!
//! The channel twirls the input over collective rotations and then, for each
//! `i = 1..N-1`, applies a heat-kernel rotation to qubits `i+1..N`. On the
//! projector basis each step `I_i` acts in convention `{i}` through the
//! transfer coefficients [`r_coefficient`], and the convention is raised
//! between steps, so the output lives in convention `{N-1}`.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::angular_momentum::{shared_tables, triangle, HalfInteger};
use crate::constants::{CHOI_FULL_N_CAP, DENSE_CHANNEL_N_CAP, EIGEN_CLAMP, PATH_N_CAP};
use crate::coupling::{
    convention_shift, enumerate_paths, CouplingPath, CoupledBasis, ProjectorExpansion, Shift, TwirledState,
};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMat, DensityMatrix};
use crate::scalar::{cplx, Complex, Real};
use crate::stats::Welford;
use crate::su2_group::{haar_sample, DiffusionTime, HeatKernelSampler, Su2};

/// Labels of `R(t)^{J_out, j1', j2'}_{J_in, j1, j2}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RCoefficientKey {
    pub j_out: HalfInteger,
    pub j1p: HalfInteger,
    pub j2p: HalfInteger,
    pub j_in: HalfInteger,
    pub j1: HalfInteger,
    pub j2: HalfInteger,
}

/// Transfer amplitude of `P_{J_in}^{α,α'}` onto `P_{J_out}^{α,α'}` under one
/// diffusion step, where `(j1, j2)` and `(j1', j2')` are the block totals of
/// `α` and `α'`:
/// `Σ_j (-1)^{J_out-J_in} (2j+1)(2J_out+1) e^{-j(j+1)t/2}
///  {j1 J_in j2; j2' j j1'} {j1 j1' j; j2' j2 J_out}`.
pub fn r_coefficient<T: Real>(key: &RCoefficientKey, t: T) -> T {
    let am = shared_tables::<T>();
    let RCoefficientKey {
        j_out,
        j1p,
        j2p,
        j_in,
        j1,
        j2,
    } = *key;
    if (j_out.twice() - j_in.twice()) % 2 != 0 {
        return T::zero();
    }
    let sign = if ((j_out.twice() - j_in.twice()) / 2).rem_euclid(2) == 0 {
        T::one()
    } else {
        -T::one()
    };
    let mut sum = T::zero();
    let lo = (j2.twice() - j2p.twice()).abs();
    let hi = j2.twice() + j2p.twice();
    for tj in (lo..=hi).step_by(2) {
        let j = HalfInteger::from_twice(tj);
        let a = am.wigner_6j(j1, j_in, j2, j2p, j, j1p);
        if a == T::zero() {
            continue;
        }
        let b = am.wigner_6j(j1, j1p, j, j2p, j2, j_out);
        if b == T::zero() {
            continue;
        }
        let jv = j.value::<T>();
        let weight = T::from_int((tj + 1) as i64)
            * T::from_int((j_out.twice() + 1) as i64)
            * (-jv * (jv + T::one()) * t * T::lit(0.5)).exp();
        sum += weight * a * b;
    }
    sign * sum
}

/// One diffusion step `I_i` on an expansion stored in convention `{i}`.
pub fn apply_diffusion_step<T: Real>(expansion: &ProjectorExpansion<T>, i: usize, t: T) -> Result<ProjectorExpansion<T>> {
    if expansion.convention != i {
        return Err(Error::ConventionMismatch {
            expected: i,
            found: expansion.convention,
        });
    }
    let mut cache: HashMap<RCoefficientKey, T> = HashMap::new();
    let mut out = ProjectorExpansion::new(expansion.n, i);
    for (key, &value) in &expansion.terms {
        let (j1, j2) = (key.alpha.left_total(), key.alpha.right_total());
        let (j1p, j2p) = (key.alpha_prime.left_total(), key.alpha_prime.right_total());
        let lo = (j1.twice() - j2.twice()).abs();
        for tj_out in (lo..=j1.twice() + j2.twice()).step_by(2) {
            if !triangle(j1p.twice(), j2p.twice(), tj_out) {
                continue;
            }
            let rk = RCoefficientKey {
                j_out: HalfInteger::from_twice(tj_out),
                j1p,
                j2p,
                j_in: key.total,
                j1,
                j2,
            };
            let r = *cache.entry(rk).or_insert_with(|| r_coefficient(&rk, t));
            if r != T::zero() {
                out.add(
                    rk.j_out,
                    key.alpha.clone(),
                    key.alpha_prime.clone(),
                    value * cplx(r, T::zero()),
                );
            }
        }
    }
    out.prune(T::zero());
    Ok(out)
}

/// Choi-matrix domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChoiMode {
    /// The full `2^N`-dimensional channel.
    Full,
    /// The N = 3 channel on the two `J = 1/2` multiplicity labels plus the
    /// symmetric `J = 3/2` block, in the basis `{e_1, e_2, |2>}`.
    EffectiveQutrit,
}

/// Channel of `n` qubits at diffusion time `t`.
#[derive(Clone, Debug)]
pub struct DiffusionChannel<T: Real> {
    n: usize,
    t: T,
    dense: Option<(CoupledBasis<T>, CoupledBasis<T>)>,
}

impl<T: Real> DiffusionChannel<T> {
    /// Dense bases are prepared when `n` is within the dense cap.
    pub fn new(n: usize, t: T) -> Result<Self> {
        if n == 0 || n > PATH_N_CAP {
            return Err(Error::SizeCap(format!("N = {n} outside 1..={PATH_N_CAP}")));
        }
        let t = DiffusionTime::new(t)?.value();
        let dense = if n <= DENSE_CHANNEL_N_CAP {
            let out_convention = n.saturating_sub(1).max(1);
            Some((CoupledBasis::new(n, 1)?, CoupledBasis::new(n, out_convention)?))
        } else {
            None
        };
        Ok(Self { n, t, dense })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> T {
        self.t
    }

    /// Convention of channel outputs.
    pub fn output_convention(&self) -> usize {
        self.n.saturating_sub(1).max(1)
    }

    /// Maps a convention-1 expansion of a twirled operator to its image in
    /// convention `{N-1}`.
    pub fn apply_expansion(&self, input: &ProjectorExpansion<T>) -> Result<ProjectorExpansion<T>> {
        if input.convention != 1 || input.n != self.n {
            return Err(Error::ConventionMismatch {
                expected: 1,
                found: input.convention,
            });
        }
        if self.n == 1 {
            return Ok(input.clone());
        }
        let mut e = if self.t == T::zero() {
            input.clone()
        } else {
            apply_diffusion_step(input, 1, self.t)?
        };
        for k in 2..self.n {
            e = convention_shift(&e, Shift::Raise)?;
            if self.t != T::zero() {
                e = apply_diffusion_step(&e, k, self.t)?;
            }
        }
        Ok(e)
    }

    /// Image of `P_J^{α,α'}` (convention 1) in convention `{N-1}`.
    pub fn channel_on_projector(
        &self,
        total: HalfInteger,
        alpha: &CouplingPath,
        alpha_prime: &CouplingPath,
    ) -> Result<ProjectorExpansion<T>> {
        self.apply_expansion(&ProjectorExpansion::single(self.n, total, alpha.clone(), alpha_prime.clone())?)
    }

    fn bases(&self) -> Result<&(CoupledBasis<T>, CoupledBasis<T>)> {
        self.dense.as_ref().ok_or_else(|| {
            Error::SizeCap(format!("dense channel action needs N <= {DENSE_CHANNEL_N_CAP}, got {}", self.n))
        })
    }

    /// Linear action on an arbitrary (not necessarily Hermitian) operator.
    pub fn apply_operator(&self, op: &CMat<T>) -> Result<CMat<T>> {
        let (input, output) = self.bases()?;
        let e = input.expansion_of(op)?;
        output.expansion_to_operator(&self.apply_expansion(&e)?)
    }

    pub fn apply(&self, rho: &DensityMatrix<T>) -> Result<DensityMatrix<T>> {
        let out = self.apply_operator(rho.matrix())?;
        // Restore exact Hermiticity lost to rounding.
        let herm = (&out + out.adjoint()) * cplx(T::lit(0.5), T::zero());
        DensityMatrix::new(herm)
    }

    /// Output in block form, convention `{N-1}`.
    pub fn apply_twirled(&self, input: &TwirledState<T>) -> Result<TwirledState<T>> {
        let mut e = input.to_expansion()?;
        let mut k = input.convention;
        while k > 1 {
            e = convention_shift(&e, Shift::Lower)?;
            k -= 1;
        }
        TwirledState::from_expansion(&self.apply_expansion(&e)?)
    }

    /// Effective qutrit channel in the basis `{e_1, e_2, |2>}` of
    /// [`qutrit_label_basis_change`], computed with the projector machinery.
    pub fn apply_qutrit(&self, op: &CMat<T>) -> Result<CMat<T>> {
        let b = qutrit_label_basis_change::<T>();
        if op.nrows() != 3 || op.ncols() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: op.nrows(),
            });
        }
        let out = self.apply_qutrit_labels(&(&b * op * &b))?;
        Ok(&b * out * &b)
    }

    /// Effective qutrit channel in the label basis `{|0>, |1>, |2>}`, where
    /// `|0>` and `|1>` are the `J = 1/2` paths with `j_12 = 0` and `j_12 = 1`.
    pub fn apply_qutrit_labels(&self, op: &CMat<T>) -> Result<CMat<T>> {
        if self.n != 3 {
            return Err(Error::InvalidArgument(format!("the qutrit picture needs N = 3, got {}", self.n)));
        }
        if op.nrows() != 3 || op.ncols() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: op.nrows(),
            });
        }
        let (half, sym) = qutrit_paths()?;
        let mut e = ProjectorExpansion::new(3, 2);
        for a in 0..2 {
            for b in 0..2 {
                e.add(HalfInteger::HALF, half[a].clone(), half[b].clone(), op[(a, b)]);
            }
        }
        e.add(HalfInteger::from_twice(3), sym.clone(), sym.clone(), op[(2, 2)]);
        e.prune(T::zero());
        let out = self.apply_expansion(&convention_shift(&e, Shift::Lower)?)?;
        let mut q = CMat::<T>::zeros(3, 3);
        for (key, &v) in &out.terms {
            if key.total == HalfInteger::HALF {
                let a = half.iter().position(|p| *p == key.alpha).expect("J = 1/2 path");
                let b = half.iter().position(|p| *p == key.alpha_prime).expect("J = 1/2 path");
                q[(a, b)] += v;
            } else {
                q[(2, 2)] += v;
            }
        }
        Ok(q)
    }

    /// Choi matrix `C = d_in^{-1} Σ_{ij} |i><j| ⊗ E(|i><j|)`.
    pub fn choi(&self, mode: ChoiMode) -> Result<CMat<T>> {
        match mode {
            ChoiMode::Full => {
                if self.n > CHOI_FULL_N_CAP {
                    return Err(Error::SizeCap(format!(
                        "full Choi matrix needs N <= {CHOI_FULL_N_CAP}, got {}",
                        self.n
                    )));
                }
                choi_from_map(1 << self.n, 1 << self.n, |op| self.apply_operator(op))
            }
            ChoiMode::EffectiveQutrit => choi_from_map(3, 3, |op| self.apply_qutrit(op)),
        }
    }
}

/// Real symmetric involution taking `{e_1, e_2, |2>}` coordinates to
/// `{|0>, |1>, |2>}` coordinates, with `e_1 = (|0> + √3|1>)/2` and
/// `e_2 = (√3|0> - |1>)/2`.
pub fn qutrit_label_basis_change<T: Real>() -> CMat<T> {
    let h = T::lit(0.5);
    let r = T::lit(3.0).sqrt() * h;
    let z = T::zero();
    CMat::from_row_slice(
        3,
        3,
        &[cplx(h, z), cplx(r, z), cplx(z, z), cplx(r, z), cplx(-h, z), cplx(z, z), cplx(z, z), cplx(z, z), cplx(T::one(), z)],
    )
}

/// Convention-2 labels of the N = 3 qutrit: `J = 1/2` paths ordered
/// `j_12 = 0, 1`, then the `J = 3/2` path.
pub fn qutrit_paths() -> Result<(Vec<CouplingPath>, CouplingPath)> {
    let half = enumerate_paths(3, HalfInteger::HALF, 2)?;
    let sym = enumerate_paths(3, HalfInteger::from_twice(3), 2)?.remove(0);
    Ok((half, sym))
}

/// Choi matrix of a linear map given on matrix units; row index `i·d_out + a`.
pub fn choi_from_map<T: Real, F: Fn(&CMat<T>) -> Result<CMat<T>>>(d_in: usize, d_out: usize, map: F) -> Result<CMat<T>> {
    let mut c = CMat::<T>::zeros(d_in * d_out, d_in * d_out);
    let scale = cplx(T::one() / T::from_int(d_in as i64), T::zero());
    for i in 0..d_in {
        for j in 0..d_in {
            let mut unit = CMat::<T>::zeros(d_in, d_in);
            unit[(i, j)] = cplx(T::one(), T::zero());
            let img = map(&unit)?;
            for a in 0..d_out {
                for b in 0..d_out {
                    c[(i * d_out + a, j * d_out + b)] = img[(a, b)] * scale;
                }
            }
        }
    }
    Ok(c)
}

/// Applies the map encoded by a Choi matrix to `rho`.
pub fn apply_choi<T: Real>(choi: &CMat<T>, rho: &CMat<T>, d_in: usize, d_out: usize) -> CMat<T> {
    let din = cplx(T::from_int(d_in as i64), T::zero());
    CMat::from_fn(d_out, d_out, |a, b| {
        let mut acc = cplx(T::zero(), T::zero());
        for i in 0..d_in {
            for j in 0..d_in {
                acc += rho[(i, j)] * choi[(i * d_out + a, j * d_out + b)];
            }
        }
        acc * din
    })
}

/// Kraus operators `K_k[a, i] = sqrt(d_in λ_k) v_k[i·d_out + a]` from the
/// Choi eigenpairs with `λ_k > EIGEN_CLAMP`.
pub fn kraus_from_choi<T: Real>(choi: &CMat<T>, d_in: usize, d_out: usize) -> Result<Vec<CMat<T>>> {
    if choi.nrows() != d_in * d_out || choi.ncols() != d_in * d_out {
        return Err(Error::DimensionMismatch {
            expected: d_in * d_out,
            got: choi.nrows(),
        });
    }
    let din = T::from_int(d_in as i64);
    Ok(hermitian_eigen(choi)
        .into_iter()
        .filter(|(lambda, _)| *lambda > T::lit(EIGEN_CLAMP))
        .map(|(lambda, v)| {
            let s = cplx((din * lambda).sqrt(), T::zero());
            CMat::from_fn(d_out, d_in, |a, i| v[i * d_out + a] * s)
        })
        .collect())
}

/// Monte Carlo estimate of a channel output with per-entry standard errors.
#[derive(Clone, Debug)]
pub struct MonteCarloEstimate<T: Real> {
    pub mean: CMat<T>,
    pub standard_error_re: nalgebra::DMatrix<T>,
    pub standard_error_im: nalgebra::DMatrix<T>,
    pub samples: u64,
}

impl<T: Real> MonteCarloEstimate<T> {
    pub fn max_standard_error(&self) -> T {
        self.standard_error_re.iter().chain(self.standard_error_im.iter()).fold(T::zero(), |m, &v| m.max(v))
    }

    /// Largest `|Re|` or `|Im|` deviation of `reference` from the mean.
    pub fn max_deviation(&self, reference: &CMat<T>) -> T {
        self.mean
            .iter()
            .zip(reference.iter())
            .fold(T::zero(), |m, (a, b)| m.max((a.re - b.re).abs()).max((a.im - b.im).abs()))
    }

    /// Largest deviation in units of the entry's own standard error. Deviations
    /// at rounding level (below 1e-12) count as zero.
    pub fn max_sigma(&self, reference: &CMat<T>) -> T {
        let mut worst = T::zero();
        for idx in 0..self.mean.len() {
            let d = self.mean[idx] - reference[idx];
            for (dev, se) in [(d.re.abs(), self.standard_error_re[idx]), (d.im.abs(), self.standard_error_im[idx])] {
                let z = if dev <= T::lit(1e-12) {
                    T::zero()
                } else if se > T::zero() {
                    dev / se
                } else {
                    T::max_value().unwrap_or_else(|| T::lit(f64::MAX))
                };
                worst = worst.max(z);
            }
        }
        worst
    }
}

/// Applies the single-qubit `u` to qubit `q` (0 = most significant) of an
/// `n`-qubit operator from the left, and `u^†` from the right.
pub(crate) fn conjugate_qubit<T: Real>(m: &mut CMat<T>, n: usize, q: usize, u: &CMat<T>) {
    let dim = m.nrows();
    let bit = 1usize << (n - 1 - q);
    let (u00, u01, u10, u11) = (u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]);
    for col in 0..dim {
        for row in 0..dim {
            if row & bit == 0 {
                let (a, b) = (m[(row, col)], m[(row | bit, col)]);
                m[(row, col)] = u00 * a + u01 * b;
                m[(row | bit, col)] = u10 * a + u11 * b;
            }
        }
    }
    let (c00, c01, c10, c11) = (u00.conj(), u01.conj(), u10.conj(), u11.conj());
    for row in 0..dim {
        for col in 0..dim {
            if col & bit == 0 {
                let (a, b) = (m[(row, col)], m[(row, col | bit)]);
                m[(row, col)] = a * c00 + b * c01;
                m[(row, col | bit)] = a * c10 + b * c11;
            }
        }
    }
}

/// Number of independent RNG streams used by [`monte_carlo_channel`].
pub const MC_STREAMS: usize = 64;

/// Direct simulation of the Markov chain: `U_1` Haar, `U_i = U_i' U_{i-1}` with
/// `U_i'` drawn from the heat kernel, averaging `(⊗ U_i) ρ (⊗ U_i)^†`.
///
/// Samples are split over a fixed number of streams of one ChaCha8 seed, so
/// the result depends only on `(samples, seed)`.
pub fn monte_carlo_channel<T: Real>(
    rho: &CMat<T>,
    n: usize,
    t: T,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate<T>> {
    let dim = 1usize << n;
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: rho.nrows(),
        });
    }
    if samples < 1000 {
        return Err(Error::InvalidArgument(format!("at least 1000 samples required, got {samples}")));
    }
    let sampler = if t > T::zero() { Some(HeatKernelSampler::new(t)?) } else { None };
    let chunks: Vec<Vec<Welford<T>>> = (0..MC_STREAMS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = samples / MC_STREAMS + usize::from(c < samples % MC_STREAMS);
            let mut acc = vec![Welford::new(); 2 * dim * dim];
            for _ in 0..count {
                let mut u: Su2<T> = haar_sample(&mut rng);
                let mut m = rho.clone();
                for q in 0..n {
                    if q > 0 {
                        if let Some(s) = &sampler {
                            u = s.sample(&mut rng) * u;
                        }
                    }
                    conjugate_qubit(&mut m, n, q, &u.matrix());
                }
                for (k, z) in m.iter().enumerate() {
                    acc[2 * k].push(z.re);
                    acc[2 * k + 1].push(z.im);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Welford::new(); 2 * dim * dim];
    for chunk in &chunks {
        for (a, b) in total.iter_mut().zip(chunk) {
            a.merge(b);
        }
    }
    let mean = CMat::from_iterator(dim, dim, (0..dim * dim).map(|k| Complex::new(total[2 * k].mean, total[2 * k + 1].mean)));
    let standard_error_re = nalgebra::DMatrix::from_iterator(dim, dim, (0..dim * dim).map(|k| total[2 * k].standard_error()));
    let standard_error_im =
        nalgebra::DMatrix::from_iterator(dim, dim, (0..dim * dim).map(|k| total[2 * k + 1].standard_error()));
    Ok(MonteCarloEstimate {
        mean,
        standard_error_re,
        standard_error_im,
        samples: samples as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{embed, totals, twirl};
    use crate::linalg::{max_abs_diff, random_density_matrix, trace};
    use crate::optimize::gauss_legendre;
    use crate::su2_group::HeatKernel;

    fn h(tj: i32) -> HalfInteger {
        HalfInteger::from_twice(tj)
    }

    /// Weighted SU(2) nodes for `∫ dU w(U) f(U)`: Gauss–Legendre in the half
    /// angle `ψ` with Haar weight `(2/π) sin²ψ`, Gauss–Legendre in `cos θ` and
    /// the trapezoid rule in `φ` for the axis.
    fn su2_nodes(kernel: Option<&HeatKernel<f64>>) -> Vec<(f64, CMat<f64>)> {
        let (px, pw) = gauss_legendre::<f64>(40);
        let (cx, cw) = gauss_legendre::<f64>(8);
        let nphi = 16;
        let mut out = Vec::new();
        for (x, w) in px.iter().zip(&pw) {
            let psi = (x + 1.0) * std::f64::consts::FRAC_PI_2;
            let density = kernel.map_or(1.0, |k| k.density(2.0 * psi));
            let wpsi = w * std::f64::consts::FRAC_PI_2 * (2.0 / std::f64::consts::PI) * psi.sin().powi(2) * density;
            for (c, wc) in cx.iter().zip(&cw) {
                let s = (1.0 - c * c).sqrt();
                for k in 0..nphi {
                    let phi = 2.0 * std::f64::consts::PI * k as f64 / nphi as f64;
                    let u = Su2::from_axis_angle([s * phi.cos(), s * phi.sin(), *c], 2.0 * psi);
                    out.push((wpsi * wc / 2.0 / nphi as f64, u.matrix()));
                }
            }
        }
        out
    }

    /// `∫ dU w(U) (1 ⊗ U^{⊗(n-i)}) X (...)^†`.
    fn rotate_tail(x: &CMat<f64>, n: usize, i: usize, nodes: &[(f64, CMat<f64>)]) -> CMat<f64> {
        let mut out = CMat::<f64>::zeros(x.nrows(), x.ncols());
        for (w, u) in nodes {
            let mut m = x.clone();
            for q in i..n {
                conjugate_qubit(&mut m, n, q, u);
            }
            out += m * cplx(*w, 0.0);
        }
        out
    }

    fn quadrature_channel(x: &CMat<f64>, n: usize, t: f64) -> CMat<f64> {
        let mut out = rotate_tail(x, n, 0, &su2_nodes(None));
        let kernel = HeatKernel::new(t).unwrap();
        let nodes = su2_nodes(Some(&kernel));
        for i in 1..n {
            out = rotate_tail(&out, n, i, &nodes);
        }
        out
    }

    #[test]
    fn pipeline_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, t) in [(2, 0.7), (3, 0.5), (4, 0.3)] {
            let rho = random_density_matrix::<f64, _>(1 << n, &mut rng);
            let ch = DiffusionChannel::new(n, t).unwrap();
            let fast = ch.apply_operator(&rho).unwrap();
            let slow = quadrature_channel(&rho, n, t);
            assert!(max_abs_diff(&fast, &slow) < 1e-10, "N = {n}: {}", max_abs_diff(&fast, &slow));
        }
    }

    #[test]
    fn single_step_matches_quadrature_and_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 3;
        let t = 0.4;
        let rho = random_density_matrix::<f64, _>(8, &mut rng);
        let kernel = HeatKernel::new(t).unwrap();
        let nodes = su2_nodes(Some(&kernel));
        let b1 = CoupledBasis::<f64>::new(n, 1).unwrap();
        let b2 = CoupledBasis::<f64>::new(n, 2).unwrap();
        let e1 = b1.expansion_of(&rho).unwrap();
        let twirled = b1.expansion_to_operator(&e1).unwrap();

        let step1 = b1.expansion_to_operator(&apply_diffusion_step(&e1, 1, t).unwrap()).unwrap();
        assert!(max_abs_diff(&step1, &rotate_tail(&twirled, n, 1, &nodes)) < 1e-10);

        let e2 = convention_shift(&e1, Shift::Raise).unwrap();
        let step2 = b2.expansion_to_operator(&apply_diffusion_step(&e2, 2, t).unwrap()).unwrap();
        assert!(max_abs_diff(&step2, &rotate_tail(&twirled, n, 2, &nodes)) < 1e-10);

        // I_1 I_2 against I_2 I_1.
        let a = b1.expansion_of(&step2).unwrap();
        let i1_i2 = b1.expansion_to_operator(&apply_diffusion_step(&a, 1, t).unwrap()).unwrap();
        let b = convention_shift(&apply_diffusion_step(&e1, 1, t).unwrap(), Shift::Raise).unwrap();
        let i2_i1 = b2.expansion_to_operator(&apply_diffusion_step(&b, 2, t).unwrap()).unwrap();
        assert!(max_abs_diff(&i1_i2, &i2_i1) < 1e-10);

        assert!(matches!(apply_diffusion_step(&e1, 2, t), Err(Error::ConventionMismatch { .. })));
    }

    #[test]
    fn zero_time_step_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = CoupledBasis::<f64>::new(4, 1).unwrap();
        let e = b.expansion_of(&random_density_matrix::<f64, _>(16, &mut rng)).unwrap();
        let mut out = apply_diffusion_step(&e, 1, 0.0).unwrap();
        out.prune(1e-15);
        assert!(out.max_abs_diff(&e) < 1e-12);
    }

    #[test]
    fn large_time_step_is_independent_twirl() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 3;
        let b1 = CoupledBasis::<f64>::new(n, 1).unwrap();
        let e = b1.expansion_of(&random_density_matrix::<f64, _>(8, &mut rng)).unwrap();
        let twirled = b1.expansion_to_operator(&e).unwrap();
        let step = b1.expansion_to_operator(&apply_diffusion_step(&e, 1, 50.0).unwrap()).unwrap();
        let haar = rotate_tail(&twirled, n, 1, &su2_nodes(None));
        assert!(max_abs_diff(&step, &haar) < 1e-10);
    }

    #[test]
    fn single_qubit_is_completely_depolarized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in [0.0, 0.3, 5.0] {
            let rho = DensityMatrix::new(random_density_matrix::<f64, _>(2, &mut rng)).unwrap();
            let out = DiffusionChannel::new(1, t).unwrap().apply(&rho).unwrap();
            assert!(max_abs_diff(out.matrix(), &(CMat::identity(2, 2) * cplx(0.5, 0.0))) < 1e-14);
        }
    }

    #[test]
    fn werner_singlet_weight_shrinks_by_exp_t() {
        for t in [0.1, 0.5, 2.0] {
            let ch = DiffusionChannel::<f64>::new(2, t).unwrap();
            let singlet = &enumerate_paths(2, h(0), 1).unwrap()[0];
            let out = TwirledState::from_expansion(&ch.channel_on_projector(h(0), singlet, singlet).unwrap()).unwrap();
            let p0 = out.block(h(0)).unwrap().p;
            assert!((p0 - (1.0 + 3.0 * (-t).exp()) / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_block_at_ln2() {
        let ch = DiffusionChannel::<f64>::new(3, std::f64::consts::LN_2).unwrap();
        let mut q = CMat::<f64>::zeros(3, 3);
        q[(2, 2)] = cplx(1.0, 0.0);
        let out = ch.apply_qutrit(&q).unwrap();
        let expect = [3.0 / 16.0, 5.0 / 48.0, 17.0 / 24.0];
        for (i, e) in expect.iter().enumerate() {
            assert!((out[(i, i)].re - e).abs() < 1e-12);
        }
        assert!(out[(0, 1)].norm() < 1e-14);
        let b = qutrit_label_basis_change::<f64>();
        assert!(max_abs_diff(&(&b * &b), &CMat::identity(3, 3)) < 1e-15);
    }

    #[test]
    fn outputs_are_trace_preserving_twirled_and_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 2..=4 {
            for t in [0.0, 0.3, 2.0] {
                let ch = DiffusionChannel::new(n, t).unwrap();
                let rho = DensityMatrix::new(random_density_matrix::<f64, _>(1 << n, &mut rng)).unwrap();
                let out = ch.apply(&rho).unwrap();
                assert!((trace(out.matrix()).re - 1.0).abs() < 1e-12);
                let re = embed(&twirl(&out, n).unwrap()).unwrap();
                // Output is twirl-invariant; compare in its own basis.
                assert!(max_abs_diff(&re, out.matrix()) < 1e-10);
                let pre = DensityMatrix::new(embed(&twirl(&rho, n).unwrap()).unwrap()).unwrap();
                assert!(max_abs_diff(ch.apply(&pre).unwrap().matrix(), out.matrix()) < 1e-10);
                let u = haar_sample::<f64, _>(&mut rng).matrix();
                let mut big = u.clone();
                for _ in 1..n {
                    big = big.kronecker(&u);
                }
                let rotated = DensityMatrix::new(&big * rho.matrix() * big.adjoint()).unwrap();
                assert!(max_abs_diff(ch.apply(&rotated).unwrap().matrix(), out.matrix()) < 1e-10);
            }
        }
    }

    #[test]
    fn block_weights_are_column_stochastic() {
        for n in 2..=5 {
            let ch = DiffusionChannel::<f64>::new(n, 0.6).unwrap();
            for total in totals(n) {
                for a in enumerate_paths(n, total, 1).unwrap() {
                    let out = TwirledState::from_expansion(&ch.channel_on_projector(total, &a, &a).unwrap()).unwrap();
                    let sum: f64 = out.blocks.iter().map(|b| b.p).sum();
                    assert!((sum - 1.0).abs() < 1e-10);
                    assert!(out.blocks.iter().all(|b| b.p > -1e-12));
                }
            }
        }
    }

    #[test]
    fn choi_properties() {
        let ch1 = DiffusionChannel::<f64>::new(1, 0.0).unwrap();
        let c = ch1.choi(ChoiMode::Full).unwrap();
        assert!(max_abs_diff(&c, &(CMat::identity(4, 4) * cplx(0.25, 0.0))) < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for t in [0.0, 0.1, 1.0, 10.0] {
            let ch = DiffusionChannel::<f64>::new(3, t).unwrap();
            let c = ch.choi(ChoiMode::Full).unwrap();
            let ev = crate::linalg::hermitian_eigenvalues(&c);
            assert!(ev[0] > -1e-10);
            // Partial trace over the output is 1/d_in.
            for i in 0..8 {
                for j in 0..8 {
                    let s: Complex<f64> = (0..8).map(|a| c[(i * 8 + a, j * 8 + a)]).sum();
                    let expect = if i == j { 0.125 } else { 0.0 };
                    assert!((s - cplx(expect, 0.0)).norm() < 1e-10);
                }
            }
            let rho = random_density_matrix::<f64, _>(8, &mut rng);
            let via_choi = apply_choi(&c, &rho, 8, 8);
            assert!(max_abs_diff(&via_choi, &ch.apply_operator(&rho).unwrap()) < 1e-10);
            let kraus = kraus_from_choi(&c, 8, 8).unwrap();
            let mut via_kraus = CMat::<f64>::zeros(8, 8);
            let mut completeness = CMat::<f64>::zeros(8, 8);
            for k in &kraus {
                via_kraus += k * &rho * k.adjoint();
                completeness += k.adjoint() * k;
            }
            assert!(max_abs_diff(&via_kraus, &via_choi) < 1e-10);
            assert!(max_abs_diff(&completeness, &CMat::identity(8, 8)) < 1e-10);
        }
        assert!(matches!(
            DiffusionChannel::<f64>::new(6, 0.1).unwrap().choi(ChoiMode::Full),
            Err(Error::SizeCap(_))
        ));
    }

    #[test]
    fn qutrit_choi_is_cptp() {
        let ch = DiffusionChannel::<f64>::new(3, 0.4).unwrap();
        let c = ch.choi(ChoiMode::EffectiveQutrit).unwrap();
        assert!(crate::linalg::hermitian_eigenvalues(&c)[0] > -1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = random_density_matrix::<f64, _>(3, &mut rng);
        assert!((trace(&ch.apply_qutrit(&q).unwrap()).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_is_reproducible_and_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rho = random_density_matrix::<f64, _>(4, &mut rng);
        let a = monte_carlo_channel(&rho, 2, 0.5, 20_000, 42).unwrap();
        let b = monte_carlo_channel(&rho, 2, 0.5, 20_000, 42).unwrap();
        assert_eq!(a.mean, b.mean);
        let exact = DiffusionChannel::new(2, 0.5).unwrap().apply_operator(&rho).unwrap();
        assert!(a.max_deviation(&exact) < 3.0 * a.max_standard_error());
        assert!(monte_carlo_channel(&rho, 2, 0.5, 10, 1).is_err());
    }

    #[test]
    fn monte_carlo_large_time_is_independent_depolarization() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let rho = random_density_matrix::<f64, _>(4, &mut rng);
        let est = monte_carlo_channel(&rho, 2, 50.0, 50_000, 3).unwrap();
        let target = CMat::<f64>::identity(4, 4) * cplx(0.25, 0.0);
        assert!(est.max_deviation(&target) < 3.0 * est.max_standard_error());
    }

    #[test]
    fn conjugate_qubit_matches_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_density_matrix::<f64, _>(8, &mut rng);
        let u = haar_sample::<f64, _>(&mut rng).matrix();
        let id = CMat::<f64>::identity(2, 2);
        for q in 0..3 {
            let mut ops = [id.clone(), id.clone(), id.clone()];
            ops[q] = u.clone();
            let big = ops[0].kronecker(&ops[1]).kronecker(&ops[2]);
            let mut fast = m.clone();
            conjugate_qubit(&mut fast, 3, q, &u);
            assert!(max_abs_diff(&fast, &(&big * &m * big.adjoint())) < 1e-14);
        }
    }
}
