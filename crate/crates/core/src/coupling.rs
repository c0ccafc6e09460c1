//! Coupling schemes of N spin-1/2 particles.
//!
//! A convention-`k` path couples spins `1..k` left to right into
//! `j_1, j_12, ..., j_{1..k}` and spins `N..k+1` right to left into
//! `j_N, ..., j_{k+1..N}`, then couples the two blocks to the total `J`.
//! Every Clebsch–Gordan coupling takes its factors in tensor-product order,
//! and qubit 1 is the most significant tensor factor with `|0> = |m = +1/2>`.
//!
//! Projector operators `P_J^{α,α'} = (2J+1)^{-1} Σ_M |J M α><J M α'|` span the
//! twirl-invariant operators. [`ProjectorExpansion`] stores coefficients over
//! them and [`convention_shift`] re-expresses those coefficients between
//! neighbouring conventions with the recoupling coefficients.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::angular_momentum::{shared_tables, triangle, AngularMomentum, HalfInteger};
use crate::constants::{BASIS_N_CAP, BLOCK_WEIGHT_FLOOR, DENSITY_TRACE_TOL, PATH_N_CAP};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, CMat, DensityMatrix};
use crate::scalar::{cplx, Complex, Real};

/// Intermediate angular momenta of one coupling scheme.
///
/// `left` is `j_1, j_12, ..., j_{1..k}` and `right` is
/// `j_{k+1..N}, ..., j_N`. Ordering is lexicographic in `left` then `right`,
/// which fixes the multiplicity-space basis order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CouplingPath {
    pub left: Vec<HalfInteger>,
    pub right: Vec<HalfInteger>,
    pub convention: usize,
}

impl CouplingPath {
    pub fn n(&self) -> usize {
        self.left.len() + self.right.len()
    }

    /// `j_{1..k}`.
    pub fn left_total(&self) -> HalfInteger {
        *self.left.last().expect("left block is never empty")
    }

    /// `j_{k+1..N}`, or zero for a single qubit.
    pub fn right_total(&self) -> HalfInteger {
        self.right.first().copied().unwrap_or(HalfInteger::ZERO)
    }

    /// Whether the two blocks can couple to `total`.
    pub fn admits_total(&self, total: HalfInteger) -> bool {
        if self.right.is_empty() {
            total == self.left_total()
        } else {
            triangle(self.left_total().twice(), self.right_total().twice(), total.twice())
        }
    }

    /// Checks the branching-diagram rules for an `n`-qubit path.
    pub fn validate(&self, n: usize) -> Result<()> {
        check_convention(n, self.convention)?;
        if self.left.len() != self.convention || self.n() != n {
            return Err(Error::InvalidArgument(format!(
                "path lengths {}+{} do not match convention {{{}}} of N = {n}",
                self.left.len(),
                self.right.len(),
                self.convention
            )));
        }
        let steps_ok = |seq: &[HalfInteger]| seq.windows(2).all(|w| (w[0].twice() - w[1].twice()).abs() == 1);
        let ends_ok = self.left[0] == HalfInteger::HALF
            && self.right.last().is_none_or(|&j| j == HalfInteger::HALF)
            && self.left.iter().chain(&self.right).all(|j| j.twice() >= 0);
        if !(steps_ok(&self.left) && steps_ok(&self.right) && ends_ok) {
            return Err(Error::InvalidArgument(format!("not a branching-diagram path: {self:?}")));
        }
        Ok(())
    }
}

fn check_qubits(n: usize, cap: usize) -> Result<()> {
    if n == 0 || n > cap {
        return Err(Error::SizeCap(format!("N = {n} outside the supported range 1..={cap}")));
    }
    Ok(())
}

/// Conventions run over `1..=N-1`; a single qubit uses convention 1 with an
/// empty right block.
fn check_convention(n: usize, k: usize) -> Result<()> {
    let max = n.saturating_sub(1).max(1);
    if k < 1 || k > max {
        return Err(Error::InvalidArgument(format!("convention {k} outside [1, {max}] for N = {n}")));
    }
    Ok(())
}

/// Total angular momenta of `n` qubits in increasing order.
pub fn totals(n: usize) -> Vec<HalfInteger> {
    (0..=n as i32).filter(|tj| (tj - n as i32) % 2 == 0).map(HalfInteger::from_twice).collect()
}

/// Ascending chains of `len` intermediate momenta starting at `1/2`.
fn chains(len: usize) -> Vec<Vec<HalfInteger>> {
    if len == 0 {
        return vec![vec![]];
    }
    let mut out = vec![vec![HalfInteger::HALF]];
    for _ in 1..len {
        out = out
            .into_iter()
            .flat_map(|seq| {
                let last = seq[seq.len() - 1].twice();
                [last + 1, last - 1].into_iter().filter(|&tj| tj >= 0).map(move |tj| {
                    let mut next = seq.clone();
                    next.push(HalfInteger::from_twice(tj));
                    next
                })
            })
            .collect();
    }
    out
}

/// All convention-`k` paths of `n` qubits ending at `total`, sorted.
pub fn enumerate_paths(n: usize, total: HalfInteger, k: usize) -> Result<Vec<CouplingPath>> {
    check_qubits(n, PATH_N_CAP)?;
    check_convention(n, k)?;
    let lefts = chains(k);
    let rights: Vec<Vec<HalfInteger>> = chains(n - k)
        .into_iter()
        .map(|mut c| {
            c.reverse();
            c
        })
        .collect();
    let mut paths: Vec<CouplingPath> = lefts
        .iter()
        .flat_map(|l| {
            rights.iter().map(move |r| CouplingPath {
                left: l.clone(),
                right: r.clone(),
                convention: k,
            })
        })
        .filter(|p| p.admits_total(total))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Multiplicity `d_J` of total `J` among `n` qubits.
pub fn multiplicity(n: usize, total: HalfInteger) -> Result<usize> {
    Ok(enumerate_paths(n, total, 1)?.len())
}

type BlockStates<T> = BTreeMap<i32, DVector<T>>;

fn spin_half<T: Real>(twice_m: i32) -> DVector<T> {
    if twice_m > 0 {
        DVector::from_vec(vec![T::one(), T::zero()])
    } else {
        DVector::from_vec(vec![T::zero(), T::one()])
    }
}

fn spin_half_states<T: Real>() -> BlockStates<T> {
    BTreeMap::from([(1, spin_half(1)), (-1, spin_half(-1))])
}

/// Couples `a` (left factor) with `b` (right factor) to total `j`.
fn couple<T: Real>(
    am: &AngularMomentum<T>,
    ja: HalfInteger,
    a: &BlockStates<T>,
    jb: HalfInteger,
    b: &BlockStates<T>,
    j: HalfInteger,
) -> BlockStates<T> {
    j.projections()
        .map(|m| {
            let dim = a.values().next().map_or(1, |v| v.len()) * b.values().next().map_or(1, |v| v.len());
            let mut v = DVector::<T>::zeros(dim);
            for (&ma, va) in a {
                let mb = m.twice() - ma;
                if let Some(vb) = b.get(&mb) {
                    let c = am.clebsch_gordan(ja, HalfInteger::from_twice(ma), jb, HalfInteger::from_twice(mb), j, m);
                    if c != T::zero() {
                        v += va.kronecker(vb) * c;
                    }
                }
            }
            (m.twice(), v)
        })
        .collect()
}

fn left_block<T: Real>(am: &AngularMomentum<T>, seq: &[HalfInteger]) -> BlockStates<T> {
    let spin = spin_half_states::<T>();
    let mut states = spin_half_states::<T>();
    for w in seq.windows(2) {
        states = couple(am, w[0], &states, HalfInteger::HALF, &spin, w[1]);
    }
    states
}

fn right_block<T: Real>(am: &AngularMomentum<T>, seq: &[HalfInteger]) -> BlockStates<T> {
    let spin = spin_half_states::<T>();
    let mut states = spin_half_states::<T>();
    for w in seq.windows(2).rev() {
        states = couple(am, HalfInteger::HALF, &spin, w[1], &states, w[0]);
    }
    states
}

/// `|J M α>` for every `M = J..-J` of one path, as real vectors.
fn path_states<T: Real>(am: &AngularMomentum<T>, path: &CouplingPath, total: HalfInteger) -> BlockStates<T> {
    let left = left_block(am, &path.left);
    if path.right.is_empty() {
        return left;
    }
    let right = right_block(am, &path.right);
    couple(am, path.left_total(), &left, path.right_total(), &right, total)
}

fn check_path_total(n: usize, total: HalfInteger, path: &CouplingPath) -> Result<()> {
    path.validate(n)?;
    if !path.admits_total(total) {
        return Err(Error::InvalidArgument(format!(
            "path blocks {} and {} cannot couple to J = {total}",
            path.left_total(),
            path.right_total()
        )));
    }
    Ok(())
}

/// The coupled state `|J M α>` as a `2^N` vector.
pub fn coupled_basis_vector<T: Real>(
    n: usize,
    total: HalfInteger,
    m: HalfInteger,
    path: &CouplingPath,
) -> Result<DVector<Complex<T>>> {
    check_qubits(n, BASIS_N_CAP)?;
    check_path_total(n, total, path)?;
    if !total.admits_projection(m) {
        return Err(Error::InvalidArgument(format!("M = {m} is not a projection of J = {total}")));
    }
    let states = path_states(shared_tables::<T>(), path, total);
    Ok(states[&m.twice()].map(|x| cplx(x, T::zero())))
}

/// Dense `P_J^{α,α'}`.
pub fn projector_matrix<T: Real>(
    n: usize,
    total: HalfInteger,
    alpha: &CouplingPath,
    alpha_prime: &CouplingPath,
) -> Result<CMat<T>> {
    if alpha.convention != alpha_prime.convention {
        return Err(Error::ConventionMismatch {
            expected: alpha.convention,
            found: alpha_prime.convention,
        });
    }
    check_qubits(n, BASIS_N_CAP)?;
    check_path_total(n, total, alpha)?;
    check_path_total(n, total, alpha_prime)?;
    let am = shared_tables::<T>();
    let a = path_states(am, alpha, total);
    let b = path_states(am, alpha_prime, total);
    let dim = 1usize << n;
    let mut out = DMatrix::<T>::zeros(dim, dim);
    for (tm, va) in &a {
        out += va * b[tm].transpose();
    }
    let scale = T::one() / T::from_int(total.multiplicity() as i64);
    Ok(out.map(|x| cplx(x * scale, T::zero())))
}

/// One total-`J` block of a coupled basis.
#[derive(Clone, Debug)]
pub struct BasisBlock {
    pub total: HalfInteger,
    pub paths: Vec<CouplingPath>,
    /// First column of the block; columns run over `α` then `M = J..-J`.
    pub offset: usize,
}

impl BasisBlock {
    pub fn multiplicity(&self) -> usize {
        self.paths.len()
    }

    pub fn column(&self, alpha: usize, m_index: usize) -> usize {
        self.offset + alpha * self.total.multiplicity() + m_index
    }

    pub fn path_index(&self, path: &CouplingPath) -> Option<usize> {
        self.paths.binary_search(path).ok()
    }
}

/// All coupled states of one convention as the columns of a real orthogonal
/// `2^N × 2^N` matrix.
#[derive(Clone, Debug)]
pub struct CoupledBasis<T: Real> {
    n: usize,
    convention: usize,
    blocks: Vec<BasisBlock>,
    matrix: DMatrix<T>,
}

impl<T: Real> CoupledBasis<T> {
    pub fn new(n: usize, convention: usize) -> Result<Self> {
        check_qubits(n, BASIS_N_CAP)?;
        check_convention(n, convention)?;
        let am = shared_tables::<T>();
        let dim = 1usize << n;
        let mut matrix = DMatrix::<T>::zeros(dim, dim);
        let mut blocks = Vec::new();
        let mut offset = 0;
        for total in totals(n) {
            let paths = enumerate_paths(n, total, convention)?;
            for (alpha, path) in paths.iter().enumerate() {
                let states = path_states(am, path, total);
                for (mi, m) in total.projections().enumerate() {
                    matrix.set_column(offset + alpha * total.multiplicity() + mi, &states[&m.twice()]);
                }
            }
            let width = paths.len() * total.multiplicity();
            blocks.push(BasisBlock { total, paths, offset });
            offset += width;
        }
        debug_assert_eq!(offset, dim);
        Ok(Self {
            n,
            convention,
            blocks,
            matrix,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn convention(&self) -> usize {
        self.convention
    }

    pub fn blocks(&self) -> &[BasisBlock] {
        &self.blocks
    }

    pub fn block(&self, total: HalfInteger) -> Option<&BasisBlock> {
        self.blocks.iter().find(|b| b.total == total)
    }

    /// Columns are the coupled states.
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    fn complex_matrix(&self) -> CMat<T> {
        self.matrix.map(|x| cplx(x, T::zero()))
    }

    fn check_dim(&self, op: &CMat<T>) -> Result<()> {
        let dim = 1usize << self.n;
        if op.nrows() != dim || op.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: op.nrows(),
            });
        }
        Ok(())
    }

    /// `c_J[α, α'] = Σ_M <J M α| op |J M α'>`, the coefficients of the twirl
    /// of `op` over `P_J^{α,α'}`.
    pub fn twirl_coefficients(&self, op: &CMat<T>) -> Result<Vec<CMat<T>>> {
        self.check_dim(op)?;
        let b = self.complex_matrix();
        let rotated = b.transpose() * op * &b;
        Ok(self
            .blocks
            .iter()
            .map(|blk| {
                let d = blk.multiplicity();
                let w = blk.total.multiplicity();
                CMat::from_fn(d, d, |a, ap| {
                    (0..w).fold(cplx(T::zero(), T::zero()), |acc, mi| {
                        acc + rotated[(blk.column(a, mi), blk.column(ap, mi))]
                    })
                })
            })
            .collect())
    }

    /// Twirl-invariant operator `Σ_J Σ c_J[α, α'] P_J^{α,α'}`.
    pub fn operator_from_coefficients(&self, coefficients: &[CMat<T>]) -> Result<CMat<T>> {
        if coefficients.len() != self.blocks.len() {
            return Err(Error::DimensionMismatch {
                expected: self.blocks.len(),
                got: coefficients.len(),
            });
        }
        let dim = 1usize << self.n;
        let mut inner = CMat::<T>::zeros(dim, dim);
        for (blk, c) in self.blocks.iter().zip(coefficients) {
            let d = blk.multiplicity();
            if c.nrows() != d || c.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.nrows(),
                });
            }
            let w = blk.total.multiplicity();
            let scale = cplx(T::one() / T::from_int(w as i64), T::zero());
            for a in 0..d {
                for ap in 0..d {
                    for mi in 0..w {
                        inner[(blk.column(a, mi), blk.column(ap, mi))] = c[(a, ap)] * scale;
                    }
                }
            }
        }
        let b = self.complex_matrix();
        Ok(&b * inner * b.transpose())
    }

    pub fn twirl(&self, rho: &DensityMatrix<T>) -> Result<TwirledState<T>> {
        let coefficients = self.twirl_coefficients(rho.matrix())?;
        Ok(TwirledState::from_coefficients(self.n, self.convention, self, coefficients))
    }

    pub fn embed(&self, state: &TwirledState<T>) -> Result<CMat<T>> {
        if state.convention != self.convention {
            return Err(Error::ConventionMismatch {
                expected: self.convention,
                found: state.convention,
            });
        }
        let coefficients: Vec<CMat<T>> = state
            .blocks
            .iter()
            .map(|b| &b.rho * cplx(b.p, T::zero()))
            .collect();
        self.operator_from_coefficients(&coefficients)
    }

    /// Projector expansion of the twirl of `op`.
    pub fn expansion_of(&self, op: &CMat<T>) -> Result<ProjectorExpansion<T>> {
        let coefficients = self.twirl_coefficients(op)?;
        let mut out = ProjectorExpansion::new(self.n, self.convention);
        for (blk, c) in self.blocks.iter().zip(&coefficients) {
            for (a, pa) in blk.paths.iter().enumerate() {
                for (ap, pap) in blk.paths.iter().enumerate() {
                    out.add(blk.total, pa.clone(), pap.clone(), c[(a, ap)]);
                }
            }
        }
        out.prune(T::zero());
        Ok(out)
    }

    /// Per-block coefficient matrices of an expansion in this convention.
    pub fn coefficients_of(&self, expansion: &ProjectorExpansion<T>) -> Result<Vec<CMat<T>>> {
        if expansion.n != self.n || expansion.convention != self.convention {
            return Err(Error::ConventionMismatch {
                expected: self.convention,
                found: expansion.convention,
            });
        }
        let mut coefficients: Vec<CMat<T>> =
            self.blocks.iter().map(|b| CMat::zeros(b.multiplicity(), b.multiplicity())).collect();
        for (key, &value) in &expansion.terms {
            let bi = self
                .blocks
                .iter()
                .position(|b| b.total == key.total)
                .ok_or_else(|| Error::InvalidArgument(format!("no J = {} block", key.total)))?;
            let blk = &self.blocks[bi];
            let (a, ap) = blk
                .path_index(&key.alpha)
                .zip(blk.path_index(&key.alpha_prime))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown path in key {key:?}")))?;
            coefficients[bi][(a, ap)] += value;
        }
        Ok(coefficients)
    }

    pub fn expansion_to_operator(&self, expansion: &ProjectorExpansion<T>) -> Result<CMat<T>> {
        self.operator_from_coefficients(&self.coefficients_of(expansion)?)
    }
}

/// Twirl of `rho` in convention 1.
pub fn twirl<T: Real>(rho: &DensityMatrix<T>, n: usize) -> Result<TwirledState<T>> {
    CoupledBasis::new(n, 1)?.twirl(rho)
}

/// Dense reconstruction `Σ_J p_J/(2J+1) 1_{H_J} ⊗ ρ_J` in the state's own
/// convention.
pub fn embed<T: Real>(state: &TwirledState<T>) -> Result<CMat<T>> {
    CoupledBasis::new(state.n, state.convention)?.embed(state)
}

/// Block weight and multiplicity-space state of one total `J`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwirlBlock<T: Real> {
    pub total: HalfInteger,
    pub p: T,
    /// `d_J × d_J` in path order; zero when `p` is below the weight floor.
    pub rho: CMat<T>,
}

/// A twirl-invariant state in block form.
#[derive(Clone, Debug, PartialEq)]
pub struct TwirledState<T: Real> {
    pub n: usize,
    pub convention: usize,
    pub blocks: Vec<TwirlBlock<T>>,
}

impl<T: Real> TwirledState<T> {
    fn from_coefficients(n: usize, convention: usize, basis: &CoupledBasis<T>, coefficients: Vec<CMat<T>>) -> Self {
        let blocks = basis
            .blocks
            .iter()
            .zip(coefficients)
            .map(|(blk, c)| {
                let p = (0..c.nrows()).fold(T::zero(), |acc, a| acc + c[(a, a)].re);
                let rho = if p.abs() < T::lit(BLOCK_WEIGHT_FLOOR) {
                    CMat::zeros(c.nrows(), c.ncols())
                } else {
                    c / cplx(p, T::zero())
                };
                TwirlBlock {
                    total: blk.total,
                    p,
                    rho,
                }
            })
            .collect();
        Self {
            n,
            convention,
            blocks,
        }
    }

    /// The maximally mixed state: `p_J = (2J+1) d_J / 2^N`, `ρ_J = 1/d_J`.
    pub fn maximally_mixed(n: usize, convention: usize) -> Result<Self> {
        let dim = T::from_int(1i64 << n);
        let blocks = totals(n)
            .into_iter()
            .map(|total| {
                let d = enumerate_paths(n, total, convention)?.len();
                Ok(TwirlBlock {
                    total,
                    p: T::from_int((total.multiplicity() * d) as i64) / dim,
                    rho: CMat::identity(d, d) / cplx(T::from_int(d as i64), T::zero()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            convention,
            blocks,
        })
    }

    pub fn block(&self, total: HalfInteger) -> Option<&TwirlBlock<T>> {
        self.blocks.iter().find(|b| b.total == total)
    }

    /// Checks weights and block states against the density tolerances.
    pub fn validate(&self) -> Result<()> {
        let tol = T::lit(DENSITY_TRACE_TOL);
        let sum = self.blocks.iter().fold(T::zero(), |acc, b| acc + b.p);
        if (sum - T::one()).abs() > tol {
            return Err(Error::NotDensityMatrix(format!("block weights sum to {}", sum.as_f64())));
        }
        for b in &self.blocks {
            if b.p < -tol {
                return Err(Error::NotDensityMatrix(format!("negative weight for J = {}", b.total)));
            }
            if b.p >= T::lit(BLOCK_WEIGHT_FLOOR) {
                DensityMatrix::new(b.rho.clone())?;
            }
        }
        Ok(())
    }

    /// Expansion `Σ p_J ρ_J[α, α'] P_J^{α,α'}`.
    pub fn to_expansion(&self) -> Result<ProjectorExpansion<T>> {
        let mut out = ProjectorExpansion::new(self.n, self.convention);
        for b in &self.blocks {
            let paths = enumerate_paths(self.n, b.total, self.convention)?;
            for (a, pa) in paths.iter().enumerate() {
                for (ap, pap) in paths.iter().enumerate() {
                    out.add(b.total, pa.clone(), pap.clone(), b.rho[(a, ap)] * cplx(b.p, T::zero()));
                }
            }
        }
        out.prune(T::zero());
        Ok(out)
    }

    /// Block form of a twirl-invariant expansion (e.g. a channel output).
    pub fn from_expansion(expansion: &ProjectorExpansion<T>) -> Result<Self> {
        let mut blocks = Vec::new();
        for total in totals(expansion.n) {
            let paths = enumerate_paths(expansion.n, total, expansion.convention)?;
            let d = paths.len();
            let mut c = CMat::<T>::zeros(d, d);
            for (key, &v) in expansion.terms.range(ProjectorKey::block_start(total)..) {
                if key.total != total {
                    break;
                }
                let a = paths.binary_search(&key.alpha).ok();
                let ap = paths.binary_search(&key.alpha_prime).ok();
                match a.zip(ap) {
                    Some((a, ap)) => c[(a, ap)] += v,
                    None => return Err(Error::InvalidArgument(format!("unknown path in key {key:?}"))),
                }
            }
            let p = (0..d).fold(T::zero(), |acc, a| acc + c[(a, a)].re);
            let rho = if p.abs() < T::lit(BLOCK_WEIGHT_FLOOR) {
                CMat::zeros(d, d)
            } else {
                c / cplx(p, T::zero())
            };
            blocks.push(TwirlBlock { total, p, rho });
        }
        Ok(Self {
            n: expansion.n,
            convention: expansion.convention,
            blocks,
        })
    }

    /// Smallest eigenvalue over all block states with non-negligible weight.
    pub fn min_block_eigenvalue(&self) -> T {
        self.blocks
            .iter()
            .filter(|b| b.p >= T::lit(BLOCK_WEIGHT_FLOOR))
            .flat_map(|b| hermitian_eigenvalues(&b.rho))
            .fold(T::one(), |m, v| if v < m { v } else { m })
    }

    pub fn to_json(&self) -> TwirledStateJson {
        TwirledStateJson {
            n: Some(self.n),
            convention: Some(self.convention),
            blocks: self
                .blocks
                .iter()
                .map(|b| {
                    let d = b.rho.nrows();
                    TwirlBlockJson {
                        twice_j: b.total.twice(),
                        p: b.p.as_f64(),
                        rho_re: (0..d).map(|i| (0..d).map(|j| b.rho[(i, j)].re.as_f64()).collect()).collect(),
                        rho_im: (0..d).map(|i| (0..d).map(|j| b.rho[(i, j)].im.as_f64()).collect()).collect(),
                    }
                })
                .collect(),
        }
    }

    /// Reads the block form; `n` is inferred from the largest `2J` when absent.
    pub fn from_json(json: &TwirledStateJson) -> Result<Self> {
        let n = match json.n {
            Some(n) => n,
            None => json.blocks.iter().map(|b| b.twice_j.max(0) as usize).max().unwrap_or(0),
        };
        let convention = json.convention.unwrap_or(1);
        let mut blocks = Vec::new();
        for total in totals(n) {
            let d = enumerate_paths(n, total, convention)?.len();
            let entry = json.blocks.iter().find(|b| b.twice_j == total.twice());
            let block = match entry {
                None => TwirlBlock {
                    total,
                    p: T::zero(),
                    rho: CMat::zeros(d, d),
                },
                Some(b) => {
                    let shape_ok = b.rho_re.len() == d
                        && b.rho_im.len() == d
                        && b.rho_re.iter().chain(&b.rho_im).all(|row| row.len() == d);
                    if !shape_ok {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: b.rho_re.len(),
                        });
                    }
                    TwirlBlock {
                        total,
                        p: T::lit(b.p),
                        rho: CMat::from_fn(d, d, |i, j| cplx(T::lit(b.rho_re[i][j]), T::lit(b.rho_im[i][j]))),
                    }
                }
            };
            blocks.push(block);
        }
        let state = Self {
            n,
            convention,
            blocks,
        };
        state.validate()?;
        Ok(state)
    }
}

/// JSON form `{"blocks": [{"twice_j", "p", "rho_re", "rho_im"}]}` with
/// optional `n` and `convention`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TwirledStateJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention: Option<usize>,
    pub blocks: Vec<TwirlBlockJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TwirlBlockJson {
    pub twice_j: i32,
    pub p: f64,
    pub rho_re: Vec<Vec<f64>>,
    pub rho_im: Vec<Vec<f64>>,
}

/// Label of `P_J^{α,α'}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProjectorKey {
    pub total: HalfInteger,
    pub alpha: CouplingPath,
    pub alpha_prime: CouplingPath,
}

impl ProjectorKey {
    fn block_start(total: HalfInteger) -> Self {
        let empty = CouplingPath {
            left: vec![],
            right: vec![],
            convention: 0,
        };
        Self {
            total,
            alpha: empty.clone(),
            alpha_prime: empty,
        }
    }
}

/// Finite linear combination of projectors sharing one convention.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorExpansion<T: Real> {
    pub n: usize,
    pub convention: usize,
    pub terms: BTreeMap<ProjectorKey, Complex<T>>,
}

impl<T: Real> ProjectorExpansion<T> {
    pub fn new(n: usize, convention: usize) -> Self {
        Self {
            n,
            convention,
            terms: BTreeMap::new(),
        }
    }

    /// The single projector `P_J^{α,α'}`.
    pub fn single(n: usize, total: HalfInteger, alpha: CouplingPath, alpha_prime: CouplingPath) -> Result<Self> {
        if alpha.convention != alpha_prime.convention {
            return Err(Error::ConventionMismatch {
                expected: alpha.convention,
                found: alpha_prime.convention,
            });
        }
        check_path_total(n, total, &alpha)?;
        check_path_total(n, total, &alpha_prime)?;
        let mut out = Self::new(n, alpha.convention);
        out.add(total, alpha, alpha_prime, cplx(T::one(), T::zero()));
        Ok(out)
    }

    pub fn add(&mut self, total: HalfInteger, alpha: CouplingPath, alpha_prime: CouplingPath, value: Complex<T>) {
        let key = ProjectorKey {
            total,
            alpha,
            alpha_prime,
        };
        *self.terms.entry(key).or_insert_with(|| cplx(T::zero(), T::zero())) += value;
    }

    /// Drops terms with modulus at most `threshold`.
    pub fn prune(&mut self, threshold: T) {
        self.terms.retain(|_, v| v.re.abs() > threshold || v.im.abs() > threshold);
    }

    /// `Tr` of the represented operator, `Σ_{α} c_{J,α,α}`.
    pub fn trace(&self) -> Complex<T> {
        self.terms
            .iter()
            .filter(|(k, _)| k.alpha == k.alpha_prime)
            .fold(cplx(T::zero(), T::zero()), |acc, (_, v)| acc + *v)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest coefficient difference against `other`, over the union of keys.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        let zero = cplx(T::zero(), T::zero());
        let mut worst = T::zero();
        for (k, v) in &self.terms {
            let d = *v - other.terms.get(k).copied().unwrap_or(zero);
            worst = worst.max(d.re.abs().max(d.im.abs()));
        }
        for (k, v) in &other.terms {
            if !self.terms.contains_key(k) {
                worst = worst.max(v.re.abs().max(v.im.abs()));
            }
        }
        worst
    }
}

/// Direction of a convention shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shift {
    /// `{k} -> {k+1}`: spin `k+1` moves from the right block to the left.
    Raise,
    /// `{k} -> {k-1}`.
    Lower,
}

/// Neighbouring-convention paths of `path` with their recoupling amplitudes.
pub(crate) fn shifted_paths<T: Real>(
    am: &AngularMomentum<T>,
    path: &CouplingPath,
    total: HalfInteger,
    direction: Shift,
) -> Result<Vec<(CouplingPath, T)>> {
    let n = path.n();
    let k = path.convention;
    let mut out = Vec::with_capacity(2);
    match direction {
        Shift::Raise => {
            let prefix = path.left_total();
            let last = path.right[0];
            let suffix = path.right[1];
            for step in [1, -1] {
                let first = HalfInteger::from_twice(prefix.twice() + step);
                if first.twice() < 0 || !triangle(first.twice(), suffix.twice(), total.twice()) {
                    continue;
                }
                let u = am.u_jk(total, k + 1, n, prefix, first, last, suffix)?;
                if u != T::zero() {
                    let mut left = path.left.clone();
                    left.push(first);
                    out.push((
                        CouplingPath {
                            left,
                            right: path.right[1..].to_vec(),
                            convention: k + 1,
                        },
                        u,
                    ));
                }
            }
        }
        Shift::Lower => {
            let first = path.left_total();
            let prefix = path.left[k - 2];
            let suffix = path.right[0];
            for step in [1, -1] {
                let last = HalfInteger::from_twice(suffix.twice() + step);
                if last.twice() < 0 || !triangle(prefix.twice(), last.twice(), total.twice()) {
                    continue;
                }
                let u = am.u_jk(total, k, n, prefix, first, last, suffix)?;
                if u != T::zero() {
                    let mut right = Vec::with_capacity(path.right.len() + 1);
                    right.push(last);
                    right.extend_from_slice(&path.right);
                    out.push((
                        CouplingPath {
                            left: path.left[..k - 1].to_vec(),
                            right,
                            convention: k - 1,
                        },
                        u,
                    ));
                }
            }
        }
    }
    Ok(out)
}

/// Re-expresses every `P_J^{α,α'}` in the neighbouring convention:
/// `P_J^{α,α'} = Σ_{β,β'} U_{αβ} U_{α'β'} P_J^{β,β'}`.
pub fn convention_shift<T: Real>(expansion: &ProjectorExpansion<T>, direction: Shift) -> Result<ProjectorExpansion<T>> {
    let n = expansion.n;
    let k = expansion.convention;
    let target = match direction {
        Shift::Raise if k + 1 < n => k + 1,
        Shift::Lower if k >= 2 => k - 1,
        _ => {
            return Err(Error::ConventionBoundary {
                from: k,
                direction: match direction {
                    Shift::Raise => "up",
                    Shift::Lower => "down",
                },
                n,
            })
        }
    };
    let am = shared_tables::<T>();
    let mut out = ProjectorExpansion::new(n, target);
    for (key, &value) in &expansion.terms {
        if key.alpha.convention != k || key.alpha_prime.convention != k {
            return Err(Error::ConventionMismatch {
                expected: k,
                found: key.alpha.convention,
            });
        }
        let a = shifted_paths(am, &key.alpha, key.total, direction)?;
        let b = shifted_paths(am, &key.alpha_prime, key.total, direction)?;
        for (pa, ua) in &a {
            for (pb, ub) in &b {
                out.add(key.total, pa.clone(), pb.clone(), value * cplx(*ua * *ub, T::zero()));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, random_density_matrix};
    use crate::su2_group::haar_sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn h(tj: i32) -> HalfInteger {
        HalfInteger::from_twice(tj)
    }

    /// Number of walks on the branching diagram from `j = 1/2` after one spin
    /// to `2J` after `n` spins, counted step by step.
    fn lattice_count(n: usize, twice_total: i32) -> usize {
        let mut counts = vec![0usize; n + 2];
        counts[1] = 1;
        for _ in 1..n {
            let mut next = vec![0usize; n + 2];
            for (tj, &c) in counts.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                next[tj + 1] += c;
                if tj > 0 {
                    next[tj - 1] += c;
                }
            }
            counts = next;
        }
        counts.get(twice_total as usize).copied().unwrap_or(0)
    }

    #[test]
    fn path_counts() {
        assert_eq!(enumerate_paths(3, h(1), 1).unwrap().len(), 2);
        assert_eq!(enumerate_paths(3, h(3), 2).unwrap().len(), 1);
        assert_eq!(enumerate_paths(2, h(0), 1).unwrap().len(), 1);
        assert_eq!(enumerate_paths(2, h(2), 1).unwrap().len(), 1);
        assert_eq!(enumerate_paths(5, h(1), 1).unwrap().len(), 5);
        assert_eq!(lattice_count(5, 1), 5);
        for n in 1..=12 {
            for total in totals(n) {
                for k in 1..=n.saturating_sub(1).max(1) {
                    assert_eq!(enumerate_paths(n, total, k).unwrap().len(), lattice_count(n, total.twice()));
                }
            }
        }
    }

    #[test]
    fn path_errors() {
        assert!(enumerate_paths(0, h(0), 1).is_err());
        assert!(enumerate_paths(17, h(1), 1).is_err());
        assert!(enumerate_paths(3, h(1), 3).is_err());
        assert!(enumerate_paths(3, h(1), 0).is_err());
        let bad = CouplingPath {
            left: vec![h(1), h(1)],
            right: vec![h(1)],
            convention: 2,
        };
        assert!(bad.validate(3).is_err());
    }

    #[test]
    fn singlet_and_single_spin() {
        let p = &enumerate_paths(2, h(0), 1).unwrap()[0];
        let v = coupled_basis_vector::<f64>(2, h(0), h(0), p).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [0.0, s, -s, 0.0];
        for (a, b) in v.iter().zip(expect) {
            assert!((a.re - b).abs() < 1e-15 && a.im == 0.0);
        }
        let p1 = &enumerate_paths(1, h(1), 1).unwrap()[0];
        let v1 = coupled_basis_vector::<f64>(1, h(1), h(1), p1).unwrap();
        assert_eq!(v1[0].re, 1.0);
        assert_eq!(v1[1].re, 0.0);
        assert!(coupled_basis_vector::<f64>(2, h(2), h(4), p).is_err());
        assert!(coupled_basis_vector::<f64>(2, h(4), h(0), p).is_err());
    }

    #[test]
    fn bases_are_orthogonal() {
        for n in 1usize..=6 {
            for k in 1..=n.saturating_sub(1).max(1) {
                let b = CoupledBasis::<f64>::new(n, k).unwrap();
                let g = b.matrix().transpose() * b.matrix();
                let dim = 1 << n;
                let defect = (g - DMatrix::<f64>::identity(dim, dim)).abs().max();
                assert!(defect < 1e-11, "N = {n}, k = {k}: {defect}");
            }
        }
    }

    #[test]
    fn projector_properties() {
        let n = 3;
        let mut sum = CMat::<f64>::zeros(8, 8);
        for total in totals(n) {
            let paths = enumerate_paths(n, total, 1).unwrap();
            for a in &paths {
                let p = projector_matrix::<f64>(n, total, a, a).unwrap();
                assert!((crate::linalg::trace(&p).re - 1.0).abs() < 1e-14);
                let ev = hermitian_eigenvalues(&p);
                let w = 1.0 / total.multiplicity() as f64;
                assert!(ev.iter().all(|&e| e.abs() < 1e-12 || (e - w).abs() < 1e-12));
                assert_eq!(ev.iter().filter(|&&e| e > w / 2.0).count(), total.multiplicity());
                sum += p * cplx(total.multiplicity() as f64, 0.0);
                for b in &paths {
                    if a != b {
                        let q = projector_matrix::<f64>(n, total, a, b).unwrap();
                        assert!(crate::linalg::trace(&q).norm() < 1e-14);
                    }
                }
            }
        }
        assert!(max_abs_diff(&sum, &CMat::identity(8, 8)) < 1e-12);
        let a = enumerate_paths(3, h(1), 1).unwrap()[0].clone();
        let b = enumerate_paths(3, h(1), 2).unwrap()[0].clone();
        assert!(matches!(
            projector_matrix::<f64>(3, h(1), &a, &b),
            Err(Error::ConventionMismatch { .. })
        ));
    }

    #[test]
    fn twirl_of_maximally_mixed_and_basis_states() {
        for n in 1..=5 {
            let mixed = DensityMatrix::<f64>::maximally_mixed(1 << n);
            let tw = twirl(&mixed, n).unwrap();
            let expect = TwirledState::<f64>::maximally_mixed(n, 1).unwrap();
            for (a, b) in tw.blocks.iter().zip(&expect.blocks) {
                assert!((a.p - b.p).abs() < 1e-13);
                assert!(max_abs_diff(&a.rho, &b.rho) < 1e-13);
            }
            assert!(max_abs_diff(&embed(&tw).unwrap(), mixed.matrix()) < 1e-13);
        }
        let paths = enumerate_paths(4, h(0), 1).unwrap();
        let v = coupled_basis_vector::<f64>(4, h(0), h(0), &paths[1]).unwrap();
        let tw = twirl(&DensityMatrix::from_pure(&v), 4).unwrap();
        let blk = tw.block(h(0)).unwrap();
        assert!((blk.p - 1.0).abs() < 1e-13);
        assert!((blk.rho[(1, 1)].re - 1.0).abs() < 1e-13);
        assert!((blk.rho[(0, 0)].norm()) < 1e-13);
    }

    #[test]
    fn twirl_matches_haar_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let rho = random_density_matrix::<f64, _>(4, &mut rng);
        let samples = 100_000;
        let mut acc = CMat::<f64>::zeros(4, 4);
        for _ in 0..samples {
            let u = haar_sample::<f64, _>(&mut rng).matrix();
            let uu = u.kronecker(&u);
            acc += &uu * &rho * uu.adjoint();
        }
        acc /= cplx(samples as f64, 0.0);
        let tw = embed(&twirl(&DensityMatrix::new(rho).unwrap(), 2).unwrap()).unwrap();
        assert!(max_abs_diff(&acc, &tw) < 3e-3);
    }

    #[test]
    fn twirl_embed_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..=4 {
            let rho = DensityMatrix::new(random_density_matrix::<f64, _>(1 << n, &mut rng)).unwrap();
            let s = twirl(&rho, n).unwrap();
            s.validate().unwrap();
            let again = twirl(&DensityMatrix::new(embed(&s).unwrap()).unwrap(), n).unwrap();
            for (a, b) in s.blocks.iter().zip(&again.blocks) {
                assert!((a.p - b.p).abs() < 1e-12);
                assert!(max_abs_diff(&a.rho, &b.rho) < 1e-12);
            }
            let u = haar_sample::<f64, _>(&mut rng).matrix();
            let mut big = u.clone();
            for _ in 1..n {
                big = big.kronecker(&u);
            }
            let rotated = DensityMatrix::new(&big * rho.matrix() * big.adjoint()).unwrap();
            let rs = twirl(&rotated, n).unwrap();
            for (a, b) in s.blocks.iter().zip(&rs.blocks) {
                assert!((a.p - b.p).abs() < 1e-10);
                assert!(max_abs_diff(&a.rho, &b.rho) < 1e-10);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = DensityMatrix::new(random_density_matrix::<f64, _>(8, &mut rng)).unwrap();
        let s = twirl(&rho, 3).unwrap();
        let text = serde_json::to_string(&s.to_json()).unwrap();
        let back = TwirledState::<f64>::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(s, back);
        let bare = r#"{"blocks":[{"twice_j":3,"p":1.0,"rho_re":[[1.0]],"rho_im":[[0.0]]}]}"#;
        let parsed = TwirledState::<f64>::from_json(&serde_json::from_str(bare).unwrap()).unwrap();
        assert_eq!(parsed.n, 3);
        assert_eq!(parsed.block(h(1)).unwrap().p, 0.0);
    }

    #[test]
    fn raise_matches_dense_projectors() {
        let n = 3;
        for total in totals(n) {
            let p1 = enumerate_paths(n, total, 1).unwrap();
            for a in &p1 {
                for b in &p1 {
                    let e = ProjectorExpansion::<f64>::single(n, total, a.clone(), b.clone()).unwrap();
                    let raised = convention_shift(&e, Shift::Raise).unwrap();
                    assert_eq!(raised.convention, 2);
                    let lhs = projector_matrix::<f64>(n, total, a, b).unwrap();
                    let rhs = CoupledBasis::<f64>::new(n, 2).unwrap().expansion_to_operator(&raised).unwrap();
                    assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
                    let back = convention_shift(&raised, Shift::Lower).unwrap();
                    let mut back = back;
                    back.prune(1e-14);
                    assert!(back.max_abs_diff(&e) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn shifts_across_all_conventions_preserve_operator() {
        let n = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rho = random_density_matrix::<f64, _>(1 << n, &mut rng);
        let b1 = CoupledBasis::<f64>::new(n, 1).unwrap();
        let mut e = b1.expansion_of(&rho).unwrap();
        let dense = b1.expansion_to_operator(&e).unwrap();
        for k in 2..n {
            e = convention_shift(&e, Shift::Raise).unwrap();
            let bk = CoupledBasis::<f64>::new(n, k).unwrap();
            assert!(max_abs_diff(&bk.expansion_to_operator(&e).unwrap(), &dense) < 1e-12);
        }
        assert!(matches!(
            convention_shift(&e, Shift::Raise),
            Err(Error::ConventionBoundary { .. })
        ));
        let low = ProjectorExpansion::<f64>::new(n, 1);
        assert!(matches!(
            convention_shift(&low, Shift::Lower),
            Err(Error::ConventionBoundary { .. })
        ));
    }

    #[test]
    fn diagonal_shift_gives_psd_gram() {
        let n = 4;
        let a = enumerate_paths(n, h(0), 1).unwrap()[1].clone();
        let e = ProjectorExpansion::<f64>::single(n, h(0), a.clone(), a).unwrap();
        let raised = convention_shift(&e, Shift::Raise).unwrap();
        let s = TwirledState::from_expansion(&raised).unwrap();
        assert!(s.min_block_eigenvalue() > -1e-12);
        assert!((s.block(h(0)).unwrap().p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_precision_basis_is_orthogonal() {
        let b = CoupledBasis::<f32>::new(4, 2).unwrap();
        let g = b.matrix().transpose() * b.matrix();
        assert!((g - DMatrix::<f32>::identity(16, 16)).abs().max() < 1e-5);
    }
}
