//! Named invariant checks across all modules, run as one suite.
//!
//! Every check runs even when an earlier one fails or panics. Check IDs are
//! stable and appear in the JSON report.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::angular_momentum::{tables, triangle, AngularMomentum, HalfInteger};
use crate::channel::{monte_carlo_channel, ChoiMode, DiffusionChannel};
use crate::constants::{DEFAULT_SEED, PATH_N_CAP};
use crate::coupling::{convention_shift, CoupledBasis, embed, enumerate_paths, twirl, ProjectorExpansion, Shift};
use crate::error::Result;
use crate::linalg::{hermitian_eigenvalues, max_abs_diff, random_density_matrix, random_pure_state, CMat};
use crate::optimize::{
    entropy_unchecked, nelder_mead_maximize, sphere_quadrature, OptimizerConfig, SphereRule,
};
use crate::stats::ks_two_sample;
use crate::su2_group::{class_angle, haar_sample, kernel_coefficient, HeatKernel, HeatKernelSampler};
use crate::sweep::{sweep_schema, SWEEP_SCHEMA_FIXTURE};
use crate::three_qubit::{
    average_fidelity, effective_qubit_map, fidelity, fidelity_bloch, fidelity_optimum, great_circle_fidelity,
    great_circle_quadrature, holevo_chi, maximize_coherent_info, maximize_holevo, paper_ensemble,
    qutrit_channel_operator, Ensemble, EnsembleMember, QutritChannel, QutritState,
};
use crate::optimize::integrate_gl;
use crate::linalg::DensityMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Reported but not gating.
    Flag,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub id: String,
    pub status: CheckStatus,
    pub detail: String,
    pub seconds: f64,
}

/// Deliberate corruption used to test the suite itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Perturbs one stored log-factorial of the tables used by the
    /// Clebsch–Gordan orthogonality check.
    CorruptCgTable,
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Skips the 10^5-sample Monte Carlo gates and the 10^6-point sphere
    /// average.
    pub quick: bool,
    pub seed: u64,
    pub fault: Option<Fault>,
    pub config: OptimizerConfig<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            quick: false,
            seed: DEFAULT_SEED,
            fault: None,
            config: OptimizerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub quick: bool,
    pub seed: u64,
    pub seconds: f64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    /// True when no check failed (flags do not gate).
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Outcome of one check body: status and a one-line detail.
type Outcome = Result<(CheckStatus, String)>;

fn gate(ok: bool, detail: String) -> Outcome {
    Ok((if ok { CheckStatus::Pass } else { CheckStatus::Fail }, detail))
}

fn defect_gate(defect: f64, tol: f64) -> Outcome {
    gate(defect < tol, format!("max defect {defect:.3e} (tol {tol:.0e})"))
}

struct Check {
    id: &'static str,
    heavy: bool,
    run: Box<dyn Fn(&VerifyOptions) -> Outcome>,
}

fn check(id: &'static str, heavy: bool, run: impl Fn(&VerifyOptions) -> Outcome + 'static) -> Check {
    Check {
        id,
        heavy,
        run: Box::new(run),
    }
}

/// IDs of the checks a run would execute.
pub fn check_ids(quick: bool) -> Vec<&'static str> {
    registry().into_iter().filter(|c| !(quick && c.heavy)).map(|c| c.id).collect()
}

pub fn run_verify(options: &VerifyOptions) -> VerifyReport {
    let start = Instant::now();
    let mut checks = Vec::new();
    for c in registry() {
        if options.quick && c.heavy {
            continue;
        }
        let t0 = Instant::now();
        let (status, detail) = match catch_unwind(AssertUnwindSafe(|| (c.run)(options))) {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (CheckStatus::Fail, format!("error: {e}")),
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                (CheckStatus::Fail, format!("panic: {msg}"))
            }
        };
        checks.push(CheckResult {
            id: c.id.to_string(),
            status,
            detail,
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    VerifyReport {
        quick: options.quick,
        seed: options.seed,
        seconds: start.elapsed().as_secs_f64(),
        checks,
    }
}

fn h(tw: i32) -> HalfInteger {
    HalfInteger::from_twice(tw)
}

fn sign(twice_exponent: i32) -> f64 {
    if (twice_exponent / 2) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Largest defect of both CG orthogonality relations for `j1, j2 <= max/2`.
pub fn cg_orthogonality_defect(am: &AngularMomentum<f64>, max_twice_j: i32) -> f64 {
    let mut worst: f64 = 0.0;
    for tj1 in 0..=max_twice_j {
        for tj2 in 0..=max_twice_j {
            let (j1, j2) = (h(tj1), h(tj2));
            let totals: Vec<i32> = ((tj1 - tj2).abs()..=tj1 + tj2).step_by(2).collect();
            // Sum over m1, m2 for fixed (J, M), (J', M').
            for &tj in &totals {
                for &tjp in &totals {
                    for m in h(tj).projections() {
                        for mp in h(tjp).projections() {
                            let mut s = 0.0;
                            for m1 in j1.projections() {
                                for m2 in j2.projections() {
                                    s += am.clebsch_gordan(j1, m1, j2, m2, h(tj), m)
                                        * am.clebsch_gordan(j1, m1, j2, m2, h(tjp), mp);
                                }
                            }
                            let delta = if tj == tjp && m == mp { 1.0 } else { 0.0 };
                            worst = worst.max((s - delta).abs());
                        }
                    }
                }
            }
            // Sum over (J, M) for fixed (m1, m2), (m1', m2').
            for m1 in j1.projections() {
                for m2 in j2.projections() {
                    for m1p in j1.projections() {
                        for m2p in j2.projections() {
                            let mut s = 0.0;
                            for &tj in &totals {
                                for m in h(tj).projections() {
                                    s += am.clebsch_gordan(j1, m1, j2, m2, h(tj), m)
                                        * am.clebsch_gordan(j1, m1p, j2, m2p, h(tj), m);
                                }
                            }
                            let delta = if m1 == m1p && m2 == m2p { 1.0 } else { 0.0 };
                            worst = worst.max((s - delta).abs());
                        }
                    }
                }
            }
        }
    }
    worst
}

/// Exchange and projection-reversal symmetries of CG coefficients.
pub fn cg_symmetry_defect(am: &AngularMomentum<f64>, max_twice_j: i32) -> f64 {
    let mut worst: f64 = 0.0;
    for tj1 in 0..=max_twice_j {
        for tj2 in 0..=max_twice_j {
            for tj in ((tj1 - tj2).abs()..=(tj1 + tj2).min(max_twice_j)).step_by(2) {
                let s = sign(tj1 + tj2 - tj);
                for m1 in h(tj1).projections() {
                    for m2 in h(tj2).projections() {
                        let m = m1 + m2;
                        let c = am.clebsch_gordan(h(tj1), m1, h(tj2), m2, h(tj), m);
                        let swapped = am.clebsch_gordan(h(tj2), m2, h(tj1), m1, h(tj), m);
                        let reversed = am.clebsch_gordan(h(tj1), -m1, h(tj2), -m2, h(tj), -m);
                        worst = worst.max((c - s * swapped).abs()).max((c - s * reversed).abs());
                    }
                }
            }
        }
    }
    worst
}

fn sixj_args(max_twice_j: i32) -> impl Iterator<Item = [i32; 6]> {
    let r = move || 0..=max_twice_j;
    r().flat_map(move |a| {
        r().flat_map(move |b| {
            r().flat_map(move |c| {
                r().flat_map(move |d| r().flat_map(move |e| r().map(move |f| [a, b, c, d, e, f])))
            })
        })
    })
}

/// Column-permutation and row-swap invariance of 6j symbols.
pub fn sixj_symmetry_defect(am: &AngularMomentum<f64>, max_twice_j: i32) -> f64 {
    let six = |v: [i32; 6]| am.wigner_6j(h(v[0]), h(v[1]), h(v[2]), h(v[3]), h(v[4]), h(v[5]));
    let mut worst: f64 = 0.0;
    for [a, b, c, d, e, f] in sixj_args(max_twice_j) {
        let base = six([a, b, c, d, e, f]);
        let images = [
            [b, a, c, e, d, f],
            [a, c, b, d, f, e],
            [c, b, a, f, e, d],
            [b, c, a, e, f, d],
            [d, e, c, a, b, f],
            [a, e, f, d, b, c],
            [d, b, f, a, e, c],
        ];
        for v in images {
            worst = worst.max((base - six(v)).abs());
        }
    }
    worst
}

/// `Σ_x (2x+1)(2f+1) {a b x; c d f}{a b x; c d f'} = δ_{f f'}` over valid
/// triads.
pub fn sixj_orthogonality_defect(am: &AngularMomentum<f64>, max_twice_j: i32) -> f64 {
    let mut worst: f64 = 0.0;
    let r = 0..=max_twice_j;
    for a in r.clone() {
        for b in r.clone() {
            for c in r.clone() {
                for d in r.clone() {
                    for f in r.clone() {
                        if !(triangle(a, d, f) && triangle(c, b, f)) {
                            continue;
                        }
                        for fp in r.clone() {
                            if !(triangle(a, d, fp) && triangle(c, b, fp)) {
                                continue;
                            }
                            let mut s = 0.0;
                            for x in 0..=2 * max_twice_j {
                                let w = ((x + 1) * (f + 1)) as f64;
                                s += w
                                    * am.wigner_6j(h(a), h(b), h(x), h(c), h(d), h(f))
                                    * am.wigner_6j(h(a), h(b), h(x), h(c), h(d), h(fp));
                            }
                            let delta = if f == fp { 1.0 } else { 0.0 };
                            worst = worst.max((s - delta).abs());
                        }
                    }
                }
            }
        }
    }
    worst
}

/// Orthogonality of the recoupling matrix `U(j1, j2, J, j3; j12, j23)`.
pub fn recoupling_unitarity_defect(am: &AngularMomentum<f64>, max_twice_j: i32) -> f64 {
    let mut worst: f64 = 0.0;
    let r = 0..=max_twice_j;
    for j1 in r.clone() {
        for j2 in r.clone() {
            for j3 in r.clone() {
                for jt in 0..=j1 + j2 + j3 {
                    if (j1 + j2 + j3 + jt) % 2 != 0 {
                        continue;
                    }
                    let j12s: Vec<i32> = (0..=j1 + j2).filter(|&x| triangle(j1, j2, x) && triangle(x, j3, jt)).collect();
                    let j23s: Vec<i32> = (0..=j2 + j3).filter(|&x| triangle(j2, j3, x) && triangle(j1, x, jt)).collect();
                    if j12s.len() != j23s.len() {
                        return f64::INFINITY;
                    }
                    let u = |x: i32, y: i32| am.recoupling_u(h(j1), h(j2), h(jt), h(j3), h(x), h(y));
                    for &p in &j12s {
                        for &q in &j12s {
                            let s: f64 = j23s.iter().map(|&y| u(p, y) * u(q, y)).sum();
                            let delta = if p == q { 1.0 } else { 0.0 };
                            worst = worst.max((s - delta).abs());
                        }
                    }
                }
            }
        }
    }
    worst
}

/// Singlet-weight slope of the two-qubit channel on Werner states.
pub fn werner_shrink_factor(t: f64) -> Result<f64> {
    let ch = DiffusionChannel::<f64>::new(2, t)?;
    let s = 1.0 / 2f64.sqrt();
    let singlet = nalgebra::DVector::from_vec(vec![0.0, s, -s, 0.0]).map(|x| crate::scalar::Complex::new(x, 0.0));
    let ps = &singlet * singlet.adjoint();
    let pt = (CMat::<f64>::identity(4, 4) - &ps) / crate::scalar::Complex::new(3.0, 0.0);
    let weight = |rho: &CMat<f64>| -> Result<f64> { Ok((&ps * ch.apply_operator(rho)?).trace().re) };
    Ok(weight(&ps)? - weight(&pt)?)
}

fn rng(options: &VerifyOptions, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(options.seed);
    r.set_stream(stream);
    r
}

/// One random-state comparison of the channel against its Monte Carlo
/// average.
#[derive(Clone, Debug, Serialize)]
pub struct OracleRun {
    pub n: usize,
    pub t: f64,
    pub max_deviation: f64,
    pub max_standard_error: f64,
    pub ratio: f64,
}

impl OracleRun {
    pub fn passed(&self) -> bool {
        self.ratio < 3.0
    }
}

/// Five random states for each `N` in 2..=4 and `t` in {0.2, 1}, 10^5
/// samples each.
pub fn monte_carlo_oracle_runs(seed: u64) -> Result<Vec<OracleRun>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(2);
    let mut runs = Vec::new();
    for n in 2..=4 {
        for t in [0.2, 1.0] {
            let ch = DiffusionChannel::<f64>::new(n, t)?;
            for s in 0..5u64 {
                let rho = random_density_matrix::<f64, _>(1 << n, &mut r);
                let exact = ch.apply_operator(&rho)?;
                let run_seed = seed.wrapping_add(100 * n as u64 + 10 * s + (t * 10.0) as u64);
                let mc = monte_carlo_channel(&rho, n, t, 100_000, run_seed)?;
                let (dev, se) = (mc.max_deviation(&exact), mc.max_standard_error());
                runs.push(OracleRun {
                    n,
                    t,
                    max_deviation: dev,
                    max_standard_error: se,
                    ratio: dev / se,
                });
            }
        }
    }
    Ok(runs)
}

/// Trace of an expansion within each total-`J` block.
fn block_weights(e: &ProjectorExpansion<f64>, n: usize) -> Vec<f64> {
    crate::coupling::totals(n)
        .into_iter()
        .map(|total| {
            e.terms
                .iter()
                .filter(|(k, _)| k.total == total && k.alpha == k.alpha_prime)
                .map(|(_, v)| v.re)
                .sum()
        })
        .collect()
}

const ALGEBRA_MAX_TWICE_J: i32 = 6;

fn registry() -> Vec<Check> {
    vec![
        check("am.cg_orthogonality", false, |o| {
            let defect = match o.fault {
                Some(Fault::CorruptCgTable) => {
                    let mut am = AngularMomentum::<f64>::for_qubits(PATH_N_CAP);
                    am.perturb_ln_factorial(3, 1e-3);
                    cg_orthogonality_defect(&am, ALGEBRA_MAX_TWICE_J)
                }
                None => cg_orthogonality_defect(tables(), ALGEBRA_MAX_TWICE_J),
            };
            defect_gate(defect, 1e-12)
        }),
        check("am.cg_symmetry", false, |_| defect_gate(cg_symmetry_defect(tables(), ALGEBRA_MAX_TWICE_J), 1e-12)),
        check("am.sixj_orthogonality", false, |_| {
            defect_gate(sixj_orthogonality_defect(tables(), ALGEBRA_MAX_TWICE_J), 1e-12)
        }),
        check("am.sixj_symmetry", false, |_| defect_gate(sixj_symmetry_defect(tables(), ALGEBRA_MAX_TWICE_J), 1e-13)),
        check("am.recoupling_unitarity", false, |_| {
            defect_gate(recoupling_unitarity_defect(tables(), ALGEBRA_MAX_TWICE_J), 1e-12)
        }),
        check("kernel.normalization", false, |_| {
            let mut worst: f64 = 0.0;
            for t in [0.1, 1.0, 10.0] {
                let k = HeatKernel::<f64>::new(t)?;
                let total = integrate_gl(|xi| k.class_density(xi), 0.0, 2.0 * std::f64::consts::PI, 400);
                worst = worst.max((total - 1.0).abs());
            }
            defect_gate(worst, 1e-8)
        }),
        check("kernel.character_semigroup", false, |_| {
            let mut worst: f64 = 0.0;
            for tj in 0..40 {
                let j = h(tj);
                let rhs = kernel_coefficient(j, 0.75f64);
                let lhs = kernel_coefficient(j, 0.25f64) * kernel_coefficient(j, 0.5);
                // In ulps, allowing for exp amplifying its argument's rounding.
                let exponent = j.value::<f64>() * (j.value::<f64>() + 1.0) * 0.375;
                worst = worst.max((lhs - rhs).abs() / rhs.max(f64::MIN_POSITIVE) / ((4.0 + 2.0 * exponent) * f64::EPSILON));
            }
            gate(worst <= 1.0, format!("worst error {worst:.3} of the rounding bound"))
        }),
        check("kernel.positivity", false, |_| {
            let mut worst = f64::INFINITY;
            for t in [1e-3, 1e-2, 0.1, 1.0, 10.0] {
                let k = HeatKernel::<f64>::new(t)?;
                for i in 0..=2000 {
                    worst = worst.min(k.density(2.0 * std::f64::consts::PI * i as f64 / 2000.0));
                }
            }
            gate(worst >= -1e-9, format!("smallest density {worst:.3e}"))
        }),
        check("kernel.conjugation_invariance", false, |o| {
            let mut r = rng(o, 6);
            let k = HeatKernel::<f64>::new(0.4)?;
            let mut worst: f64 = 0.0;
            for _ in 0..200 {
                let u = haar_sample::<f64, _>(&mut r);
                let v = haar_sample::<f64, _>(&mut r);
                let c = v * u * v.inverse();
                if k.density_at(&c) != k.density(class_angle(&c).value()) {
                    return gate(false, "density_at does not route through the class angle".into());
                }
                let (a, b) = (k.density_at(&c), k.density_at(&u));
                worst = worst.max((a - b).abs() / b.abs().max(1.0));
            }
            defect_gate(worst, 1e-10)
        }),
        check("kernel.seeded_sampling", false, |o| {
            let s = HeatKernelSampler::<f64>::new(0.3)?;
            let (a, b) = (s.sample_batch(5000, o.seed), s.sample_batch(5000, o.seed));
            let c = s.sample_batch(5000, o.seed.wrapping_add(1));
            gate(a == b && a != c, "equal batches for equal seeds, distinct otherwise".into())
        }),
        check("kernel.sampled_semigroup_ks", true, |o| {
            let half = HeatKernelSampler::<f64>::new(0.5)?;
            let full = HeatKernelSampler::<f64>::new(1.0)?;
            let n = 100_000;
            let a = half.sample_batch(n, o.seed);
            let b = half.sample_batch(n, o.seed.wrapping_add(1));
            let prod: Vec<f64> = a.iter().zip(&b).map(|(v, u)| class_angle(&(*v * *u)).value()).collect();
            let direct: Vec<f64> =
                full.sample_batch(n, o.seed.wrapping_add(2)).iter().map(|u| class_angle(u).value()).collect();
            let ks = ks_two_sample(&prod, &direct);
            gate(ks.p_value > 0.01, format!("KS p = {:.4} (D = {:.2e})", ks.p_value, ks.statistic))
        }),
        check("coupling.multiplicity_count", false, |_| {
            for n in 1..=PATH_N_CAP {
                let mut dim = 0usize;
                for total in crate::coupling::totals(n) {
                    dim += total.multiplicity() * crate::coupling::multiplicity(n, total)?;
                }
                if dim != 1 << n {
                    return gate(false, format!("N = {n}: dimension count {dim}"));
                }
            }
            gate(true, format!("N = 1..={PATH_N_CAP}"))
        }),
        check("coupling.basis_unitarity", false, |_| {
            let mut worst: f64 = 0.0;
            for n in 1..=6 {
                for k in 1..=(n - 1).max(1) {
                    let b = CoupledBasis::<f64>::new(n, k)?;
                    let m = b.matrix();
                    let g = m.transpose() * m - nalgebra::DMatrix::<f64>::identity(1 << n, 1 << n);
                    worst = worst.max(g.amax());
                }
            }
            defect_gate(worst, 1e-11)
        }),
        check("coupling.twirl_rotation_invariance", false, |o| {
            let mut r = rng(o, 7);
            let mut worst: f64 = 0.0;
            for n in 1..=4 {
                let rho = random_density_matrix::<f64, _>(1 << n, &mut r);
                let u = haar_sample::<f64, _>(&mut r).tensor_power(n);
                let rotated = &u * &rho * u.adjoint();
                let a = embed(&twirl(&DensityMatrix::new(rho)?, n)?)?;
                let b = embed(&twirl(&DensityMatrix::new(rotated)?, n)?)?;
                worst = worst.max(max_abs_diff(&a, &b));
            }
            defect_gate(worst, 1e-10)
        }),
        check("coupling.twirl_round_trip", false, |o| {
            let mut r = rng(o, 1);
            let mut worst: f64 = 0.0;
            for n in 2..=4 {
                let rho = DensityMatrix::new(random_density_matrix::<f64, _>(1 << n, &mut r))?;
                let tw = embed(&twirl(&rho, n)?)?;
                let again = embed(&twirl(&DensityMatrix::new(tw.clone())?, n)?)?;
                worst = worst.max(max_abs_diff(&tw, &again));
            }
            defect_gate(worst, 1e-12)
        }),
        check("coupling.shift_round_trip", false, |_| {
            let mut worst: f64 = 0.0;
            for n in 3..=5 {
                for total in crate::coupling::totals(n) {
                    let paths = enumerate_paths(n, total, 1)?;
                    let mut e = ProjectorExpansion::<f64>::new(n, 1);
                    for (i, a) in paths.iter().enumerate() {
                        for (k, b) in paths.iter().enumerate() {
                            e.add(total, a.clone(), b.clone(), crate::scalar::Complex::new(1.0 / (1 + i + k) as f64, 0.1 * (i as f64 - k as f64)));
                        }
                    }
                    let back = convention_shift(&convention_shift(&e, Shift::Raise)?, Shift::Lower)?;
                    worst = worst.max(back.max_abs_diff(&e));
                }
            }
            defect_gate(worst, 1e-12)
        }),
        check("channel.cptp", false, |_| {
            let mut worst_neg: f64 = 0.0;
            let mut worst_tr: f64 = 0.0;
            for n in [2, 3] {
                let d = 1 << n;
                for t in [0.1, 1.0] {
                    let c = DiffusionChannel::<f64>::new(n, t)?.choi(ChoiMode::Full)?;
                    worst_neg = worst_neg.max(-hermitian_eigenvalues(&c)[0]);
                    for i in 0..d {
                        for j in 0..d {
                            let s: crate::scalar::Complex<f64> = (0..d).map(|a| c[(i * d + a, j * d + a)]).sum();
                            let e = if i == j { 1.0 / d as f64 } else { 0.0 };
                            worst_tr = worst_tr.max((s - crate::scalar::Complex::new(e, 0.0)).norm());
                        }
                    }
                }
            }
            gate(
                worst_neg < 1e-10 && worst_tr < 1e-10,
                format!("min Choi eigenvalue {:.3e}, partial-trace defect {worst_tr:.3e}", -worst_neg),
            )
        }),
        check("channel.trace_preservation", false, |o| {
            let mut r = rng(o, 8);
            let mut worst: f64 = 0.0;
            for n in 1..=4 {
                for t in [0.0, 0.3, 2.0] {
                    let ch = DiffusionChannel::<f64>::new(n, t)?;
                    for _ in 0..3 {
                        let rho = random_density_matrix::<f64, _>(1 << n, &mut r);
                        worst = worst.max((ch.apply_operator(&rho)?.trace().re - 1.0).abs());
                    }
                }
            }
            defect_gate(worst, 1e-12)
        }),
        check("channel.twirl_structure", false, |o| {
            // Output is twirl-invariant, and the channel sees only the twirl of
            // its input.
            let mut r = rng(o, 9);
            let (mut out_defect, mut in_defect): (f64, f64) = (0.0, 0.0);
            for n in 2..=4 {
                let ch = DiffusionChannel::<f64>::new(n, 0.6)?;
                let rho = random_density_matrix::<f64, _>(1 << n, &mut r);
                let out = ch.apply_operator(&rho)?;
                let retwirled = embed(&twirl(&DensityMatrix::new(out.clone())?, n)?)?;
                out_defect = out_defect.max(max_abs_diff(&out, &retwirled));
                let twirled_in = embed(&twirl(&DensityMatrix::new(rho)?, n)?)?;
                in_defect = in_defect.max(max_abs_diff(&out, &ch.apply_operator(&twirled_in)?));
            }
            gate(
                out_defect < 1e-10 && in_defect < 1e-10,
                format!("output re-twirl {out_defect:.3e}, input-twirl {in_defect:.3e} (tol 1e-10)"),
            )
        }),
        check("channel.covariance", false, |o| {
            let mut r = rng(o, 10);
            let mut worst: f64 = 0.0;
            for n in 1..=4 {
                let ch = DiffusionChannel::<f64>::new(n, 0.35)?;
                let rho = random_density_matrix::<f64, _>(1 << n, &mut r);
                let u = haar_sample::<f64, _>(&mut r).tensor_power(n);
                let rotated = &u * &rho * u.adjoint();
                worst = worst.max(max_abs_diff(&ch.apply_operator(&rho)?, &ch.apply_operator(&rotated)?));
            }
            defect_gate(worst, 1e-10)
        }),
        check("channel.block_weights_stochastic", false, |_| {
            let mut worst: f64 = 0.0;
            let mut negative: f64 = 0.0;
            for n in 2..=5 {
                let ch = DiffusionChannel::<f64>::new(n, 0.8)?;
                for total in crate::coupling::totals(n) {
                    for alpha in enumerate_paths(n, total, 1)? {
                        let weights = block_weights(&ch.channel_on_projector(total, &alpha, &alpha)?, n);
                        let sum: f64 = weights.iter().sum();
                        worst = worst.max((sum - 1.0).abs());
                        negative = negative.max(-weights.iter().cloned().fold(0.0, f64::min));
                    }
                }
            }
            gate(
                worst < 1e-10 && negative < 1e-10,
                format!("column-sum defect {worst:.3e}, most negative weight {:.3e}", -negative),
            )
        }),
        check("channel.werner_law", false, |_| {
            let mut worst: f64 = 0.0;
            for t in [0.1, 0.5, 2.0] {
                worst = worst.max((werner_shrink_factor(t)? - (-t).exp()).abs());
            }
            defect_gate(worst, 1e-10)
        }),
        check("channel.monte_carlo_oracle", true, |o| {
            let runs = monte_carlo_oracle_runs(o.seed)?;
            let worst = runs.iter().map(|r| r.ratio).fold(0.0, f64::max);
            let failing = runs.iter().filter(|r| !r.passed()).count();
            gate(
                failing == 0,
                format!("{} runs, {failing} over 3 SE, worst deviation / SE = {worst:.3}", runs.len()),
            )
        }),
        check("three.closed_form_consistency", false, |_| {
            let mut worst: f64 = 0.0;
            for t in [0.0, 0.2, 1.0, 3.0] {
                let ch = DiffusionChannel::<f64>::new(3, t)?;
                for k in 0..12 {
                    let theta = std::f64::consts::PI * k as f64 / 11.0;
                    let phi = 0.7 + 2.0 * k as f64;
                    let rho = QutritState::qubit_block(theta, phi).into_matrix();
                    worst = worst.max(max_abs_diff(&qutrit_channel_operator(&rho, t)?, &ch.apply_qutrit(&rho)?));
                }
                let sym = QutritState::<f64>::symmetric().into_matrix();
                worst = worst.max(max_abs_diff(&qutrit_channel_operator(&sym, t)?, &ch.apply_qutrit(&sym)?));
            }
            defect_gate(worst, 1e-10)
        }),
        check("three.symmetric_ln2", false, |_| {
            let sym = QutritState::<f64>::symmetric().into_matrix();
            let out = DiffusionChannel::<f64>::new(3, std::f64::consts::LN_2)?.apply_qutrit(&sym)?;
            let expect = [3.0 / 16.0, 5.0 / 48.0, 17.0 / 24.0];
            let worst = (0..3).map(|i| (out[(i, i)].re - expect[i]).abs()).fold(0.0, f64::max);
            defect_gate(worst, 1e-12)
        }),
        check("three.fidelity_bloch_form", false, |_| {
            let mut worst: f64 = 0.0;
            for t in [0.0, 0.3, 1.0, 5.0] {
                for i in 0..20 {
                    for k in 0..20 {
                        let (th, ph) = (std::f64::consts::PI * i as f64 / 19.0, 0.33 * k as f64);
                        worst = worst.max((fidelity(th, ph, t) - fidelity_bloch(th, ph, t)?).abs());
                    }
                }
            }
            defect_gate(worst, 1e-12)
        }),
        check("three.fidelity_gradient", false, |_| {
            let opt = fidelity_optimum(1.0f64, 1e-2)?;
            let e = 1e-5;
            let gt: f64 = (fidelity(opt.theta + e, opt.phi, 1.0) - fidelity(opt.theta - e, opt.phi, 1.0)) / (2.0 * e);
            let gp: f64 = (fidelity(opt.theta, opt.phi + e, 1.0) - fidelity(opt.theta, opt.phi - e, 1.0)) / (2.0 * e);
            gate(
                gt.abs().max(gp.abs()) < 1e-6,
                format!("optimum cos(theta) = {:.6}, phi = {:.6}, |grad| = {:.2e}", opt.theta.cos(), opt.phi, gt.hypot(gp)),
            )
        }),
        check("three.great_circle_quadrature", false, |_| {
            let mut worst: f64 = 0.0;
            for i in 0..8 {
                for k in 0..8 {
                    let (tc, pc) = (0.4 * i as f64, 0.8 * k as f64);
                    worst = worst.max((great_circle_fidelity(tc, pc, 0.5) - great_circle_quadrature(tc, pc, 0.5, 64)).abs());
                }
            }
            defect_gate(worst, 1e-8)
        }),
        check("three.average_fidelity_product_rule", false, |_| {
            let mut worst: f64 = 0.0;
            for t in [0.2f64, 1.0, 3.0] {
                let q = sphere_quadrature(|a, b| fidelity(a, b, t), SphereRule::Product { n_theta: 8, n_phi: 8 });
                worst = worst.max((q.mean - average_fidelity(t)).abs());
            }
            defect_gate(worst, 1e-6)
        }),
        check("three.average_fidelity_monte_carlo", true, |o| {
            let q = sphere_quadrature(
                |a, b| fidelity(a, b, 1.0),
                SphereRule::MonteCarlo {
                    points: 1_000_000,
                    seed: o.seed,
                },
            );
            let dev = (q.mean - average_fidelity(1.0f64)).abs();
            gate(dev < 3.0 * q.standard_error, format!("deviation {dev:.2e}, SE {:.2e}", q.standard_error))
        }),
        check("three.average_fidelity_monotone", false, |_| {
            let v: Vec<f64> = (0..=50).map(|i| average_fidelity(0.1 * i as f64)).collect();
            gate(v.windows(2).all(|w| w[1] < w[0]), "grid t = 0, 0.1, ..., 5".into())
        }),
        check("three.bloch_map_contracts", false, |o| {
            let mut worst: f64 = 0.0;
            for t in [0.05, 0.3, std::f64::consts::LN_2, 2.0, 10.0] {
                worst = worst.max(effective_qubit_map(t)?.max_output_norm(5000, o.seed));
            }
            gate(worst <= 1.0, format!("largest output norm {worst:.12}"))
        }),
        check("three.coherent_info_nonnegative", false, |o| {
            let mut worst = f64::INFINITY;
            for t in [0.0, 0.1, 0.5, 1.5] {
                worst = worst.min(maximize_coherent_info(t, &o.config.with_restarts(4))?.value);
            }
            gate(worst >= 0.0, format!("smallest maximum {worst:.3e}"))
        }),
        check("three.pure_input_zero", false, |o| {
            let mut r = rng(o, 3);
            let mut worst: f64 = 0.0;
            for t in [0.1, 0.8] {
                let ch = QutritChannel::<f64>::new(t)?;
                for _ in 0..10 {
                    let st = QutritState::from_vector(&random_pure_state::<f64, _>(3, &mut r))?;
                    worst = worst.max(ch.coherent_information(&st).abs());
                }
            }
            defect_gate(worst, 1e-10)
        }),
        check("three.kraus_gauge", false, |o| {
            let mut r = rng(o, 4);
            let ch = QutritChannel::<f64>::new(0.2)?;
            let k = ch.kraus().len();
            let g = random_density_matrix::<f64, _>(k, &mut r) + CMat::identity(k, k) * crate::scalar::Complex::new(0.0, 1.0);
            let v = g.qr().q();
            let mixed: Vec<CMat<f64>> = (0..k)
                .map(|a| (0..k).fold(CMat::zeros(3, 3), |acc, b| acc + &ch.kraus()[b] * v[(a, b)]))
                .collect();
            let other = QutritChannel::with_kraus(0.2, mixed)?;
            let rho = random_density_matrix::<f64, _>(3, &mut r);
            defect_gate((ch.coherent_information_of(&rho) - other.coherent_information_of(&rho)).abs(), 1e-10)
        }),
        check("three.holevo_relabel_merge", false, |_| {
            let e = paper_ensemble(0.3, 1.4)?;
            let chi: f64 = holevo_chi(&e, 0.6)?;
            let mut members = e.members().to_vec();
            members.reverse();
            let relabeled: f64 = holevo_chi(&Ensemble::new(members.clone())?, 0.6)?;
            let first = members.remove(0);
            for _ in 0..2 {
                members.push(EnsembleMember {
                    weight: first.weight / 2.0,
                    state: first.state.clone(),
                });
            }
            let merged: f64 = holevo_chi(&Ensemble::new(members)?, 0.6)?;
            defect_gate((relabeled - chi).abs().max((merged - chi).abs()), 1e-12)
        }),
        check("three.capacity_monotone", false, |o| {
            let ts = [0.0, 0.25, 0.5, 1.0, 2.0];
            let mut cs = Vec::new();
            for t in ts {
                cs.push(maximize_holevo(t, 3, &o.config)?.capacity);
            }
            let rises: f64 = cs.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            let status = if rises <= 1e-6 { CheckStatus::Pass } else { CheckStatus::Flag };
            Ok((status, format!("C = {cs:.6?}")))
        }),
        check("opt.entropy_concavity", false, |o| {
            let mut r = rng(o, 5);
            let mut worst = f64::INFINITY;
            for i in 0..50 {
                let a = random_density_matrix::<f64, _>(3, &mut r);
                let b = random_density_matrix::<f64, _>(3, &mut r);
                let l = (i as f64 + 0.5) / 50.0;
                let mix = &a * crate::scalar::Complex::new(l, 0.0) + &b * crate::scalar::Complex::new(1.0 - l, 0.0);
                let gap = entropy_unchecked(&mix) - l * entropy_unchecked(&a) - (1.0 - l) * entropy_unchecked(&b);
                worst = worst.min(gap);
            }
            gate(worst >= -1e-10, format!("smallest concavity gap {worst:.3e}"))
        }),
        check("opt.never_below_start", false, |o| {
            let f = |x: &[f64]| -(1.0 - x[0]).powi(2) - 100.0 * (x[1] - x[0] * x[0]).powi(2);
            let x0 = [-1.2, 1.0];
            let out = nelder_mead_maximize(&f, &x0, &o.config.with_restarts(4))?;
            gate(
                out.value >= f(&x0) - o.config.tolerance && (out.x[0] - 1.0).abs() < 1e-4 && (out.x[1] - 1.0).abs() < 1e-4,
                format!("Rosenbrock optimum ({:.6}, {:.6})", out.x[0], out.x[1]),
            )
        }),
        check("opt.quadrature_se_scaling", false, |o| {
            let f = |a: f64, b: f64| fidelity(a, b, 1.0);
            let se = |n| sphere_quadrature(f, SphereRule::MonteCarlo { points: n, seed: o.seed }).standard_error;
            let ratio = se(10_000) / se(40_000);
            gate((ratio / 2.0 - 1.0).abs() < 0.3, format!("SE(n)/SE(4n) = {ratio:.4}"))
        }),
        check("cli.csv_schema", false, |_| {
            gate(sweep_schema() == SWEEP_SCHEMA_FIXTURE, "sweep CSV columns against fixture v1".into())
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_table_fails_named_check() {
        let am = {
            let mut am = AngularMomentum::<f64>::for_qubits(4);
            am.perturb_ln_factorial(3, 1e-3);
            am
        };
        assert!(cg_orthogonality_defect(&am, 4) > 1e-6);
        assert!(cg_orthogonality_defect(tables(), 4) < 1e-12);
    }

    #[test]
    fn quick_ids_exclude_heavy_gates() {
        let quick = check_ids(true);
        let full = check_ids(false);
        assert!(quick.len() < full.len());
        assert!(!quick.contains(&"channel.monte_carlo_oracle"));
        assert!(quick.contains(&"am.cg_orthogonality"));
        let mut sorted = full.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), full.len());
    }

    #[test]
    fn werner_factor_is_exp_minus_t() {
        for t in [0.1, 0.5, 2.0] {
            assert!((werner_shrink_factor(t).unwrap() - (-t).exp()).abs() < 1e-10);
        }
    }
}
