//! Clebsch–Gordan, Wigner 6j and three-spin recoupling coefficients.
//!
//! Angular momenta are carried as [`HalfInteger`] (twice the value, so
//! `j = 3/2` is stored as `3`). Coefficients use the Condon–Shortley phase
//! convention and are evaluated with Racah single-sum formulas over a
//! log-factorial table, accumulated with compensated summation. Any
//! selection-rule failure yields exactly zero.

use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::any::{Any, TypeId};
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{CompensatedSum, Real};

/// Angular momentum or projection stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HalfInteger(i32);

impl HalfInteger {
    pub const ZERO: Self = Self(0);
    pub const HALF: Self = Self(1);
    pub const ONE: Self = Self(2);

    pub const fn from_twice(twice: i32) -> Self {
        Self(twice)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value<T: Real>(self) -> T {
        T::from_int(self.0 as i64) / T::lit(2.0)
    }

    pub fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    /// `2j + 1`; zero for negative values.
    pub fn multiplicity(self) -> usize {
        if self.0 < 0 {
            0
        } else {
            (self.0 + 1) as usize
        }
    }

    /// Projections `m = j, j-1, ..., -j`.
    pub fn projections(self) -> impl Iterator<Item = HalfInteger> {
        let j = self.0;
        (0..=j.max(-1)).map(move |k| HalfInteger(j - 2 * k)).filter(move |_| j >= 0)
    }

    /// Whether `m` is a valid projection of `self`.
    pub fn admits_projection(self, m: HalfInteger) -> bool {
        self.0 >= 0 && m.0.abs() <= self.0 && (self.0 - m.0) % 2 == 0
    }
}

impl Add for HalfInteger {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl Sub for HalfInteger {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self(self.0 - rhs.0)
    }
}

impl Neg for HalfInteger {
    type Output = Self;
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

impl fmt::Display for HalfInteger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Three angular momenta checked against the triangle rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TriangleTriple {
    pub a: HalfInteger,
    pub b: HalfInteger,
    pub c: HalfInteger,
}

impl TriangleTriple {
    pub fn new(a: HalfInteger, b: HalfInteger, c: HalfInteger) -> Self {
        Self { a, b, c }
    }

    /// `|a-b| <= c <= a+b` with `a+b+c` integral and all entries non-negative.
    pub fn is_valid(&self) -> bool {
        triangle(self.a.0, self.b.0, self.c.0)
    }
}

/// Triangle rule on twice-j values.
#[inline]
pub fn triangle(ta: i32, tb: i32, tc: i32) -> bool {
    ta >= 0 && tb >= 0 && tc >= 0 && (ta - tb).abs() <= tc && tc <= ta + tb && (ta + tb + tc) % 2 == 0
}

#[inline]
pub(crate) fn parity_sign<T: Real>(k: i32) -> T {
    if k.rem_euclid(2) == 0 {
        T::one()
    } else {
        -T::one()
    }
}

/// Coefficient tables over a log-factorial table.
///
/// The table covers `ln n!` for `n <= capacity`; larger arguments fall back
/// to direct summation. Instances are immutable after construction and can be
/// shared between threads.
#[derive(Clone, Debug)]
pub struct AngularMomentum<T> {
    ln_factorial: Vec<T>,
}

impl<T: Real> AngularMomentum<T> {
    pub fn with_capacity(max_argument: usize) -> Self {
        let mut ln_factorial = Vec::with_capacity(max_argument + 1);
        let mut acc = T::zero();
        ln_factorial.push(acc);
        for k in 1..=max_argument {
            acc += T::from_int(k as i64).ln();
            ln_factorial.push(acc);
        }
        Self { ln_factorial }
    }

    /// Table sized for every factorial appearing in Racah sums of `n` qubits.
    pub fn for_qubits(n: usize) -> Self {
        Self::with_capacity(4 * n + 4)
    }

    pub fn capacity(&self) -> usize {
        self.ln_factorial.len() - 1
    }

    /// Adds `delta` to the stored `ln n!`. Fault-injection hook for the
    /// verification suite; never used by the numerical code paths.
    pub fn perturb_ln_factorial(&mut self, n: usize, delta: T) {
        if let Some(v) = self.ln_factorial.get_mut(n) {
            *v += delta;
        }
    }

    fn ln_fact(&self, n: i32) -> T {
        debug_assert!(n >= 0);
        let n = n as usize;
        match self.ln_factorial.get(n) {
            Some(v) => *v,
            None => {
                let mut acc = *self.ln_factorial.last().expect("table never empty");
                for k in self.ln_factorial.len()..=n {
                    acc += T::from_int(k as i64).ln();
                }
                acc
            }
        }
    }

    /// `ln Δ(abc)` on twice-j arguments; caller guarantees the triangle rule.
    fn ln_delta(&self, ta: i32, tb: i32, tc: i32) -> T {
        self.ln_fact((ta + tb - tc) / 2) + self.ln_fact((ta - tb + tc) / 2) + self.ln_fact((-ta + tb + tc) / 2)
            - self.ln_fact((ta + tb + tc) / 2 + 1)
    }

    /// `<j1 m1; j2 m2 | J M>`.
    pub fn clebsch_gordan(
        &self,
        j1: HalfInteger,
        m1: HalfInteger,
        j2: HalfInteger,
        m2: HalfInteger,
        j: HalfInteger,
        m: HalfInteger,
    ) -> T {
        let (tj1, tm1, tj2, tm2, tj, tm) = (j1.0, m1.0, j2.0, m2.0, j.0, m.0);
        if tm1 + tm2 != tm
            || !j1.admits_projection(m1)
            || !j2.admits_projection(m2)
            || !j.admits_projection(m)
            || !triangle(tj1, tj2, tj)
        {
            return T::zero();
        }
        let ln_pref = (T::from_int((tj + 1) as i64).ln()
            + self.ln_delta(tj1, tj2, tj)
            + self.ln_fact((tj1 + tm1) / 2)
            + self.ln_fact((tj1 - tm1) / 2)
            + self.ln_fact((tj2 + tm2) / 2)
            + self.ln_fact((tj2 - tm2) / 2)
            + self.ln_fact((tj + tm) / 2)
            + self.ln_fact((tj - tm) / 2))
            * T::lit(0.5);

        // Integer arguments of the Racah sum.
        let a = (tj1 + tj2 - tj) / 2;
        let b = (tj1 - tm1) / 2;
        let c = (tj2 + tm2) / 2;
        let d = (tj - tj2 + tm1) / 2;
        let e = (tj - tj1 - tm2) / 2;
        let k_min = 0.max(-d).max(-e);
        let k_max = a.min(b).min(c);
        let mut sum = CompensatedSum::new();
        for k in k_min..=k_max {
            let ln_den = self.ln_fact(k)
                + self.ln_fact(a - k)
                + self.ln_fact(b - k)
                + self.ln_fact(c - k)
                + self.ln_fact(d + k)
                + self.ln_fact(e + k);
            sum.add(parity_sign::<T>(k) * (ln_pref - ln_den).exp());
        }
        sum.value()
    }

    /// `{j1 j2 j3; j4 j5 j6}`.
    pub fn wigner_6j(
        &self,
        j1: HalfInteger,
        j2: HalfInteger,
        j3: HalfInteger,
        j4: HalfInteger,
        j5: HalfInteger,
        j6: HalfInteger,
    ) -> T {
        let (a, b, c, d, e, f) = (j1.0, j2.0, j3.0, j4.0, j5.0, j6.0);
        if !(triangle(a, b, c) && triangle(a, e, f) && triangle(d, b, f) && triangle(d, e, c)) {
            return T::zero();
        }
        let ln_pref = (self.ln_delta(a, b, c) + self.ln_delta(a, e, f) + self.ln_delta(d, b, f) + self.ln_delta(d, e, c))
            * T::lit(0.5);
        let alpha = [(a + b + c) / 2, (a + e + f) / 2, (d + b + f) / 2, (d + e + c) / 2];
        let beta = [(a + b + d + e) / 2, (b + c + e + f) / 2, (c + a + f + d) / 2];
        let t_min = *alpha.iter().max().expect("non-empty");
        let t_max = *beta.iter().min().expect("non-empty");
        let mut sum = CompensatedSum::new();
        for t in t_min..=t_max {
            let ln_den = alpha.iter().map(|&x| self.ln_fact(t - x)).fold(T::zero(), |s, v| s + v)
                + beta.iter().map(|&x| self.ln_fact(x - t)).fold(T::zero(), |s, v| s + v);
            sum.add(parity_sign::<T>(t) * (ln_pref + self.ln_fact(t + 1) - ln_den).exp());
        }
        sum.value()
    }

    /// Recoupling coefficient `U(j1, j2, J, j3; j12, j23)` relating
    /// `|j1, (j2 j3) j23; J M>` to `|(j1 j2) j12, j3; J M>`:
    /// `sqrt((2 j12 + 1)(2 j23 + 1)) (-1)^(j1 + j2 + J + j3) {j1 j2 j12; j3 J j23}`.
    pub fn recoupling_u(
        &self,
        j1: HalfInteger,
        j2: HalfInteger,
        j: HalfInteger,
        j3: HalfInteger,
        j12: HalfInteger,
        j23: HalfInteger,
    ) -> T {
        let phase_twice = j1.0 + j2.0 + j.0 + j3.0;
        if phase_twice % 2 != 0 {
            return T::zero();
        }
        let sixj = self.wigner_6j(j1, j2, j12, j3, j, j23);
        if sixj == T::zero() {
            return sixj;
        }
        let dims = T::from_int(((j12.0 + 1) * (j23.0 + 1)) as i64).sqrt();
        parity_sign::<T>(phase_twice / 2) * dims * sixj
    }

    /// Convention-raising coefficient for spin `k` of `n` qubits:
    /// `U(j_{1..k-1}, 1/2, J, j_{k+1..N}; j_{1..k}, j_{k..N})`.
    ///
    /// `prefix` is `j_{1..k-1}` (zero when `k = 1`), `first` is `j_{1..k}`,
    /// `last` is `j_{k..N}` and `suffix` is `j_{k+1..N}`.
    #[allow(clippy::too_many_arguments)]
    pub fn u_jk(
        &self,
        total: HalfInteger,
        k: usize,
        n: usize,
        prefix: HalfInteger,
        first: HalfInteger,
        last: HalfInteger,
        suffix: HalfInteger,
    ) -> Result<T> {
        if k < 1 || k + 1 > n {
            return Err(Error::InvalidArgument(format!(
                "spin index k = {k} outside [1, {}] for N = {n}",
                n.saturating_sub(1)
            )));
        }
        Ok(self.recoupling_u(prefix, HalfInteger::HALF, total, suffix, first, last))
    }
}

/// Shared `f64` tables sized for up to 16 qubits.
pub fn tables() -> &'static AngularMomentum<f64> {
    shared_tables::<f64>()
}

/// Process-wide tables for scalar type `T`, sized for up to 16 qubits and
/// built on first use.
pub fn shared_tables<T: Real>() -> &'static AngularMomentum<T> {
    static CACHE: OnceLock<Mutex<HashMap<TypeId, &'static (dyn Any + Send + Sync)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    let entry = guard.entry(TypeId::of::<T>()).or_insert_with(|| {
        let leaked: &'static AngularMomentum<T> =
            Box::leak(Box::new(AngularMomentum::for_qubits(crate::constants::PATH_N_CAP)));
        leaked
    });
    entry.downcast_ref::<AngularMomentum<T>>().expect("cache keyed by type")
}
