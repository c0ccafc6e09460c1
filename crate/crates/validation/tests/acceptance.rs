//! Acceptance criteria, each at its stated tolerance. Prints one line per
//! criterion and exits nonzero if any fails.

use std::f64::consts::{FRAC_PI_2, LN_2, PI};
use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use su2drift::angular_momentum::tables;
use su2drift::constants::DEFAULT_SEED;
use su2drift::linalg::{max_abs_diff, random_density_matrix, random_pure_state};
use su2drift::optimize::{integrate_gl, sphere_quadrature, SphereRule};
use su2drift::scalar::Complex;
use su2drift::stats::ks_two_sample;
use su2drift::su2_group::{class_angle, kernel_coefficient};
use su2drift::sweep::{sweep_row, time_grid, write_sweep_csv, SweepQuantity};
use su2drift::three_qubit::{
    average_fidelity, coherent_info_threshold, fidelity, fidelity_bloch, fidelity_optimum, maximize_coherent_info,
    maximize_holevo, orthogonal_benchmark, qutrit_channel_operator, weak_diffusion,
};
use su2drift::verify::{
    cg_orthogonality_defect, cg_symmetry_defect, monte_carlo_oracle_runs, recoupling_unitarity_defect,
    sixj_orthogonality_defect, sixj_symmetry_defect, werner_shrink_factor,
};
use su2drift::{
    CMat, DiffusionChannel, HalfInteger, HeatKernel, HeatKernelSampler, OptimizerConfig, QutritChannel, QutritState,
};

type Outcome = Result<(bool, String), su2drift::Error>;

/// Collects sub-gate results into one verdict and a detail string.
struct Gates {
    ok: bool,
    parts: Vec<String>,
}

impl Gates {
    fn new() -> Self {
        Self {
            ok: true,
            parts: Vec::new(),
        }
    }

    fn check(&mut self, pass: bool, detail: String) {
        self.ok &= pass;
        self.parts.push(if pass { detail } else { format!("[FAIL] {detail}") });
    }

    fn finish(self) -> Outcome {
        Ok((self.ok, self.parts.join("; ")))
    }
}

fn criterion_1() -> Outcome {
    let am = tables();
    let mut g = Gates::new();
    let d = cg_orthogonality_defect(am, 6);
    g.check(d < 1e-12, format!("CG orthogonality {d:.2e}"));
    let d = cg_symmetry_defect(am, 6);
    g.check(d < 1e-12, format!("CG symmetry {d:.2e}"));
    let d = sixj_orthogonality_defect(am, 6);
    g.check(d < 1e-12, format!("6j orthogonality {d:.2e}"));
    let d = sixj_symmetry_defect(am, 6);
    g.check(d < 1e-12, format!("6j symmetry {d:.2e}"));
    let d = recoupling_unitarity_defect(am, 6);
    g.check(d < 1e-12, format!("recoupling unitarity {d:.2e}"));
    g.finish()
}

fn criterion_2() -> Outcome {
    let mut g = Gates::new();
    let mut worst: f64 = 0.0;
    for t in [0.1, 1.0, 10.0] {
        let k = HeatKernel::new(t)?;
        worst = worst.max((integrate_gl(|xi| k.class_density(xi), 0.0, 2.0 * PI, 400) - 1.0).abs());
    }
    g.check(worst < 1e-8, format!("normalization defect {worst:.2e}"));

    let n = 100_000;
    let half = HeatKernelSampler::new(0.5)?;
    let a = half.sample_batch(n, DEFAULT_SEED);
    let b = half.sample_batch(n, DEFAULT_SEED + 1);
    let composed: Vec<f64> = a.iter().zip(&b).map(|(u, v)| class_angle(&(*u * *v)).value()).collect();
    let direct: Vec<f64> = HeatKernelSampler::new(1.0)?
        .sample_batch(n, DEFAULT_SEED + 2)
        .iter()
        .map(|u| class_angle(u).value())
        .collect();
    let ks = ks_two_sample(&composed, &direct);
    g.check(ks.p_value > 0.01, format!("convolution KS p = {:.3}", ks.p_value));

    // Exact up to the rounding of exp, which grows with its argument.
    let mut worst_ulps: f64 = 0.0;
    for tj in 0..40 {
        let j = HalfInteger::from_twice(tj);
        for (t1, t2) in [(0.1, 0.2), (0.25, 0.5), (1.0, 2.0)] {
            let lhs = kernel_coefficient(j, t1) * kernel_coefficient(j, t2);
            let rhs = kernel_coefficient(j, t1 + t2);
            if rhs > 0.0 {
                let jv = j.value::<f64>();
                let bound = (4.0 + jv * (jv + 1.0) * (t1 + t2)) * f64::EPSILON;
                worst_ulps = worst_ulps.max((lhs - rhs).abs() / rhs / bound);
            }
        }
    }
    g.check(worst_ulps <= 1.0, format!("character semigroup at {worst_ulps:.2} of rounding bound"));
    g.finish()
}

fn criterion_3() -> Outcome {
    let runs = monte_carlo_oracle_runs(DEFAULT_SEED)?;
    let failing: Vec<String> = runs
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("N={} t={} ratio {:.3}", r.n, r.t, r.ratio))
        .collect();
    let worst = runs.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let max_dev = runs.iter().map(|r| r.max_deviation).fold(0.0, f64::max);
    Ok((
        failing.is_empty(),
        format!(
            "{} runs, worst deviation/SE {worst:.3}, largest deviation {max_dev:.2e}{}",
            runs.len(),
            if failing.is_empty() { String::new() } else { format!(", over 3 SE: {}", failing.join(", ")) }
        ),
    ))
}

fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    for t in [0.1, 0.5, 2.0] {
        worst = worst.max((werner_shrink_factor(t)? - (-t).exp()).abs());
    }
    Ok((worst < 1e-10, format!("|eta - e^-t| <= {worst:.2e}")))
}

fn criterion_5() -> Outcome {
    let mut g = Gates::new();
    let mut worst: f64 = 0.0;
    for t in [0.0, 0.2, 1.0, 3.0] {
        let ch = DiffusionChannel::new(3, t)?;
        for k in 0..12 {
            let theta = PI * (k as f64 + 0.5) / 12.0;
            let phi = 2.0 * PI * k as f64 / 12.0 + 0.3;
            let rho = QutritState::qubit_block(theta, phi).into_matrix();
            worst = worst.max(max_abs_diff(&qutrit_channel_operator(&rho, t)?, &ch.apply_qutrit(&rho)?));
        }
    }
    g.check(worst < 1e-10, format!("closed form vs general {worst:.2e}"));
    let out = qutrit_channel_operator(QutritState::symmetric().matrix(), LN_2)?;
    let mut expect = CMat::zeros(3, 3);
    for (i, v) in [3.0 / 16.0, 5.0 / 48.0, 17.0 / 24.0].into_iter().enumerate() {
        expect[(i, i)] = Complex::new(v, 0.0);
    }
    let d = max_abs_diff(&out, &expect);
    g.check(d < 1e-12, format!("|2><2| at ln 2 off by {d:.2e}"));
    g.finish()
}

fn criterion_6() -> Outcome {
    let mut g = Gates::new();
    let mut worst: f64 = 0.0;
    for t in [0.0, 0.3, 1.0, 4.0] {
        for i in 0..=24 {
            for k in 0..24 {
                let (th, ph) = (PI * i as f64 / 24.0, 2.0 * PI * k as f64 / 24.0);
                worst = worst.max((fidelity(th, ph, t) - fidelity_bloch(th, ph, t)?).abs());
            }
        }
    }
    g.check(worst < 1e-12, format!("Bloch form {worst:.2e}"));

    for t in [0.5, 1.0, 2.0] {
        let opt = fidelity_optimum(t, 1e-2_f64)?;
        let phi_ok = opt.phi.abs() < 1e-4 || (opt.phi - PI).abs() < 1e-4 || (opt.phi - 2.0 * PI).abs() < 1e-4;
        g.check(
            (opt.theta.cos() - 0.25).abs() < 1e-4 && phi_ok,
            format!("t={t}: optimum cos(theta) = {:.6} (target 1/4), phi = {:.6}", opt.theta.cos(), opt.phi),
        );
    }

    for (i, t) in [0.3_f64, 1.0, 3.0].into_iter().enumerate() {
        let q = sphere_quadrature(
            |a, b| fidelity(a, b, t),
            SphereRule::MonteCarlo {
                points: 1_000_000,
                seed: DEFAULT_SEED + i as u64,
            },
        );
        let dev = (q.mean - average_fidelity(t)).abs();
        g.check(dev < 3.0 * q.standard_error, format!("t={t}: average vs quadrature {:.2} sigma", dev / q.standard_error));
    }

    let grid: Vec<f64> = (0..=50).map(|i| average_fidelity(0.1 * i as f64)).collect();
    g.check(grid.windows(2).all(|w| w[1] < w[0]), "average fidelity decreasing on t = 0..5".into());
    g.finish()
}

fn random_unitary(k: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = random_density_matrix::<f64, _>(k, rng) + CMat::identity(k, k) * Complex::new(0.0, 1.0);
    g.qr().q()
}

fn criterion_7(cfg: &OptimizerConfig) -> Outcome {
    let mut g = Gates::new();
    let ic0 = maximize_coherent_info(0.0, cfg)?.value;
    g.check((ic0 - 1.0).abs() < 1e-6, format!("I_C(0) = {ic0:.9}"));

    let th = coherent_info_threshold(0.2, 0.4, 1e-5, cfg)?;
    g.check((0.265..=0.285).contains(&th.t_star), format!("t* = {:.5}", th.t_star));

    let ic = maximize_coherent_info(0.05, cfg)?.value;
    let weak = weak_diffusion::coherent_info(0.05);
    g.check((ic - weak).abs() < 0.1, format!("I_C(0.05) = {ic:.4} vs expansion {weak:.4}"));

    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut pure: f64 = 0.0;
    let mut gauge: f64 = 0.0;
    for t in [0.05, 0.2, 0.8] {
        let ch = QutritChannel::new(t)?;
        for _ in 0..5 {
            let st = QutritState::from_vector(&random_pure_state::<f64, _>(3, &mut rng))?;
            pure = pure.max(ch.coherent_information(&st).abs());
        }
        let k = ch.kraus().len();
        let v = random_unitary(k, &mut rng);
        let mixed: Vec<CMat> = (0..k)
            .map(|a| (0..k).fold(CMat::zeros(3, 3), |acc, b| acc + &ch.kraus()[b] * v[(a, b)]))
            .collect();
        let other = QutritChannel::with_kraus(t, mixed)?;
        for _ in 0..5 {
            let rho = random_density_matrix::<f64, _>(3, &mut rng);
            gauge = gauge.max((ch.coherent_information_of(&rho) - other.coherent_information_of(&rho)).abs());
        }
    }
    g.check(pure < 1e-10, format!("pure-input I_C {pure:.2e}"));
    g.check(gauge < 1e-10, format!("Kraus gauge {gauge:.2e}"));
    g.finish()
}

fn criterion_8(cfg: &OptimizerConfig) -> Outcome {
    let mut g = Gates::new();
    let c0 = maximize_holevo(0.0, 5, cfg)?;
    let (q0, th0) = (c0.q.unwrap_or(f64::NAN), c0.theta.unwrap_or(f64::NAN));
    g.check(
        (c0.capacity - 3f64.log2()).abs() < 1e-6 && (q0 - 1.0 / 3.0).abs() < 1e-4 && (th0 - FRAC_PI_2).abs() < 1e-4,
        format!("C(0) = {:.8}, q = {q0:.6}, theta = {th0:.6}", c0.capacity),
    );
    let reseeded = cfg.with_restarts(2 * cfg.restarts).with_seed(cfg.seed ^ 0x5eed);
    for t in [0.25, 0.5, 1.0] {
        let c = maximize_holevo(t, 5, cfg)?;
        let theta = c.theta.unwrap_or(f64::NAN);
        g.check(
            theta.cos().abs() > 1e-3,
            format!("t={t}: C = {:.6}, theta = {theta:.5}, |cos theta| = {:.4}", c.capacity, theta.cos().abs()),
        );
        let b = orthogonal_benchmark(t, cfg)?;
        g.check(
            b.best >= b.worst && c.capacity - b.best < c.capacity - b.worst,
            format!("t={t}: orthogonal best {:.6} / worst {:.6}", b.best, b.worst),
        );
        let again = maximize_holevo(t, 5, &reseeded)?.capacity;
        let diff = (again - c.capacity).abs();
        g.check(diff < 2e-4, format!("t={t}: restart saturation {diff:.1e}"));
    }
    g.finish()
}

/// Runs a sweep through the CSV writer and reads the columns back.
fn sweep_columns(quantity: SweepQuantity, grid: &[f64], cfg: &OptimizerConfig) -> Result<Vec<Vec<f64>>, su2drift::Error> {
    let rows = grid.iter().map(|&t| sweep_row(quantity, t, cfg)).collect::<Result<Vec<_>, _>>()?;
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, quantity, &rows)?;
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    let width = quantity.columns().len() - 1;
    let mut cols = vec![Vec::new(); width];
    for rec in reader.records() {
        let rec = rec.expect("own CSV parses");
        for (c, col) in cols.iter_mut().enumerate() {
            col.push(rec[c].parse::<f64>().expect("numeric column"));
        }
    }
    Ok(cols)
}

fn criterion_9(cfg: &OptimizerConfig) -> Outcome {
    let mut g = Gates::new();
    let grid = time_grid(0.0, 1.5, 31)?;
    let ic = sweep_columns(SweepQuantity::CoherentInfo, &grid, cfg)?;
    let cap = sweep_columns(SweepQuantity::Capacity, &grid, cfg)?;
    let (t, ic_value, eps) = (&ic[0], &ic[1], &ic[2]);
    let (c_value, q, theta) = (&cap[1], &cap[2], &cap[3]);

    g.check(
        ic_value.windows(2).all(|w| w[1] <= w[0] + 1e-9) && c_value.windows(2).all(|w| w[1] <= w[0] + 1e-9),
        "I_C(t) and C(t) non-increasing".into(),
    );
    let positive: Vec<usize> = (1..t.len()).filter(|&i| ic_value[i] > 1e-9).collect();
    g.check(
        positive.iter().all(|&i| eps[i] >= 0.5) && eps[1] > 0.5 && eps[1] < eps[2] && eps[2] < eps[3],
        format!(
            "epsilon >= 1/2 while I_C > 0 and rising near 0: {:.5}, {:.5}, {:.5}",
            eps[1], eps[2], eps[3]
        ),
    );
    let leaves_q = (1..=3).all(|i| (q[i] - 1.0 / 3.0).abs() > 1e-4);
    g.check(
        (q[0] - 1.0 / 3.0).abs() < 1e-4 && leaves_q,
        format!("q(0) = {:.6}, q(0.05..0.15) = {:.5}, {:.5}, {:.5}", q[0], q[1], q[2], q[3]),
    );
    let below = (1..=3).all(|i| theta[i] < FRAC_PI_2);
    let expansion_sign = (weak_diffusion::theta(0.05) - FRAC_PI_2).signum();
    g.check(
        (theta[0] - FRAC_PI_2).abs() < 1e-4 && below,
        format!(
            "theta leaves pi/2 downward: theta(0.05..0.15) - pi/2 = {:+.5}, {:+.5}, {:+.5} (expansion sign {:+})",
            theta[1] - FRAC_PI_2,
            theta[2] - FRAC_PI_2,
            theta[3] - FRAC_PI_2,
            expansion_sign
        ),
    );
    g.finish()
}

fn main() -> ExitCode {
    let cfg = OptimizerConfig::default();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("algebra gates", Box::new(criterion_1)),
        ("kernel gates", Box::new(criterion_2)),
        ("channel vs Monte Carlo oracle", Box::new(criterion_3)),
        ("two-qubit Werner law", Box::new(criterion_4)),
        ("three-qubit closed forms", Box::new(criterion_5)),
        ("fidelity suite", Box::new(criterion_6)),
        ("coherent information", Box::new(move || criterion_7(&cfg))),
        ("classical capacity", Box::new(move || criterion_8(&cfg))),
        ("sweep shapes", Box::new(move || criterion_9(&cfg))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!(
            "criterion {} {} ({name}, {:.1}s): {detail}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
