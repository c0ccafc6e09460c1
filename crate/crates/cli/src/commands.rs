use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use su2drift::angular_momentum::{tables, triangle};
use su2drift::channel::monte_carlo_channel;
use su2drift::linalg::{random_density_matrix, MatrixJson};
use su2drift::sweep::{sweep_row, time_grid, write_sweep_csv, SweepRow};
use su2drift::three_qubit::{average_fidelity, coherent_info_threshold, fidelity, fidelity_optimum};
use su2drift::verify::{run_verify, CheckStatus, Fault, VerifyOptions};
use su2drift::{ChoiMode, DensityMatrix, DiffusionChannel, HalfInteger, HeatKernel, HeatKernelSampler, OptimizerConfig};
use su2drift::su2_group::class_angle;

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{ChannelCmd, ChoiModeArg, Cli, Command, GlobalOpts, KernelCmd, ThreeCmd, VerifyArgs, WignerCmd};

struct Ctx {
    global: GlobalOpts,
    started: Instant,
}

impl Ctx {
    fn config(&self) -> Result<OptimizerConfig, CliError> {
        let cfg = OptimizerConfig {
            restarts: self.global.restarts,
            tolerance: self.global.opt_tol,
            seed: self.global.seed,
            ..OptimizerConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn manifest(&self, outputs: &[&Path]) -> Result<(), CliError> {
        let Some(&first) = outputs.first() else {
            return Ok(());
        };
        RunManifest {
            command_line: std::env::args().collect(),
            seed: self.global.seed,
            restarts: self.global.restarts,
            opt_tol: self.global.opt_tol,
            threads: self.global.threads,
            version: env!("CARGO_PKG_VERSION"),
            timestamp: chrono::Utc::now().to_rfc3339(),
            elapsed_seconds: self.started.elapsed().as_secs_f64(),
            outputs: outputs.iter().map(|p| p.to_path_buf()).collect(),
        }
        .write(first)?;
        Ok(())
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.global.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Failure(e.to_string()))?;
    }
    let ctx = Ctx {
        global: cli.global,
        started: Instant::now(),
    };
    match cli.command {
        Command::Wigner(c) => wigner(c),
        Command::Kernel(c) => kernel(&ctx, c),
        Command::Channel(c) => channel(&ctx, c),
        Command::Three(c) => three(&ctx, c),
        Command::Verify(a) => verify(&ctx, a),
    }
}

fn h(tw: i32) -> HalfInteger {
    HalfInteger::from_twice(tw)
}

fn require_spins(args: &[i32]) -> Result<(), CliError> {
    match args.iter().find(|&&v| v < 0) {
        Some(v) => Err(CliError::Usage(format!("twice-j arguments must be >= 0, got {v}"))),
        None => Ok(()),
    }
}

fn wigner(cmd: WignerCmd) -> Result<(), CliError> {
    let am = tables();
    let value = match cmd {
        WignerCmd::Cg { tj1, tm1, tj2, tm2, tj, tm } => {
            require_spins(&[tj1, tj2, tj])?;
            if tm1 + tm2 != tm {
                eprintln!("note: selection rule m1 + m2 = M violated");
            } else if !triangle(tj1, tj2, tj) {
                eprintln!("note: selection rule violated (triangle)");
            } else if !(h(tj1).admits_projection(h(tm1)) && h(tj2).admits_projection(h(tm2)) && h(tj).admits_projection(h(tm))) {
                eprintln!("note: selection rule violated (projection out of range)");
            }
            am.clebsch_gordan(h(tj1), h(tm1), h(tj2), h(tm2), h(tj), h(tm))
        }
        WignerCmd::Sixj { tj1, tj2, tj3, tj4, tj5, tj6 } => {
            require_spins(&[tj1, tj2, tj3, tj4, tj5, tj6])?;
            let triads = [(tj1, tj2, tj3), (tj1, tj5, tj6), (tj4, tj2, tj6), (tj4, tj5, tj3)];
            if triads.iter().any(|&(a, b, c)| !triangle(a, b, c)) {
                eprintln!("note: selection rule violated (triangle)");
            }
            am.wigner_6j(h(tj1), h(tj2), h(tj3), h(tj4), h(tj5), h(tj6))
        }
        WignerCmd::U { tj1, tj2, tj, tj3, tj12, tj23 } => {
            require_spins(&[tj1, tj2, tj, tj3, tj12, tj23])?;
            am.recoupling_u(h(tj1), h(tj2), h(tj), h(tj3), h(tj12), h(tj23))
        }
    };
    println!("{value}");
    Ok(())
}

fn kernel(ctx: &Ctx, cmd: KernelCmd) -> Result<(), CliError> {
    match cmd {
        KernelCmd::Eval { t, xi } => {
            let k = HeatKernel::new(t)?;
            println!("t,xi,density,class_density");
            println!("{t:.16e},{xi:.16e},{:.16e},{:.16e}", k.density(xi), k.class_density(xi));
            Ok(())
        }
        KernelCmd::Sample { t, n, out } => {
            let samples = HeatKernelSampler::new(t)?.sample_batch(n, ctx.global.seed);
            let mut text = String::from("index,xi,qw,qx,qy,qz\n");
            for (i, u) in samples.iter().enumerate() {
                text.push_str(&format!(
                    "{i},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    class_angle(u).value(),
                    u.w,
                    u.x,
                    u.y,
                    u.z
                ));
            }
            emit(ctx, out.as_deref(), &text)
        }
    }
}

/// Writes to `out` with a manifest, or to stdout.
fn emit(ctx: &Ctx, out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| CliError::io(path, e))?;
            ctx.manifest(&[path])
        }
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Failure(e.to_string())),
    }
}

fn read_matrix(path: &Path) -> Result<MatrixJson, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn matrix_text(m: &MatrixJson) -> Result<String, CliError> {
    serde_json::to_string_pretty(m)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Failure(e.to_string()))
}

fn channel(ctx: &Ctx, cmd: ChannelCmd) -> Result<(), CliError> {
    match cmd {
        ChannelCmd::Apply { n, t, input, out } => {
            let rho = DensityMatrix::from_json(&read_matrix(&input)?)?;
            let result = DiffusionChannel::new(n, t)?.apply(&rho)?;
            emit(ctx, Some(&out), &matrix_text(&result.to_json())?)
        }
        ChannelCmd::Choi { n, t, mode, out } => {
            let mode = match mode {
                ChoiModeArg::Full => ChoiMode::Full,
                ChoiModeArg::Qutrit => ChoiMode::EffectiveQutrit,
            };
            let choi = DiffusionChannel::new(n, t)?.choi(mode)?;
            emit(ctx, out.as_deref(), &matrix_text(&MatrixJson::from_matrix(&choi))?)
        }
        ChannelCmd::McCheck { n, t, samples, input } => {
            let channel = DiffusionChannel::new(n, t)?;
            let rho = match input {
                Some(p) => DensityMatrix::from_json(&read_matrix(&p)?)?.into_matrix(),
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(ctx.global.seed);
                    random_density_matrix::<f64, _>(1 << n.min(30), &mut rng)
                }
            };
            let exact = channel.apply_operator(&rho)?;
            let mc = monte_carlo_channel(&rho, n, t, samples, ctx.global.seed)?;
            let (dev, se) = (mc.max_deviation(&exact), mc.max_standard_error());
            println!("max_deviation,max_standard_error,ratio,max_entry_sigma");
            println!("{dev:.6e},{se:.6e},{:.4},{:.4}", dev / se, mc.max_sigma(&exact));
            if dev < 3.0 * se {
                Ok(())
            } else {
                Err(CliError::Failure(format!("deviation {dev:.3e} exceeds 3 standard errors ({se:.3e})")))
            }
        }
    }
}

fn three(ctx: &Ctx, cmd: ThreeCmd) -> Result<(), CliError> {
    match cmd {
        ThreeCmd::Fidelity { t, theta, phi, grid, grid_points, out } => {
            if grid {
                if grid_points < 2 {
                    return Err(CliError::Usage("--grid-points must be >= 2".into()));
                }
                let mut text = String::from("theta,phi,fidelity\n");
                let m = grid_points - 1;
                for i in 0..=m {
                    let th = std::f64::consts::PI * i as f64 / m as f64;
                    for k in 0..=m {
                        let ph = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                        text.push_str(&format!("{th:.16e},{ph:.16e},{:.16e}\n", fidelity(th, ph, t)));
                    }
                }
                return emit(ctx, out.as_deref(), &text);
            }
            if !(t >= 0.0) {
                return Err(CliError::Usage(format!("diffusion time must be >= 0, got {t}")));
            }
            let best = fidelity_optimum(t, 1e-2)?;
            println!("fidelity {:.16e}", fidelity(theta, phi, t));
            println!("average {:.16e}", average_fidelity(t));
            println!(
                "optimum {:.16e} at theta {:.10} (cos {:.10}), phi {:.10}",
                best.value,
                best.theta,
                best.theta.cos(),
                best.phi
            );
            Ok(())
        }
        ThreeCmd::Sweep { quantity, t_from, t_to, t_steps, out } => {
            let cfg = ctx.config()?;
            let grid = time_grid(t_from, t_to, t_steps)?;
            let aux = quantity.columns().len() - 3;
            let rows: Vec<SweepRow> = grid
                .iter()
                .map(|&t| {
                    sweep_row(quantity, t, &cfg).unwrap_or_else(|e| SweepRow {
                        t,
                        value: f64::NAN,
                        aux: vec![f64::NAN; aux],
                        flag: format!("error: {e}"),
                    })
                })
                .collect();
            let file = fs::File::create(&out).map_err(|e| CliError::io(&out, e))?;
            write_sweep_csv(io::BufWriter::new(file), quantity, &rows)?;
            ctx.manifest(&[&out])?;
            let flagged = rows.iter().filter(|r| r.flagged()).count();
            if flagged > 0 {
                return Err(CliError::Failure(format!("{flagged} of {} rows flagged in {}", rows.len(), out.display())));
            }
            Ok(())
        }
        ThreeCmd::Threshold { lo, hi, tol } => {
            let th = coherent_info_threshold(lo, hi, tol, &ctx.config()?)?;
            println!("t_star {:.10}", th.t_star);
            println!("ansatz_t_star {:.10}", th.ansatz_t_star);
            Ok(())
        }
    }
}

fn verify(ctx: &Ctx, args: VerifyArgs) -> Result<(), CliError> {
    let options = VerifyOptions {
        quick: args.quick,
        seed: ctx.global.seed,
        fault: args.inject_cg_fault.then_some(Fault::CorruptCgTable),
        config: ctx.config()?,
    };
    let report = run_verify(&options);
    for c in &report.checks {
        let status = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Flag => "FLAG",
        };
        eprintln!("{status} {:<38} {:>7.2}s  {}", c.id, c.seconds, c.detail);
    }
    eprintln!("{} checks in {:.1}s", report.checks.len(), report.seconds);
    emit(ctx, args.report.as_deref(), &(report.to_json() + "\n"))?;
    if report.passed() {
        Ok(())
    } else {
        let ids: Vec<String> = report.failures().iter().map(|c| c.id.clone()).collect();
        Err(CliError::Failure(format!("failed checks: {}", ids.join(", "))))
    }
}
