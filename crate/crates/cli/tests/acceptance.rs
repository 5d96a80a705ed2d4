//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs the real CLI for training and comparison.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ecogear::cycle::{gen_nedc, windows, Scenario};
use ecogear::mpc::{self, Strategy};
use ecogear::nn::{self, FeatureNorm, LossWeights, MlpParams, NetConfig};
use ecogear::ocp::{self, exhaustive_solve, rollout_grad, RelaxedPlan, RuleBased};
use ecogear::vehicle::{
    motor_power_poly, motor_speed, required_traction_force, torque_split, Gear, Powertrain,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// Independent oracle for step power and the convexified energy recursion.

fn step_power(s: &Scenario, k: usize, i: usize, pt: &Powertrain) -> Option<f64> {
    let p = &pt.vehicle;
    let (v, a, alpha) = (s.v_ref[k], s.a_ref[k], s.alpha_ref[k]);
    let ig = p.gears[i];
    let n = 30.0 * p.final_drive / (std::f64::consts::PI * p.r_w) * ig * v;
    if n > pt.motor.n_max {
        return None;
    }
    let force =
        p.delta * p.mass * a + p.av * v * v + p.mass * p.g * (alpha.sin() + p.f * alpha.cos());
    let t = force * p.r_w / (ig * p.final_drive * p.eta_t);
    if t > pt.motor.t_max {
        return None;
    }
    let t = t.max(-pt.motor.t_max);
    let mut acc = 0.0;
    for (ti, row) in pt.poly().rho.iter().enumerate() {
        for (nj, c) in row.iter().enumerate() {
            acc += c * t.powi(ti as i32) * n.powi(nj as i32);
        }
    }
    Some(acc)
}

fn penalty(pt: &Powertrain) -> f64 {
    10.0 * pt.motor.t_max * pt.motor.n_max * std::f64::consts::PI / 30.0
}

fn terminal_energy(s: &Scenario, b: &[Vec<f64>], pt: &Powertrain) -> f64 {
    let mut x = s.x0;
    for (k, row) in b.iter().enumerate() {
        x = row
            .iter()
            .enumerate()
            .map(|(i, bi)| bi * (x + step_power(s, k, i, pt).unwrap_or_else(|| penalty(pt)) * s.dt))
            .sum();
    }
    x
}

fn oracle_plan(s: &Scenario, p: &MlpParams) -> Vec<Vec<f64>> {
    let mut x: Vec<f64> = s.v_ref.iter().chain(&s.a_ref).copied().collect();
    for (xi, (m, sc)) in x.iter_mut().zip(p.norm.mean.iter().zip(&p.norm.scale)) {
        *xi = (*xi - m) / sc;
    }
    let last = p.layers.len() - 1;
    for (li, layer) in p.layers.iter().enumerate() {
        x = (0..layer.outputs)
            .map(|o| {
                let z = layer.bias[o]
                    + (0..layer.inputs)
                        .map(|i| layer.weights[o * layer.inputs + i] * x[i])
                        .sum::<f64>();
                if li < last {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect();
    }
    x.chunks(p.config.modes)
        .map(|z| {
            let e: Vec<f64> = z.iter().map(|zi| (p.config.k_scale * zi).exp()).collect();
            let total: f64 = e.iter().sum();
            e.iter().map(|ei| ei / total).collect()
        })
        .collect()
}

fn oracle_loss(s: &Scenario, p: &MlpParams, w: &LossWeights, pt: &Powertrain) -> f64 {
    let b = oracle_plan(s, p);
    let binarity: f64 = b.iter().flatten().map(|x| x * (1.0 - x)).sum();
    w.omega1 * terminal_energy(s, &b, pt) / w.e_ref + w.omega2 * binarity
}

/// ‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)
fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm(a).max(norm(b)).max(1e-300)
}

// ---------------------------------------------------------------------------

struct Fixture {
    pt: Powertrain,
    nedc: ecogear::cycle::DrivingCycle,
    windows: Vec<Scenario>,
    work: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let nedc = gen_nedc(1.0).unwrap();
        Self {
            pt: Powertrain::default(),
            windows: windows(&nedc, 8, 1).unwrap(),
            nedc,
            work: tempfile::tempdir().unwrap(),
        }
    }

    fn run_dir(&self, name: &str) -> PathBuf {
        self.work.path().join(name)
    }

    fn cli(&self, out: &str, cmd: &str) -> Result<Duration, String> {
        let start = Instant::now();
        let o = Command::new(env!("CARGO_BIN_EXE_ecogear"))
            .args(["--seed", &SEED.to_string(), "--out"])
            .arg(self.run_dir(out))
            .arg(cmd)
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!(
                "`{cmd}` failed: {}",
                String::from_utf8_lossy(&o.stderr)
            ));
        }
        Ok(start.elapsed())
    }

    fn trained(&self) -> MlpParams {
        MlpParams::from_json(
            &fs::read_to_string(self.run_dir("run_a").join("params.json")).unwrap(),
        )
        .unwrap()
    }
}

fn criterion_1(fx: &Fixture) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut checked = 0;
    for _ in 0..100 {
        let s = &fx.windows[rng.random_range(0..fx.windows.len())];
        let best = match exhaustive_solve(s, &fx.pt) {
            Ok(b) => b,
            Err(e) => return outcome(false, format!("solver error {e}")),
        };
        let mut oracle_best = f64::INFINITY;
        for code in 0u32..256 {
            let gears: Vec<Gear> = (0..8)
                .map(|k| Gear::from_index(((code >> (7 - k)) & 1) as usize))
                .collect();
            let plan = RelaxedPlan::one_hot(
                &ocp::IntegerPlan {
                    gears: gears.clone(),
                },
                2,
            )
            .unwrap();
            let x = ocp::rollout(s, &plan, &fx.pt).unwrap();
            if x.feasible && best.x_n > x.terminal() {
                return outcome(false, format!("plan {code:08b} beats the solver"));
            }
            let mut xo = Some(s.x0);
            for (k, g) in gears.iter().enumerate() {
                xo = xo.and_then(|x| Some(x + step_power(s, k, g.index(), &fx.pt)? * s.dt));
            }
            if let Some(x) = xo {
                oracle_best = oracle_best.min(x);
            }
        }
        if (best.x_n - oracle_best).abs() > 1e-9 * oracle_best.abs().max(1.0) {
            return outcome(
                false,
                format!("re-enumeration disagrees: {} vs {oracle_best}", best.x_n),
            );
        }
        checked += 1;
    }
    let elapsed = start.elapsed();
    outcome(
        elapsed < Duration::from_secs(5),
        format!(
            "{checked} windows x 256 plans, {:.2} s (limit 5 s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2(fx: &Fixture) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let e_ref = nn::energy_scale(&fx.windows, &fx.pt).unwrap();
    let norm = FeatureNorm::fit(&fx.windows).unwrap();
    let h = 1e-5;
    let mut worst_nn: f64 = 0.0;
    let mut worst_rollout: f64 = 0.0;
    for _ in 0..20 {
        let cfg = NetConfig {
            hidden_width: rng.random_range(6..=14),
            ..NetConfig::default()
        };
        let gain = rng.random_range(0.3..1.0);
        let params = MlpParams::init(cfg, norm.clone(), gain, &mut rng).unwrap();
        let w = LossWeights {
            omega1: 1.0,
            omega2: rng.random_range(0.0..0.1),
            e_ref,
        };
        let theta = params.to_flat();
        let mut probe = params.clone();
        for _ in 0..10 {
            let mut s = fx.windows[rng.random_range(0..fx.windows.len())].clone();
            s.x0 = rng.random_range(0.0..5e6);
            let g = nn::backward(&s, &params, &w, &fx.pt).unwrap();
            let fd: Vec<f64> = (0..theta.len())
                .map(|j| {
                    let mut t = theta.clone();
                    t[j] += h;
                    probe.set_flat(&t).unwrap();
                    let up = oracle_loss(&s, &probe, &w, &fx.pt);
                    t[j] -= 2.0 * h;
                    probe.set_flat(&t).unwrap();
                    let dn = oracle_loss(&s, &probe, &w, &fx.pt);
                    (up - dn) / (2.0 * h)
                })
                .collect();
            worst_nn = worst_nn.max(relative_error(&g.params, &fd));

            let plan = nn::forward(&s, &params).unwrap();
            let rg = rollout_grad(&s, &plan, &fx.pt).unwrap();
            let b: Vec<Vec<f64>> = (0..plan.steps()).map(|k| plan.row(k).to_vec()).collect();
            let mut fd_b = Vec::new();
            for k in 0..b.len() {
                for i in 0..2 {
                    let mut up = b.clone();
                    up[k][i] += h;
                    let mut dn = b.clone();
                    dn[k][i] -= h;
                    fd_b.push(
                        (terminal_energy(&s, &up, &fx.pt) - terminal_energy(&s, &dn, &fx.pt))
                            / (2.0 * h),
                    );
                }
            }
            worst_rollout = worst_rollout.max(relative_error(rg.as_slice(), &fd_b));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_nn <= 1e-5 && worst_rollout <= 1e-6 && elapsed < Duration::from_secs(30),
        format!(
            "20 nets x 10 scenarios: backward rel err {worst_nn:.2e} (<= 1e-5), rollout_grad {worst_rollout:.2e} (<= 1e-6), {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Outcome {
    let z = [1.7, 2.0, 1.5];
    let got = nn::soft_argmax(&z, 1.0);
    let e: Vec<f64> = z.iter().map(|x: &f64| x.exp()).collect();
    let total: f64 = e.iter().sum();
    let err = got
        .iter()
        .zip(&e)
        .map(|(g, ei)| (g - ei / total).abs())
        .fold(0.0, f64::max);
    let sharp = nn::soft_argmax(&z, 50.0).into_iter().fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut monotone = true;
    for _ in 0..1000 {
        let len = rng.random_range(2..=6);
        let z: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut prev = 0.0;
        for k in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0] {
            let top = nn::soft_argmax(&z, k).into_iter().fold(0.0, f64::max);
            monotone &= top >= prev - 1e-12;
            prev = top;
        }
    }
    outcome(
        err <= 1e-9 && sharp > 0.999 && monotone,
        format!(
            "K=1 {:.4?} (max err {err:.1e}), K=50 max {sharp:.6}, monotone over 1000 vectors: {monotone}",
            got
        ),
    )
}

fn criterion_4(fx: &Fixture, train_time: Duration) -> Outcome {
    let params = fx.trained();
    let (gap, confident) = nn::binarity_stats(&fx.windows, &params, 0.9).unwrap();
    let epochs = fs::read_to_string(fx.run_dir("run_a").join("loss.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    outcome(
        epochs == 300 && gap < 0.05 && confident >= 0.95 && train_time < Duration::from_secs(600),
        format!(
            "{epochs} epochs in {:.1} s: mean gap {gap:.5} (< 0.05), rows > 0.9: {:.2}% (>= 95%)",
            train_time.as_secs_f64(),
            100.0 * confident
        ),
    )
}

fn criterion_5(fx: &Fixture) -> Outcome {
    let cmp = mpc::compare(
        &fx.nedc,
        vec![
            Strategy::rule_based(RuleBased::default()),
            Strategy::Exact,
            Strategy::nn(fx.trained()),
        ],
        8,
        &fx.pt,
    )
    .unwrap();
    let e = |i: usize| cmp.rows[i].energy_kwh;
    let (rule, exact, nn) = (e(0), e(1), e(2));
    let gap = (nn - exact) / exact;
    outcome(
        gap.abs() <= 0.02 && nn < rule && exact < rule,
        format!(
            "rule {rule:.4} kWh, exact {exact:.4} kWh, nn {nn:.4} kWh; nn vs exact {:+.2}% (<= 2%)",
            100.0 * gap
        ),
    )
}

fn criterion_6(fx: &Fixture) -> Outcome {
    let nn = mpc::bench_solve_time(&Strategy::nn(fx.trained()), &fx.windows, 3, &fx.pt).unwrap();
    let exact = mpc::bench_solve_time(&Strategy::Exact, &fx.windows, 3, &fx.pt).unwrap();
    let ratio = exact.mean_ns / nn.mean_ns;
    outcome(
        nn.mean_ms() < 1.0 && exact.mean_ms() < 10.0 && ratio >= 10.0,
        format!(
            "nn mean {:.4} ms (< 1), exact mean {:.4} ms (< 10), speed-up {ratio:.1}x (>= 10)",
            nn.mean_ms(),
            exact.mean_ms()
        ),
    )
}

fn criterion_7(fx: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);
    let (p, mm) = (&fx.pt.vehicle, &fx.pt.motor);
    let mut worst_poly: f64 = 0.0;
    let mut worst_force: f64 = 0.0;
    for _ in 0..100 {
        let g = Gear::from_index(rng.random_range(0..2));
        let v_top = mm.n_max / (p.speed_factor() * p.gear_ratio(g).unwrap());
        let v = rng.random_range(0.0..v_top);
        let t = rng.random_range(-mm.t_max..mm.t_max);
        let via_vehicle = motor_power_poly(v, g, t, mm, p).unwrap();
        let via_motor = fx
            .pt
            .poly()
            .eval_motor(motor_speed(v, g, p, mm).unwrap(), t);
        worst_poly = worst_poly.max((via_vehicle - via_motor).abs() / via_motor.abs().max(1.0));

        let a = rng.random_range(-3.0..1.0);
        let f = required_traction_force(v, a, 0.0, p).unwrap();
        if let Ok(split) = torque_split(f, g, v, p, mm) {
            let back = split.wheel_force(p).unwrap();
            worst_force = worst_force.max((back - f).abs() / f.abs().max(1.0));
        }
    }
    let mut worst_row: f64 = 0.0;
    let mut nets = vec![fx.trained()];
    let norm = FeatureNorm::fit(&fx.windows).unwrap();
    for _ in 0..5 {
        nets.push(MlpParams::init(NetConfig::default(), norm.clone(), 3.0, &mut rng).unwrap());
    }
    for params in &nets {
        for s in &fx.windows {
            let plan = nn::forward(s, params).unwrap();
            for k in 0..plan.steps() {
                worst_row = worst_row.max((plan.row(k).iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    outcome(
        worst_poly <= 1e-9 && worst_force <= 1e-9 && worst_row <= 1e-12,
        format!(
            "poly composition {worst_poly:.1e}, force balance {worst_force:.1e}, SOS1 row sum {worst_row:.1e} over {} forward passes",
            nets.len() * fx.windows.len()
        ),
    )
}

/// Files whose content is a pure function of config and seed.
fn deterministic_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "comparison.csv" && n != "timing.csv")
        .collect();
    names.sort();
    names
}

fn criterion_8(fx: &Fixture) -> Outcome {
    let (a, b) = (fx.run_dir("run_a"), fx.run_dir("run_b"));
    let names = deterministic_files(&a);
    if names != deterministic_files(&b) {
        return outcome(false, "runs produced different file sets");
    }
    for name in &names {
        if fs::read(a.join(name)).unwrap() != fs::read(b.join(name)).unwrap() {
            return outcome(false, format!("{name} differs between runs"));
        }
    }
    outcome(
        true,
        format!(
            "{} artifacts byte-identical: {}",
            names.len(),
            names.join(", ")
        ),
    )
}

fn main() {
    // Accept and ignore libtest flags such as --nocapture.
    let fx = Fixture::new();
    let mut results: Vec<(u32, Outcome)> = Vec::new();

    let train = fx
        .cli("run_a", "train")
        .and_then(|t| fx.cli("run_b", "train").map(|_| t));
    let compare = train.as_ref().map_err(Clone::clone).and_then(|_| {
        fx.cli("run_a", "compare")
            .and_then(|_| fx.cli("run_b", "compare"))
    });

    results.push((1, criterion_1(&fx)));
    results.push((2, criterion_2(&fx)));
    results.push((3, criterion_3()));
    match (&train, &compare) {
        (Ok(t), Ok(_)) => {
            results.push((4, criterion_4(&fx, *t)));
            results.push((5, criterion_5(&fx)));
            results.push((6, criterion_6(&fx)));
            results.push((7, criterion_7(&fx)));
            results.push((8, criterion_8(&fx)));
        }
        (Err(e), _) | (_, Err(e)) => {
            for c in 4..=8 {
                results.push((c, outcome(false, e.clone())));
            }
        }
    }

    let mut failed = 0;
    for (c, o) in &results {
        println!(
            "criterion {c}: {} - {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
