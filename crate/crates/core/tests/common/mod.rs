//! Test-side reimplementation of the step power and energy recursion,
//! written from the model equations without calling the library's rollout.

#![allow(dead_code)]

use ecogear::cycle::Scenario;
use ecogear::vehicle::Powertrain;

/// Surrogate power of gear index `i` at step `k`, or `None` if the gear
/// cannot serve the step.
pub fn step_power(s: &Scenario, k: usize, i: usize, pt: &Powertrain) -> Option<f64> {
    let p = &pt.vehicle;
    let m = &pt.motor;
    let (v, a, alpha) = (s.v_ref[k], s.a_ref[k], s.alpha_ref[k]);
    let ig = p.gears[i];
    let n = 30.0 * p.final_drive / (std::f64::consts::PI * p.r_w) * ig * v;
    if n > m.n_max {
        return None;
    }
    let force =
        p.delta * p.mass * a + p.av * v * v + p.mass * p.g * (alpha.sin() + p.f * alpha.cos());
    let mut t = force * p.r_w / (ig * p.final_drive * p.eta_t);
    if t > m.t_max {
        return None;
    }
    t = t.max(-m.t_max);
    let rho = pt.poly().rho;
    let mut acc = 0.0;
    for (ti, row) in rho.iter().enumerate() {
        for (nj, c) in row.iter().enumerate() {
            acc += c * t.powi(ti as i32) * n.powi(nj as i32);
        }
    }
    Some(acc)
}

pub fn penalty(pt: &Powertrain) -> f64 {
    10.0 * pt.motor.t_max * pt.motor.n_max * std::f64::consts::PI / 30.0
}

/// Terminal energy of a relaxed plan (`b[k][i]`), evaluated straight from
/// the convexified recursion x_{k+1} = Σ_i b_ik (x_k + P_ik Δt).
pub fn terminal_energy(s: &Scenario, b: &[Vec<f64>], pt: &Powertrain) -> f64 {
    let mut x = s.x0;
    for (k, row) in b.iter().enumerate() {
        let mut next = 0.0;
        for (i, bi) in row.iter().enumerate() {
            let p = step_power(s, k, i, pt).unwrap_or_else(|| penalty(pt));
            next += bi * (x + p * s.dt);
        }
        x = next;
    }
    x
}

/// Every gear sequence of length `n` over `modes` gears, as index vectors.
pub fn all_sequences(n: usize, modes: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|seq| {
                (0..modes).map(move |i| {
                    let mut s = seq.clone();
                    s.push(i);
                    s
                })
            })
            .collect();
    }
    out
}

/// Terminal energy of an integer sequence, `None` if any step is infeasible.
pub fn sequence_energy(s: &Scenario, seq: &[usize], pt: &Powertrain) -> Option<f64> {
    let mut x = s.x0;
    for (k, &i) in seq.iter().enumerate() {
        x += step_power(s, k, i, pt)? * s.dt;
    }
    Some(x)
}
