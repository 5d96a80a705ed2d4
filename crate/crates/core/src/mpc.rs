//! Receding-horizon simulation over a driving cycle.
//!
//! At every cycle sample the controller builds the next `N` steps of
//! reference, asks a [`Strategy`] for a gear, applies only the first one
//! and moves on. The optimizers plan with the polynomial power surrogate;
//! the plant charges energy with the efficiency map, so surrogate error
//! shows up in the totals.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cycle::{derive_accel, DrivingCycle, Scenario};
use crate::error::{Error, Result};
use crate::nn::{self, MlpParams};
use crate::ocp::{self, exhaustive_solve, round_sos1, ModePower, RuleBased};
use crate::vehicle::{
    motor_power_map, motor_speed, required_traction_force, torque_split, Gear, Powertrain,
};

pub const J_PER_KWH: f64 = 3.6e6;

#[derive(Clone, Debug, PartialEq)]
pub enum Strategy {
    RuleBased { schedule: RuleBased, current: Gear },
    Exact,
    Nn(Box<MlpParams>),
}

impl Strategy {
    /// Rule-based strategy starting in first gear.
    pub fn rule_based(schedule: RuleBased) -> Self {
        Strategy::RuleBased {
            schedule,
            current: Gear::FIRST,
        }
    }

    pub fn nn(params: MlpParams) -> Self {
        Strategy::Nn(Box::new(params))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::RuleBased { .. } => "rule_based",
            Strategy::Exact => "exact",
            Strategy::Nn(_) => "nn",
        }
    }

    /// Gear for the first step of `s`. Only the rule-based strategy keeps
    /// state, and it looks at nothing but the current speed.
    pub fn decide(&mut self, s: &Scenario, pt: &Powertrain) -> Result<Gear> {
        match self {
            Strategy::RuleBased { schedule, current } => {
                *current = schedule.next_gear(s.v_ref[0], *current);
                Ok(*current)
            }
            Strategy::Exact => Ok(exhaustive_solve(s, pt)?.plan.gears[0]),
            Strategy::Nn(params) => {
                let plan = nn::forward(s, params)?;
                Ok(round_sos1(&plan).gears[0])
            }
        }
    }
}

/// One closed-loop sample. Serialises to the `t,v,a,gear,Tm,Tb,nm,Pm,W`
/// CSV layout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub v: f64,
    pub a: f64,
    pub gear: Gear,
    #[serde(rename = "Tm")]
    pub t_m: f64,
    #[serde(rename = "Tb")]
    pub t_b: f64,
    #[serde(rename = "nm")]
    pub n_m: f64,
    #[serde(rename = "Pm")]
    pub p_m: f64,
    /// Cumulative energy after this step (J).
    #[serde(rename = "W")]
    pub w: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub count: usize,
    pub mean_ns: f64,
    pub worst_ns: u64,
    pub p99_ns: u64,
    pub samples_ns: Vec<u64>,
}

impl TimingStats {
    pub fn from_samples(samples_ns: Vec<u64>) -> Self {
        if samples_ns.is_empty() {
            return Self::default();
        }
        let mut sorted = samples_ns.clone();
        sorted.sort_unstable();
        let count = sorted.len();
        let p99_idx = ((count as f64 * 0.99).ceil() as usize).clamp(1, count) - 1;
        Self {
            count,
            mean_ns: sorted.iter().map(|&x| x as f64).sum::<f64>() / count as f64,
            worst_ns: sorted[count - 1],
            p99_ns: sorted[p99_idx],
            samples_ns,
        }
    }

    pub fn mean_ms(&self) -> f64 {
        self.mean_ns * 1e-6
    }

    pub fn worst_ms(&self) -> f64 {
        self.worst_ns as f64 * 1e-6
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub strategy: String,
    pub steps: Vec<StepRecord>,
    pub total_energy_kwh: f64,
    /// Savings relative to the comparison baseline (%), filled by [`compare`].
    pub savings_pct: Option<f64>,
    pub gear_shifts: usize,
    /// Steps where the chosen gear could not serve the plant and the lowest
    /// feasible gear was engaged instead.
    pub feasibility_overrides: usize,
    pub timing: TimingStats,
}

impl SimReport {
    pub fn total_energy_j(&self) -> f64 {
        self.total_energy_kwh * J_PER_KWH
    }

    pub fn gears(&self) -> impl Iterator<Item = Gear> + '_ {
        self.steps.iter().map(|r| r.gear)
    }

    pub fn write_steps_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.steps {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Cycle, accelerations and horizon shared by every step of a run.
pub struct SimContext<'a> {
    pub cycle: &'a DrivingCycle,
    pub accel: Vec<f64>,
    pub horizon: usize,
    pub pt: &'a Powertrain,
}

impl<'a> SimContext<'a> {
    pub fn new(cycle: &'a DrivingCycle, horizon: usize, pt: &'a Powertrain) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParams(
                "horizon must be at least one step".into(),
            ));
        }
        Ok(Self {
            accel: derive_accel(cycle)?,
            cycle,
            horizon,
            pt,
        })
    }

    /// Horizon starting at cycle index `k`, padded past the end.
    pub fn scenario(&self, k: usize, x0: f64) -> Scenario {
        Scenario::from_cycle(self.cycle, &self.accel, k, self.horizon, x0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDecision {
    pub gear: Gear,
    pub solve_time: Duration,
}

/// Queries `strategy` for the gear at cycle index `k`.
pub fn mpc_step(
    k: usize,
    energy: f64,
    ctx: &SimContext<'_>,
    strategy: &mut Strategy,
) -> Result<StepDecision> {
    if k >= ctx.cycle.len() {
        return Err(Error::Shape(format!(
            "step {k} is past the end of a {}-sample cycle",
            ctx.cycle.len()
        )));
    }
    let s = ctx.scenario(k, energy);
    let start = Instant::now();
    let gear = strategy.decide(&s, ctx.pt).map_err(|e| Error::Simulation {
        step: k,
        source: Box::new(e),
    })?;
    Ok(StepDecision {
        gear,
        solve_time: start.elapsed(),
    })
}

fn first_feasible_gear(s: &Scenario, pt: &Powertrain) -> Result<Option<Gear>> {
    for i in 0..pt.n_gears() {
        let g = Gear::from_index(i);
        if let ModePower::Feasible(_) = ocp::mode_power(s, 0, g, pt)? {
            return Ok(Some(g));
        }
    }
    Ok(None)
}

/// Runs `strategy` over every sample of `cycle`, charging energy with the
/// efficiency map.
pub fn simulate_cycle(
    cycle: &DrivingCycle,
    mut strategy: Strategy,
    horizon: usize,
    pt: &Powertrain,
) -> Result<SimReport> {
    let ctx = SimContext::new(cycle, horizon, pt)?;
    let dt = cycle.dt();
    let (vehicle, motor) = (&pt.vehicle, &pt.motor);
    let mut energy = 0.0;
    let mut steps = Vec::with_capacity(cycle.len());
    let mut times = Vec::with_capacity(cycle.len());
    let mut overrides = 0;

    for k in 0..cycle.len() {
        let decision = mpc_step(k, energy, &ctx, &mut strategy)?;
        times.push(decision.solve_time.as_nanos() as u64);
        let abort = |e: Error| Error::Simulation {
            step: k,
            source: Box::new(e),
        };

        let s = ctx.scenario(k, energy);
        let mut gear = decision.gear;
        if ocp::mode_power(&s, 0, gear, pt)
            .map_err(abort)?
            .feasible()
            .is_none()
        {
            gear = first_feasible_gear(&s, pt)
                .map_err(abort)?
                .ok_or_else(|| abort(Error::InfeasibleScenario))?;
            overrides += 1;
        }

        let (v, a, alpha) = (cycle.v[k], ctx.accel[k], cycle.alpha[k]);
        let force = required_traction_force(v, a, alpha, vehicle).map_err(abort)?;
        let split = torque_split(force, gear, v, vehicle, motor).map_err(abort)?;
        let n_m = motor_speed(v, gear, vehicle, motor).map_err(abort)?;
        let p_m = motor_power_map(n_m, split.t_m, motor).map_err(abort)?;
        energy += p_m * dt;
        steps.push(StepRecord {
            t: cycle.t[k],
            v,
            a,
            gear,
            t_m: split.t_m,
            t_b: split.t_b,
            n_m,
            p_m,
            w: energy,
        });
    }

    let gear_shifts = steps.windows(2).filter(|w| w[0].gear != w[1].gear).count();
    Ok(SimReport {
        strategy: strategy.name().to_string(),
        total_energy_kwh: energy / J_PER_KWH,
        savings_pct: None,
        gear_shifts,
        feasibility_overrides: overrides,
        timing: TimingStats::from_samples(times),
        steps,
    })
}

/// One line of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub energy_kwh: f64,
    pub savings_pct: f64,
    pub mean_ms: f64,
    pub worst_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub reports: Vec<SimReport>,
}

impl Comparison {
    /// `method,energy_kwh,savings_pct,mean_ms,worst_ms`
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn report(&self, method: &str) -> Option<&SimReport> {
        self.reports.iter().find(|r| r.strategy == method)
    }
}

pub fn savings_pct(baseline_kwh: f64, energy_kwh: f64) -> f64 {
    100.0 * (baseline_kwh - energy_kwh) / baseline_kwh
}

/// Simulates every strategy; the first one is the savings baseline.
pub fn compare(
    cycle: &DrivingCycle,
    strategies: Vec<Strategy>,
    horizon: usize,
    pt: &Powertrain,
) -> Result<Comparison> {
    if strategies.len() < 2 {
        return Err(Error::InvalidParams(
            "a comparison needs a baseline and at least one other strategy".into(),
        ));
    }
    let mut reports = strategies
        .into_iter()
        .map(|s| simulate_cycle(cycle, s, horizon, pt))
        .collect::<Result<Vec<_>>>()?;
    let baseline = reports[0].total_energy_kwh;
    let rows = reports
        .iter_mut()
        .map(|r| {
            let pct = savings_pct(baseline, r.total_energy_kwh);
            r.savings_pct = Some(pct);
            ComparisonRow {
                method: r.strategy.clone(),
                energy_kwh: r.total_energy_kwh,
                savings_pct: pct,
                mean_ms: r.timing.mean_ms(),
                worst_ms: r.timing.worst_ms(),
            }
        })
        .collect();
    Ok(Comparison { rows, reports })
}

/// Wall-clock statistics of `strategy`'s solve over `windows`, repeated
/// `repetitions` times after one untimed warm-up pass.
pub fn bench_solve_time(
    strategy: &Strategy,
    windows: &[Scenario],
    repetitions: usize,
    pt: &Powertrain,
) -> Result<TimingStats> {
    if repetitions == 0 || windows.is_empty() {
        return Err(Error::InvalidParams(
            "benchmark needs at least one window and one repetition".into(),
        ));
    }
    let mut strategy = strategy.clone();
    for s in windows.iter().take(16) {
        std::hint::black_box(strategy.decide(s, pt)?);
    }
    let mut samples = Vec::with_capacity(windows.len() * repetitions);
    for _ in 0..repetitions {
        for s in windows {
            let start = Instant::now();
            let gear = strategy.decide(std::hint::black_box(s), pt)?;
            samples.push(start.elapsed().as_nanos() as u64);
            std::hint::black_box(gear);
        }
    }
    Ok(TimingStats::from_samples(samples))
}

/// Open-loop optimality gap of the rounded network plan on each window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowGap {
    pub exact_j: f64,
    pub nn_j: f64,
}

impl WindowGap {
    pub fn gap_j(&self) -> f64 {
        self.nn_j - self.exact_j
    }
}

pub fn window_gaps(
    windows: &[Scenario],
    params: &MlpParams,
    pt: &Powertrain,
) -> Result<Vec<WindowGap>> {
    windows
        .iter()
        .map(|s| {
            let exact_j = exhaustive_solve(s, pt)?.x_n;
            let plan = round_sos1(&nn::forward(s, params)?);
            let one_hot = ocp::RelaxedPlan::one_hot(&plan, pt.n_gears())?;
            let nn_j = ocp::rollout(s, &one_hot, pt)?.terminal();
            Ok(WindowGap { exact_j, nn_j })
        })
        .collect()
}

/// Total excess energy of the network plans over the exact ones, relative
/// to the total absolute exact energy.
pub fn relative_gap(gaps: &[WindowGap]) -> f64 {
    let excess: f64 = gaps.iter().map(WindowGap::gap_j).sum();
    let scale: f64 = gaps.iter().map(|g| g.exact_j.abs()).sum();
    excess / scale
}
