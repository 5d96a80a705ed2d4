//! The outer-convexified gearshift problem.
//!
//! Each step `k` of a horizon chooses one of `n_b` gears. Writing the
//! choice as a row of selectors `b_{i,k}` turns the switched energy
//! dynamics into
//!
//! ```text
//! x_{k+1} = Σ_i b_{i,k} · f_i(x_k),    f_i(x) = x + P_{i,k}·Δt,    Σ_i b_{i,k} = 1
//! ```
//!
//! Relaxing `b` to `[0, 1]` makes the terminal energy `x_N` a smooth
//! (multilinear) function of the plan, which is what the neural optimizer
//! differentiates. The integer problem itself is small enough here
//! (`n_b^N = 256`) to solve exactly by enumeration.
//!
//! Because `f_i` adds a power that does not depend on `x`, `x_N` shifts by
//! exactly `c` when `x_0` does, and the optimal gear sequence does not
//! depend on `x_0` at all. Training windows therefore all start at zero.

use serde::{Deserialize, Serialize};

use crate::cycle::Scenario;
use crate::error::{Error, Result};
use crate::vehicle::{
    motor_speed_unchecked, required_traction_force, torque_split, Gear, Powertrain,
};

/// Largest allowed deviation of a plan row sum from 1.
pub const SOS1_TOL: f64 = 1e-9;

/// Power charged for a gear that cannot serve a step: ten times the peak
/// mechanical power of the motor box.
pub fn penalty_power(pt: &Powertrain) -> f64 {
    10.0 * pt.motor.peak_mech_power()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Infeasibility {
    Overspeed,
    TorqueLimit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModePower {
    Feasible(f64),
    Infeasible(Infeasibility),
}

impl ModePower {
    pub fn feasible(self) -> Option<f64> {
        match self {
            ModePower::Feasible(p) => Some(p),
            ModePower::Infeasible(_) => None,
        }
    }
}

/// Surrogate electrical power of gear `gear` at step `k` of `s`.
///
/// Gears that overspeed the motor or exceed its drive torque come back as
/// [`ModePower::Infeasible`]; only malformed inputs are errors.
pub fn mode_power(s: &Scenario, k: usize, gear: Gear, pt: &Powertrain) -> Result<ModePower> {
    if k >= s.horizon() {
        return Err(Error::Shape(format!(
            "step {k} outside horizon of {}",
            s.horizon()
        )));
    }
    let p = &pt.vehicle;
    let v = s.v_ref[k];
    let ratio = p.gear_ratio(gear)?;
    if motor_speed_unchecked(v, gear, p)? > pt.motor.n_max {
        return Ok(ModePower::Infeasible(Infeasibility::Overspeed));
    }
    let force = required_traction_force(v, s.a_ref[k], s.alpha_ref[k], p)?;
    let split = match torque_split(force, gear, v, p, &pt.motor) {
        Ok(split) => split,
        Err(Error::TorqueLimit { .. }) => {
            return Ok(ModePower::Infeasible(Infeasibility::TorqueLimit))
        }
        Err(Error::Overspeed { .. }) => return Ok(ModePower::Infeasible(Infeasibility::Overspeed)),
        Err(e) => return Err(e),
    };
    Ok(ModePower::Feasible(
        pt.poly().eval_vehicle(v, ratio, split.t_m),
    ))
}

/// Row-major `steps × modes` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMatrix {
    steps: usize,
    modes: usize,
    data: Vec<f64>,
}

impl StepMatrix {
    pub fn zeros(steps: usize, modes: usize) -> Self {
        Self {
            steps,
            modes,
            data: vec![0.0; steps * modes],
        }
    }

    pub fn from_vec(steps: usize, modes: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != steps * modes {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {steps}x{modes} matrix",
                data.len()
            )));
        }
        Ok(Self { steps, modes, data })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.data[k * self.modes + i]
    }

    pub fn set(&mut self, k: usize, i: usize, value: f64) {
        self.data[k * self.modes + i] = value;
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.modes..(k + 1) * self.modes]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.modes..(k + 1) * self.modes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.modes)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Relaxed selectors `b_{i,k} ∈ [0, 1]` with unit row sums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxedPlan(StepMatrix);

impl RelaxedPlan {
    pub fn new(b: StepMatrix) -> Result<Self> {
        check_sos1(&b)?;
        Ok(Self(b))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let modes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != modes) {
            return Err(Error::Shape("plan rows differ in length".into()));
        }
        Self::new(StepMatrix::from_vec(rows.len(), modes, rows.concat())?)
    }

    pub fn uniform(steps: usize, modes: usize) -> Self {
        Self(StepMatrix {
            steps,
            modes,
            data: vec![1.0 / modes as f64; steps * modes],
        })
    }

    pub fn one_hot(plan: &IntegerPlan, modes: usize) -> Result<Self> {
        let mut b = StepMatrix::zeros(plan.len(), modes);
        for (k, g) in plan.gears.iter().enumerate() {
            if g.index() >= modes {
                return Err(Error::InvalidGear {
                    gear: g.number(),
                    n_gears: modes,
                });
            }
            b.set(k, g.index(), 1.0);
        }
        Ok(Self(b))
    }

    pub(crate) fn from_matrix_unchecked(b: StepMatrix) -> Self {
        Self(b)
    }

    pub fn matrix(&self) -> &StepMatrix {
        &self.0
    }

    pub fn steps(&self) -> usize {
        self.0.steps
    }

    pub fn modes(&self) -> usize {
        self.0.modes
    }

    pub fn row(&self, k: usize) -> &[f64] {
        self.0.row(k)
    }
}

fn check_sos1(b: &StepMatrix) -> Result<()> {
    for (row, values) in b.rows().enumerate() {
        if let Some(x) = values.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Sos1 {
                row,
                msg: format!("entry {x} outside [0, 1]"),
            });
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SOS1_TOL {
            return Err(Error::Sos1 {
                row,
                msg: format!("row sums to {sum}"),
            });
        }
    }
    Ok(())
}

/// One gear per step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerPlan {
    pub gears: Vec<Gear>,
}

impl IntegerPlan {
    pub fn len(&self) -> usize {
        self.gears.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gears.is_empty()
    }
}

/// Per-step, per-gear surrogate powers with infeasible entries replaced by
/// the penalty power.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeTable {
    pub power: StepMatrix,
    pub infeasible: Vec<(usize, Gear, Infeasibility)>,
}

impl ModeTable {
    pub fn build(s: &Scenario, pt: &Powertrain) -> Result<Self> {
        let (steps, modes) = (s.horizon(), pt.n_gears());
        let penalty = penalty_power(pt);
        let mut power = StepMatrix::zeros(steps, modes);
        let mut infeasible = Vec::new();
        for k in 0..steps {
            for i in 0..modes {
                let gear = Gear::from_index(i);
                match mode_power(s, k, gear, pt)? {
                    ModePower::Feasible(p) => power.set(k, i, p),
                    ModePower::Infeasible(why) => {
                        power.set(k, i, penalty);
                        infeasible.push((k, gear, why));
                    }
                }
            }
        }
        Ok(Self { power, infeasible })
    }

    /// `x_N` of the convexified recursion for an arbitrary selector matrix
    /// (row sums are not assumed).
    pub fn terminal_energy(&self, x0: f64, dt: f64, b: &StepMatrix) -> f64 {
        let mut x = x0;
        for k in 0..b.steps() {
            x = b
                .row(k)
                .iter()
                .zip(self.power.row(k))
                .map(|(bi, pi)| bi * (x + pi * dt))
                .sum();
        }
        x
    }

    /// `∂x_N/∂b_{i,k} = f_i(x̄_k) · Π_{m>k} Σ_j b_{j,m}`.
    pub fn terminal_gradient(&self, x0: f64, dt: f64, b: &StepMatrix) -> StepMatrix {
        let (steps, modes) = (b.steps(), b.modes());
        let mut states = Vec::with_capacity(steps);
        let mut x = x0;
        for k in 0..steps {
            states.push(x);
            x = b
                .row(k)
                .iter()
                .zip(self.power.row(k))
                .map(|(bi, pi)| bi * (x + pi * dt))
                .sum();
        }
        let mut grad = StepMatrix::zeros(steps, modes);
        let mut tail = 1.0;
        for k in (0..steps).rev() {
            for i in 0..modes {
                grad.set(k, i, (states[k] + self.power.get(k, i) * dt) * tail);
            }
            tail *= b.row(k).iter().sum::<f64>();
        }
        grad
    }
}

/// Single-shooting trajectory of a plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    /// `N + 1` energy states (J), starting at the scenario's `x0`.
    pub x_traj: Vec<f64>,
    /// Selector-weighted power of each step (W).
    pub per_step_power: Vec<f64>,
    pub feasible: bool,
    /// Infeasible (step, gear) pairs that carry nonzero weight.
    pub infeasible_steps: Vec<(usize, Gear, Infeasibility)>,
}

impl RolloutResult {
    pub fn terminal(&self) -> f64 {
        self.x_traj[self.x_traj.len() - 1]
    }
}

fn check_shape(s: &Scenario, plan: &RelaxedPlan, pt: &Powertrain) -> Result<()> {
    if plan.steps() != s.horizon() || plan.modes() != pt.n_gears() {
        return Err(Error::Shape(format!(
            "plan is {}x{} but the scenario needs {}x{}",
            plan.steps(),
            plan.modes(),
            s.horizon(),
            pt.n_gears()
        )));
    }
    check_sos1(plan.matrix())
}

/// Rolls the convexified dynamics forward under `plan`.
pub fn rollout(s: &Scenario, plan: &RelaxedPlan, pt: &Powertrain) -> Result<RolloutResult> {
    check_shape(s, plan, pt)?;
    let table = ModeTable::build(s, pt)?;
    Ok(rollout_with_table(s, plan, &table))
}

pub(crate) fn rollout_with_table(
    s: &Scenario,
    plan: &RelaxedPlan,
    table: &ModeTable,
) -> RolloutResult {
    let mut x_traj = Vec::with_capacity(plan.steps() + 1);
    let mut per_step_power = Vec::with_capacity(plan.steps());
    let mut x = s.x0;
    x_traj.push(x);
    for k in 0..plan.steps() {
        let row = plan.row(k);
        let powers = table.power.row(k);
        per_step_power.push(row.iter().zip(powers).map(|(b, p)| b * p).sum());
        x = row
            .iter()
            .zip(powers)
            .map(|(b, p)| b * (x + p * s.dt))
            .sum();
        x_traj.push(x);
    }
    let infeasible_steps: Vec<_> = table
        .infeasible
        .iter()
        .filter(|(k, g, _)| plan.row(*k)[g.index()] > 0.0)
        .copied()
        .collect();
    RolloutResult {
        x_traj,
        per_step_power,
        feasible: infeasible_steps.is_empty(),
        infeasible_steps,
    }
}

/// Gradient of `x_N` with respect to every selector of `plan`.
pub fn rollout_grad(s: &Scenario, plan: &RelaxedPlan, pt: &Powertrain) -> Result<StepMatrix> {
    check_shape(s, plan, pt)?;
    let table = ModeTable::build(s, pt)?;
    Ok(table.terminal_gradient(s.x0, s.dt, plan.matrix()))
}

/// Terminal energy of an integer plan, or `None` if any step is infeasible.
pub fn rollout_integer(s: &Scenario, gears: &[Gear], pt: &Powertrain) -> Result<Option<f64>> {
    let mut x = s.x0;
    for (k, &g) in gears.iter().enumerate() {
        match mode_power(s, k, g, pt)? {
            ModePower::Feasible(p) => x += p * s.dt,
            ModePower::Infeasible(_) => return Ok(None),
        }
    }
    Ok(Some(x))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub plan: IntegerPlan,
    pub x_n: f64,
    /// Number of gear sequences enumerated.
    pub evaluated: usize,
}

/// Upper bound on `n_b^N` for [`exhaustive_solve`].
pub const MAX_ENUMERATION: usize = 1 << 20;

/// Globally optimal gear sequence by full enumeration.
///
/// Every one of the `n_b^N` sequences is rolled out; sequences with an
/// infeasible step are discarded. Sequences are visited in lexicographic
/// order and only a strict improvement replaces the incumbent, so ties go
/// to the lexicographically smallest sequence.
pub fn exhaustive_solve(s: &Scenario, pt: &Powertrain) -> Result<ExactSolution> {
    let (steps, modes) = (s.horizon(), pt.n_gears());
    let total = (0..steps).try_fold(1usize, |acc, _| acc.checked_mul(modes));
    let total = match total {
        Some(t) if t <= MAX_ENUMERATION => t,
        _ => {
            return Err(Error::InvalidParams(format!(
                "{modes}^{steps} plans is too many to enumerate"
            )))
        }
    };

    let mut digits = vec![0usize; steps];
    let mut gears = vec![Gear::FIRST; steps];
    let mut best: Option<(f64, Vec<Gear>)> = None;
    for _ in 0..total {
        for (g, &d) in gears.iter_mut().zip(&digits) {
            *g = Gear::from_index(d);
        }
        if let Some(x_n) = rollout_integer(s, &gears, pt)? {
            if best.as_ref().is_none_or(|(b, _)| x_n < *b) {
                best = Some((x_n, gears.clone()));
            }
        }
        // Odometer increment, last step fastest.
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < modes {
                break;
            }
            *d = 0;
        }
    }
    let (x_n, gears) = best.ok_or(Error::InfeasibleScenario)?;
    Ok(ExactSolution {
        plan: IntegerPlan { gears },
        x_n,
        evaluated: total,
    })
}

/// Speed-threshold schedule with hysteresis between the first two gears.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleBased {
    /// Upshift above this speed (km/h).
    pub v_up_kmh: f64,
    /// Downshift below this speed (km/h).
    pub v_down_kmh: f64,
}

impl Default for RuleBased {
    fn default() -> Self {
        Self {
            v_up_kmh: 24.0,
            v_down_kmh: 18.0,
        }
    }
}

impl RuleBased {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_down_kmh >= 0.0 && self.v_down_kmh <= self.v_up_kmh) {
            return Err(Error::InvalidParams(
                "rule_based needs 0 <= v_down_kmh <= v_up_kmh".into(),
            ));
        }
        Ok(())
    }

    /// Gear for speed `v` (m/s) given the gear currently engaged.
    pub fn next_gear(&self, v: f64, current: Gear) -> Gear {
        let kmh = v * 3.6;
        match current.number() {
            1 if kmh > self.v_up_kmh => Gear::new(2),
            2 if kmh < self.v_down_kmh => Gear::new(1),
            _ => current,
        }
    }
}

/// Per-step argmax; ties go to the lower gear.
pub fn round_sos1(plan: &RelaxedPlan) -> IntegerPlan {
    let gears = plan
        .matrix()
        .rows()
        .map(|row| {
            let mut best = 0;
            for (i, &b) in row.iter().enumerate().skip(1) {
                if b > row[best] {
                    best = i;
                }
            }
            Gear::from_index(best)
        })
        .collect();
    IntegerPlan { gears }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::{FitGrid, MotorModel, VehicleParams};
    use approx::assert_relative_eq;

    fn scenario(v: &[f64], a: &[f64]) -> Scenario {
        Scenario::new(0.0, v.to_vec(), a.to_vec(), vec![0.0; v.len()], 1.0).unwrap()
    }

    fn frictionless() -> Powertrain {
        let vehicle = VehicleParams {
            f: 0.0,
            ..VehicleParams::default()
        };
        Powertrain::new(vehicle, MotorModel::default(), &FitGrid::default()).unwrap()
    }

    #[test]
    fn standstill_power_is_the_idle_polynomial() {
        let pt = Powertrain::default();
        let s = scenario(&[0.0], &[0.0]);
        for i in 0..2 {
            let g = Gear::from_index(i);
            let p = mode_power(&s, 0, g, &pt).unwrap().feasible().unwrap();
            let split = torque_split(
                required_traction_force(0.0, 0.0, 0.0, &pt.vehicle).unwrap(),
                g,
                0.0,
                &pt.vehicle,
                &pt.motor,
            )
            .unwrap();
            let poly = pt.poly();
            let t = split.t_m;
            let idle = poly.phi[0][0] + poly.phi[1][0] * t + poly.phi[2][0] * t * t;
            assert_relative_eq!(p, idle, max_relative = 1e-12);
        }
    }

    #[test]
    fn first_gear_overspeeds_at_motorway_speed() {
        let pt = Powertrain::default();
        // n_m = k · 3.4 · v exceeds 12000 rpm once v > ~29.1 m/s.
        let s = scenario(&[31.0], &[0.0]);
        assert_eq!(
            mode_power(&s, 0, Gear::new(1), &pt).unwrap(),
            ModePower::Infeasible(Infeasibility::Overspeed)
        );
        assert!(mode_power(&s, 0, Gear::new(2), &pt)
            .unwrap()
            .feasible()
            .is_some());
    }

    #[test]
    fn gears_differ_at_generic_point() {
        let pt = Powertrain::default();
        let s = scenario(&[12.0], &[0.4]);
        let p1 = mode_power(&s, 0, Gear::new(1), &pt)
            .unwrap()
            .feasible()
            .unwrap();
        let p2 = mode_power(&s, 0, Gear::new(2), &pt)
            .unwrap()
            .feasible()
            .unwrap();
        assert!((p1 - p2).abs() > 10.0, "{p1} vs {p2}");
    }

    #[test]
    fn one_hot_rollout_sums_powers() {
        let pt = Powertrain::default();
        let s = scenario(&[5.0, 8.0, 11.0], &[1.0, 1.0, 0.5]);
        let gears = vec![Gear::new(1), Gear::new(2), Gear::new(1)];
        let plan = RelaxedPlan::one_hot(
            &IntegerPlan {
                gears: gears.clone(),
            },
            2,
        )
        .unwrap();
        let r = rollout(&s, &plan, &pt).unwrap();
        let expected: f64 = gears
            .iter()
            .enumerate()
            .map(|(k, &g)| mode_power(&s, k, g, &pt).unwrap().feasible().unwrap())
            .sum();
        assert_relative_eq!(r.terminal(), expected, max_relative = 1e-12);
        assert!(r.feasible);
        assert_eq!(r.x_traj.len(), 4);
        assert_eq!(r.x_traj[0], 0.0);
    }

    #[test]
    fn half_half_rollout_is_mean_of_pure_rollouts() {
        let pt = Powertrain::default();
        let s = scenario(&[5.0, 8.0, 11.0, 13.0], &[1.0, 1.0, 0.5, 0.0]);
        let pure = |g: usize| {
            let plan = RelaxedPlan::one_hot(
                &IntegerPlan {
                    gears: vec![Gear::new(g); 4],
                },
                2,
            )
            .unwrap();
            rollout(&s, &plan, &pt).unwrap().terminal()
        };
        let half = rollout(&s, &RelaxedPlan::uniform(4, 2), &pt)
            .unwrap()
            .terminal();
        assert_relative_eq!(half, 0.5 * (pure(1) + pure(2)), max_relative = 1e-12);
    }

    #[test]
    fn rollout_rejects_sos1_violation() {
        let pt = Powertrain::default();
        let s = scenario(&[5.0], &[0.0]);
        let b = StepMatrix::from_vec(1, 2, vec![0.7, 0.7]).unwrap();
        assert!(matches!(
            RelaxedPlan::new(b),
            Err(Error::Sos1 { row: 0, .. })
        ));
        let b = StepMatrix::from_vec(1, 2, vec![1.2, -0.2]).unwrap();
        assert!(RelaxedPlan::new(b).is_err());
        let wrong_len = RelaxedPlan::uniform(2, 2);
        assert!(matches!(rollout(&s, &wrong_len, &pt), Err(Error::Shape(_))));
    }

    #[test]
    fn infeasible_modes_carry_penalty() {
        let pt = Powertrain::default();
        let s = scenario(&[31.0, 31.0], &[0.0, 0.0]);
        let r = rollout(&s, &RelaxedPlan::uniform(2, 2), &pt).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.infeasible_steps.len(), 2);
        assert!(r.per_step_power[0] > 0.5 * penalty_power(&pt));
        let gear2 = RelaxedPlan::one_hot(
            &IntegerPlan {
                gears: vec![Gear::new(2); 2],
            },
            2,
        )
        .unwrap();
        assert!(rollout(&s, &gear2, &pt).unwrap().feasible);
    }

    #[test]
    fn gradient_of_one_hot_plan_is_mode_step() {
        let pt = Powertrain::default();
        let mut s = scenario(&[5.0, 9.0, 12.0], &[0.8, 0.3, 0.0]);
        s.x0 = 1234.0;
        let plan = RelaxedPlan::one_hot(
            &IntegerPlan {
                gears: vec![Gear::new(1), Gear::new(2), Gear::new(2)],
            },
            2,
        )
        .unwrap();
        let grad = rollout_grad(&s, &plan, &pt).unwrap();
        let traj = rollout(&s, &plan, &pt).unwrap().x_traj;
        for (k, g) in [(0, 0), (1, 1), (2, 1)] {
            let p = mode_power(&s, k, Gear::from_index(g), &pt)
                .unwrap()
                .feasible()
                .unwrap();
            assert_relative_eq!(grad.get(k, g), traj[k] + p * s.dt, max_relative = 1e-12);
        }
    }

    #[test]
    fn gradient_partials_equal_when_powers_tie() {
        // Standstill without rolling resistance: zero speed and torque in
        // both gears.
        let pt = frictionless();
        let s = scenario(&[0.0, 7.0], &[0.0, 0.2]);
        let grad = rollout_grad(&s, &RelaxedPlan::uniform(2, 2), &pt).unwrap();
        assert_relative_eq!(grad.get(0, 0), grad.get(0, 1), max_relative = 1e-9);
    }

    #[test]
    fn exhaustive_counts_candidates() {
        let pt = Powertrain::default();
        let s = scenario(&[4.0, 6.0, 8.0], &[1.0, 1.0, 1.0]);
        let sol = exhaustive_solve(&s, &pt).unwrap();
        assert_eq!(sol.evaluated, 8);
        assert_eq!(sol.plan.len(), 3);
    }

    #[test]
    fn exhaustive_prefers_lower_gear_on_ties() {
        // Zero speed and zero torque: both gears give exactly phi[0][0].
        let pt = frictionless();
        let s = scenario(&[0.0; 3], &[0.0; 3]);
        let sol = exhaustive_solve(&s, &pt).unwrap();
        assert_eq!(sol.plan.gears, vec![Gear::new(1); 3]);
    }

    #[test]
    fn exhaustive_reports_fully_infeasible_scenarios() {
        let pt = Powertrain::default();
        // 70 m/s overspeeds both gears.
        let s = scenario(&[70.0, 70.0], &[0.0, 0.0]);
        assert!(matches!(
            exhaustive_solve(&s, &pt),
            Err(Error::InfeasibleScenario)
        ));
    }

    #[test]
    fn rule_based_hysteresis() {
        let rb = RuleBased::default();
        let kmh = |x: f64| x / 3.6;
        assert_eq!(rb.next_gear(kmh(30.0), Gear::new(1)), Gear::new(2));
        assert_eq!(rb.next_gear(kmh(20.0), Gear::new(2)), Gear::new(2));
        assert_eq!(rb.next_gear(kmh(20.0), Gear::new(1)), Gear::new(1));
        assert_eq!(rb.next_gear(kmh(10.0), Gear::new(2)), Gear::new(1));
    }

    #[test]
    fn rounding() {
        let plan =
            RelaxedPlan::from_rows(&[vec![0.997, 0.003], vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
        assert_eq!(
            round_sos1(&plan).gears,
            vec![Gear::new(1), Gear::new(1), Gear::new(2)]
        );
        let ip = IntegerPlan {
            gears: vec![Gear::new(2), Gear::new(1)],
        };
        assert_eq!(round_sos1(&RelaxedPlan::one_hot(&ip, 2).unwrap()), ip);
    }
}
