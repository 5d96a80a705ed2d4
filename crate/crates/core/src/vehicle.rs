//! Longitudinal EV model: road loads, driveline torque arithmetic, the motor
//! power map and its polynomial surrogate, and the energy integrator.
//!
//! Sign conventions: forces and torques are positive when driving the
//! vehicle forward; electrical power is positive when the battery
//! discharges. Motor speed is in rpm throughout, vehicle speed in m/s.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// rpm · N·m → W.
pub const RPM_TO_RAD_S: f64 = PI / 30.0;

/// A 1-based gear number. Gear 1 carries the highest ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gear(usize);

impl Gear {
    pub const FIRST: Gear = Gear(1);

    /// Panics on zero; gear numbers start at 1.
    pub fn new(number: usize) -> Self {
        assert!(number >= 1, "gear numbers start at 1");
        Gear(number)
    }

    pub fn from_index(index: usize) -> Self {
        Gear(index + 1)
    }

    pub fn number(self) -> usize {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for Gear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Chassis and driveline constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Vehicle mass (kg).
    pub mass: f64,
    /// Rotating-mass conversion coefficient.
    pub delta: f64,
    /// Rolling resistance factor.
    pub f: f64,
    /// Gravitational acceleration (m/s²).
    pub g: f64,
    /// Lumped aerodynamic coefficient ρ·C_d·A_f/2 (kg/m).
    #[serde(rename = "Av")]
    pub av: f64,
    /// Transmission efficiency.
    pub eta_t: f64,
    /// Final drive ratio.
    #[serde(rename = "I0")]
    pub final_drive: f64,
    /// Gear ratios, strictly decreasing.
    pub gears: Vec<f64>,
    /// Wheel radius (m).
    pub r_w: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1533.0,
            delta: 1.05,
            f: 0.01,
            g: 9.81,
            av: 0.45864,
            eta_t: 0.96,
            final_drive: 3.94,
            gears: vec![3.4, 1.5],
            r_w: 0.31,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        if !(self.delta >= 1.0) {
            return bad("delta must be at least 1");
        }
        if !(self.eta_t > 0.0 && self.eta_t <= 1.0) {
            return bad("eta_t must lie in (0, 1]");
        }
        if !(self.av >= 0.0) {
            return bad("Av must be non-negative");
        }
        if !(self.r_w > 0.0) {
            return bad("r_w must be positive");
        }
        if !(self.final_drive > 0.0) {
            return bad("I0 must be positive");
        }
        if !(self.f >= 0.0 && self.g > 0.0) {
            return bad("f must be non-negative and g positive");
        }
        if self.gears.is_empty() {
            return bad("at least one gear ratio is required");
        }
        if self.gears.iter().any(|&r| !(r > 0.0)) {
            return bad("gear ratios must be positive");
        }
        if self.gears.windows(2).any(|w| w[1] >= w[0]) {
            return bad("gear ratios must be strictly decreasing");
        }
        Ok(())
    }

    pub fn n_gears(&self) -> usize {
        self.gears.len()
    }

    pub fn gear_ratio(&self, gear: Gear) -> Result<f64> {
        self.gears
            .get(gear.index())
            .copied()
            .ok_or(Error::InvalidGear {
                gear: gear.number(),
                n_gears: self.gears.len(),
            })
    }

    /// Factor k with n_m = k · I_g · v.
    pub fn speed_factor(&self) -> f64 {
        30.0 * self.final_drive / (PI * self.r_w)
    }
}

/// Aerodynamic drag Av·v².
pub fn air_resistance(v: f64, p: &VehicleParams) -> Result<f64> {
    if v < 0.0 {
        return Err(Error::Domain {
            what: "speed",
            value: v,
        });
    }
    Ok(p.av * v * v)
}

/// Wheel force needed to follow acceleration `a` at speed `v` on slope
/// `alpha`. Negative values are a braking demand.
pub fn required_traction_force(v: f64, a: f64, alpha: f64, p: &VehicleParams) -> Result<f64> {
    let drag = air_resistance(v, p)?;
    Ok(p.delta * p.mass * a + drag + p.mass * p.g * (alpha.sin() + p.f * alpha.cos()))
}

/// Motor speed in rpm. Returns [`Error::Overspeed`] when the result exceeds
/// `n_max`; use [`motor_speed_unchecked`] when no limit applies.
pub fn motor_speed(v: f64, gear: Gear, p: &VehicleParams, mm: &MotorModel) -> Result<f64> {
    let n_m = motor_speed_unchecked(v, gear, p)?;
    if n_m > mm.n_max {
        return Err(Error::Overspeed {
            n_m,
            n_max: mm.n_max,
        });
    }
    Ok(n_m)
}

pub fn motor_speed_unchecked(v: f64, gear: Gear, p: &VehicleParams) -> Result<f64> {
    if v < 0.0 {
        return Err(Error::Domain {
            what: "speed",
            value: v,
        });
    }
    Ok(p.speed_factor() * p.gear_ratio(gear)? * v)
}

/// Motor and friction-brake torques for one gear.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorqueSplit {
    /// Motor torque (N·m); negative while regenerating.
    pub t_m: f64,
    /// Friction brake torque at the wheel (N·m), never positive.
    pub t_b: f64,
    pub gear: Gear,
}

impl TorqueSplit {
    /// Wheel force reassembled from the split.
    pub fn wheel_force(&self, p: &VehicleParams) -> Result<f64> {
        let ig = p.gear_ratio(self.gear)?;
        Ok((self.t_m * ig * p.final_drive * p.eta_t + self.t_b) / p.r_w)
    }
}

/// Splits a wheel-force demand between the motor and the friction brakes.
/// Braking demand goes to the motor until it reaches `-T_max`; the
/// remainder lands on the friction brakes.
pub fn torque_split(
    f_req: f64,
    gear: Gear,
    v: f64,
    p: &VehicleParams,
    mm: &MotorModel,
) -> Result<TorqueSplit> {
    motor_speed(v, gear, p, mm)?;
    let ratio = p.gear_ratio(gear)? * p.final_drive * p.eta_t;
    let t_wheel = f_req * p.r_w;
    if f_req >= 0.0 {
        let t_m = t_wheel / ratio;
        if t_m > mm.t_max {
            return Err(Error::TorqueLimit {
                t_m,
                t_max: mm.t_max,
            });
        }
        Ok(TorqueSplit {
            t_m,
            t_b: 0.0,
            gear,
        })
    } else {
        let t_m = (t_wheel / ratio).max(-mm.t_max);
        // min() keeps rounding noise from producing a positive brake torque.
        let t_b = (t_wheel - t_m * ratio).min(0.0);
        Ok(TorqueSplit { t_m, t_b, gear })
    }
}

/// Willans-style loss polynomial c0 + c1·n + c2·n² + c3·T² (W, rpm, N·m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossCoeffs {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl LossCoeffs {
    pub fn eval(&self, n_m: f64, t_m: f64) -> f64 {
        self.c0 + self.c1 * n_m + self.c2 * n_m * n_m + self.c3 * t_m * t_m
    }
}

/// Coefficients of the 3×3 power polynomial in both of its forms.
///
/// `rho[i][j]` multiplies `T^i · n^j`; `phi[i][j]` multiplies
/// `T^i · (I_g·v)^j`, so `phi[i][j] = rho[i][j] · k^j` with `k` the
/// vehicle's speed factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPoly {
    pub rho: [[f64; 3]; 3],
    pub phi: [[f64; 3]; 3],
}

impl PowerPoly {
    pub fn from_rho(rho: [[f64; 3]; 3], p: &VehicleParams) -> Self {
        let k = p.speed_factor();
        let mut phi = [[0.0; 3]; 3];
        for (phi_row, rho_row) in phi.iter_mut().zip(&rho) {
            for (j, (phi_ij, rho_ij)) in phi_row.iter_mut().zip(rho_row).enumerate() {
                *phi_ij = rho_ij * k.powi(j as i32);
            }
        }
        Self { rho, phi }
    }

    /// Power as a function of motor speed and torque.
    pub fn eval_motor(&self, n_m: f64, t_m: f64) -> f64 {
        eval_poly3(&self.rho, t_m, n_m)
    }

    /// Power as a function of vehicle speed, gear ratio and torque.
    pub fn eval_vehicle(&self, v: f64, gear_ratio: f64, t_m: f64) -> f64 {
        eval_poly3(&self.phi, t_m, v * gear_ratio)
    }
}

fn eval_poly3(c: &[[f64; 3]; 3], t: f64, s: f64) -> f64 {
    let row = |r: &[f64; 3]| r[0] + s * (r[1] + s * r[2]);
    row(&c[0]) + t * (row(&c[1]) + t * row(&c[2]))
}

/// Motor limits, efficiency surface, and (once fitted) the power polynomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotorModel {
    #[serde(rename = "T_max")]
    pub t_max: f64,
    pub n_max: f64,
    pub loss_coeffs: LossCoeffs,
    /// Efficiency floor applied at very light load.
    #[serde(default = "default_eta_min")]
    pub eta_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly: Option<PowerPoly>,
}

fn default_eta_min() -> f64 {
    0.2
}

impl Default for MotorModel {
    fn default() -> Self {
        Self {
            t_max: 250.0,
            n_max: 12000.0,
            loss_coeffs: LossCoeffs {
                c0: 200.0,
                c1: 0.05,
                c2: 2.0e-5,
                c3: 0.3,
            },
            eta_min: default_eta_min(),
            poly: None,
        }
    }
}

impl MotorModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if !(self.t_max > 0.0 && self.n_max > 0.0) {
            return bad("motor T_max and n_max must be positive");
        }
        let c = &self.loss_coeffs;
        if !(c.c0 > 0.0 && c.c1 >= 0.0 && c.c2 >= 0.0 && c.c3 >= 0.0) {
            return bad("loss coefficients need c0 > 0 and c1, c2, c3 >= 0");
        }
        if !(self.eta_min > 0.0 && self.eta_min < 1.0) {
            return bad("eta_min must lie in (0, 1)");
        }
        Ok(())
    }

    /// Efficiency η_m(n, T) = |P|/(|P| + losses), floored at `eta_min`.
    pub fn efficiency(&self, n_m: f64, t_m: f64) -> f64 {
        let p_mech = (t_m * n_m * RPM_TO_RAD_S).abs();
        if p_mech == 0.0 {
            return self.eta_min;
        }
        let eta = p_mech / (p_mech + self.loss_coeffs.eval(n_m, t_m));
        eta.max(self.eta_min)
    }

    /// Largest mechanical power on the admissible box.
    pub fn peak_mech_power(&self) -> f64 {
        self.t_max * self.n_max * RPM_TO_RAD_S
    }

    fn check_box(&self, n_m: f64, t_m: f64) -> Result<()> {
        if !(n_m >= 0.0) {
            return Err(Error::Domain {
                what: "motor speed",
                value: n_m,
            });
        }
        if n_m > self.n_max {
            return Err(Error::Overspeed {
                n_m,
                n_max: self.n_max,
            });
        }
        if t_m.abs() > self.t_max {
            return Err(Error::TorqueLimit {
                t_m,
                t_max: self.t_max,
            });
        }
        Ok(())
    }
}

/// Electrical power drawn by the motor according to the efficiency map.
pub fn motor_power_map(n_m: f64, t_m: f64, mm: &MotorModel) -> Result<f64> {
    mm.check_box(n_m, t_m)?;
    Ok(motor_power_map_unchecked(n_m, t_m, mm))
}

pub(crate) fn motor_power_map_unchecked(n_m: f64, t_m: f64, mm: &MotorModel) -> f64 {
    let p_mech = t_m * n_m * RPM_TO_RAD_S;
    let eta = mm.efficiency(n_m, t_m);
    if p_mech >= 0.0 {
        p_mech / eta
    } else {
        p_mech * eta
    }
}

/// Uniform sampling grid over `[0, n_max] × [-T_max, T_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitGrid {
    pub speed_points: usize,
    pub torque_points: usize,
}

impl Default for FitGrid {
    fn default() -> Self {
        Self {
            speed_points: 41,
            torque_points: 41,
        }
    }
}

impl FitGrid {
    pub fn samples(&self, mm: &MotorModel) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (ns, nt) = (self.speed_points, self.torque_points);
        let (n_max, t_max) = (mm.n_max, mm.t_max);
        (0..nt).flat_map(move |it| {
            let t = -t_max + 2.0 * t_max * it as f64 / (nt - 1) as f64;
            (0..ns).map(move |is| (n_max * is as f64 / (ns - 1) as f64, t))
        })
    }
}

/// Residual statistics of a power polynomial fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub samples: usize,
    pub rms_residual: f64,
    pub mean_abs_power: f64,
    pub max_abs_residual: f64,
}

impl FitReport {
    pub fn relative_rms(&self) -> f64 {
        self.rms_residual / self.mean_abs_power
    }
}

/// Least-squares fit of the 3×3 power polynomial to the efficiency map.
///
/// The regression runs on speed and torque scaled to `[0, 1]` and
/// `[-1, 1]`; otherwise the `T²n²` column sits twelve orders of magnitude
/// above the constant one.
pub fn fit_power_poly(
    mm: &MotorModel,
    grid: &FitGrid,
    p: &VehicleParams,
) -> Result<(MotorModel, FitReport)> {
    if grid.speed_points < 9 || grid.torque_points < 9 {
        return Err(Error::Fit(format!(
            "grid needs at least 9 points per axis, got {}x{}",
            grid.speed_points, grid.torque_points
        )));
    }
    let samples: Vec<(f64, f64)> = grid.samples(mm).collect();
    let rows = samples.len();
    let mut design = DMatrix::<f64>::zeros(rows, 9);
    let mut target = DVector::<f64>::zeros(rows);
    for (r, &(n, t)) in samples.iter().enumerate() {
        let (s, tau) = (n / mm.n_max, t / mm.t_max);
        for i in 0..3 {
            for j in 0..3 {
                design[(r, 3 * i + j)] = tau.powi(i as i32) * s.powi(j as i32);
            }
        }
        target[r] = motor_power_map_unchecked(n, t, mm);
    }

    let svd = design.clone().svd(true, true);
    let (smax, smin) = svd
        .singular_values
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| {
            (hi.max(s), lo.min(s))
        });
    if !(smin > smax * 1e-12) {
        return Err(Error::Fit(format!(
            "rank-deficient design matrix (singular values {smin:e}..{smax:e})"
        )));
    }
    let coef = svd
        .solve(&target, 0.0)
        .map_err(|e| Error::Fit(e.to_string()))?;

    let mut rho = [[0.0; 3]; 3];
    for (i, row) in rho.iter_mut().enumerate() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = coef[3 * i + j] / (mm.t_max.powi(i as i32) * mm.n_max.powi(j as i32));
        }
    }

    let residual = &design * &coef - &target;
    let report = FitReport {
        samples: rows,
        rms_residual: (residual.norm_squared() / rows as f64).sqrt(),
        mean_abs_power: target.iter().map(|y| y.abs()).sum::<f64>() / rows as f64,
        max_abs_residual: residual.amax(),
    };
    let mut fitted = mm.clone();
    fitted.poly = Some(PowerPoly::from_rho(rho, p));
    Ok((fitted, report))
}

/// Electrical power from the fitted polynomial in vehicle-speed form.
pub fn motor_power_poly(
    v: f64,
    gear: Gear,
    t_m: f64,
    mm: &MotorModel,
    p: &VehicleParams,
) -> Result<f64> {
    let poly = mm.poly.as_ref().ok_or(Error::NotFitted)?;
    Ok(poly.eval_vehicle(v, p.gear_ratio(gear)?, t_m))
}

/// Forward-Euler step of the energy state.
pub fn energy_step(x: f64, p_m: f64, dt: f64) -> f64 {
    debug_assert!(dt > 0.0);
    x + p_m * dt
}

/// Validated vehicle and fitted motor, bundled for the optimizers.
#[derive(Clone, Debug, PartialEq)]
pub struct Powertrain {
    pub vehicle: VehicleParams,
    pub motor: MotorModel,
    poly: PowerPoly,
}

impl Powertrain {
    /// Validates both parts and fits the power polynomial unless the motor
    /// already carries one.
    pub fn new(vehicle: VehicleParams, motor: MotorModel, grid: &FitGrid) -> Result<Self> {
        vehicle.validate()?;
        motor.validate()?;
        let motor = match motor.poly {
            Some(_) => motor,
            None => fit_power_poly(&motor, grid, &vehicle)?.0,
        };
        let poly = motor.poly.ok_or(Error::NotFitted)?;
        Ok(Self {
            vehicle,
            motor,
            poly,
        })
    }

    pub fn poly(&self) -> &PowerPoly {
        &self.poly
    }

    pub fn n_gears(&self) -> usize {
        self.vehicle.n_gears()
    }
}

impl Default for Powertrain {
    fn default() -> Self {
        Powertrain::new(
            VehicleParams::default(),
            MotorModel::default(),
            &FitGrid::default(),
        )
        .expect("default powertrain is valid")
    }
}
