//! Run configuration: one JSON document with sections `vehicle`, `motor`,
//! `horizon`, `network`, `train` and `rule_based`, plus the root seed and
//! artifact paths. Every field has a default, so `{}` is a valid config.
//!
//! ```
//! let cfg = ecogear::config::RunConfig::from_json(r#"{"horizon": {"N": 6}, "seed": 7}"#).unwrap();
//! assert_eq!(cfg.horizon.n, 6);
//! assert_eq!(cfg.horizon.dt, 1.0);
//! assert_eq!(cfg.net_config().input_dim(), 12);
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cycle::{gen_nedc, load_cycle, DrivingCycle};
use crate::error::{Error, Result};
use crate::nn::{NetConfig, TrainConfig};
use crate::ocp::RuleBased;
use crate::vehicle::{FitGrid, MotorModel, Powertrain, VehicleParams};

/// Name that selects the built-in cycle instead of a CSV path.
pub const NEDC: &str = "nedc";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HorizonConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub dt: f64,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self { n: 8, dt: 1.0 }
    }
}

/// Network shape apart from the horizon and gear count, which come from
/// the other sections.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Soft-argmax sharpness K.
    pub k_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let d = NetConfig::default();
        Self {
            hidden_layers: d.hidden_layers,
            hidden_width: d.hidden_width,
            k_scale: d.k_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Vehicle JSON replacing the inline `vehicle` section.
    pub vehicle: Option<PathBuf>,
    /// Motor JSON replacing the inline `motor` section.
    pub motor: Option<PathBuf>,
    /// Cycle CSV, or `nedc`.
    pub cycle: String,
    /// Trained network read by `compare` and `bench`.
    pub params: Option<PathBuf>,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            vehicle: None,
            motor: None,
            cycle: NEDC.to_string(),
            params: None,
            report_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub vehicle: VehicleParams,
    pub motor: MotorModel,
    pub horizon: HorizonConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub rule_based: RuleBased,
    /// Stride between consecutive training windows.
    pub window_stride: usize,
    pub bench_repetitions: usize,
    pub seed: u64,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            motor: MotorModel::default(),
            horizon: HorizonConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            rule_based: RuleBased::default(),
            window_stride: 1,
            bench_repetitions: 3,
            seed: 42,
            paths: Paths::default(),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidParams(format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Parses and validates a config document. Paths inside it are left as
    /// written.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative vehicle, motor and cycle paths are
    /// resolved against the file's directory and the referenced vehicle and
    /// motor documents are loaded in place of the inline sections.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParams(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &Path| {
            if p.is_relative() {
                base.join(p)
            } else {
                p.to_path_buf()
            }
        };
        if let Some(p) = cfg.paths.vehicle.take() {
            let p = resolve(&p);
            cfg.vehicle = read_json(&p)?;
            cfg.paths.vehicle = Some(p);
        }
        if let Some(p) = cfg.paths.motor.take() {
            let p = resolve(&p);
            cfg.motor = read_json(&p)?;
            cfg.paths.motor = Some(p);
        }
        if !cfg.paths.cycle.eq_ignore_ascii_case(NEDC) {
            cfg.paths.cycle = resolve(Path::new(&cfg.paths.cycle))
                .to_string_lossy()
                .into_owned();
        }
        if let Some(p) = cfg.paths.params.take() {
            cfg.paths.params = Some(resolve(&p));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon.n == 0 {
            return Err(Error::InvalidParams("horizon.N must be at least 1".into()));
        }
        if !(self.horizon.dt > 0.0) {
            return Err(Error::InvalidParams("horizon.dt must be positive".into()));
        }
        if self.window_stride == 0 {
            return Err(Error::InvalidParams(
                "window_stride must be at least 1".into(),
            ));
        }
        self.vehicle.validate()?;
        self.motor.validate()?;
        self.train.validate()?;
        self.rule_based.validate()?;
        self.net_config().validate()
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            hidden_layers: self.network.hidden_layers,
            hidden_width: self.network.hidden_width,
            horizon: self.horizon.n,
            modes: self.vehicle.n_gears(),
            k_scale: self.network.k_scale,
        }
    }

    /// Powertrain with the surrogate fitted unless the motor section
    /// already carries one.
    pub fn powertrain(&self) -> Result<Powertrain> {
        Powertrain::new(
            self.vehicle.clone(),
            self.motor.clone(),
            &FitGrid::default(),
        )
    }

    /// The configured cycle; must be sampled at `horizon.dt`.
    pub fn cycle(&self) -> Result<DrivingCycle> {
        let c = if self.paths.cycle.eq_ignore_ascii_case(NEDC) {
            gen_nedc(self.horizon.dt)?
        } else {
            let path = Path::new(&self.paths.cycle);
            load_cycle(fs::File::open(path).map_err(|e| Error::io(path, e))?)?
        };
        if (c.dt() - self.horizon.dt).abs() > 1e-9 * self.horizon.dt {
            return Err(Error::Cycle(format!(
                "cycle sampled every {} s but horizon.dt is {} s",
                c.dt(),
                self.horizon.dt
            )));
        }
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
