//! Driving cycles and the horizon windows cut from them.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const KMH: f64 = 1.0 / 3.6;

/// (duration s, start speed km/h, end speed km/h); speed is linear inside a
/// segment. Gear-change pauses are folded in as constant-speed segments.
const ECE15: &[(u32, f64, f64)] = &[
    (11, 0.0, 0.0),
    (4, 0.0, 15.0),
    (8, 15.0, 15.0),
    (2, 15.0, 10.0),
    (3, 10.0, 0.0),
    (21, 0.0, 0.0),
    (5, 0.0, 15.0),
    (2, 15.0, 15.0),
    (5, 15.0, 32.0),
    (24, 32.0, 32.0),
    (8, 32.0, 10.0),
    (3, 10.0, 0.0),
    (21, 0.0, 0.0),
    (5, 0.0, 15.0),
    (2, 15.0, 15.0),
    (9, 15.0, 35.0),
    (2, 35.0, 35.0),
    (8, 35.0, 50.0),
    (12, 50.0, 50.0),
    (8, 50.0, 35.0),
    (13, 35.0, 35.0),
    (2, 35.0, 35.0),
    (7, 35.0, 10.0),
    (3, 10.0, 0.0),
    (7, 0.0, 0.0),
];

const EXTRA_URBAN: &[(u32, f64, f64)] = &[
    (20, 0.0, 0.0),
    (5, 0.0, 15.0),
    (2, 15.0, 15.0),
    (9, 15.0, 35.0),
    (2, 35.0, 35.0),
    (8, 35.0, 50.0),
    (2, 50.0, 50.0),
    (13, 50.0, 70.0),
    (50, 70.0, 70.0),
    (8, 70.0, 50.0),
    (69, 50.0, 50.0),
    (13, 50.0, 70.0),
    (50, 70.0, 70.0),
    (35, 70.0, 100.0),
    (30, 100.0, 100.0),
    (20, 100.0, 120.0),
    (10, 120.0, 120.0),
    (16, 120.0, 80.0),
    (8, 80.0, 50.0),
    (10, 50.0, 0.0),
    (20, 0.0, 0.0),
];

/// Uniformly sampled speed (and slope) profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingCycle {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl DrivingCycle {
    /// Builds a cycle from raw samples, checking length, spacing and sign.
    pub fn new(t: Vec<f64>, v: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        if t.len() != v.len() || t.len() != alpha.len() {
            return Err(Error::Cycle(format!(
                "column lengths differ: t={}, v={}, alpha={}",
                t.len(),
                v.len(),
                alpha.len()
            )));
        }
        if t.len() < 2 {
            return Err(Error::Cycle("at least two samples are required".into()));
        }
        let dt = t[1] - t[0];
        if !(dt > 0.0) {
            return Err(Error::Cycle("time must be strictly increasing".into()));
        }
        for k in 1..t.len() {
            if ((t[k] - t[k - 1]) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::Cycle(format!("non-uniform time step at sample {k}")));
            }
        }
        if let Some(k) = v.iter().position(|&x| !(x >= 0.0)) {
            return Err(Error::Cycle(format!("negative speed at sample {k}")));
        }
        Ok(Self { t, v, alpha })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    pub fn duration(&self) -> f64 {
        self.t[self.len() - 1] - self.t[0]
    }

    /// Trapezoidal distance in metres.
    pub fn distance(&self) -> f64 {
        let dt = self.dt();
        self.v.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum()
    }

    /// Writes `t,v,alpha` CSV.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "v", "alpha"])?;
        for k in 0..self.len() {
            w.serialize((self.t[k], self.v[k], self.alpha[k]))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Parses a `t,v[,alpha]` CSV (SI units). Errors carry the 1-based file
/// line, counting the header as line 1.
pub fn load_cycle<R: Read>(source: R) -> Result<DrivingCycle> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(ti), Some(vi)) = (col("t"), col("v")) else {
        return Err(Error::CycleParse {
            line: 1,
            msg: "header must name columns t and v".into(),
        });
    };
    let ai = col("alpha");

    let (mut t, mut v, mut alpha): (Vec<f64>, Vec<f64>, Vec<f64>) =
        (Vec::new(), Vec::new(), Vec::new());
    for (row, record) in rdr.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| Error::CycleParse {
            line,
            msg: e.to_string(),
        })?;
        let field = |i: usize, name: &str| -> Result<f64> {
            let raw = record.get(i).ok_or_else(|| Error::CycleParse {
                line,
                msg: format!("missing {name}"),
            })?;
            raw.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::CycleParse {
                    line,
                    msg: format!("bad {name} value {raw:?}"),
                })
        };
        let tk = field(ti, "t")?;
        let vk = field(vi, "v")?;
        let ak = match ai {
            Some(i) => field(i, "alpha")?,
            None => 0.0,
        };
        if vk < 0.0 {
            return Err(Error::CycleParse {
                line,
                msg: format!("negative speed {vk}"),
            });
        }
        if t.len() >= 2 {
            let dt = t[1] - t[0];
            let step = tk - t[t.len() - 1];
            if (step - dt).abs() > 1e-9 * f64::max(dt, 1.0) {
                return Err(Error::CycleParse {
                    line,
                    msg: format!("non-uniform time step {step} (expected {dt})"),
                });
            }
        } else if let Some(&prev) = t.last() {
            if tk <= prev {
                return Err(Error::CycleParse {
                    line,
                    msg: "time must be strictly increasing".into(),
                });
            }
        }
        t.push(tk);
        v.push(vk);
        alpha.push(ak);
    }
    DrivingCycle::new(t, v, alpha)
}

/// The NEDC: four urban ECE-15 blocks followed by the extra-urban block,
/// sampled every `dt` seconds. `dt` must divide every segment duration.
pub fn gen_nedc(dt: f64) -> Result<DrivingCycle> {
    if !(dt > 0.0) || !(1.0 / dt - (1.0 / dt).round()).abs().lt(&1e-9) {
        return Err(Error::Cycle(format!(
            "unsupported NEDC time step {dt} s (must be 1/k s)"
        )));
    }
    let per_second = (1.0 / dt).round() as u32;
    let segments = ECE15
        .iter()
        .cycle()
        .take(4 * ECE15.len())
        .chain(EXTRA_URBAN.iter());

    let mut v = vec![0.0];
    for &(duration, from, to) in segments {
        let steps = duration * per_second;
        for s in 1..=steps {
            let frac = s as f64 / steps as f64;
            v.push((from + (to - from) * frac) * KMH);
        }
    }
    let t = (0..v.len()).map(|k| k as f64 * dt).collect();
    let alpha = vec![0.0; v.len()];
    DrivingCycle::new(t, v, alpha)
}

/// Forward-difference acceleration; the last sample repeats its neighbour.
pub fn derive_accel(c: &DrivingCycle) -> Result<Vec<f64>> {
    if c.len() < 2 {
        return Err(Error::Cycle("need at least two samples".into()));
    }
    let dt = c.dt();
    let mut a: Vec<f64> = c.v.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    a.push(a[a.len() - 1]);
    Ok(a)
}

/// One horizon of references plus the initial energy state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Initial energy state (J).
    pub x0: f64,
    pub v_ref: Vec<f64>,
    pub a_ref: Vec<f64>,
    pub alpha_ref: Vec<f64>,
    /// Step length (s).
    pub dt: f64,
}

impl Scenario {
    pub fn new(
        x0: f64,
        v_ref: Vec<f64>,
        a_ref: Vec<f64>,
        alpha_ref: Vec<f64>,
        dt: f64,
    ) -> Result<Self> {
        if v_ref.len() != a_ref.len() || v_ref.len() != alpha_ref.len() {
            return Err(Error::Shape(format!(
                "scenario references differ in length: v={}, a={}, alpha={}",
                v_ref.len(),
                a_ref.len(),
                alpha_ref.len()
            )));
        }
        if v_ref.is_empty() {
            return Err(Error::Shape("scenario horizon is empty".into()));
        }
        if let Some(k) = v_ref.iter().position(|&x| !(x >= 0.0)) {
            return Err(Error::Cycle(format!(
                "negative reference speed at step {k}"
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParams("dt must be positive".into()));
        }
        Ok(Self {
            x0,
            v_ref,
            a_ref,
            alpha_ref,
            dt,
        })
    }

    /// Horizon length N.
    pub fn horizon(&self) -> usize {
        self.v_ref.len()
    }

    /// Horizon starting at cycle index `start`; samples past the end hold
    /// the last speed with zero acceleration.
    pub fn from_cycle(
        c: &DrivingCycle,
        accel: &[f64],
        start: usize,
        horizon: usize,
        x0: f64,
    ) -> Self {
        let last = c.len() - 1;
        let mut v_ref = Vec::with_capacity(horizon);
        let mut a_ref = Vec::with_capacity(horizon);
        let mut alpha_ref = Vec::with_capacity(horizon);
        for k in start..start + horizon {
            let j = k.min(last);
            v_ref.push(c.v[j]);
            a_ref.push(if k <= last { accel[j] } else { 0.0 });
            alpha_ref.push(c.alpha[j]);
        }
        Self {
            x0,
            v_ref,
            a_ref,
            alpha_ref,
            dt: c.dt(),
        }
    }
}

/// Sliding windows of `horizon` steps, starting every `stride` samples.
pub fn windows(c: &DrivingCycle, horizon: usize, stride: usize) -> Result<Vec<Scenario>> {
    if horizon == 0 || stride == 0 {
        return Err(Error::InvalidParams(
            "horizon and stride must be positive".into(),
        ));
    }
    if c.len() < horizon + 1 {
        return Err(Error::HorizonTooLong {
            horizon,
            needed: horizon + 1,
            len: c.len(),
        });
    }
    let accel = derive_accel(c)?;
    let last_start = c.len() - 1 - horizon;
    Ok((0..=last_start)
        .step_by(stride)
        .map(|s| Scenario::from_cycle(c, &accel, s, horizon, 0.0))
        .collect())
}
