//! Command implementations behind the `ecogear` binary.
//!
//! Each command reads a [`RunConfig`], writes its artifacts into the report
//! directory and prints a short human-readable summary. Timing measurements
//! only ever land in `comparison.csv` and `timing.csv`; every other artifact
//! is a pure function of the configuration and seed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ecogear::config::RunConfig;
use ecogear::cycle::windows;
use ecogear::mpc::{self, Comparison, Strategy};
use ecogear::nn::{self, MlpParams};
use ecogear::vehicle::{fit_power_poly, FitGrid};

pub mod svg;

pub const PARAMS_FILE: &str = "params.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(#[source] ecogear::Error),
    #[error("{0}")]
    Runtime(#[from] ecogear::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "ecogear",
    version,
    about = "Energy-optimal gear selection for two-speed EVs"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Report directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Driving cycle: a CSV path or `nedc`.
    #[arg(long, global = true)]
    pub cycle: Option<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Fit the power surrogate and write the motor JSON.
    FitMotor,
    /// Write the configured cycle as CSV.
    GenCycle,
    /// Train the network on the cycle's horizon windows.
    Train,
    /// Simulate rule-based, exact and network strategies over the cycle.
    Compare {
        /// Trained parameters; defaults to `params.json` in the report directory.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Time the exact and network solvers on every horizon window.
    Bench {
        #[arg(long)]
        params: Option<PathBuf>,
        /// Passes over the window set.
        #[arg(long)]
        repetitions: Option<usize>,
    },
}

/// Loads the configuration and applies command-line overrides.
pub fn resolve_config(global: &GlobalArgs) -> CliResult<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.paths.report_dir = out.clone();
    }
    if let Some(cycle) = &global.cycle {
        cfg.paths.cycle = cycle.clone();
    }
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> CliResult<()> {
    let cfg = resolve_config(&cli.global)?;
    match &cli.command {
        Command::FitMotor => cmd_fit_motor(&cfg, stdout),
        Command::GenCycle => cmd_gen_cycle(&cfg, stdout),
        Command::Train => cmd_train(&cfg, stdout),
        Command::Compare { params } => cmd_compare(&cfg, params.as_deref(), stdout),
        Command::Bench {
            params,
            repetitions,
        } => cmd_bench(&cfg, params.as_deref(), *repetitions, stdout),
    }
}

fn report_dir(cfg: &RunConfig) -> CliResult<&Path> {
    let dir = cfg.paths.report_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| ecogear::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(dir)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| {
        CliError::Runtime(ecogear::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn create_file(path: &Path) -> CliResult<fs::File> {
    fs::File::create(path).map_err(|e| {
        CliError::Runtime(ecogear::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn say(stdout: &mut dyn Write, line: std::fmt::Arguments<'_>) {
    // A closed stdout must not turn a finished run into a failure.
    let _ = writeln!(stdout, "{line}");
}

fn cycle(cfg: &RunConfig) -> CliResult<ecogear::cycle::DrivingCycle> {
    cfg.cycle().map_err(|e| match e {
        e @ ecogear::Error::Io { .. } => CliError::Config(e),
        e => CliError::Runtime(e),
    })
}

pub fn cmd_fit_motor(cfg: &RunConfig, stdout: &mut dyn Write) -> CliResult<()> {
    let dir = report_dir(cfg)?;
    let (motor, report) = fit_power_poly(&cfg.motor, &FitGrid::default(), &cfg.vehicle)?;
    let path = dir.join("motor.json");
    write_file(
        &path,
        serde_json::to_string_pretty(&motor).map_err(ecogear::Error::from)?,
    )?;
    write_file(
        &dir.join("fit_report.json"),
        serde_json::to_string_pretty(&report).map_err(ecogear::Error::from)?,
    )?;
    say(
        stdout,
        format_args!(
            "fitted {} samples: residual RMS {:.3} W ({:.2}% of mean |power| {:.1} W), max {:.1} W",
            report.samples,
            report.rms_residual,
            100.0 * report.relative_rms(),
            report.mean_abs_power,
            report.max_abs_residual
        ),
    );
    say(stdout, format_args!("wrote {}", path.display()));
    Ok(())
}

pub fn cmd_gen_cycle(cfg: &RunConfig, stdout: &mut dyn Write) -> CliResult<()> {
    let dir = report_dir(cfg)?;
    let c = cycle(cfg)?;
    let path = dir.join("cycle.csv");
    c.write_csv(create_file(&path)?)?;
    say(
        stdout,
        format_args!(
            "{} samples, {:.0} s, {:.3} km -> {}",
            c.len(),
            c.duration(),
            c.distance() / 1000.0,
            path.display()
        ),
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, stdout: &mut dyn Write) -> CliResult<()> {
    let dir = report_dir(cfg)?;
    let pt = cfg.powertrain()?;
    let c = cycle(cfg)?;
    let data = windows(&c, cfg.horizon.n, cfg.window_stride)?;
    let outcome = nn::train(&data, &cfg.train, &cfg.net_config(), &pt, cfg.seed)?;
    let params_path = dir.join(PARAMS_FILE);
    write_file(&params_path, outcome.params.to_json()?)?;
    nn::write_history_csv(&outcome.history, create_file(&dir.join("loss.csv"))?)?;

    let (gap, confident) = nn::binarity_stats(&data, &outcome.params, 0.9)?;
    let last = outcome.history.last().expect("at least one epoch");
    let summary = serde_json::json!({
        "windows": data.len(),
        "epochs": outcome.history.len(),
        "seed": cfg.seed,
        "e_ref": outcome.weights.e_ref,
        "final_loss": last.mean_loss,
        "binarity_gap": gap,
        "confident_rows": confident,
    });
    write_file(
        &dir.join("train_summary.json"),
        serde_json::to_string_pretty(&summary).map_err(ecogear::Error::from)?,
    )?;
    say(
        stdout,
        format_args!(
            "trained on {} windows for {} epochs: final loss {:.6}, binarity gap {:.5}, {:.2}% rows > 0.9",
            data.len(),
            last.epoch,
            last.mean_loss,
            gap,
            100.0 * confident
        ),
    );
    say(stdout, format_args!("wrote {}", params_path.display()));
    Ok(())
}

fn load_params(cfg: &RunConfig, explicit: Option<&Path>) -> CliResult<MlpParams> {
    let path = explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.paths.params.clone())
        .unwrap_or_else(|| cfg.paths.report_dir.join(PARAMS_FILE));
    let text = fs::read_to_string(&path).map_err(|e| {
        CliError::Config(ecogear::Error::Io {
            path: path.clone(),
            source: e,
        })
    })?;
    let params = MlpParams::from_json(&text).map_err(CliError::Config)?;
    let expected = cfg.net_config();
    if params.config != expected {
        return Err(CliError::Usage(format!(
            "{}: network shape {:?} does not match the configuration {:?}",
            path.display(),
            params.config,
            expected
        )));
    }
    Ok(params)
}

pub fn cmd_compare(
    cfg: &RunConfig,
    params: Option<&Path>,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let params = load_params(cfg, params)?;
    let dir = report_dir(cfg)?;
    let pt = cfg.powertrain()?;
    let c = cycle(cfg)?;
    let strategies = vec![
        Strategy::rule_based(cfg.rule_based),
        Strategy::Exact,
        Strategy::nn(params),
    ];
    let cmp = mpc::compare(&c, strategies, cfg.horizon.n, &pt)?;

    cmp.write_csv(create_file(&dir.join("comparison.csv"))?)?;
    write_energy_summary(&cmp, &dir.join("energy_summary.csv"))?;
    for r in &cmp.reports {
        r.write_steps_csv(create_file(&dir.join(format!("steps_{}.csv", r.strategy)))?)?;
    }
    write_gear_trace(&cmp, &dir.join("gear_trace.csv"))?;
    write_working_points(&cmp, &pt.motor, &dir.join("working_points.csv"))?;
    write_file(&dir.join("gear_trace.svg"), gear_trace_svg(&cmp))?;
    write_file(&dir.join("working_points.svg"), working_points_svg(&cmp))?;

    say(
        stdout,
        format_args!(
            "{:<11} {:>11} {:>10} {:>10} {:>10}",
            "method", "energy_kWh", "savings_%", "mean_ms", "worst_ms"
        ),
    );
    for row in &cmp.rows {
        say(
            stdout,
            format_args!(
                "{:<11} {:>11.4} {:>10.2} {:>10.4} {:>10.4}",
                row.method, row.energy_kwh, row.savings_pct, row.mean_ms, row.worst_ms
            ),
        );
    }
    say(
        stdout,
        format_args!("wrote comparison artifacts to {}", dir.display()),
    );
    Ok(())
}

fn write_energy_summary(cmp: &Comparison, path: &Path) -> CliResult<()> {
    let mut text =
        String::from("method,energy_kwh,savings_pct,gear_shifts,feasibility_overrides\n");
    for (row, r) in cmp.rows.iter().zip(&cmp.reports) {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            row.method, row.energy_kwh, row.savings_pct, r.gear_shifts, r.feasibility_overrides
        ));
    }
    write_file(path, text)
}

fn write_gear_trace(cmp: &Comparison, path: &Path) -> CliResult<()> {
    let mut text = String::from("t,v");
    for r in &cmp.reports {
        text.push(',');
        text.push_str(&r.strategy);
    }
    text.push('\n');
    let steps = cmp.reports[0].steps.len();
    for k in 0..steps {
        let s = &cmp.reports[0].steps[k];
        text.push_str(&format!("{},{}", s.t, s.v));
        for r in &cmp.reports {
            text.push_str(&format!(",{}", r.steps[k].gear.number()));
        }
        text.push('\n');
    }
    write_file(path, text)
}

fn write_working_points(
    cmp: &Comparison,
    motor: &ecogear::vehicle::MotorModel,
    path: &Path,
) -> CliResult<()> {
    let mut text = String::from("method,t,n_m,T_m,eta_m\n");
    for r in &cmp.reports {
        for s in &r.steps {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                r.strategy,
                s.t,
                s.n_m,
                s.t_m,
                motor.efficiency(s.n_m, s.t_m)
            ));
        }
    }
    write_file(path, text)
}

fn gear_trace_svg(cmp: &Comparison) -> String {
    let base = &cmp.reports[0].steps;
    let mut series = vec![svg::Series {
        name: "speed (km/h)",
        x: base.iter().map(|s| s.t).collect(),
        y: base.iter().map(|s| s.v * 3.6).collect(),
    }];
    for r in &cmp.reports {
        series.push(svg::Series {
            name: &r.strategy,
            x: r.steps.iter().map(|s| s.t).collect(),
            y: r.steps.iter().map(|s| s.gear.number() as f64).collect(),
        });
    }
    svg::step_panels("Gear trace", "time (s)", &series)
}

fn working_points_svg(cmp: &Comparison) -> String {
    let series: Vec<_> = cmp
        .reports
        .iter()
        .map(|r| svg::Series {
            name: &r.strategy,
            x: r.steps.iter().map(|s| s.n_m).collect(),
            y: r.steps.iter().map(|s| s.t_m).collect(),
        })
        .collect();
    svg::scatter(
        "Motor working points",
        "motor speed (rpm)",
        "motor torque (N m)",
        &series,
    )
}

pub fn cmd_bench(
    cfg: &RunConfig,
    params: Option<&Path>,
    repetitions: Option<usize>,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let repetitions = repetitions.unwrap_or(cfg.bench_repetitions);
    if repetitions == 0 {
        return Err(CliError::Usage("repetitions must be at least 1".into()));
    }
    let params = load_params(cfg, params)?;
    let dir = report_dir(cfg)?;
    let pt = cfg.powertrain()?;
    let c = cycle(cfg)?;
    let data = windows(&c, cfg.horizon.n, 1)?;

    let mut text = String::from("method,solves,mean_ms,worst_ms,p99_ms\n");
    for strategy in [Strategy::nn(params), Strategy::Exact] {
        let stats = mpc::bench_solve_time(&strategy, &data, repetitions, &pt)?;
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            strategy.name(),
            stats.count,
            stats.mean_ms(),
            stats.worst_ms(),
            stats.p99_ns as f64 * 1e-6
        ));
        say(
            stdout,
            format_args!(
                "{:<6} {} solves: mean {:.4} ms, worst {:.4} ms",
                strategy.name(),
                stats.count,
                stats.mean_ms(),
                stats.worst_ms()
            ),
        );
    }
    let path = dir.join("timing.csv");
    write_file(&path, text)?;
    say(stdout, format_args!("wrote {}", path.display()));
    Ok(())
}
