//! Command implementations behind the `gyrotrack` binary.
//!
//! Each command returns a [`CliError`] on failure; [`CliError::exit_code`] maps
//! it to 1 (usage, configuration or I/O) or 2 (numerical divergence).

pub mod config;
pub mod plot;
pub mod telemetry;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gyrotrack_core::control::{
    estimate_bounds, gain_feasible, inertia_bound_constants, q_matrix, synthesize_gains,
    Feasibility,
};
use gyrotrack_core::scenario::{
    compare_efforts, pd_baseline, run_closed_loop, EffortIntegrals, RotorInit,
};
use gyrotrack_core::{Error as CoreError, GainSet, InertiaMetric, NavigationWeights};
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("simulation diverged: {0}")]
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Diverged(_) => 2,
            _ => 1,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

fn run_error(e: CoreError) -> CliError {
    match e {
        CoreError::DivergedState { .. } => CliError::Diverged(e.to_string()),
        other => CliError::Config(ConfigError::Invalid {
            key: "scenario".into(),
            message: other.to_string(),
        }),
    }
}

/// `<out>.meta.json` next to a CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn vec3(v: &gyrotrack_core::Vector3<f64>) -> Value {
    json!([v.x, v.y, v.z])
}

fn mat3(m: &gyrotrack_core::Matrix3<f64>) -> Value {
    json!((0..3)
        .map(|i| (0..3).map(|j| m[(i, j)]).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn parameters(cfg: &RunConfig, s: &gyrotrack_core::ScenarioConfig) -> Value {
    let reference_rotor = s.reference_initial_state().map(|b| b.rotor_rates).ok();
    json!({
        "plant": {
            "I": mat3(s.plant.params.body().matrix()),
            "K": vec3(s.plant.params.rotor()),
            "R0": s.plant.initial.attitude,
            "Omega0": vec3(&s.plant.initial.omega),
            "OmegaR0": vec3(&s.plant.initial.rotor_rates),
            "actuation": s.actuation,
        },
        "reference": {
            "I": mat3(s.reference.params.body().matrix()),
            "K": vec3(s.reference.params.rotor()),
            "R0": s.reference.attitude,
            "Omega0": vec3(&s.reference.omega),
            "OmegaR0": reference_rotor.as_ref().map(vec3),
            "OmegaR0_derived": matches!(cfg.reference_rotor_rates, RotorInit::FromMomentum),
            "program": s.reference.program.kind(),
            "amplitude": vec3(&s.reference.program.amplitude()),
        },
        "weights": mat3(s.weights.matrix()),
        "integrator": s.integrator,
        "stride": cfg.stride,
    })
}

/// Result of a successful `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub rows: usize,
    pub csv: PathBuf,
    pub sidecar: PathBuf,
    pub feasibility: Feasibility,
}

pub fn simulate(config: &Path, out: &Path) -> Result<SimulationSummary, CliError> {
    let cfg = RunConfig::load(config)?;
    let scenario = cfg.scenario()?;
    let feasibility = gain_feasible(&scenario.gains);
    let sidecar = sidecar_path(out);
    let mut meta = json!({
        "config": config.display().to_string(),
        "parameters": parameters(&cfg, &scenario),
        "gains": scenario.gains,
        "feasibility": feasibility,
    });

    let run = match run_closed_loop(&scenario) {
        Ok(run) => run,
        Err(e) => {
            let err = run_error(e);
            if let CliError::Diverged(message) = &err {
                meta["status"] = json!("diverged");
                meta["error"] = json!(message);
                write_file(&sidecar, format!("{:#}\n", meta).as_bytes())?;
            }
            return Err(err);
        }
    };

    let mut buffer = Vec::new();
    let rows =
        telemetry::write_csv(&mut buffer, &run, cfg.stride).map_err(|e| CliError::io(out, e))?;
    write_file(out, &buffer)?;

    let m = &run.metrics;
    let last = m.len() - 1;
    meta["status"] = json!("ok");
    meta["rows"] = json!(rows);
    meta["conservation"] = json!({
        "max_momentum_drift": m.max_momentum_drift(),
        "max_reference_momentum_drift": m.max_reference_momentum_drift(),
        "max_orthogonality_error": m.max_orthogonality_error,
    });
    meta["tracking"] = json!({
        "final_psi": m.psi[last],
        "final_geodesic_error": m.geodesic_error[last],
        "settling_time_psi_1e-2": m.settling_time(1e-2),
        "samples_outside_certified_region": m.in_certified_region.iter().filter(|b| !**b).count(),
    });
    write_file(&sidecar, format!("{:#}\n", meta).as_bytes())?;

    Ok(SimulationSummary {
        rows,
        csv: out.to_path_buf(),
        sidecar,
        feasibility,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TuneOptions {
    pub synthesize: bool,
    pub estimate_bounds: bool,
    pub seed: u64,
}

/// Gains, their verdict, and optionally a config rewritten with them.
#[derive(Debug, Clone)]
pub struct GainReport {
    pub gains: GainSet,
    pub feasibility: Feasibility,
    pub config: RunConfig,
}

pub fn tune_gains(
    config: &Path,
    opts: TuneOptions,
    out: &mut dyn Write,
) -> Result<GainReport, CliError> {
    let cfg = RunConfig::load(config)?;
    let gains = if opts.synthesize {
        let (mu, lambda) = cfg.gains.bounds(&cfg.plant.inertia);
        synthesize_gains(&cfg.gains.synthesis_options(), mu, lambda).map_err(|e| {
            ConfigError::Invalid {
                key: "gains".into(),
                message: e.to_string(),
            }
        })?
    } else {
        cfg.gain_set()?
    };
    let f = gain_feasible(&gains);
    let q = q_matrix(&gains);
    let io = |e: std::io::Error| CliError::io(Path::new("<stdout>"), e);

    let mut text = String::new();
    {
        use std::fmt::Write as _;
        let g = &gains;
        let _ = writeln!(
            text,
            "gains{}",
            if opts.synthesize {
                " (synthesized)"
            } else {
                ""
            }
        );
        let _ = writeln!(
            text,
            "  kp = {}\n  kd = {}\n  ki = {}\n  kappa = {}",
            g.kp, g.kd, g.ki, g.kappa
        );
        let _ = writeln!(
            text,
            "  sigma = {}\n  alpha = {}\n  beta = {}\n  tau = {}\n  delta = {}",
            g.sigma, g.alpha, g.beta, g.tau, g.delta
        );
        let _ = writeln!(
            text,
            "  mu_hess = {}\n  lambda_sup = {}",
            g.mu_hess, g.lambda_sup
        );
        let (mu_formula, lambda_formula) = inertia_bound_constants(&cfg.plant.inertia);
        let _ = writeln!(
            text,
            "inertia formulas: mu = {mu_formula}, lambda = {lambda_formula}"
        );
        let _ = writeln!(text, "Q =");
        for i in 0..3 {
            let _ = writeln!(
                text,
                "  [{:>14.6e} {:>14.6e} {:>14.6e}]",
                q[(i, 0)],
                q[(i, 1)],
                q[(i, 2)]
            );
        }
        let _ = writeln!(
            text,
            "leading principal minors: {:.6e} {:.6e} {:.6e}",
            f.minors[0], f.minors[1], f.minors[2]
        );
        let _ = writeln!(
            text,
            "kp > max(2 kappa kd^2, energy floor): {} > max({}, {}) = {} -> {}",
            g.kp,
            f.kp_floor_q,
            f.kp_floor_energy,
            f.kp_floor,
            if f.kp_ok { "ok" } else { "violated" }
        );
        let _ = writeln!(
            text,
            "0 < ki < kd^3 (1 - sigma^2) / mu: {} < {} -> {}",
            g.ki,
            f.ki_ceiling,
            if f.ki_ok { "ok" } else { "violated" }
        );
        let _ = writeln!(
            text,
            "verdict: {}",
            if f.feasible { "feasible" } else { "infeasible" }
        );
        if opts.estimate_bounds {
            let metric =
                InertiaMetric::new(cfg.plant.inertia).map_err(|e| ConfigError::Invalid {
                    key: "plant.I".into(),
                    message: e.to_string(),
                })?;
            let weights =
                NavigationWeights::new(cfg.weights).map_err(|e| ConfigError::Invalid {
                    key: "weights.P".into(),
                    message: e.to_string(),
                })?;
            for radius in [0.5, 1.0, 2.0, 3.0] {
                let est = estimate_bounds(&metric, &weights, radius, 4000, opts.seed);
                let _ = writeln!(
                    text,
                    "sampled bounds (|log E| <= {radius}): mu = {:.6}, lambda = {:.6}",
                    est.mu_hess, est.lambda_sup
                );
            }
        }
    }
    out.write_all(text.as_bytes()).map_err(io)?;

    Ok(GainReport {
        gains,
        feasibility: f,
        config: cfg.with_explicit_gains(&gains),
    })
}

/// Law the primary gains are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Baseline {
    /// Same gains with `k_I = 0`.
    #[default]
    Pd,
    /// The primary law itself.
    SameLaw,
}

pub fn compare(
    config: &Path,
    out_dir: &Path,
    baseline: Baseline,
) -> Result<EffortIntegrals, CliError> {
    let cfg = RunConfig::load(config)?;
    let scenario = cfg.scenario()?;
    if !out_dir.is_dir() {
        let parent = out_dir
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(CliError::io(out_dir, "parent directory does not exist"));
        }
        fs::create_dir(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    }
    let alternate = match baseline {
        Baseline::Pd => pd_baseline(&scenario.gains),
        Baseline::SameLaw => scenario.gains,
    };
    let c = compare_efforts(&scenario, &alternate).map_err(run_error)?;
    let stride = cfg.stride.max(1);

    for (name, ext, int) in [
        ("effort_pid.csv", &c.primary_ext, &c.primary_int),
        ("effort_baseline.csv", &c.alternate_ext, &c.alternate_int),
    ] {
        let path = out_dir.join(name);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| CliError::io(&path, e);
        w.write_record(["t", "u_ext_norm", "u_int_norm"])
            .map_err(io)?;
        for k in (0..c.times.len()).step_by(stride) {
            w.write_record([c.times[k], ext[k], int[k]].map(telemetry::format_number))
                .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(&path, e))?;
        write_file(&path, &bytes)?;
    }

    let integrals = c.integrals();
    let summary = json!({
        "config": config.display().to_string(),
        "baseline": match baseline { Baseline::Pd => "pd", Baseline::SameLaw => "same_law" },
        "primary_gains": c.primary,
        "baseline_gains": c.alternate,
        "integral_u_ext_norm": { "primary": integrals.primary_ext, "baseline": integrals.alternate_ext },
        "integral_u_int_norm": { "primary": integrals.primary_int, "baseline": integrals.alternate_int },
        "ratio_u_ext": integrals.ratio_ext(),
        "ratio_u_int": integrals.alternate_int / integrals.primary_int,
    });
    write_file(
        &out_dir.join("summary.json"),
        format!("{:#}\n", summary).as_bytes(),
    )?;
    Ok(integrals)
}

/// Parses `11,12,21,22` into zero-based `(row, column)` pairs.
pub fn parse_entries(s: &str) -> Result<Vec<(usize, usize)>, CliError> {
    s.split(',')
        .map(|e| {
            let e = e.trim();
            let digits: Vec<usize> = e
                .chars()
                .filter_map(|c| c.to_digit(10).map(|d| d as usize))
                .collect();
            match digits.as_slice() {
                [r, c] if e.len() == 2 && (1..=3).contains(r) && (1..=3).contains(c) => {
                    Ok((r - 1, c - 1))
                }
                _ => Err(CliError::Usage(format!(
                    "invalid matrix entry `{e}`, expected two digits in 1..3"
                ))),
            }
        })
        .collect()
}

/// Reads a telemetry CSV and writes `out_svg` (entry overlays) plus
/// `<stem>_psi.svg` and `<stem>_effort.svg`. Nothing is written on error.
pub fn plot(
    csv_path: &Path,
    out_svg: &Path,
    entries: &[(usize, usize)],
) -> Result<Vec<PathBuf>, CliError> {
    let schema = |message: String| CliError::Schema {
        path: csv_path.display().to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .from_path(csv_path)
        .map_err(|e| CliError::io(csv_path, e))?;
    let header = reader.headers().map_err(|e| schema(e.to_string()))?.clone();
    if header.iter().ne(telemetry::HEADER.iter().copied()) {
        return Err(schema("header does not match the telemetry schema".into()));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); telemetry::HEADER.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema(e.to_string()))?;
        for (j, field) in record.iter().enumerate() {
            let v = field
                .parse::<f64>()
                .map_err(|_| schema(format!("row {}: `{field}` is not a number", i + 2)))?;
            columns[j].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(schema("no data rows".into()));
    }
    let col = |name: &str| -> &[f64] {
        let j = telemetry::HEADER
            .iter()
            .position(|h| *h == name)
            .expect("known column");
        &columns[j]
    };
    let t = col("t");

    let names: Vec<(String, String, String)> = entries
        .iter()
        .map(|(r, c)| {
            (
                format!("R{}{}", r + 1, c + 1),
                format!("Rd{}{}", r + 1, c + 1),
                format!("({},{})(t)", r + 1, c + 1),
            )
        })
        .collect();
    let overlays: Vec<plot::Panel> = names
        .iter()
        .map(|(plant, reference, title)| plot::Panel {
            title: title.clone(),
            y_label: "entry",
            series: vec![
                plot::Series {
                    label: "reference",
                    color: "#d62728",
                    values: col(reference),
                },
                plot::Series {
                    label: "controlled",
                    color: "#1f77b4",
                    values: col(plant),
                },
            ],
        })
        .collect();

    let log_psi: Vec<f64> = col("psi_E").iter().map(|p| p.max(1e-300).log10()).collect();
    let psi_panel = [plot::Panel {
        title: "navigation function".into(),
        y_label: "log10 psi(E)",
        series: vec![plot::Series {
            label: "psi",
            color: "#1f77b4",
            values: &log_psi,
        }],
    }];
    let effort: Vec<f64> = (0..t.len())
        .map(|k| {
            (col("u_int1")[k].powi(2) + col("u_int2")[k].powi(2) + col("u_int3")[k].powi(2)).sqrt()
        })
        .collect();
    let effort_panel = [plot::Panel {
        title: "rotor torque".into(),
        y_label: "|u_int|",
        series: vec![plot::Series {
            label: "|u_int|",
            color: "#1f77b4",
            values: &effort,
        }],
    }];

    let stem = out_svg
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "plot".into());
    let dir = out_svg.parent().unwrap_or(Path::new(""));
    let outputs = [
        (out_svg.to_path_buf(), plot::render(t, &overlays, 2)),
        (
            dir.join(format!("{stem}_psi.svg")),
            plot::render(t, &psi_panel, 1),
        ),
        (
            dir.join(format!("{stem}_effort.svg")),
            plot::render(t, &effort_panel, 1),
        ),
    ];
    for (path, svg) in &outputs {
        write_file(path, svg.as_bytes())?;
    }
    Ok(outputs.into_iter().map(|(p, _)| p).collect())
}

/// Parses and validates a config; prints a one-screen summary.
pub fn check(config: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let scenario = cfg.scenario()?;
    let f = gain_feasible(&scenario.gains);
    let text = format!(
        "{}: ok\nprogram: {}\nsteps: {} (h = {}, T = {})\ngains: kp = {}, kd = {}, ki = {} ({})\n",
        config.display(),
        scenario.reference.program.kind(),
        scenario.integrator.steps(),
        scenario.integrator.step,
        scenario.integrator.duration,
        scenario.gains.kp,
        scenario.gains.kd,
        scenario.gains.ki,
        if f.feasible { "feasible" } else { "infeasible" },
    );
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}
