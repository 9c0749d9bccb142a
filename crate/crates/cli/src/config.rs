//! Scenario files: one `key = value` per line, `#` starts a comment.
//!
//! Vectors and matrices are whitespace- or comma-separated numbers, matrices
//! row-major. Serialization is canonical (fixed key order, shortest
//! round-trip number formatting), so `parse ∘ to_text` is idempotent.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use gyrotrack_core::control::{
    gain_derive, inertia_bound_constants, synthesize_gains, SynthesisOptions,
};
use gyrotrack_core::dynamics::{BodyState, InertiaParams};
use gyrotrack_core::integrate::{IntegratorConfig, Scheme};
use gyrotrack_core::scenario::{Actuation, PlantSetup, ReferenceSetup, RotorInit, ScenarioConfig};
use gyrotrack_core::{
    GainSet, Matrix3, NavigationWeights, ReferenceProgram, RotationMatrix, Vector3,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: `{key}`: {message}")]
    Value {
        line: usize,
        key: String,
        message: String,
    },
    #[error("missing required key `{key}`")]
    Missing { key: String },
    #[error("`{key}`: {message}")]
    Invalid { key: String, message: String },
}

type Result<T> = std::result::Result<T, ConfigError>;

const KEYS: &[&str] = &[
    "plant.I",
    "plant.K",
    "plant.R0",
    "plant.Omega0",
    "plant.IOmega0",
    "plant.OmegaR0",
    "plant.Theta0",
    "plant.actuation",
    "reference.I",
    "reference.K",
    "reference.R0",
    "reference.Omega0",
    "reference.IOmega0",
    "reference.OmegaR0",
    "reference.Theta0",
    "reference.program",
    "reference.amplitude",
    "weights.P",
    "gains.mode",
    "gains.kp",
    "gains.kd",
    "gains.ki",
    "gains.kappa",
    "gains.mu_hess",
    "gains.lambda_sup",
    "gains.ki_fraction",
    "gains.kp_margin",
    "integrator.step",
    "integrator.duration",
    "integrator.scheme",
    "integrator.reproject",
    "output.stride",
];

/// Initial body velocity as written: Ω itself or the rigid-body momentum `IΩ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocityInput {
    Body(Vector3<f64>),
    Momentum(Vector3<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyInput {
    pub inertia: Matrix3<f64>,
    pub rotors: Vector3<f64>,
    pub attitude: RotationMatrix,
    pub velocity: VelocityInput,
    pub rotor_angles: Vector3<f64>,
}

impl BodyInput {
    fn params(&self, prefix: &str) -> Result<InertiaParams> {
        InertiaParams::new(self.inertia, self.rotors).map_err(|e| ConfigError::Invalid {
            key: format!("{prefix}.I"),
            message: e.to_string(),
        })
    }

    fn omega(&self, params: &InertiaParams) -> Vector3<f64> {
        match self.velocity {
            VelocityInput::Body(w) => w,
            VelocityInput::Momentum(m) => params.body().sharp(&m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainMode {
    Explicit,
    Certified,
}

/// Gains as written; `resolve` turns them into a [`GainSet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSpec {
    pub mode: GainMode,
    pub kp: Option<f64>,
    pub kd: f64,
    pub ki: Option<f64>,
    pub kappa: Option<f64>,
    pub mu_hess: Option<f64>,
    pub lambda_sup: Option<f64>,
    pub ki_fraction: f64,
    pub kp_margin: f64,
}

impl GainSpec {
    /// `(mu_hess, lambda_sup)`, falling back to the inertia formulas.
    pub fn bounds(&self, plant_inertia: &Matrix3<f64>) -> (f64, f64) {
        let (mu, lambda) = inertia_bound_constants(plant_inertia);
        (
            self.mu_hess.unwrap_or(mu),
            self.lambda_sup.unwrap_or(lambda),
        )
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        SynthesisOptions {
            kd: self.kd,
            kappa: self.kappa,
            ki_fraction: self.ki_fraction,
            kp_margin: self.kp_margin,
        }
    }

    pub fn resolve(&self, plant_inertia: &Matrix3<f64>) -> Result<GainSet> {
        let (mu, lambda) = self.bounds(plant_inertia);
        let invalid = |e: gyrotrack_core::Error| ConfigError::Invalid {
            key: "gains".into(),
            message: e.to_string(),
        };
        match self.mode {
            GainMode::Certified => {
                synthesize_gains(&self.synthesis_options(), mu, lambda).map_err(invalid)
            }
            GainMode::Explicit => {
                let kp = self.kp.ok_or_else(|| missing("gains.kp"))?;
                let ki = self.ki.ok_or_else(|| missing("gains.ki"))?;
                let kappa = self.kappa.unwrap_or(1.5 / mu);
                gain_derive(kp, self.kd, ki, kappa, mu, lambda).map_err(invalid)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub plant: BodyInput,
    pub plant_rotor_rates: Vector3<f64>,
    pub actuation: Actuation,
    pub reference: BodyInput,
    pub reference_rotor_rates: RotorInit,
    pub program: ReferenceProgram,
    pub weights: Matrix3<f64>,
    pub gains: GainSpec,
    pub integrator: IntegratorConfig,
    pub stride: usize,
}

fn missing(key: &str) -> ConfigError {
    ConfigError::Missing { key: key.into() }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConfigError::Syntax { line })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.into(),
                });
            }
            if map
                .insert(key.to_string(), (line, value.trim().to_string()))
                .is_some()
            {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.into(),
                });
            }
        }
        Ok(Self { map })
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn numbers(&self, key: &str, count: usize) -> Result<Option<Vec<f64>>> {
        let Some((line, value)) = self.raw(key) else {
            return Ok(None);
        };
        let bad = |message: String| ConfigError::Value {
            line,
            key: key.into(),
            message,
        };
        let parsed: Vec<f64> = value
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("`{s}` is not a number")))
            })
            .collect::<Result<_>>()?;
        if parsed.len() != count {
            return Err(bad(format!(
                "expected {count} numbers, found {}",
                parsed.len()
            )));
        }
        if let Some(x) = parsed.iter().find(|x| !x.is_finite()) {
            return Err(bad(format!("{x} is not finite")));
        }
        Ok(Some(parsed))
    }

    fn scalar(&self, key: &str) -> Result<Option<f64>> {
        Ok(self.numbers(key, 1)?.map(|v| v[0]))
    }

    fn positive(&self, key: &str) -> Result<Option<f64>> {
        let value = self.scalar(key)?;
        if let (Some(v), Some((line, _))) = (value, self.raw(key)) {
            if v <= 0.0 {
                return Err(ConfigError::Value {
                    line,
                    key: key.into(),
                    message: format!("must be positive, got {v}"),
                });
            }
        }
        Ok(value)
    }

    fn vector(&self, key: &str) -> Result<Option<Vector3<f64>>> {
        Ok(self
            .numbers(key, 3)?
            .map(|v| Vector3::from_column_slice(&v)))
    }

    fn matrix(&self, key: &str) -> Result<Option<Matrix3<f64>>> {
        Ok(self.numbers(key, 9)?.map(|v| Matrix3::from_row_slice(&v)))
    }

    fn required<T>(&self, key: &str, value: Option<T>) -> Result<T> {
        value.ok_or_else(|| missing(key))
    }

    fn word<'a>(&'a self, key: &str, allowed: &[&'a str]) -> Result<Option<&'a str>> {
        let Some((line, value)) = self.raw(key) else {
            return Ok(None);
        };
        allowed
            .iter()
            .find(|a| **a == value)
            .copied()
            .map(Some)
            .ok_or_else(|| ConfigError::Value {
                line,
                key: key.into(),
                message: format!("expected one of {}, found `{value}`", allowed.join(" | ")),
            })
    }

    fn value_error(&self, key: &str, message: String) -> ConfigError {
        match self.raw(key) {
            Some((line, _)) => ConfigError::Value {
                line,
                key: key.into(),
                message,
            },
            None => ConfigError::Invalid {
                key: key.into(),
                message,
            },
        }
    }

    fn body(&self, prefix: &str) -> Result<BodyInput> {
        let key = |s: &str| format!("{prefix}.{s}");
        let inertia = self.required(&key("I"), self.matrix(&key("I"))?)?;
        let rotors = self.required(&key("K"), self.vector(&key("K"))?)?;
        let r0 = self.required(&key("R0"), self.numbers(&key("R0"), 9)?)?;
        let attitude = RotationMatrix::from_row_slice(&r0)
            .map_err(|e| self.value_error(&key("R0"), e.to_string()))?;
        let velocity = match (self.vector(&key("Omega0"))?, self.vector(&key("IOmega0"))?) {
            (Some(w), None) => VelocityInput::Body(w),
            (None, Some(m)) => VelocityInput::Momentum(m),
            (None, None) => return Err(missing(&key("Omega0"))),
            (Some(_), Some(_)) => {
                return Err(
                    self.value_error(&key("IOmega0"), format!("conflicts with {}", key("Omega0")))
                )
            }
        };
        let body = BodyInput {
            inertia,
            rotors,
            attitude,
            velocity,
            rotor_angles: self.vector(&key("Theta0"))?.unwrap_or_else(Vector3::zeros),
        };
        InertiaParams::new(body.inertia, body.rotors)
            .map_err(|e| self.value_error(&key("I"), e.to_string()))?;
        Ok(body)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let e = Entries::parse(text)?;
        let plant = e.body("plant")?;
        let plant_rotor_rates = e.required("plant.OmegaR0", e.vector("plant.OmegaR0")?)?;
        let actuation = match e.word("plant.actuation", &["internal", "external"])? {
            Some("external") => Actuation::External,
            _ => Actuation::Internal,
        };
        let reference = e.body("reference")?;
        let reference_rotor_rates = match e.raw("reference.OmegaR0") {
            None | Some((_, "derive")) => RotorInit::FromMomentum,
            Some(_) => RotorInit::Explicit(e.vector("reference.OmegaR0")?.expect("present")),
        };
        let amplitude = e.vector("reference.amplitude")?;
        let program = match e.word("reference.program", &["zero", "constant", "sinusoid"])? {
            None | Some("zero") => ReferenceProgram::Zero,
            Some("constant") => {
                ReferenceProgram::Constant(e.required("reference.amplitude", amplitude)?)
            }
            Some(_) => ReferenceProgram::Sinusoid(e.required("reference.amplitude", amplitude)?),
        };
        let weights = e.matrix("weights.P")?.unwrap_or_else(Matrix3::identity);
        NavigationWeights::new(weights)
            .map_err(|err| e.value_error("weights.P", err.to_string()))?;

        let mode = match e.word("gains.mode", &["explicit", "certified"])? {
            Some("certified") => GainMode::Certified,
            _ => GainMode::Explicit,
        };
        let gains = GainSpec {
            mode,
            kp: e.positive("gains.kp")?,
            kd: e.required("gains.kd", e.positive("gains.kd")?)?,
            ki: e.positive("gains.ki")?,
            kappa: e.positive("gains.kappa")?,
            mu_hess: e.positive("gains.mu_hess")?,
            lambda_sup: e.positive("gains.lambda_sup")?,
            ki_fraction: e.positive("gains.ki_fraction")?.unwrap_or(0.5),
            kp_margin: e.positive("gains.kp_margin")?.unwrap_or(1.5),
        };

        let defaults = IntegratorConfig::default();
        let scheme = match e.raw("integrator.scheme") {
            None => defaults.scheme,
            Some((line, s)) => s.parse::<Scheme>().map_err(|err| ConfigError::Value {
                line,
                key: "integrator.scheme".into(),
                message: err.to_string(),
            })?,
        };
        let integrator = IntegratorConfig {
            step: e.positive("integrator.step")?.unwrap_or(defaults.step),
            duration: e
                .positive("integrator.duration")?
                .unwrap_or(defaults.duration),
            scheme,
            reproject: e
                .word("integrator.reproject", &["true", "false"])?
                .map_or(defaults.reproject, |w| w == "true"),
        };
        integrator
            .validate()
            .map_err(|err| e.value_error("integrator.step", err.to_string()))?;
        let stride = match e.scalar("output.stride")? {
            None => 1,
            Some(s) if s >= 1.0 && s.fract() == 0.0 => s as usize,
            Some(s) => {
                return Err(e.value_error(
                    "output.stride",
                    format!("expected a positive integer, got {s}"),
                ))
            }
        };

        let cfg = RunConfig {
            plant,
            plant_rotor_rates,
            actuation,
            reference,
            reference_rotor_rates,
            program,
            weights,
            gains,
            integrator,
            stride,
        };
        if gains.mode == GainMode::Explicit {
            cfg.gains.resolve(&cfg.plant.inertia)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn gain_set(&self) -> Result<GainSet> {
        self.gains.resolve(&self.plant.inertia)
    }

    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let plant_params = self.plant.params("plant")?;
        let reference_params = self.reference.params("reference")?;
        let plant_omega = self.plant.omega(&plant_params);
        let reference_omega = self.reference.omega(&reference_params);
        let cfg = ScenarioConfig {
            plant: PlantSetup {
                params: plant_params,
                initial: BodyState {
                    attitude: self.plant.attitude,
                    rotor_angles: self.plant.rotor_angles,
                    omega: plant_omega,
                    rotor_rates: self.plant_rotor_rates,
                },
            },
            reference: ReferenceSetup {
                params: reference_params,
                attitude: self.reference.attitude,
                omega: reference_omega,
                rotor_angles: self.reference.rotor_angles,
                rotor_rates: self.reference_rotor_rates,
                program: self.program,
            },
            weights: NavigationWeights::new(self.weights).map_err(|e| ConfigError::Invalid {
                key: "weights.P".into(),
                message: e.to_string(),
            })?,
            gains: self.gain_set()?,
            integrator: self.integrator,
            actuation: self.actuation,
        };
        cfg.validate().map_err(|e| ConfigError::Invalid {
            key: "reference".into(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Same configuration with explicit gains.
    pub fn with_explicit_gains(&self, g: &GainSet) -> Self {
        let mut cfg = self.clone();
        cfg.gains = GainSpec {
            mode: GainMode::Explicit,
            kp: Some(g.kp),
            kd: g.kd,
            ki: Some(g.ki),
            kappa: Some(g.kappa),
            mu_hess: Some(g.mu_hess),
            lambda_sup: Some(g.lambda_sup),
            ..self.gains
        };
        cfg
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |key: &str, value: String| {
            let _ = writeln!(out, "{key} = {value}");
        };
        for (prefix, body) in [("plant", &self.plant), ("reference", &self.reference)] {
            put(
                &format!("{prefix}.I"),
                join(body.inertia.transpose().iter()),
            );
            put(&format!("{prefix}.K"), join(body.rotors.iter()));
            put(
                &format!("{prefix}.R0"),
                join(body.attitude.row_major().iter()),
            );
            match body.velocity {
                VelocityInput::Body(w) => put(&format!("{prefix}.Omega0"), join(w.iter())),
                VelocityInput::Momentum(m) => put(&format!("{prefix}.IOmega0"), join(m.iter())),
            }
            if prefix == "plant" {
                put("plant.OmegaR0", join(self.plant_rotor_rates.iter()));
            } else {
                let value = match self.reference_rotor_rates {
                    RotorInit::FromMomentum => "derive".to_string(),
                    RotorInit::Explicit(v) => join(v.iter()),
                };
                put("reference.OmegaR0", value);
            }
            put(&format!("{prefix}.Theta0"), join(body.rotor_angles.iter()));
            if prefix == "plant" {
                let a = match self.actuation {
                    Actuation::Internal => "internal",
                    Actuation::External => "external",
                };
                put("plant.actuation", a.into());
            }
        }
        put("reference.program", self.program.kind().into());
        if !matches!(self.program, ReferenceProgram::Zero) {
            put("reference.amplitude", join(self.program.amplitude().iter()));
        }
        put("weights.P", join(self.weights.transpose().iter()));
        let g = &self.gains;
        put(
            "gains.mode",
            match g.mode {
                GainMode::Explicit => "explicit",
                GainMode::Certified => "certified",
            }
            .into(),
        );
        let optional = [
            ("gains.kp", g.kp),
            ("gains.kd", Some(g.kd)),
            ("gains.ki", g.ki),
            ("gains.kappa", g.kappa),
            ("gains.mu_hess", g.mu_hess),
            ("gains.lambda_sup", g.lambda_sup),
            ("gains.ki_fraction", Some(g.ki_fraction)),
            ("gains.kp_margin", Some(g.kp_margin)),
        ];
        for (key, value) in optional {
            if let Some(v) = value {
                put(key, format!("{v}"));
            }
        }
        put("integrator.step", format!("{}", self.integrator.step));
        put(
            "integrator.duration",
            format!("{}", self.integrator.duration),
        );
        put("integrator.scheme", self.integrator.scheme.name().into());
        put(
            "integrator.reproject",
            format!("{}", self.integrator.reproject),
        );
        put("output.stride", format!("{}", self.stride));
        out
    }
}

fn join<'a>(values: impl Iterator<Item = &'a f64>) -> String {
    values.map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}
