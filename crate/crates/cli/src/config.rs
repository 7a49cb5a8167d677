//! Experiment configuration, read from TOML.
//!
//! ```toml
//! kind = "green"
//!
//! [model]
//! epsilon = 1e-3
//! dimension = 1
//! rho_prime = 1.5
//! potential.kind = "cosine"
//! hopping.alpha = 1.0
//! hopping.rho = 2.0
//! frequency.omega = [0.6180339887498949]
//!
//! [schedule]
//! mode = "desk"
//! delta0 = 0.01
//! s_max = 1
//!
//! [sweep]
//! theta = [0.1, 0.2]
//! energy = [0.3]
//! box_radius = 32
//!
//! [output]
//! format = "csv"
//! ```
//!
//! Every key is optional; missing keys take the defaults below.

use std::path::PathBuf;

use qplab::model::{FrequencyVector, HoppingKernel, HoppingProfile, ModelSpec, PotentialSpec, DEFAULT_DENSE_CAP};
use qplab::msa::{build_schedule, DeskOverrides, ScaleSchedule, ScheduleMode, ScheduleSpec, SeparationPolicy};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Assemble,
    Green,
    Msa,
    Dynamics,
    Localize,
    VerifyLemmas,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Assemble => "assemble",
            ExperimentKind::Green => "green",
            ExperimentKind::Msa => "msa",
            ExperimentKind::Dynamics => "dynamics",
            ExperimentKind::Localize => "localize",
            ExperimentKind::VerifyLemmas => "verify-lemmas",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialConfig {
    /// `"cosine"` or `"zero"`.
    pub kind: String,
    pub strip: f64,
    pub beta: f64,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig { kind: "cosine".into(), strip: 0.5, beta: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HoppingConfig {
    pub alpha: f64,
    pub rho: f64,
    pub scale: f64,
    /// Phase twist `t` in `φ(n) e^{2πi t·n}`; absent for the symmetric kernel.
    pub twist: Option<Vec<f64>>,
}

impl Default for HoppingConfig {
    fn default() -> Self {
        HoppingConfig { alpha: 1.0, rho: 2.0, scale: 1.0, twist: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrequencyConfig {
    /// Defaults to the golden mean in every coordinate direction `k` scaled by `√(k+1)`.
    pub omega: Option<Vec<f64>>,
    pub tau: f64,
    pub gamma: f64,
    /// Certify the Diophantine condition up to this norm.
    pub certify: Option<u64>,
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        FrequencyConfig { omega: None, tau: 2.0, gamma: 0.2, certify: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub epsilon: f64,
    pub epsilon0: f64,
    pub dimension: usize,
    pub rho_prime: f64,
    pub dense_cap: usize,
    pub potential: PotentialConfig,
    pub hopping: HoppingConfig,
    pub frequency: FrequencyConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            epsilon: 1e-3,
            epsilon0: 1e-2,
            dimension: 1,
            rho_prime: 1.5,
            dense_cap: DEFAULT_DENSE_CAP,
            potential: PotentialConfig::default(),
            hopping: HoppingConfig::default(),
            frequency: FrequencyConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub mode: ScheduleMode,
    /// `δ₀`; asymptotic mode defaults to `ε₀^{1/10}`, desk mode to `10⁻²`.
    pub delta0: Option<f64>,
    pub s_max: usize,
    pub separation: SeparationPolicy,
    pub overrides: DeskOverrides,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { mode: ScheduleMode::Desk, delta0: None, s_max: 1, separation: SeparationPolicy::Report, overrides: DeskOverrides::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub theta: Vec<f64>,
    pub energy: Vec<f64>,
    /// Radius of the box `Λ_L` used by assemble, green, dynamics and localize.
    pub box_radius: i64,
    /// Radius of the resonance window used by msa.
    pub window_radius: i64,
    pub seed: u64,
    /// Imaginary part added to `E` in green.
    pub imag_energy: f64,
    /// Target decay rate in green; defaults to `(3/4)α`.
    pub decay_rate: Option<f64>,
    pub cutoff: f64,
    /// `t` for the complex-energy decay check in msa; skipped when absent.
    pub green_t: Option<f64>,
    pub probes: usize,
    /// Moment orders in dynamics; each is one grid point per `θ`.
    pub p: Vec<f64>,
    /// Sample times in dynamics.
    pub times: Vec<f64>,
    /// Horizons `T` of the time averages in dynamics.
    pub horizons: Vec<f64>,
    pub laguerre_nodes: usize,
    /// Count the sub-polynomial moment bound towards pass/fail in dynamics.
    pub assert_sne: bool,
    /// Localization target as a fraction of `α`.
    pub target_fraction: f64,
    pub phase_tau: f64,
    pub phase_n_max: u64,
    /// Random instances per suite in verify-lemmas.
    pub samples: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            theta: vec![0.1],
            energy: vec![0.3],
            box_radius: 32,
            window_radius: 64,
            seed: 1,
            imag_energy: 0.0,
            decay_rate: None,
            cutoff: 0.0,
            green_t: None,
            probes: 3,
            p: vec![2.0],
            times: vec![0.0, 1.0, 10.0, 100.0],
            horizons: vec![1.0],
            laguerre_nodes: 64,
            assert_sne: false,
            target_fraction: 0.25,
            phase_tau: 2.0,
            phase_n_max: 1000,
            samples: 1000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub format: Format,
    /// Record wall-clock timings in the manifest (makes bundles run-dependent).
    pub timings: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

fn invalid(path: &str, message: impl Into<String>) -> CliError {
    CliError::ConfigInvalid { path: path.to_string(), message: message.into() }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let path = e.span().map(|s| format!("byte {}..{}", s.start, s.end)).unwrap_or_default();
            CliError::ConfigInvalid { path, message: e.message().to_string() }
        })
    }

    pub fn kind(&self) -> Result<ExperimentKind, CliError> {
        self.kind.ok_or_else(|| invalid("kind", "no experiment kind given"))
    }

    /// Checks grids and ranges; the model and schedule are validated when built.
    pub fn validate(&self) -> Result<(), CliError> {
        let kind = self.kind()?;
        let s = &self.sweep;
        let needs_grid = kind != ExperimentKind::VerifyLemmas;
        if needs_grid && s.theta.is_empty() {
            return Err(invalid("sweep.theta", "grid is empty"));
        }
        if matches!(kind, ExperimentKind::Assemble | ExperimentKind::Green | ExperimentKind::Msa) && s.energy.is_empty() {
            return Err(invalid("sweep.energy", "grid is empty"));
        }
        if kind == ExperimentKind::Dynamics {
            if s.p.is_empty() {
                return Err(invalid("sweep.p", "grid is empty"));
            }
            if s.times.is_empty() {
                return Err(invalid("sweep.times", "grid is empty"));
            }
            if s.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(invalid("sweep.times", "times must be finite and nonnegative"));
            }
            if s.horizons.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return Err(invalid("sweep.horizons", "horizons must be positive"));
            }
        }
        for (path, grid) in [("sweep.theta", &s.theta), ("sweep.energy", &s.energy), ("sweep.p", &s.p)] {
            if grid.iter().any(|x| !x.is_finite()) {
                return Err(invalid(path, "grid values must be finite"));
            }
        }
        if s.box_radius < 0 {
            return Err(invalid("sweep.box_radius", "must be nonnegative"));
        }
        if s.window_radius < 1 {
            return Err(invalid("sweep.window_radius", "must be positive"));
        }
        if let Some(t) = s.green_t {
            if !(t > 0.0) {
                return Err(invalid("sweep.green_t", "must be positive"));
            }
        }
        if kind == ExperimentKind::VerifyLemmas && s.samples == 0 {
            return Err(invalid("sweep.samples", "must be positive"));
        }
        if let Some(d) = self.schedule.delta0 {
            if !(d > 0.0 && d < 1.0) {
                return Err(invalid("schedule.delta0", "must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<ModelSpec, CliError> {
        let m = &self.model;
        let potential = match m.potential.kind.as_str() {
            "cosine" => PotentialSpec::cosine_with(m.potential.strip, m.potential.beta),
            "zero" => PotentialSpec { strip: m.potential.strip, beta: m.potential.beta, ..PotentialSpec::zero() },
            other => return Err(invalid("model.potential.kind", format!("unknown potential {other:?}; expected \"cosine\" or \"zero\""))),
        };
        let profile = match &m.hopping.twist {
            None => HoppingProfile::Saturating { scale: m.hopping.scale },
            Some(t) => HoppingProfile::Twisted { scale: m.hopping.scale, twist: t.clone() },
        };
        let hopping = HoppingKernel { alpha: m.hopping.alpha, rho: m.hopping.rho, profile, hermitian: true };
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        let omega = m.frequency.omega.clone().unwrap_or_else(|| (0..m.dimension).map(|k| (golden * ((k + 1) as f64).sqrt()).fract()).collect());
        let mut frequency = FrequencyVector::uncertified(omega, m.frequency.tau, m.frequency.gamma);
        if let Some(n) = m.frequency.certify {
            frequency = frequency.certify(n).map_err(|e| invalid("model.frequency", e.to_string()))?;
        }
        let model = ModelSpec { potential, hopping, frequency, epsilon: m.epsilon, epsilon0: m.epsilon0, dim: m.dimension, rho_prime: m.rho_prime, dense_cap: m.dense_cap };
        model.validate().map_err(|e| invalid("model", e.to_string()))?;
        Ok(model)
    }

    pub fn build_schedule(&self, model: &ModelSpec) -> Result<ScaleSchedule, CliError> {
        let sc = &self.schedule;
        let spec = match sc.mode {
            ScheduleMode::Asymptotic => {
                let mut spec = ScheduleSpec::asymptotic_from_epsilon0(model.epsilon0, model.rho_prime, model.alpha(), model.rho(), sc.s_max);
                if let Some(d) = sc.delta0 {
                    spec.log_delta0 = d.ln();
                }
                spec
            }
            ScheduleMode::Desk => ScheduleSpec::desk(sc.delta0.unwrap_or(1e-2).ln(), model.rho_prime, model.alpha(), model.rho(), sc.s_max, sc.overrides.clone()),
        };
        build_schedule(&spec).map_err(|e| invalid("schedule", e.to_string()))
    }

    /// Canonical JSON: keys sorted, no whitespace.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }
}
