//! Run configuration, read from TOML with unknown keys rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sgn_core::integrators::IntegratorKind;
use sgn_core::operators::CoeffVariant;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    PcgBench,
    EigStudy,
    QuasiOpt,
    Converge,
    Simulate,
}

impl Command {
    pub const ALL: [Command; 5] =
        [Command::PcgBench, Command::EigStudy, Command::QuasiOpt, Command::Converge, Command::Simulate];

    pub fn name(self) -> &'static str {
        match self {
            Command::PcgBench => "pcg-bench",
            Command::EigStudy => "eig-study",
            Command::QuasiOpt => "quasi-opt",
            Command::Converge => "converge",
            Command::Simulate => "simulate",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| CliError::Config(format!("unknown command `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    /// Smooth depth over a Gaussian bump, the 1D preconditioner test.
    TestProblem,
    SquareWave,
    EllipticalBump,
    Manufactured,
    Solitary,
    Shelf,
    Barrier,
    /// Flat water at rest.
    Rest,
}

impl ScenarioName {
    pub fn dim(self) -> usize {
        match self {
            ScenarioName::EllipticalBump | ScenarioName::Barrier => 2,
            _ => 1,
        }
    }

    pub fn is_linear_problem(self) -> bool {
        matches!(self, ScenarioName::TestProblem | ScenarioName::SquareWave | ScenarioName::EllipticalBump)
    }

    pub fn default_length(self) -> f64 {
        match self {
            ScenarioName::Solitary => 100.0,
            ScenarioName::Shelf => 80.0 * std::f64::consts::PI,
            _ => 1.0,
        }
    }
}

/// Right-hand side used by the linear problems.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhsKind {
    #[default]
    Standard,
    /// Random band-limited field drawn from the run seed.
    Random,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: Option<usize>,
    pub length: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: ScenarioName,
    pub eta0: Option<f64>,
    pub h0: Option<f64>,
    /// Ellipse axis factors `(a, b)`.
    pub aspect: Option<[f64; 2]>,
    pub amplitude: Option<f64>,
    pub depth: Option<f64>,
    pub height: Option<f64>,
    pub mollifier_width: Option<f64>,
    pub crest: Option<f64>,
    #[serde(default)]
    pub rhs: RhsKind,
    pub final_time: Option<f64>,
    pub snapshot_times: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_integrator")]
    pub name: String,
    /// `Δt = cfl · Δx`, rounded down to divide the output interval.
    pub cfl: Option<f64>,
    /// Explicit time step; overrides `cfl`.
    pub dt: Option<f64>,
    #[serde(default = "one")]
    pub bootstrap_substeps: usize,
    /// Conserved quantities are recorded every this many steps.
    #[serde(default = "one")]
    pub record_every: usize,
}

fn default_integrator() -> String {
    "rk4".into()
}

fn one() -> usize {
    1
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { name: default_integrator(), cfl: None, dt: None, bootstrap_substeps: 1, record_every: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcgConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default = "yes")]
    pub warm_start: bool,
    #[serde(default)]
    pub refresh_per_stage: bool,
    #[serde(default = "unit")]
    pub safety: f64,
}

fn default_tol() -> f64 {
    1e-14
}

fn default_max_iter() -> usize {
    500
}

fn default_variant() -> String {
    "variable".into()
}

fn yes() -> bool {
    true
}

fn unit() -> f64 {
    1.0
}

impl Default for PcgConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            variant: default_variant(),
            warm_start: true,
            refresh_per_stage: false,
            safety: 1.0,
        }
    }
}

/// Parameter lists for the sweep commands. Empty lists fall back to the single
/// values in `[grid]` and `[scenario]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub eta0: Vec<f64>,
    #[serde(default)]
    pub h0: Vec<f64>,
    #[serde(default)]
    pub aspect: Vec<[f64; 2]>,
    #[serde(default)]
    pub variants: Vec<String>,
    #[serde(default)]
    pub integrators: Vec<String>,
    /// Per-integrator starting CFL constants for `converge`.
    #[serde(default)]
    pub cfl: BTreeMap<String, f64>,
    pub levels: Option<usize>,
    /// Iteration counts are reported for `ε` below this value.
    pub threshold: Option<f64>,
    /// Inclusive `[min, max]` base-2 exponents for the clock-time study.
    pub scaling_exponents: Option<[u32; 2]>,
    pub repeats: Option<usize>,
    #[serde(default = "yes")]
    pub parallel: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n: Vec::new(),
            eta0: Vec::new(),
            h0: Vec::new(),
            aspect: Vec::new(),
            variants: Vec::new(),
            integrators: Vec::new(),
            cfl: BTreeMap::new(),
            levels: None,
            threshold: None,
            scaling_exponents: None,
            repeats: None,
            parallel: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub pcg: PcgConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

pub fn parse_integrator(name: &str) -> CliResult<IntegratorKind> {
    name.parse().map_err(|_| CliError::Config(format!("unknown integrator `{name}`")))
}

pub fn parse_variant(name: &str) -> CliResult<CoeffVariant> {
    match name.to_ascii_lowercase().as_str() {
        "flat" => Ok(CoeffVariant::Flat),
        "variable" => Ok(CoeffVariant::Variable),
        "simplified" => Ok(CoeffVariant::Simplified),
        _ => Err(CliError::Config(format!("unknown coefficient variant `{name}`"))),
    }
}

fn positive(name: &str, v: Option<f64>) -> CliResult<()> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::Config(format!("`{name}` must be positive, got {x}"))),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// A minimal configuration for `scenario`; everything else takes defaults.
    pub fn for_scenario(name: ScenarioName) -> Self {
        RunConfig {
            command: None,
            seed: 0,
            grid: GridConfig::default(),
            scenario: ScenarioConfig {
                name,
                eta0: None,
                h0: None,
                aspect: None,
                amplitude: None,
                depth: None,
                height: None,
                mollifier_width: None,
                crest: None,
                rhs: RhsKind::Standard,
                final_time: None,
                snapshot_times: None,
            },
            integrator: IntegratorConfig::default(),
            pcg: PcgConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let s = &self.scenario;
        positive("grid.length", self.grid.length)?;
        if let Some(n) = self.grid.n {
            if n < 4 {
                return Err(CliError::Config(format!("grid.n must be at least 4, got {n}")));
            }
        }
        if self.sweep.n.iter().any(|&n| n < 4) {
            return Err(CliError::Config("sweep.n entries must be at least 4".into()));
        }
        for (name, v) in [
            ("scenario.amplitude", s.amplitude),
            ("scenario.depth", s.depth),
            ("scenario.mollifier_width", s.mollifier_width),
            ("scenario.final_time", s.final_time),
            ("integrator.cfl", self.integrator.cfl),
            ("integrator.dt", self.integrator.dt),
            ("pcg.tol", Some(self.pcg.tol)),
            ("pcg.safety", Some(self.pcg.safety)),
            ("sweep.threshold", self.sweep.threshold),
        ] {
            positive(name, v)?;
        }
        if let Some(a) = s.aspect {
            positive("scenario.aspect", Some(a[0].min(a[1])))?;
        }
        if self.sweep.aspect.iter().any(|a| !(a[0] > 0.0 && a[1] > 0.0)) {
            return Err(CliError::Config("sweep.aspect entries must be positive".into()));
        }
        if let Some(h) = s.height {
            if !(h >= 0.0) {
                return Err(CliError::Config(format!("scenario.height must be non-negative, got {h}")));
            }
        }
        for e in s.eta0.iter().chain(&self.sweep.eta0) {
            if !(e.is_finite()) {
                return Err(CliError::Config("eta0 must be finite".into()));
            }
        }
        if let Some(times) = &s.snapshot_times {
            if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(CliError::Config("snapshot_times must be non-negative and increasing".into()));
            }
        }
        if self.pcg.max_iter == 0 || self.integrator.record_every == 0 || self.integrator.bootstrap_substeps == 0 {
            return Err(CliError::Config("pcg.max_iter, record_every and bootstrap_substeps must be positive".into()));
        }
        if matches!(self.sweep.levels, Some(l) if l < 2) || matches!(self.sweep.repeats, Some(0)) {
            return Err(CliError::Config("sweep.levels must be at least 2 and sweep.repeats positive".into()));
        }
        if let Some([lo, hi]) = self.sweep.scaling_exponents {
            if lo < 2 || hi < lo || hi > 24 {
                return Err(CliError::Config("sweep.scaling_exponents must satisfy 2 ≤ min ≤ max ≤ 24".into()));
            }
        }
        parse_integrator(&self.integrator.name)?;
        parse_variant(&self.pcg.variant)?;
        for v in &self.sweep.variants {
            parse_variant(v)?;
        }
        for (i, name) in self.sweep.integrators.iter().enumerate() {
            parse_integrator(name)?;
            if self.sweep.integrators[..i].iter().any(|p| p.eq_ignore_ascii_case(name)) {
                return Err(CliError::Config(format!("integrator `{name}` listed twice")));
            }
        }
        for (name, c) in &self.sweep.cfl {
            parse_integrator(name)?;
            positive("sweep.cfl", Some(*c))?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.grid.n.unwrap_or(match self.scenario.name {
            ScenarioName::Shelf => 1024,
            ScenarioName::SquareWave => 128,
            ScenarioName::EllipticalBump => 16,
            _ => 256,
        })
    }

    pub fn length(&self) -> f64 {
        self.grid.length.unwrap_or_else(|| self.scenario.name.default_length())
    }

    pub fn integrator_kind(&self) -> IntegratorKind {
        parse_integrator(&self.integrator.name).expect("validated")
    }

    pub fn variant(&self) -> CoeffVariant {
        parse_variant(&self.pcg.variant).expect("validated")
    }

    pub fn threshold(&self) -> f64 {
        self.sweep.threshold.unwrap_or(1e-8)
    }
}
