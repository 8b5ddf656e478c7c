//! Declarative experiments: TOML configuration, suite execution, CSV
//! artifacts and the verification report.
//!
//! The configuration grammar is documented in [`DEFAULT_CONFIG_TOML`], which
//! spells out every key with its default value.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::basis::CollisionBasis;
use crate::collision::CollisionOperator;
use crate::error::Error;
use crate::field::{DistributionField, FrameKind};
use crate::grid::{norm_xv, MaxwellianParams, PhaseGrid, SpatialGrid, UncertainMaxwellian, VelocityGrid};
use crate::harness::{self, CollocationProblem};
use crate::sensitivity::{self, InitSensitivity, Perturbation, SensitivityStack, StackOutput};
use crate::series::{csv_error, fmt, NormSeries};
use crate::solver::{FrameSpec, Limiter, SolverConfig, TransportScheme};

/// Every key with its default value.
pub const DEFAULT_CONFIG_TOML: &str = r#"# linbgk experiment configuration; every key is optional.

[grid]
n_x = 128                      # spatial cells on the periodic domain
length = 6.283185307179586     # domain length L (2 pi)
n_v = 129                      # velocity nodes
v_halfwidth_sigmas = 8.0       # velocity half-width in thermal speeds

[physics]
rho = 1.0
u0 = 0.5
T0 = 1.0
eps_u = 0.1                    # u(z) = u0 + eps_u z
eps_T = 0.1                    # T(z) = T0 + eps_T z
knudsen = 1.0
z0 = 0.0
z_range = [-1.0, 1.0]          # admissible z

[run]
# dt = 0.01                    # fixed step; default derives it from cfl_safety
cfl_safety = 0.5
t_end = 50.0
n_max = 3                      # highest sensitivity order (at most 4)
perturbation = "both"          # velocity | temperature | both
scheme = "upwind"              # upwind | muscl
limiter = "minmod"             # minmod | van_leer | monotonized_central (muscl only)
init_sensitivity = "zero_in_frame"   # zero_in_frame | chain_rule_from_f
extra_modes = 2                # basis functions beyond span{1, v, v^2}

[initial]
profile = "sine_wave"          # sine_wave | gaussian_bump | tabulated
wavenumber = 1                 # sine_wave: sin(2 pi k x / L)
x0 = 3.141592653589793         # gaussian_bump centre
sigma_x = 0.5                  # gaussian_bump width
mode = 3                       # velocity factor chi_mode of the active frame
amplitude = 1.0
# file = "initial.csv"         # tabulated: n_x rows of n_v values, relative to this file

[verification]
suites = ["collision", "lemma31", "lemma41", "thm31", "thm32", "thm33", "thm41", "thm42", "collocation", "conservation", "acoustic", "mms"]
# fd_delta = 0.01              # default: 1e-2 of the admissible half-range
fd_points = 3                  # 3 | 5
collocation_tolerance = 1e-3
# fit_window = [25.0, 50.0]    # default: [t_end / 2, t_end]
tol_rel = 1e-6
tol_abs = 1e-10
monotone_tol = 1e-10
derivative_tol_rel = 1e-8
ratio_slack = 1.05
conservation_tol = 1e-8
collision_samples = 1000
collision_tol = 1e-12
seed = 0
acoustic_knudsen = [1.0, 0.1, 0.01]
acoustic_t_end = 2.0
mms_levels = [32, 64, 128, 256]
mms_limiter = "minmod"
mms_min_order = 1.8

[output]
directory = "linbgk-out"
# sample_every = 10            # default: max(1, floor(t_end / (500 dt))) steps
"#;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_x: usize,
    pub length: f64,
    pub n_v: usize,
    pub v_halfwidth_sigmas: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_x: 128,
            length: 2.0 * PI,
            n_v: 129,
            v_halfwidth_sigmas: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub rho: f64,
    pub u0: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub eps_u: f64,
    #[serde(rename = "eps_T")]
    pub eps_t: f64,
    pub knudsen: f64,
    pub z0: f64,
    pub z_range: [f64; 2],
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            u0: 0.5,
            t0: 1.0,
            eps_u: 0.1,
            eps_t: 0.1,
            knudsen: 1.0,
            z0: 0.0,
            z_range: [-1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationChoice {
    Velocity,
    Temperature,
    Both,
}

impl PerturbationChoice {
    pub fn kinds(self) -> Vec<Perturbation> {
        match self {
            Self::Velocity => vec![Perturbation::Velocity],
            Self::Temperature => vec![Perturbation::Temperature],
            Self::Both => vec![Perturbation::Velocity, Perturbation::Temperature],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    Upwind,
    Muscl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimiterChoice {
    Minmod,
    VanLeer,
    MonotonizedCentral,
}

impl From<LimiterChoice> for Limiter {
    fn from(l: LimiterChoice) -> Self {
        match l {
            LimiterChoice::Minmod => Limiter::Minmod,
            LimiterChoice::VanLeer => Limiter::VanLeer,
            LimiterChoice::MonotonizedCentral => Limiter::MonotonizedCentral,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitChoice {
    ZeroInFrame,
    ChainRuleFromF,
}

impl From<InitChoice> for InitSensitivity {
    fn from(c: InitChoice) -> Self {
        match c {
            InitChoice::ZeroInFrame => InitSensitivity::ZeroInFrame,
            InitChoice::ChainRuleFromF => InitSensitivity::ChainRuleFromF,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dt: Option<f64>,
    pub cfl_safety: f64,
    pub t_end: f64,
    pub n_max: usize,
    pub perturbation: PerturbationChoice,
    pub scheme: SchemeChoice,
    pub limiter: LimiterChoice,
    pub init_sensitivity: InitChoice,
    pub extra_modes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dt: None,
            cfl_safety: 0.5,
            t_end: 50.0,
            n_max: 3,
            perturbation: PerturbationChoice::Both,
            scheme: SchemeChoice::Upwind,
            limiter: LimiterChoice::Minmod,
            init_sensitivity: InitChoice::ZeroInFrame,
            extra_modes: 2,
        }
    }
}

impl RunConfig {
    pub fn transport(&self) -> TransportScheme {
        match self.scheme {
            SchemeChoice::Upwind => TransportScheme::Upwind,
            SchemeChoice::Muscl => TransportScheme::Muscl(self.limiter.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    SineWave,
    GaussianBump,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub profile: ProfileKind,
    pub wavenumber: u32,
    pub x0: f64,
    pub sigma_x: f64,
    pub mode: usize,
    pub amplitude: f64,
    pub file: Option<PathBuf>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            profile: ProfileKind::SineWave,
            wavenumber: 1,
            x0: PI,
            sigma_x: 0.5,
            mode: 3,
            amplitude: 1.0,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerificationConfig {
    pub suites: Vec<String>,
    pub fd_delta: Option<f64>,
    pub fd_points: usize,
    pub collocation_tolerance: f64,
    pub fit_window: Option<[f64; 2]>,
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub monotone_tol: f64,
    pub derivative_tol_rel: f64,
    pub ratio_slack: f64,
    pub conservation_tol: f64,
    pub collision_samples: usize,
    pub collision_tol: f64,
    pub seed: u64,
    pub acoustic_knudsen: Vec<f64>,
    pub acoustic_t_end: f64,
    pub mms_levels: Vec<usize>,
    pub mms_limiter: LimiterChoice,
    pub mms_min_order: f64,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            suites: Suite::ALL.iter().map(|s| s.name().to_string()).collect(),
            fd_delta: None,
            fd_points: 3,
            collocation_tolerance: 1e-3,
            fit_window: None,
            tol_rel: harness::DEFAULT_TOL_REL,
            tol_abs: harness::DEFAULT_TOL_ABS,
            monotone_tol: 1e-10,
            derivative_tol_rel: 1e-8,
            ratio_slack: 1.05,
            conservation_tol: 1e-8,
            collision_samples: 1000,
            collision_tol: 1e-12,
            seed: 0,
            acoustic_knudsen: vec![1.0, 0.1, 0.01],
            acoustic_t_end: 2.0,
            mms_levels: vec![32, 64, 128, 256],
            mms_limiter: LimiterChoice::Minmod,
            mms_min_order: 1.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub sample_every: Option<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("linbgk-out"),
            sample_every: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub run: RunConfig,
    pub initial: InitialConfig,
    pub verification: VerificationConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Suite {
    Collision,
    Lemma31,
    Lemma41,
    Thm31,
    Thm32,
    Thm33,
    Thm41,
    Thm42,
    Collocation,
    Conservation,
    Acoustic,
    Mms,
}

impl Suite {
    pub const ALL: [Suite; 12] = [
        Suite::Collision,
        Suite::Lemma31,
        Suite::Lemma41,
        Suite::Thm31,
        Suite::Thm32,
        Suite::Thm33,
        Suite::Thm41,
        Suite::Thm42,
        Suite::Collocation,
        Suite::Conservation,
        Suite::Acoustic,
        Suite::Mms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Collision => "collision",
            Suite::Lemma31 => "lemma31",
            Suite::Lemma41 => "lemma41",
            Suite::Thm31 => "thm31",
            Suite::Thm32 => "thm32",
            Suite::Thm33 => "thm33",
            Suite::Thm41 => "thm41",
            Suite::Thm42 => "thm42",
            Suite::Collocation => "collocation",
            Suite::Conservation => "conservation",
            Suite::Acoustic => "acoustic",
            Suite::Mms => "mms",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Suite::Collision => "coercivity, symmetry, null space and conservation of L on random slices",
            Suite::Lemma31 => "||g(t)|| nonincreasing in the shifted frame",
            Suite::Lemma41 => "||p(t)|| nonincreasing in the scaled frame",
            Suite::Thm31 => "||dx g(t)|| <= ||dx g_i||",
            Suite::Thm32 => "||h(t)|| <= ||h(0)|| + |eps_u| ||dx g_i|| t and late growth exponent <= 1.1",
            Suite::Thm33 => "||h^(n)(t)|| / t^n bounded on the late window, n = 2, 3",
            Suite::Thm41 => "||q(t)|| below the explicit linear envelope",
            Suite::Thm42 => "||q^(n)(t)|| / t^n bounded on the late window, n = 2, 3",
            Suite::Collocation => "direct first sensitivity against finite differences in z (Richardson ratio)",
            Suite::Conservation => "drift of the x-integrated weighted mass, momentum and energy",
            Suite::Acoustic => "acoustic residual decreasing in Kn and eigen-speeds u +- sqrt(3T), u",
            Suite::Mms => "manufactured-solution convergence order of the transport schemes",
        }
    }

    pub fn from_name(name: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name)
    }

    fn needs(self) -> Option<Perturbation> {
        match self {
            Suite::Lemma31 | Suite::Thm31 | Suite::Thm32 | Suite::Thm33 => Some(Perturbation::Velocity),
            Suite::Lemma41 | Suite::Thm41 | Suite::Thm42 => Some(Perturbation::Temperature),
            _ => None,
        }
    }

    fn min_order(self) -> usize {
        match self {
            Suite::Thm32 | Suite::Thm41 | Suite::Collocation => 1,
            Suite::Thm33 | Suite::Thm42 => 2,
            _ => 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<String>),
}

/// Reads, parses and validates a configuration file. A relative
/// `initial.file` is resolved against the file's directory.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = ExperimentConfig::from_toml_str(&text)
        .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    if let Some(file) = &cfg.initial.file {
        if file.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.initial.file = Some(base.join(file));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Parses without validating.
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn suites(&self) -> Vec<Suite> {
        let mut s: Vec<Suite> = self
            .verification
            .suites
            .iter()
            .filter_map(|n| Suite::from_name(n))
            .collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn fd_delta(&self) -> f64 {
        let [lo, hi] = self.physics.z_range;
        self.verification.fd_delta.unwrap_or(1e-2 * 0.5 * (hi - lo))
    }

    pub fn fit_window(&self) -> (f64, f64) {
        match self.verification.fit_window {
            Some([a, b]) => (a, b),
            None => (0.5 * self.run.t_end, self.run.t_end),
        }
    }

    /// Collocation nodes `z0 + k delta` for the finest and coarsest delta.
    fn stencil_nodes(&self) -> Vec<f64> {
        let half = (self.verification.fd_points.max(1) - 1) / 2;
        let d = self.fd_delta();
        (0..=2 * half).map(|k| self.physics.z0 + (k as f64 - half as f64) * d).collect()
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let g = &self.grid;
        if g.n_x < 4 {
            errs.push(format!("grid.n_x: {} cells, need at least 4", g.n_x));
        }
        if !(g.length > 0.0 && g.length.is_finite()) {
            errs.push(format!("grid.length: {} must be positive", g.length));
        }
        if g.n_v < 3 {
            errs.push(format!("grid.n_v: {} nodes, need at least 3", g.n_v));
        }
        if !(g.v_halfwidth_sigmas > 0.0 && g.v_halfwidth_sigmas.is_finite()) {
            errs.push(format!("grid.v_halfwidth_sigmas: {} must be positive", g.v_halfwidth_sigmas));
        }

        let p = &self.physics;
        if !(p.rho > 0.0 && p.rho.is_finite()) {
            errs.push(format!("physics.rho: {} must be positive", p.rho));
        }
        if !(p.t0 > 0.0 && p.t0.is_finite()) {
            errs.push(format!("physics.T0: {} must be positive", p.t0));
        }
        if !(p.knudsen > 0.0 && p.knudsen.is_finite()) {
            errs.push(format!("physics.knudsen: {} must be positive", p.knudsen));
        }
        if !p.u0.is_finite() || !p.eps_u.is_finite() || !p.eps_t.is_finite() {
            errs.push("physics: u0, eps_u and eps_T must be finite".into());
        }
        let [z_lo, z_hi] = p.z_range;
        if !(z_lo <= z_hi) {
            errs.push(format!("physics.z_range: [{z_lo}, {z_hi}] is empty"));
        } else if !(p.z0 >= z_lo && p.z0 <= z_hi) {
            errs.push(format!("physics.z0: {} outside z_range [{z_lo}, {z_hi}]", p.z0));
        }
        let kinds = self.run.perturbation.kinds();
        if kinds.contains(&Perturbation::Temperature) {
            for z in [z_lo, z_hi] {
                let t = p.t0 + p.eps_t * z;
                if !(t > 0.0) {
                    errs.push(format!("physics.eps_T: T(z = {z}) = {t} is not positive on z_range"));
                }
            }
        }

        let r = &self.run;
        if let Some(dt) = r.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                errs.push(format!("run.dt: {dt} must be positive"));
            }
        }
        if !(r.cfl_safety > 0.0 && r.cfl_safety <= 1.0) {
            errs.push(format!("run.cfl_safety: {} not in (0, 1]", r.cfl_safety));
        }
        if !(r.t_end >= 0.0 && r.t_end.is_finite()) {
            errs.push(format!("run.t_end: {} must be non-negative", r.t_end));
        }
        if r.n_max > 4 {
            errs.push(format!("run.n_max: {} exceeds 4", r.n_max));
        }

        let i = &self.initial;
        let n_modes = 3 + r.extra_modes;
        if i.mode >= n_modes {
            errs.push(format!(
                "initial.mode: chi_{} needs run.extra_modes >= {}",
                i.mode,
                i.mode.saturating_sub(2)
            ));
        }
        if !i.amplitude.is_finite() {
            errs.push("initial.amplitude must be finite".into());
        }
        match i.profile {
            ProfileKind::GaussianBump if !(i.sigma_x > 0.0) => {
                errs.push(format!("initial.sigma_x: {} must be positive", i.sigma_x));
            }
            ProfileKind::Tabulated => match &i.file {
                None => errs.push("initial.file: required by the tabulated profile".into()),
                Some(f) => {
                    if let Err(e) = read_table(f, g.n_x, g.n_v) {
                        errs.push(format!("initial.file: {e}"));
                    }
                    if r.init_sensitivity == InitChoice::ChainRuleFromF {
                        errs.push(
                            "run.init_sensitivity: chain_rule_from_f needs velocity derivatives, which a tabulated profile does not provide"
                                .into(),
                        );
                    }
                }
            },
            _ => {}
        }

        let v = &self.verification;
        let mut requested = Vec::new();
        for name in &v.suites {
            match Suite::from_name(name) {
                Some(s) => requested.push(s),
                None => errs.push(format!(
                    "verification.suites: unknown suite '{name}' (known: {})",
                    Suite::ALL.map(Suite::name).join(", ")
                )),
            }
        }
        for s in &requested {
            if let Some(k) = s.needs() {
                if !kinds.contains(&k) {
                    errs.push(format!(
                        "verification.suites: '{}' needs the {k:?} perturbation, run.perturbation excludes it",
                        s.name()
                    ));
                }
            }
            if r.n_max < s.min_order() {
                errs.push(format!(
                    "verification.suites: '{}' needs run.n_max >= {}",
                    s.name(),
                    s.min_order()
                ));
            }
        }
        if v.fd_points != 3 && v.fd_points != 5 {
            errs.push(format!("verification.fd_points: {} (use 3 or 5)", v.fd_points));
        }
        let delta = self.fd_delta();
        if !(delta > 0.0 && delta.is_finite()) {
            errs.push(format!("verification.fd_delta: {delta} must be positive"));
        } else if requested.contains(&Suite::Collocation) && (v.fd_points == 3 || v.fd_points == 5) {
            for z in self.stencil_nodes() {
                if !(z >= z_lo && z <= z_hi) {
                    errs.push(format!(
                        "verification.fd_delta: collocation node z = {z} outside z_range [{z_lo}, {z_hi}]"
                    ));
                }
                if kinds.contains(&Perturbation::Temperature) {
                    let t = p.t0 + p.eps_t * z;
                    if !(t > 0.0) {
                        errs.push(format!(
                            "physics.eps_T: T(z = {z}) = {t} is not positive at a collocation node"
                        ));
                    }
                }
            }
        }
        if let Some([a, b]) = v.fit_window {
            if !(a < b && a >= 0.0 && b <= r.t_end) {
                errs.push(format!("verification.fit_window: [{a}, {b}] not inside [0, t_end]"));
            }
        }
        for (name, x) in [
            ("tol_rel", v.tol_rel),
            ("tol_abs", v.tol_abs),
            ("monotone_tol", v.monotone_tol),
            ("derivative_tol_rel", v.derivative_tol_rel),
            ("conservation_tol", v.conservation_tol),
            ("collision_tol", v.collision_tol),
            ("collocation_tolerance", v.collocation_tolerance),
        ] {
            if !(x >= 0.0) {
                errs.push(format!("verification.{name}: {x} must be non-negative"));
            }
        }
        if !(v.ratio_slack >= 1.0) {
            errs.push(format!("verification.ratio_slack: {} must be at least 1", v.ratio_slack));
        }
        if v.collision_samples == 0 {
            errs.push("verification.collision_samples: must be positive".into());
        }
        if v.acoustic_knudsen.is_empty() || v.acoustic_knudsen.iter().any(|k| !(*k > 0.0)) {
            errs.push("verification.acoustic_knudsen: needs positive values".into());
        }
        if !(v.acoustic_t_end > 0.0) {
            errs.push(format!("verification.acoustic_t_end: {} must be positive", v.acoustic_t_end));
        }
        if v.mms_levels.len() < 2 || v.mms_levels.iter().any(|&n| n < 4) || v.mms_levels.windows(2).any(|w| w[1] <= w[0]) {
            errs.push("verification.mms_levels: need at least two increasing levels of >= 4 cells".into());
        }
        if self.output.sample_every == Some(0) {
            errs.push("output.sample_every: must be positive".into());
        }

        // numerical setup: basis resolution and step restrictions
        if errs.is_empty() {
            for k in &kinds {
                match StudySetup::new(self, *k) {
                    Err(e) => errs.push(format!("{:?} study: {e}", k)),
                    Ok(setup) => {
                        for z in self.stencil_nodes().into_iter().filter(|z| setup.family.contains(*z)) {
                            let frame = sensitivity::frame_at(*k, &setup.family, z, &setup.grid);
                            if let Err(e) = frame.and_then(|f| setup.cfg.check_cfl(&setup.grid, &f)) {
                                errs.push(format!("run.dt: {e} at z = {z}"));
                            }
                        }
                    }
                }
            }
            if self.suites().contains(&Suite::Acoustic) {
                if let Err(e) = AcousticSetup::new(self) {
                    errs.push(format!("acoustic setup: {e}"));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

/// Reads `n_x` rows of `n_v` comma-separated values; `#` starts a comment.
fn read_table(path: &Path, n_x: usize, n_v: usize) -> Result<Vec<f64>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let mut data = Vec::with_capacity(n_x * n_v);
    let mut rows = 0;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        if rec.len() != n_v {
            return Err(format!("{}: row {} has {} values, expected {n_v}", path.display(), line + 1, rec.len()));
        }
        for (j, s) in rec.iter().enumerate() {
            let x: f64 = s
                .parse()
                .map_err(|_| format!("{}: row {}, column {}: '{s}' is not a number", path.display(), line + 1, j + 1))?;
            data.push(x);
        }
        rows += 1;
    }
    if rows != n_x {
        return Err(format!("{}: {rows} rows, expected {n_x}", path.display()));
    }
    Ok(data)
}

/// Spatial and velocity factors of the configured initial data.
struct Profile {
    kind: ProfileKind,
    wavenumber: f64,
    x0: f64,
    sigma: f64,
    length: f64,
    amplitude: f64,
    mode: usize,
    table: Option<Vec<f64>>,
}

impl Profile {
    fn new(cfg: &ExperimentConfig) -> crate::Result<Self> {
        let i = &cfg.initial;
        let table = match (i.profile, &i.file) {
            (ProfileKind::Tabulated, Some(f)) => {
                Some(read_table(f, cfg.grid.n_x, cfg.grid.n_v).map_err(Error::InvalidArgument)?)
            }
            (ProfileKind::Tabulated, None) => {
                return Err(Error::InvalidArgument("tabulated profile without a file".into()))
            }
            _ => None,
        };
        Ok(Self {
            kind: i.profile,
            wavenumber: i.wavenumber as f64,
            x0: i.x0,
            sigma: i.sigma_x,
            length: cfg.grid.length,
            amplitude: i.amplitude,
            mode: i.mode,
            table,
        })
    }

    /// Spatial factor; the tabulated profile falls back to the first sine mode.
    fn spatial(&self, x: f64) -> f64 {
        match self.kind {
            ProfileKind::GaussianBump => {
                let mut d = (x - self.x0).rem_euclid(self.length);
                if d > 0.5 * self.length {
                    d -= self.length;
                }
                self.amplitude * (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            }
            ProfileKind::SineWave => self.amplitude * (2.0 * PI * self.wavenumber * x / self.length).sin(),
            ProfileKind::Tabulated => self.amplitude * (2.0 * PI * x / self.length).sin(),
        }
    }

    /// Data in the active frame, with the velocity factor read at `v * stretch + shift`.
    fn field(&self, grid: &PhaseGrid, basis: &CollisionBasis, frame: FrameKind, stretch: f64, shift: f64) -> DistributionField {
        if let Some(t) = &self.table {
            let mut f = DistributionField::from_vec(t.clone(), grid.n_x(), grid.n_v(), frame).expect("validated shape");
            f.scale(self.amplitude);
            return f;
        }
        if stretch == 1.0 && shift == 0.0 {
            let chi = basis.chi(self.mode);
            let mut f = DistributionField::zeros_like(grid, frame);
            for (i, &x) in grid.x.nodes().iter().enumerate() {
                let s = self.spatial(x);
                for (o, c) in f.row_mut(i).iter_mut().zip(chi) {
                    *o = s * c;
                }
            }
            return f;
        }
        DistributionField::from_fn(grid, frame, |x, v| self.spatial(x) * basis.eval(self.mode, v * stretch + shift))
    }
}

/// Grid, operator, family and nominal configuration of one perturbation study.
struct StudySetup {
    perturbation: Perturbation,
    grid: PhaseGrid,
    op: CollisionOperator,
    family: UncertainMaxwellian,
    z0: f64,
    frame: FrameSpec,
    cfg: SolverConfig,
}

impl StudySetup {
    fn new(cfg: &ExperimentConfig, perturbation: Perturbation) -> crate::Result<Self> {
        let p = &cfg.physics;
        let g = &cfg.grid;
        let x = SpatialGrid::new(g.n_x, g.length)?;
        let [z_lo, z_hi] = p.z_range;
        // the scaled frame carries no bulk velocity
        let (family, v, basis) = match perturbation {
            Perturbation::Velocity => {
                let base = MaxwellianParams::new(p.rho, p.u0, p.t0)?;
                let fam = UncertainMaxwellian::new(base, p.eps_u, 0.0, z_lo, z_hi)?;
                let v = VelocityGrid::centered(g.n_v, 0.0, g.v_halfwidth_sigmas * p.t0.sqrt())?;
                let basis = CollisionBasis::zero_mean(p.rho, p.t0, &v, cfg.run.extra_modes)?;
                (fam, v, basis)
            }
            Perturbation::Temperature => {
                let base = MaxwellianParams::new(p.rho, 0.0, p.t0)?;
                let fam = UncertainMaxwellian::new(base, 0.0, p.eps_t, z_lo, z_hi)?;
                let v = VelocityGrid::centered(g.n_v, 0.0, g.v_halfwidth_sigmas)?;
                let basis = CollisionBasis::unit(p.rho, &v, cfg.run.extra_modes)?;
                (fam, v, basis)
            }
        };
        let grid = PhaseGrid::new(x, v);
        let frame = sensitivity::frame_at(perturbation, &family, p.z0, &grid)?;
        let mut solver_cfg = match cfg.run.dt {
            Some(dt) => SolverConfig {
                dt,
                t_end: cfg.run.t_end,
                knudsen: p.knudsen,
                cfl_safety: cfg.run.cfl_safety,
                scheme: cfg.run.transport(),
                sample_stride: None,
            },
            None => SolverConfig::from_cfl(&grid, &frame, cfg.run.t_end, p.knudsen, cfg.run.cfl_safety, cfg.run.transport())?,
        };
        solver_cfg.sample_stride = cfg.output.sample_every;
        solver_cfg.validate()?;
        solver_cfg.check_cfl(&grid, &frame)?;
        Ok(Self {
            perturbation,
            grid,
            op: CollisionOperator::new(basis),
            family,
            z0: p.z0,
            frame,
            cfg: solver_cfg,
        })
    }

    fn name(&self) -> &'static str {
        match self.perturbation {
            Perturbation::Velocity => "velocity",
            Perturbation::Temperature => "temperature",
        }
    }

    /// Active-frame initial data of the member at `z`.
    fn initial_at(&self, profile: &Profile, mode: InitSensitivity, z: f64) -> DistributionField {
        let kind = self.perturbation.frame();
        let basis = self.op.basis();
        match (mode, self.perturbation) {
            (InitSensitivity::ZeroInFrame, _) => profile.field(&self.grid, basis, kind, 1.0, 0.0),
            (InitSensitivity::ChainRuleFromF, Perturbation::Velocity) => {
                let shift = self.family.u(z) - self.family.u(self.z0);
                profile.field(&self.grid, basis, kind, 1.0, shift)
            }
            (InitSensitivity::ChainRuleFromF, Perturbation::Temperature) => {
                let stretch = (self.family.temp(z) / self.family.temp(self.z0)).sqrt();
                profile.field(&self.grid, basis, kind, stretch, 0.0)
            }
        }
    }

    fn initial_stack(&self, profile: &Profile, mode: InitSensitivity, n_max: usize) -> crate::Result<SensitivityStack> {
        match mode {
            InitSensitivity::ZeroInFrame => SensitivityStack::new(
                self.initial_at(profile, mode, self.z0),
                n_max,
                self.perturbation,
                self.family,
                self.z0,
            ),
            InitSensitivity::ChainRuleFromF => {
                // f_i(x, c) = psi(x, c - u(z0)) or psi(x, c / sqrt(T(z0)))
                let basis = self.op.basis();
                let (u, s) = (self.family.u(self.z0), self.family.temp(self.z0).sqrt());
                let pert = self.perturbation;
                let f = move |k: usize, x: f64, c: f64| -> f64 {
                    let sx = profile.spatial(x);
                    match pert {
                        Perturbation::Velocity => sx * basis.eval_derivative(profile.mode, k, c - u),
                        Perturbation::Temperature => {
                            sx * basis.eval_derivative(profile.mode, k, c / s) / s.powi(k as i32)
                        }
                    }
                };
                sensitivity::initial_stack(&f, mode, n_max, pert, self.family, self.z0, &self.grid)
            }
        }
    }
}

/// Original-frame setup of the acoustic comparison.
struct AcousticSetup {
    grid: PhaseGrid,
    op: CollisionOperator,
}

impl AcousticSetup {
    fn new(cfg: &ExperimentConfig) -> crate::Result<Self> {
        let p = &cfg.physics;
        let params = MaxwellianParams::new(p.rho, p.u0, p.t0)?;
        let v = VelocityGrid::centered(cfg.grid.n_v, p.u0, cfg.grid.v_halfwidth_sigmas * p.t0.sqrt())?;
        let grid = PhaseGrid::new(SpatialGrid::new(cfg.grid.n_x, cfg.grid.length)?, v);
        let op = CollisionOperator::new(CollisionBasis::star(params, &grid.v, 0)?);
        Ok(Self { grid, op })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: Suite,
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<CheckResult>,
    /// Logged constants and fits.
    pub notes: Vec<String>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, suite: Suite, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.suite == suite && c.name == name)
    }

    fn push(&mut self, suite: Suite, name: impl Into<String>, pass: bool, value: f64, limit: f64, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            suite,
            name: name.into(),
            pass,
            value,
            limit,
            detail: detail.into(),
        });
    }

    pub fn to_text(&self, cfg: &ExperimentConfig) -> String {
        let mut s = String::new();
        let g = &cfg.grid;
        let p = &cfg.physics;
        let _ = writeln!(s, "linbgk verification report");
        let _ = writeln!(
            s,
            "grid {}x{} on L = {}, v half-width {} sigma; rho = {}, u0 = {}, T0 = {}, eps_u = {}, eps_T = {}, Kn = {}, z0 = {}",
            g.n_x, g.n_v, g.length, g.v_halfwidth_sigmas, p.rho, p.u0, p.t0, p.eps_u, p.eps_t, p.knudsen, p.z0
        );
        let _ = writeln!(s, "t_end = {}, n_max = {}, scheme {:?}", cfg.run.t_end, cfg.run.n_max, cfg.run.transport());
        let _ = writeln!(s);
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {}/{}: value {:.6e}, limit {:.6e}{}",
                if c.pass { "PASS" } else { "FAIL" },
                c.suite.name(),
                c.name,
                c.value,
                c.limit,
                if c.detail.is_empty() { String::new() } else { format!(" ({})", c.detail) }
            );
        }
        if !self.notes.is_empty() {
            let _ = writeln!(s, "\nnotes:");
            for n in &self.notes {
                let _ = writeln!(s, "  {n}");
            }
        }
        if !self.warnings.is_empty() {
            let _ = writeln!(s, "\nwarnings:");
            for w in &self.warnings {
                let _ = writeln!(s, "  {w}");
            }
        }
        let failed = self.checks.iter().filter(|c| !c.pass).count();
        let _ = writeln!(s, "\n{} checks, {} failed: {}", self.checks.len(), failed, if failed == 0 { "PASS" } else { "FAIL" });
        s
    }

    pub fn summary_csv(&self) -> crate::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["suite", "check", "value", "limit", "pass", "detail"]).map_err(csv_error)?;
        for c in &self.checks {
            w.write_record([
                c.suite.name(),
                &c.name,
                &fmt(c.value),
                &fmt(c.limit),
                if c.pass { "true" } else { "false" },
                &c.detail,
            ])
            .map_err(csv_error)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// A named output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
}

impl ExperimentOutcome {
    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    /// Writes every artifact into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for a in &self.artifacts {
            std::fs::write(dir.join(&a.name), &a.contents)?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] Error),
}

impl RunError {
    /// Exit status: 2 for configuration errors, 3 for numerical aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Solver(Error::Io(_)) => 2,
            RunError::Solver(_) => 3,
        }
    }
}

/// Long-format dump `i, j, value` of a field.
pub fn field_csv(f: &DistributionField) -> crate::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["i", "j", "value"]).map_err(csv_error)?;
    for (i, row) in f.rows().enumerate() {
        for (j, x) in row.iter().enumerate() {
            w.write_record([i.to_string(), j.to_string(), fmt(*x)]).map_err(csv_error)?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn series_csv(series: &NormSeries) -> crate::Result<Vec<u8>> {
    let mut buf = Vec::new();
    series.write_csv(&mut buf)?;
    Ok(buf)
}

struct StudyRun {
    setup: StudySetup,
    output: StackOutput,
    initial: SensitivityStack,
}

/// Runs the requested suites. Nothing is written to disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, RunError> {
    cfg.validate()?;
    let suites = cfg.suites();
    let has = |s: Suite| suites.contains(&s);
    let profile = Profile::new(cfg)?;
    let init_mode: InitSensitivity = cfg.run.init_sensitivity.into();
    let mut report = Report::default();
    let mut artifacts = Vec::new();

    let kinds = cfg.run.perturbation.kinds();
    let study_suites = [
        Suite::Lemma31,
        Suite::Lemma41,
        Suite::Thm31,
        Suite::Thm32,
        Suite::Thm33,
        Suite::Thm41,
        Suite::Thm42,
        Suite::Collocation,
        Suite::Conservation,
    ];
    let wants_study = |k: Perturbation| {
        suites.is_empty()
            || study_suites
                .iter()
                .any(|s| has(*s) && s.needs().is_none_or(|need| need == k))
    };
    let n_max = if suites.is_empty() { 0 } else { cfg.run.n_max };
    let setups: Vec<StudySetup> = kinds
        .iter()
        .filter(|k| wants_study(**k))
        .map(|k| StudySetup::new(cfg, *k))
        .collect::<crate::Result<_>>()?;

    // main hierarchy runs, with snapshots for the collocation comparison
    let studies: Vec<StudyRun> = setups
        .into_par_iter()
        .map(|setup| -> crate::Result<StudyRun> {
            let n = setup.cfg.n_steps();
            let snaps: Vec<usize> = if has(Suite::Collocation) {
                (1..=10).map(|k| n * k / 10).filter(|&s| s > 0).collect()
            } else {
                Vec::new()
            };
            let initial = setup.initial_stack(&profile, init_mode, n_max)?;
            let output = sensitivity::solve_stack(&initial, &setup.cfg, &setup.op, &setup.frame, &setup.grid, &snaps)?;
            Ok(StudyRun { setup, output, initial })
        })
        .collect::<crate::Result<_>>()?;

    let window = cfg.fit_window();
    let v = &cfg.verification;
    let mut studies = studies;
    for study in &mut studies {
        register_envelopes(study, &mut report)?;
    }

    if has(Suite::Collision) {
        collision_checks(cfg, &mut report)?;
    }

    for study in &studies {
        let series = &study.output.series;
        let name = study.setup.name();
        let (mono_suite, rate_suite) = match study.setup.perturbation {
            Perturbation::Velocity => (Suite::Lemma31, Suite::Thm33),
            Perturbation::Temperature => (Suite::Lemma41, Suite::Thm42),
        };
        if has(mono_suite) {
            let env = if mono_suite == Suite::Lemma31 { "lemma31" } else { "lemma41" };
            let m = harness::verify_nonincreasing(&series.times, &series.norms[0], v.monotone_tol);
            report.push(
                mono_suite,
                "norm_nonincreasing",
                m.pass,
                m.max_increase,
                v.monotone_tol,
                monotone_detail(&m),
            );
            let mw = harness::verify_nonincreasing(&series.times, &series.weighted_norms[0], v.monotone_tol);
            report.push(
                mono_suite,
                "weighted_norm_nonincreasing",
                mw.pass,
                mw.max_increase,
                v.monotone_tol,
                monotone_detail(&mw),
            );
            let e = harness::verify_envelope(series, 0, env, v.tol_rel, v.tol_abs)?;
            report.push(mono_suite, "bounded_by_initial", e.pass, e.max_violation, 0.0, envelope_detail(&e));
        }
        if has(Suite::Thm31) && study.setup.perturbation == Perturbation::Velocity {
            let d = &series.aux["dx_norm_order0"];
            let e = harness::check_against("thm31", &series.times, d, &series.envelopes["thm31"], v.derivative_tol_rel, 0.0)?;
            let ratio = d.iter().fold(0.0f64, |m, x| m.max(*x)) / d[0];
            report.push(
                Suite::Thm31,
                "dx_norm_bounded",
                e.pass,
                ratio - 1.0,
                v.derivative_tol_rel,
                format!("max ||dx g(t)|| / ||dx g_i|| - 1; {}", envelope_detail(&e)),
            );
        }
        if has(Suite::Thm32) && study.setup.perturbation == Perturbation::Velocity {
            let e = harness::verify_envelope(series, 1, "thm32", v.tol_rel, v.tol_abs)?;
            report.push(Suite::Thm32, "linear_envelope", e.pass, e.max_violation, 0.0, envelope_detail(&e));
            growth_check(&mut report, Suite::Thm32, series, 1, window);
        }
        if has(Suite::Thm41) && study.setup.perturbation == Perturbation::Temperature {
            let e = harness::verify_envelope(series, 1, "thm41", v.tol_rel, v.tol_abs)?;
            report.push(Suite::Thm41, "linear_envelope", e.pass, e.max_violation, 0.0, envelope_detail(&e));
        }
        if has(rate_suite) {
            for n in 2..=study.setup.perturbation_orders(cfg.run.n_max) {
                if let Ok(fit) = harness::fit_growth_exponent(&series.times, &series.norms[n], window) {
                    report.notes.push(format!(
                        "{} order {n} fit on [{}, {}]: exponent {:.4}, r2 {:.4}",
                        rate_suite.name(),
                        window.0,
                        window.1,
                        fit.exponent,
                        fit.r2
                    ));
                }
                match harness::bounded_power_ratio(&series.times, &series.norms[n], n as i32, window, v.ratio_slack) {
                    Ok(r) => report.push(
                        rate_suite,
                        format!("order{n}_over_t{n}"),
                        r.pass,
                        r.max_value / r.start_value,
                        v.ratio_slack,
                        format!(
                            "window max / start value of ||{}^({n})|| / t^{n} on [{}, {}]; start {:.6e}, max {:.6e}, nonincreasing {}",
                            if rate_suite == Suite::Thm33 { "h" } else { "q" },
                            window.0,
                            window.1,
                            r.start_value,
                            r.max_value,
                            r.nonincreasing
                        ),
                    ),
                    Err(e) => report.push(rate_suite, format!("order{n}_over_t{n}"), false, f64::NAN, v.ratio_slack, e.to_string()),
                }
            }
        }
        if has(Suite::Conservation) {
            let g0 = &study.initial.fields()[0];
            let scale = harness::moment_scales(g0, &study.setup.op, study.setup.grid.x.spacing());
            let c = harness::conservation_audit(series, scale, v.conservation_tol)?;
            let worst = c.drift.iter().fold(0.0f64, |m, x| m.max(*x));
            report.push(
                Suite::Conservation,
                format!("moment_drift[{name}]"),
                c.pass,
                worst,
                v.conservation_tol,
                format!(
                    "relative drift mass {:.3e}, momentum {:.3e}, energy {:.3e}",
                    c.drift[0], c.drift[1], c.drift[2]
                ),
            );
        }
        artifacts.push(Artifact {
            name: format!("{name}.csv"),
            contents: series_csv(series)?,
        });
    }

    if has(Suite::Collocation) {
        for study in &studies {
            let (check, csv) = collocation_checks(study, cfg, &profile, init_mode, &mut report)?;
            if let Some(w) = check {
                report.warnings.push(w);
            }
            artifacts.push(Artifact {
                name: format!("collocation_{}.csv", study.setup.name()),
                contents: csv,
            });
        }
    }

    if has(Suite::Acoustic) {
        artifacts.push(acoustic_checks(cfg, &profile, &mut report)?);
    }
    if has(Suite::Mms) {
        artifacts.push(mms_checks(cfg, &mut report)?);
    }

    artifacts.push(Artifact {
        name: "summary.csv".into(),
        contents: report.summary_csv()?,
    });
    artifacts.push(Artifact {
        name: "report.txt".into(),
        contents: report.to_text(cfg).into_bytes(),
    });
    Ok(ExperimentOutcome { report, artifacts })
}

impl StudySetup {
    /// Highest order checked by the `t^n` suites.
    fn perturbation_orders(&self, n_max: usize) -> usize {
        n_max.min(3)
    }
}

fn register_envelopes(study: &mut StudyRun, report: &mut Report) -> crate::Result<()> {
    let setup = &study.setup;
    let series = &mut study.output.series;
    let init = &study.initial;
    let grid = &setup.grid;
    let w0 = norm_xv(&init.fields()[0], grid)?;
    let dx0 = norm_xv(&init.fields()[0].dx_central(grid.x.spacing()), grid)?;
    let q0 = match init.fields().get(1) {
        Some(f) => Some(norm_xv(f, grid)?),
        None => None,
    };
    match setup.perturbation {
        Perturbation::Velocity => {
            series.add_envelope("lemma31", |_| w0);
            series.add_envelope("thm31", |_| dx0);
            if let Some(h0) = q0 {
                let slope = setup.family.eps_u.abs() * dx0;
                series.add_envelope("thm32", |t| h0 + slope * t);
                report.notes.push(format!(
                    "thm32 envelope: ||h(0)|| = {h0:.6e}, slope |eps_u| ||dx g_i|| = {slope:.6e}"
                ));
            }
        }
        Perturbation::Temperature => {
            series.add_envelope("lemma41", |_| w0);
            if let Some(q) = q0 {
                let c = harness::temperature_bound_constants(
                    &init.fields()[0],
                    &setup.op,
                    &setup.frame,
                    grid,
                    &setup.family,
                    setup.z0,
                )?;
                series.add_envelope("thm41", |t| q + c.slope * t);
                report.notes.push(format!(
                    "thm41 envelope: ||q(0)|| = {q:.6e}, |d_z sqrt(T) / sqrt(T)| = {:.6e}, K_eq = {:.6e}, d = {}, ||p_i|| = {:.6e}, ||dt p_i|| = {:.6e}, slope = {:.6e}",
                    c.relative_rate, c.k_eq, c.d, c.p_norm, c.dtp_norm, c.slope
                ));
            }
        }
    }
    report.notes.push(format!(
        "{} study: dt = {:.6e}, {} steps, sampled every {}, norm-equivalence factor K_eq = {:.6e}",
        setup.name(),
        setup.cfg.step_size(),
        setup.cfg.n_steps(),
        setup.cfg.sample_every(),
        setup.op.norm_equivalence()
    ));
    Ok(())
}

fn monotone_detail(m: &harness::MonotoneReport) -> String {
    match m.first_violation {
        None => "no increase beyond tolerance".into(),
        Some(t) => format!(
            "{} increases, first at t = {t:.4}, largest relative increase {:.3e}",
            m.n_increases, m.max_relative_increase
        ),
    }
}

fn envelope_detail(e: &harness::EnvelopeReport) -> String {
    format!("largest norm - allowed = {:.3e} at t = {:.4}", e.max_violation, e.worst_time)
}

fn growth_check(report: &mut Report, suite: Suite, series: &NormSeries, order: usize, window: (f64, f64)) {
    let limit = 1.1;
    match harness::fit_growth_exponent(&series.times, &series.norms[order], window) {
        Ok(fit) => {
            report.notes.push(format!(
                "{} growth fit on [{}, {}]: exponent {:.4}, prefactor {:.4e}, r2 {:.4}",
                suite.name(),
                window.0,
                window.1,
                fit.exponent,
                fit.prefactor,
                fit.r2
            ));
            report.push(
                suite,
                "growth_exponent",
                fit.exponent <= limit,
                fit.exponent,
                limit,
                format!("least-squares log-log slope over {} samples", fit.n_samples),
            );
        }
        Err(e) => report.push(suite, "growth_exponent", false, f64::NAN, limit, e.to_string()),
    }
}

type AuditField = fn(&harness::CollisionAudit) -> f64;

fn collision_checks(cfg: &ExperimentConfig, report: &mut Report) -> crate::Result<()> {
    let p = &cfg.physics;
    let v = &cfg.verification;
    let star = MaxwellianParams::new(p.rho, p.u0, p.t0)?;
    let hw = cfg.grid.v_halfwidth_sigmas;
    let n_v = cfg.grid.n_v;
    let extra = cfg.run.extra_modes;
    let ops = [
        ("star", CollisionBasis::star(star, &VelocityGrid::centered(n_v, p.u0, hw * p.t0.sqrt())?, extra)?),
        ("zero_mean", CollisionBasis::zero_mean(p.rho, p.t0, &VelocityGrid::centered(n_v, 0.0, hw * p.t0.sqrt())?, extra)?),
        ("unit", CollisionBasis::unit(p.rho, &VelocityGrid::centered(n_v, 0.0, hw)?, extra)?),
    ];
    let audits: Vec<(&str, harness::CollisionAudit)> = ops
        .into_iter()
        .map(|(name, b)| Ok((name, harness::collision_property_audit(&CollisionOperator::new(b), v.collision_samples, v.seed)?)))
        .collect::<crate::Result<_>>()?;
    let tol = v.collision_tol;
    let props: [(&str, AuditField); 4] = [
        ("coercivity", |a| a.max_coercivity),
        ("self_adjointness", |a| a.max_symmetry_defect),
        ("null_space", |a| a.null_space_defect),
        ("moment_conservation", |a| a.max_moment),
    ];
    for (name, get) in props {
        let worst = audits.iter().map(|(_, a)| get(a)).fold(f64::NEG_INFINITY, f64::max);
        let detail = audits
            .iter()
            .map(|(f, a)| format!("{f} {:.3e}", get(a)))
            .collect::<Vec<_>>()
            .join(", ");
        report.push(
            Suite::Collision,
            name,
            worst <= tol,
            worst,
            tol,
            format!("{} random slices per weight; {detail}", v.collision_samples),
        );
    }
    Ok(())
}

type CollocationOutput = (Option<String>, Vec<u8>);

fn collocation_checks(
    study: &StudyRun,
    cfg: &ExperimentConfig,
    profile: &Profile,
    init_mode: InitSensitivity,
    report: &mut Report,
) -> crate::Result<CollocationOutput> {
    let setup = &study.setup;
    let v = &cfg.verification;
    let delta = cfg.fd_delta();
    let init = |z: f64| Ok(setup.initial_at(profile, init_mode, z));
    let problem = CollocationProblem {
        grid: &setup.grid,
        op: &setup.op,
        cfg: setup.cfg,
        perturbation: setup.perturbation,
        family: setup.family,
        initial: &init,
    };
    let steps: Vec<usize> = study.output.snapshots.iter().map(|(n, _)| *n).collect();
    let (coarse, fine) = rayon::join(
        || harness::collocation_oracle(&problem, setup.z0, delta, v.fd_points, &steps),
        || harness::collocation_oracle(&problem, setup.z0, 0.5 * delta, v.fd_points, &steps),
    );
    let (coarse, fine) = (coarse?, fine?);
    let direct: Vec<DistributionField> = study.output.snapshots.iter().map(|(_, s)| s.fields()[1].clone()).collect();
    let fd: Vec<DistributionField> = coarse.snapshots.iter().map(|(_, d)| d[0].clone()).collect();
    let fd_half: Vec<DistributionField> = fine.snapshots.iter().map(|(_, d)| d[0].clone()).collect();
    let order = if v.fd_points == 3 { 2 } else { 4 };
    let r = harness::richardson_check(&direct, &fd, &fd_half, &setup.grid, order)?;
    let name = setup.name();
    let expected = 2f64.powi(order);
    report.push(
        Suite::Collocation,
        format!("richardson_ratio[{name}]"),
        r.consistent,
        r.ratio,
        expected,
        format!(
            "discrepancy at delta = {delta} is {:.3e}, at delta/2 {:.3e}; accepted range [{}, {}]",
            r.discrepancy,
            r.discrepancy_half,
            0.875 * expected,
            1.125 * expected
        ),
    );
    report.push(
        Suite::Collocation,
        format!("agreement[{name}]"),
        r.discrepancy <= v.collocation_tolerance,
        r.discrepancy,
        v.collocation_tolerance,
        format!("largest ||h_direct - h_fd|| over {} snapshots at delta = {delta}", direct.len()),
    );

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "time", "direct_norm", "discrepancy_delta", "discrepancy_half_delta"])
        .map_err(csv_error)?;
    let dt = setup.cfg.step_size();
    for (k, (step, _)) in study.output.snapshots.iter().enumerate() {
        w.write_record([
            step.to_string(),
            fmt(*step as f64 * dt),
            fmt(norm_xv(&direct[k], &setup.grid)?),
            fmt(norm_xv(&direct[k].sub(&fd[k]), &setup.grid)?),
            fmt(norm_xv(&direct[k].sub(&fd_half[k]), &setup.grid)?),
        ])
        .map_err(csv_error)?;
    }
    let csv = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok((r.warning.map(|m| format!("{name} collocation: {m}")), csv))
}

fn acoustic_checks(cfg: &ExperimentConfig, profile: &Profile, report: &mut Report) -> crate::Result<Artifact> {
    let setup = AcousticSetup::new(cfg)?;
    let b = setup.op.basis();
    let hydro: Vec<f64> = (0..b.grid().len()).map(|j| b.chi(0)[j] + b.chi(1)[j] + b.chi(2)[j]).collect();
    let mut f = DistributionField::zeros_like(&setup.grid, FrameKind::Original);
    for (i, &x) in setup.grid.x.nodes().iter().enumerate() {
        let s = profile.spatial(x);
        for (o, h) in f.row_mut(i).iter_mut().zip(&hydro) {
            *o = s * h;
        }
    }
    let frame = FrameSpec::original(&setup.grid.v);
    let mut kns = cfg.verification.acoustic_knudsen.clone();
    kns.sort_by(|a, b| b.total_cmp(a));
    kns.dedup();
    let runs: Vec<harness::AcousticRun> = kns
        .par_iter()
        .map(|&kn| {
            let c = SolverConfig::from_cfl(
                &setup.grid,
                &frame,
                cfg.verification.acoustic_t_end,
                kn,
                cfg.run.cfl_safety,
                cfg.run.transport(),
            )?;
            harness::acoustic_limit_residual(&f, &c, &setup.op, &setup.grid)
        })
        .collect::<crate::Result<_>>()?;
    let decreasing = runs.windows(2).all(|w| w[1].rms_residual < w[0].rms_residual);
    let worst_ratio = runs
        .windows(2)
        .map(|w| w[1].rms_residual / w[0].rms_residual)
        .fold(0.0f64, f64::max);
    report.push(
        Suite::Acoustic,
        "residual_decreases_with_kn",
        decreasing && runs.len() >= 2,
        worst_ratio,
        1.0,
        runs.iter()
            .map(|r| format!("Kn {}: rms {:.4e}", r.knudsen, r.rms_residual))
            .collect::<Vec<_>>()
            .join(", "),
    );
    let params = *setup.op.basis().params();
    let ev = harness::acoustic_eigenvalues(&params)?;
    let c = (3.0 * params.temp).sqrt();
    let want = [params.u - c, params.u, params.u + c];
    let err = ev.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
    report.push(
        Suite::Acoustic,
        "eigen_speeds",
        err <= 1e-12,
        err,
        1e-12,
        format!("eigenvalues {:.12}, {:.12}, {:.12}", ev[0], ev[1], ev[2]),
    );

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["knudsen", "rms_residual", "max_residual"]).map_err(csv_error)?;
    for r in &runs {
        let max = r.residuals.iter().fold(0.0f64, |m, x| m.max(*x));
        w.write_record([fmt(r.knudsen), fmt(r.rms_residual), fmt(max)]).map_err(csv_error)?;
    }
    Ok(Artifact {
        name: "acoustic.csv".into(),
        contents: w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
    })
}

fn mms_checks(cfg: &ExperimentConfig, report: &mut Report) -> crate::Result<Artifact> {
    let v = &cfg.verification;
    let schemes = [
        ("upwind", TransportScheme::Upwind, 0.9),
        ("muscl", TransportScheme::Muscl(v.mms_limiter.into()), v.mms_min_order),
    ];
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scheme", "n_x", "dt", "error", "order"]).map_err(csv_error)?;
    for (name, scheme, min_order) in schemes {
        let study = harness::manufactured_convergence(
            &v.mms_levels,
            cfg.grid.n_v,
            cfg.physics.u0,
            1.0,
            1.0,
            cfg.run.cfl_safety,
            scheme,
        )?;
        let order = study.finest_order();
        report.push(
            Suite::Mms,
            format!("order[{name}]"),
            order >= min_order,
            order,
            min_order,
            format!(
                "errors {}",
                study
                    .levels
                    .iter()
                    .map(|l| format!("n_x {}: {:.3e}", l.n_x, l.error))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        );
        for (k, l) in study.levels.iter().enumerate() {
            let o = if k == 0 { f64::NAN } else { study.orders[k - 1] };
            w.write_record([name.to_string(), l.n_x.to_string(), fmt(l.dt), fmt(l.error), fmt(o)])
                .map_err(csv_error)?;
        }
    }
    Ok(Artifact {
        name: "mms.csv".into(),
        contents: w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
    })
}
