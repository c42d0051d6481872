//! Run configuration: the TOML schema, validation, and construction of the
//! initial fields and run specification.

use crate::diagnostics::ClassifierConfig;
use crate::error::{KsError, Result};
use crate::kinetics::SourceKind;
use crate::linsolve::SolveSpec;
use crate::mesh::{Grid, ScalarField};
use crate::stepper::{ModelParams, RunSpec, StepControl};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Gompertz { alpha: f64, k: f64 },
    Logistic { a: f64, b: f64 },
    SubLogistic { a: f64, b: f64 },
    None,
}

impl SourceSpec {
    pub fn to_kind(&self) -> SourceKind {
        match *self {
            SourceSpec::Gompertz { alpha, k } => SourceKind::Gompertz { alpha, k },
            SourceSpec::Logistic { a, b } => SourceKind::Logistic { a, b },
            SourceSpec::SubLogistic { a, b } => SourceKind::SubLogistic { a, b },
            SourceSpec::None => SourceKind::None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub chi: f64,
    pub tau: u8,
    pub source: SourceSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GaussianTerm {
    pub center: [f64; 2],
    pub width: f64,
    pub total_mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Uniform { value: f64 },
    Gaussian { center: [f64; 2], width: f64, total_mass: f64 },
    SumOfGaussians { terms: Vec<GaussianTerm> },
    FromFile { path: String },
}

fn default_dt_init() -> f64 {
    1e-3
}
fn default_dt_min() -> f64 {
    1e-12
}
fn default_dt_max() -> f64 {
    1e-2
}
fn default_cfl() -> f64 {
    0.2
}
fn default_t_end() -> f64 {
    10.0
}
fn default_record_every() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default = "default_dt_init")]
    pub dt_init: f64,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

impl Default for TimeSpec {
    fn default() -> Self {
        TimeSpec {
            dt_init: default_dt_init(),
            dt_min: default_dt_min(),
            dt_max: default_dt_max(),
            cfl_safety: default_cfl(),
            t_end: default_t_end(),
            record_every: default_record_every(),
        }
    }
}

fn default_rel_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    /// Defaults to 10 * (nx + ny).
    #[serde(default)]
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { rel_tol: default_rel_tol(), max_iter: None }
    }
}

fn default_bounded_factor() -> f64 {
    10.0
}
fn default_growth_tol() -> f64 {
    0.05
}
fn default_overflow_factor() -> f64 {
    1e6
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClassifierOptions {
    #[serde(default = "default_bounded_factor")]
    pub bounded_factor: f64,
    #[serde(default = "default_growth_tol")]
    pub growth_tol: f64,
    /// LinfOverflow threshold is this factor times max(u0 max, carrying scale).
    #[serde(default = "default_overflow_factor")]
    pub linf_overflow_factor: f64,
}

impl Default for ClassifierOptions {
    fn default() -> Self {
        ClassifierOptions {
            bounded_factor: default_bounded_factor(),
            growth_tol: default_growth_tol(),
            linf_overflow_factor: default_overflow_factor(),
        }
    }
}

fn default_floor_rel() -> f64 {
    1e-8
}

/// Full run configuration as written by the user (defaults filled on parse).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub grid: GridSpec,
    pub model: ModelSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub initial_v: Option<InitialSpec>,
    /// Positive floor added to Gaussian-type initial data, relative to the
    /// peak, so that u0 is strictly positive.
    #[serde(default = "default_floor_rel")]
    pub u0_floor_rel: f64,
    #[serde(default)]
    pub time: TimeSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub classifier: ClassifierOptions,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    /// Parse and validate; returns the config and any non-fatal warnings.
    pub fn parse(text: &str) -> Result<(SimConfig, Vec<String>)> {
        let cfg: SimConfig = toml::from_str(text)
            .map_err(|e| KsError::Config(format!("config syntax error: {e}")))?;
        let warnings = cfg.validate()?;
        Ok((cfg, warnings))
    }

    /// Render back to TOML (manifest echo).
    pub fn render(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.grid.nx < 3 || self.grid.ny < 3 {
            return Err(KsError::Config(format!(
                "nx/ny: cell counts must be at least 3, got {}x{}",
                self.grid.nx, self.grid.ny
            )));
        }
        if !(self.grid.lx > 0.0 && self.grid.ly > 0.0) {
            return Err(KsError::Config("lx/ly: domain sides must be positive".into()));
        }
        if self.model.tau > 1 {
            return Err(KsError::Config(format!(
                "tau: must be 0 or 1, got {}",
                self.model.tau
            )));
        }
        if !(self.model.chi > 0.0) {
            return Err(KsError::Config(format!(
                "chi: must be positive, got {}",
                self.model.chi
            )));
        }
        match self.model.source {
            SourceSpec::Gompertz { alpha, k } => {
                if !(k > 0.0) {
                    return Err(KsError::Config(format!("K: must be positive, got {k}")));
                }
                if !(alpha > 0.0) {
                    return Err(KsError::Config(format!("alpha: must be positive, got {alpha}")));
                }
            }
            SourceSpec::Logistic { b, .. } | SourceSpec::SubLogistic { b, .. } => {
                if !(b > 0.0) {
                    return Err(KsError::Config(format!("b: must be positive, got {b}")));
                }
            }
            SourceSpec::None => {}
        }
        match &self.initial {
            InitialSpec::Uniform { value } => {
                if !(*value > 0.0) {
                    return Err(KsError::Config(format!(
                        "u0: uniform value must be strictly positive, got {value}"
                    )));
                }
            }
            InitialSpec::Gaussian { width, total_mass, .. } => {
                if !(*width > 0.0 && *total_mass > 0.0) {
                    return Err(KsError::Config(
                        "u0: gaussian width and total_mass must be positive".into(),
                    ));
                }
            }
            InitialSpec::SumOfGaussians { terms } => {
                if terms.is_empty() {
                    return Err(KsError::Config("u0: at least one gaussian term required".into()));
                }
                for t in terms {
                    if !(t.width > 0.0 && t.total_mass > 0.0) {
                        return Err(KsError::Config(
                            "u0: gaussian width and total_mass must be positive".into(),
                        ));
                    }
                }
            }
            InitialSpec::FromFile { .. } => {}
        }
        if !(self.u0_floor_rel > 0.0 && self.u0_floor_rel < 1.0) {
            return Err(KsError::Config(format!(
                "u0_floor_rel: must lie in (0, 1), got {}",
                self.u0_floor_rel
            )));
        }
        match (self.model.tau, &self.initial_v) {
            (1, None) => {
                return Err(KsError::Config("initial_v: required when tau = 1".into()));
            }
            (0, Some(_)) => {
                warnings.push("initial_v is ignored for tau = 0 (v comes from the elliptic solve)".into());
            }
            _ => {}
        }
        Ok(warnings)
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::new(self.grid.lx, self.grid.ly, self.grid.nx, self.grid.ny)
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            chi: self.model.chi,
            tau: self.model.tau,
            source: self.model.source.to_kind(),
        }
    }

    /// The carrying scale used by the classifier and the overflow threshold:
    /// the source equilibrium where one exists, otherwise the initial peak.
    pub fn reference_scale(&self, u0_max: f64) -> f64 {
        match self.model.source {
            SourceSpec::Gompertz { k, .. } => k,
            SourceSpec::Logistic { a, b } | SourceSpec::SubLogistic { a, b } => {
                if a > 0.0 {
                    a / b
                } else {
                    u0_max
                }
            }
            SourceSpec::None => u0_max,
        }
    }

    /// Build the initial cell-density field (strictly positive).
    pub fn build_u0(&self, grid: Grid) -> Result<ScalarField> {
        let u0 = build_initial(&self.initial, grid, self.u0_floor_rel, true)?;
        if u0.norms().min <= 0.0 {
            return Err(KsError::Config("u0: initial cell density must be strictly positive".into()));
        }
        Ok(u0)
    }

    /// Build the initial signal field for tau = 1 (nonnegative).
    pub fn build_v0(&self, grid: Grid) -> Result<Option<ScalarField>> {
        match (&self.initial_v, self.model.tau) {
            (Some(spec), 1) => {
                let v0 = build_initial(spec, grid, self.u0_floor_rel, false)?;
                if v0.norms().min < 0.0 {
                    return Err(KsError::Config("v0: initial signal must be nonnegative".into()));
                }
                Ok(Some(v0))
            }
            _ => Ok(None),
        }
    }

    pub fn solve_spec(&self) -> Result<SolveSpec> {
        let max_iter = self
            .solver
            .max_iter
            .unwrap_or(10 * (self.grid.nx + self.grid.ny));
        SolveSpec::new(1.0, 1.0, self.solver.rel_tol, max_iter)
    }

    pub fn step_control(&self) -> StepControl {
        StepControl {
            dt_init: self.time.dt_init,
            dt_min: self.time.dt_min,
            dt_max: self.time.dt_max,
            cfl_safety: self.time.cfl_safety,
            t_end: self.time.t_end,
            record_every: self.time.record_every,
        }
    }

    pub fn classifier_config(&self, u0_max: f64) -> ClassifierConfig {
        ClassifierConfig {
            bounded_factor: self.classifier.bounded_factor,
            growth_tol: self.classifier.growth_tol,
            scale: self.reference_scale(u0_max),
        }
    }

    /// Assemble the full run specification.
    pub fn build_run_spec(&self) -> Result<RunSpec> {
        self.validate()?;
        let grid = self.build_grid()?;
        let u0 = self.build_u0(grid)?;
        let v0 = self.build_v0(grid)?;
        let control = self.step_control();
        control.validate()?;
        let u0_max = u0.norms().max;
        let linf_threshold =
            self.classifier.linf_overflow_factor * u0_max.max(self.reference_scale(u0_max));
        Ok(RunSpec {
            grid,
            params: self.model_params(),
            u0,
            v0,
            control,
            solver: self.solve_spec()?,
            linf_threshold,
        })
    }
}

fn build_initial(
    spec: &InitialSpec,
    grid: Grid,
    floor_rel: f64,
    strict_positive: bool,
) -> Result<ScalarField> {
    match spec {
        InitialSpec::Uniform { value } => Ok(ScalarField::constant(grid, *value)),
        InitialSpec::Gaussian { center, width, total_mass } => {
            let terms = [GaussianTerm {
                center: *center,
                width: *width,
                total_mass: *total_mass,
            }];
            build_gaussians(&terms, grid, floor_rel, strict_positive)
        }
        InitialSpec::SumOfGaussians { terms } => {
            build_gaussians(terms, grid, floor_rel, strict_positive)
        }
        InitialSpec::FromFile { path } => {
            let text = std::fs::read_to_string(Path::new(path)).map_err(|e| {
                KsError::Config(format!("u0 file {path}: {e}"))
            })?;
            let values: Vec<f64> = text
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        KsError::Config(format!("u0 file {path}: bad number '{tok}'"))
                    })
                })
                .collect::<Result<_>>()?;
            if values.len() != grid.n_cells() {
                return Err(KsError::Config(format!(
                    "u0 file {path}: expected {} values, found {}",
                    grid.n_cells(),
                    values.len()
                )));
            }
            Ok(ScalarField { grid, values })
        }
    }
}

fn build_gaussians(
    terms: &[GaussianTerm],
    grid: Grid,
    floor_rel: f64,
    renormalize: bool,
) -> Result<ScalarField> {
    let mut w = ScalarField::zeros(grid);
    let mut target_mass = 0.0;
    for t in terms {
        let [cx, cy] = t.center;
        let s2 = 2.0 * t.width * t.width;
        let bump = ScalarField::from_fn(grid, |x, y| {
            (-((x - cx).powi(2) + (y - cy).powi(2)) / s2).exp()
        });
        let m = bump.integrate();
        if !(m > 0.0) {
            return Err(KsError::Config(
                "gaussian term has vanishing discrete mass (width too small for the grid?)".into(),
            ));
        }
        let scale = t.total_mass / m;
        for (wi, bi) in w.values.iter_mut().zip(&bump.values) {
            *wi += scale * bi;
        }
        target_mass += t.total_mass;
    }
    let peak = w.norms().max;
    let floor = floor_rel * peak;
    for v in &mut w.values {
        *v += floor;
    }
    if renormalize {
        let m = w.integrate();
        let scale = target_mass / m;
        for v in &mut w.values {
            *v *= scale;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
lx = 1.0
ly = 1.0
nx = 16
ny = 16

[model]
chi = 1.0
tau = 0

[model.source]
kind = "gompertz"
alpha = 1.0
k = 1.0

[initial]
kind = "uniform"
value = 0.5
"#;

    #[test]
    fn minimal_document_parses_with_defaults() {
        let (cfg, warnings) = SimConfig::parse(MINIMAL).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(cfg.time.dt_init, 1e-3);
        assert_eq!(cfg.solver.rel_tol, 1e-10);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.u0_floor_rel, 1e-8);
        let spec = cfg.build_run_spec().unwrap();
        assert_eq!(spec.grid.nx, 16);
        assert!((spec.u0.integrate() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bad_tau_names_the_field() {
        let text = MINIMAL.replace("tau = 0", "tau = 2");
        let err = SimConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("tau"), "{err}");
    }

    #[test]
    fn bad_k_names_the_field() {
        let text = MINIMAL.replace("k = 1.0", "k = 0.0");
        let err = SimConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains('K'), "{err}");
    }

    #[test]
    fn syntax_error_is_reported() {
        let err = SimConfig::parse("[grid\nlx=1").unwrap_err();
        assert!(err.to_string().contains("syntax"), "{err}");
    }

    #[test]
    fn tau1_requires_v0() {
        let text = MINIMAL.replace("tau = 0", "tau = 1");
        let err = SimConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("initial_v"), "{err}");
    }

    #[test]
    fn tau0_warns_on_v0() {
        let text = format!("{MINIMAL}\n[initial_v]\nkind = \"uniform\"\nvalue = 0.0\n");
        // uniform v0 = 0 is fine as a signal (nonnegative, not strictly positive)
        let text = text.replace("value = 0.0", "value = 1.0");
        let (_, warnings) = SimConfig::parse(&text).unwrap();
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn manifest_round_trip() {
        let (cfg, _) = SimConfig::parse(MINIMAL).unwrap();
        let rendered = cfg.render();
        let (cfg2, _) = SimConfig::parse(&rendered).unwrap();
        assert_eq!(cfg, cfg2);
    }

    #[test]
    fn gaussian_u0_mass_and_positivity() {
        let text = MINIMAL.replace(
            "kind = \"uniform\"\nvalue = 0.5",
            "kind = \"gaussian\"\ncenter = [0.5, 0.5]\nwidth = 0.1\ntotal_mass = 2.0",
        );
        let (cfg, _) = SimConfig::parse(&text).unwrap();
        let spec = cfg.build_run_spec().unwrap();
        assert!((spec.u0.integrate() - 2.0).abs() < 1e-10);
        assert!(spec.u0.norms().min > 0.0);
    }

    #[test]
    fn from_file_initial_checks_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u0.txt");
        std::fs::write(&path, "1.0 2.0 3.0").unwrap();
        let text = MINIMAL.replace(
            "kind = \"uniform\"\nvalue = 0.5",
            &format!("kind = \"from_file\"\npath = \"{}\"", path.display()),
        );
        let (cfg, _) = SimConfig::parse(&text).unwrap();
        assert!(cfg.build_run_spec().is_err());
    }
}
