//! Experiment configuration: a flat TOML document with one table per concern.
//!
//! Every table rejects unknown keys. Parse errors carry the line and column
//! reported by the TOML reader; semantic errors are located by scanning the
//! source for the offending key.

use std::path::{Path, PathBuf};

use mfg_lab::model::{CouplingKind, HamiltonianKind, InitialDensity, ModelSpec};
use mfg_lab::Grid;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Solve,
    FictitiousPlay,
    Stability,
    Isolation,
    Nonuniqueness,
    ConvergenceStudy,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Solve => "solve",
            Kind::FictitiousPlay => "fictitious-play",
            Kind::Stability => "stability",
            Kind::Isolation => "isolation",
            Kind::Nonuniqueness => "nonuniqueness",
            Kind::ConvergenceStudy => "convergence-study",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub fp: FpConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub isolation: IsolationConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub study: StudyConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
    pub k: usize,
    pub t0: f64,
    pub t_end: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dim: 1, n: 32, k: 64, t0: 0.0, t_end: 0.5 }
    }
}

impl GridConfig {
    pub fn build(&self) -> mfg_lab::Result<Grid> {
        Grid::new(self.dim, self.n, self.k, self.t0, self.t_end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Uniform,
    Cosine,
    Bump,
    Tilted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hamiltonian: HamiltonianKind,
    pub coupling: CouplingKind,
    pub theta: f64,
    pub smoothing: f64,
    pub initial: Preset,
    /// Amplitude of `cosine`, concentration of `bump` and `tilted`.
    pub initial_parameter: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hamiltonian: HamiltonianKind::Quadratic,
            coupling: CouplingKind::None,
            theta: 0.0,
            smoothing: 2.0,
            initial: Preset::Cosine,
            initial_parameter: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn initial_density(&self) -> InitialDensity {
        let p = self.initial_parameter;
        match self.initial {
            Preset::Uniform => InitialDensity::Uniform,
            Preset::Cosine => InitialDensity::Cosine { amplitude: p },
            Preset::Bump => InitialDensity::Bump { kappa: p },
            Preset::Tilted => InitialDensity::Tilted { kappa: p },
        }
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            hamiltonian: self.hamiltonian,
            coupling: self.coupling,
            theta: self.theta,
            smoothing: self.smoothing,
            initial: self.initial_density(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub adaptive: bool,
    pub min_damping: f64,
    /// Additional Picard runs from random initial guesses.
    pub random_starts: usize,
    pub start_amplitude: f64,
    /// Random admissible directions probing the first variation (0 skips).
    pub variation_probes: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 500,
            adaptive: true,
            min_damping: 1.0 / 64.0,
            random_starts: 0,
            start_amplitude: 0.5,
            variation_probes: 0,
        }
    }
}

impl SolverConfig {
    pub fn picard(&self) -> mfg_lab::mfg::PicardOptions {
        mfg_lab::mfg::PicardOptions {
            damping: self.damping,
            tol: self.tol,
            max_iter: self.max_iter,
            adaptive: self.adaptive,
            min_damping: self.min_damping,
            symmetrize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FpConfig {
    pub n_max: usize,
    pub gap_tol: f64,
    /// Runs from random `μ⁰`; the first start is the frozen initial density
    /// when `include_constant` holds.
    pub starts: usize,
    pub include_constant: bool,
    pub amplitude: f64,
    /// Compare every round with a Picard reference solution.
    pub reference: bool,
    /// Local-attractor radii; empty skips the experiment.
    pub deltas: Vec<f64>,
    pub trials: usize,
    pub attractor_rounds: usize,
}

impl Default for FpConfig {
    fn default() -> Self {
        Self {
            n_max: 500,
            gap_tol: 1e-10,
            starts: 1,
            include_constant: true,
            amplitude: 0.5,
            reference: true,
            deltas: Vec::new(),
            trials: 10,
            attractor_rounds: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseSolver {
    Picard,
    FictitiousPlay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub tol: f64,
    pub base: BaseSolver,
    /// Restriction times as fractions of the horizon.
    pub restrictions: Vec<f64>,
    /// Also certify the full problem on the refined grid.
    pub refine: bool,
    /// Estimate the operator bound of the perturbed linear system.
    pub bound: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { tol: 1e-6, base: BaseSolver::Picard, restrictions: vec![0.0], refine: false, bound: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsolationConfig {
    pub eta: Vec<f64>,
    pub trials: usize,
}

impl Default for IsolationConfig {
    fn default() -> Self {
        Self { eta: vec![0.0, 1e-3, 1e-2], trials: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub thetas: Vec<f64>,
    pub horizons: Vec<f64>,
    pub n_space: usize,
    pub steps_per_unit: usize,
    pub tol: f64,
    pub min_separation: f64,
    /// Re-solve the best cell on the refined grid.
    pub refine: bool,
    /// Certify both branches of the best cell.
    pub certify: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            thetas: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            horizons: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            n_space: 32,
            steps_per_unit: 16,
            tol: 1e-6,
            min_separation: 1e-2,
            refine: true,
            certify: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub sizes: Vec<usize>,
    /// `dt / dx²`, held fixed across sizes.
    pub time_ratio: f64,
    pub t_end: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { sizes: vec![32, 64, 128], time_ratio: 1.0, t_end: 1.0 }
    }
}

/// A parsed configuration together with its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub path: PathBuf,
    pub source: String,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let source = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let config = parse(&source)?;
        Ok(Self { config, path: path.to_path_buf(), source })
    }

    /// Semantic error located at `section.key` in the source.
    pub fn error_at(&self, section: &str, key: &str, message: impl Into<String>) -> CliError {
        CliError::Config { line: locate(&self.source, section, key), message: message.into() }
    }
}

pub fn parse(source: &str) -> Result<ExperimentConfig, CliError> {
    toml::from_str(source).map_err(|e| {
        let line = e.span().map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1);
        CliError::Config { line, message: e.message().to_string() }
    })
}

/// 1-based line of `key` inside `[section]` (top level when `section` is
/// empty); falls back to the section header, then to `None`.
pub fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

/// Checks that need no solver: ranges, sizes, and list contents.
pub fn check_ranges(cfg: &LoadedConfig) -> Result<(), CliError> {
    let c = &cfg.config;
    let fail = |s: &str, k: &str, m: String| Err(cfg.error_at(s, k, m));
    if let Err(e) = c.grid.build() {
        let key = if c.grid.dim != 1 && c.grid.dim != 2 {
            "dim"
        } else if c.grid.t_end <= c.grid.t0 {
            "t_end"
        } else if c.grid.k == 0 {
            "k"
        } else {
            "n"
        };
        return fail("grid", key, e.to_string());
    }
    if !(c.model.theta >= 0.0 && c.model.theta.is_finite()) {
        return fail("model", "theta", format!("theta must be finite and >= 0, got {}", c.model.theta));
    }
    if !(c.model.smoothing > 0.0) {
        return fail("model", "smoothing", format!("smoothing must be > 0, got {}", c.model.smoothing));
    }
    if !(c.solver.damping > 0.0 && c.solver.damping <= 1.0) {
        return fail("solver", "damping", format!("damping must lie in (0, 1], got {}", c.solver.damping));
    }
    if !(c.solver.tol > 0.0) {
        return fail("solver", "tol", format!("tol must be > 0, got {}", c.solver.tol));
    }
    if c.solver.max_iter == 0 {
        return fail("solver", "max_iter", "max_iter must be >= 1".into());
    }
    if c.fp.n_max == 0 {
        return fail("fp", "n_max", "n_max must be >= 1".into());
    }
    if c.fp.deltas.iter().any(|d| !(*d >= 0.0)) {
        return fail("fp", "deltas", "deltas must be >= 0".into());
    }
    if c.stability.restrictions.iter().any(|f| !(0.0..1.0).contains(f)) {
        return fail("stability", "restrictions", "restriction fractions must lie in [0, 1)".into());
    }
    if !(c.stability.tol > 0.0) {
        return fail("stability", "tol", "tol must be > 0".into());
    }
    if c.isolation.eta.iter().any(|e| !(*e >= 0.0)) {
        return fail("isolation", "eta", "eta must be >= 0".into());
    }
    if c.kind == Kind::Nonuniqueness {
        if c.sweep.thetas.is_empty() || c.sweep.thetas.iter().any(|t| !(*t > 0.0)) {
            return fail("sweep", "thetas", "thetas must be a nonempty list of positive values".into());
        }
        if c.sweep.horizons.is_empty() || c.sweep.horizons.iter().any(|t| !(*t > 0.0)) {
            return fail("sweep", "horizons", "horizons must be a nonempty list of positive values".into());
        }
        if c.sweep.n_space < 4 {
            return fail("sweep", "n_space", "n_space must be >= 4".into());
        }
        if !c.model.initial_density().is_symmetric() {
            return fail("model", "initial", "the sweep needs a reflection-symmetric initial density".into());
        }
    }
    if c.kind == Kind::ConvergenceStudy {
        if c.study.sizes.len() < 2 || c.study.sizes.iter().any(|n| *n < 4) {
            return fail("study", "sizes", "sizes must list at least two grids with N >= 4".into());
        }
        if !(c.study.time_ratio > 0.0) {
            return fail("study", "time_ratio", "time_ratio must be > 0".into());
        }
        if !(c.study.t_end > 0.0) {
            return fail("study", "t_end", "t_end must be > 0".into());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_located() {
        let src = "kind = \"solve\"\n\n[grid]\nn = 16\nsize = 3\n";
        match parse(src) {
            Err(CliError::Config { line, message }) => {
                assert_eq!(line, Some(5));
                assert!(message.contains("size"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn locate_finds_keys_in_sections() {
        let src = "kind = \"solve\"\n[grid]\nn = 4 # comment\n[model]\ntheta = -1\n";
        assert_eq!(locate(src, "model", "theta"), Some(5));
        assert_eq!(locate(src, "grid", "n"), Some(3));
        assert_eq!(locate(src, "grid", "k"), Some(2));
        assert_eq!(locate(src, "", "kind"), Some(1));
        assert_eq!(locate(src, "fp", "n_max"), None);
    }

    #[test]
    fn defaults_fill_missing_tables() {
        let c = parse("kind = \"fictitious-play\"\n").unwrap();
        assert_eq!(c.kind, Kind::FictitiousPlay);
        assert_eq!(c.grid, GridConfig::default());
        assert_eq!(c.fp.n_max, 500);
    }
}
