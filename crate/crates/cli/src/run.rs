//! Experiment dispatch. Each kind returns a typed summary whose field order
//! fixes the key order of `summary.json`.

use std::path::PathBuf;

use mfg_lab::fictitious_play::{local_attractor_experiment, random_density, run_fp, AttractorRow, FpOptions, FpTrace};
use mfg_lab::mfg::{probe_uniqueness_given_gradient, solve_picard, MfgSolution, Residuals, UniquenessProbe};
use mfg_lab::model::MfgModel;
use mfg_lab::nonuniqueness::{
    best_cell, branch_pair, double_well_model, sweep, sweep_grid, write_sweep_csv, AsymmetricOptions, BranchPair,
    BranchSummary, SweepOptions,
};
use mfg_lab::potential::{criticality_defect, evaluate_j, random_direction, AdmissiblePair, JBreakdown};
use mfg_lab::stability::{
    bound_ratio, certify_stability, estimate_bound, isolation_experiment, random_sources, BoundEstimate, IsolationRow,
    LinearizedProblem, StabilityCertificate, Verdict,
};
use mfg_lab::{Density, Grid};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BaseSolver, ExperimentConfig, Kind, LoadedConfig};
use crate::error::CliError;
use crate::output::RunDir;
use crate::study::{fitted_order, manufactured_row, StudyRow};
use crate::validate::validate_or_fail;

/// Stream offsets keep the random draws of different roles apart.
const PICARD_STREAM: u64 = 100;
const FP_STREAM: u64 = 200;
const PROBE_STREAM: u64 = 300;

/// Tolerance of the uniqueness-given-gradient probe.
pub const PROBE_TOL: f64 = 1e-8;
/// Amplitude of the perturbation that turns a solution into a non-solution.
pub const NON_SOLUTION_SHIFT: f64 = 1e-2;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output: PathBuf,
    pub summary: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    kind: &'static str,
    config_path: String,
    seed: u64,
    threads: Option<usize>,
    status: &'a str,
    config: &'a ExperimentConfig,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Summary<'a> {
    kind: &'static str,
    seed: u64,
    status: &'a str,
    error: Option<String>,
    results: Option<Results>,
}

#[derive(Serialize)]
#[serde(untagged)]
pub enum Results {
    Solve(SolveSummary),
    FictitiousPlay(FpSummary),
    Stability(StabilitySummary),
    Isolation(IsolationSummary),
    Nonuniqueness(NonuniquenessSummary),
    ConvergenceStudy(StudySummary),
}

/// Validates `cfg`, runs `kind` in its own thread pool and writes the run
/// directory. On compute failure the manifest and summary are still
/// written, flagged as partial/failed.
pub fn run(cfg: &LoadedConfig, kind: Kind, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    if cfg.config.kind != kind {
        return Err(cfg.error_at(
            "",
            "kind",
            format!("config declares kind '{}' but '{}' was requested", cfg.config.kind.name(), kind.name()),
        ));
    }
    validate_or_fail(cfg)?;
    let mut config = cfg.config.clone();
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    let output = opts
        .output
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(kind.name()));
    config.output = Some(output.clone());
    let mut dir = RunDir::create(&output)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Io(e.to_string()))?;
    let result = pool.install(|| dispatch(&config, &mut dir));
    let (status, error, results) = match result {
        Ok(r) => ("ok", None, Some(r)),
        Err(e) => ("failed", Some(e), None),
    };
    let message = error.as_ref().map(|e| e.to_string());
    let summary = Summary { kind: kind.name(), seed: config.seed, status, error: message, results };
    dir.write_json("summary.json", &summary)?;
    let manifest = Manifest {
        program: "mfg-lab",
        version: env!("CARGO_PKG_VERSION"),
        kind: kind.name(),
        config_path: cfg.path.display().to_string(),
        seed: config.seed,
        threads: opts.threads,
        status: if error.is_some() { "partial" } else { "complete" },
        config: &config,
        files: dir.files().iter().filter(|f| *f != "summary.json").cloned().collect(),
    };
    dir.write_json("manifest.json", &manifest)?;
    let text = std::fs::read_to_string(dir.root().join("summary.json"))?;
    match error {
        Some(e) => Err(e),
        None => Ok(RunOutcome { output, summary: text }),
    }
}

fn dispatch(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<Results, CliError> {
    Ok(match cfg.kind {
        Kind::Solve => Results::Solve(solve(cfg, dir)?),
        Kind::FictitiousPlay => Results::FictitiousPlay(fictitious_play(cfg, dir)?),
        Kind::Stability => Results::Stability(stability(cfg, dir)?),
        Kind::Isolation => Results::Isolation(isolation(cfg, dir)?),
        Kind::Nonuniqueness => Results::Nonuniqueness(nonuniqueness(cfg, dir)?),
        Kind::ConvergenceStudy => Results::ConvergenceStudy(convergence_study(cfg, dir)?),
    })
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<MfgModel<f64>, CliError> {
    Ok(cfg.model.spec().build(cfg.grid.build()?)?)
}

fn frozen_start(model: &MfgModel<f64>) -> Result<Density, CliError> {
    Ok(Density::constant_in_time(*model.grid(), model.m0())?)
}

/// `max(sup|u₁ − u₂|, sup|m₁ − m₂|)`.
pub fn sup_distance(a: &MfgSolution<f64>, b: &MfgSolution<f64>) -> f64 {
    a.u.sup_distance(&b.u).max(a.m.field().sup_distance(b.m.field()))
}

fn write_solution(dir: &mut RunDir, prefix: &str, sol: &MfgSolution<f64>) -> Result<(), CliError> {
    dir.write_field(&format!("{prefix}u"), &sol.u)?;
    dir.write_field(&format!("{prefix}m"), sol.m.field())?;
    dir.write_flux(&format!("{prefix}w"), &sol.w)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolutionSummary {
    pub converged: bool,
    pub iterations: usize,
    pub residuals: Residuals,
    pub mass_defect: f64,
    pub min_density: f64,
}

impl SolutionSummary {
    pub fn of(sol: &MfgSolution<f64>) -> Self {
        Self {
            converged: sol.converged,
            iterations: sol.iterations,
            residuals: sol.residuals,
            mass_defect: sol.m.mass_defect(),
            min_density: sol.m.min_value(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StartRow {
    pub start: usize,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub distance: f64,
    pub d_grad: f64,
    pub d_sol: f64,
    pub probe_consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalitySummary {
    pub probes: usize,
    pub defect: f64,
    pub fd_mismatch: f64,
    pub perturbed_defect: f64,
    pub perturbed_fd_mismatch: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub model: String,
    pub grid: String,
    pub solution: SolutionSummary,
    pub j: JBreakdown,
    pub random_starts: Vec<StartRow>,
    pub max_start_distance: f64,
    pub criticality: Option<CriticalitySummary>,
    pub warnings: Vec<String>,
}

fn start_row(start: usize, sol: &MfgSolution<f64>, reference: &MfgSolution<f64>) -> Result<StartRow, CliError> {
    let probe = probe_uniqueness_given_gradient(sol, reference, PROBE_TOL)?;
    Ok(StartRow {
        start,
        converged: sol.converged,
        iterations: sol.iterations,
        residual: sol.residuals.max().max(sol.residuals.coupling_consistency),
        distance: sup_distance(sol, reference),
        d_grad: probe.d_grad,
        d_sol: probe.d_sol,
        probe_consistent: probe.consistent,
    })
}

pub fn solve(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<SolveSummary, CliError> {
    let model = build_model(cfg)?;
    let g = *model.grid();
    let picard = cfg.solver.picard();
    let sol = solve_picard(&model, &frozen_start(&model)?, &picard)?;
    write_solution(dir, "", &sol)?;
    let history: Vec<(usize, f64)> = sol.history.iter().enumerate().map(|(i, d)| (i + 1, *d)).collect();
    dir.write_csv_rows("picard.csv", &history.iter().map(|(i, d)| PicardRow { iteration: *i, distance: *d }).collect::<Vec<_>>())?;
    let starts: Vec<Result<MfgSolution<f64>, CliError>> = (0..cfg.solver.random_starts)
        .into_par_iter()
        .map(|s| {
            let init = random_density(g, cfg.solver.start_amplitude, cfg.seed, PICARD_STREAM + s as u64)?;
            Ok(solve_picard(&model, &init, &picard)?)
        })
        .collect();
    let mut random_starts = Vec::new();
    for (s, r) in starts.into_iter().enumerate() {
        random_starts.push(start_row(s + 1, &r?, &sol)?);
    }
    if !random_starts.is_empty() {
        dir.write_csv_rows("starts.csv", &random_starts)?;
    }
    let pair = AdmissiblePair::from_solution(&sol);
    let criticality = if cfg.solver.variation_probes > 0 {
        let probes = cfg.solver.variation_probes;
        let at = criticality_defect(&model, &pair, probes, cfg.seed);
        let dir_shift = random_direction(&model, cfg.seed, PROBE_STREAM);
        let shifted = pair.shifted(&dir_shift, NON_SOLUTION_SHIFT)?;
        let off = criticality_defect(&model, &shifted, probes, cfg.seed);
        Some(CriticalitySummary {
            probes,
            defect: at.defect,
            fd_mismatch: at.fd_mismatch,
            perturbed_defect: off.defect,
            perturbed_fd_mismatch: off.fd_mismatch,
        })
    } else {
        None
    };
    Ok(SolveSummary {
        model: model.name().to_string(),
        grid: g.signature(),
        solution: SolutionSummary::of(&sol),
        j: evaluate_j(&model, &pair)?,
        max_start_distance: random_starts.iter().map(|r| r.distance).fold(0.0, f64::max),
        random_starts,
        criticality,
        warnings: sol.diagnostics.warnings.clone(),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
struct PicardRow {
    iteration: usize,
    distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FpRunSummary {
    pub start: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_gap: f64,
    pub final_err: Option<f64>,
    pub reference_distance: Option<f64>,
    pub hjb_residual: f64,
    pub kolmogorov_residual: f64,
    pub averaging_defect: f64,
    pub gap_slope: Option<f64>,
    pub eventually_monotone: Option<bool>,
    pub probe: Option<UniquenessProbe>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FpSummary {
    pub model: String,
    pub grid: String,
    pub reference: Option<SolutionSummary>,
    pub runs: Vec<FpRunSummary>,
    pub max_reference_distance: Option<f64>,
    pub max_averaging_defect: f64,
    pub reference_certificate: Option<StabilityCertificate>,
    pub attractor: Vec<AttractorRow>,
}

fn fp_start(cfg: &ExperimentConfig, model: &MfgModel<f64>, s: usize) -> Result<Density, CliError> {
    if s == 0 && cfg.fp.include_constant {
        frozen_start(model)
    } else {
        Ok(random_density(*model.grid(), cfg.fp.amplitude, cfg.seed, FP_STREAM + s as u64)?)
    }
}

fn fp_summary(s: usize, tr: &FpTrace<f64>, reference: Option<&MfgSolution<f64>>) -> Result<FpRunSummary, CliError> {
    let probe = reference.map(|r| probe_uniqueness_given_gradient(&tr.solution, r, PROBE_TOL)).transpose()?;
    Ok(FpRunSummary {
        start: s,
        iterations: tr.iterations,
        converged: tr.converged,
        final_gap: tr.final_gap,
        final_err: tr.final_err,
        reference_distance: reference.map(|r| sup_distance(&tr.solution, r)),
        hjb_residual: tr.solution.residuals.hjb,
        kolmogorov_residual: tr.solution.residuals.kolmogorov,
        averaging_defect: tr.averaging_defect,
        gap_slope: tr.gap_slope(10, tr.iterations),
        eventually_monotone: tr.eventually_monotone,
        probe,
    })
}

pub fn fictitious_play(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<FpSummary, CliError> {
    let model = build_model(cfg)?;
    let g = *model.grid();
    let reference = if cfg.fp.reference {
        Some(solve_picard(&model, &frozen_start(&model)?, &cfg.solver.picard())?)
    } else {
        None
    };
    let opts = FpOptions { n_max: cfg.fp.n_max, gap_tol: cfg.fp.gap_tol };
    let traces: Vec<Result<FpTrace<f64>, CliError>> = (0..cfg.fp.starts.max(1))
        .into_par_iter()
        .map(|s| Ok(run_fp(&model, &fp_start(cfg, &model, s)?, &opts, reference.as_ref())?))
        .collect();
    let mut runs = Vec::new();
    for (s, tr) in traces.into_iter().enumerate() {
        let tr = tr?;
        dir.write_with(&format!("fp_trace_{s}.csv"), |w| tr.write_csv(w))?;
        if s == 0 {
            write_solution(dir, "", &tr.solution)?;
            dir.write_field("mu", tr.mu.field())?;
        }
        runs.push(fp_summary(s, &tr, reference.as_ref())?);
    }
    let mut reference_certificate = None;
    let mut attractor = Vec::new();
    if let (Some(r), false) = (&reference, cfg.fp.deltas.is_empty()) {
        reference_certificate = Some(certify_stability(&model, r, 0, cfg.stability.tol)?.0);
        attractor = local_attractor_experiment(&model, r, &cfg.fp.deltas, cfg.fp.trials, cfg.seed, cfg.fp.attractor_rounds)?;
        dir.write_csv_rows("attractor.csv", &attractor)?;
    }
    Ok(FpSummary {
        model: model.name().to_string(),
        grid: g.signature(),
        reference: reference.as_ref().map(SolutionSummary::of),
        max_reference_distance: reference
            .as_ref()
            .map(|_| runs.iter().filter_map(|r| r.reference_distance).fold(0.0, f64::max)),
        max_averaging_defect: runs.iter().map(|r| r.averaging_defect).fold(0.0, f64::max),
        runs,
        reference_certificate,
        attractor,
    })
}

fn base_solution(cfg: &ExperimentConfig, model: &MfgModel<f64>) -> Result<MfgSolution<f64>, CliError> {
    Ok(match cfg.stability.base {
        BaseSolver::Picard => solve_picard(model, &frozen_start(model)?, &cfg.solver.picard())?,
        BaseSolver::FictitiousPlay => {
            let opts = FpOptions { n_max: cfg.fp.n_max, gap_tol: cfg.fp.gap_tol };
            run_fp(model, &frozen_start(model)?, &opts, None)?.solution
        }
    })
}

/// Slice closest to `fraction` of the horizon.
pub fn restriction_slice(grid: &Grid, fraction: f64) -> usize {
    ((fraction * grid.n_time() as f64).round() as usize).min(grid.n_time() - 1)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundSummary {
    pub estimate: BoundEstimate,
    pub samples: usize,
    pub max_c1_ratio: f64,
    pub max_c0_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilitySummary {
    pub model: String,
    pub grid: String,
    pub base: SolutionSummary,
    pub certificates: Vec<StabilityCertificate>,
    pub all_stable: bool,
    pub refined: Option<StabilityCertificate>,
    pub refinement_change: Option<f64>,
    pub bound: Option<BoundSummary>,
}

pub fn stability(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<StabilitySummary, CliError> {
    let model = build_model(cfg)?;
    let g = *model.grid();
    let base = base_solution(cfg, &model)?;
    write_solution(dir, "base_", &base)?;
    let slices: Vec<usize> = cfg.stability.restrictions.iter().map(|f| restriction_slice(&g, *f)).collect();
    let certified: Vec<Result<_, CliError>> = slices
        .par_iter()
        .map(|&s| Ok(certify_stability(&model, &base, s, cfg.stability.tol)?))
        .collect();
    let mut certificates = Vec::new();
    for (i, c) in certified.into_iter().enumerate() {
        let (mut cert, witness) = c?;
        if let Some(w) = witness {
            let stem = format!("witness_{i}");
            dir.write_field(&format!("{stem}_v"), &w.v)?;
            dir.write_field(&format!("{stem}_mu"), &w.mu)?;
            cert.witness_file = Some(format!("{stem}_v.bin,{stem}_mu.bin"));
        }
        certificates.push(cert);
    }
    dir.write_csv_rows("certificates.csv", &certificates)?;
    let (refined, refinement_change) = if cfg.stability.refine {
        let fine = model.on_grid(g.refined(), cfg.model.initial_density().sample(&g.refined())?)?;
        let fine_base = base_solution(cfg, &fine)?;
        let cert = certify_stability(&fine, &fine_base, 0, cfg.stability.tol)?.0;
        let coarse = match slices.iter().position(|s| *s == 0) {
            Some(i) => certificates[i].sigma_min,
            None => certify_stability(&model, &base, 0, cfg.stability.tol)?.0.sigma_min,
        };
        let change = (cert.sigma_min - coarse).abs() / coarse;
        (Some(cert), Some(change))
    } else {
        (None, None)
    };
    let bound = if cfg.stability.bound {
        let problem = LinearizedProblem::new(&model, &base, 0)?;
        let estimate = estimate_bound(&problem)?;
        let samples = 3;
        let ratios: Vec<_> = (0..samples as u64)
            .map(|k| bound_ratio(&problem, random_sources(&problem, cfg.seed, k)))
            .collect::<Result<_, _>>()?;
        Some(BoundSummary {
            estimate,
            samples,
            max_c1_ratio: ratios.iter().map(|r| r.c1_ratio).fold(0.0, f64::max),
            max_c0_ratio: ratios.iter().map(|r| r.c0_ratio).fold(0.0, f64::max),
        })
    } else {
        None
    };
    Ok(StabilitySummary {
        model: model.name().to_string(),
        grid: g.signature(),
        base: SolutionSummary::of(&base),
        all_stable: certificates.iter().all(|c| c.verdict == Verdict::Stable),
        certificates,
        refined,
        refinement_change,
        bound,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IsolationSummary {
    pub model: String,
    pub grid: String,
    pub base: SolutionSummary,
    pub certificate: StabilityCertificate,
    pub rows: Vec<IsolationRow>,
    pub distinct_pairs: usize,
}

pub fn isolation(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<IsolationSummary, CliError> {
    let model = build_model(cfg)?;
    let g = *model.grid();
    let base = solve_picard(&model, &frozen_start(&model)?, &cfg.solver.picard())?;
    let certificate = certify_stability(&model, &base, 0, cfg.stability.tol)?.0;
    let rows = isolation_experiment(&model, &base, &cfg.isolation.eta, cfg.isolation.trials, cfg.seed, &cfg.solver.picard())?;
    dir.write_csv_rows("isolation.csv", &rows)?;
    Ok(IsolationSummary {
        model: model.name().to_string(),
        grid: g.signature(),
        base: SolutionSummary::of(&base),
        certificate,
        distinct_pairs: rows.iter().map(|r| r.distinct_pairs).sum(),
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NonuniquenessSummary {
    pub cells: usize,
    pub found: usize,
    pub genuine: usize,
    pub best: Option<BranchSummary>,
    pub refined: Option<BranchSummary>,
    pub separation_change: Option<f64>,
    pub persists: Option<bool>,
    pub competitor_beats_symmetric: Option<bool>,
    pub certificates: Vec<StabilityCertificate>,
}

/// Relative change tolerated between a pair and its refinement.
pub const PERSISTENCE_TOL: f64 = 0.3;

pub fn nonuniqueness(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<NonuniquenessSummary, CliError> {
    let s = &cfg.sweep;
    let opts = SweepOptions {
        n_space: s.n_space,
        steps_per_unit: s.steps_per_unit,
        initial: cfg.model.initial_density(),
        tol: s.tol,
        min_separation: s.min_separation,
        seed: cfg.seed,
    };
    let cells = sweep(&s.thetas, &s.horizons, &opts)?;
    dir.write_with("sweep.csv", |w| write_sweep_csv(&cells, w))?;
    let mut out = NonuniquenessSummary {
        cells: cells.len(),
        found: cells.iter().filter(|c| c.found).count(),
        genuine: cells.iter().filter(|c| c.genuine).count(),
        best: None,
        refined: None,
        separation_change: None,
        persists: None,
        competitor_beats_symmetric: None,
        certificates: Vec::new(),
    };
    let Some(best) = best_cell(&cells) else {
        return Ok(out);
    };
    let (theta, t_end) = (best.theta, best.t_end);
    let coarse = pair_at(&opts, theta, t_end)?;
    let Some((model, pair)) = coarse else {
        return Ok(out);
    };
    write_solution(dir, "symmetric_", &pair.symmetric.solution)?;
    write_solution(dir, "asymmetric_", &pair.asymmetric)?;
    let summary = pair.summary();
    out.competitor_beats_symmetric = Some(summary.j_competitor < summary.j_symmetric);
    out.best = Some(summary);
    if s.refine {
        let fine_opts = SweepOptions { n_space: 2 * opts.n_space, steps_per_unit: 2 * opts.steps_per_unit, ..opts };
        if let Some((_, fine)) = pair_at(&fine_opts, theta, t_end)? {
            let f = fine.summary();
            let change = (f.separation - summary.separation).abs() / summary.separation;
            out.separation_change = Some(change);
            out.persists = Some(change <= PERSISTENCE_TOL && fine.is_genuine(s.tol, s.min_separation));
            out.refined = Some(f);
        } else {
            out.persists = Some(false);
        }
    }
    if s.certify {
        for sol in [&pair.symmetric.solution, &pair.asymmetric] {
            out.certificates.push(certify_stability(&model, sol, 0, cfg.stability.tol)?.0);
        }
    }
    Ok(out)
}

fn pair_at(
    opts: &SweepOptions,
    theta: f64,
    t_end: f64,
) -> Result<Option<(MfgModel<f64>, BranchPair<f64>)>, CliError> {
    let grid = sweep_grid(opts, 1, t_end)?;
    let model = double_well_model(grid, theta, opts.initial)?;
    let sym = mfg_lab::mfg::PicardOptions { tol: 1e-11, max_iter: 2000, ..Default::default() };
    let asym = AsymmetricOptions { tol: opts.tol, ..AsymmetricOptions::default() };
    let (_, _, pair) = branch_pair(&model, theta, &sym, &asym, opts.seed)?;
    Ok(pair.map(|p| (model, p)))
}

#[derive(Debug, Clone, Serialize)]
pub struct StudySummary {
    pub rows: Vec<StudyRow>,
    pub spatial_order: f64,
}

pub fn convergence_study(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<StudySummary, CliError> {
    let st = &cfg.study;
    let rows: Vec<StudyRow> = st
        .sizes
        .par_iter()
        .map(|&n| manufactured_row(n, st.time_ratio, st.t_end))
        .collect::<Result<_, _>>()?;
    dir.write_csv_rows("convergence.csv", &rows)?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.dx, r.sup_error)).collect();
    Ok(StudySummary { spatial_order: fitted_order(&pts), rows })
}
