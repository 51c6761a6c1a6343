//! Coexisting equilibria for a reflection-invariant double-well coupling:
//! the symmetric branch, an asymmetric branch reached by fictitious play,
//! the explicit competitor beating the symmetric branch, and a `(θ, T)`
//! sweep.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::fictitious_play::{run_fp, FpOptions};
use crate::grid::{ops, DensityField, FluxField, ScalarField, TorusGrid};
use crate::mfg::{self, best_response, reflection_defect, solve_picard, sup_l2, MfgSolution, PicardOptions, UniquenessProbe};
use crate::model::{CouplingKind, HamiltonianKind, InitialDensity, MfgModel, ModelSpec};
use crate::potential::{evaluate_j, AdmissiblePair, JBreakdown};
use crate::rng;
use crate::scalar::Scalar;

/// Double-well game with `H = ½|p|²`, `g = 0` and initial density `initial`.
pub fn double_well_model<T: Scalar>(grid: TorusGrid<T>, theta: f64, initial: InitialDensity) -> Result<MfgModel<T>> {
    if !initial.is_symmetric() {
        return Err(MfgError::InvalidParameter("the initial density must be reflection-symmetric".into()));
    }
    ModelSpec { hamiltonian: HamiltonianKind::Quadratic, coupling: CouplingKind::DoubleWell, theta, initial, ..ModelSpec::default() }
        .build(grid)
}

#[derive(Debug, Clone)]
pub struct SymmetricBranch<T: Scalar> {
    pub solution: MfgSolution<T>,
    /// `sup|Φ(m) − sym Φ(m)|` of the unprojected best response at the limit.
    pub projection_defect: f64,
    /// Sup distance moved by 5 unprojected Picard steps from the limit.
    pub unprojected_drift: f64,
    pub reflection_defect: f64,
}

/// Picard with reflection symmetrization after every update.
pub fn find_symmetric_branch<T: Scalar>(model: &MfgModel<T>, opts: &PicardOptions) -> Result<SymmetricBranch<T>> {
    let g = *model.grid();
    let init = mfg::heat_flow(model)?;
    let solution = solve_picard(model, &init, &PicardOptions { symmetrize: true, ..*opts })?;
    let (_, raw, _) = best_response(model, solution.m.field())?;
    let mut projected = raw.field().clone();
    mfg::symmetrize(&g, projected.values_mut());
    let projection_defect = raw.field().sup_distance(&projected).as_f64();
    let mut m = solution.m.field().clone();
    for _ in 0..5 {
        m = best_response(model, &m)?.1.into_field();
    }
    let unprojected_drift = m.sup_distance(solution.m.field()).as_f64();
    let reflection_defect = reflection_defect(&g, solution.m.values()).as_f64();
    Ok(SymmetricBranch { solution, projection_defect, unprojected_drift, reflection_defect })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetricOptions {
    /// Tilt `κ` of the starting average `∝ exp(κ s(t) sin 2πx₁)`.
    pub tilt: f64,
    pub fp_rounds: usize,
    pub picard: PicardOptions,
    /// Residual threshold for acceptance.
    pub tol: f64,
}

impl Default for AsymmetricOptions {
    fn default() -> Self {
        Self {
            tilt: 1.0,
            fp_rounds: 200,
            picard: PicardOptions { damping: 0.5, tol: 1e-11, max_iter: 2000, ..PicardOptions::default() },
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub enum AsymmetricOutcome<T: Scalar> {
    Found(MfgSolution<T>),
    NotFound(String),
}

impl<T: Scalar> AsymmetricOutcome<T> {
    pub fn found(&self) -> Option<&MfgSolution<T>> {
        match self {
            Self::Found(s) => Some(s),
            Self::NotFound(_) => None,
        }
    }
}

/// Starting average tilted toward `x₁ = 1/4`, ramped in over the first unit
/// of time, with a small seeded random component.
pub fn tilted_start<T: Scalar>(model: &MfgModel<T>, tilt: f64, seed: u64) -> Result<DensityField<T>> {
    let g = *model.grid();
    let heat = mfg::heat_flow(model)?;
    let mut r = rng::stream(seed, 0xa5);
    let noise = rng::smooth_slice(&g, 2, true, &mut r);
    let profile = crate::model::coupling::DoubleWell::odd_profile(&g);
    let ramp = (g.t_end() - g.t0()).as_f64().min(1.0);
    let nodes = g.nodes();
    let mut values = heat.values().to_vec();
    for n in 0..g.slices() {
        let s = ((g.time(n) - g.t0()).as_f64() / ramp).min(1.0);
        let slice = &mut values[n * nodes..(n + 1) * nodes];
        for i in 0..nodes {
            let e = T::of(tilt * s) * (profile[i] + T::of(0.1) * noise[i]);
            slice[i] *= e.exp();
        }
        crate::grid::normalize_mass(&g, slice)?;
    }
    DensityField::new(ScalarField::from_values(g, values)?)
}

/// Fictitious play from a tilted average, polished by Picard. Reported as
/// not found when the limit is not asymmetric or fails the residual test.
pub fn find_asymmetric_branch<T: Scalar>(
    model: &MfgModel<T>,
    opts: &AsymmetricOptions,
    symmetric_defect: f64,
    seed: u64,
) -> Result<AsymmetricOutcome<T>> {
    let g = *model.grid();
    let mu0 = tilted_start(model, opts.tilt, seed)?;
    let fp = run_fp(model, &mu0, &FpOptions { n_max: opts.fp_rounds, gap_tol: opts.tol }, None)?;
    let sol = solve_picard(model, &fp.mu, &opts.picard)?;
    let defect = reflection_defect(&g, sol.m.values()).as_f64();
    let floor = (10.0 * symmetric_defect).max(1e-6);
    if !sol.converged || sol.residuals.max() > opts.tol || sol.residuals.coupling_consistency > opts.tol {
        return Ok(AsymmetricOutcome::NotFound(format!(
            "polish did not converge (residual {:.3e}, distance {:.3e})",
            sol.residuals.max(),
            sol.residuals.coupling_consistency
        )));
    }
    if defect < floor {
        return Ok(AsymmetricOutcome::NotFound(format!("limit is symmetric (reflection defect {defect:.3e})")));
    }
    Ok(AsymmetricOutcome::Found(sol))
}

/// Pseudo-inverse of `−Δ` on zero-mean node functions, by conjugate
/// gradients.
pub fn poisson_pseudo_inverse<T: Scalar>(grid: &TorusGrid<T>, rhs: &[T]) -> Vec<T> {
    let mean = ops::integrate(grid, rhs);
    let b: Vec<T> = rhs.iter().map(|v| *v - mean).collect();
    let n = b.len();
    let apply = |x: &[T], out: &mut [T]| {
        ops::laplacian(grid, x, out);
        out.iter_mut().for_each(|v| *v = -*v);
    };
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(x, y)| *x * *y).sum::<T>();
    let mut x = vec![T::zero(); n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![T::zero(); n];
    let mut rr = dot(&r, &r);
    let stop = T::of(1e-30) * dot(&b, &b).max(T::of(1e-300));
    for _ in 0..10 * n {
        if rr <= stop {
            break;
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let next = dot(&r, &r);
        let beta = next / rr;
        rr = next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    let xm = ops::integrate(grid, &x);
    x.iter().map(|v| *v - xm).collect()
}

/// The competitor of the non-minimality argument: linear interpolation from
/// `m₀` to a von Mises density `m̄ ∝ exp(κ sin 2πx₁)` over the first unit
/// of time (or the whole horizon if shorter), held at `m̄` afterwards, with
/// flux `w = −Dφ + D m` and `−Δφ = −∂_t m` so that the continuity equation
/// holds exactly on the grid.
pub fn competitor_pair<T: Scalar>(model: &MfgModel<T>, kappa: f64) -> Result<AdmissiblePair<T>> {
    let g = *model.grid();
    let m_bar = InitialDensity::Tilted { kappa }.sample(&g)?;
    let m0 = model.m0();
    let nodes = g.nodes();
    let ramp = (g.t_end() - g.t0()).min(T::one());
    let mut m = vec![T::zero(); g.slices() * nodes];
    for n in 0..g.slices() {
        let s = ((g.time(n) - g.t0()) / ramp).min(T::one());
        for i in 0..nodes {
            m[n * nodes + i] = (T::one() - s) * m0[i] + s * m_bar[i];
        }
    }
    let dt = g.dt();
    let mut w = FluxField::zeros(g);
    let mut grad = vec![T::zero(); g.faces()];
    for n in 0..g.n_time() {
        let rate: Vec<T> = (0..nodes).map(|i| -(m[(n + 1) * nodes + i] - m[n * nodes + i]) / dt).collect();
        let phi = poisson_pseudo_inverse(&g, &rate);
        ops::gradient(&g, &m[(n + 1) * nodes..(n + 2) * nodes], &mut grad);
        let mut dphi = vec![T::zero(); g.faces()];
        ops::gradient(&g, &phi, &mut dphi);
        for (o, (a, b)) in w.slice_mut(n).iter_mut().zip(grad.iter().zip(&dphi)) {
            *o = *a - *b;
        }
    }
    AdmissiblePair::new(DensityField::new(ScalarField::from_values(g, m)?)?, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetitorReport {
    pub kappa: f64,
    pub j: JBreakdown,
    pub continuity_defect: f64,
}

/// Lowest competitor value over a fixed ladder of concentrations `κ`.
pub fn evaluate_competitor_j<T: Scalar>(model: &MfgModel<T>) -> Result<CompetitorReport> {
    let mut best: Option<CompetitorReport> = None;
    for kappa in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let pair = competitor_pair(model, kappa)?;
        let j = evaluate_j(model, &pair)?;
        let rep = CompetitorReport { kappa, j, continuity_defect: pair.continuity_defect.as_f64() };
        if best.as_ref().is_none_or(|b| rep.j.total < b.j.total) {
            best = Some(rep);
        }
    }
    Ok(best.expect("nonempty ladder"))
}

#[derive(Debug, Clone)]
pub struct BranchPair<T: Scalar> {
    pub theta: f64,
    pub t_end: f64,
    pub symmetric: SymmetricBranch<T>,
    pub asymmetric: MfgSolution<T>,
    /// `sup_t ‖m_sym − m_asym‖_∞`.
    pub separation: f64,
    pub j_symmetric: JBreakdown,
    pub j_asymmetric: JBreakdown,
    pub competitor: CompetitorReport,
    pub probe: UniquenessProbe,
}

/// Scalar summary of a [`BranchPair`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub theta: f64,
    pub t_end: f64,
    pub separation: f64,
    pub j_symmetric: f64,
    pub j_asymmetric: f64,
    pub j_competitor: f64,
    pub competitor_kappa: f64,
    pub residual_symmetric: f64,
    pub residual_asymmetric: f64,
    pub reflection_defect_symmetric: f64,
    pub reflection_defect_asymmetric: f64,
    pub projection_defect: f64,
    pub unprojected_drift: f64,
    pub d_grad: f64,
    pub d_sol: f64,
}

impl<T: Scalar> BranchPair<T> {
    pub fn summary(&self) -> BranchSummary {
        let g = *self.asymmetric.grid();
        let res = |s: &MfgSolution<T>| s.residuals.max().max(s.residuals.coupling_consistency);
        BranchSummary {
            theta: self.theta,
            t_end: self.t_end,
            separation: self.separation,
            j_symmetric: self.j_symmetric.total,
            j_asymmetric: self.j_asymmetric.total,
            j_competitor: self.competitor.j.total,
            competitor_kappa: self.competitor.kappa,
            residual_symmetric: res(&self.symmetric.solution),
            residual_asymmetric: res(&self.asymmetric),
            reflection_defect_symmetric: self.symmetric.reflection_defect,
            reflection_defect_asymmetric: reflection_defect(&g, self.asymmetric.m.values()).as_f64(),
            projection_defect: self.symmetric.projection_defect,
            unprojected_drift: self.symmetric.unprojected_drift,
            d_grad: self.probe.d_grad,
            d_sol: self.probe.d_sol,
        }
    }

    /// Success criteria of a pair: residuals within `tol`, separation at
    /// least `min_separation`, and `J(asym) < J(sym)`.
    pub fn is_genuine(&self, tol: f64, min_separation: f64) -> bool {
        let s = self.summary();
        s.residual_symmetric <= tol
            && s.residual_asymmetric <= tol
            && s.separation >= min_separation
            && s.j_asymmetric < s.j_symmetric
    }
}

/// Both branches at one `(θ, T)`; `None` when no asymmetric branch is found.
pub fn branch_pair<T: Scalar>(
    model: &MfgModel<T>,
    theta: f64,
    sym_opts: &PicardOptions,
    asym_opts: &AsymmetricOptions,
    seed: u64,
) -> Result<(SymmetricBranch<T>, AsymmetricOutcome<T>, Option<BranchPair<T>>)> {
    let g = *model.grid();
    let sym = find_symmetric_branch(model, sym_opts)?;
    let asym = find_asymmetric_branch(model, asym_opts, sym.reflection_defect, seed)?;
    let pair = match asym.found() {
        None => None,
        Some(a) => {
            let separation = a.m.field().sup_distance(sym.solution.m.field()).as_f64();
            let j_symmetric = evaluate_j(model, &AdmissiblePair::from_solution(&sym.solution))?;
            let j_asymmetric = evaluate_j(model, &AdmissiblePair::from_solution(a))?;
            let competitor = evaluate_competitor_j(model)?;
            let probe = mfg::probe_uniqueness_given_gradient(&sym.solution, a, 1e-8)?;
            Some(BranchPair {
                theta,
                t_end: (g.t_end() - g.t0()).as_f64(),
                symmetric: sym.clone(),
                asymmetric: a.clone(),
                separation,
                j_symmetric,
                j_asymmetric,
                competitor,
                probe,
            })
        }
    };
    Ok((sym, asym, pair))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub n_space: usize,
    /// Time steps per unit time (at least 16 steps in total).
    pub steps_per_unit: usize,
    pub initial: InitialDensity,
    pub tol: f64,
    pub min_separation: f64,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { n_space: 32, steps_per_unit: 16, initial: InitialDensity::Uniform, tol: 1e-6, min_separation: 1e-2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub theta: f64,
    pub t_end: f64,
    pub found: bool,
    pub genuine: bool,
    pub separation: f64,
    pub j_symmetric: f64,
    pub j_asymmetric: f64,
    pub j_competitor: f64,
    pub note: String,
}

/// Grid for a sweep cell.
pub fn sweep_grid(opts: &SweepOptions, dim: usize, t_end: f64) -> Result<TorusGrid<f64>> {
    let k = ((opts.steps_per_unit as f64 * t_end).round() as usize).max(16);
    TorusGrid::new(dim, opts.n_space, k, 0.0, t_end)
}

/// Runs every `(θ, T)` cell concurrently.
pub fn sweep(thetas: &[f64], horizons: &[f64], opts: &SweepOptions) -> Result<Vec<SweepCell>> {
    let cells: Vec<(f64, f64)> = thetas.iter().flat_map(|&a| horizons.iter().map(move |&b| (a, b))).collect();
    cells
        .par_iter()
        .map(|&(theta, t_end)| {
            let grid = sweep_grid(opts, 1, t_end)?;
            let model = double_well_model(grid, theta, opts.initial)?;
            let asym = AsymmetricOptions { tol: opts.tol, ..AsymmetricOptions::default() };
            let sym_opts = PicardOptions { tol: 1e-11, max_iter: 2000, ..PicardOptions::default() };
            let mut cell = SweepCell {
                theta,
                t_end,
                found: false,
                genuine: false,
                separation: 0.0,
                j_symmetric: f64::NAN,
                j_asymmetric: f64::NAN,
                j_competitor: f64::NAN,
                note: String::new(),
            };
            match branch_pair(&model, theta, &sym_opts, &asym, opts.seed) {
                Ok((sym, outcome, pair)) => {
                    cell.j_symmetric = evaluate_j(&model, &AdmissiblePair::from_solution(&sym.solution))?.total;
                    match (outcome, pair) {
                        (_, Some(p)) => {
                            let s = p.summary();
                            cell.found = true;
                            cell.genuine = p.is_genuine(opts.tol, opts.min_separation);
                            cell.separation = s.separation;
                            cell.j_asymmetric = s.j_asymmetric;
                            cell.j_competitor = s.j_competitor;
                        }
                        (AsymmetricOutcome::NotFound(why), None) => cell.note = why,
                        (AsymmetricOutcome::Found(_), None) => unreachable!("found outcome always yields a pair"),
                    }
                }
                Err(e) => cell.note = e.to_string(),
            }
            Ok(cell)
        })
        .collect()
}

/// Best genuine cell: largest relative advantage `(J_sym − J_asym)/J_sym`.
pub fn best_cell(cells: &[SweepCell]) -> Option<&SweepCell> {
    cells
        .iter()
        .filter(|c| c.genuine)
        .max_by(|a, b| {
            let ra = (a.j_symmetric - a.j_asymmetric) / a.j_symmetric;
            let rb = (b.j_symmetric - b.j_asymmetric) / b.j_symmetric;
            ra.total_cmp(&rb)
        })
}

/// CSV with columns `theta,t_end,found,genuine,separation,j_sym,j_asym,j_competitor,note`.
pub fn write_sweep_csv(cells: &[SweepCell], w: &mut impl Write) -> Result<()> {
    writeln!(w, "theta,t_end,found,genuine,separation,j_sym,j_asym,j_competitor,note")?;
    for c in cells {
        writeln!(
            w,
            "{},{},{},{},{:.17e},{:.17e},{:.17e},{:.17e},\"{}\"",
            c.theta,
            c.t_end,
            c.found,
            c.genuine,
            c.separation,
            c.j_symmetric,
            c.j_asymmetric,
            c.j_competitor,
            c.note.replace('"', "'")
        )?;
    }
    Ok(())
}

/// `sup_t ‖a − b‖₂` of two densities on the same grid.
pub fn l2_separation<T: Scalar>(a: &DensityField<T>, b: &DensityField<T>) -> f64 {
    sup_l2(a.grid(), a.values(), b.values()).as_f64()
}
