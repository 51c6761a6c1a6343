//! Fictitious play: best responses against the running average of past
//! responses, and the local-attractor experiment.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{normalize_mass, ops, DensityField, ScalarField, TorusGrid};
use crate::mfg::{best_response, scheme_defects, sup_l2, MfgSolution};
use crate::model::MfgModel;
use crate::pde::Diagnostics;
use crate::potential::perturb_density;
use crate::rng;
use crate::scalar::Scalar;

/// Success threshold on the final distance to the reference.
pub const ATTRACTOR_TOL: f64 = 5e-4;

/// Fictitious-play state after `n` rounds. The average is stored as the
/// running sum `Σ_{k≤n} mᵏ` and divided on read, so that
/// `μⁿ = (1/n) Σ mᵏ` holds up to a single rounding.
#[derive(Debug, Clone)]
pub struct FpState<T: Scalar> {
    n: usize,
    mu0: DensityField<T>,
    sum: ScalarField<T>,
    /// Last best response `(uⁿ, mⁿ)`.
    pub last: Option<(ScalarField<T>, DensityField<T>)>,
}

impl<T: Scalar> FpState<T> {
    pub fn new(mu0: DensityField<T>) -> Self {
        let sum = ScalarField::zeros(*mu0.grid());
        Self { n: 0, mu0, sum, last: None }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `μⁿ`.
    pub fn mu(&self) -> ScalarField<T> {
        if self.n == 0 {
            return self.mu0.field().clone();
        }
        let inv = T::one() / T::of(self.n as f64);
        self.sum.combine(inv, &self.sum, T::zero())
    }

    pub fn mu_density(&self) -> Result<DensityField<T>> {
        DensityField::new(self.mu())
    }
}

/// Outcome of one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Round index `n` of the average the response was computed against.
    pub n: usize,
    /// `sup_t ‖mⁿ⁺¹ − μⁿ‖₂`.
    pub gap: f64,
    /// `sup_t ‖μⁿ⁺¹ − μⁿ‖₂`.
    pub step: f64,
    /// Distance of `(uⁿ⁺¹, mⁿ⁺¹)` to the reference, when one is given.
    pub err: Option<f64>,
    pub hjb_residual: f64,
    pub kolmogorov_residual: f64,
}

/// `μⁿ ↦ μⁿ⁺¹`: best response to `μⁿ` from the fixed `m₀`, then averaging.
pub fn fp_step<T: Scalar>(model: &MfgModel<T>, state: &mut FpState<T>) -> Result<(StepRecord, Diagnostics)> {
    let g = *model.grid();
    let mu = state.mu();
    let (u, m, diag) = best_response(model, &mu)?;
    let gap = sup_l2(&g, m.values(), mu.values()).as_f64();
    state.sum = state.sum.combine(T::one(), m.field(), T::one());
    state.n += 1;
    let next = state.mu();
    let step = sup_l2(&g, next.values(), mu.values()).as_f64();
    let (hjb, kol) = scheme_defects(model, &u, &m);
    state.last = Some((u, m));
    Ok((
        StepRecord { n: state.n - 1, gap, step, err: None, hjb_residual: hjb, kolmogorov_residual: kol },
        diag,
    ))
}

/// `sup|u − u*| + sup|Du − Du*| + sup|m − m*|`, the grid proxy of the
/// `C^{1,0} × C⁰` distance.
pub fn distance_to<T: Scalar>(u: &ScalarField<T>, m: &DensityField<T>, reference: &MfgSolution<T>) -> f64 {
    let du = u.gradient();
    let dr = reference.u.gradient();
    let grad: T = du.values().iter().zip(dr.values()).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
    (u.sup_distance(&reference.u) + grad + m.field().sup_distance(reference.m.field())).as_f64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpOptions {
    pub n_max: usize,
    pub gap_tol: f64,
}

impl Default for FpOptions {
    fn default() -> Self {
        Self { n_max: 500, gap_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct FpTrace<T: Scalar> {
    /// Every round up to 50, then every 10th, plus the last.
    pub history: Vec<StepRecord>,
    /// Largest `|step − gap/(n+1)|` over all rounds.
    pub averaging_defect: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_gap: f64,
    pub final_err: Option<f64>,
    /// Whether `err_n` is nonincreasing over the second half of the run.
    pub eventually_monotone: Option<bool>,
    /// Last best response, with the last gap as coupling consistency.
    pub solution: MfgSolution<T>,
    /// Final average `μⁿ`.
    pub mu: DensityField<T>,
    pub diagnostics: Diagnostics,
}

fn keep(n: usize) -> bool {
    n < 50 || n.is_multiple_of(10)
}

/// Iterates [`fp_step`] until `gap ≤ gap_tol` or `n_max` rounds.
pub fn run_fp<T: Scalar>(
    model: &MfgModel<T>,
    mu0: &DensityField<T>,
    opts: &FpOptions,
    reference: Option<&MfgSolution<T>>,
) -> Result<FpTrace<T>> {
    let mut state = FpState::new(mu0.clone());
    let mut history = Vec::new();
    let mut errs = Vec::new();
    let mut diag = Diagnostics::default();
    let mut averaging_defect = 0.0f64;
    let mut last = None;
    let mut converged = false;
    for _ in 0..opts.n_max.max(1) {
        let (mut rec, d) = fp_step(model, &mut state)?;
        diag.merge(&d);
        averaging_defect = averaging_defect.max((rec.step - rec.gap / state.n() as f64).abs());
        if let (Some(r), Some((u, m))) = (reference, &state.last) {
            let e = distance_to(u, m, r);
            rec.err = Some(e);
            errs.push(e);
        }
        if keep(rec.n) {
            history.push(rec);
        }
        last = Some(rec);
        if rec.gap <= opts.gap_tol {
            converged = true;
            break;
        }
    }
    let last = last.expect("at least one round");
    if history.last() != Some(&last) {
        history.push(last);
    }
    let (u, m) = state.last.clone().expect("at least one round");
    let mut solution = MfgSolution::from_pair(model, u, m, last.gap);
    solution.iterations = state.n();
    solution.converged = converged;
    let eventually_monotone = (!errs.is_empty()).then(|| {
        let tail = &errs[errs.len() / 2..];
        tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15)
    });
    Ok(FpTrace {
        history,
        averaging_defect,
        iterations: state.n(),
        converged,
        final_gap: last.gap,
        final_err: last.err,
        eventually_monotone,
        solution,
        mu: state.mu_density()?,
        diagnostics: diag,
    })
}

impl<T: Scalar> FpTrace<T> {
    /// CSV with columns `n,gap,step,err,hjb_residual,kolmogorov_residual`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "n,gap,step,err,hjb_residual,kolmogorov_residual")?;
        for r in &self.history {
            let err = r.err.map_or(String::new(), |e| format!("{e:.17e}"));
            writeln!(
                w,
                "{},{:.17e},{:.17e},{},{:.17e},{:.17e}",
                r.n, r.gap, r.step, err, r.hjb_residual, r.kolmogorov_residual
            )?;
        }
        Ok(())
    }

    /// Least-squares slope of `log gap` against `log n` over `[lo, hi]`.
    pub fn gap_slope(&self, lo: usize, hi: usize) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .history
            .iter()
            .filter(|r| r.n >= lo && r.n <= hi && r.gap > 0.0)
            .map(|r| ((r.n as f64).ln(), r.gap.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }
}

/// Smooth random density path: `exp(amplitude·η)` with `η` a random
/// space–time trigonometric polynomial of sup norm ≤ 1, normalized per slice.
pub fn random_density<T: Scalar>(grid: TorusGrid<T>, amplitude: f64, seed: u64, stream: u64) -> Result<DensityField<T>> {
    let mut r = rng::stream(seed, stream);
    let shape = rng::smooth_slice(&grid, 3, true, &mut r);
    let shape2 = rng::smooth_slice(&grid, 2, true, &mut r);
    let profile = rng::smooth_time_profile(&grid, 2, &mut r);
    let nodes = grid.nodes();
    let mut values = vec![T::zero(); grid.slices() * nodes];
    for n in 0..grid.slices() {
        let s = &mut values[n * nodes..(n + 1) * nodes];
        for i in 0..nodes {
            let eta = (shape[i] + profile[n] * shape2[i]) / T::of(2.0);
            s[i] = (T::of(amplitude) * eta).exp();
        }
        normalize_mass(&grid, s)?;
    }
    DensityField::new(ScalarField::from_values(grid, values)?)
}

/// Smooth perturbation of `m` at sup distance at most `delta`.
pub fn perturb_within<T: Scalar>(m: &DensityField<T>, delta: f64, seed: u64, stream: u64) -> Result<DensityField<T>> {
    if delta == 0.0 {
        return Ok(m.clone());
    }
    let sup = m.field().sup_norm().as_f64().max(f64::MIN_POSITIVE);
    let p = perturb_density(m, delta / sup, seed, stream)?;
    let dist = p.field().sup_distance(m.field()).as_f64();
    let s = if dist > delta { delta / dist } else { 1.0 };
    Ok(m.blend(&p, T::of(s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttractorRow {
    pub delta: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub eventually_monotone: usize,
    pub max_final_err: f64,
    pub max_averaging_defect: f64,
}

/// For each `δ`, runs fictitious play from `trials` random starts within
/// sup distance `δ` of `reference.m` and counts `err_{n_max} ≤ 5e−4`.
pub fn local_attractor_experiment<T: Scalar>(
    model: &MfgModel<T>,
    reference: &MfgSolution<T>,
    delta_list: &[f64],
    trials: usize,
    seed: u64,
    n_max: usize,
) -> Result<Vec<AttractorRow>> {
    let opts = FpOptions { n_max, gap_tol: 0.0 };
    let mut rows = Vec::new();
    for (d, &delta) in delta_list.iter().enumerate() {
        let runs: Vec<Result<(f64, bool, f64)>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mu0 = perturb_within(&reference.m, delta, seed, (d * trials + t) as u64)?;
                let tr = run_fp(model, &mu0, &opts, Some(reference))?;
                Ok((tr.final_err.unwrap_or(f64::INFINITY), tr.eventually_monotone.unwrap_or(false), tr.averaging_defect))
            })
            .collect();
        let mut row = AttractorRow {
            delta,
            trials,
            successes: 0,
            success_rate: 0.0,
            eventually_monotone: 0,
            max_final_err: 0.0,
            max_averaging_defect: 0.0,
        };
        for r in runs {
            let (err, mono, avg) = r?;
            row.successes += (err <= ATTRACTOR_TOL) as usize;
            row.eventually_monotone += mono as usize;
            row.max_final_err = row.max_final_err.max(err);
            row.max_averaging_defect = row.max_averaging_defect.max(avg);
        }
        row.success_rate = if trials == 0 { 1.0 } else { row.successes as f64 / trials as f64 };
        rows.push(row);
    }
    Ok(rows)
}

/// `‖μⁿ − (1/n) Σ mᵏ‖_∞` recomputed from the responses of an unrolled run.
pub fn averaging_recomputation<T: Scalar>(model: &MfgModel<T>, mu0: &DensityField<T>, n: usize) -> Result<f64> {
    let mut state = FpState::new(mu0.clone());
    let mut responses = Vec::new();
    for _ in 0..n {
        fp_step(model, &mut state)?;
        responses.push(state.last.as_ref().expect("response").1.clone());
    }
    let g = *model.grid();
    let mut direct = vec![T::zero(); g.slices() * g.nodes()];
    for m in &responses {
        for (d, v) in direct.iter_mut().zip(m.values()) {
            *d += *v;
        }
    }
    let inv = T::of(n as f64);
    let mu = state.mu();
    Ok(ops::sup_norm(&mu.values().iter().zip(&direct).map(|(a, b)| *a - *b / inv).collect::<Vec<_>>()).as_f64())
}
