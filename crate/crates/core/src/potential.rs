//! The potential functional `J(m, w)`, its first and second variations on
//! admissible directions, and the restriction property of minimizers.
//!
//! Quadrature: `J = dt Σ_{n<K} [Σ_faces dx^d M l(w/M) + F(mⁿ)] + G(m^K)` with
//! `M = A(mⁿ)` the face average. The continuity constraint is
//! `(m^{n+1} − mⁿ)/dt − Δm^{n+1} + div wⁿ = 0`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::grid::{ops, DensityField, FluxField, ScalarField};
use crate::mfg::{self, MfgSolution, PicardOptions};
use crate::model::{CouplingAt, MfgModel};
use crate::rng;
use crate::scalar::Scalar;

/// Continuity defect below which a pair counts as admissible.
pub const ADMISSIBLE_TOL: f64 = 1e-8;
/// Floor on face masses inside the kinetic division.
pub const MASS_FLOOR: f64 = 1e-12;
/// Finite-difference step of the criticality cross-check.
pub const FD_STEP: f64 = 1e-4;

/// Sup over steps of `|(m^{n+1} − mⁿ)/dt − Δm^{n+1} + div wⁿ|`.
pub fn continuity_defect<T: Scalar>(m: &[T], w: &FluxField<T>) -> T {
    let g = *w.grid();
    let dt = g.dt();
    let nodes = g.nodes();
    let mut lap = vec![T::zero(); nodes];
    let mut div = vec![T::zero(); nodes];
    let mut worst = T::zero();
    for n in 0..g.n_time() {
        let cur = &m[n * nodes..(n + 1) * nodes];
        let next = &m[(n + 1) * nodes..(n + 2) * nodes];
        ops::laplacian(&g, next, &mut lap);
        ops::divergence(&g, w.slice(n), &mut div);
        for i in 0..nodes {
            worst = worst.max(((next[i] - cur[i]) / dt - lap[i] + div[i]).abs());
        }
    }
    worst
}

#[derive(Debug, Clone)]
pub struct AdmissiblePair<T: Scalar> {
    pub m: DensityField<T>,
    pub w: FluxField<T>,
    pub continuity_defect: T,
}

impl<T: Scalar> AdmissiblePair<T> {
    pub fn new(m: DensityField<T>, w: FluxField<T>) -> Result<Self> {
        if m.grid() != w.grid() {
            return Err(MfgError::GridMismatch("density and flux grids differ".into()));
        }
        let continuity_defect = continuity_defect(m.values(), &w);
        Ok(Self { m, w, continuity_defect })
    }

    pub fn from_solution(sol: &MfgSolution<T>) -> Self {
        let continuity_defect = continuity_defect(sol.m.values(), &sol.w);
        Self { m: sol.m.clone(), w: sol.w.clone(), continuity_defect }
    }

    /// Continuity defect within [`ADMISSIBLE_TOL`].
    pub fn is_admissible(&self) -> bool {
        self.continuity_defect <= T::of(ADMISSIBLE_TOL)
    }

    /// `(m + h μ, w + h z)`; fails if the density turns negative.
    pub fn shifted(&self, dir: &Direction<T>, h: T) -> Result<Self> {
        let m = DensityField::new(self.m.field().combine(T::one(), &dir.mu, h))?;
        Self::new(m, self.w.combine(T::one(), &dir.z, h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JBreakdown {
    pub kinetic: f64,
    pub running_potential: f64,
    pub terminal_potential: f64,
    pub total: f64,
}

fn kinetic_slice<T: Scalar>(model: &MfgModel<T>, m: &[T], w: &[T]) -> T {
    let g = model.grid();
    let mut face_m = vec![T::zero(); g.faces()];
    ops::face_average(g, m, &mut face_m);
    let floor = T::of(MASS_FLOOR);
    let mut acc = T::zero();
    for (f, (mf, wf)) in face_m.iter().zip(w).enumerate() {
        if *mf == T::zero() {
            if *wf != T::zero() {
                return T::infinity();
            }
            continue;
        }
        let mm = mf.max(floor);
        acc += mm * model.face_lagrangian(f, *wf / mm);
    }
    g.cell_volume() * acc
}

fn j_parts<T: Scalar>(model: &MfgModel<T>, m: &[T], w: &FluxField<T>) -> (T, T, T) {
    let g = *model.grid();
    let nodes = g.nodes();
    let dt = g.dt();
    let slices: Vec<usize> = (0..g.n_time()).collect();
    let parts: Vec<(T, T)> = slices
        .par_iter()
        .map(|&n| {
            let mn = &m[n * nodes..(n + 1) * nodes];
            let k = kinetic_slice(model, mn, w.slice(n));
            let f = if model.running().is_zero() { T::zero() } else { model.running().potential(&g, mn) };
            (k, f)
        })
        .collect();
    let kinetic = dt * parts.iter().map(|p| p.0).sum::<T>();
    let running = dt * parts.iter().map(|p| p.1).sum::<T>();
    let mk = &m[g.n_time() * nodes..];
    let terminal = if model.terminal().is_zero() { T::zero() } else { model.terminal().potential(&g, mk) };
    (kinetic, running, terminal)
}

/// `J(m, w)`; the kinetic part is `+∞` when `w ≠ 0` where `A(m) = 0`.
pub fn evaluate_j<T: Scalar>(model: &MfgModel<T>, pair: &AdmissiblePair<T>) -> Result<JBreakdown> {
    if pair.m.grid() != model.grid() {
        return Err(MfgError::GridMismatch("pair and model grids differ".into()));
    }
    let (k, r, t) = j_parts(model, pair.m.values(), &pair.w);
    Ok(JBreakdown {
        kinetic: k.as_f64(),
        running_potential: r.as_f64(),
        terminal_potential: t.as_f64(),
        total: (k + r + t).as_f64(),
    })
}

/// A perturbation `(μ, z)` of a pair: signed density and flux.
#[derive(Debug, Clone)]
pub struct Direction<T: Scalar> {
    pub mu: ScalarField<T>,
    pub z: FluxField<T>,
}

impl<T: Scalar> Direction<T> {
    /// Solves `(μ^{n+1} − μⁿ)/dt − Δμ^{n+1} + div zⁿ = 0` from `μ⁰ = 0`.
    pub fn from_flux(model: &MfgModel<T>, z: FluxField<T>) -> Self {
        let g = *z.grid();
        let dt = g.dt();
        let mut mu = ScalarField::zeros(g);
        let mut div = vec![T::zero(); g.nodes()];
        for n in 0..g.n_time() {
            ops::divergence(&g, z.slice(n), &mut div);
            let mut next: Vec<T> = mu.slice(n).iter().zip(&div).map(|(a, d)| *a - dt * *d).collect();
            model.diffusion().solve_in_place(&mut next);
            mu.slice_mut(n + 1).copy_from_slice(&next);
        }
        Self { mu, z }
    }

    /// Linear continuity defect, including `|μ⁰|`.
    pub fn defect(&self) -> T {
        continuity_defect(self.mu.values(), &self.z).max(ops::sup_norm(self.mu.slice(0)))
    }

    pub fn scaled(&self, a: T) -> Self {
        Self { mu: self.mu.combine(a, &self.mu, T::zero()), z: self.z.combine(a, &self.z, T::zero()) }
    }
}

/// Random smooth admissible direction, flux first. The flux vanishes on the
/// first 10% of the steps and the direction is scaled to `sup|z| = 1`.
pub fn random_direction<T: Scalar>(model: &MfgModel<T>, seed: u64, stream: u64) -> Direction<T> {
    let g = *model.grid();
    let mut rng = rng::stream(seed, stream);
    let quiet = (g.n_time() as f64 * 0.1).ceil() as usize;
    let mut z = FluxField::zeros(g);
    let nodes = g.nodes();
    for _ in 0..2 {
        let profile = rng::smooth_time_profile(&g, 3, &mut rng);
        let shapes: Vec<Vec<T>> = (0..g.dim()).map(|_| rng::smooth_slice(&g, 2, false, &mut rng)).collect();
        let weight = T::of(rng.gen_range(0.5..1.0));
        for n in quiet..g.n_time() {
            let s = z.slice_mut(n);
            for (axis, shape) in shapes.iter().enumerate() {
                for i in 0..nodes {
                    s[axis * nodes + i] += weight * profile[n] * shape[i];
                }
            }
        }
    }
    let sup = z.sup_norm();
    if sup > T::zero() {
        z.values_mut().iter_mut().for_each(|v| *v /= sup);
    }
    Direction::from_flux(model, z)
}

/// Analytic first variation `d/dh J((m,w) + h(μ,z))` at `h = 0`.
pub fn first_variation<T: Scalar>(model: &MfgModel<T>, pair: &AdmissiblePair<T>, dir: &Direction<T>) -> T {
    let g = *model.grid();
    let dt = g.dt();
    let vol = g.cell_volume();
    let nodes = g.nodes();
    let h = model.hamiltonian();
    let per_slice: Vec<T> = (0..g.n_time())
        .into_par_iter()
        .map(|n| {
            let m = pair.m.slice(n);
            let mut face_m = vec![T::zero(); g.faces()];
            let mut face_mu = vec![T::zero(); g.faces()];
            ops::face_average(&g, m, &mut face_m);
            ops::face_average(&g, dir.mu.slice(n), &mut face_mu);
            let w = pair.w.slice(n);
            let z = dir.z.slice(n);
            let mut acc = T::zero();
            for f in 0..g.faces() {
                let mm = face_m[f].max(T::of(MASS_FLOOR));
                let q = w[f] / mm;
                let x = model.face_x(f);
                let axis = f / nodes;
                acc += face_mu[f] * h.l(x, axis, q) + h.dl(x, axis, q) * (z[f] - q * face_mu[f]);
            }
            let mut kinetic = vol * acc;
            if !model.running().is_zero() {
                let f = CouplingAt::new(model.running(), &g, m).values();
                kinetic += ops::inner(&g, &f, dir.mu.slice(n));
            }
            dt * kinetic
        })
        .collect();
    let mut total: T = per_slice.into_iter().sum();
    if !model.terminal().is_zero() {
        let k = g.n_time();
        let gv = CouplingAt::new(model.terminal(), &g, pair.m.slice(k)).values();
        total += ops::inner(&g, &gv, dir.mu.slice(k));
    }
    total
}

/// Central difference `(J(+h) − J(−h)) / 2h` along a direction.
pub fn first_variation_fd<T: Scalar>(model: &MfgModel<T>, pair: &AdmissiblePair<T>, dir: &Direction<T>, step: T) -> T {
    let shifted = |s: T| {
        let m = pair.m.field().combine(T::one(), &dir.mu, s);
        let w = pair.w.combine(T::one(), &dir.z, s);
        let (k, r, t) = j_parts(model, m.values(), &w);
        k + r + t
    };
    (shifted(step) - shifted(-step)) / (T::of(2.0) * step)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityReport {
    /// `max |dJ/dh|` over the probes.
    pub defect: f64,
    /// `max |analytic − central difference|`.
    pub fd_mismatch: f64,
    pub analytic: Vec<f64>,
    pub finite_difference: Vec<f64>,
}

/// First variation of `J` at a pair along `probes` random admissible
/// directions, cross-checked against central differences at `h = 1e-4`.
pub fn criticality_defect<T: Scalar>(
    model: &MfgModel<T>,
    pair: &AdmissiblePair<T>,
    probes: usize,
    seed: u64,
) -> CriticalityReport {
    let results: Vec<(f64, f64)> = (0..probes.max(1) as u64)
        .into_par_iter()
        .map(|k| {
            let dir = random_direction(model, seed, k);
            let a = first_variation(model, pair, &dir).as_f64();
            let fd = first_variation_fd(model, pair, &dir, T::of(FD_STEP)).as_f64();
            (a, fd)
        })
        .collect();
    CriticalityReport {
        defect: results.iter().map(|r| r.0.abs()).fold(0.0, f64::max),
        fd_mismatch: results.iter().map(|r| (r.0 - r.1).abs()).fold(0.0, f64::max),
        analytic: results.iter().map(|r| r.0).collect(),
        finite_difference: results.iter().map(|r| r.1).collect(),
    }
}

/// Second variation `𝒥(μ, z)` at a solution:
/// `Σ dt dx^d l''(q)/M (z − q A(μ))² + dt Σ_{n<K} ⟨μⁿ, K_f μⁿ⟩ + ⟨μ^K, K_g μ^K⟩`.
pub fn evaluate_second_variation<T: Scalar>(model: &MfgModel<T>, sol: &MfgSolution<T>, dir: &Direction<T>) -> Result<T> {
    let defect = dir.defect();
    if !(defect <= T::of(ADMISSIBLE_TOL)) {
        return Err(MfgError::InadmissibleDirection { defect: defect.as_f64(), tol: ADMISSIBLE_TOL });
    }
    Ok(second_variation_unchecked(model, &sol.m, &sol.w, dir))
}

pub(crate) fn second_variation_unchecked<T: Scalar>(
    model: &MfgModel<T>,
    m: &DensityField<T>,
    w: &FluxField<T>,
    dir: &Direction<T>,
) -> T {
    let g = *model.grid();
    let dt = g.dt();
    let nodes = g.nodes();
    let h = model.hamiltonian();
    let per_slice: Vec<T> = (0..g.n_time())
        .into_par_iter()
        .map(|n| {
            let mut face_m = vec![T::zero(); g.faces()];
            let mut face_mu = vec![T::zero(); g.faces()];
            ops::face_average(&g, m.slice(n), &mut face_m);
            ops::face_average(&g, dir.mu.slice(n), &mut face_mu);
            let wn = w.slice(n);
            let z = dir.z.slice(n);
            let mut acc = T::zero();
            for f in 0..g.faces() {
                let mm = face_m[f].max(T::of(MASS_FLOOR));
                let q = wn[f] / mm;
                let e = z[f] - q * face_mu[f];
                acc += h.d2l(model.face_x(f), f / nodes, q) / mm * e * e;
            }
            let mut out = g.cell_volume() * acc;
            if !model.running().is_zero() {
                let at = CouplingAt::new(model.running(), &g, m.slice(n));
                let mut kmu = vec![T::zero(); nodes];
                at.kernel_apply(dir.mu.slice(n), &mut kmu);
                out += ops::inner(&g, dir.mu.slice(n), &kmu);
            }
            dt * out
        })
        .collect();
    let mut total: T = per_slice.into_iter().sum();
    if !model.terminal().is_zero() {
        let k = g.n_time();
        let at = CouplingAt::new(model.terminal(), &g, m.slice(k));
        let mut kmu = vec![T::zero(); nodes];
        at.kernel_apply(dir.mu.slice(k), &mut kmu);
        total += ops::inner(&g, dir.mu.slice(k), &kmu);
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictionReport {
    pub t1: f64,
    pub slice: usize,
    /// Sup distance (`u` and `m`) of the re-solve started at the restriction.
    pub from_restriction: f64,
    pub from_restriction_converged: bool,
    /// Sup distance of the re-solve started from a perturbed density.
    pub from_perturbed: f64,
    pub from_perturbed_converged: bool,
}

/// Re-solves on `[t1, T]` from `m(t1)`, once started at the restricted
/// solution and once from a smooth perturbation of it, and measures the
/// distance of both to the restriction.
pub fn restriction_consistency<T: Scalar>(
    model: &MfgModel<T>,
    sol: &MfgSolution<T>,
    t1: T,
    opts: &PicardOptions,
    seed: u64,
) -> Result<RestrictionReport> {
    let g = *model.grid();
    let slice = g.slice_of(t1)?;
    if slice == 0 || slice >= g.n_time() {
        return Err(MfgError::InvalidParameter(format!("t1 = {t1} must lie strictly inside the horizon")));
    }
    let (sub, restricted) = sol.restrict(model, slice)?;
    let dist = |s: &MfgSolution<T>| {
        s.u.sup_distance(&restricted.u).max(s.m.field().sup_distance(restricted.m.field())).as_f64()
    };
    let a = mfg::solve_picard(&sub, &restricted.m, opts)?;
    let perturbed = perturb_density(&restricted.m, 0.1, seed, 0)?;
    let b = mfg::solve_picard(&sub, &perturbed, opts)?;
    Ok(RestrictionReport {
        t1: t1.as_f64(),
        slice,
        from_restriction: dist(&a),
        from_restriction_converged: a.converged,
        from_perturbed: dist(&b),
        from_perturbed_converged: b.converged,
    })
}

/// `m·(1 + ε·η)` with a smooth random space–time `η` of sup norm ≤ 1,
/// clipped at zero and renormalized per slice.
pub fn perturb_density<T: Scalar>(m: &DensityField<T>, eps: f64, seed: u64, stream: u64) -> Result<DensityField<T>> {
    let g = *m.grid();
    let mut rng = rng::stream(seed, stream);
    let shape = rng::smooth_slice(&g, 3, false, &mut rng);
    let profile = rng::smooth_time_profile(&g, 2, &mut rng);
    let mut values = m.values().to_vec();
    let nodes = g.nodes();
    for n in 0..g.slices() {
        let s = &mut values[n * nodes..(n + 1) * nodes];
        for (v, e) in s.iter_mut().zip(&shape) {
            *v = (*v * (T::one() + T::of(eps) * profile[n] * *e)).max(T::zero());
        }
        crate::grid::normalize_mass(&g, s)?;
    }
    DensityField::new(ScalarField::from_values(g, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::model::library::{builtin_quadratic, CouplingKind, InitialDensity};

    #[test]
    fn uniform_density_with_quadratic_potential() {
        let g = TorusGrid::new(1, 16, 8, 0.0, 1.0).unwrap();
        let model = builtin_quadratic(g, CouplingKind::Monotone, 2.0, InitialDensity::Uniform).unwrap();
        let m = DensityField::constant_in_time(g, &[1.0; 16]).unwrap();
        let pair = AdmissiblePair::new(m, FluxField::zeros(g)).unwrap();
        assert!(pair.is_admissible());
        let j = evaluate_j(&model, &pair).unwrap();
        assert!((j.total - 1.0).abs() < 1e-14 && j.kinetic == 0.0);
    }

    #[test]
    fn mass_free_flux_costs_infinity() {
        let g = TorusGrid::new(1, 8, 4, 0.0, 1.0).unwrap();
        let model = builtin_quadratic(g, CouplingKind::None, 0.0, InitialDensity::Uniform).unwrap();
        let mut m = vec![0.0; 8];
        m[0] = 8.0;
        let m = DensityField::constant_in_time(g, &m).unwrap();
        let mut w = FluxField::zeros(g);
        w.values_mut()[4] = 1.0;
        let pair = AdmissiblePair::new(m, w).unwrap();
        assert!(evaluate_j(&model, &pair).unwrap().kinetic.is_infinite());
    }

    #[test]
    fn directions_are_admissible() {
        let g = TorusGrid::<f64>::new(2, 8, 10, 0.0, 1.0).unwrap();
        let model = builtin_quadratic(g, CouplingKind::None, 0.0, InitialDensity::Uniform).unwrap();
        let d = random_direction(&model, 4, 1);
        assert!(d.defect() < 1e-10);
        assert_eq!(d.z.slice(0).iter().fold(0.0f64, |a, v| a.max(v.abs())), 0.0);
        for n in 0..g.slices() {
            assert!(ops::integrate(&g, d.mu.slice(n)).abs() < 1e-13);
        }
    }
}
