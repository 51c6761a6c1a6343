//! Backward HJB and forward Kolmogorov solvers.
//!
//! Both equations are discretized as the optimality system of the discrete
//! potential functional: implicit diffusion, explicit Hamiltonian, and the
//! Kolmogorov flux `−A(mⁿ)·D_pH(x, Duⁿ)` with arithmetic face averages `A`.
//! For `n = 1, …, K−1`
//!
//! ```text
//! (u^{n−1} − u^n)/dt − Δu^{n−1} + Ĥ(Du^n) = r^n,     (I − dtΔ) u^{K−1} = u^K,
//! (m^{n+1} − m^n)/dt − Δm^{n+1} − div(A(m^n) b^n) = 0,  b^n = D_pH(x, Du^n),
//! ```
//!
//! so the last backward step is pure diffusion and `r^0`, `r^K` are unused.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::grid::{ops, DensityField, FluxField, ScalarField};
use crate::model::{CouplingAt, MfgModel};
use crate::scalar::Scalar;

/// Nonnegativity floor below which the forward solve fails.
pub const NEGATIVE_MASS_TOL: f64 = 1e-10;

/// Non-fatal conditions observed during a solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn warn(&mut self, msg: String) {
        if !self.warnings.contains(&msg) {
            self.warnings.push(msg);
        }
    }
    pub fn merge(&mut self, other: &Diagnostics) {
        for w in &other.warnings {
            self.warn(w.clone());
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HjbProblem<'a, T: Scalar> {
    pub model: &'a MfgModel<T>,
    /// Right-hand side `r`, one slice per time level.
    pub source: &'a ScalarField<T>,
    /// Terminal condition `u^K`.
    pub terminal: &'a [T],
}

#[derive(Debug, Clone, Copy)]
pub struct KolmogorovProblem<'a, T: Scalar> {
    pub model: &'a MfgModel<T>,
    /// Drift `b`, one flux slice per time level (the last one is unused).
    pub drift: &'a FluxField<T>,
    pub m0: &'a [T],
}

fn check_grid<T: Scalar>(model: &MfgModel<T>, other: &crate::grid::TorusGrid<T>, what: &str) -> Result<()> {
    if model.grid() != other {
        return Err(MfgError::GridMismatch(format!(
            "{what} lives on {} but the model on {}",
            other.signature(),
            model.grid().signature()
        )));
    }
    Ok(())
}

/// Backward sweep from `u^K = terminal`.
pub fn solve_hjb<T: Scalar>(p: &HjbProblem<T>) -> Result<(ScalarField<T>, Diagnostics)> {
    let model = p.model;
    let g = *model.grid();
    check_grid(model, p.source.grid(), "source")?;
    if p.terminal.len() != g.nodes() {
        return Err(MfgError::ShapeMismatch { expected: g.nodes(), got: p.terminal.len() });
    }
    let k = g.n_time();
    let dt = g.dt();
    let mut diag = Diagnostics::default();
    let mut u = ScalarField::zeros(g);
    u.slice_mut(k).copy_from_slice(p.terminal);
    let mut du = vec![T::zero(); g.faces()];
    let mut hn = vec![T::zero(); g.nodes()];
    let mut lip = T::zero();
    for n in (0..k).rev() {
        let mut next = u.slice(n + 1).to_vec();
        if n + 1 < k {
            ops::gradient(&g, &next, &mut du);
            model.node_hamiltonian(&du, &mut hn);
            lip = lip.max(drift_lipschitz(model, &next, &du));
            let r = p.source.slice(n + 1);
            for i in 0..g.nodes() {
                next[i] += dt * (r[i] - hn[i]);
            }
        }
        model.diffusion().solve_in_place(&mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(MfgError::NonFinite("HJB solution"));
        }
        u.slice_mut(n).copy_from_slice(&next);
    }
    if dt * lip > T::one() {
        diag.warn(format!("hjb: dt*Lip(D_pH(x,Du)) = {:.3e} exceeds 1", (dt * lip).as_f64()));
    }
    Ok((u, diag))
}

/// Forward sweep from `m0`.
pub fn solve_kolmogorov<T: Scalar>(p: &KolmogorovProblem<T>) -> Result<(DensityField<T>, Diagnostics)> {
    let model = p.model;
    let g = *model.grid();
    check_grid(model, p.drift.grid(), "drift")?;
    if p.m0.len() != g.nodes() {
        return Err(MfgError::ShapeMismatch { expected: g.nodes(), got: p.m0.len() });
    }
    let dt = g.dt();
    let mut diag = Diagnostics::default();
    let mut m = ScalarField::zeros(g);
    m.slice_mut(0).copy_from_slice(p.m0);
    let mut flux = vec![T::zero(); g.faces()];
    let mut div = vec![T::zero(); g.nodes()];
    let mut bmax = T::zero();
    for n in 0..g.n_time() {
        let b = p.drift.slice(n);
        bmax = bmax.max(ops::sup_norm(b));
        let mut next = m.slice(n).to_vec();
        ops::face_average(&g, &next, &mut flux);
        for (f, bv) in flux.iter_mut().zip(b) {
            *f *= *bv;
        }
        ops::divergence(&g, &flux, &mut div);
        for (v, d) in next.iter_mut().zip(&div) {
            *v += dt * *d;
        }
        model.diffusion().solve_in_place(&mut next);
        if let Some((i, v)) = next.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let _ = (i, v);
            return Err(MfgError::NonFinite("Kolmogorov solution"));
        }
        if let Some((i, v)) = next.iter().enumerate().find(|(_, v)| **v < -T::of(NEGATIVE_MASS_TOL)) {
            return Err(MfgError::NegativeMass { slice: n + 1, node: i, value: v.as_f64() });
        }
        m.slice_mut(n + 1).copy_from_slice(&next);
    }
    let dx = g.dx();
    let limit = dx * dx / (T::of_usize(2 * g.dim()) + dx * bmax);
    if dt > limit {
        diag.warn(format!(
            "kolmogorov: dt = {:.3e} exceeds the positivity step bound {:.3e}",
            dt.as_f64(),
            limit.as_f64()
        ));
    }
    Ok((DensityField::new_unchecked(m), diag))
}

/// `dt·Lip(D_pH∘Du)` proxy: largest `D²_pp H · |D_k D_k u|` on the faces.
fn drift_lipschitz<T: Scalar>(model: &MfgModel<T>, u: &[T], du: &[T]) -> T {
    let g = model.grid();
    let nodes = g.nodes();
    let inv_dx2 = T::one() / (g.dx() * g.dx());
    let mut hess = vec![T::zero(); du.len()];
    model.hessian(du, &mut hess);
    let mut out = T::zero();
    for axis in 0..g.dim() {
        for i in 0..nodes {
            let second = (u[g.next(i, axis)] - T::of(2.0) * u[i] + u[g.prev(i, axis)]) * inv_dx2;
            out = out.max(hess[axis * nodes + i] * second.abs());
        }
    }
    out
}

/// Coupling source `f(x, m^n)` on every slice.
pub fn coupling_source<T: Scalar>(model: &MfgModel<T>, m: &ScalarField<T>) -> ScalarField<T> {
    let g = *m.grid();
    let mut out = ScalarField::zeros(g);
    if model.running().is_zero() {
        return out;
    }
    for n in 0..g.slices() {
        let at = CouplingAt::new(model.running(), &g, m.slice(n));
        at.value(out.slice_mut(n));
    }
    out
}

/// Terminal condition `g(x, m^K)`.
pub fn terminal_values<T: Scalar>(model: &MfgModel<T>, m_end: &[T]) -> Vec<T> {
    CouplingAt::new(model.terminal(), model.grid(), m_end).values()
}

/// Drift `D_pH(x, Du^n)` on every slice.
pub fn drift_field<T: Scalar>(model: &MfgModel<T>, u: &ScalarField<T>) -> FluxField<T> {
    let g = *u.grid();
    let du = u.gradient();
    let mut b = FluxField::zeros(g);
    for n in 0..g.slices() {
        model.drift(du.slice(n), b.slice_mut(n));
    }
    b
}

/// Sup over steps of the HJB scheme defect, in `∂_t` units.
pub fn hjb_residual<T: Scalar>(model: &MfgModel<T>, u: &ScalarField<T>, r: &ScalarField<T>) -> T {
    let g = *u.grid();
    let k = g.n_time();
    let dt = g.dt();
    let mut du = vec![T::zero(); g.faces()];
    let mut hn = vec![T::zero(); g.nodes()];
    let mut lap = vec![T::zero(); g.nodes()];
    let mut worst = T::zero();
    for j in 0..k {
        let cur = u.slice(j);
        let next = u.slice(j + 1);
        ops::laplacian(&g, cur, &mut lap);
        if j + 1 < k {
            ops::gradient(&g, next, &mut du);
            model.node_hamiltonian(&du, &mut hn);
        }
        for i in 0..g.nodes() {
            let mut d = (cur[i] - next[i]) / dt - lap[i];
            if j + 1 < k {
                d += hn[i] - r.slice(j + 1)[i];
            }
            worst = worst.max(d.abs());
        }
    }
    worst
}

/// Sup over steps of the Kolmogorov scheme defect, in `∂_t` units.
pub fn kolmogorov_residual<T: Scalar>(model: &MfgModel<T>, m: &ScalarField<T>, b: &FluxField<T>) -> T {
    let _ = model;
    let g = *m.grid();
    let dt = g.dt();
    let mut flux = vec![T::zero(); g.faces()];
    let mut div = vec![T::zero(); g.nodes()];
    let mut lap = vec![T::zero(); g.nodes()];
    let mut worst = T::zero();
    for n in 0..g.n_time() {
        let cur = m.slice(n);
        let next = m.slice(n + 1);
        ops::face_average(&g, cur, &mut flux);
        for (f, bv) in flux.iter_mut().zip(b.slice(n)) {
            *f *= *bv;
        }
        ops::divergence(&g, &flux, &mut div);
        ops::laplacian(&g, next, &mut lap);
        for i in 0..g.nodes() {
            let d = (next[i] - cur[i]) / dt - lap[i] - div[i];
            worst = worst.max(d.abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::model::library::{builtin_quadratic, CouplingKind, InitialDensity};

    fn model(n: usize, k: usize, t: f64) -> MfgModel<f64> {
        let g = TorusGrid::new(1, n, k, 0.0, t).unwrap();
        builtin_quadratic(g, CouplingKind::None, 0.0, InitialDensity::Cosine { amplitude: 0.5 }).unwrap()
    }

    #[test]
    fn constants_are_fixed_points() {
        let m = model(16, 8, 1.0);
        let g = *m.grid();
        let r = ScalarField::zeros(g);
        for c in [0.0, 2.5] {
            let (u, _) = solve_hjb(&HjbProblem { model: &m, source: &r, terminal: &[c; 16] }).unwrap();
            let err = u.values().iter().fold(0.0f64, |a, v| a.max((v - c).abs()));
            assert!(err < 1e-14, "{err}");
        }
    }

    #[test]
    fn residual_of_zero_against_unit_source() {
        let m = model(16, 8, 1.0);
        let g = *m.grid();
        let r = ScalarField::from_fn(g, |_, _| 1.0);
        assert!((hjb_residual(&m, &ScalarField::zeros(g), &r) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn solvers_satisfy_their_schemes() {
        let m = model(32, 16, 0.5);
        let g = *m.grid();
        let r = ScalarField::from_fn(g, |x, t| (6.28 * x[0]).sin() * (1.0 + t));
        let term: Vec<f64> = (0..32).map(|i| (0.3 * i as f64).cos()).collect();
        let (u, _) = solve_hjb(&HjbProblem { model: &m, source: &r, terminal: &term }).unwrap();
        assert!(hjb_residual(&m, &u, &r) < 1e-10);
        let b = drift_field(&m, &u);
        let (rho, _) = solve_kolmogorov(&KolmogorovProblem { model: &m, drift: &b, m0: m.m0() }).unwrap();
        assert!(kolmogorov_residual(&m, rho.field(), &b) < 1e-10);
        assert!(rho.mass_defect() < 1e-12);
    }
}
