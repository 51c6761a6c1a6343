//! The linearized forward–backward system around an equilibrium `(u, m)`:
//!
//! ```text
//! (v^{n−1} − vⁿ)/dt − Δv^{n−1} + Aᵀ(bⁿ·Dvⁿ) − K_f(mⁿ)μⁿ = aⁿ,   n = 1, …, K−1
//! (v^{K−1} − v^K)/dt − Δv^{K−1} = 0,      v^K − K_g(m^K)μ^K = c
//! (μ^{n+1} − μⁿ)/dt − Δμ^{n+1} − div(A(μⁿ)bⁿ + A(mⁿ)D²H Dvⁿ) = div βⁿ,   μ⁰ = 0
//! ```
//!
//! with `bⁿ = D_pH(x, Duⁿ)`. It is the exact Jacobian of the discrete MFG
//! scheme, and the second variation of the discrete potential.

use serde::{Deserialize, Serialize};

use super::linalg::{BandLu, Csr};
use crate::error::{MfgError, Result};
use crate::grid::{ops, FluxField, ScalarField, TorusGrid};
use crate::mfg::MfgSolution;
use crate::model::{CouplingAt, MfgModel};
use crate::pde::Diagnostics;
use crate::potential::Direction;
use crate::scalar::Scalar;

/// Inhomogeneities `(a, β, c)` of the perturbed system.
#[derive(Debug, Clone)]
pub struct Sources<T: Scalar> {
    pub a: ScalarField<T>,
    pub beta: FluxField<T>,
    pub c: Vec<T>,
}

impl<T: Scalar> Sources<T> {
    pub fn zeros(grid: TorusGrid<T>) -> Self {
        Self { a: ScalarField::zeros(grid), beta: FluxField::zeros(grid), c: vec![T::zero(); grid.nodes()] }
    }

    /// `(‖a‖_∞, ‖β‖_∞, ‖c‖_∞)`.
    pub fn norms(&self) -> [f64; 3] {
        [self.a.sup_norm().as_f64(), self.beta.sup_norm().as_f64(), ops::sup_norm(&self.c).as_f64()]
    }

    pub fn combine(&self, x: T, other: &Self, y: T) -> Self {
        Self {
            a: self.a.combine(x, &other.a, y),
            beta: self.beta.combine(x, &other.beta, y),
            c: self.c.iter().zip(&other.c).map(|(p, q)| x * *p + y * *q).collect(),
        }
    }
}

/// Linearized problem on `[t1, T]`: the restricted model and base solution
/// plus the inhomogeneities.
#[derive(Debug, Clone)]
pub struct LinearizedProblem<T: Scalar> {
    pub model: MfgModel<T>,
    pub base: MfgSolution<T>,
    pub sources: Sources<T>,
}

impl<T: Scalar> LinearizedProblem<T> {
    /// Homogeneous problem around `base` restricted to `[time(slice), T]`.
    pub fn new(model: &MfgModel<T>, base: &MfgSolution<T>, slice: usize) -> Result<Self> {
        if base.grid() != model.grid() {
            return Err(MfgError::GridMismatch("base solution and model differ".into()));
        }
        let (model, base) = if slice == 0 { (model.clone(), base.clone()) } else { base.restrict(model, slice)? };
        let sources = Sources::zeros(*model.grid());
        Ok(Self { model, base, sources })
    }

    pub fn with_sources(mut self, sources: Sources<T>) -> Result<Self> {
        if sources.a.grid() != self.model.grid() || sources.beta.grid() != self.model.grid() {
            return Err(MfgError::GridMismatch("sources and problem differ".into()));
        }
        self.sources = sources;
        Ok(self)
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        self.model.grid()
    }
}

/// Base-state coefficients shared by the sweeps and the assembly.
pub struct Linearization<'a, T: Scalar> {
    pub(crate) model: &'a MfgModel<T>,
    pub(crate) grid: TorusGrid<T>,
    pub(crate) drift: FluxField<T>,
    /// `A(mⁿ)·D²_pp H(x, Duⁿ)` on the faces.
    pub(crate) mobility: FluxField<T>,
    pub(crate) running: Vec<Option<CouplingAt<'a, T>>>,
    pub(crate) terminal: Option<CouplingAt<'a, T>>,
}

impl<'a, T: Scalar> Linearization<'a, T> {
    pub fn new(p: &'a LinearizedProblem<T>) -> Self {
        let model = &p.model;
        let g = *model.grid();
        let du = p.base.u.gradient();
        let mut drift = FluxField::zeros(g);
        let mut mobility = FluxField::zeros(g);
        let mut hess = vec![T::zero(); g.faces()];
        let mut face_m = vec![T::zero(); g.faces()];
        for n in 0..g.slices() {
            model.drift(du.slice(n), drift.slice_mut(n));
            model.hessian(du.slice(n), &mut hess);
            ops::face_average(&g, p.base.m.slice(n), &mut face_m);
            for (o, (h, mm)) in mobility.slice_mut(n).iter_mut().zip(hess.iter().zip(&face_m)) {
                *o = *h * *mm;
            }
        }
        let running = (0..g.slices())
            .map(|n| (!model.running().is_zero()).then(|| CouplingAt::new(model.running(), &g, p.base.m.slice(n))))
            .collect();
        let terminal =
            (!model.terminal().is_zero()).then(|| CouplingAt::new(model.terminal(), &g, p.base.m.slice(g.n_time())));
        Self { model, grid: g, drift, mobility, running, terminal }
    }

    fn kernel(&self, n: usize, mu: &[T], out: &mut [T]) {
        match &self.running[n] {
            Some(at) => at.kernel_apply(mu, out),
            None => out.iter_mut().for_each(|o| *o = T::zero()),
        }
    }

    fn terminal_kernel(&self, mu: &[T], out: &mut [T]) {
        match &self.terminal {
            Some(at) => at.kernel_apply(mu, out),
            None => out.iter_mut().for_each(|o| *o = T::zero()),
        }
    }

    /// `Aᵀ(bⁿ·Dv)`.
    fn transport_adjoint(&self, n: usize, v: &[T], out: &mut [T]) {
        let g = &self.grid;
        let mut dv = vec![T::zero(); g.faces()];
        ops::gradient(g, v, &mut dv);
        for (d, b) in dv.iter_mut().zip(self.drift.slice(n)) {
            *d *= *b;
        }
        ops::face_average_adjoint(g, &dv, out);
    }

    /// Linearized flux `A(μ)bⁿ + A(mⁿ)D²H Dv`.
    pub fn flux(&self, n: usize, mu: &[T], v: &[T], out: &mut [T]) {
        let g = &self.grid;
        let mut dv = vec![T::zero(); g.faces()];
        ops::gradient(g, v, &mut dv);
        ops::face_average(g, mu, out);
        for (f, o) in out.iter_mut().enumerate() {
            *o = *o * self.drift.slice(n)[f] + self.mobility.slice(n)[f] * dv[f];
        }
    }

    /// Backward sweep for `v` given `μ`.
    pub fn backward(&self, mu: &ScalarField<T>, src: &Sources<T>) -> ScalarField<T> {
        let g = self.grid;
        let k = g.n_time();
        let dt = g.dt();
        let nodes = g.nodes();
        let mut v = ScalarField::zeros(g);
        let mut tmp = vec![T::zero(); nodes];
        self.terminal_kernel(mu.slice(k), &mut tmp);
        for (o, (t, c)) in v.slice_mut(k).iter_mut().zip(tmp.iter().zip(&src.c)) {
            *o = *t + *c;
        }
        let mut kern = vec![T::zero(); nodes];
        for n in (0..k).rev() {
            let mut next = v.slice(n + 1).to_vec();
            if n + 1 < k {
                self.transport_adjoint(n + 1, v.slice(n + 1), &mut tmp);
                self.kernel(n + 1, mu.slice(n + 1), &mut kern);
                let a = src.a.slice(n + 1);
                for i in 0..nodes {
                    next[i] += dt * (kern[i] + a[i] - tmp[i]);
                }
            }
            self.model.diffusion().solve_in_place(&mut next);
            v.slice_mut(n).copy_from_slice(&next);
        }
        v
    }

    /// Forward sweep for `μ` given `v`.
    pub fn forward(&self, v: &ScalarField<T>, src: &Sources<T>) -> ScalarField<T> {
        let g = self.grid;
        let dt = g.dt();
        let mut mu = ScalarField::zeros(g);
        let mut flux = vec![T::zero(); g.faces()];
        let mut div = vec![T::zero(); g.nodes()];
        for n in 0..g.n_time() {
            self.flux(n, mu.slice(n), v.slice(n), &mut flux);
            for (f, b) in flux.iter_mut().zip(src.beta.slice(n)) {
                *f += *b;
            }
            ops::divergence(&g, &flux, &mut div);
            let mut next: Vec<T> = mu.slice(n).iter().zip(&div).map(|(m, d)| *m + dt * *d).collect();
            self.model.diffusion().solve_in_place(&mut next);
            mu.slice_mut(n + 1).copy_from_slice(&next);
        }
        mu
    }

    /// Equation defects of a candidate `(v, μ)`.
    pub fn residuals(&self, v: &ScalarField<T>, mu: &ScalarField<T>, src: &Sources<T>) -> LinearizedResiduals {
        let g = self.grid;
        let k = g.n_time();
        let dt = g.dt();
        let nodes = g.nodes();
        let mut lap = vec![T::zero(); nodes];
        let mut tmp = vec![T::zero(); nodes];
        let mut kern = vec![T::zero(); nodes];
        let mut backward = T::zero();
        for j in 0..k {
            ops::laplacian(&g, v.slice(j), &mut lap);
            let has_terms = j + 1 < k;
            if has_terms {
                self.transport_adjoint(j + 1, v.slice(j + 1), &mut tmp);
                self.kernel(j + 1, mu.slice(j + 1), &mut kern);
            }
            for i in 0..nodes {
                let mut d = (v.slice(j)[i] - v.slice(j + 1)[i]) / dt - lap[i];
                if has_terms {
                    d += tmp[i] - kern[i] - src.a.slice(j + 1)[i];
                }
                backward = backward.max(d.abs());
            }
        }
        self.terminal_kernel(mu.slice(k), &mut kern);
        let terminal = (0..nodes).map(|i| (v.slice(k)[i] - kern[i] - src.c[i]).abs()).fold(T::zero(), T::max);
        let mut flux = vec![T::zero(); g.faces()];
        let mut div = vec![T::zero(); nodes];
        let mut forward = T::zero();
        for n in 0..k {
            self.flux(n, mu.slice(n), v.slice(n), &mut flux);
            for (f, b) in flux.iter_mut().zip(src.beta.slice(n)) {
                *f += *b;
            }
            ops::divergence(&g, &flux, &mut div);
            ops::laplacian(&g, mu.slice(n + 1), &mut lap);
            for i in 0..nodes {
                let d = (mu.slice(n + 1)[i] - mu.slice(n)[i]) / dt - lap[i] - div[i];
                forward = forward.max(d.abs());
            }
        }
        LinearizedResiduals {
            backward: backward.as_f64(),
            forward: forward.as_f64(),
            terminal: terminal.as_f64(),
            initial: ops::sup_norm(mu.slice(0)).as_f64(),
        }
    }

    /// Flux `z = −A(μ)b − A(m)D²H Dv` of a linearized solution, as a
    /// direction for the second variation.
    pub fn direction(&self, v: &ScalarField<T>, mu: &ScalarField<T>) -> Direction<T> {
        let g = self.grid;
        let mut z = FluxField::zeros(g);
        for n in 0..g.slices() {
            let mut f = vec![T::zero(); g.faces()];
            self.flux(n, mu.slice(n), v.slice(n), &mut f);
            for (o, x) in z.slice_mut(n).iter_mut().zip(&f) {
                *o = -*x;
            }
        }
        Direction { mu: mu.clone(), z }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearizedResiduals {
    pub backward: f64,
    pub forward: f64,
    pub terminal: f64,
    pub initial: f64,
}

impl LinearizedResiduals {
    pub fn max(&self) -> f64 {
        self.backward.max(self.forward).max(self.terminal).max(self.initial)
    }
}

#[derive(Debug, Clone)]
pub struct LinearizedSolution<T: Scalar> {
    pub v: ScalarField<T>,
    pub mu: ScalarField<T>,
    pub residuals: LinearizedResiduals,
    /// `(‖a‖_∞, ‖β‖_∞, ‖c‖_∞)`.
    pub source_norms: [f64; 3],
    pub iterations: usize,
    /// Whether the direct assembled solve replaced the Picard iteration.
    pub fallback: bool,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self { tol: 1e-13, max_iter: 200, damping: 0.5 }
    }
}

/// Damped Picard on `μ` (backward sweep for `v`, forward sweep for `μ̃`),
/// falling back to the assembled direct solve when the iteration stalls.
pub fn solve_linearized<T: Scalar>(p: &LinearizedProblem<T>, opts: &LinearOptions) -> Result<LinearizedSolution<T>> {
    let lin = Linearization::new(p);
    let g = *p.grid();
    let src = &p.sources;
    let mut mu = ScalarField::zeros(g);
    let mut lambda = opts.damping;
    let mut prev = f64::INFINITY;
    let mut growth = 0;
    let mut diag = Diagnostics::default();
    for it in 1..=opts.max_iter.max(1) {
        let v = lin.backward(&mu, src);
        let mt = lin.forward(&v, src);
        let scale = 1.0 + mt.sup_norm().as_f64();
        let dist = mt.sup_distance(&mu).as_f64();
        if dist <= opts.tol * scale {
            let v = lin.backward(&mt, src);
            let residuals = lin.residuals(&v, &mt, src);
            return Ok(LinearizedSolution {
                v,
                mu: mt,
                residuals,
                source_norms: src.norms(),
                iterations: it,
                fallback: false,
                diagnostics: diag,
            });
        }
        if dist > prev {
            growth += 1;
            lambda = (lambda / 2.0).max(1.0 / 64.0);
            if growth > 20 {
                break;
            }
        }
        prev = dist;
        if !dist.is_finite() {
            break;
        }
        let l = T::of(lambda);
        mu = mu.combine(T::one() - l, &mt, l);
    }
    diag.warn("linearized: Picard iteration did not converge; used the direct assembled solve".into());
    let op = assemble_operator(p)?;
    let (v, mu) = op.solve(&lin, src)?;
    let residuals = lin.residuals(&v, &mu, src);
    Ok(LinearizedSolution {
        v,
        mu,
        residuals,
        source_norms: src.norms(),
        iterations: opts.max_iter,
        fallback: true,
        diagnostics: diag,
    })
}

/// The assembled space–time operator of the homogeneous system.
///
/// Unknowns are ordered slice by slice as `[vˢ, μˢ]`; rows likewise, with
/// the backward equation of step `s` (or the terminal row) and the forward
/// equation producing `μˢ` (or the initial row). `scaled` carries the
/// quadrature weights: equation rows `√(dt·dx^d)` in `∂_t` form, boundary
/// rows `√(dx^d)`, unknowns `1/√(dt·dx^d)`, so that `σ_min(scaled)` is the
/// smallest ratio of the `L²` residual to the `L²` norm of `(v, μ)`.
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub raw: Csr,
    pub scaled: Csr,
    pub row_weights: Vec<f64>,
    pub col_weights: Vec<f64>,
    pub nodes: usize,
    pub slices: usize,
}

/// Hard cap on assembled unknowns.
pub const MAX_UNKNOWNS: usize = 200_000;

impl AssembledOperator {
    pub fn unknowns(&self) -> usize {
        self.raw.ncols
    }

    pub fn v_index(&self, s: usize, i: usize) -> usize {
        2 * self.nodes * s + i
    }
    pub fn mu_index(&self, s: usize, i: usize) -> usize {
        2 * self.nodes * s + self.nodes + i
    }

    /// Stacks `(v, μ)` into the unknown vector.
    pub fn stack<T: Scalar>(&self, v: &ScalarField<T>, mu: &ScalarField<T>) -> Vec<f64> {
        let mut x = vec![0.0; self.unknowns()];
        for s in 0..self.slices {
            for i in 0..self.nodes {
                x[self.v_index(s, i)] = v.slice(s)[i].as_f64();
                x[self.mu_index(s, i)] = mu.slice(s)[i].as_f64();
            }
        }
        x
    }

    /// Splits an unknown vector into `(v, μ)`.
    pub fn unstack<T: Scalar>(&self, grid: TorusGrid<T>, x: &[f64]) -> (ScalarField<T>, ScalarField<T>) {
        let mut v = ScalarField::zeros(grid);
        let mut mu = ScalarField::zeros(grid);
        for s in 0..self.slices {
            for i in 0..self.nodes {
                v.slice_mut(s)[i] = T::of(x[self.v_index(s, i)]);
                mu.slice_mut(s)[i] = T::of(x[self.mu_index(s, i)]);
            }
        }
        (v, mu)
    }

    /// Right-hand side of the perturbed system in row order.
    pub fn rhs<T: Scalar>(&self, grid: &TorusGrid<T>, src: &Sources<T>) -> Vec<f64> {
        let k = self.slices - 1;
        let mut b = vec![0.0; self.unknowns()];
        let mut div = vec![T::zero(); self.nodes];
        for s in 0..=k {
            for i in 0..self.nodes {
                if s + 1 < k {
                    b[self.v_index(s, i)] = src.a.slice(s + 1)[i].as_f64();
                }
                if s == k {
                    b[self.v_index(s, i)] = src.c[i].as_f64();
                }
            }
            if s >= 1 {
                ops::divergence(grid, src.beta.slice(s - 1), &mut div);
                for i in 0..self.nodes {
                    b[self.mu_index(s, i)] = div[i].as_f64();
                }
            }
        }
        b
    }

    /// Direct solve of the perturbed system by band LU of the scaled operator.
    pub fn solve<T: Scalar>(&self, lin: &Linearization<T>, src: &Sources<T>) -> Result<(ScalarField<T>, ScalarField<T>)> {
        let lu = BandLu::factor(&self.scaled)?;
        let mut b: Vec<f64> = self.rhs(&lin.grid, src).iter().zip(&self.row_weights).map(|(x, w)| x * w).collect();
        lu.solve(&mut b);
        let x: Vec<f64> = b.iter().zip(&self.col_weights).map(|(y, w)| y * w).collect();
        Ok(self.unstack(lin.grid, &x))
    }
}

/// Assembles the homogeneous linearized operator of a problem.
pub fn assemble_operator<T: Scalar>(p: &LinearizedProblem<T>) -> Result<AssembledOperator> {
    let g = *p.grid();
    let nodes = g.nodes();
    let slices = g.slices();
    let unknowns = 2 * nodes * slices;
    if unknowns > MAX_UNKNOWNS {
        return Err(MfgError::TooLarge { unknowns, limit: MAX_UNKNOWNS });
    }
    let lin = Linearization::new(p);
    let k = g.n_time();
    let dt = g.dt().as_f64();
    let dx = g.dx().as_f64();
    let vol = g.cell_volume().as_f64();
    let inv_dt = 1.0 / dt;
    let inv_dx = 1.0 / dx;
    let inv_dx2 = inv_dx * inv_dx;
    let vi = |s: usize, i: usize| 2 * nodes * s + i;
    let mi = |s: usize, i: usize| 2 * nodes * s + nodes + i;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); unknowns];
    let mut row_weights = vec![0.0; unknowns];
    let eq_w = (dt * vol).sqrt();
    let bd_w = vol.sqrt();
    let kernel_rows = |at: &CouplingAt<T>, i: usize| -> Vec<(usize, f64)> {
        (0..nodes).map(|j| (j, vol * at.kernel_entry(i, j).as_f64())).collect()
    };
    for s in 0..=k {
        for i in 0..nodes {
            // Backward equation of step s, or the terminal row.
            let r = vi(s, i);
            let row = &mut rows[r];
            if s < k {
                row_weights[r] = eq_w;
                row.push((vi(s, i), inv_dt + 2.0 * g.dim() as f64 * inv_dx2));
                for axis in 0..g.dim() {
                    row.push((vi(s, g.next(i, axis)), -inv_dx2));
                    row.push((vi(s, g.prev(i, axis)), -inv_dx2));
                }
                row.push((vi(s + 1, i), -inv_dt));
                if s + 1 < k {
                    let b = lin.drift.slice(s + 1);
                    for axis in 0..g.dim() {
                        let up = b[axis * nodes + i].as_f64();
                        let down = b[axis * nodes + g.prev(i, axis)].as_f64();
                        row.push((vi(s + 1, g.next(i, axis)), 0.5 * up * inv_dx));
                        row.push((vi(s + 1, i), 0.5 * (down - up) * inv_dx));
                        row.push((vi(s + 1, g.prev(i, axis)), -0.5 * down * inv_dx));
                    }
                    if let Some(at) = &lin.running[s + 1] {
                        for (j, v) in kernel_rows(at, i) {
                            row.push((mi(s + 1, j), -v));
                        }
                    }
                }
            } else {
                row_weights[r] = bd_w;
                row.push((vi(k, i), 1.0));
                if let Some(at) = &lin.terminal {
                    for (j, v) in kernel_rows(at, i) {
                        row.push((mi(k, j), -v));
                    }
                }
            }
            // Forward equation producing μˢ, or the initial row.
            let r = mi(s, i);
            let row = &mut rows[r];
            if s == 0 {
                row_weights[r] = bd_w;
                row.push((mi(0, i), 1.0));
            } else {
                row_weights[r] = eq_w;
                let n = s - 1;
                row.push((mi(s, i), inv_dt + 2.0 * g.dim() as f64 * inv_dx2));
                for axis in 0..g.dim() {
                    row.push((mi(s, g.next(i, axis)), -inv_dx2));
                    row.push((mi(s, g.prev(i, axis)), -inv_dx2));
                }
                row.push((mi(n, i), -inv_dt));
                let b = lin.drift.slice(n);
                let c = lin.mobility.slice(n);
                for axis in 0..g.dim() {
                    let up = b[axis * nodes + i].as_f64();
                    let down = b[axis * nodes + g.prev(i, axis)].as_f64();
                    row.push((mi(n, i), -0.5 * (up - down) * inv_dx));
                    row.push((mi(n, g.next(i, axis)), -0.5 * up * inv_dx));
                    row.push((mi(n, g.prev(i, axis)), 0.5 * down * inv_dx));
                    let cu = c[axis * nodes + i].as_f64();
                    let cd = c[axis * nodes + g.prev(i, axis)].as_f64();
                    row.push((vi(n, g.next(i, axis)), -cu * inv_dx2));
                    row.push((vi(n, i), (cu + cd) * inv_dx2));
                    row.push((vi(n, g.prev(i, axis)), -cd * inv_dx2));
                }
            }
        }
    }
    let raw = Csr::from_rows(unknowns, rows);
    let col_weights = vec![1.0 / (dt * vol).sqrt(); unknowns];
    let scaled = raw.scaled(&row_weights, &col_weights);
    Ok(AssembledOperator { raw, scaled, row_weights, col_weights, nodes, slices })
}
