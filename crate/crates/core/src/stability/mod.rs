//! Linear stability of equilibria: the linearized forward–backward system,
//! its assembled operator, certificates from the smallest singular value,
//! the isolation experiment and the a-priori bound for perturbed data.

pub mod linalg;
pub mod linearized;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use linearized::{
    assemble_operator, solve_linearized, AssembledOperator, LinearOptions, LinearizedProblem, LinearizedResiduals,
    LinearizedSolution, Linearization, Sources, MAX_UNKNOWNS,
};

use crate::error::{MfgError, Result};
use crate::grid::{ops, DensityField, FluxField, ScalarField};
use crate::mfg::{self, MfgSolution, PicardOptions};
use crate::model::MfgModel;
use crate::potential::perturb_density;
use crate::rng;
use crate::scalar::Scalar;
use linalg::{smallest_singular_banded, smallest_singular_dense, BandLu};

/// Default certification tolerance on the scaled `σ_min`.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Largest operator handled by the dense SVD route.
pub const DENSE_LIMIT: usize = 800;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "STABLE")]
    Stable,
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
    #[serde(rename = "UNSTABLE-DIRECTION-FOUND")]
    UnstableDirectionFound,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "STABLE",
            Verdict::Inconclusive => "INCONCLUSIVE",
            Verdict::UnstableDirectionFound => "UNSTABLE-DIRECTION-FOUND",
        })
    }
}

/// Near-null vector of the scaled operator, unit in the scaled `L²` norm.
#[derive(Debug, Clone)]
pub struct Witness<T: Scalar> {
    pub v: ScalarField<T>,
    pub mu: ScalarField<T>,
    /// `‖Ã y‖₂` recomputed from the assembled operator.
    pub residual: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub sigma_min: f64,
    /// Next singular value resolved by the method.
    pub sigma_next: f64,
    pub grid: String,
    pub t1: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub method: String,
    pub unknowns: usize,
    pub iterations: usize,
    pub witness_residual: Option<f64>,
    /// File holding the witness, filled in by whoever writes it.
    pub witness_file: Option<String>,
}

/// Certifies the restriction of `base` to `[time(slice), T]`.
pub fn certify_stability<T: Scalar>(
    model: &MfgModel<T>,
    base: &MfgSolution<T>,
    slice: usize,
    tol: f64,
) -> Result<(StabilityCertificate, Option<Witness<T>>)> {
    let problem = LinearizedProblem::new(model, base, slice)?;
    let op = assemble_operator(&problem)?;
    let n = op.unknowns();
    let (ss, method) = if n <= DENSE_LIMIT {
        (smallest_singular_dense(&op.scaled, DENSE_LIMIT)?, "dense-svd")
    } else {
        (smallest_singular_banded(&op.scaled, 4, 300, 1e-10, 0)?, "banded-inverse-iteration")
    };
    let mut cert = StabilityCertificate {
        sigma_min: ss.sigma,
        sigma_next: ss.next,
        grid: problem.grid().signature(),
        t1: problem.grid().t0().as_f64(),
        tolerance: tol,
        verdict: Verdict::Stable,
        method: method.into(),
        unknowns: n,
        iterations: ss.iterations,
        witness_residual: None,
        witness_file: None,
    };
    if ss.sigma > tol {
        return Ok((cert, None));
    }
    let norm = ss.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    let y: Vec<f64> = ss.vector.iter().map(|x| x / norm).collect();
    let residual = op.scaled.matvec(&y).iter().map(|x| x * x).sum::<f64>().sqrt();
    let x: Vec<f64> = y.iter().zip(&op.col_weights).map(|(a, w)| a * w).collect();
    let (v, mu) = op.unstack(*problem.grid(), &x);
    cert.witness_residual = Some(residual);
    cert.verdict = if residual <= tol { Verdict::UnstableDirectionFound } else { Verdict::Inconclusive };
    Ok((cert, Some(Witness { v, mu, residual, norm: 1.0 })))
}

/// Certificates for several restriction times, computed concurrently.
pub fn certify_restrictions<T: Scalar>(
    model: &MfgModel<T>,
    base: &MfgSolution<T>,
    slices: &[usize],
    tol: f64,
) -> Result<Vec<StabilityCertificate>> {
    slices.par_iter().map(|&s| certify_stability(model, base, s, tol).map(|c| c.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsolationRow {
    pub eta: f64,
    pub trials: usize,
    pub converged_runs: usize,
    /// Trials where two converged runs disagree by more than [`DISTINCT_TOL`].
    pub distinct_pairs: usize,
    pub max_pair_distance: f64,
    pub max_distance_to_base: f64,
}

/// Two converged solutions closer than this count as the same.
pub const DISTINCT_TOL: f64 = 1e-6;

/// For each `η` and trial: perturb `m₀` by at most `η` (relative), then run
/// Picard twice from independent random starts within `η` of the base
/// density and compare the converged solutions.
pub fn isolation_experiment<T: Scalar>(
    model: &MfgModel<T>,
    base: &MfgSolution<T>,
    eta_list: &[f64],
    trials: usize,
    seed: u64,
    opts: &PicardOptions,
) -> Result<Vec<IsolationRow>> {
    let g = *model.grid();
    let m0 = DensityField::constant_in_time(g, model.m0())?;
    let mut rows = Vec::new();
    for (e, &eta) in eta_list.iter().enumerate() {
        let runs: Vec<Result<(usize, f64, f64)>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let stream = 3 * (e * trials + t) as u64;
                let start = perturb_density(&m0, eta, seed, stream)?;
                let sub = model.with_initial(start.slice(0).to_vec())?;
                let a = mfg::solve_picard(&sub, &perturb_density(&base.m, eta, seed, stream + 1)?, opts)?;
                let b = mfg::solve_picard(&sub, &perturb_density(&base.m, eta, seed, stream + 2)?, opts)?;
                let dist = |x: &MfgSolution<T>, y: &MfgSolution<T>| {
                    x.u.sup_distance(&y.u).max(x.m.field().sup_distance(y.m.field())).as_f64()
                };
                let to_base = dist(&a, base).max(dist(&b, base));
                let converged = a.converged as usize + b.converged as usize;
                let pair = if converged == 2 { dist(&a, &b) } else { 0.0 };
                Ok((converged, pair, to_base))
            })
            .collect();
        let mut row = IsolationRow {
            eta,
            trials,
            converged_runs: 0,
            distinct_pairs: 0,
            max_pair_distance: 0.0,
            max_distance_to_base: 0.0,
        };
        for r in runs {
            let (c, pair, to_base) = r?;
            row.converged_runs += c;
            if pair > DISTINCT_TOL {
                row.distinct_pairs += 1;
            }
            row.max_pair_distance = row.max_pair_distance.max(pair);
            row.max_distance_to_base = row.max_distance_to_base.max(to_base);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Operator bound for the perturbed system.
///
/// `c_ab` bounds `‖v‖_∞ + ‖Dv‖_∞ + ‖μ‖_∞` by `c_ab(‖a‖_∞ + ‖β‖_∞)` for
/// `c = 0`; it is three times `‖P A⁻¹ E‖_∞` from `(a, β)` to `(v, Dv, μ)`.
/// Terminal data enter through the heat extension `ĉ` of `c`, which moves
/// `−Aᵀ(b·Dĉ)` into `a` and `A(m)D²H Dĉ` into `β`, so that
/// `‖v‖_{C^{1,0}} + ‖μ‖_{C⁰} ≤ c_hat (‖a‖ + ‖β‖ + ‖c‖ + ‖Dc‖)` with
/// `c_hat = max(c_ab, c_ab (‖b‖_∞ + ‖A(m)D²H‖_∞) + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub inf_norm: f64,
    pub c_ab: f64,
    pub drift_sup: f64,
    pub mobility_sup: f64,
    pub c_hat: f64,
    /// Exact row-sum norm, or a Hager–Higham lower estimate.
    pub exact: bool,
}

/// Output rows up to which the row-sum norm is computed exactly.
pub const EXACT_NORM_LIMIT: usize = 40_000;

struct DataMap<'a, T: Scalar> {
    problem: &'a LinearizedProblem<T>,
    op: AssembledOperator,
    lu: BandLu,
}

impl<T: Scalar> DataMap<'_, T> {
    /// Length of the `(a, β)` part of the data vector.
    fn ab_len(&self) -> usize {
        let g = self.problem.grid();
        g.slices() * (g.nodes() + g.faces())
    }

    fn data_len(&self) -> usize {
        self.ab_len() + self.problem.grid().nodes()
    }

    fn output_len(&self) -> usize {
        let g = self.problem.grid();
        g.slices() * (2 * g.nodes() + g.faces())
    }

    fn sources(&self, d: &[f64]) -> Sources<T> {
        let g = *self.problem.grid();
        let (nodes, s) = (g.nodes(), g.slices());
        let to_t = |x: &[f64]| x.iter().map(|v| T::of(*v)).collect::<Vec<_>>();
        let a = ScalarField::from_values(g, to_t(&d[..s * nodes])).expect("shape");
        let beta = FluxField::from_values(g, to_t(&d[s * nodes..self.ab_len()])).expect("shape");
        let mut c = to_t(&d[self.ab_len()..]);
        c.resize(nodes, T::zero());
        Sources { a, beta, c }
    }

    /// `d ↦ P A⁻¹ E d` for `(a, β)` data.
    fn apply(&self, d: &[f64]) -> Vec<f64> {
        let g = *self.problem.grid();
        let src = self.sources(d);
        let mut b: Vec<f64> = self.op.rhs(&g, &src).iter().zip(&self.op.row_weights).map(|(x, w)| x * w).collect();
        self.lu.solve(&mut b);
        let x: Vec<f64> = b.iter().zip(&self.op.col_weights).map(|(y, w)| y * w).collect();
        let (v, mu) = self.op.unstack::<T>(g, &x);
        let dv = v.gradient();
        v.values().iter().chain(dv.values()).chain(mu.values()).map(|x| x.as_f64()).collect()
    }

    /// `z ↦ Eᵀ A⁻ᵀ Pᵀ z`, restricted to the `(a, β)` part.
    fn apply_t(&self, z: &[f64]) -> Vec<f64> {
        let g = *self.problem.grid();
        let (nodes, faces, s) = (g.nodes(), g.faces(), g.slices());
        let k = g.n_time();
        let zv = &z[..s * nodes];
        let zd = &z[s * nodes..s * (nodes + faces)];
        let zm = &z[s * (nodes + faces)..];
        let mut x = vec![0.0; self.op.unknowns()];
        let mut div = vec![T::zero(); nodes];
        for n in 0..s {
            let face: Vec<T> = zd[n * faces..(n + 1) * faces].iter().map(|v| T::of(*v)).collect();
            ops::divergence(&g, &face, &mut div);
            for i in 0..nodes {
                x[self.op.v_index(n, i)] = zv[n * nodes + i] - div[i].as_f64();
                x[self.op.mu_index(n, i)] = zm[n * nodes + i];
            }
        }
        let mut r: Vec<f64> = x.iter().zip(&self.op.col_weights).map(|(a, w)| a * w).collect();
        self.lu.solve_t(&mut r);
        r.iter_mut().zip(&self.op.row_weights).for_each(|(a, w)| *a *= w);
        let mut out = vec![0.0; self.ab_len()];
        for n in 1..k {
            for i in 0..nodes {
                out[n * nodes + i] = r[self.op.v_index(n - 1, i)];
            }
        }
        let mut grad = vec![T::zero(); faces];
        let mut rm = vec![T::zero(); nodes];
        for n in 0..k {
            for i in 0..nodes {
                rm[i] = T::of(r[self.op.mu_index(n + 1, i)]);
            }
            ops::gradient(&g, &rm, &mut grad);
            for f in 0..faces {
                out[s * nodes + n * faces + f] = -grad[f].as_f64();
            }
        }
        out
    }
}

fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Computes [`BoundEstimate`] for a problem: the row-sum norm exactly (one
/// adjoint solve per output entry) up to [`EXACT_NORM_LIMIT`] outputs, a
/// Hager–Higham estimate beyond.
pub fn estimate_bound<T: Scalar>(problem: &LinearizedProblem<T>) -> Result<BoundEstimate> {
    let op = assemble_operator(problem)?;
    let lu = BandLu::factor(&op.scaled)?;
    let map = DataMap { problem, op, lu };
    let n = map.output_len();
    let exact = n <= EXACT_NORM_LIMIT;
    let inf_norm = if exact {
        (0..n)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                map.apply_t(&e).iter().map(|v| v.abs()).sum::<f64>()
            })
            .reduce(|| 0.0, f64::max)
    } else {
        hager(&map)
    };
    let lin = Linearization::new(problem);
    let drift_sup = lin.drift.sup_norm().as_f64();
    let mobility_sup = lin.mobility.sup_norm().as_f64();
    let c_ab = 3.0 * inf_norm;
    let c_hat = c_ab.max(c_ab * (drift_sup + mobility_sup) + 1.0);
    Ok(BoundEstimate { inf_norm, c_ab, drift_sup, mobility_sup, c_hat, exact })
}

fn hager<T: Scalar>(map: &DataMap<T>) -> f64 {
    let n = map.output_len();
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0f64;
    let mut last_j = usize::MAX;
    for _ in 0..5 {
        let y = map.apply_t(&x);
        est = est.max(y.iter().map(|v| v.abs()).sum::<f64>());
        let mut xi: Vec<f64> = y.iter().map(|v| sign(*v)).collect();
        xi.resize(map.data_len(), 0.0);
        let z = map.apply(&xi);
        let (j, zmax) = z.iter().enumerate().fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if zmax <= ztx || j == last_j {
            break;
        }
        last_j = j;
        x.iter_mut().for_each(|v| *v = 0.0);
        x[j] = 1.0;
    }
    let alt: Vec<f64> =
        (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + i as f64 / (n - 1).max(1) as f64)).collect();
    let y = map.apply_t(&alt);
    est.max(2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64))
}

/// Random smooth data `(a, β, c)` with `‖a‖_∞ = ‖β‖_∞ = ‖c‖_∞ = 1`.
pub fn random_sources<T: Scalar>(problem: &LinearizedProblem<T>, seed: u64, stream: u64) -> Sources<T> {
    let g = *problem.grid();
    let mut r = rng::stream(seed, stream);
    let mut src = Sources::zeros(g);
    let nodes = g.nodes();
    let pa = rng::smooth_time_profile(&g, 3, &mut r);
    let sa = rng::smooth_slice(&g, 3, false, &mut r);
    for n in 0..g.slices() {
        for i in 0..nodes {
            src.a.slice_mut(n)[i] = pa[n] * sa[i];
        }
    }
    let pb = rng::smooth_time_profile(&g, 3, &mut r);
    let sb: Vec<Vec<T>> = (0..g.dim()).map(|_| rng::smooth_slice(&g, 3, false, &mut r)).collect();
    for n in 0..g.slices() {
        for (axis, s) in sb.iter().enumerate() {
            for i in 0..nodes {
                src.beta.slice_mut(n)[axis * nodes + i] = pb[n] * s[i];
            }
        }
    }
    src.c = rng::smooth_slice(&g, 3, false, &mut r);
    let normalize = |v: &mut [T]| {
        let s = ops::sup_norm(v);
        if s > T::zero() {
            v.iter_mut().for_each(|x| *x /= s);
        }
    };
    normalize(src.a.values_mut());
    normalize(src.beta.values_mut());
    normalize(&mut src.c);
    src
}

/// `‖v‖_∞ + ‖Dv‖_∞ + ‖μ‖_∞` of a linearized solution.
pub fn solution_norm<T: Scalar>(s: &LinearizedSolution<T>) -> f64 {
    (s.v.sup_norm() + s.v.gradient().sup_norm() + s.mu.sup_norm()).as_f64()
}

/// Solution norm over data norm, with `c` measured in `C⁰` and in `C¹`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRatio {
    pub solution_norm: f64,
    pub c0_ratio: f64,
    pub c1_ratio: f64,
}

pub fn bound_ratio<T: Scalar>(problem: &LinearizedProblem<T>, src: Sources<T>) -> Result<BoundRatio> {
    let g = *problem.grid();
    let mut dc = vec![T::zero(); g.faces()];
    ops::gradient(&g, &src.c, &mut dc);
    let dc = ops::sup_norm(&dc).as_f64();
    let p = problem.clone().with_sources(src)?;
    let s = solve_linearized(&p, &LinearOptions::default())?;
    let data: f64 = s.source_norms.iter().sum();
    if data == 0.0 {
        return Err(MfgError::InvalidParameter("zero data".into()));
    }
    let norm = solution_norm(&s);
    Ok(BoundRatio { solution_norm: norm, c0_ratio: norm / data, c1_ratio: norm / (data + dc) })
}
