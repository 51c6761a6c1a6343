//! Sparse and banded linear algebra for the assembled linearized operator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{MfgError, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds from per-row entry lists; duplicate columns are summed and
    /// exact zeros dropped.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows.into_iter() {
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == col {
                    v += row[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    indices.push(col);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { nrows: indptr.len() - 1, ncols, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `y = Aᵀ x`.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for (i, xi) in x.iter().enumerate().take(self.nrows) {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    /// `D_r A D_c` for diagonal scalings.
    pub fn scaled(&self, rows: &[f64], cols: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.values[k] *= rows[i] * cols[self.indices[k]];
            }
        }
        out
    }

    /// `(kl, ku)`: largest sub- and super-diagonal offsets holding entries.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    /// Dense copy, refused above `limit` rows or columns.
    pub fn to_dense(&self, limit: usize) -> Result<DMatrix<f64>> {
        let n = self.nrows.max(self.ncols);
        if n > limit {
            return Err(MfgError::TooLarge { unknowns: n, limit });
        }
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        Ok(m)
    }
}

/// LU factorization with partial pivoting of a square band matrix, in the
/// LAPACK band layout (`kl` extra rows hold the fill-in from pivoting).
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    /// Number of pivots replaced by the singularity floor.
    pub floored_pivots: usize,
}

impl BandLu {
    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        self.kl + self.ku + r - c + c * self.ldab
    }

    /// Factorizes a square CSR matrix. Zero pivots are replaced by
    /// `ε·max|A|` so that inverse iteration can still locate the null space.
    pub fn factor(a: &Csr) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(MfgError::ShapeMismatch { expected: a.nrows, got: a.ncols });
        }
        let n = a.nrows;
        let (kl, ku) = a.bandwidth();
        let ldab = 2 * kl + ku + 1;
        let mut lu = Self { n, kl, ku, ldab, ab: vec![0.0; ldab * n], ipiv: vec![0; n], floored_pivots: 0 };
        let mut amax = 0.0f64;
        for i in 0..n {
            for (j, v) in a.row(i) {
                let k = lu.at(i, j);
                lu.ab[k] += v;
                amax = amax.max(v.abs());
            }
        }
        let floor = f64::EPSILON * amax.max(f64::MIN_POSITIVE);
        let kv = kl + ku;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = lu.ab[lu.at(j, j)].abs();
            for p in 1..=km {
                let v = lu.ab[lu.at(j + p, j)].abs();
                if v > best {
                    best = v;
                    jp = p;
                }
            }
            lu.ipiv[j] = j + jp;
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let (x, y) = (lu.at(j, c), lu.at(j + jp, c));
                    lu.ab.swap(x, y);
                }
            }
            let d = lu.at(j, j);
            if lu.ab[d].abs() <= floor {
                lu.ab[d] = if lu.ab[d] < 0.0 { -floor } else { floor };
                lu.floored_pivots += 1;
            }
            let pivot = lu.ab[d];
            for p in 1..=km {
                let k = lu.at(j + p, j);
                lu.ab[k] /= pivot;
            }
            for c in j + 1..=ju {
                let ujc = lu.ab[lu.at(j, c)];
                if ujc == 0.0 {
                    continue;
                }
                for p in 1..=km {
                    let l = lu.ab[lu.at(j + p, j)];
                    let k = lu.at(j + p, c);
                    lu.ab[k] -= l * ujc;
                }
            }
            debug_assert!(ju <= j + kv || ju == n - 1);
        }
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        for j in 0..n {
            let km = self.kl.min(n - 1 - j);
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                for q in 1..=km {
                    b[j + q] -= self.ab[self.at(j + q, j)] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[self.at(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                for r in j.saturating_sub(kv)..j {
                    b[r] -= self.ab[self.at(r, j)] * bj;
                }
            }
        }
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_t(&self, b: &mut [f64]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        for j in 0..n {
            let mut s = b[j];
            for r in j.saturating_sub(kv)..j {
                s -= self.ab[self.at(r, j)] * b[r];
            }
            b[j] = s / self.ab[self.at(j, j)];
        }
        for j in (0..n).rev() {
            let km = self.kl.min(n - 1 - j);
            let mut s = b[j];
            for q in 1..=km {
                s -= self.ab[self.at(j + q, j)] * b[j + q];
            }
            b[j] = s;
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
        }
    }
}

/// Smallest singular value and right singular vector.
#[derive(Debug, Clone)]
pub struct SmallestSingular {
    pub sigma: f64,
    pub vector: Vec<f64>,
    /// Next singular value above `sigma` (as resolved by the method).
    pub next: f64,
    pub iterations: usize,
}

/// Dense SVD route.
pub fn smallest_singular_dense(a: &Csr, limit: usize) -> Result<SmallestSingular> {
    let m = a.to_dense(limit)?;
    let svd = m.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| MfgError::SingularOperator("SVD did not return vectors".into()))?;
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|x, y| s[*x].total_cmp(&s[*y]));
    let k = order[0];
    let next = order.get(1).map_or(f64::INFINITY, |i| s[*i]);
    Ok(SmallestSingular { sigma: s[k], vector: v_t.row(k).iter().copied().collect(), next, iterations: 1 })
}

/// Inverse subspace iteration on `(AᵀA)⁻¹` with Rayleigh–Ritz extraction,
/// using the band LU of `A`.
pub fn smallest_singular_banded(a: &Csr, block: usize, max_iter: usize, rtol: f64, seed: u64) -> Result<SmallestSingular> {
    use rand::Rng;
    let lu = BandLu::factor(a)?;
    let n = lu.dim();
    let p = block.clamp(1, n);
    let mut rng = crate::rng::stream(seed, 0x5eed);
    let mut q: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    orthonormalize(&mut q);
    let mut last = f64::INFINITY;
    let mut result = None;
    for it in 1..=max_iter {
        for col in q.iter_mut() {
            lu.solve_t(col);
            lu.solve(col);
        }
        orthonormalize(&mut q);
        let aq: Vec<Vec<f64>> = q.iter().map(|c| a.matvec(c)).collect();
        let mut gram = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..=i {
                let d: f64 = aq[i].iter().zip(&aq[j]).map(|(x, y)| x * y).sum();
                gram[(i, j)] = d;
                gram[(j, i)] = d;
            }
        }
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|x, y| eig.eigenvalues[*x].total_cmp(&eig.eigenvalues[*y]));
        let rotated: Vec<Vec<f64>> = order
            .iter()
            .map(|&k| {
                let coef: DVector<f64> = eig.eigenvectors.column(k).into_owned();
                let mut v = vec![0.0; n];
                for (c, qc) in coef.iter().zip(&q) {
                    for (vi, qi) in v.iter_mut().zip(qc) {
                        *vi += c * qi;
                    }
                }
                v
            })
            .collect();
        q = rotated;
        let sigma = eig.eigenvalues[order[0]].max(0.0).sqrt();
        let next = if p > 1 { eig.eigenvalues[order[1]].max(0.0).sqrt() } else { f64::INFINITY };
        let converged = (sigma - last).abs() <= rtol * sigma.max(f64::MIN_POSITIVE) || sigma == 0.0;
        last = sigma;
        result = Some(SmallestSingular { sigma, vector: q[0].clone(), next, iterations: it });
        if converged && it > 1 {
            break;
        }
    }
    let mut r = result.expect("at least one iteration");
    let norm: f64 = r.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    r.vector.iter_mut().for_each(|x| *x /= norm);
    r.sigma = a.matvec(&r.vector).iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(r)
}

fn orthonormalize(q: &mut [Vec<f64>]) {
    for i in 0..q.len() {
        for _ in 0..2 {
            for j in 0..i {
                let d: f64 = q[i].iter().zip(&q[j]).map(|(x, y)| x * y).sum();
                let (head, tail) = q.split_at_mut(i);
                for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= d * y;
                }
            }
        }
        let norm: f64 = q[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            q[i].iter_mut().for_each(|x| *x /= norm);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> Csr {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rows = vec![Vec::new(); n];
        for (i, row) in rows.iter_mut().enumerate() {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                if rng.gen_bool(0.7) {
                    row.push((j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        Csr::from_rows(n, rows)
    }

    #[test]
    fn band_lu_solves_and_transposes() {
        for (n, kl, ku, seed) in [(30, 3, 5, 1), (50, 7, 2, 2), (12, 0, 4, 3)] {
            let mut a = random_band(n, kl, ku, seed);
            let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| a.row(i).collect()).collect();
            for (i, r) in rows.iter_mut().enumerate() {
                r.push((i, 0.05));
            }
            a = Csr::from_rows(n, rows);
            let lu = BandLu::factor(&a).unwrap();
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let mut x = b.clone();
            lu.solve(&mut x);
            let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = a.matvec(&x).iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-13 * scale * n as f64, "{n} {err} {scale}");
            let mut xt = b.clone();
            lu.solve_t(&mut xt);
            let scale = 1.0 + xt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = a.matvec_t(&xt).iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-13 * scale * n as f64, "{n} {err} {scale}");
        }
    }

    #[test]
    fn banded_and_dense_sigma_agree() {
        let n = 60;
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.0 + (i as f64 * 0.1).cos())];
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                if i >= 3 {
                    r.push((i - 3, 0.5));
                }
                r
            })
            .collect();
        let a = Csr::from_rows(n, rows);
        let d = smallest_singular_dense(&a, 100).unwrap();
        let b = smallest_singular_banded(&a, 4, 200, 1e-13, 1).unwrap();
        assert!((d.sigma - b.sigma).abs() < 1e-9 * d.sigma.max(1.0), "{} {}", d.sigma, b.sigma);
    }

    #[test]
    fn dense_guard() {
        let a = Csr::from_rows(10, (0..10).map(|i| vec![(i, 1.0)]).collect());
        assert!(matches!(a.to_dense(5), Err(MfgError::TooLarge { .. })));
    }
}
