//! Sparse matrices and the linear solvers behind the discrete systems.
//!
//! The systems are nonsymmetric (first-order drift terms) but their
//! symmetric part is positive definite once the coercive shift is applied,
//! so ILU(0)-preconditioned BiCGStab is the workhorse; a pivot-free banded
//! LU backs it up when the iteration stalls and the bandwidth is affordable.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinearSolveError {
    #[error("iterative solver stagnated: residual {residual} after {iterations} iterations")]
    Stagnated { residual: f64, iterations: usize },
    #[error("zero pivot at row {0}")]
    ZeroPivot(usize),
    #[error("bandwidth {bandwidth} too large for direct fallback (n = {n})")]
    BandwidthTooLarge { bandwidth: usize, n: usize },
}

/// Compressed sparse row matrix, structural zeros kept.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Builds from unsorted triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> Csr {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        let mut k = 0;
        while k < triplets.len() {
            let (r, c) = (triplets[k].0, triplets[k].1);
            let mut v = 0.0;
            while k < triplets.len() && triplets[k].0 == r && triplets[k].1 == c {
                v += triplets[k].2;
                k += 1;
            }
            indices.push(c);
            data.push(v);
            indptr[r + 1] += 1;
        }
        for r in 0..n {
            indptr[r + 1] += indptr[r];
        }
        Csr { n, indptr, indices, data }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for r in 0..self.n {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            out[r] = s;
        }
    }

    pub fn matvec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.matvec(x, &mut out);
        out
    }

    pub fn quadratic_form(&self, u: &[f64], v: &[f64]) -> f64 {
        // v' A u
        let mut s = 0.0;
        for r in 0..self.n {
            let mut row = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                row += self.data[k] * u[self.indices[k]];
            }
            s += v[r] * row;
        }
        s
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.indices[k] == r {
                    d[r] = self.data[k];
                }
            }
        }
        d
    }

    /// Row sums (the lumped version of a mass matrix).
    pub fn lumped(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                d[r] += self.data[k];
            }
        }
        d
    }

    /// `self + c * other`, merging the two sparsity patterns row by row.
    pub fn add_scaled(&self, other: &Csr, c: f64) -> Csr {
        assert_eq!(self.n, other.n);
        if self.indptr == other.indptr && self.indices == other.indices {
            let mut out = self.clone();
            for (d, o) in out.data.iter_mut().zip(other.data.iter()) {
                *d += c * *o;
            }
            return out;
        }
        let mut indptr = vec![0usize; self.n + 1];
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut data = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.n {
            let (mut ka, mut kb) = (self.indptr[r], other.indptr[r]);
            let (ea, eb) = (self.indptr[r + 1], other.indptr[r + 1]);
            while ka < ea || kb < eb {
                let ca = if ka < ea { self.indices[ka] } else { usize::MAX };
                let cb = if kb < eb { other.indices[kb] } else { usize::MAX };
                if ca < cb {
                    indices.push(ca);
                    data.push(self.data[ka]);
                    ka += 1;
                } else if cb < ca {
                    indices.push(cb);
                    data.push(c * other.data[kb]);
                    kb += 1;
                } else {
                    indices.push(ca);
                    data.push(self.data[ka] + c * other.data[kb]);
                    ka += 1;
                    kb += 1;
                }
            }
            indptr[r + 1] = indices.len();
        }
        Csr { n: self.n, indptr, indices, data }
    }

    /// Copy with the columns outside `mask` zeroed (pattern preserved).
    pub fn mask_columns(&self, mask: &[bool]) -> Csr {
        let mut out = self.clone();
        for k in 0..out.data.len() {
            if !mask[out.indices[k]] {
                out.data[k] = 0.0;
            }
        }
        out
    }

    /// `max_{ij} |A_ij - A_ji|`, the symmetry defect.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                let v = self.data[k];
                let mut vt = 0.0;
                for kk in self.indptr[c]..self.indptr[c + 1] {
                    if self.indices[kk] == r {
                        vt = self.data[kk];
                        break;
                    }
                }
                worst = worst.max((v - vt).abs());
            }
        }
        worst
    }

    /// Max over entries of |i - j|.
    pub fn bandwidth(&self) -> usize {
        let mut b = 0usize;
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                b = b.max(r.abs_diff(self.indices[k]));
            }
        }
        b
    }

    /// Coordinate-format triplets of the stored entries (row, col, value).
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.push((r, self.indices[k], self.data[k]));
            }
        }
        out
    }
}

/// ILU(0): incomplete LU on the sparsity pattern of `a`.
pub struct Ilu0 {
    luval: Vec<f64>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    diag_ptr: Vec<usize>,
    n: usize,
}

impl Ilu0 {
    pub fn factor(a: &Csr) -> Result<Ilu0, LinearSolveError> {
        let n = a.n;
        let mut luval = a.data.clone();
        let indptr = a.indptr.clone();
        let indices = a.indices.clone();
        let mut diag_ptr = vec![usize::MAX; n];
        for r in 0..n {
            for k in indptr[r]..indptr[r + 1] {
                if indices[k] == r {
                    diag_ptr[r] = k;
                }
            }
            if diag_ptr[r] == usize::MAX {
                return Err(LinearSolveError::ZeroPivot(r));
            }
        }
        let mut colmap = vec![usize::MAX; n];
        for r in 0..n {
            for k in indptr[r]..indptr[r + 1] {
                colmap[indices[k]] = k;
            }
            for k in indptr[r]..indptr[r + 1] {
                let c = indices[k];
                if c >= r {
                    break;
                }
                let piv = luval[diag_ptr[c]];
                if piv == 0.0 {
                    return Err(LinearSolveError::ZeroPivot(c));
                }
                let f = luval[k] / piv;
                luval[k] = f;
                for kk in diag_ptr[c] + 1..indptr[c + 1] {
                    let cc = indices[kk];
                    let pos = colmap[cc];
                    if pos != usize::MAX && pos >= indptr[r] && pos < indptr[r + 1] {
                        luval[pos] -= f * luval[kk];
                    }
                }
            }
            for k in indptr[r]..indptr[r + 1] {
                colmap[indices[k]] = usize::MAX;
            }
            if luval[diag_ptr[r]] == 0.0 {
                return Err(LinearSolveError::ZeroPivot(r));
            }
        }
        Ok(Ilu0 { luval, indptr, indices, diag_ptr, n })
    }

    pub fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        out.copy_from_slice(rhs);
        for r in 0..self.n {
            let mut s = out[r];
            for k in self.indptr[r]..self.diag_ptr[r] {
                s -= self.luval[k] * out[self.indices[k]];
            }
            out[r] = s;
        }
        for r in (0..self.n).rev() {
            let mut s = out[r];
            for k in self.diag_ptr[r] + 1..self.indptr[r + 1] {
                s -= self.luval[k] * out[self.indices[k]];
            }
            out[r] = s / self.luval[self.diag_ptr[r]];
        }
    }
}

/// Right-preconditioned BiCGStab. Returns the final iterate, the relative
/// residual achieved, and the iteration count; breakdown or hitting the
/// iteration cap shows up as a residual above the tolerance.
pub fn bicgstab(
    a: &Csr,
    b: &[f64],
    x0: Option<&[f64]>,
    precond: &Ilu0,
    rel_tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, usize) {
    let n = a.n;
    let bnorm = norm2(b).max(f64::MIN_POSITIVE);
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = norm2(&r);
    if res / bnorm <= rel_tol {
        return (x, res / bnorm, 0);
    }
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return (x, res / bnorm, it);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond.solve(&p, &mut y);
        a.matvec(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        if !alpha.is_finite() {
            return (x, res / bnorm, it);
        }
        let mut s = r.clone();
        for i in 0..n {
            s[i] -= alpha * v[i];
        }
        if norm2(&s) / bnorm <= rel_tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            a.matvec(&x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            res = norm2(&r);
            if res / bnorm <= rel_tol {
                return (x, res / bnorm, it);
            }
        }
        precond.solve(&s, &mut z);
        a.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        if omega == 0.0 || !omega.is_finite() {
            return (x, res / bnorm, it);
        }
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm2(&r);
        if res / bnorm <= rel_tol {
            // true residual check
            a.matvec(&x, &mut t);
            for i in 0..n {
                t[i] = b[i] - t[i];
            }
            let true_res = norm2(&t);
            if true_res / bnorm <= rel_tol {
                return (x, true_res / bnorm, it);
            }
            r.copy_from_slice(&t);
            res = true_res;
        }
    }
    (x, res / bnorm, max_iter)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in a {
        s += x * x;
    }
    libm::sqrt(s)
}

const BAND_ENTRY_LIMIT: usize = 48_000_000;

/// Pivot-free banded LU. Safe for matrices whose symmetric part is positive
/// definite, which the coercive shifted systems are.
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    // row-major band storage: row r holds columns r-kl ..= r+ku
    data: Vec<f64>,
}

impl BandedLu {
    pub fn factor(a: &Csr) -> Result<BandedLu, LinearSolveError> {
        let n = a.n;
        let b = a.bandwidth();
        let (kl, ku) = (b, b);
        let width = kl + ku + 1;
        if n.saturating_mul(width) > BAND_ENTRY_LIMIT {
            return Err(LinearSolveError::BandwidthTooLarge { bandwidth: b, n });
        }
        let mut data = vec![0.0f64; n * width];
        for r in 0..n {
            for k in a.indptr[r]..a.indptr[r + 1] {
                let c = a.indices[k];
                data[r * width + (c + kl - r)] = a.data[k];
            }
        }
        // in-place LU without pivoting
        for r in 0..n {
            let piv = data[r * width + kl];
            if piv == 0.0 {
                return Err(LinearSolveError::ZeroPivot(r));
            }
            let last = (r + kl).min(n - 1);
            for rr in r + 1..=last {
                // entry (rr, r): offset r + kl - rr
                let off = r + kl - rr;
                let f = data[rr * width + off] / piv;
                if f != 0.0 {
                    data[rr * width + off] = f;
                    // subtract f * row r over columns r+1 ..= r+ku
                    let cmax = (r + ku).min(n - 1);
                    for c in r + 1..=cmax {
                        let v = data[r * width + (c + kl - r)];
                        if v != 0.0 {
                            data[rr * width + (c + kl - rr)] -= f * v;
                        }
                    }
                } else {
                    data[rr * width + off] = 0.0;
                }
            }
        }
        Ok(BandedLu { n, kl, ku, data })
    }

    pub fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        let width = self.kl + self.ku + 1;
        out.copy_from_slice(rhs);
        for r in 0..self.n {
            let lo = r.saturating_sub(self.kl);
            let mut s = out[r];
            for c in lo..r {
                s -= self.data[r * width + (c + self.kl - r)] * out[c];
            }
            out[r] = s;
        }
        for r in (0..self.n).rev() {
            let hi = (r + self.ku).min(self.n - 1);
            let mut s = out[r];
            for c in r + 1..=hi {
                s -= self.data[r * width + (c + self.kl - r)] * out[c];
            }
            out[r] = s / self.data[r * width + self.kl];
        }
    }
}

/// A factorization handle: ILU(0)+BiCGStab first, banded LU as fallback.
/// The system is row-equilibrated (each row divided by its max magnitude)
/// so the residual tolerance is meaningful row by row despite the strong
/// mass scaling of the weighted assembly.
pub enum SystemSolver {
    Iterative { a: Csr, row_scale: Vec<f64>, ilu: Ilu0, rel_tol: f64 },
    Direct { a: Csr, row_scale: Vec<f64>, lu: BandedLu },
}

impl SystemSolver {
    /// Prepares a solver for `a` with the given relative residual tolerance.
    pub fn new(mut a: Csr, rel_tol: f64) -> Result<SystemSolver, LinearSolveError> {
        let mut row_scale = vec![1.0f64; a.n];
        for r in 0..a.n {
            let mut m = 0.0f64;
            for k in a.indptr[r]..a.indptr[r + 1] {
                m = m.max(a.data[k].abs());
            }
            if m > 0.0 {
                row_scale[r] = 1.0 / m;
                for k in a.indptr[r]..a.indptr[r + 1] {
                    a.data[k] *= row_scale[r];
                }
            }
        }
        let ilu = Ilu0::factor(&a)?;
        Ok(SystemSolver::Iterative { a, row_scale, ilu, rel_tol })
    }

    fn scaled_rhs(row_scale: &[f64], rhs: &[f64]) -> Vec<f64> {
        rhs.iter().zip(row_scale.iter()).map(|(b, s)| b * s).collect()
    }

    /// Solves with warm-restarted refinement, upgrading to the direct
    /// factorization if the iteration stalls above tolerance.
    pub fn solve(&mut self, rhs: &[f64], x0: Option<&[f64]>) -> Result<(Vec<f64>, f64), LinearSolveError> {
        match self {
            SystemSolver::Iterative { a, row_scale, ilu, rel_tol } => {
                let b = Self::scaled_rhs(row_scale, rhs);
                let max_iter = 400 + 4 * libm::sqrt(a.n as f64) as usize;
                let mut best: Option<Vec<f64>> = x0.map(|x| x.to_vec());
                let mut best_res = f64::INFINITY;
                for _ in 0..4 {
                    let (x, res, _) = bicgstab(a, &b, best.as_deref(), ilu, *rel_tol, max_iter);
                    let improved = res < 0.5 * best_res;
                    if res <= best_res {
                        best = Some(x);
                        best_res = res;
                    }
                    if best_res <= *rel_tol || !improved {
                        break;
                    }
                }
                if best_res <= *rel_tol {
                    return Ok((best.expect("iterate"), best_res));
                }
                // stalled: fall back to the banded factorization
                let lu = match BandedLu::factor(a) {
                    Ok(lu) => lu,
                    Err(LinearSolveError::BandwidthTooLarge { .. }) if best_res <= 1e3 * *rel_tol => {
                        return Ok((best.expect("iterate"), best_res));
                    }
                    Err(e) => return Err(e),
                };
                let mut x = vec![0.0; a.n];
                lu.solve(&b, &mut x);
                let mut r = vec![0.0; a.n];
                a.matvec(&x, &mut r);
                for i in 0..a.n {
                    r[i] = b[i] - r[i];
                }
                let res = norm2(&r) / norm2(&b).max(f64::MIN_POSITIVE);
                let a_taken = core::mem::replace(
                    a,
                    Csr { n: 0, indptr: vec![0], indices: Vec::new(), data: Vec::new() },
                );
                let scale_taken = core::mem::take(row_scale);
                *self = SystemSolver::Direct { a: a_taken, row_scale: scale_taken, lu };
                Ok((x, res))
            }
            SystemSolver::Direct { a, row_scale, lu } => {
                let b = Self::scaled_rhs(row_scale, rhs);
                let mut x = vec![0.0; a.n];
                lu.solve(&b, &mut x);
                let mut r = vec![0.0; a.n];
                a.matvec(&x, &mut r);
                for i in 0..a.n {
                    r[i] = b[i] - r[i];
                }
                let res = norm2(&r) / norm2(&b).max(f64::MIN_POSITIVE);
                Ok((x, res))
            }
        }
    }
}
