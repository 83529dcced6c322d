//! Dense complex Hermitian kernels: Cholesky, Hermitian eigendecomposition
//! and the Cholesky whitening transform.
//!
//! Everything here is a pure function of its inputs. The eigensolver is a
//! cyclic complex Jacobi iteration, which gives orthonormality at machine
//! precision and identical output for identical input on every platform.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Relative asymmetry tolerated before an input is rejected as non-Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Magnitude below which a vector component is ignored by the phase convention.
pub const PHASE_EPS: f64 = 1e-12;

const MAX_SWEEPS: usize = 100;

/// Lower-triangular factor `L` with `L L^H = Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: CMatrix,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &CMatrix {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn into_lower(self) -> CMatrix {
        self.lower
    }

    /// `L L^H`.
    pub fn reconstruct(&self) -> CMatrix {
        &self.lower * self.lower.adjoint()
    }

    /// Solves `L X = B` by forward substitution.
    pub fn solve_lower(&self, b: &CMatrix) -> CMatrix {
        let n = self.dim();
        assert_eq!(b.nrows(), n, "rhs row count must match the factor");
        let l = &self.lower;
        let mut x = b.clone();
        for col in 0..x.ncols() {
            for i in 0..n {
                let mut acc = x[(i, col)];
                for k in 0..i {
                    acc -= l[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = acc / l[(i, i)];
            }
        }
        x
    }

    /// Solves `L^H X = B` by back substitution.
    pub fn solve_upper_adjoint(&self, b: &CMatrix) -> CMatrix {
        let n = self.dim();
        assert_eq!(b.nrows(), n, "rhs row count must match the factor");
        let l = &self.lower;
        let mut x = b.clone();
        for col in 0..x.ncols() {
            for i in (0..n).rev() {
                let mut acc = x[(i, col)];
                for k in i + 1..n {
                    // (L^H)[i, k] = conj(L[k, i])
                    acc -= l[(k, i)].conj() * x[(k, col)];
                }
                x[(i, col)] = acc / l[(i, i)].re;
            }
        }
        x
    }

    /// Solves `Q X = B` with `Q = L L^H`.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        self.solve_upper_adjoint(&self.solve_lower(b))
    }

    /// Natural log of `det(Q)`.
    pub fn ln_det(&self) -> f64 {
        (0..self.dim()).map(|i| 2.0 * self.lower[(i, i)].re.ln()).sum()
    }
}

/// Eigendecomposition of a Hermitian matrix.
///
/// `values` are sorted in descending order, ties kept in the order of the
/// original basis index. Each column of `vectors` has its first component of
/// magnitude above [`PHASE_EPS`] real and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigenPair {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// The leading `r` eigenvectors as an `n x r` matrix.
    pub fn leading_vectors(&self, r: usize) -> CMatrix {
        self.vectors.columns(0, r).into_owned()
    }
}

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Real part of the trace.
pub fn trace_re(m: &CMatrix) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

/// `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    let mut h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    for i in 0..h.nrows() {
        h[(i, i)].im = 0.0;
    }
    h
}

fn check_square(m: &CMatrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_hermitian(m: &CMatrix, what: &str) -> Result<()> {
    check_square(m, what)?;
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} has non-finite entries")));
    }
    let scale = frobenius_norm(m);
    let asym = frobenius_norm(&(m - m.adjoint()));
    if asym > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidInput(format!(
            "{what} is not Hermitian (relative asymmetry {:e})",
            asym / scale
        )));
    }
    Ok(())
}

/// Cholesky factorization of a Hermitian positive-definite matrix.
///
/// A pivot at or below `n * eps * trace(Q)` is reported as
/// [`Error::NotPositiveDefinite`].
pub fn cholesky(q: &CMatrix) -> Result<CholeskyFactor> {
    check_hermitian(q, "covariance")?;
    let n = q.nrows();
    let floor = n as f64 * f64::EPSILON * trace_re(q).abs();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = q[(j, j)].re;
        for k in 0..j {
            diag -= l[(j, k)].norm_sqr();
        }
        if !(diag > floor) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: diag });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        for i in j + 1..n {
            // Q is Hermitian: use the lower triangle, Q[i, j].
            let mut acc = q[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / ljj;
        }
    }
    Ok(CholeskyFactor { lower: l })
}

fn off_diagonal_norm(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Hermitian eigendecomposition by cyclic Jacobi rotations.
pub fn herm_eig(m: &CMatrix) -> Result<EigenPair> {
    check_hermitian(m, "matrix")?;
    let n = m.nrows();
    let mut a = hermitian_part(m);
    let mut v = CMatrix::identity(n, n);
    let scale = frobenius_norm(&a);
    let target = 1e-15 * scale;

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a);
        if off <= target || scale == 0.0 {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::ConvergenceFailure {
                sweeps,
                residual: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort: equal eigenvalues keep ascending index order
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));

    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    fix_phase(&mut vectors);
    Ok(EigenPair { values, vectors })
}

/// One Jacobi rotation annihilating `a[p, q]`; accumulates into `v`.
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    // negligible next to both diagonal entries: drop it instead of rotating
    let tiny = 100.0 * mag;
    if app.abs() + tiny == app.abs() && aqq.abs() + tiny == aqq.abs() {
        a[(p, q)] = C64::new(0.0, 0.0);
        a[(q, p)] = C64::new(0.0, 0.0);
        return;
    }
    let phase = apq / mag; // e^{i phi}
    let theta = (aqq - app) / (2.0 * mag);
    let t = if theta == 0.0 {
        1.0
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let cz = C64::new(c, 0.0);
    let sz = C64::new(s, 0.0);
    // J = diag(1, e^{-i phi}) * [[c, s], [-s, c]]
    let jpp = cz;
    let jpq = sz;
    let jqp = -sz * phase.conj();
    let jqq = cz * phase.conj();

    let n = a.nrows();
    // A <- A J
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * jpp + akq * jqp;
        a[(k, q)] = akp * jpq + akq * jqq;
    }
    // A <- J^H A
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
        a[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
    }
    a[(p, q)] = C64::new(0.0, 0.0);
    a[(q, p)] = C64::new(0.0, 0.0);
    a[(p, p)].im = 0.0;
    a[(q, q)].im = 0.0;
    // V <- V J
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * jpp + vkq * jqp;
        v[(k, q)] = vkp * jpq + vkq * jqq;
    }
}

/// Rotates every column so its first significant component is real positive.
pub fn fix_phase(vectors: &mut CMatrix) {
    for mut col in vectors.column_iter_mut() {
        if let Some(k) = col.iter().position(|z| z.norm() > PHASE_EPS) {
            let lead = col[k];
            let rot = lead.conj() / lead.norm();
            col.iter_mut().for_each(|z| *z *= rot);
            col[k] = C64::new(lead.norm(), 0.0);
        }
    }
}

/// Whitening transform: factor `Q = L L^H` and return `M = L^-1 R L^-H`,
/// computed by triangular solves and symmetrized.
pub fn whiten(r: &CMatrix, q: &CMatrix) -> Result<(CholeskyFactor, CMatrix)> {
    check_square(r, "signal covariance")?;
    if r.shape() != q.shape() {
        return Err(Error::DimensionMismatch(format!(
            "signal covariance is {}x{} but interference covariance is {}x{}",
            r.nrows(),
            r.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let factor = cholesky(q)?;
    // L^-1 R, then L^-1 (L^-1 R)^H = L^-1 R^H L^-H = L^-1 R L^-H
    let half = factor.solve_lower(r);
    let m = factor.solve_lower(&half.adjoint());
    Ok((factor, hermitian_part(&m)))
}

/// Natural log-determinant of a Hermitian positive-definite matrix.
pub fn ln_det_pd(m: &CMatrix) -> Result<f64> {
    Ok(cholesky(m)?.ln_det())
}

/// Orthonormal basis for the column span of `x` by modified Gram-Schmidt.
///
/// Returns `None` when the columns are numerically dependent.
pub fn orthonormal_basis(x: &CMatrix) -> Option<CMatrix> {
    let mut q = x.clone();
    let scale = (0..x.ncols())
        .map(|j| x.column(j).norm())
        .fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return None;
    }
    for j in 0..q.ncols() {
        for k in 0..j {
            let proj = q.column(k).dotc(&q.column(j));
            let qk = q.column(k).into_owned();
            q.column_mut(j).axpy(-proj, &qk, C64::new(1.0, 0.0));
        }
        let norm = q.column(j).norm();
        if norm <= 1e-12 * scale {
            return None;
        }
        q.column_mut(j).unscale_mut(norm);
    }
    Some(q)
}
