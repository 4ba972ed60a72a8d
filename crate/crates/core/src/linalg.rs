//! Small dense complex matrices and Hermitian covariance algebra.
//!
//! Matrices here are tiny (the channel count, usually 2), so storage is inline
//! up to 2×2 and the 2×2 case gets closed-form inverse, eigendecomposition and
//! square root. Larger sizes fall back to cyclic Jacobi on the Hermitian
//! matrix, which is exact enough for the sizes we care about (≤ 8).

use alloc::vec::Vec;
use core::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use smallvec::SmallVec;

use crate::{Error, Result};

type Storage = SmallVec<[Complex64; 4]>;
/// Complex vector of channel length.
pub type CVec = SmallVec<[Complex64; 2]>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Singularity threshold on the determinant magnitude.
pub const SINGULAR_DET: f64 = 1e-30;
/// Relative eigenvalue floor used when a positive definite matrix is required.
pub const TOL_PSD: f64 = 1e-9;

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Storage,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: core::iter::repeat_n(ZERO, dim * dim).collect(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from `dim * dim` row-major entries.
    pub fn from_entries(dim: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::NotSquare {
                dim,
                len: entries.len(),
            });
        }
        Ok(Self {
            dim,
            data: entries.iter().copied().collect(),
        })
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> CVec {
        debug_assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                let row = &self.data[i * self.dim..(i + 1) * self.dim];
                row.iter().zip(x).map(|(&a, &b)| a * b).sum()
            })
            .collect()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v.norm_sqr()).sum())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &SquareMatrix {
    type Output = SquareMatrix;
    fn mul(self, rhs: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimension mismatch");
        let d = self.dim;
        let mut out = SquareMatrix::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl Add for &SquareMatrix {
    type Output = SquareMatrix;
    fn add(self, rhs: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimension mismatch");
        SquareMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &SquareMatrix {
    type Output = SquareMatrix;
    fn sub(self, rhs: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimension mismatch");
        SquareMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Complex Hermitian matrix. `m[(i, j)] == conj(m[(j, i)])` holds exactly and
/// the diagonal is real.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(SquareMatrix);

/// Returns `(m + m^H) / 2`.
pub fn hermitize(m: &SquareMatrix) -> HermitianMatrix {
    let d = m.dim;
    let mut out = SquareMatrix::zeros(d);
    for i in 0..d {
        out[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..d {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[(i, j)] = v;
            out[(j, i)] = v.conj();
        }
    }
    HermitianMatrix(out)
}

/// [`hermitize`] from raw row-major entries; fails if they do not form a
/// square matrix of dimension `dim`.
pub fn hermitize_entries(dim: usize, entries: &[Complex64]) -> Result<HermitianMatrix> {
    Ok(hermitize(&SquareMatrix::from_entries(dim, entries)?))
}

impl HermitianMatrix {
    pub fn identity(dim: usize) -> Self {
        Self(SquareMatrix::identity(dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(SquareMatrix::zeros(dim))
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        Self(SquareMatrix::identity(dim).scale(Complex64::new(s, 0.0)))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d: Vec<Complex64> = diag.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Self(SquareMatrix::from_diagonal(&d))
    }

    /// `y y^H`.
    pub fn outer(y: &[Complex64]) -> Self {
        let d = y.len();
        let mut m = SquareMatrix::zeros(d);
        for i in 0..d {
            m[(i, i)] = Complex64::new(y[i].norm_sqr(), 0.0);
            for j in (i + 1)..d {
                let v = y[i] * y[j].conj();
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn as_matrix(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> SquareMatrix {
        self.0
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.0.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(Complex64::new(s, 0.0)))
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &HermitianMatrix) {
        for (a, b) in self.0.data.iter_mut().zip(&other.0.data) {
            *a += b * s;
        }
    }

    /// `a * self + b * other`, exact Hermitian structure preserved.
    pub fn combine(&self, a: f64, other: &HermitianMatrix, b: f64) -> Self {
        Self(SquareMatrix {
            dim: self.0.dim,
            data: self
                .0
                .data
                .iter()
                .zip(&other.0.data)
                .map(|(x, y)| x * a + y * b)
                .collect(),
        })
    }

    /// `x^H M x`, real for Hermitian `M`.
    pub fn quad_form(&self, x: &[Complex64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            acc += self.0[(i, i)].re * x[i].norm_sqr();
            for j in (i + 1)..d {
                acc += 2.0 * (x[i].conj() * self.0[(i, j)] * x[j]).re;
            }
        }
        acc
    }

    /// `trace(self · other)`, real when both are Hermitian.
    pub fn trace_product(&self, other: &HermitianMatrix) -> f64 {
        // tr(AB) = Σ_ij A_ij B_ji = Σ_ij A_ij conj(B_ij)
        self.0
            .data
            .iter()
            .zip(&other.0.data)
            .map(|(a, b)| (a * b.conj()).re)
            .sum()
    }

    /// `B^H · self · B` for an arbitrary square `B`, re-hermitized.
    pub fn congruence(&self, b: &SquareMatrix) -> HermitianMatrix {
        hermitize(&(&(&b.adjoint() * &self.0) * b))
    }

    /// `B · self · B` for Hermitian `B`.
    pub fn sandwich(&self, b: &HermitianMatrix) -> HermitianMatrix {
        hermitize(&(&(&b.0 * &self.0) * &b.0))
    }

    pub fn determinant(&self) -> f64 {
        if self.dim() == 2 {
            let m = &self.0;
            m[(0, 0)].re * m[(1, 1)].re - m[(0, 1)].norm_sqr()
        } else {
            self.eigh().0.iter().product()
        }
    }

    /// `ln det`, failing when the matrix is not positive definite.
    pub fn log_det(&self) -> Result<f64> {
        let det = self.determinant();
        if !(det > SINGULAR_DET) {
            return Err(Error::Singular { det });
        }
        Ok(libm::log(det))
    }

    /// `(self + ridge·I)^{-1}`, re-hermitized.
    pub fn inverse(&self, ridge: f64) -> Result<HermitianMatrix> {
        let d = self.dim();
        match d {
            1 => {
                let v = self.0[(0, 0)].re + ridge;
                if !(libm::fabs(v) >= SINGULAR_DET) {
                    return Err(Error::Singular { det: v });
                }
                Ok(Self::from_real_diagonal(&[1.0 / v]))
            }
            2 => {
                let a = self.0[(0, 0)].re + ridge;
                let c = self.0[(1, 1)].re + ridge;
                let b = self.0[(0, 1)];
                let det = a * c - b.norm_sqr();
                if !(libm::fabs(det) >= SINGULAR_DET) {
                    return Err(Error::Singular { det });
                }
                let inv = 1.0 / det;
                let mut m = SquareMatrix::zeros(2);
                m[(0, 0)] = Complex64::new(c * inv, 0.0);
                m[(1, 1)] = Complex64::new(a * inv, 0.0);
                m[(0, 1)] = -b * inv;
                m[(1, 0)] = -b.conj() * inv;
                Ok(Self(m))
            }
            _ => {
                let shifted = if ridge != 0.0 {
                    self.combine(1.0, &Self::identity(d), ridge)
                } else {
                    self.clone()
                };
                let (vals, vecs) = shifted.eigh();
                let det: f64 = vals.iter().product();
                if !(libm::fabs(det) >= SINGULAR_DET) {
                    return Err(Error::Singular { det });
                }
                Ok(from_eigen(&vecs, vals.iter().map(|v| 1.0 / v)))
            }
        }
    }

    /// Eigendecomposition `self = V diag(λ) V^H` with `λ` ascending and the
    /// eigenvectors as the columns of `V`.
    pub fn eigh(&self) -> (Vec<f64>, SquareMatrix) {
        match self.dim() {
            0 => (Vec::new(), SquareMatrix::zeros(0)),
            1 => (alloc::vec![self.0[(0, 0)].re], SquareMatrix::identity(1)),
            2 => eigh2(&self.0),
            _ => jacobi_eigh(&self.0),
        }
    }

    /// Principal square root of a PSD matrix; negative eigenvalues are clamped
    /// to zero.
    pub fn psd_sqrt(&self) -> HermitianMatrix {
        let (vals, vecs) = self.eigh();
        from_eigen(&vecs, vals.iter().map(|&v| libm::sqrt(v.max(0.0))))
    }

    /// Nearest PSD matrix: negative eigenvalues are set to zero.
    pub fn psd_project(&self) -> HermitianMatrix {
        let (vals, vecs) = self.eigh();
        if vals.iter().all(|&v| v >= 0.0) {
            return self.clone();
        }
        from_eigen(&vecs, vals.iter().map(|&v| v.max(0.0)))
    }

    /// Raises eigenvalues below `TOL_PSD · max|λ|` to that floor.
    pub fn clamp_pd(&self) -> HermitianMatrix {
        let (vals, vecs) = self.eigh();
        let top = vals.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
        let floor = if top > 0.0 { TOL_PSD * top } else { TOL_PSD };
        if vals.iter().all(|&v| v >= floor) {
            return self.clone();
        }
        from_eigen(&vecs, vals.iter().map(|&v| v.max(floor)))
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigh().0.first().copied().unwrap_or(0.0)
    }
}

/// `V diag(d) V^H`.
fn from_eigen(vecs: &SquareMatrix, diag: impl Iterator<Item = f64>) -> HermitianMatrix {
    let d = vecs.dim;
    let mut out = SquareMatrix::zeros(d);
    for (k, lam) in diag.enumerate() {
        for i in 0..d {
            let vi = vecs[(i, k)] * lam;
            for j in i..d {
                out.data[i * d + j] += vi * vecs[(j, k)].conj();
            }
        }
    }
    for i in 0..d {
        out[(i, i)].im = 0.0;
        for j in (i + 1)..d {
            out[(j, i)] = out[(i, j)].conj();
        }
    }
    HermitianMatrix(out)
}

fn eigh2(m: &SquareMatrix) -> (Vec<f64>, SquareMatrix) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let half_diff = 0.5 * (a - d);
    let mean = 0.5 * (a + d);
    let radius = libm::hypot(half_diff, b.norm());
    let lo = mean - radius;
    let hi = mean + radius;
    let scale = libm::fabs(a).max(libm::fabs(d)).max(b.norm());
    if b.norm() <= 1e-300 || radius <= f64::EPSILON * 1e-3 * scale {
        // already diagonal (up to rounding)
        return if a <= d {
            (alloc::vec![a, d], SquareMatrix::identity(2))
        } else {
            let mut v = SquareMatrix::zeros(2);
            v[(1, 0)] = ONE;
            v[(0, 1)] = ONE;
            (alloc::vec![d, a], v)
        };
    }
    // Eigenvector for λ: (b, λ - a) or equivalently (λ - d, conj b); pick the
    // better conditioned of the two.
    let vec_for = |lam: f64| -> [Complex64; 2] {
        let v1 = [b, Complex64::new(lam - a, 0.0)];
        let v2 = [Complex64::new(lam - d, 0.0), b.conj()];
        let n1 = v1[0].norm_sqr() + v1[1].norm_sqr();
        let n2 = v2[0].norm_sqr() + v2[1].norm_sqr();
        let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
        let inv = 1.0 / libm::sqrt(n);
        [v[0] * inv, v[1] * inv]
    };
    let v_lo = vec_for(lo);
    let v_hi = vec_for(hi);
    let mut v = SquareMatrix::zeros(2);
    v[(0, 0)] = v_lo[0];
    v[(1, 0)] = v_lo[1];
    v[(0, 1)] = v_hi[0];
    v[(1, 1)] = v_hi[1];
    (alloc::vec![lo, hi], v)
}

fn jacobi_eigh(m: &SquareMatrix) -> (Vec<f64>, SquareMatrix) {
    let d = m.dim;
    let mut a = hermitize(m).0;
    let mut v = SquareMatrix::identity(d);
    let total = a.norm();
    for _sweep in 0..64 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum();
        if libm::sqrt(off) <= 1e-15 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let phase = apq / mag;
                let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(theta * theta + 1.0))
                } else {
                    -1.0 / (-theta + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                // U restricted to (p, q): [[c, s], [-s·conj(e), c·conj(e)]]
                let upp = Complex64::new(c, 0.0);
                let upq = Complex64::new(s, 0.0);
                let uqp = -phase.conj() * s;
                let uqq = phase.conj() * c;
                for k in 0..d {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * upp + akq * uqp;
                    a[(k, q)] = akp * upq + akq * uqq;
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * upp + vkq * uqp;
                    v[(k, q)] = vkp * upq + vkq * uqq;
                }
                for k in 0..d {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = upp.conj() * apk + uqp.conj() * aqk;
                    a[(q, k)] = upq.conj() * apk + uqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)].im = 0.0;
                a[(q, q)].im = 0.0;
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let vals = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vecs = SquareMatrix::zeros(d);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..d {
            vecs[(r, col)] = v[(r, src)];
        }
    }
    (vals, vecs)
}

/// Solves `R Ψ R = Φ` for Hermitian PSD `R`, with `Ψ` positive definite and
/// `Φ` PSD:
///
/// `R = Ψ^{-1/2} (Ψ^{1/2} Φ Ψ^{1/2})^{1/2} Ψ^{-1/2}`.
pub fn solve_riccati(psi: &HermitianMatrix, phi: &HermitianMatrix) -> Result<HermitianMatrix> {
    if psi.dim() != phi.dim() {
        return Err(Error::Dimension(alloc::format!(
            "riccati operands {}x{} and {}x{}",
            psi.dim(),
            psi.dim(),
            phi.dim(),
            phi.dim()
        )));
    }
    let (vals, vecs) = psi.eigh();
    let top = vals.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    let det: f64 = vals.iter().product();
    if !(vals[0] > 0.0) || vals[0] <= 1e-15 * top || !(libm::fabs(det) >= SINGULAR_DET) {
        return Err(Error::Singular { det });
    }
    let root = from_eigen(&vecs, vals.iter().map(|&v| libm::sqrt(v)));
    let inv_root = from_eigen(&vecs, vals.iter().map(|&v| 1.0 / libm::sqrt(v)));
    let inner = phi.sandwich(&root).psd_sqrt();
    // The congruence is PSD in exact arithmetic; rounding can leave a tiny
    // negative eigenvalue when Φ is singular.
    Ok(inner.sandwich(&inv_root).psd_project())
}
