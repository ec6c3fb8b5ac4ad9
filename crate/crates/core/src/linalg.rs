//! Small dense complex matrices and vectors.
//!
//! Thin value-type wrappers over `nalgebra` dynamic storage. Nothing here
//! mutates in place through the public surface; every operation returns a
//! new value.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Dense complex matrix. Entries are always finite.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    inner: DMatrix<C64>,
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors matching `values`.
    pub vectors: ComplexMatrix,
}

impl ComplexMatrix {
    pub(crate) fn from_inner(inner: DMatrix<C64>) -> Self {
        debug_assert!(inner.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        Self { inner }
    }

    pub(crate) fn inner(&self) -> &DMatrix<C64> {
        &self.inner
    }

    /// Builds a matrix from row-major entries, rejecting a wrong entry count
    /// or any non-finite entry.
    pub fn from_row_slice(rows: usize, cols: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Contract("matrix entries must be finite".into()));
        }
        Ok(Self::from_inner(DMatrix::from_row_slice(rows, cols, entries)))
    }

    /// Real row-major convenience constructor.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let flat: Vec<C64> = rows.iter().flat_map(|r| r.iter().map(|&x| re(x))).collect();
        Self::from_row_slice(rows.len(), cols, &flat)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self::from_inner(DMatrix::from_fn(rows, cols, f))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_inner(DMatrix::zeros(rows, cols))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_inner(DMatrix::identity(dim, dim))
    }

    pub fn diag_real(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { re(diag[i]) } else { C64::default() })
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.inner[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_inner(self.inner.adjoint())
    }

    pub fn transpose(&self) -> Self {
        Self::from_inner(self.inner.transpose())
    }

    pub fn trace(&self) -> C64 {
        self.inner.trace()
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self::from_inner(self.inner.kronecker(&other.inner))
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self::from_inner(&self.inner * factor)
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(re(factor))
    }

    pub fn apply(&self, v: &Ket) -> Ket {
        Ket::from_inner(&self.inner * v.inner())
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.inner.shape(), other.inner.shape(), "shape mismatch");
        self.inner
            .iter()
            .zip(other.inner.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Hermitian eigen-solve. The input is symmetrized first, so it must
    /// already be Hermitian up to rounding.
    pub fn hermitian_eigen(&self) -> Result<HermitianEigen> {
        if !self.is_square() {
            return Err(Error::Dimension(format!(
                "eigen-solve of a {}x{} matrix",
                self.rows(),
                self.cols()
            )));
        }
        let sym = (&self.inner + self.inner.adjoint()) * re(0.5);
        // nalgebra's QR iteration can hit 0/0 on rank-deficient inputs whose
        // entries underflow; cyclic Jacobi is slower but never does.
        match fast_eigen(&sym) {
            Some(e) if e.is_finite() => Ok(e),
            _ => Ok(jacobi_eigen(sym)),
        }
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.hermitian_eigen()?.values[0])
    }

    pub fn try_inverse(&self) -> Option<Self> {
        self.inner.clone().try_inverse().map(Self::from_inner)
    }

    /// Principal square root of a PSD matrix; tiny negative eigenvalues from
    /// rounding are clamped to zero.
    pub fn psd_sqrt(&self) -> Result<Self> {
        let eig = self.hermitian_eigen()?;
        Ok(eig.recompose(|l| l.max(0.0).sqrt()))
    }
}

impl HermitianEigen {
    fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
            && self.vectors.inner.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `V f(Λ) V†`.
    pub fn recompose(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let v = self.vectors.inner();
        let n = self.values.len();
        let lam = DMatrix::from_fn(n, n, |i, j| if i == j { re(f(self.values[i])) } else { C64::default() });
        ComplexMatrix::from_inner(v * lam * v.adjoint())
    }
}

fn fast_eigen(sym: &DMatrix<C64>) -> Option<HermitianEigen> {
    let n = sym.nrows();
    let a = sym.map(|z| z.re);
    let b = sym.map(|z| z.im);
    if b.iter().all(|&x| x == 0.0) {
        let eig = SymmetricEigen::new(a);
        if !all_finite(&eig) {
            return None;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(n, n, |i, j| re(eig.eigenvectors[(i, order[j])]));
        return Some(HermitianEigen {
            values,
            vectors: ComplexMatrix::from_inner(vectors),
        });
    }
    // The complex QR path in nalgebra occasionally produces NaN, so solve
    // the real 2n×2n embedding [[A, −B], [B, A]] instead. Every eigenvalue
    // appears twice there; each cluster is folded back with pivoted
    // Gram–Schmidt over the complex images x + iy.
    let big = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let (bi, bj) = (i / n, j / n);
        let (ii, jj) = (i % n, j % n);
        match (bi, bj) {
            (0, 0) | (1, 1) => a[(ii, jj)],
            (0, 1) => -b[(ii, jj)],
            _ => b[(ii, jj)],
        }
    });
    let eig = SymmetricEigen::new(big);
    if !all_finite(&eig) {
        return None;
    }
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * scale;
    let image = |k: usize| -> DVector<C64> {
        DVector::from_fn(n, |i, _| c(eig.eigenvectors[(i, k)], eig.eigenvectors[(i + n, k)]))
    };
    let mut values = Vec::with_capacity(n);
    let mut columns: Vec<DVector<C64>> = Vec::with_capacity(n);
    let mut start = 0;
    while start < 2 * n {
        let mut end = start + 1;
        while end < 2 * n
            && eig.eigenvalues[order[end]] - eig.eigenvalues[order[end - 1]] <= tol
        {
            end += 1;
        }
        let want = (end - start) / 2;
        let mut pool: Vec<DVector<C64>> = order[start..end].iter().map(|&k| image(k)).collect();
        for pick in 0..want {
            for v in pool.iter_mut() {
                for u in &columns {
                    let proj = u.dotc(v);
                    *v -= u * proj;
                }
            }
            let (best, _) = pool
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .expect("non-empty cluster");
            let v = pool.swap_remove(best);
            let norm = v.norm();
            if norm < 1e-6 {
                return None;
            }
            columns.push(v.unscale(norm));
            values.push(eig.eigenvalues[order[start + 2 * pick]]);
        }
        start = end;
    }
    if columns.len() != n {
        return None;
    }
    Some(HermitianEigen {
        values,
        vectors: ComplexMatrix::from_inner(DMatrix::from_columns(&columns)),
    })
}

fn all_finite(eig: &SymmetricEigen<f64, nalgebra::Dyn>) -> bool {
    eig.eigenvalues.iter().chain(eig.eigenvectors.iter()).all(|x| x.is_finite())
}

/// Cyclic Jacobi for a Hermitian matrix. Each rotation first removes the
/// phase of the pivot, then applies the real symmetric Jacobi rotation.
fn jacobi_eigen(mut a: DMatrix<C64>) -> HermitianEigen {
    let n = a.nrows();
    let mut w = DMatrix::<C64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum();
        if off <= f64::MIN_POSITIVE {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let g = a[(p, q)];
                let mag = g.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let phase = g / mag;
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
                if !tau.is_finite() {
                    continue;
                }
                let t = if tau == 0.0 {
                    1.0
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // V = [[c, s], [−s·e^{−iθ}, c·e^{−iθ}]] on the (p, q) plane
                let vpp = re(c);
                let vpq = re(s);
                let vqp = -phase.conj() * s;
                let vqq = phase.conj() * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = akp * vpp + akq * vqp;
                    a[(k, q)] = akp * vpq + akq * vqq;
                    let (wkp, wkq) = (w[(k, p)], w[(k, q)]);
                    w[(k, p)] = wkp * vpp + wkq * vqp;
                    w[(k, q)] = wkp * vpq + wkq * vqq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = vpp.conj() * apk + vqp.conj() * aqk;
                    a[(q, k)] = vpq.conj() * apk + vqq.conj() * aqk;
                }
                a[(p, q)] = C64::default();
                a[(q, p)] = C64::default();
                a[(p, p)] = re(a[(p, p)].re);
                a[(q, q)] = re(a[(q, q)].re);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    HermitianEigen {
        values: order.iter().map(|&k| a[(k, k)].re).collect(),
        vectors: ComplexMatrix::from_inner(DMatrix::from_fn(n, n, |i, j| w[(i, order[j])])),
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix{}x{}", self.rows(), self.cols())?;
        for i in 0..self.rows() {
            write!(f, "\n  [")?;
            for j in 0..self.cols() {
                let z = self.get(i, j);
                write!(f, " {:+.6}{:+.6}i", z.re, z.im)?;
            }
            write!(f, " ]")?;
        }
        Ok(())
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols(), rhs.rows(), "matrix product shape mismatch");
        ComplexMatrix::from_inner(&self.inner * &rhs.inner)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_inner(&self.inner + &rhs.inner)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_inner(&self.inner - &rhs.inner)
    }
}

/// Column state vector.
#[derive(Clone, PartialEq)]
pub struct Ket {
    inner: DVector<C64>,
}

impl Ket {
    pub(crate) fn from_inner(inner: DVector<C64>) -> Self {
        Self { inner }
    }

    pub(crate) fn inner(&self) -> &DVector<C64> {
        &self.inner
    }

    pub fn new(amplitudes: Vec<C64>) -> Self {
        Self::from_inner(DVector::from_vec(amplitudes))
    }

    pub fn from_real(amplitudes: &[f64]) -> Self {
        Self::new(amplitudes.iter().map(|&x| re(x)).collect())
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[index] = re(1.0);
        Self::from_inner(v)
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_inner(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.inner.len()
    }

    pub fn amplitude(&self, i: usize) -> C64 {
        self.inner[i]
    }

    /// `⟨self|other⟩`, antilinear in `self`.
    pub fn inner_product(&self, other: &Ket) -> C64 {
        self.inner.dotc(&other.inner)
    }

    pub fn norm(&self) -> f64 {
        self.inner.norm()
    }

    pub fn scale(&self, factor: C64) -> Ket {
        Ket::from_inner(&self.inner * factor)
    }

    pub fn add(&self, other: &Ket) -> Ket {
        Ket::from_inner(&self.inner + &other.inner)
    }

    pub fn sub(&self, other: &Ket) -> Ket {
        Ket::from_inner(&self.inner - &other.inner)
    }

    pub fn kron(&self, other: &Ket) -> Ket {
        Ket::from_inner(self.inner.kronecker(&other.inner))
    }

    /// Zero-pads to a larger dimension.
    pub fn padded(&self, dim: usize) -> Ket {
        assert!(dim >= self.dim());
        let mut v = DVector::zeros(dim);
        v.rows_mut(0, self.dim()).copy_from(&self.inner);
        Ket::from_inner(v)
    }

    /// `|self⟩⟨other|`.
    pub fn outer(&self, other: &Ket) -> ComplexMatrix {
        ComplexMatrix::from_inner(&self.inner * other.inner.adjoint())
    }

    pub fn projector(&self) -> ComplexMatrix {
        self.outer(self)
    }

    /// Returns the unit vector along `self`, or `None` when the norm is
    /// below `min_norm`.
    pub fn normalized(&self, min_norm: f64) -> Option<Ket> {
        let n = self.norm();
        (n >= min_norm).then(|| self.scale(re(1.0 / n)))
    }

    /// Multiplies by a global phase so that the first coordinate with
    /// modulus above `tol` is real and positive.
    pub fn with_positive_lead(&self, tol: f64) -> Ket {
        match self.inner.iter().find(|z| z.norm() > tol) {
            Some(lead) => self.scale(lead.conj() / lead.norm()),
            None => self.clone(),
        }
    }
}

impl fmt::Debug for Ket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ket[")?;
        for z in self.inner.iter() {
            write!(f, " {:+.6}{:+.6}i", z.re, z.im)?;
        }
        write!(f, " ]")
    }
}
