//! Quantum-information primitives over [`ComplexMatrix`]: typed operators,
//! tensor products, fidelity, negativity and positivity tests.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, Ket, C64};

/// Largest operator dimension accepted anywhere in the crate.
pub const MAX_DIM: usize = 256;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-12;
pub const PURITY_TOL: f64 = 1e-10;

/// Validation tolerances for [`QuantumOperator`] constructors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub hermitian: f64,
    pub psd: f64,
    pub trace: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermitian: HERMITIAN_TOL,
            psd: PSD_TOL,
            trace: TRACE_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    State,
    PovmElement,
    Kraus,
    Generic,
}

/// A square matrix tagged with the role it plays.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumOperator {
    matrix: ComplexMatrix,
    kind: OperatorKind,
}

impl QuantumOperator {
    pub fn state(matrix: ComplexMatrix) -> Result<Self> {
        Self::state_with(matrix, &Tolerances::default())
    }

    pub fn state_with(matrix: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        check_square(&matrix)?;
        if !matrix.is_hermitian(tol.hermitian) {
            return Err(Error::Contract("state is not Hermitian".into()));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > tol.trace || tr.im.abs() > tol.trace {
            return Err(Error::Contract(format!("state trace is {tr}, expected 1")));
        }
        let min = matrix.min_eigenvalue()?;
        if min < -tol.psd {
            return Err(Error::Contract(format!(
                "state has negative eigenvalue {min:e}"
            )));
        }
        Ok(Self {
            matrix,
            kind: OperatorKind::State,
        })
    }

    /// `|ψ⟩⟨ψ|` for a unit vector.
    pub fn pure_state(psi: &Ket) -> Result<Self> {
        if (psi.norm() - 1.0).abs() > TRACE_TOL {
            return Err(Error::Contract(format!(
                "pure state vector has norm {}",
                psi.norm()
            )));
        }
        Self::state(psi.projector())
    }

    pub fn povm_element(matrix: ComplexMatrix) -> Result<Self> {
        Self::povm_element_with(matrix, &Tolerances::default())
    }

    pub fn povm_element_with(matrix: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        check_square(&matrix)?;
        if !is_psd(&matrix, tol.psd)? {
            return Err(Error::Contract(format!(
                "POVM element is not positive semidefinite (min eigenvalue {:e})",
                matrix.min_eigenvalue()?
            )));
        }
        Ok(Self {
            matrix,
            kind: OperatorKind::PovmElement,
        })
    }

    pub fn kraus(matrix: ComplexMatrix) -> Result<Self> {
        check_square(&matrix)?;
        Ok(Self {
            matrix,
            kind: OperatorKind::Kraus,
        })
    }

    pub fn generic(matrix: ComplexMatrix) -> Result<Self> {
        check_square(&matrix)?;
        Ok(Self {
            matrix,
            kind: OperatorKind::Generic,
        })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Real part of `Tr[self · other]`.
    pub fn trace_with(&self, other: &ComplexMatrix) -> f64 {
        (self.matrix.inner() * other.inner()).trace().re
    }

    pub fn purity(&self) -> f64 {
        self.trace_with(&self.matrix)
    }
}

fn check_square(m: &ComplexMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "operator must be square, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() > MAX_DIM {
        return Err(Error::DimensionCap {
            dim: m.rows(),
            cap: MAX_DIM,
        });
    }
    Ok(())
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &QuantumOperator, b: &QuantumOperator) -> Result<QuantumOperator> {
    let dim = a.dim() * b.dim();
    if dim > MAX_DIM {
        return Err(Error::DimensionCap { dim, cap: MAX_DIM });
    }
    let kind = match (a.kind, b.kind) {
        (x, y) if x == y => x,
        _ => OperatorKind::Generic,
    };
    Ok(QuantumOperator {
        matrix: a.matrix.kron(&b.matrix),
        kind,
    })
}

/// `true` iff the smallest eigenvalue of `m` is at least `-tol`.
pub fn is_psd(m: &ComplexMatrix, tol: f64) -> Result<bool> {
    if !m.is_hermitian(HERMITIAN_TOL.max(tol)) {
        return Err(Error::Contract("PSD test on a non-Hermitian matrix".into()));
    }
    Ok(m.min_eigenvalue()? >= -tol)
}

/// Square root of a state restricted to its support, as a `dim x rank`
/// matrix whose columns are `√λ_k |e_k⟩`.
fn support_root(state: &QuantumOperator) -> Result<DMatrix<C64>> {
    let eig = state.matrix.hermitian_eigen()?;
    let max = eig.values.iter().cloned().fold(0.0, f64::max);
    let cutoff = 1e-14 * max.max(1.0);
    let cols: Vec<usize> = (0..eig.values.len())
        .filter(|&k| eig.values[k] > cutoff)
        .collect();
    let v = eig.vectors.inner();
    Ok(DMatrix::from_fn(state.dim(), cols.len(), |i, j| {
        v[(i, cols[j])] * eig.values[cols[j]].sqrt()
    }))
}

/// Uhlmann fidelity `Tr √(√ρ σ √ρ)`.
///
/// Computed as the trace norm of `√ρ √σ` restricted to both supports,
/// which keeps full precision for rank-deficient inputs.
pub fn fidelity(rho: &QuantumOperator, sigma: &QuantumOperator) -> Result<f64> {
    if rho.kind != OperatorKind::State || sigma.kind != OperatorKind::State {
        return Err(Error::Contract("fidelity requires two states".into()));
    }
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension(format!(
            "fidelity of states with dimensions {} and {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    let a = support_root(rho)?;
    let b = support_root(sigma)?;
    if a.ncols() == 0 || b.ncols() == 0 {
        return Ok(0.0);
    }
    let overlap = a.adjoint() * b;
    let sv = overlap.svd(false, false).singular_values;
    Ok(sv.iter().sum::<f64>().clamp(0.0, 1.0))
}

/// Partial transpose on the second factor of a `dims.0 ⊗ dims.1` operator.
pub fn partial_transpose(m: &ComplexMatrix, dims: (usize, usize)) -> Result<ComplexMatrix> {
    let (da, db) = dims;
    if m.rows() != da * db || !m.is_square() {
        return Err(Error::Dimension(format!(
            "{}x{} operator does not factor as {da}x{db}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(ComplexMatrix::from_fn(da * db, da * db, |row, col| {
        let (i, j) = (row / db, row % db);
        let (k, l) = (col / db, col % db);
        m.get(i * db + l, k * db + j)
    }))
}

/// Negativity `2 Σ |λ_-|` of the partial transpose of a pure bipartite
/// state.
pub fn negativity_pure(state: &QuantumOperator, dims: (usize, usize)) -> Result<f64> {
    if state.kind != OperatorKind::State {
        return Err(Error::Contract("negativity requires a state".into()));
    }
    let purity = state.purity();
    if purity < 1.0 - PURITY_TOL {
        return Err(Error::Contract(format!(
            "negativity_pure called on a mixed state (purity {purity})"
        )));
    }
    let pt = partial_transpose(&state.matrix, dims)?;
    let eig = pt.hermitian_eigen()?;
    Ok(2.0 * eig.values.iter().filter(|&&l| l < 0.0).map(|l| -l).sum::<f64>())
}
