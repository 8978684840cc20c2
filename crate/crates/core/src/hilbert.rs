//! Finite-dimensional Hilbert-space values: state vectors, Hermitian operators
//! and density matrices, plus the elementary diagnostics built on them.
//!
//! Units: `hbar = 1` throughout, so Hamiltonians carry angular-frequency units.
//! The measured operator `G` has its rate constant absorbed.

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::Serialize;

use crate::error::{dimension_mismatch, QsdError, Result};

pub type C64 = Complex<f64>;

/// Tolerance on `| |psi|^2 - 1 |` for a state to count as normalized.
pub const NORM_TOLERANCE: f64 = 1e-12;
/// Symmetrization corrections above this size are reported.
pub const HERMITIAN_WARN_TOLERANCE: f64 = 1e-10;
/// Norms below this are treated as the zero vector.
pub const DEGENERATE_NORM: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<C64>,
    label: Option<String>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        Self::from_dvector(DVector::from_vec(amplitudes))
    }

    pub fn from_dvector(amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(QsdError::InvalidArgument("state vector must have at least one amplitude".into()));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QsdError::InvalidArgument("state vector has non-finite amplitudes".into()));
        }
        Ok(StateVector { amplitudes, label: None })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Basis vector `|k>` of an `n`-dimensional space.
    pub fn basis(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return Err(QsdError::InvalidArgument(format!("basis index {k} out of range for dimension {n}")));
        }
        let mut v = DVector::zeros(n);
        v[k] = C64::new(1.0, 0.0);
        Self::from_dvector(v)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOLERANCE
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// `|psi><psi|`.
    pub fn projector(&self) -> DMatrix<C64> {
        &self.amplitudes * self.amplitudes.adjoint()
    }

    pub fn scaled(&self, factor: C64) -> StateVector {
        StateVector { amplitudes: &self.amplitudes * factor, label: self.label.clone() }
    }

    pub(crate) fn require_normalized(&self, what: &str) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(QsdError::ContractViolation(format!(
                "{what} requires a normalized state, got |psi|^2 = {}",
                self.norm_sqr()
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    entries: DMatrix<C64>,
}

impl HermitianOperator {
    /// Builds an operator from a square matrix, replacing it with `(A + A^dagger)/2`.
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(QsdError::InvalidArgument(format!(
                "operator must be a non-empty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QsdError::InvalidArgument("operator has non-finite entries".into()));
        }
        let defect = hermiticity_defect(&entries);
        if defect > HERMITIAN_WARN_TOLERANCE {
            warn!("operator was not Hermitian (max |A_jk - conj(A_kj)| = {defect:e}); symmetrizing");
        }
        let sym = (&entries + entries.adjoint()) * C64::new(0.5, 0.0);
        Ok(HermitianOperator { entries: sym })
    }

    pub fn zeros(n: usize) -> Self {
        HermitianOperator { entries: DMatrix::zeros(n, n) }
    }

    pub fn identity(n: usize) -> Self {
        HermitianOperator { entries: DMatrix::identity(n, n) }
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let diag = DVector::from_iterator(values.len(), values.iter().map(|&x| C64::new(x, 0.0)));
        Self::new(DMatrix::from_diagonal(&diag))
    }

    /// Builds from `(row, col, value)` triples; unlisted entries are zero, repeated entries add.
    pub fn from_entries(n: usize, entries: &[(usize, usize, C64)]) -> Result<Self> {
        let mut m = DMatrix::zeros(n, n);
        for &(j, k, z) in entries {
            if j >= n || k >= n {
                return Err(QsdError::InvalidArgument(format!("entry ({j}, {k}) out of range for dimension {n}")));
            }
            m[(j, k)] += z;
        }
        Self::new(m)
    }

    /// Row-major real matrix.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let mut m = DMatrix::zeros(n, n);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(QsdError::InvalidArgument("rows must form a square matrix".into()));
            }
            for (k, &x) in row.iter().enumerate() {
                m[(j, k)] = C64::new(x, 0.0);
            }
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    pub fn squared(&self) -> HermitianOperator {
        HermitianOperator { entries: &self.entries * &self.entries }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<DVector<C64>> {
        check_dims("operator application", self.dim(), psi.dim())?;
        Ok(&self.entries * psi.amplitudes())
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_radius(&self) -> f64 {
        self.eigen().0.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    /// Frobenius norm of `[self, other]`.
    pub fn commutator_norm(&self, other: &HermitianOperator) -> f64 {
        (&self.entries * &other.entries - &other.entries * &self.entries).norm()
    }

    pub fn commutes_with(&self, other: &HermitianOperator) -> bool {
        self.commutator_norm(other) <= 1e-10 * (1.0 + self.entries.norm() * other.entries.norm())
    }

    /// Eigenvalues (unsorted) and the matching orthonormal eigenvectors as columns.
    pub fn eigen(&self) -> (DVector<f64>, DMatrix<C64>) {
        let eig = self.entries.clone().symmetric_eigen();
        (eig.eigenvalues, eig.eigenvectors)
    }

    /// `exp(-i * self * t)`.
    pub fn unitary_propagator(&self, t: f64) -> DMatrix<C64> {
        let (values, vectors) = self.eigen();
        let phases = DVector::from_iterator(values.len(), values.iter().map(|&w| C64::from_polar(1.0, -w * t)));
        &vectors * DMatrix::from_diagonal(&phases) * vectors.adjoint()
    }
}

/// `max |A_jk - conj(A_kj)|`.
pub fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for k in j..n {
            worst = worst.max((m[(j, k)] - m[(k, j)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn check_dims(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(dimension_mismatch(what, expected, got))
    }
}

/// `<psi|A|psi>` for a normalized state.
pub fn expectation(psi: &StateVector, a: &HermitianOperator) -> Result<f64> {
    check_dims("expectation", a.dim(), psi.dim())?;
    psi.require_normalized("expectation")?;
    let raw = psi.amplitudes().dotc(&(a.matrix() * psi.amplitudes()));
    debug_assert!(raw.im.abs() < 1e-10 * (1.0 + a.matrix().norm()));
    Ok(raw.re)
}

/// `G - <psi|G|psi> I`, the operator whose expectation in `psi` vanishes.
pub fn shifted_operator(g: &HermitianOperator, psi: &StateVector) -> Result<HermitianOperator> {
    let mean = expectation(psi, g)?;
    let n = g.dim();
    let entries = g.matrix() - DMatrix::<C64>::identity(n, n) * C64::new(mean, 0.0);
    Ok(HermitianOperator { entries })
}

/// `<psi| G_delta^2 |psi>`, clamped at zero.
pub fn variance(psi: &StateVector, g: &HermitianOperator) -> Result<f64> {
    let shifted = shifted_operator(g, psi)?;
    let v = (shifted.matrix() * psi.amplitudes()).norm_squared();
    Ok(v.max(0.0))
}

/// Rescales to unit norm; the global phase is left alone.
pub fn normalize(psi: &StateVector) -> Result<StateVector> {
    let norm = psi.norm();
    if norm.is_nan() || norm <= DEGENERATE_NORM {
        return Err(QsdError::DegenerateState { norm });
    }
    Ok(StateVector { amplitudes: psi.amplitudes() / C64::new(norm, 0.0), label: psi.label.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityMatrixCheck {
    pub hermiticity_defect: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<C64>,
}

impl DensityMatrix {
    pub const HERMITIAN_TOLERANCE: f64 = 1e-10;
    pub const TRACE_TOLERANCE: f64 = 1e-10;
    pub const POSITIVITY_TOLERANCE: f64 = 1e-8;

    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(QsdError::InvalidArgument("density matrix must be square and non-empty".into()));
        }
        let check = inspect(&entries);
        if check.hermiticity_defect > Self::HERMITIAN_TOLERANCE {
            return Err(QsdError::InvalidArgument(format!(
                "density matrix not Hermitian (defect {:e})",
                check.hermiticity_defect
            )));
        }
        if check.trace_error > Self::TRACE_TOLERANCE {
            return Err(QsdError::InvalidArgument(format!("density matrix trace off by {:e}", check.trace_error)));
        }
        if check.min_eigenvalue < -Self::POSITIVITY_TOLERANCE {
            return Err(QsdError::InvalidArgument(format!(
                "density matrix has negative eigenvalue {:e}",
                check.min_eigenvalue
            )));
        }
        Ok(DensityMatrix { entries })
    }

    /// Wraps a matrix without validation. Used for integrator output, which is checked separately.
    pub fn from_matrix_unchecked(entries: DMatrix<C64>) -> Self {
        DensityMatrix { entries }
    }

    pub fn pure(psi: &StateVector) -> Result<Self> {
        psi.require_normalized("pure density matrix")?;
        Ok(DensityMatrix { entries: psi.projector() })
    }

    pub fn maximally_mixed(n: usize) -> Self {
        DensityMatrix { entries: DMatrix::identity(n, n) / C64::new(n as f64, 0.0) }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    pub fn check(&self) -> DensityMatrixCheck {
        inspect(&self.entries)
    }

    /// `Tr(rho A)`, real part.
    pub fn expectation(&self, a: &HermitianOperator) -> Result<f64> {
        check_dims("density-matrix expectation", self.dim(), a.dim())?;
        Ok((&self.entries * a.matrix()).trace().re)
    }
}

fn inspect(m: &DMatrix<C64>) -> DensityMatrixCheck {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let min_eigenvalue = herm.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    DensityMatrixCheck {
        hermiticity_defect: hermiticity_defect(m),
        trace_error: (m.trace() - C64::new(1.0, 0.0)).norm(),
        min_eigenvalue,
    }
}
