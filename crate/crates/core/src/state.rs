//! Two-qubit state algebra.
//!
//! Basis ordering is `(|00⟩, |01⟩, |10⟩, |11⟩)` with the left label belonging
//! to qubit 1, so the amplitude index is `2·q₁ + q₂`. Every other module
//! inherits this convention.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense 4×4 complex operator on the two-qubit space.
pub type Operator = Matrix4<Complex64>;
/// Raw (not necessarily normalized) amplitude vector.
pub type Amplitudes = Vector4<Complex64>;

/// Tolerance for the unit-norm invariant of [`StateVector`].
pub const NORM_TOLERANCE: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

pub const fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Basis indices.
pub const IDX_00: usize = 0;
pub const IDX_01: usize = 1;
pub const IDX_10: usize = 2;
pub const IDX_11: usize = 3;

/// Normalized conditional state of the two qubits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector(Amplitudes);

impl StateVector {
    /// Normalizes `amplitudes` into a state. Global phase is left untouched.
    pub fn new(amplitudes: Amplitudes) -> Result<Self> {
        let norm = amplitudes.norm();
        if !norm.is_finite() || norm <= f64::MIN_POSITIVE {
            return Err(Error::DegenerateState);
        }
        if (norm - 1.0).abs() <= 2.0 * f64::EPSILON {
            return Ok(Self(amplitudes));
        }
        Ok(Self(amplitudes.unscale(norm)))
    }

    pub fn from_slice(amplitudes: [Complex64; 4]) -> Result<Self> {
        Self::new(Vector4::from(amplitudes))
    }

    /// Computational basis state `|q₁ q₂⟩`.
    pub fn basis(q1: u8, q2: u8) -> Self {
        let mut v = Amplitudes::zeros();
        v[2 * usize::from(q1 & 1) + usize::from(q2 & 1)] = ONE;
        Self(v)
    }

    pub fn amplitudes(&self) -> &Amplitudes {
        &self.0
    }

    pub fn psi00(&self) -> Complex64 {
        self.0[IDX_00]
    }
    pub fn psi01(&self) -> Complex64 {
        self.0[IDX_01]
    }
    pub fn psi10(&self) -> Complex64 {
        self.0[IDX_10]
    }
    pub fn psi11(&self) -> Complex64 {
        self.0[IDX_11]
    }

    /// `|ψ⟩⟨ψ|` as a raw matrix.
    pub fn projector(&self) -> Operator {
        self.0 * self.0.adjoint()
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        DensityMatrix(self.projector())
    }

    /// Same state multiplied by `e^{iφ}`.
    pub fn with_global_phase(&self, phi: f64) -> Self {
        Self(self.0 * Complex64::from_polar(1.0, phi))
    }

    /// Largest absolute amplitude difference against `other`.
    pub fn max_deviation(&self, other: &StateVector) -> f64 {
        (self.0 - other.0).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Builds a normalized state from four amplitudes.
pub fn make_state(amplitudes: [Complex64; 4]) -> Result<StateVector> {
    StateVector::from_slice(amplitudes)
}

/// Matrix-vector product without renormalization.
pub fn apply_operator(op: &Operator, psi: &Amplitudes) -> Amplitudes {
    op * psi
}

/// `⟨ψ|op|ψ⟩`.
pub fn expectation(op: &Operator, psi: &StateVector) -> Complex64 {
    psi.0.dotc(&(op * psi.0))
}

/// Unconditional state: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    pub const TOLERANCE: f64 = 1e-10;

    /// Validates the density-matrix invariants at [`Self::TOLERANCE`].
    pub fn new(entries: Operator) -> Result<Self> {
        Self::with_tolerance(entries, Self::TOLERANCE)
    }

    pub fn with_tolerance(entries: Operator, tol: f64) -> Result<Self> {
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidDensityMatrix("non-finite entry".into()));
        }
        let herm_err = (entries - entries.adjoint()).camax();
        if herm_err > tol {
            return Err(Error::InvalidDensityMatrix(format!(
                "not Hermitian (max |ρ − ρ†| = {herm_err:e})"
            )));
        }
        let tr = entries.trace();
        if (tr - ONE).norm() > tol {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr} ≠ 1")));
        }
        let min_eig = hermitian_eigenvalues(&hermitian_part(&entries))
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -tol {
            return Err(Error::InvalidDensityMatrix(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self(hermitian_part(&entries)))
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_raw(entries: Operator) -> Self {
        Self(entries)
    }

    pub fn maximally_mixed() -> Self {
        Self(Operator::identity() * c64(0.25, 0.0))
    }

    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    pub fn element(&self, row: usize, col: usize) -> Complex64 {
        self.0[(row, col)]
    }

    /// `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &Operator) -> f64 {
        trace_distance(&self.0, other)
    }
}

/// `(A + A†)/2`.
pub fn hermitian_part(m: &Operator) -> Operator {
    (m + m.adjoint()) * c64(0.5, 0.0)
}

/// Real eigenvalues of a Hermitian 4×4 matrix, ascending.
pub fn hermitian_eigenvalues(m: &Operator) -> [f64; 4] {
    let eig = m.symmetric_eigenvalues();
    let mut out = [eig[0], eig[1], eig[2], eig[3]];
    out.sort_by(f64::total_cmp);
    out
}

/// `½‖a − b‖₁` for Hermitian arguments.
pub fn trace_distance(a: &Operator, b: &Operator) -> f64 {
    let diff = hermitian_part(&(a - b));
    0.5 * hermitian_eigenvalues(&diff).iter().map(|x| x.abs()).sum::<f64>()
}

/// Single-qubit σ₋ = |0⟩⟨1| on qubit 1, i.e. σ₋ ⊗ 𝟙.
pub fn sigma_minus_1() -> Operator {
    let mut m = Operator::zeros();
    m[(IDX_00, IDX_10)] = ONE;
    m[(IDX_01, IDX_11)] = ONE;
    m
}

/// 𝟙 ⊗ σ₋.
pub fn sigma_minus_2() -> Operator {
    let mut m = Operator::zeros();
    m[(IDX_00, IDX_01)] = ONE;
    m[(IDX_10, IDX_11)] = ONE;
    m
}

pub fn sigma_plus_1() -> Operator {
    sigma_minus_1().adjoint()
}

pub fn sigma_plus_2() -> Operator {
    sigma_minus_2().adjoint()
}

/// Spin flip σy ⊗ σy.
pub fn sigma_y_y() -> Operator {
    let mut m = Operator::zeros();
    m[(IDX_00, IDX_11)] = -ONE;
    m[(IDX_01, IDX_10)] = ONE;
    m[(IDX_10, IDX_01)] = ONE;
    m[(IDX_11, IDX_00)] = -ONE;
    m
}

/// Single-qubit Pauli matrices as `[[a, b], [c, d]]`.
pub mod pauli {
    use super::{Complex64, I, ONE, ZERO};

    pub type Mat2 = [[Complex64; 2]; 2];

    pub const IDENTITY: Mat2 = [[ONE, ZERO], [ZERO, ONE]];
    pub const X: Mat2 = [[ZERO, ONE], [ONE, ZERO]];
    pub const Y: Mat2 = [[ZERO, Complex64::new(0.0, -1.0)], [I, ZERO]];
    pub const Z: Mat2 = [[ONE, ZERO], [ZERO, Complex64::new(-1.0, 0.0)]];
    pub const LOWER: Mat2 = [[ZERO, ONE], [ZERO, ZERO]];
}

/// `a ⊗ b` for single-qubit operators, qubit 1 on the left.
pub fn local_product(a: &pauli::Mat2, b: &pauli::Mat2) -> Operator {
    Operator::from_fn(|r, c| a[r / 2][c / 2] * b[r % 2][c % 2])
}

/// Spontaneous-emission channels `J₁ = √γ σ₋⊗𝟙`, `J₂ = √γ 𝟙⊗σ₋`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindbladSet {
    gamma: f64,
    ops: [Operator; 2],
    ops_dag: [Operator; 2],
    decay: Operator,
}

impl LindbladSet {
    pub fn spontaneous_emission(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "decay rate must be positive, got {gamma}"
            )));
        }
        let s = c64(gamma.sqrt(), 0.0);
        let ops = [sigma_minus_1() * s, sigma_minus_2() * s];
        let ops_dag = [ops[0].adjoint(), ops[1].adjoint()];
        let decay = ops_dag[0] * ops[0] + ops_dag[1] * ops[1];
        Ok(Self {
            gamma,
            ops,
            ops_dag,
            decay,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn operators(&self) -> &[Operator; 2] {
        &self.ops
    }

    pub fn adjoints(&self) -> &[Operator; 2] {
        &self.ops_dag
    }

    /// `Σₖ Jₖ†Jₖ`.
    pub fn decay_operator(&self) -> &Operator {
        &self.decay
    }

    /// `(⟨J₁⟩, ⟨J₂⟩)` in `psi`.
    pub fn expectations(&self, psi: &StateVector) -> [Complex64; 2] {
        [expectation(&self.ops[0], psi), expectation(&self.ops[1], psi)]
    }
}

/// Validates a Hermitian Hamiltonian at tolerance 1e-12.
pub fn check_hamiltonian(h: &Operator) -> Result<()> {
    let err = (h - h.adjoint()).camax();
    if err > 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "Hamiltonian is not Hermitian (max |H − H†| = {err:e})"
        )));
    }
    Ok(())
}
