//! Correlation matrices `u` of diffusive unravelings and the optimal choice.
//!
//! The noise obeys `dξ dξ† = 𝟙 dt` and `dξ dξᵀ = u dt` with `u` complex
//! symmetric and `‖u‖₂ ≤ 1`. The optimal unraveling for spontaneous emission
//! has zero diagonal and `u₁₂ = −e^{iθ_opt}`, with `θ_opt = arg(c̄*ψ₁₁²)`
//! fixed once by the initial state.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::entanglement::big_theta;
use crate::error::{Error, Result};
use crate::state::{c64, StateVector};

/// Symmetry tolerance accepted by [`validate`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Slack on the two-norm bound.
pub const NORM_TOLERANCE: f64 = 1e-12;
/// Below this `|Θ|` the optimal phase is not defined.
pub const DEGENERACY_THRESHOLD: f64 = 1e-14;

/// Complex symmetric `u`, stored as `(u₁₁, u₁₂, u₂₂)` so `u = uᵀ` holds by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationMatrix {
    u11: Complex64,
    u12: Complex64,
    u22: Complex64,
}

impl CorrelationMatrix {
    /// Independent noises.
    pub fn zero() -> Self {
        Self {
            u11: c64(0.0, 0.0),
            u12: c64(0.0, 0.0),
            u22: c64(0.0, 0.0),
        }
    }

    /// Zero diagonal with `u₁₂ = −e^{iφ}`.
    pub fn off_diagonal_phase(phi: f64) -> Self {
        Self {
            u11: c64(0.0, 0.0),
            u12: -Complex64::from_polar(1.0, phi),
            u22: c64(0.0, 0.0),
        }
    }

    /// Validates `(u₁₁, u₁₂, u₂₂)`.
    pub fn from_entries(u11: Complex64, u12: Complex64, u22: Complex64) -> Result<Self> {
        validate(&Matrix2::new(u11, u12, u12, u22))
    }

    pub fn u11(&self) -> Complex64 {
        self.u11
    }
    pub fn u12(&self) -> Complex64 {
        self.u12
    }
    pub fn u22(&self) -> Complex64 {
        self.u22
    }

    /// `u_{kl}` with zero-based indices.
    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        match (k, l) {
            (0, 0) => self.u11,
            (1, 1) => self.u22,
            _ => self.u12,
        }
    }

    pub fn matrix(&self) -> Matrix2<Complex64> {
        Matrix2::new(self.u11, self.u12, self.u12, self.u22)
    }

    /// Largest singular value.
    pub fn two_norm(&self) -> f64 {
        two_norm(&self.matrix())
    }

    /// `[Re u₁₁, Im u₁₁, Re u₁₂, Im u₁₂, Re u₂₂, Im u₂₂]`.
    pub fn to_reals(&self) -> [f64; 6] {
        [
            self.u11.re,
            self.u11.im,
            self.u12.re,
            self.u12.im,
            self.u22.re,
            self.u22.im,
        ]
    }

    pub fn from_reals(v: [f64; 6]) -> Result<Self> {
        Self::from_entries(c64(v[0], v[1]), c64(v[2], v[3]), c64(v[4], v[5]))
    }
}

fn two_norm(m: &Matrix2<Complex64>) -> f64 {
    m.singular_values().max()
}

/// Accepts `u` iff it is symmetric within 1e-12 and `‖u‖₂ ≤ 1 + 1e-12`;
/// returns the symmetrized matrix.
pub fn validate(u: &Matrix2<Complex64>) -> Result<CorrelationMatrix> {
    if u.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidConfig("correlation matrix has non-finite entries".into()));
    }
    if (u[(0, 1)] - u[(1, 0)]).norm() > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric);
    }
    let u12 = (u[(0, 1)] + u[(1, 0)]) * 0.5;
    let sym = Matrix2::new(u[(0, 0)], u12, u12, u[(1, 1)]);
    let norm = two_norm(&sym);
    if norm > 1.0 + NORM_TOLERANCE {
        return Err(Error::UnphysicalCorrelation { norm });
    }
    Ok(CorrelationMatrix {
        u11: u[(0, 0)],
        u12,
        u22: u[(1, 1)],
    })
}

/// `arg(c̄*ψ₁₁²)` in `(−π, π]`.
pub fn theta_from_state(psi: &StateVector) -> Result<f64> {
    let theta = big_theta(psi);
    let magnitude = theta.norm();
    if magnitude <= DEGENERACY_THRESHOLD {
        return Err(Error::OptimalPhaseUndefined { magnitude });
    }
    Ok(wrap_phase(theta.arg()))
}

/// Maps an angle into `(−π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut x = phi.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalUnraveling {
    pub theta_opt: f64,
    pub u: CorrelationMatrix,
}

/// The time-independent optimal unraveling, built from the initial state only.
pub fn optimal_unraveling(psi0: &StateVector) -> Result<OptimalUnraveling> {
    let theta_opt = theta_from_state(psi0)?;
    Ok(OptimalUnraveling {
        theta_opt,
        u: CorrelationMatrix::off_diagonal_phase(theta_opt),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{bell, fig1_dashed, fig1_solid};
    use crate::state::make_state;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_matrix_is_valid() {
        let u = validate(&Matrix2::zeros()).unwrap();
        assert_eq!(u, CorrelationMatrix::zero());
        assert_eq!(u.two_norm(), 0.0);
    }

    #[test]
    fn optimal_form_has_unit_norm() {
        for phi in [0.0, 0.4, -2.0, PI] {
            let e = -Complex64::from_polar(1.0, phi);
            let u = validate(&Matrix2::new(c64(0.0, 0.0), e, e, c64(0.0, 0.0))).unwrap();
            assert_abs_diff_eq!(u.two_norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_norm_violation() {
        let m = Matrix2::new(c64(1.5, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0));
        match validate(&m) {
            Err(Error::UnphysicalCorrelation { norm }) => assert_abs_diff_eq!(norm, 1.5, epsilon = 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Matrix2::new(c64(0.0, 0.0), c64(0.2, 0.0), c64(0.1, 0.0), c64(0.0, 0.0));
        assert!(matches!(validate(&m), Err(Error::NotSymmetric)));
    }

    /// c̄ and ψ₁₁² evaluated term by term for the two presets.
    fn theta_by_hand(a: [Complex64; 4]) -> f64 {
        let cbar = (a[1] * a[2] - a[0] * a[3]) * 2.0;
        (cbar.conj() * a[3] * a[3]).arg()
    }

    #[test]
    fn preset_phases() {
        let solid = fig1_solid();
        let a = solid.amplitudes();
        let hand = theta_by_hand([a[0], a[1], a[2], a[3]]);
        assert_abs_diff_eq!(hand, -FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(theta_from_state(&solid).unwrap(), -FRAC_PI_2, epsilon = 1e-12);

        let dashed = fig1_dashed();
        let a = dashed.amplitudes();
        let hand = theta_by_hand([a[0], a[1], a[2], a[3]]);
        assert_abs_diff_eq!(hand, FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(theta_from_state(&dashed).unwrap(), FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_phase_is_refused() {
        assert!(matches!(
            theta_from_state(&bell()),
            Err(Error::OptimalPhaseUndefined { .. })
        ));
        assert!(optimal_unraveling(&StateVector::basis(0, 1)).is_err());
    }

    #[test]
    fn optimal_off_diagonals() {
        let u = optimal_unraveling(&fig1_solid()).unwrap().u;
        assert_abs_diff_eq!((u.u12() - c64(0.0, 1.0)).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(u.u11(), c64(0.0, 0.0));
        assert_eq!(u.u22(), c64(0.0, 0.0));

        let u = optimal_unraveling(&fig1_dashed()).unwrap().u;
        assert_abs_diff_eq!((u.u12() - c64(0.0, -1.0)).norm(), 0.0, epsilon = 1e-12);

        // c̄ = −1, ψ₁₁² = 1/2: Θ = 1/2 is real positive.
        let h = 1.0 / 2f64.sqrt();
        let psi = make_state([c64(h, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(-h, 0.0)]).unwrap();
        let opt = optimal_unraveling(&psi).unwrap();
        assert_abs_diff_eq!(opt.theta_opt, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((opt.u.u12() - c64(-1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert_abs_diff_eq!(wrap_phase(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_phase(3.0 * PI / 2.0), -FRAC_PI_2, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn theta_is_global_phase_invariant(
            v in proptest::array::uniform8(-1.0f64..1.0),
            phi in -PI..PI,
        ) {
            let psi = make_state([c64(v[0], v[1]), c64(v[2], v[3]), c64(v[4], v[5]), c64(v[6], v[7])]);
            prop_assume!(psi.is_ok());
            let psi = psi.unwrap();
            prop_assume!(big_theta(&psi).norm() > 1e-6);
            let a = theta_from_state(&psi).unwrap();
            let b = theta_from_state(&psi.with_global_phase(phi)).unwrap();
            prop_assert!(wrap_phase(a - b).abs() < 1e-12);
        }

        #[test]
        fn optimal_u_has_unit_norm(v in proptest::array::uniform8(-1.0f64..1.0)) {
            let psi = make_state([c64(v[0], v[1]), c64(v[2], v[3]), c64(v[4], v[5]), c64(v[6], v[7])]);
            prop_assume!(psi.is_ok());
            if let Ok(opt) = optimal_unraveling(&psi.unwrap()) {
                prop_assert!((opt.u.two_norm() - 1.0).abs() < 1e-12);
                prop_assert_eq!(opt.u.u12().norm(), opt.u.u12().norm().clamp(1.0 - 1e-15, 1.0 + 1e-15));
            }
        }
    }
}
