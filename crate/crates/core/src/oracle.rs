//! Unconditional reference dynamics.
//!
//! Fixed-step RK4 integration of the Lindblad master equation (ħ = 1) and the
//! Wootters mixed-state concurrence. Trajectory ensembles are validated
//! against this module, so it never touches the stochastic code paths.

use nalgebra::Matrix4;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::state::{
    c64, check_hamiltonian, hermitian_part, sigma_y_y, DensityMatrix, LindbladSet, Operator,
};

/// Rounding floor for eigenvalues of ρ before they count as a real violation.
pub const EIGEN_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MasterEvolution {
    pub lindblad: LindbladSet,
    pub hamiltonian: Operator,
    pub dt: f64,
}

impl MasterEvolution {
    pub fn new(lindblad: LindbladSet, dt: f64) -> Result<Self> {
        Self::with_hamiltonian(lindblad, Operator::zeros(), dt)
    }

    pub fn with_hamiltonian(lindblad: LindbladSet, hamiltonian: Operator, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        check_hamiltonian(&hamiltonian)?;
        Ok(Self {
            lindblad,
            hamiltonian,
            dt,
        })
    }
}

/// `−i[H, ρ] + Σₖ (JₖρJₖ† − ½{Jₖ†Jₖ, ρ})`.
pub fn lindblad_rhs(rho: &Operator, evo: &MasterEvolution) -> Operator {
    let h = &evo.hamiltonian;
    let minus_i = c64(0.0, -1.0);
    let mut out = (h * rho - rho * h) * minus_i;
    let set = &evo.lindblad;
    for (j, jd) in set.operators().iter().zip(set.adjoints()) {
        out += j * rho * jd;
    }
    let decay = set.decay_operator();
    out -= (decay * rho + rho * decay) * c64(0.5, 0.0);
    out
}

fn rk4_step(rho: &Operator, evo: &MasterEvolution, h: f64) -> Operator {
    let hc = c64(h, 0.0);
    let half = c64(0.5 * h, 0.0);
    let k1 = lindblad_rhs(rho, evo);
    let k2 = lindblad_rhs(&(rho + k1 * half), evo);
    let k3 = lindblad_rhs(&(rho + k2 * half), evo);
    let k4 = lindblad_rhs(&(rho + k3 * hc), evo);
    let next = rho + (k1 + k2 * c64(2.0, 0.0) + k3 * c64(2.0, 0.0) + k4) * c64(h / 6.0, 0.0);
    hermitian_part(&next)
}

/// Advances `rho0` by `t` with uniform steps no longer than `evo.dt`.
pub fn evolve_master(rho0: &DensityMatrix, evo: &MasterEvolution, t: f64) -> Result<DensityMatrix> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidConfig(format!("evolution time must be ≥ 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(*rho0);
    }
    let n = (t / evo.dt - 1e-9).ceil().max(1.0) as usize;
    let h = t / n as f64;
    let mut rho = *rho0.matrix();
    for k in 0..n {
        rho = rk4_step(&rho, evo, h);
        if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::IntegrationDiverged { t: (k + 1) as f64 * h });
        }
    }
    Ok(DensityMatrix::from_raw(rho))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WoottersResult {
    /// `√λᵢ`, descending.
    pub lambdas: [f64; 4],
    /// `√λ₁ − √λ₂ − √λ₃ − √λ₄`.
    pub lambda: f64,
    pub concurrence: f64,
}

/// Wootters concurrence of a two-qubit density matrix.
///
/// With `ρ = W W†` (columns of `W` are eigenvectors scaled by `√pᵢ`), the
/// square roots of the eigenvalues of `ρ(σy⊗σy)ρ*(σy⊗σy)` are the singular
/// values of the complex-symmetric `τ = Wᵀ(σy⊗σy)W`. Working with `τ` avoids
/// taking square roots of rounding noise in the small eigenvalues.
pub fn wootters_concurrence(rho: &DensityMatrix) -> Result<WoottersResult> {
    let m = hermitian_part(rho.matrix());
    let eig = m
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenSolver("density-matrix eigendecomposition did not converge".into()))?;
    let mut w = Matrix4::<Complex64>::zeros();
    for k in 0..4 {
        let p = eig.eigenvalues[k];
        if p < -EIGEN_CLAMP {
            return Err(Error::EigenSolver(format!("negative eigenvalue {p:e} in ρ")));
        }
        let s = c64(p.max(0.0).sqrt(), 0.0);
        w.set_column(k, &(eig.eigenvectors.column(k) * s));
    }
    let tau = w.transpose() * sigma_y_y() * w;
    let sv = tau
        .try_svd(false, false, f64::EPSILON, 0)
        .map(|svd| svd.singular_values)
        .ok_or_else(|| Error::EigenSolver("singular value decomposition did not converge".into()))?;
    let mut lambdas = [sv[0], sv[1], sv[2], sv[3]];
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let lambda = lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3];
    Ok(WoottersResult {
        lambdas,
        lambda,
        concurrence: lambda.max(0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaPoint {
    pub t: f64,
    pub lambda: f64,
    pub concurrence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSeries {
    pub points: Vec<LambdaPoint>,
    /// Refined sign changes of Λ (midpoints of final brackets no wider than `dt`).
    pub crossings: Vec<f64>,
}

/// Λ(ρ(t)) and c(ρ(t)) on `grid`; sign changes of Λ are refined by bisection.
pub fn lambda_timeseries(
    rho0: &DensityMatrix,
    evo: &MasterEvolution,
    grid: &[f64],
) -> Result<LambdaSeries> {
    lambda_timeseries_with_resolution(rho0, evo, grid, evo.dt)
}

/// As [`lambda_timeseries`], bisecting each crossing down to `resolution`.
pub fn lambda_timeseries_with_resolution(
    rho0: &DensityMatrix,
    evo: &MasterEvolution,
    grid: &[f64],
    resolution: f64,
) -> Result<LambdaSeries> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("time grid must be sorted ascending".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut crossings = Vec::new();
    let mut rho = *rho0;
    let mut t_prev = 0.0;
    let mut prev: Option<(f64, f64, DensityMatrix)> = None;
    for &t in grid {
        rho = evolve_master(&rho, evo, t - t_prev)?;
        t_prev = t;
        let w = wootters_concurrence(&rho)?;
        points.push(LambdaPoint {
            t,
            lambda: w.lambda,
            concurrence: w.concurrence,
        });
        if let Some((t0, l0, rho_left)) = prev {
            if l0.signum() != w.lambda.signum() && l0 != 0.0 && w.lambda != 0.0 {
                crossings.push(bisect_crossing(&rho_left, l0, t0, t, evo, resolution)?);
            }
        }
        prev = Some((t, w.lambda, rho));
    }
    Ok(LambdaSeries { points, crossings })
}

fn bisect_crossing(
    rho_left: &DensityMatrix,
    lambda_left: f64,
    mut lo: f64,
    mut hi: f64,
    evo: &MasterEvolution,
    resolution: f64,
) -> Result<f64> {
    let mut rho_lo = *rho_left;
    let resolution = resolution.max(1e-14);
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        let rho_mid = evolve_master(&rho_lo, evo, mid - lo)?;
        let l = wootters_concurrence(&rho_mid)?.lambda;
        if l.signum() == lambda_left.signum() {
            lo = mid;
            rho_lo = rho_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Rescaled time `p = 1 − e^{−γt}`.
pub fn p_of_t(gamma: f64, t: f64) -> f64 {
    -(-gamma * t).exp_m1()
}

/// Inverse of [`p_of_t`].
pub fn t_of_p(gamma: f64, p: f64) -> f64 {
    -(-p).ln_1p() / gamma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{make_state, IDX_11, StateVector};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, SMatrix};
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    type Super = SMatrix<Complex64, 16, 16>;

    fn evo(gamma: f64, dt: f64) -> MasterEvolution {
        MasterEvolution::new(LindbladSet::spontaneous_emission(gamma).unwrap(), dt).unwrap()
    }

    fn kron(a: &Operator, b: &Operator) -> Super {
        Super::from_fn(|r, c| a[(r / 4, c / 4)] * b[(r % 4, c % 4)])
    }

    /// Column-stacking vectorization: vec(AρB) = (Bᵀ ⊗ A) vec(ρ).
    fn superoperator(evo: &MasterEvolution) -> Super {
        let id = Operator::identity();
        let h = evo.hamiltonian;
        let mi = c64(0.0, -1.0);
        let mut l = (kron(&id, &h) - kron(&h.transpose(), &id)) * mi;
        for j in evo.lindblad.operators() {
            let jdj = j.adjoint() * j;
            l += kron(&j.conjugate(), j);
            l -= (kron(&id, &jdj) + kron(&jdj.transpose(), &id)) * c64(0.5, 0.0);
        }
        l
    }

    fn vec_of(m: &Operator) -> SMatrix<Complex64, 16, 1> {
        SMatrix::<Complex64, 16, 1>::from_fn(|k, _| m[(k % 4, k / 4)])
    }

    fn unvec(v: &SMatrix<Complex64, 16, 1>) -> Operator {
        Operator::from_fn(|r, c| v[c * 4 + r])
    }

    fn exact_master(rho0: &Operator, evo: &MasterEvolution, t: f64) -> Operator {
        let l = superoperator(evo) * c64(t, 0.0);
        let dyn_l = DMatrix::from_iterator(16, 16, l.iter().copied());
        let e = dyn_l.exp();
        let e = Super::from_iterator(e.iter().copied());
        unvec(&(e * vec_of(rho0)))
    }

    fn fig1_solid() -> StateVector {
        let r5 = 5f64.sqrt();
        make_state([c64(1.0, 0.0), c64(-1.0, 0.0), c64(0.0, 1.0), c64(0.0, r5)]).unwrap()
    }

    fn fig1_dashed() -> StateVector {
        let r5 = 5f64.sqrt();
        make_state([c64(0.0, r5), c64(-1.0, 0.0), c64(0.0, 1.0), c64(1.0, 0.0)]).unwrap()
    }

    fn random_density(seed: [f64; 32]) -> DensityMatrix {
        let a = Operator::from_fn(|r, c| c64(seed[(4 * r + c) * 2], seed[(4 * r + c) * 2 + 1]));
        let m = a * a.adjoint();
        let tr = m.trace();
        DensityMatrix::new(m / tr).unwrap()
    }

    #[test]
    fn rhs_vanishes_on_ground_state() {
        let rho = StateVector::basis(0, 0).projector();
        assert_eq!(lindblad_rhs(&rho, &evo(1.3, 1e-3)), Operator::zeros());
    }

    #[test]
    fn rhs_on_doubly_excited_matches_superoperator() {
        let gamma = 0.8;
        let e = evo(gamma, 1e-3);
        let rho = StateVector::basis(1, 1).projector();
        let rhs = lindblad_rhs(&rho, &e);
        assert_abs_diff_eq!(rhs[(IDX_11, IDX_11)].re, -2.0 * gamma, epsilon = 1e-14);
        let brute = unvec(&(superoperator(&e) * vec_of(&rho)));
        assert!((rhs - brute).camax() < 1e-14);
    }

    #[test]
    fn rhs_matches_superoperator_with_hamiltonian() {
        let set = LindbladSet::spontaneous_emission(0.5).unwrap();
        let h = crate::state::local_product(&crate::state::pauli::X, &crate::state::pauli::Z)
            * c64(0.3, 0.0);
        let e = MasterEvolution::with_hamiltonian(set, h, 1e-3).unwrap();
        let rho = fig1_solid().projector();
        let brute = unvec(&(superoperator(&e) * vec_of(&rho)));
        assert!((lindblad_rhs(&rho, &e) - brute).camax() < 1e-14);
    }

    #[test]
    fn ground_state_is_stationary() {
        let rho0 = StateVector::basis(0, 0).density_matrix();
        let rho = evolve_master(&rho0, &evo(1.0, 1e-3), 3.0).unwrap();
        assert!((rho.matrix() - rho0.matrix()).camax() < 1e-15);
    }

    #[test]
    fn doubly_excited_population_decays() {
        let gamma = 1.0;
        let e = evo(gamma, 1e-3 / gamma);
        let rho0 = StateVector::basis(1, 1).density_matrix();
        for t in [0.25, 1.0, 3.0] {
            let rho = evolve_master(&rho0, &e, t).unwrap();
            assert_abs_diff_eq!(rho.element(IDX_11, IDX_11).re, (-2.0 * gamma * t).exp(), epsilon = 1e-8);
            let exact = exact_master(rho0.matrix(), &e, t);
            assert!((rho.matrix() - exact).camax() < 1e-10);
        }
    }

    #[test]
    fn fig1_excited_population_law() {
        let gamma = 1.0;
        let psi = fig1_solid();
        let e = evo(gamma, 1e-3);
        let rho = evolve_master(&psi.density_matrix(), &e, 1.5).unwrap();
        let expected = psi.psi11().norm_sqr() * (-2.0 * gamma * 1.5f64).exp();
        assert_abs_diff_eq!(rho.element(IDX_11, IDX_11).re, expected, epsilon = 1e-10);
    }

    #[test]
    fn fourth_order_convergence() {
        let e_coarse = evo(1.0, 0.2);
        let e_fine = evo(1.0, 0.1);
        let rho0 = fig1_dashed().density_matrix();
        let exact = exact_master(rho0.matrix(), &e_coarse, 2.0);
        let err_coarse = (evolve_master(&rho0, &e_coarse, 2.0).unwrap().matrix() - exact).camax();
        let err_fine = (evolve_master(&rho0, &e_fine, 2.0).unwrap().matrix() - exact).camax();
        let ratio = err_coarse / err_fine;
        assert!((12.0..20.0).contains(&ratio), "error ratio {ratio}");
    }

    #[test]
    fn invariants_preserved_over_window() {
        let e = evo(1.0, 1e-2);
        let mut rho = fig1_solid().density_matrix();
        for _ in 0..70 {
            rho = evolve_master(&rho, &e, 0.1).unwrap();
            assert!(DensityMatrix::with_tolerance(*rho.matrix(), 1e-8).is_ok());
        }
    }

    #[test]
    fn wootters_reference_values() {
        let h = 1.0 / SQRT_2;
        let bell = make_state([c64(0.0, 0.0), c64(h, 0.0), c64(h, 0.0), c64(0.0, 0.0)]).unwrap();
        let w = wootters_concurrence(&bell.density_matrix()).unwrap();
        assert_abs_diff_eq!(w.concurrence, 1.0, epsilon = 1e-12);

        let w = wootters_concurrence(&DensityMatrix::maximally_mixed()).unwrap();
        assert_abs_diff_eq!(w.lambda, -0.5, epsilon = 1e-12);
        assert_eq!(w.concurrence, 0.0);
        for l in w.lambdas {
            assert_abs_diff_eq!(l, 0.25, epsilon = 1e-12);
        }

        let c0 = (1.0 + 5f64.sqrt()) / 4.0;
        for psi in [fig1_solid(), fig1_dashed()] {
            let w = wootters_concurrence(&psi.density_matrix()).unwrap();
            assert_abs_diff_eq!(w.concurrence, c0, epsilon = 1e-12);
            assert_abs_diff_eq!(c0, 0.809, epsilon = 5e-4);
        }
    }

    #[test]
    fn werner_states() {
        let h = 1.0 / SQRT_2;
        let bell = make_state([c64(h, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(h, 0.0)]).unwrap();
        for f in [0.1, 0.3, 1.0 / 3.0, 0.5, 0.9] {
            let m = bell.projector() * c64(f, 0.0) + Operator::identity() * c64((1.0 - f) / 4.0, 0.0);
            let w = wootters_concurrence(&DensityMatrix::new(m).unwrap()).unwrap();
            assert_abs_diff_eq!(w.lambda, (3.0 * f - 1.0) / 2.0, epsilon = 1e-12);
        }
    }

    /// Alternative route: eigenvalues of the Hermitian √ρ ρ̃ √ρ.
    fn hermitian_route(rho: &DensityMatrix) -> [f64; 4] {
        let eig = rho.matrix().symmetric_eigen();
        let sqrt_d = eig.eigenvalues.map(|x| c64(x.max(0.0).sqrt(), 0.0));
        let sqrt_rho = eig.eigenvectors * Operator::from_diagonal(&sqrt_d) * eig.eigenvectors.adjoint();
        let s = sigma_y_y();
        let tilde = s * rho.matrix().conjugate() * s;
        let m = hermitian_part(&(sqrt_rho * tilde * sqrt_rho));
        let mut l: Vec<f64> = m.symmetric_eigenvalues().iter().map(|x| x.max(0.0).sqrt()).collect();
        l.sort_by(|a, b| b.total_cmp(a));
        [l[0], l[1], l[2], l[3]]
    }

    fn local_unitary(angles: [f64; 6]) -> Operator {
        use crate::state::{local_product, pauli};
        let su2 = |a: f64, b: f64, c: f64| {
            // e^{-iaZ/2} e^{-ibY/2} e^{-icZ/2}
            let rz = |t: f64| [[Complex64::from_polar(1.0, -t / 2.0), c64(0.0, 0.0)], [c64(0.0, 0.0), Complex64::from_polar(1.0, t / 2.0)]];
            let ry = |t: f64| [[c64((t / 2.0).cos(), 0.0), c64(-(t / 2.0).sin(), 0.0)], [c64((t / 2.0).sin(), 0.0), c64((t / 2.0).cos(), 0.0)]];
            let mul = |x: pauli::Mat2, y: pauli::Mat2| {
                let mut o = [[c64(0.0, 0.0); 2]; 2];
                for r in 0..2 {
                    for c in 0..2 {
                        o[r][c] = x[r][0] * y[0][c] + x[r][1] * y[1][c];
                    }
                }
                o
            };
            mul(mul(rz(a), ry(b)), rz(c))
        };
        local_product(
            &su2(angles[0], angles[1], angles[2]),
            &su2(angles[3], angles[4], angles[5]),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pure_states_match_closed_form(v in proptest::array::uniform8(-1.0f64..1.0)) {
            let psi = make_state([c64(v[0], v[1]), c64(v[2], v[3]), c64(v[4], v[5]), c64(v[6], v[7])]);
            prop_assume!(psi.is_ok());
            let psi = psi.unwrap();
            let closed = 2.0 * (psi.psi10() * psi.psi01() - psi.psi00() * psi.psi11()).norm();
            let w = wootters_concurrence(&psi.density_matrix()).unwrap();
            prop_assert!((w.concurrence - closed).abs() < 1e-10, "{} vs {}", w.concurrence, closed);
        }

        #[test]
        fn matches_hermitian_route(v in proptest::array::uniform32(-1.0f64..1.0)) {
            let rho = random_density(v);
            let w = wootters_concurrence(&rho).unwrap();
            let h = hermitian_route(&rho);
            for (a, b) in w.lambdas.iter().zip(h) {
                prop_assert!((a - b).abs() < 1e-7);
            }
        }

        #[test]
        fn invariant_under_local_unitaries(
            v in proptest::array::uniform32(-1.0f64..1.0),
            a in proptest::array::uniform6(-3.2f64..3.2),
        ) {
            let rho = random_density(v);
            let u = local_unitary(a);
            let rotated = DensityMatrix::new(u * rho.matrix() * u.adjoint()).unwrap();
            let w0 = wootters_concurrence(&rho).unwrap();
            let w1 = wootters_concurrence(&rotated).unwrap();
            prop_assert!((w0.lambda - w1.lambda).abs() < 1e-9);
        }

        #[test]
        fn rhs_is_traceless(v in proptest::array::uniform32(-1.0f64..1.0)) {
            let rho = random_density(v);
            let tr = lindblad_rhs(rho.matrix(), &evo(1.7, 1e-3)).trace();
            prop_assert!(tr.norm() < 1e-14);
        }
    }

    #[test]
    fn solid_state_lambda_crosses_zero() {
        let gamma = 1.0;
        let e = evo(gamma, 1e-3);
        let grid: Vec<f64> = (0..=70).map(|k| k as f64 * 0.1).collect();
        let series = lambda_timeseries(&fig1_solid().density_matrix(), &e, &grid).unwrap();
        assert_eq!(series.crossings.len(), 1);
        let p_s = p_of_t(gamma, series.crossings[0]);
        assert_abs_diff_eq!(p_s, 0.809_016_994_374_947_4 / 1.25, epsilon = 1e-3);
    }

    #[test]
    fn dashed_state_never_crosses() {
        let e = evo(1.0, 1e-3);
        let t_end = t_of_p(1.0, 0.999);
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 * t_end / 100.0).collect();
        let series = lambda_timeseries(&fig1_dashed().density_matrix(), &e, &grid).unwrap();
        assert!(series.crossings.is_empty());
        assert!(series.points.iter().all(|p| p.lambda > 0.0));
    }

    #[test]
    fn separable_stays_separable() {
        let e = evo(1.0, 1e-2);
        let grid = [0.0, 0.5, 1.0, 4.0];
        let series = lambda_timeseries(&StateVector::basis(0, 0).density_matrix(), &e, &grid).unwrap();
        assert!(series.points.iter().all(|p| p.concurrence == 0.0));
    }

    #[test]
    fn p_time_roundtrip() {
        for t in [0.0, 0.3, 1.0, 7.0] {
            assert_abs_diff_eq!(t_of_p(2.0, p_of_t(2.0, t)), t, epsilon = 1e-12);
        }
    }
}
