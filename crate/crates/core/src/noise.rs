//! Correlated complex Wiener increments.
//!
//! Writing `dξ = x + i y` and splitting `dξ dξ† = 𝟙 dt`, `dξ dξᵀ = u dt` into
//! real and imaginary parts gives the covariance of `(x₁, x₂, y₁, y₂)` per unit
//! time:
//!
//! ```text
//! E[x xᵀ] = (𝟙 + Re u)/2    E[y yᵀ] = (𝟙 − Re u)/2    E[x yᵀ] = (Im u)/2
//! ```
//!
//! Each trajectory owns a ChaCha20 stream selected by `(seed, stream)`, so an
//! ensemble is reproducible under any parallel schedule.

use nalgebra::Matrix4;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::unraveling::CorrelationMatrix;

/// Cholesky pivots below this switch the factorization to the eigen route.
pub const PIVOT_THRESHOLD: f64 = 1e-13;
/// Most negative covariance eigenvalue tolerated as rounding.
pub const PSD_TOLERANCE: f64 = 1e-12;

/// Complex increments `(dξ₁, dξ₂)` for one step.
pub type Increment = [Complex64; 2];

/// `Σ(u)` for the real vector `(x₁, x₂, y₁, y₂)`, per unit time.
pub fn real_covariance(u: &CorrelationMatrix) -> Matrix4<f64> {
    let m = u.matrix();
    let re = m.map(|z| z.re);
    let im = m.map(|z| z.im);
    let mut s = Matrix4::zeros();
    for r in 0..2 {
        for c in 0..2 {
            let id = if r == c { 1.0 } else { 0.0 };
            s[(r, c)] = 0.5 * (id + re[(r, c)]);
            s[(r + 2, c + 2)] = 0.5 * (id - re[(r, c)]);
            s[(r, c + 2)] = 0.5 * im[(r, c)];
            s[(r + 2, c)] = 0.5 * im[(r, c)];
        }
    }
    s
}

/// Finds `L` with `L Lᵀ = Σ`. Lower-triangular when Σ is comfortably
/// positive definite; otherwise `V √D` from the eigendecomposition.
pub fn psd_factor(sigma: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let eig = sigma.symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -PSD_TOLERANCE {
        return Err(Error::InvalidCorrelation { min_eigenvalue: min });
    }
    if let Some(l) = cholesky(sigma) {
        return Ok(l);
    }
    // rounding-level eigenvalues would otherwise leak √ε-sized noise into the null space
    let sqrt_d = eig
        .eigenvalues
        .map(|x| if x < PIVOT_THRESHOLD { 0.0 } else { x.sqrt() });
    Ok(eig.eigenvectors * Matrix4::from_diagonal(&sqrt_d))
}

fn cholesky(a: &Matrix4<f64>) -> Option<Matrix4<f64>> {
    let mut l = Matrix4::zeros();
    for j in 0..4 {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < PIVOT_THRESHOLD {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..4 {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

#[derive(Debug, Clone)]
pub struct NoiseGenerator {
    u: CorrelationMatrix,
    factor: Matrix4<f64>,
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

impl NoiseGenerator {
    pub fn new(u: CorrelationMatrix, seed: u64, stream: u64) -> Result<Self> {
        let factor = psd_factor(&real_covariance(&u))?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self {
            u,
            factor,
            seed,
            stream,
            rng,
        })
    }

    pub fn correlation(&self) -> &CorrelationMatrix {
        &self.u
    }

    pub fn factor(&self) -> &Matrix4<f64> {
        &self.factor
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// One `(dξ₁, dξ₂)` pair for a step of length `dt`.
    pub fn next_increment(&mut self, dt: f64) -> Increment {
        let z = nalgebra::Vector4::new(
            self.rng.sample::<f64, _>(StandardNormal),
            self.rng.sample::<f64, _>(StandardNormal),
            self.rng.sample::<f64, _>(StandardNormal),
            self.rng.sample::<f64, _>(StandardNormal),
        );
        let w = self.factor * z * dt.sqrt();
        [Complex64::new(w[0], w[2]), Complex64::new(w[1], w[3])]
    }

    /// Draws `n_steps` increments.
    pub fn sample_increments(&mut self, dt: f64, n_steps: usize) -> Vec<Increment> {
        (0..n_steps).map(|_| self.next_increment(dt)).collect()
    }

    /// Independent standard real normals, for the homodyne shot noise.
    pub fn next_standard_pair(&mut self) -> [f64; 2] {
        [
            self.rng.sample::<f64, _>(StandardNormal),
            self.rng.sample::<f64, _>(StandardNormal),
        ]
    }
}

/// Generator on stream 0 of `seed`.
pub fn build_generator(u: CorrelationMatrix, seed: u64) -> Result<NoiseGenerator> {
    NoiseGenerator::new(u, seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::c64;
    use approx::assert_abs_diff_eq;

    #[test]
    fn independent_limit() {
        let g = build_generator(CorrelationMatrix::zero(), 1).unwrap();
        let expected = Matrix4::identity() * std::f64::consts::FRAC_1_SQRT_2;
        assert!((g.factor() - expected).amax() < 1e-15);
        assert!((real_covariance(&CorrelationMatrix::zero()) - Matrix4::identity() * 0.5).amax() == 0.0);
    }

    #[test]
    fn optimal_covariance_is_rank_two() {
        let u = CorrelationMatrix::off_diagonal_phase(0.0);
        let sigma = real_covariance(&u);
        let mut eig: Vec<f64> = sigma.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(eig[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig[2], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig[3], 1.0, epsilon = 1e-14);
        let g = build_generator(u, 3).unwrap();
        assert!((g.factor() * g.factor().transpose() - sigma).amax() < 1e-12);
    }

    #[test]
    fn factor_reproduces_covariance() {
        let cases = [
            CorrelationMatrix::zero(),
            CorrelationMatrix::off_diagonal_phase(1.1),
            CorrelationMatrix::from_entries(c64(0.3, -0.2), c64(0.1, 0.4), c64(-0.2, 0.1)).unwrap(),
            CorrelationMatrix::from_entries(c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 1.0)).unwrap(),
        ];
        for u in cases {
            let g = build_generator(u, 0).unwrap();
            let sigma = real_covariance(&u);
            assert!((g.factor() * g.factor().transpose() - sigma).amax() < 1e-12);
        }
    }

    #[test]
    fn lower_triangular_when_well_conditioned() {
        let u = CorrelationMatrix::from_entries(c64(0.2, 0.0), c64(0.1, 0.1), c64(0.0, -0.3)).unwrap();
        let l = build_generator(u, 0).unwrap().factor().clone_owned();
        for r in 0..4 {
            for c in r + 1..4 {
                assert_eq!(l[(r, c)], 0.0);
            }
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let u = CorrelationMatrix::off_diagonal_phase(0.3);
        let a = build_generator(u, 42).unwrap().sample_increments(1e-3, 100);
        let b = build_generator(u, 42).unwrap().sample_increments(1e-3, 100);
        assert_eq!(a, b);
        let c = NoiseGenerator::new(u, 42, 1).unwrap().sample_increments(1e-3, 100);
        assert_ne!(a, c);
    }

    #[test]
    fn optimal_increments_are_conjugate_linked() {
        // u₁₂ = −e^{iθ}: dξ₂ = −e^{iθ} conj(dξ₁) sample by sample.
        let theta = 0.7;
        let mut g = build_generator(CorrelationMatrix::off_diagonal_phase(theta), 9).unwrap();
        let e = Complex64::from_polar(1.0, theta);
        for _ in 0..1000 {
            let [a, b] = g.next_increment(1e-3);
            assert!((b + e * a.conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn rejects_invalid_covariance() {
        // Bypass validate() through a hand-built non-PSD matrix.
        let mut sigma = Matrix4::identity() * 0.5;
        sigma[(0, 0)] = -0.1;
        assert!(matches!(psd_factor(&sigma), Err(Error::InvalidCorrelation { .. })));
    }
}
