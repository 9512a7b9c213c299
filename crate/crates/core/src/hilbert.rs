//! Truncated Fock space of one motional mode.
//!
//! Diagonal motional states are [`PopulationVector`]s. Operators are dense
//! complex matrices over levels `0..dim`.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SptError};
use crate::linalg::{self, CMatrix};

/// Tolerance on the unit-sum invariant of a [`PopulationVector`].
pub const NORM_TOL: f64 = 1e-12;

/// Fock cutoff: levels `0..dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSpace {
    dim: usize,
}

impl ModeSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(SptError::invalid("dim", format!("need at least 2 Fock levels, got {dim}")));
        }
        Ok(ModeSpace { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Probabilities of Fock levels `0..dim` for a state diagonal in the number
/// basis.
///
/// Vectors built by the public constructors sum to one. Vectors produced by
/// maps on a truncated space may be sub-normalized when probability leaks
/// through the top level; [`PopulationVector::leaked`] reports the deficit.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationVector {
    probs: Vec<f64>,
}

impl PopulationVector {
    /// Validates non-negativity and unit sum (within `1e-9`), then
    /// renormalizes so the sum is one to rounding.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::check_entries(&probs)?;
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SptError::invalid("populations", format!("sum is {total}, expected 1")));
        }
        Ok(Self::normalize(probs, total))
    }

    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        Self::check_entries(&weights)?;
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(SptError::invalid("populations", "weights sum to zero"));
        }
        Ok(Self::normalize(weights, total))
    }

    /// All probability on level `n`.
    pub fn fock(space: ModeSpace, n: usize) -> Result<Self> {
        if n >= space.dim() {
            return Err(SptError::invalid("n", format!("level {n} outside cutoff {}", space.dim())));
        }
        let mut probs = vec![0.0; space.dim()];
        probs[n] = 1.0;
        Ok(PopulationVector { probs })
    }

    /// Trusted constructor for the outputs of stochastic maps.
    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        PopulationVector {
            probs: probs.into_iter().map(|p| p.max(0.0)).collect(),
        }
    }

    fn check_entries(probs: &[f64]) -> Result<()> {
        if probs.len() < 2 {
            return Err(SptError::invalid("populations", "need at least 2 Fock levels"));
        }
        if let Some((n, p)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(SptError::invalid("populations", format!("p[{n}] = {p} is not a probability")));
        }
        Ok(())
    }

    fn normalize(mut probs: Vec<f64>, total: f64) -> Self {
        probs.iter_mut().for_each(|p| *p /= total);
        PopulationVector { probs }
    }

    pub fn space(&self) -> ModeSpace {
        ModeSpace { dim: self.probs.len() }
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Probability lost from the truncated space, `1 - Σ p_n`.
    pub fn leaked(&self) -> f64 {
        1.0 - self.total()
    }

    /// Mean phonon number `Σ n p_n`.
    pub fn mean_number(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// Most likely Fock level (lowest index on ties).
    pub fn most_likely(&self) -> usize {
        let mut best = 0;
        for (n, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = n;
            }
        }
        best
    }

    /// Levels carrying more than `tol` probability.
    pub fn support(&self, tol: f64) -> Vec<usize> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > tol)
            .map(|(n, _)| n)
            .collect()
    }

    pub fn l1_distance(&self, other: &PopulationVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(SptError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum())
    }

    /// Total-variation distance `½‖p − q‖₁`.
    pub fn tv_distance(&self, other: &PopulationVector) -> Result<f64> {
        Ok(0.5 * self.l1_distance(other)?)
    }

    /// Zero-pads (or truncates) to `dim` levels, renormalizing if mass was cut.
    pub fn resized(&self, dim: usize) -> Result<Self> {
        let mut probs = self.probs.clone();
        probs.resize(dim, 0.0);
        Self::from_weights(probs)
    }
}

/// Initial temperature, given either as inverse temperature or mean phonon
/// number (with `ν = 1`, `⟨n⟩ = 1/(e^β − 1)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThermalSpec {
    Beta(f64),
    MeanN(f64),
}

impl ThermalSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThermalSpec::Beta(b) if b.is_nan() || b < 0.0 => {
                Err(SptError::invalid("beta", format!("must be >= 0, got {b}")))
            }
            ThermalSpec::MeanN(n) if !n.is_finite() || n < 0.0 => {
                Err(SptError::invalid("mean_n", format!("must be finite and >= 0, got {n}")))
            }
            _ => Ok(()),
        }
    }

    /// Inverse temperature; `+∞` for the ground state.
    pub fn beta(&self) -> f64 {
        match *self {
            ThermalSpec::Beta(b) => b,
            ThermalSpec::MeanN(n) => (1.0 / n).ln_1p(),
        }
    }

    /// Mean phonon number of the untruncated distribution.
    pub fn mean_n(&self) -> f64 {
        match *self {
            ThermalSpec::MeanN(n) => n,
            ThermalSpec::Beta(b) if b == f64::INFINITY => 0.0,
            ThermalSpec::Beta(b) => 1.0 / b.exp_m1(),
        }
    }
}

/// Thermal Fock distribution `p_k ∝ e^{-βk}`, renormalized over the
/// truncated space.
pub fn thermal_populations(spec: ThermalSpec, space: ModeSpace) -> Result<PopulationVector> {
    spec.validate()?;
    let beta = spec.beta();
    if beta == f64::INFINITY {
        return PopulationVector::fock(space, 0);
    }
    let weights = (0..space.dim()).map(|k| (-beta * k as f64).exp()).collect();
    PopulationVector::from_weights(weights)
}

/// Von Neumann entropy `−Σ p ln p` of a diagonal state, in nats.
pub fn von_neumann_entropy(p: &PopulationVector) -> f64 {
    -p.probs()
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Annihilation and creation operators on the truncated space.
pub fn ladder_operators(space: ModeSpace) -> (CMatrix, CMatrix) {
    let d = space.dim();
    let mut a = Array2::zeros((d, d));
    for n in 1..d {
        a[[n - 1, n]] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    let a_dag = linalg::dagger(&a);
    (a, a_dag)
}

pub fn number_operator(space: ModeSpace) -> CMatrix {
    Array2::from_diag(&ndarray::Array1::from_iter(
        (0..space.dim()).map(|n| Complex64::new(n as f64, 0.0)),
    ))
}

/// `D(α) = exp(α a† − α* a)` on the truncated space.
///
/// Exact only on levels well below the cutoff; callers choose `dim` so the
/// displaced wave packet fits.
pub fn displacement_operator(space: ModeSpace, alpha: Complex64) -> Result<CMatrix> {
    let (a, a_dag) = ladder_operators(space);
    let generator = a_dag.mapv(|z| z * alpha) - a.mapv(|z| z * alpha.conj());
    linalg::expm(&generator)
}

/// Generalized Laguerre polynomial `L_m^k(x)` by upward recurrence in `m`.
pub fn laguerre(m: usize, k: i64, x: f64) -> f64 {
    let k = k as f64;
    let mut prev = 1.0;
    if m == 0 {
        return prev;
    }
    let mut cur = 1.0 + k - x;
    for j in 1..m {
        let j = j as f64;
        let next = ((2.0 * j + 1.0 + k - x) * cur - (j + k) * prev) / (j + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `ln(q!/Q!)` for `q <= Q`.
pub(crate) fn ln_factorial_ratio(q: usize, big_q: usize) -> f64 {
    -((q + 1)..=big_q).map(|j| (j as f64).ln()).sum::<f64>()
}

/// `|⟨n|D(α)|m⟩|²` for `|α| = r`.
///
/// With `q = min(n, m)` and `Q = max(n, m)` this is
/// `e^{−r²} (q!/Q!) r^{2(Q−q)} [L_q^{Q−q}(r²)]²`, evaluated in log space.
pub fn displaced_fock_overlap(n: usize, m: usize, r: f64) -> f64 {
    let (q, big_q) = if n <= m { (n, m) } else { (m, n) };
    let x = r * r;
    if x == 0.0 {
        return if n == m { 1.0 } else { 0.0 };
    }
    let k = big_q - q;
    let lag = laguerre(q, k as i64, x);
    if lag == 0.0 {
        return 0.0;
    }
    let ln_term = ln_factorial_ratio(q, big_q) + k as f64 * x.ln() - x + 2.0 * lag.abs().ln();
    ln_term.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn space(d: usize) -> ModeSpace {
        ModeSpace::new(d).unwrap()
    }

    #[test]
    fn mode_space_rejects_single_level() {
        assert!(ModeSpace::new(1).is_err());
        assert!(ModeSpace::new(2).is_ok());
    }

    #[test]
    fn ladder_small_cases() {
        let (a, ad) = ladder_operators(space(2));
        assert_eq!(a[[0, 1]], Complex64::new(1.0, 0.0));
        assert_eq!(a[[0, 0]] + a[[1, 0]] + a[[1, 1]], Complex64::new(0.0, 0.0));
        assert_eq!(ad[[1, 0]], Complex64::new(1.0, 0.0));
        let (a3, _) = ladder_operators(space(3));
        assert_abs_diff_eq!(a3[[1, 2]].re, std::f64::consts::SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn commutator_is_identity_below_top_level() {
        let d = 9;
        let (a, ad) = ladder_operators(space(d));
        let comm = a.dot(&ad) - ad.dot(&a);
        for i in 0..d {
            for j in 0..d {
                let want = if i == j && i < d - 1 { 1.0 } else { 0.0 };
                if i == d - 1 && j == d - 1 {
                    // truncation: [a, a†] = −(d−1) on the top level
                    assert_abs_diff_eq!(comm[[i, j]].re, -((d - 1) as f64), epsilon = 1e-12);
                } else {
                    assert_abs_diff_eq!(comm[[i, j]].re, want, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn thermal_ground_state_at_infinite_beta() {
        let p = thermal_populations(ThermalSpec::Beta(f64::INFINITY), space(5)).unwrap();
        assert_eq!(p.probs(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        let p = thermal_populations(ThermalSpec::MeanN(0.0), space(5)).unwrap();
        assert_eq!(p.get(0), 1.0);
    }

    #[test]
    fn thermal_geometric_series() {
        let p = thermal_populations(ThermalSpec::Beta(2f64.ln()), space(60)).unwrap();
        for k in 0..10 {
            assert_abs_diff_eq!(p.get(k), 0.5f64.powi(k as i32 + 1), epsilon = 1e-15);
        }
    }

    #[test]
    fn thermal_mean_n_inversion() {
        let spec = ThermalSpec::MeanN(5.0);
        assert_abs_diff_eq!((-spec.beta()).exp(), 5.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ThermalSpec::Beta(spec.beta()).mean_n(), 5.0, epsilon = 1e-12);
        let p = thermal_populations(spec, space(400)).unwrap();
        assert_abs_diff_eq!(p.get(0), 1.0 / 6.0, epsilon = 1e-12);
        // truncated renormalization: sum exactly one at a small cutoff
        let p = thermal_populations(spec, space(14)).unwrap();
        assert_abs_diff_eq!(p.total(), 1.0, epsilon = NORM_TOL);
        assert!(p.get(0) > 1.0 / 6.0);
    }

    #[test]
    fn thermal_rejects_negative_beta() {
        assert!(thermal_populations(ThermalSpec::Beta(-0.1), space(4)).is_err());
        assert!(thermal_populations(ThermalSpec::MeanN(-1.0), space(4)).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(von_neumann_entropy(&PopulationVector::fock(space(4), 2).unwrap()), 0.0);
        let half = PopulationVector::new(vec![0.5, 0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(von_neumann_entropy(&half), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn thermal_entropy_closed_form() {
        // S = (1+n)ln(1+n) − n ln n, which is 2 ln 2 at n = 1
        let p = thermal_populations(ThermalSpec::MeanN(1.0), space(60)).unwrap();
        let n: f64 = 1.0;
        let closed = (1.0 + n) * (1.0 + n).ln() - if n > 0.0 { n * n.ln() } else { 0.0 };
        assert_abs_diff_eq!(closed, 2.0 * 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(von_neumann_entropy(&p), closed, epsilon = 1e-6);
    }

    /// Explicit coefficients: L_m^k(x) = Σ_i (−1)^i C(m+k, m−i) x^i / i!.
    fn laguerre_by_coefficients(m: u64, k: u64, x: f64) -> f64 {
        fn binom(n: u64, r: u64) -> f64 {
            (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
        }
        let mut fact = 1.0;
        let mut sum = 0.0;
        for i in 0..=m {
            if i > 0 {
                fact *= i as f64;
            }
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * binom(m + k, m - i) * x.powi(i as i32) / fact;
        }
        sum
    }

    #[test]
    fn laguerre_examples() {
        for k in [0, 1, 5] {
            for x in [0.0, 0.3, 7.0] {
                assert_eq!(laguerre(0, k, x), 1.0);
            }
        }
        assert_abs_diff_eq!(laguerre(1, 0, 2.0), -1.0, epsilon = 1e-15);
        let oracle = laguerre_by_coefficients(3, 2, 1.5);
        assert_abs_diff_eq!(laguerre(3, 2, 1.5), oracle, epsilon = 1e-12);
    }

    #[test]
    fn laguerre_matches_coefficient_expansion() {
        for m in 0..12u64 {
            for k in 0..6u64 {
                for x in [0.1, 0.9, 2.5] {
                    let want = laguerre_by_coefficients(m, k, x);
                    assert_abs_diff_eq!(laguerre(m as usize, k as i64, x), want, epsilon = 1e-9 * want.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn overlap_at_zero_displacement() {
        assert_eq!(displaced_fock_overlap(3, 3, 0.0), 1.0);
        assert_eq!(displaced_fock_overlap(3, 4, 0.0), 0.0);
        for r in [0.1, 1.0, 2.3] {
            assert_abs_diff_eq!(displaced_fock_overlap(0, 0, r), (-r * r).exp(), epsilon = 1e-15);
        }
    }

    #[test]
    fn overlap_matches_matrix_exponential() {
        let s = space(60);
        for &(n, m, r) in &[(3usize, 1usize, 0.7), (1, 3, 0.7), (0, 5, 1.2), (7, 2, 0.35)] {
            let d = displacement_operator(s, Complex64::new(r, 0.0)).unwrap();
            let want = d[[n, m]].norm_sqr();
            assert_abs_diff_eq!(displaced_fock_overlap(n, m, r), want, epsilon = 1e-10);
        }
    }

    #[test]
    fn overlap_is_phase_independent() {
        // |⟨n|D(α)|m⟩|² depends on |α| only.
        let s = space(50);
        let r = 0.8;
        let d0 = displacement_operator(s, Complex64::new(r, 0.0)).unwrap();
        let d1 = displacement_operator(s, Complex64::from_polar(r, 1.1)).unwrap();
        for (n, m) in [(0, 0), (2, 5), (6, 1)] {
            assert_abs_diff_eq!(d0[[n, m]].norm_sqr(), d1[[n, m]].norm_sqr(), epsilon = 1e-12);
        }
    }

    #[test]
    fn overlap_survives_large_quantum_numbers() {
        let v = displaced_fock_overlap(40, 260, 3.0);
        assert!(v.is_finite() && v >= 0.0);
        let total: f64 = (0..400).map(|n| displaced_fock_overlap(n, 200, 2.0)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
    }

    proptest! {
        #[test]
        fn overlap_completeness(m in 0usize..30, r in 0.0f64..3.0) {
            let cutoff = m + (r * r + 10.0 * r + 25.0).ceil() as usize;
            let total: f64 = (0..=cutoff).map(|n| displaced_fock_overlap(n, m, r)).sum();
            prop_assert!(total >= 1.0 - 1e-8);
            prop_assert!(total <= 1.0 + 1e-8);
        }

        #[test]
        fn overlap_symmetric(n in 0usize..40, m in 0usize..40, r in 0.0f64..4.0) {
            prop_assert_eq!(displaced_fock_overlap(n, m, r), displaced_fock_overlap(m, n, r));
        }

        #[test]
        fn entropy_non_negative(w in prop::collection::vec(0.0f64..1.0, 2..20)) {
            prop_assume!(w.iter().sum::<f64>() > 1e-6);
            let p = PopulationVector::from_weights(w).unwrap();
            let s = von_neumann_entropy(&p);
            prop_assert!(s >= 0.0);
            let pure = p.probs().contains(&1.0);
            prop_assert_eq!(s == 0.0, pure);
        }

        #[test]
        fn thermal_decreasing(beta in 1e-3f64..5.0, dim in 2usize..80) {
            let p = thermal_populations(ThermalSpec::Beta(beta), space(dim)).unwrap();
            prop_assert!(p.probs().windows(2).all(|w| w[1] < w[0]));
            prop_assert!((p.total() - 1.0).abs() < NORM_TOL);
        }
    }
}
