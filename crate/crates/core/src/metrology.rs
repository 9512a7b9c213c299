//! Displacement sensing with diagonal Fock mixtures.
//!
//! A displacement `D(α)` is followed by a projective measurement of one Fock
//! level `n`. The outcome probability `ξ(r)` depends on `r = |α|` only (the
//! state is diagonal, so the phase of `α` drops out of
//! `|⟨n|D(α)|m⟩|²`). With two outcomes the classical Fisher information is
//! `F = ξ'² / (ξ(1 − ξ))`.

use serde::Serialize;

use crate::error::{Result, SptError};
use crate::hilbert::{displaced_fock_overlap, laguerre, ln_factorial_ratio, PopulationVector};

/// Fisher information of the motional ground state measured in `|0⟩`,
/// taken as the `r → 0` supremum of its curve.
pub const FISHER_SQL: f64 = 4.0;

/// Below this value of `ξ(1 − ξ)` the Fisher ratio is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-14;

const GOLDEN_TOL: f64 = 1e-6;

/// `ξ(r) = Σ_m p_m |⟨n|D(r)|m⟩|²`.
pub fn overlap(p: &PopulationVector, n: usize, r: f64) -> f64 {
    p.probs()
        .iter()
        .enumerate()
        .filter(|(_, &pm)| pm > 0.0)
        .map(|(m, &pm)| pm * displaced_fock_overlap(n, m, r))
        .sum()
}

/// `d/dr |⟨n|D(r)|m⟩|²`, using `d/dx L_q^k(x) = −L_{q−1}^{k+1}(x)`.
fn overlap_term_derivative(n: usize, m: usize, r: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let (q, big_q) = if n <= m { (n, m) } else { (m, n) };
    let k = big_q - q;
    let x = r * r;
    let lag = laguerre(q, k as i64, x);
    let dlag = if q == 0 { 0.0 } else { -laguerre(q - 1, k as i64 + 1, x) };
    // prefactor c·e^{−x}·x^k with c = q!/Q!, kept in log space
    let ln_pref = ln_factorial_ratio(q, big_q) + k as f64 * x.ln() - x;
    let scaled = |a: f64, b: f64| -> f64 {
        if a == 0.0 || b == 0.0 {
            0.0
        } else {
            (a * b).signum() * (ln_pref + a.abs().ln() + b.abs().ln()).exp()
        }
    };
    let term = scaled(lag, lag);
    let mixed = scaled(lag, dlag);
    // d/dr = 2r d/dx, and d/dx [x^k e^{−x} L²] = x^k e^{−x} (k/x L² − L² + 2 L L')
    let mut d = 2.0 * r * (2.0 * mixed - term);
    if k > 0 {
        d += 2.0 * k as f64 * term / r;
    }
    d
}

/// `dξ/dr`, analytic.
pub fn overlap_derivative(p: &PopulationVector, n: usize, r: f64) -> f64 {
    p.probs()
        .iter()
        .enumerate()
        .filter(|(_, &pm)| pm > 0.0)
        .map(|(m, &pm)| pm * overlap_term_derivative(n, m, r))
        .sum()
}

/// Fisher information of the two-outcome measurement of level `n`.
///
/// Fails with [`SptError::SingularFisher`] when `ξ(1 − ξ) < 1e−14`; use
/// [`fisher_limit`] there.
pub fn fisher(p: &PopulationVector, n: usize, r: f64) -> Result<f64> {
    let xi = overlap(p, n, r);
    let var = xi * (1.0 - xi);
    if var.is_nan() || var < SINGULAR_TOL {
        return Err(SptError::SingularFisher { r, xi });
    }
    let d = overlap_derivative(p, n, r);
    Ok(d * d / var)
}

/// Fisher information at `r`, resolving a removable singularity by a
/// one-sided limit from above.
///
/// `F` is even in `r` about zero, so near a singular point at `r = 0` it is
/// `F(0) + c h² + O(h⁴)`; two offsets are combined by Richardson
/// extrapolation. Elsewhere the offsets shrink until successive values agree.
pub fn fisher_limit(p: &PopulationVector, n: usize, r: f64) -> Result<f64> {
    match fisher(p, n, r) {
        Ok(f) => return Ok(f),
        Err(SptError::SingularFisher { .. }) => {}
        Err(e) => return Err(e),
    }
    if r == 0.0 {
        let h = 1e-3;
        let coarse = fisher(p, n, h)?;
        let fine = fisher(p, n, h / 2.0)?;
        return Ok((4.0 * fine - coarse) / 3.0);
    }
    let mut h = 1e-3 * r.max(1.0);
    let mut last: Option<f64> = None;
    for _ in 0..30 {
        match (fisher(p, n, r + h), last) {
            (Ok(f), Some(prev)) if (f - prev).abs() <= 1e-9 * f.abs().max(1.0) => return Ok(f),
            (Ok(f), _) => last = Some(f),
            (Err(_), Some(prev)) => return Ok(prev),
            (Err(_), None) => {}
        }
        h *= 0.5;
    }
    last.ok_or(SptError::SingularFisher { r, xi: overlap(p, n, r) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FisherSample {
    pub r: f64,
    pub xi: f64,
    pub dxi_dr: f64,
    pub fisher: f64,
}

/// Fisher information of measuring level `n_meas`, sampled on a grid of
/// displacement amplitudes. Grid points where the ratio is singular are left
/// out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FisherCurve {
    pub n_meas: usize,
    pub samples: Vec<FisherSample>,
}

impl FisherCurve {
    pub fn max(&self) -> Option<&FisherSample> {
        self.samples.iter().max_by(|a, b| a.fisher.total_cmp(&b.fisher))
    }
}

fn check_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(SptError::invalid("r_grid", "amplitudes must be finite and non-negative"));
    }
    if r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SptError::invalid("r_grid", "amplitudes must be strictly increasing"));
    }
    Ok(())
}

pub fn fisher_curve(p: &PopulationVector, n: usize, r_grid: &[f64]) -> Result<FisherCurve> {
    check_grid(r_grid)?;
    let mut samples = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        match fisher(p, n, r) {
            Ok(f) => samples.push(FisherSample {
                r,
                xi: overlap(p, n, r),
                dxi_dr: overlap_derivative(p, n, r),
                fisher: f,
            }),
            Err(SptError::SingularFisher { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(FisherCurve { n_meas: n, samples })
}

/// `r_min, r_min + step, …` up to and including `r_max` (within rounding).
pub fn uniform_grid(r_min: f64, r_max: f64, step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || r_max.is_nan() || r_max <= r_min || !r_min.is_finite() || !r_max.is_finite() {
        return Err(SptError::invalid("r_grid", format!("bad range [{r_min}, {r_max}] step {step}")));
    }
    let count = ((r_max - r_min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| r_min + i as f64 * step).collect())
}

/// Cramér–Rao bound `Δα ≥ 1/√(N F_Q)` after `N` repetitions.
pub fn cramer_rao(f_q: f64, measurements: u64) -> f64 {
    1.0 / (measurements as f64 * f_q).sqrt()
}

/// Fock cutoff that holds a trapped state with traps up to index `max_trap`
/// and the tails displaced by up to `r_max`.
pub fn working_cutoff(n0: u32, max_trap: usize, r_max: f64) -> usize {
    n0 as usize * (max_trap + 1).pow(2) + (10.0 * r_max).ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    pub n_meas: usize,
    /// Displacement amplitude of maximal Fisher information.
    pub r_star: f64,
    /// Maximal Fisher information `F_Q`.
    pub f_q: f64,
    pub f_sql: f64,
    pub f_sql_convention: &'static str,
    pub gain: f64,
    pub gain_db: f64,
}

impl GainReport {
    /// Cramér–Rao bound on `|α|` after `measurements` repetitions.
    pub fn cramer_rao(&self, measurements: u64) -> f64 {
        cramer_rao(self.f_q, measurements)
    }
}

fn golden_section_max(p: &PopulationVector, n: usize, mut lo: f64, mut hi: f64) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |r: f64| fisher_limit(p, n, r);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while hi - lo > GOLDEN_TOL {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = eval(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = eval(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// Maximal Fisher information of measuring level `n` and its gain over the
/// ground-state reference.
///
/// The maximum is located on `r_grid` and refined by golden-section search
/// to `1e−6` in `r`. A maximum at the lowest grid point is compared with the
/// `r → 0` limit; a maximum at the highest grid point is an error.
pub fn gain_report(p: &PopulationVector, n: usize, r_grid: &[f64]) -> Result<GainReport> {
    check_grid(r_grid)?;
    if r_grid.len() < 3 {
        return Err(SptError::GridTooCoarse("need at least three amplitudes".into()));
    }
    if r_grid[0] <= 0.0 {
        return Err(SptError::invalid("r_grid", "smallest amplitude must be positive"));
    }
    let values = r_grid
        .iter()
        .map(|&r| match fisher(p, n, r) {
            Ok(f) => Ok(Some(f)),
            Err(SptError::SingularFisher { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let (best, _) = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|f| (i, f)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| SptError::GridTooCoarse("Fisher information singular on the whole grid".into()))?;

    let last = r_grid.len() - 1;
    let (r_star, f_q) = if best == last {
        return Err(SptError::GridTooCoarse(format!(
            "maximum sits at the largest amplitude r = {}",
            r_grid[last]
        )));
    } else if best == 0 {
        let at_zero = fisher_limit(p, n, 0.0)?;
        let (r_in, f_in) = golden_section_max(p, n, r_grid[0], r_grid[1])?;
        if at_zero >= f_in {
            (0.0, at_zero)
        } else {
            (r_in, f_in)
        }
    } else {
        golden_section_max(p, n, r_grid[best - 1], r_grid[best + 1])?
    };

    let gain = f_q / FISHER_SQL;
    Ok(GainReport {
        n_meas: n,
        r_star,
        f_q,
        f_sql: FISHER_SQL,
        f_sql_convention: "supremum (r -> 0) of the ground-state Fisher curve measured in |0>",
        gain,
        gain_db: 10.0 * gain.log10(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{displacement_operator, thermal_populations, ModeSpace, ThermalSpec};
    use crate::protocol::{trapped_state_analytic, Sideband};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};

    fn ground(dim: usize) -> PopulationVector {
        PopulationVector::fock(ModeSpace::new(dim).unwrap(), 0).unwrap()
    }

    fn trapped(mean_n: f64, dim: usize) -> PopulationVector {
        let p0 = thermal_populations(ThermalSpec::MeanN(mean_n), ModeSpace::new(dim).unwrap()).unwrap();
        trapped_state_analytic(&p0, 1, Sideband::Rsb).unwrap()
    }

    fn thermal(mean_n: f64, dim: usize) -> PopulationVector {
        thermal_populations(ThermalSpec::MeanN(mean_n), ModeSpace::new(dim).unwrap()).unwrap()
    }

    fn central_difference(p: &PopulationVector, n: usize, r: f64) -> f64 {
        let h = 1e-5;
        (overlap(p, n, r + h) - overlap(p, n, r - h)) / (2.0 * h)
    }

    #[test]
    fn overlap_at_zero_is_population() {
        let p = trapped(5.0, 80);
        for n in 0..10 {
            assert_abs_diff_eq!(overlap(&p, n, 0.0), p.get(n), epsilon = 1e-15);
        }
    }

    #[test]
    fn ground_state_gaussian() {
        let g = ground(10);
        for r in [0.0, 0.3, 1.1, 2.5] {
            assert_abs_diff_eq!(overlap(&g, 0, r), (-r * r).exp(), epsilon = 1e-15);
            assert_abs_diff_eq!(overlap_derivative(&g, 0, r), -2.0 * r * (-r * r).exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn overlap_matches_matrix_exponential() {
        let p = trapped(5.0, 80);
        let d = displacement_operator(ModeSpace::new(80).unwrap(), Complex64::new(0.4, 0.0)).unwrap();
        let want: f64 = (0..80).map(|m| p.get(m) * d[[1, m]].norm_sqr()).sum();
        assert_abs_diff_eq!(overlap(&p, 1, 0.4), want, epsilon = 1e-8);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let p = trapped(10.0, 150);
        for n in [0, 1, 4, 5, 9, 16] {
            for r in [0.01, 0.3, 0.77, 1.5, 3.0] {
                let fd = central_difference(&p, n, r);
                assert_abs_diff_eq!(overlap_derivative(&p, n, r), fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn derivative_vanishes_at_origin() {
        let p = thermal(3.0, 60);
        for n in 1..6 {
            assert_eq!(overlap_derivative(&p, n, 0.0), 0.0);
        }
    }

    #[test]
    fn ground_state_fisher_closed_form() {
        let g = ground(10);
        for r in [0.05_f64, 0.5, 1.0, 2.0] {
            let x = r * r;
            let want = 4.0 * x * (-x).exp() / (1.0 - (-x).exp());
            assert_abs_diff_eq!(fisher(&g, 0, r).unwrap(), want, epsilon = 1e-9);
        }
        assert!(matches!(fisher(&g, 0, 0.0), Err(SptError::SingularFisher { .. })));
        assert_abs_diff_eq!(fisher_limit(&g, 0, 0.0).unwrap(), 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fisher(&g, 0, 1e-3).unwrap(), 4.0, epsilon = 1e-4);
    }

    #[test]
    fn fisher_limit_when_level_unpopulated() {
        // p_n = 0: ξ(0) = 0 and F has a finite limit.
        let p = trapped(5.0, 80);
        assert_eq!(p.get(2), 0.0);
        let lim = fisher_limit(&p, 2, 0.0).unwrap();
        assert!(lim.is_finite() && lim > 0.0);
        assert_abs_diff_eq!(lim, fisher(&p, 2, 1e-3).unwrap(), epsilon = 1e-4);
    }

    #[test]
    fn thermal_fisher_peaks_below_sql() {
        let p = thermal(2.0, 120);
        let grid = uniform_grid(0.01, 4.0, 0.01).unwrap();
        let rep = gain_report(&p, 0, &grid).unwrap();
        assert!(rep.f_q < FISHER_SQL);
        assert!(rep.r_star > 0.5);
    }

    #[test]
    fn ground_state_has_zero_gain() {
        let grid = uniform_grid(0.01, 3.0, 0.01).unwrap();
        let rep = gain_report(&ground(10), 0, &grid).unwrap();
        assert_abs_diff_eq!(rep.gain_db, 0.0, epsilon = 1e-6);
        assert_eq!(rep.r_star, 0.0);
    }

    #[test]
    fn gain_report_grid_errors() {
        let p = thermal(2.0, 60);
        assert!(matches!(gain_report(&p, 0, &[0.1, 0.2]), Err(SptError::GridTooCoarse(_))));
        // thermal n=0 curve still rising at r = 0.3
        let short = uniform_grid(0.01, 0.3, 0.01).unwrap();
        assert!(matches!(gain_report(&p, 0, &short), Err(SptError::GridTooCoarse(_))));
        assert!(gain_report(&p, 0, &[0.3, 0.2, 0.4]).is_err());
        assert!(gain_report(&p, 0, &[0.0, 0.2, 0.4]).is_err());
    }

    #[test]
    fn curve_invariants() {
        let p = trapped(10.0, 150);
        let grid = uniform_grid(0.0, 3.0, 0.05).unwrap();
        let curve = fisher_curve(&p, 4, &grid).unwrap();
        assert!(curve.samples.windows(2).all(|w| w[1].r > w[0].r));
        for s in &curve.samples {
            assert!((0.0..=1.0).contains(&s.xi));
            assert!(s.fisher.is_finite() && s.fisher >= 0.0);
            assert_abs_diff_eq!(s.fisher, s.dxi_dr * s.dxi_dr / (s.xi * (1.0 - s.xi)), epsilon = 1e-12);
        }
        // the singular r = 0 point is dropped for the ground state
        let g = fisher_curve(&ground(10), 0, &grid).unwrap();
        assert_eq!(g.samples.len(), grid.len() - 1);
    }

    #[test]
    fn cramer_rao_scaling() {
        let rep = gain_report(&trapped(10.0, 150), 4, &uniform_grid(0.01, 3.0, 0.01).unwrap()).unwrap();
        for n in [1u64, 10, 1000] {
            assert_abs_diff_eq!(rep.cramer_rao(4 * n), rep.cramer_rao(n) / 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn overlap_normalization() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..5 {
            let w: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
            let p = PopulationVector::from_weights(w).unwrap();
            for r in [0.0, 1.0, 3.0] {
                let total: f64 = (0..150).map(|n| overlap(&p, n, r)).sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn working_cutoff_covers_traps() {
        assert_eq!(working_cutoff(1, 4, 3.0), 25 + 30);
        assert!(working_cutoff(2, 5, 0.5) >= 72);
    }
}
