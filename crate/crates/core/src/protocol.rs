//! Ideal selective-population-trapping cycle: sideband pulse, unread
//! measurement of the electronic state, reset to `|g⟩`.
//!
//! Each cycle acts on the motional state through a Kraus pair
//! `{K_g, K_e}`. Populations and coherences decouple, so the cycle reduces
//! to a column-stochastic [`PopulationMap`] on Fock populations.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SptError};
use crate::hilbert::{ModeSpace, PopulationVector};
use crate::linalg::{self, CMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sideband {
    /// Red sideband, `|g,n⟩ ↔ |e,n−1⟩`.
    Rsb,
    /// Blue sideband, `|g,n⟩ ↔ |e,n+1⟩`.
    Bsb,
}

impl fmt::Display for Sideband {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sideband::Rsb => "rsb",
            Sideband::Bsb => "bsb",
        })
    }
}

impl FromStr for Sideband {
    type Err = SptError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rsb" | "red" => Ok(Sideband::Rsb),
            "bsb" | "blue" => Ok(Sideband::Bsb),
            other => Err(SptError::invalid("sideband", format!("expected rsb or bsb, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Trap-series index: traps sit at `n0·m²` (RSB) or `n0·m² − 1` (BSB).
    pub n0: u32,
    /// Lamb-Dicke parameter.
    pub eta: f64,
    /// Rabi frequency in units of the trap frequency.
    pub omega: f64,
    pub sideband: Sideband,
    pub repetitions: u32,
    pub space: ModeSpace,
}

impl ProtocolConfig {
    pub fn new(
        n0: u32,
        eta: f64,
        omega: f64,
        sideband: Sideband,
        repetitions: u32,
        space: ModeSpace,
    ) -> Result<Self> {
        let cfg = ProtocolConfig {
            n0,
            eta,
            omega,
            sideband,
            repetitions,
            space,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 {
            return Err(SptError::invalid("n0", "must be a positive integer"));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(SptError::invalid("eta", format!("must lie in (0, 1), got {}", self.eta)));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(SptError::invalid("omega", format!("must be positive, got {}", self.omega)));
        }
        if self.repetitions == 0 {
            return Err(SptError::invalid("repetitions", "must be at least 1"));
        }
        let tau = pulse_time(self);
        if !(tau.is_finite() && tau > 0.0) {
            return Err(SptError::invalid("omega", format!("pulse time {tau} is not finite")));
        }
        Ok(())
    }

    /// Half the sideband Rabi angle per unit `√n`: `x = ηΩτ/2 = π/√n0`.
    pub fn rabi_angle(&self) -> f64 {
        PI / (self.n0 as f64).sqrt()
    }
}

/// Sideband pulse length `τ = 2π/(η Ω √n0)`.
pub fn pulse_time(config: &ProtocolConfig) -> f64 {
    2.0 * PI / (config.eta * config.omega * (config.n0 as f64).sqrt())
}

/// Conditional motional maps for the two measurement outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausPair {
    pub k_g: CMatrix,
    pub k_e: CMatrix,
    pub sideband: Sideband,
}

impl KrausPair {
    /// Kraus pair for a pulse of Rabi angle `angle = ηΩτ/2`.
    ///
    /// RSB: `⟨n|K_g|n⟩ = cos(√n x)`, `⟨n|K_e|n+1⟩ = −sin(√(n+1) x)`.
    /// BSB: `⟨n|K_g|n⟩ = cos(√(n+1) x)`, `⟨n+1|K_e|n⟩ = sin(√(n+1) x)`.
    /// The sign of the RSB `K_e` is kept although populations ignore it.
    pub fn for_angle(sideband: Sideband, space: ModeSpace, angle: f64) -> Self {
        let d = space.dim();
        let re = |v: f64| Complex64::new(v, 0.0);
        let rt = |n: usize| (n as f64).sqrt();
        let mut k_g = Array2::zeros((d, d));
        let mut k_e = Array2::zeros((d, d));
        match sideband {
            Sideband::Rsb => {
                for n in 0..d {
                    k_g[[n, n]] = re((rt(n) * angle).cos());
                    if n + 1 < d {
                        k_e[[n, n + 1]] = re(-(rt(n + 1) * angle).sin());
                    }
                }
            }
            Sideband::Bsb => {
                for n in 0..d {
                    k_g[[n, n]] = re((rt(n + 1) * angle).cos());
                    if n + 1 < d {
                        k_e[[n + 1, n]] = re((rt(n + 1) * angle).sin());
                    }
                }
            }
        }
        KrausPair { k_g, k_e, sideband }
    }

    pub fn dim(&self) -> usize {
        self.k_g.nrows()
    }

    /// `K_g†K_g + K_e†K_e`; the identity for a trace-preserving channel.
    pub fn completeness(&self) -> CMatrix {
        linalg::dagger(&self.k_g).dot(&self.k_g) + linalg::dagger(&self.k_e).dot(&self.k_e)
    }

    /// Unconditional motional evolution `μ → Σ_i K_i μ K_i†`.
    pub fn apply(&self, mu: &CMatrix) -> CMatrix {
        let g = self.k_g.dot(mu).dot(&linalg::dagger(&self.k_g));
        let e = self.k_e.dot(mu).dot(&linalg::dagger(&self.k_e));
        g + e
    }
}

/// Kraus pair of one protocol cycle at the trapping pulse length.
pub fn kraus_pair(config: &ProtocolConfig) -> KrausPair {
    KrausPair::for_angle(config.sideband, config.space, config.rabi_angle())
}

/// Column-stochastic map on Fock populations, `𝔈_mn = Σ_i |⟨m|K_i|n⟩|²`.
///
/// Under BSB the last column loses `sin²(√dim x)` through the truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMap {
    e: Array2<f64>,
    sideband: Sideband,
}

impl PopulationMap {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.e
    }

    pub fn sideband(&self) -> Sideband {
        self.sideband
    }

    pub fn dim(&self) -> usize {
        self.e.nrows()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.e.columns().into_iter().map(|c| c.sum()).collect()
    }

    fn check_dim(&self, p: &PopulationVector) -> Result<()> {
        if p.dim() != self.dim() {
            return Err(SptError::DimensionMismatch {
                expected: self.dim(),
                found: p.dim(),
            });
        }
        Ok(())
    }

    /// One protocol cycle applied to populations.
    pub fn apply(&self, p: &PopulationVector) -> Result<PopulationVector> {
        self.check_dim(p)?;
        let v = self.e.dot(&Array1::from(p.probs().to_vec()));
        Ok(PopulationVector::from_raw(v.to_vec()))
    }

    /// Probability that level `n` leaves itself in one cycle, `1 − 𝔈_nn`.
    fn departure(&self, n: usize) -> f64 {
        if n < self.dim() {
            1.0 - self.e[[n, n]]
        } else {
            0.0
        }
    }
}

pub fn population_map(kraus: &KrausPair) -> PopulationMap {
    let e = kraus.k_g.mapv(|z| z.norm_sqr()) + kraus.k_e.mapv(|z| z.norm_sqr());
    PopulationMap {
        e,
        sideband: kraus.sideband,
    }
}

/// `𝔈^R p0`.
pub fn iterate(map: &PopulationMap, p0: &PopulationVector, repetitions: u32) -> Result<PopulationVector> {
    map.check_dim(p0)?;
    let mut p = p0.clone();
    for _ in 0..repetitions {
        p = map.apply(&p)?;
    }
    Ok(p)
}

/// Trap levels inside the truncated space, ascending.
pub fn trap_levels(n0: u32, sideband: Sideband, dim: usize) -> Vec<usize> {
    let n0 = n0 as usize;
    let first_m = match sideband {
        Sideband::Rsb => 0,
        Sideband::Bsb => 1,
    };
    (first_m..)
        .map(|m| match sideband {
            Sideband::Rsb => n0 * m * m,
            Sideband::Bsb => n0 * m * m - 1,
        })
        .take_while(|&t| t < dim)
        .collect()
}

/// Fixed point reached from `p0` after many cycles, in closed form.
///
/// RSB: every level `k` drains down to the highest trap `n0·m² ≤ k`, so the
/// populations of `[n0·m², n0(m+1)² − 1]` pile up on `n0·m²`. A bin cut by
/// the cutoff still drains to its trap.
///
/// BSB: every level climbs to the lowest trap `n0·m² − 1 ≥ k`. Levels above
/// the last trap inside the space climb out through the top level, exactly
/// as in the truncated [`PopulationMap`], so that mass is reported by
/// [`PopulationVector::leaked`].
pub fn trapped_state_analytic(p0: &PopulationVector, n0: u32, sideband: Sideband) -> Result<PopulationVector> {
    if n0 == 0 {
        return Err(SptError::invalid("n0", "must be a positive integer"));
    }
    let dim = p0.dim();
    if dim < n0 as usize {
        return Err(SptError::invalid(
            "dim",
            format!("cutoff {dim} is smaller than the first trap bin for n0 = {n0}"),
        ));
    }
    let traps = trap_levels(n0, sideband, dim);
    let mut out = vec![0.0; dim];
    for (k, &pk) in p0.probs().iter().enumerate() {
        let target = match sideband {
            Sideband::Rsb => traps.iter().rev().find(|&&t| t <= k),
            Sideband::Bsb => traps.iter().find(|&&t| t >= k),
        };
        if let Some(&t) = target {
            out[t] += pk;
        }
    }
    Ok(PopulationVector::from_raw(out))
}

/// Distance of `p` from being a steady state of `map`.
///
/// Returns the larger of `‖𝔈p − p‖₁` and the worst level-by-level violation
/// of the balance relation `sin²(√n x) p_n = sin²(√(n+1) x) p_{n+1}` (RSB) or
/// `sin²(√(n+1) x) p_n = sin²(√n x) p_{n−1}` (BSB). The `sin²` factors are
/// read off the map as `1 − 𝔈_nn`.
pub fn steady_state_residual(map: &PopulationMap, p: &PopulationVector) -> Result<f64> {
    let stepped = map.apply(p)?;
    let fixed_point = stepped.l1_distance(p)?;
    let d = map.dim();
    let balance = (0..d)
        .map(|n| match map.sideband() {
            Sideband::Rsb => (map.departure(n) * p.get(n) - map.departure(n + 1) * p.get(n + 1)).abs(),
            Sideband::Bsb => {
                let below = if n == 0 { 0.0 } else { map.departure(n - 1) * p.get(n - 1) };
                (map.departure(n) * p.get(n) - below).abs()
            }
        })
        .fold(0.0, f64::max);
    Ok(fixed_point.max(balance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{thermal_populations, von_neumann_entropy, ThermalSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cfg(n0: u32, sideband: Sideband, dim: usize) -> ProtocolConfig {
        ProtocolConfig::new(n0, 0.02, 1e-4, sideband, 30, ModeSpace::new(dim).unwrap()).unwrap()
    }

    fn map_for(n0: u32, sideband: Sideband, dim: usize) -> PopulationMap {
        population_map(&kraus_pair(&cfg(n0, sideband, dim)))
    }

    #[test]
    fn pulse_time_examples() {
        let s = ModeSpace::new(10).unwrap();
        let c1 = ProtocolConfig::new(1, 0.02, 1e-4, Sideband::Rsb, 1, s).unwrap();
        assert_abs_diff_eq!(pulse_time(&c1), 3.141_592_65e6, epsilon = 1e-2);
        let c4 = ProtocolConfig { n0: 4, ..c1 };
        assert_abs_diff_eq!(pulse_time(&c4), pulse_time(&c1) / 2.0, epsilon = 1e-9);
        let c = ProtocolConfig { eta: 0.1, ..c1 };
        assert_abs_diff_eq!(pulse_time(&c), 6.283_185_3e5, epsilon = 1e-1);
        // the rabi angle follows from the pulse time
        assert_abs_diff_eq!(c4.eta * c4.omega * pulse_time(&c4) / 2.0, c4.rabi_angle(), epsilon = 1e-12);
    }

    #[test]
    fn config_validation() {
        let s = ModeSpace::new(10).unwrap();
        assert!(ProtocolConfig::new(0, 0.02, 1e-4, Sideband::Rsb, 1, s).is_err());
        assert!(ProtocolConfig::new(1, 1.5, 1e-4, Sideband::Rsb, 1, s).is_err());
        assert!(ProtocolConfig::new(1, 0.02, 0.0, Sideband::Rsb, 1, s).is_err());
        assert!(ProtocolConfig::new(1, 0.02, 1e-4, Sideband::Rsb, 0, s).is_err());
        assert_eq!("BSB".parse::<Sideband>().unwrap(), Sideband::Bsb);
        assert!("green".parse::<Sideband>().is_err());
    }

    #[test]
    fn kraus_entries_n0_one() {
        let k = kraus_pair(&cfg(1, Sideband::Rsb, 6));
        assert_abs_diff_eq!(k.k_g[[1, 1]].re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k.k_e[[0, 1]].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k.k_g[[2, 2]].re, -0.266_255_34, epsilon = 1e-8);
        let kb = kraus_pair(&cfg(1, Sideband::Bsb, 6));
        assert_abs_diff_eq!(kb.k_g[[0, 0]].re, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn kraus_completeness() {
        for d in [2, 14, 64] {
            let k = kraus_pair(&cfg(1, Sideband::Rsb, d));
            let c = k.completeness();
            assert!(linalg::max_abs_diff(&c, &linalg::identity(d)) <= 1e-14);

            let kb = KrausPair::for_angle(Sideband::Bsb, ModeSpace::new(d).unwrap(), 0.7);
            let cb = kb.completeness();
            for n in 0..d - 1 {
                assert_abs_diff_eq!(cb[[n, n]].re, 1.0, epsilon = 1e-14);
            }
            let top = ((d as f64).sqrt() * 0.7).cos().powi(2);
            assert_abs_diff_eq!(cb[[d - 1, d - 1]].re, top, epsilon = 1e-14);
        }
    }

    #[test]
    fn population_map_columns() {
        let m = map_for(1, Sideband::Rsb, 10);
        for s in m.column_sums() {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
        let e = m.matrix();
        assert_abs_diff_eq!(e[[1, 1]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e[[0, 1]], 0.0, epsilon = 1e-15);
        let s2 = (2f64.sqrt() * PI).sin().powi(2);
        assert_abs_diff_eq!(e[[1, 2]], s2, epsilon = 1e-14);
        assert_abs_diff_eq!(e[[2, 2]], 1.0 - s2, epsilon = 1e-14);
        assert_abs_diff_eq!(e[[1, 2]], 0.929_108_1, epsilon = 1e-7);
        assert!(e.iter().all(|&v| (0.0..=1.0 + 1e-15).contains(&v)));

        let b = map_for(2, Sideband::Bsb, 10);
        let sums = b.column_sums();
        for s in &sums[..9] {
            assert_abs_diff_eq!(*s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn population_map_matches_kraus_channel() {
        let k = kraus_pair(&cfg(2, Sideband::Rsb, 8));
        let m = population_map(&k);
        let p = thermal_populations(ThermalSpec::MeanN(2.0), ModeSpace::new(8).unwrap()).unwrap();
        let mu = Array2::from_diag(&Array1::from_iter(p.probs().iter().map(|&x| Complex64::new(x, 0.0))));
        let out = k.apply(&mu);
        let stepped = m.apply(&p).unwrap();
        for n in 0..8 {
            assert_abs_diff_eq!(out[[n, n]].re, stepped.get(n), epsilon = 1e-15);
        }
    }

    #[test]
    fn iterate_examples() {
        let m = map_for(1, Sideband::Rsb, 10);
        let s = ModeSpace::new(10).unwrap();
        let p = thermal_populations(ThermalSpec::MeanN(3.0), s).unwrap();
        assert_eq!(iterate(&m, &p, 0).unwrap(), p);
        let trap = PopulationVector::fock(s, 4).unwrap();
        assert!(iterate(&m, &trap, 50).unwrap().l1_distance(&trap).unwrap() < 1e-14);

        let two = PopulationVector::fock(s, 2).unwrap();
        let one = iterate(&m, &two, 1).unwrap();
        assert_abs_diff_eq!(one.get(1), 0.929_108_1, epsilon = 1e-7);
        assert_abs_diff_eq!(one.get(2), 0.070_891_9, epsilon = 1e-7);
        let far = iterate(&m, &two, 200).unwrap();
        assert_abs_diff_eq!(far.get(1), 1.0, epsilon = 1e-12);

        let short = map_for(1, Sideband::Rsb, 5);
        assert!(matches!(iterate(&short, &p, 1), Err(SptError::DimensionMismatch { .. })));
    }

    /// Matrix-power oracle: build 𝔈^R by repeated squaring, independent of
    /// the vector iteration.
    #[test]
    fn iterate_matches_matrix_power() {
        let m = map_for(1, Sideband::Rsb, 12);
        let mut power = Array2::<f64>::eye(12);
        let mut base = m.matrix().clone();
        let mut r = 37u32;
        while r > 0 {
            if r & 1 == 1 {
                power = power.dot(&base);
            }
            base = base.dot(&base);
            r >>= 1;
        }
        let p = thermal_populations(ThermalSpec::MeanN(4.0), ModeSpace::new(12).unwrap()).unwrap();
        let want = power.dot(&Array1::from(p.probs().to_vec()));
        let got = iterate(&m, &p, 37).unwrap();
        for n in 0..12 {
            assert_abs_diff_eq!(got.get(n), want[n], epsilon = 1e-14);
        }
    }

    #[test]
    fn trapped_thermal_closed_form() {
        let s = ModeSpace::new(400).unwrap();
        let p0 = thermal_populations(ThermalSpec::MeanN(5.0), s).unwrap();
        let tr = trapped_state_analytic(&p0, 1, Sideband::Rsb).unwrap();
        let q: f64 = 5.0 / 6.0;
        for m in 0..6 {
            let want = q.powi(m * m) - q.powi((m + 1) * (m + 1));
            assert_abs_diff_eq!(tr.get((m * m) as usize), want, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(tr.get(1), 5.0 / 6.0 - (5.0f64 / 6.0).powi(4), epsilon = 1e-12);
    }

    #[test]
    fn trapped_ground_state_unchanged() {
        let s = ModeSpace::new(30).unwrap();
        let g = PopulationVector::fock(s, 0).unwrap();
        for n0 in 1..5 {
            assert_eq!(trapped_state_analytic(&g, n0, Sideband::Rsb).unwrap(), g);
        }
    }

    #[test]
    fn trapped_rejects_tiny_space() {
        let p = PopulationVector::fock(ModeSpace::new(3).unwrap(), 0).unwrap();
        assert!(trapped_state_analytic(&p, 4, Sideband::Rsb).is_err());
        assert!(trapped_state_analytic(&p, 0, Sideband::Rsb).is_err());
    }

    #[test]
    fn trapped_bsb_matches_iteration() {
        let s = ModeSpace::new(40).unwrap();
        let p0 = thermal_populations(ThermalSpec::MeanN(3.0), s).unwrap();
        let m = map_for(1, Sideband::Bsb, 40);
        let it = iterate(&m, &p0, 500).unwrap();
        let an = trapped_state_analytic(&p0, 1, Sideband::Bsb).unwrap();
        assert!(it.l1_distance(&an).unwrap() < 1e-8);
        assert!(an.support(0.0).iter().all(|&n| [0, 3, 8, 15, 24, 35].contains(&n)));
    }

    #[test]
    fn steady_state_examples() {
        let s = ModeSpace::new(20).unwrap();
        let m = map_for(1, Sideband::Rsb, 20);
        let p0 = thermal_populations(ThermalSpec::MeanN(4.0), s).unwrap();
        let tr = trapped_state_analytic(&p0, 1, Sideband::Rsb).unwrap();
        assert!(steady_state_residual(&m, &tr).unwrap() < 1e-10);
        assert!(steady_state_residual(&m, &p0).unwrap() > 1e-3);
        let g = PopulationVector::fock(s, 0).unwrap();
        assert_eq!(steady_state_residual(&m, &g).unwrap(), 0.0);

        let mb = map_for(2, Sideband::Bsb, 20);
        let trb = trapped_state_analytic(&p0, 2, Sideband::Bsb).unwrap();
        // leaked mass is not a steady-state violation
        let inside = PopulationVector::from_weights(trb.probs().to_vec()).unwrap();
        assert!(steady_state_residual(&mb, &inside).unwrap() < 1e-10);
    }

    #[test]
    fn rsb_convergence_is_monotone() {
        let s = ModeSpace::new(14).unwrap();
        let m = map_for(1, Sideband::Rsb, 14);
        for p0 in [
            thermal_populations(ThermalSpec::Beta(0.01), s).unwrap(),
            PopulationVector::fock(s, 13).unwrap(),
            PopulationVector::from_weights((0..14).map(|k| 1.0 + (k % 3) as f64).collect()).unwrap(),
        ] {
            let target = trapped_state_analytic(&p0, 1, Sideband::Rsb).unwrap();
            let mut p = p0.clone();
            let mut last = p.l1_distance(&target).unwrap();
            for _ in 0..200 {
                p = m.apply(&p).unwrap();
                let d = p.l1_distance(&target).unwrap();
                assert!(d <= last + 1e-15);
                last = d;
            }
            assert!(last < 1e-6);
        }
    }

    #[test]
    fn parity_of_trapped_support() {
        let s = ModeSpace::new(60).unwrap();
        let p0 = thermal_populations(ThermalSpec::Beta(0.05), s).unwrap();
        for n0 in [2, 4, 6] {
            let tr = trapped_state_analytic(&p0, n0, Sideband::Rsb).unwrap();
            assert!(tr.support(0.0).iter().all(|n| n % 2 == 0));
        }
        let tr = trapped_state_analytic(&p0, 1, Sideband::Bsb).unwrap();
        assert_eq!(tr.support(0.0), vec![0, 3, 8, 15, 24, 35, 48]);
    }

    fn positive_distribution(dim: usize) -> impl Strategy<Value = PopulationVector> {
        prop::collection::vec(1e-6f64..1.0, dim).prop_map(|w| PopulationVector::from_weights(w).unwrap())
    }

    proptest! {
        #[test]
        fn entropy_reduction(p0 in positive_distribution(30), n0 in 1u32..4, bsb in any::<bool>()) {
            let sb = if bsb { Sideband::Bsb } else { Sideband::Rsb };
            let tr = trapped_state_analytic(&p0, n0, sb).unwrap();
            prop_assert!(von_neumann_entropy(&tr) < von_neumann_entropy(&p0));
        }

        #[test]
        fn rsb_conserves_probability(p0 in positive_distribution(16), reps in 0u32..300, n0 in 1u32..4) {
            let m = map_for(n0, Sideband::Rsb, 16);
            let p = iterate(&m, &p0, reps).unwrap();
            prop_assert!((p.total() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn bsb_leaks_only_from_top(beta in 0.3f64..3.0, reps in 1u32..200) {
            let dim = 40;
            let s = ModeSpace::new(dim).unwrap();
            let p0 = thermal_populations(ThermalSpec::Beta(beta), s).unwrap();
            let threshold = dim as f64 - 2.0 * (dim as f64).sqrt();
            let tail: f64 = p0.probs().iter().enumerate().filter(|(k, _)| *k as f64 > threshold).map(|(_, p)| p).sum();
            prop_assume!(tail < 1e-8);
            let p = iterate(&map_for(1, Sideband::Bsb, dim), &p0, reps).unwrap();
            prop_assert!(p.leaked() < 1e-6);
        }

        #[test]
        fn bsb_raises_energy(beta in 0.2f64..3.0, n0 in 1u32..4) {
            let s = ModeSpace::new(120).unwrap();
            let p0 = thermal_populations(ThermalSpec::Beta(beta), s).unwrap();
            let tr = trapped_state_analytic(&p0, n0, Sideband::Bsb).unwrap();
            prop_assert!(tr.mean_number() >= p0.mean_number());
        }
    }
}
