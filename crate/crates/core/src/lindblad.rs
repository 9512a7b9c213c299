//! Master-equation model of the protocol on the joint spin ⊗ motion space.
//!
//! `H = (Δ/2)σ_z + ν a†a + (Ω/2)[σ⁺D(iη) + σ⁻D†(iη)]` with `D(iη) =
//! exp(iη(a + a†))` on the truncated Fock space, so all Lamb-Dicke orders are
//! kept up to the cutoff. Spontaneous decay enters through the dissipator
//! `(Γ/2)(2σ⁻ρσ⁺ − σ⁺σ⁻ρ − ρσ⁺σ⁻)`, with no recoil on the motion.
//!
//! One cycle is `𝓔_d(τ_decay)·𝓔_u(τ)`: evolution under `H` alone for the
//! pulse, then free evolution with decay (Ω = 0) for the reset window.
//! Both propagators are computed once per parameter set and reused.
//!
//! Basis ordering is spin `{g, e}` ⊗ Fock `{0..dim}`, i.e. index
//! `s·dim + n` with `g = 0`, `e = 1`. Density matrices are vectorized by
//! column stacking.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, SptError};
use crate::hilbert::{displacement_operator, ladder_operators, ModeSpace, PopulationVector};
use crate::linalg::{self, CMatrix};
use crate::protocol::{self, population_map, ProtocolConfig};

/// Largest trace drift tolerated after one propagation step.
pub const TRACE_TOL: f64 = 1e-8;
/// Most negative eigenvalue tolerated in a propagated density matrix.
pub const POSITIVITY_TOL: f64 = 1e-7;
/// Minimum `Γ·τ_decay` accepted for protocol cycles.
pub const MIN_DECAY_PRODUCT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LindbladConfig {
    /// Detuning Δ of the laser from the electronic transition.
    pub delta: f64,
    pub omega: f64,
    pub eta: f64,
    /// Decay rate Γ of `|e⟩ → |g⟩`.
    pub gamma: f64,
    /// Length of the sideband pulse.
    pub tau: f64,
    /// Length of the measurement and decay window.
    pub tau_decay: f64,
    pub space: ModeSpace,
    pub repetitions: u32,
}

impl LindbladConfig {
    /// Simulation parameters for a protocol run; `tau` is the trapping pulse
    /// length and `tau_decay` defaults to `10/Γ`.
    pub fn from_protocol(protocol: &ProtocolConfig, delta: f64, gamma: f64, tau_decay: Option<f64>) -> Result<Self> {
        protocol.validate()?;
        let tau_decay = match tau_decay {
            Some(t) => t,
            None if gamma > 0.0 => MIN_DECAY_PRODUCT / gamma,
            None => 0.0,
        };
        let cfg = LindbladConfig {
            delta,
            omega: protocol.omega,
            eta: protocol.eta,
            gamma,
            tau: protocol::pulse_time(protocol),
            tau_decay,
            space: protocol.space,
            repetitions: protocol.repetitions,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(SptError::invalid(name, format!("must be finite, got {v}")))
            }
        };
        finite("delta", self.delta)?;
        finite("eta", self.eta)?;
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(SptError::invalid("omega", format!("must be >= 0, got {}", self.omega)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(SptError::invalid("gamma", format!("must be >= 0, got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(SptError::invalid("tau", format!("must be positive, got {}", self.tau)));
        }
        if !(self.tau_decay >= 0.0 && self.tau_decay.is_finite()) {
            return Err(SptError::invalid("tau_decay", format!("must be >= 0, got {}", self.tau_decay)));
        }
        Ok(())
    }

    fn validate_for_cycles(&self) -> Result<()> {
        self.validate()?;
        if self.repetitions == 0 {
            return Err(SptError::invalid("repetitions", "must be at least 1"));
        }
        if self.gamma * self.tau_decay < MIN_DECAY_PRODUCT {
            return Err(SptError::invalid(
                "tau_decay",
                format!(
                    "gamma * tau_decay = {} leaves the ion excited; need at least {MIN_DECAY_PRODUCT}",
                    self.gamma * self.tau_decay
                ),
            ));
        }
        Ok(())
    }

    pub fn joint_dim(&self) -> usize {
        2 * self.space.dim()
    }
}

/// Joint spin ⊗ motion density matrix of size `2·dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDensityMatrix {
    rho: CMatrix,
    dim_m: usize,
}

impl JointDensityMatrix {
    pub fn new(rho: CMatrix, space: ModeSpace) -> Result<Self> {
        let n = 2 * space.dim();
        if rho.dim() != (n, n) {
            return Err(SptError::DimensionMismatch {
                expected: n,
                found: rho.nrows(),
            });
        }
        let out = JointDensityMatrix { rho, dim_m: space.dim() };
        if out.hermiticity_error() > 1e-10 {
            return Err(SptError::invalid("rho", "not Hermitian"));
        }
        if (out.trace() - 1.0).abs() > 1e-10 {
            return Err(SptError::invalid("rho", format!("trace {} is not 1", out.trace())));
        }
        if out.min_eigenvalue() < -1e-9 {
            return Err(SptError::invalid("rho", "not positive semidefinite"));
        }
        Ok(out)
    }

    /// `|g⟩⟨g| ⊗ Σ p_n |n⟩⟨n|`.
    pub fn ground_with_populations(p: &PopulationVector) -> Self {
        let d = p.dim();
        let mut rho = Array2::zeros((2 * d, 2 * d));
        for (n, &pn) in p.probs().iter().enumerate() {
            rho[[n, n]] = Complex64::new(pn, 0.0);
        }
        JointDensityMatrix { rho, dim_m: d }
    }

    /// Pure product state `|s, n⟩`, `excited` selecting `s = e`.
    pub fn basis_state(space: ModeSpace, excited: bool, n: usize) -> Result<Self> {
        if n >= space.dim() {
            return Err(SptError::invalid("n", format!("level {n} outside cutoff {}", space.dim())));
        }
        let d = space.dim();
        let mut rho = Array2::zeros((2 * d, 2 * d));
        let i = if excited { d + n } else { n };
        rho[[i, i]] = Complex64::new(1.0, 0.0);
        Ok(JointDensityMatrix { rho, dim_m: d })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub fn space(&self) -> ModeSpace {
        ModeSpace::new(self.dim_m).expect("dim_m validated at construction")
    }

    pub fn trace(&self) -> f64 {
        self.rho.diag().iter().map(|z| z.re).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        linalg::max_abs_diff(&self.rho, &linalg::dagger(&self.rho))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigenvalues(&self.rho).first().copied().unwrap_or(0.0)
    }

    /// Population of the electronic excited state.
    pub fn excited_population(&self) -> f64 {
        (self.dim_m..2 * self.dim_m).map(|i| self.rho[[i, i]].re).sum()
    }

    /// Fock populations of the motional reduced state (partial trace over
    /// the spin).
    pub fn fock_populations(&self) -> PopulationVector {
        let d = self.dim_m;
        PopulationVector::from_raw((0..d).map(|n| self.rho[[n, n]].re + self.rho[[d + n, d + n]].re).collect())
    }

    fn hermitized(rho: CMatrix, dim_m: usize) -> Self {
        let h = (&rho + &linalg::dagger(&rho)).mapv(|z| z * 0.5);
        JointDensityMatrix { rho: h, dim_m }
    }
}

fn spin_ops(space: ModeSpace) -> (CMatrix, CMatrix) {
    // σ⁺ = |e⟩⟨g| ⊗ 1 and σ_z = (|e⟩⟨e| − |g⟩⟨g|) ⊗ 1
    let d = space.dim();
    let one = linalg::identity(d);
    let mut raise = Array2::zeros((2, 2));
    raise[[1, 0]] = Complex64::new(1.0, 0.0);
    let z = Array2::from_diag(&Array1::from(vec![Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)]));
    (linalg::kron(&raise, &one), linalg::kron(&z, &one))
}

/// `(Δ/2)σ_z + ν a†a` with `ν = 1`.
pub fn free_hamiltonian(cfg: &LindbladConfig) -> CMatrix {
    let (a, a_dag) = ladder_operators(cfg.space);
    let (_, sz) = spin_ops(cfg.space);
    let number = linalg::kron(&linalg::identity(2), &a_dag.dot(&a));
    sz.mapv(|z| z * (cfg.delta / 2.0)) + number
}

/// Full Hamiltonian including the laser coupling.
pub fn full_hamiltonian(cfg: &LindbladConfig) -> Result<CMatrix> {
    let mut h = free_hamiltonian(cfg);
    if cfg.omega == 0.0 {
        return Ok(h);
    }
    // D(iη) = exp(iη a† − (iη)* a) = exp(iη(a + a†))
    let disp = displacement_operator(cfg.space, Complex64::new(0.0, cfg.eta))?;
    let mut raise = Array2::zeros((2, 2));
    raise[[1, 0]] = Complex64::new(1.0, 0.0);
    let coupling = linalg::kron(&raise, &disp);
    let half = Complex64::new(cfg.omega / 2.0, 0.0);
    h.scaled_add(half, &coupling);
    h.scaled_add(half, &linalg::dagger(&coupling));
    Ok(h)
}

fn generator_hamiltonian(cfg: &LindbladConfig, use_hamiltonian: bool) -> Result<CMatrix> {
    if use_hamiltonian {
        full_hamiltonian(cfg)
    } else {
        Ok(free_hamiltonian(cfg))
    }
}

/// Right-hand side `dρ/dt` of the master equation.
///
/// `use_hamiltonian` switches the laser coupling on (`𝓛(Ω, ·)`); without it
/// the free Hamiltonian still acts (`Ω = 0`). `use_dissipator` adds the decay
/// term (`𝓛(·, Γ)`).
pub fn liouvillian_apply(
    cfg: &LindbladConfig,
    rho: &JointDensityMatrix,
    use_hamiltonian: bool,
    use_dissipator: bool,
) -> Result<CMatrix> {
    let h = generator_hamiltonian(cfg, use_hamiltonian)?;
    let r = &rho.rho;
    let mi = Complex64::new(0.0, -1.0);
    let mut out = (h.dot(r) - r.dot(&h)).mapv(|z| z * mi);
    if use_dissipator && cfg.gamma > 0.0 {
        let (raise, _) = spin_ops(cfg.space);
        let lower = linalg::dagger(&raise);
        let pe = raise.dot(&lower);
        let jump = lower.dot(r).dot(&raise).mapv(|z| z * 2.0);
        let diss = jump - pe.dot(r) - r.dot(&pe);
        out.scaled_add(Complex64::new(cfg.gamma / 2.0, 0.0), &diss);
    }
    Ok(out)
}

/// Column-stacked superoperator of [`liouvillian_apply`]:
/// `vec(AXB) = (Bᵀ ⊗ A) vec(X)`.
pub fn liouvillian_superoperator(cfg: &LindbladConfig, use_hamiltonian: bool, use_dissipator: bool) -> Result<CMatrix> {
    let n = cfg.joint_dim();
    let eye = linalg::identity(n);
    let h = generator_hamiltonian(cfg, use_hamiltonian)?;
    let mi = Complex64::new(0.0, -1.0);
    let mut sup = (linalg::kron(&eye, &h) - linalg::kron(&h.t().to_owned(), &eye)).mapv(|z| z * mi);
    if use_dissipator && cfg.gamma > 0.0 {
        let (raise, _) = spin_ops(cfg.space);
        let lower = linalg::dagger(&raise);
        let pe = raise.dot(&lower);
        let jump = linalg::kron(&lower.mapv(|z| z.conj()), &lower).mapv(|z| z * 2.0);
        let diss = jump - linalg::kron(&eye, &pe) - linalg::kron(&pe.t().to_owned(), &eye);
        sup.scaled_add(Complex64::new(cfg.gamma / 2.0, 0.0), &diss);
    }
    Ok(sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolutionMode {
    /// `𝓛(Ω, 0)`: full Hamiltonian, no decay.
    Unitary,
    /// `𝓛(0, Γ)`: free Hamiltonian and decay.
    Dissipative,
    /// `𝓛(Ω, Γ)`.
    Both,
}

/// Linear map `ρ(0) → ρ(t)` for a fixed generator.
///
/// Closed evolution is stored as the Hilbert-space unitary `U`, which is the
/// superoperator `Ū ⊗ U` in factored form; open evolution is stored as the
/// dense superoperator exponential.
#[derive(Debug, Clone)]
pub enum Propagator {
    Unitary(CMatrix),
    Superoperator { matrix: CMatrix, dim_m: usize },
}

impl Propagator {
    pub fn new(cfg: &LindbladConfig, t: f64, mode: EvolutionMode) -> Result<Self> {
        cfg.validate()?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(SptError::invalid("t", format!("must be >= 0, got {t}")));
        }
        let gamma_active = cfg.gamma > 0.0 && mode != EvolutionMode::Unitary;
        if !gamma_active {
            let h = generator_hamiltonian(cfg, mode != EvolutionMode::Dissipative)?;
            let u = linalg::expm(&h.mapv(|z| z * Complex64::new(0.0, -t)))?;
            return Ok(Propagator::Unitary(u));
        }
        let sup = liouvillian_superoperator(cfg, mode == EvolutionMode::Both, true)?;
        let matrix = linalg::expm(&sup.mapv(|z| z * t))?;
        Ok(Propagator::Superoperator {
            matrix,
            dim_m: cfg.space.dim(),
        })
    }

    /// Dense superoperator form, `(2·dim)² × (2·dim)²`.
    pub fn superoperator(&self) -> CMatrix {
        match self {
            Propagator::Unitary(u) => linalg::kron(&u.mapv(|z| z.conj()), u),
            Propagator::Superoperator { matrix, .. } => matrix.clone(),
        }
    }

    /// Applies the map and checks the result: Hermitian part kept, trace
    /// within [`TRACE_TOL`].
    pub fn apply(&self, rho: &JointDensityMatrix) -> Result<JointDensityMatrix> {
        let n = rho.rho.nrows();
        let out = match self {
            Propagator::Unitary(u) => {
                if u.nrows() != n {
                    return Err(SptError::DimensionMismatch {
                        expected: u.nrows(),
                        found: n,
                    });
                }
                u.dot(&rho.rho).dot(&linalg::dagger(u))
            }
            Propagator::Superoperator { matrix, dim_m } => {
                if 2 * dim_m != n {
                    return Err(SptError::DimensionMismatch {
                        expected: 2 * dim_m,
                        found: n,
                    });
                }
                let v = Array1::from_iter(rho.rho.t().iter().copied());
                let w = matrix.dot(&v);
                Array2::from_shape_vec((n, n), w.to_vec())
                    .map_err(|e| SptError::Numerical(e.to_string()))?
                    .reversed_axes()
                    .as_standard_layout()
                    .to_owned()
            }
        };
        if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SptError::Numerical("propagated density matrix is not finite".into()));
        }
        let out = JointDensityMatrix::hermitized(out, rho.dim_m);
        let drift = (out.trace() - rho.trace()).abs();
        if drift > TRACE_TOL {
            return Err(SptError::Numerical(format!("trace drifted by {drift:e} in one step")));
        }
        Ok(out)
    }
}

/// `ρ(t)` under the selected generator.
pub fn evolve(cfg: &LindbladConfig, rho0: &JointDensityMatrix, t: f64, mode: EvolutionMode) -> Result<JointDensityMatrix> {
    if rho0.dim_m != cfg.space.dim() {
        return Err(SptError::DimensionMismatch {
            expected: cfg.space.dim(),
            found: rho0.dim_m,
        });
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    Propagator::new(cfg, t, mode)?.apply(rho0)
}

/// Closed evolution for time `t`, returned in the interaction picture of the
/// free Hamiltonian: `e^{iH₀t} e^{−iHt} ρ e^{iHt} e^{−iH₀t}`.
pub fn evolve_interaction_frame(cfg: &LindbladConfig, rho0: &JointDensityMatrix, t: f64) -> Result<JointDensityMatrix> {
    let h = full_hamiltonian(cfg)?;
    let u = linalg::expm(&h.mapv(|z| z * Complex64::new(0.0, -t)))?;
    let h0 = free_hamiltonian(cfg);
    let phases = Array2::from_diag(&Array1::from_iter(h0.diag().iter().map(|e| Complex64::new(0.0, e.re * t).exp())));
    Propagator::Unitary(phases.dot(&u)).apply(rho0)
}

#[derive(Debug, Clone)]
pub struct CycleRun {
    /// Fock populations after each cycle; entry 0 is the initial state.
    pub history: Vec<PopulationVector>,
    /// Excited-state population left at the end of each reset window.
    pub excited_after_reset: Vec<f64>,
    /// Largest trace deviation from 1 seen over the run.
    pub max_trace_error: f64,
    /// Smallest density-matrix eigenvalue seen over the run.
    pub min_eigenvalue: f64,
    pub final_state: JointDensityMatrix,
}

/// Precomputed pair of cycle propagators for one parameter set.
#[derive(Debug, Clone)]
pub struct CyclePropagators {
    pulse: Propagator,
    reset: Propagator,
}

impl CyclePropagators {
    pub fn new(cfg: &LindbladConfig) -> Result<Self> {
        cfg.validate_for_cycles()?;
        Ok(CyclePropagators {
            pulse: Propagator::new(cfg, cfg.tau, EvolutionMode::Unitary)?,
            reset: Propagator::new(cfg, cfg.tau_decay, EvolutionMode::Dissipative)?,
        })
    }

    pub fn run(&self, rho0: &JointDensityMatrix, repetitions: u32) -> Result<CycleRun> {
        let mut rho = rho0.clone();
        let mut history = Vec::with_capacity(repetitions as usize + 1);
        let mut excited_after_reset = Vec::with_capacity(repetitions as usize);
        history.push(rho.fock_populations());
        let mut max_trace_error = (rho.trace() - 1.0).abs();
        let mut min_eigenvalue = rho.min_eigenvalue();
        for cycle in 1..=repetitions {
            rho = self.reset.apply(&self.pulse.apply(&rho)?)?;
            let ev = rho.min_eigenvalue();
            if ev < -POSITIVITY_TOL {
                return Err(SptError::Numerical(format!(
                    "density matrix lost positivity in cycle {cycle} (eigenvalue {ev:e})"
                )));
            }
            max_trace_error = max_trace_error.max((rho.trace() - 1.0).abs());
            min_eigenvalue = min_eigenvalue.min(ev);
            excited_after_reset.push(rho.excited_population());
            history.push(rho.fock_populations());
        }
        Ok(CycleRun {
            history,
            excited_after_reset,
            max_trace_error,
            min_eigenvalue,
            final_state: rho,
        })
    }
}

/// Applies `𝓔_d(τ_decay)·𝓔_u(τ)` `cfg.repetitions` times.
pub fn spt_cycle_run(cfg: &LindbladConfig, rho0: &JointDensityMatrix) -> Result<CycleRun> {
    if rho0.dim_m != cfg.space.dim() {
        return Err(SptError::DimensionMismatch {
            expected: cfg.space.dim(),
            found: rho0.dim_m,
        });
    }
    CyclePropagators::new(cfg)?.run(rho0, cfg.repetitions)
}

/// Per-cycle total-variation distance between simulated populations and the
/// ideal prediction `𝔈^k p0`, for `k = 0, 1, …`.
pub fn compare_to_ideal(history: &[PopulationVector], protocol: &ProtocolConfig, p0: &PopulationVector) -> Result<Vec<f64>> {
    let map = population_map(&protocol::kraus_pair(protocol));
    if p0.dim() != map.dim() {
        return Err(SptError::DimensionMismatch {
            expected: map.dim(),
            found: p0.dim(),
        });
    }
    let mut ideal = p0.clone();
    let mut out = Vec::with_capacity(history.len());
    for (k, sim) in history.iter().enumerate() {
        if k > 0 {
            ideal = map.apply(&ideal)?;
        }
        out.push(sim.tv_distance(&ideal)?);
    }
    Ok(out)
}
