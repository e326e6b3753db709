//! Zeroth-order steady state of the resonantly driven Λ system.
//!
//! Operator convention: `σ_ab = |a⟩⟨b|`, so the mean value `⟨σ_ab⟩` equals
//! the density-matrix element `ρ_ba`. Levels are 1-based in the public API.
//!
//! Hamiltonian (interaction picture, resonant drives, no 1/2 factors):
//!
//! `H = -Ω_c (|3⟩⟨1| + |1⟩⟨3|) + Ω_p (|3⟩⟨2| + |2⟩⟨3|)`
//!
//! The probe carries a relative phase of π. With this choice the dark state
//! is `(Ω_p|1⟩ + Ω_c|2⟩)/norm` and `⟨σ_12⟩ > 0` at equal Rabi frequencies.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{c, zeros, CMat, I};
use crate::ode::{dopri5, Tolerances};
use crate::params::PhysicalParams;

pub type M3 = Matrix3<Complex64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteadyStateError {
    #[error("steady state is not unique: kernel dimension {dim}")]
    DegenerateSteadyState { dim: usize },
    #[error("ODE oracle did not converge: drift norm {drift_norm:.3e} at t = {t_max}")]
    NonConvergence { drift_norm: f64, t_max: f64 },
}

/// Dephasing, decay and drive data of the three-level atom.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochGenerator {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma0: f64,
    pub hamiltonian: M3,
}

/// `|a⟩⟨b|` for 1-based levels.
pub fn ket_bra(a: usize, b: usize) -> M3 {
    let mut m = M3::zeros();
    m[(a - 1, b - 1)] = c(1.0);
    m
}

impl BlochGenerator {
    pub fn new(p: &PhysicalParams) -> Self {
        let drive = ket_bra(3, 1) * c(-p.omega_c) + ket_bra(3, 2) * c(p.omega_p);
        Self {
            gamma1: p.gamma1,
            gamma2: p.gamma2,
            gamma0: p.gamma0,
            hamiltonian: drive + drive.adjoint(),
        }
    }

    fn jumps(&self) -> [(f64, M3); 2] {
        [(self.gamma1, ket_bra(1, 3)), (self.gamma2, ket_bra(2, 3))]
    }

    /// `dρ/dt` in the Schrödinger picture.
    pub fn apply(&self, rho: &M3) -> M3 {
        let h = &self.hamiltonian;
        let mut d = (h * rho - rho * h) * (-I);
        for (g, l) in self.jumps() {
            let ld = l.adjoint();
            let ldl = ld * l;
            d += (l * rho * ld - (ldl * rho + rho * ldl) * c(0.5)) * c(g);
        }
        d[(0, 1)] -= rho[(0, 1)] * self.gamma0;
        d[(1, 0)] -= rho[(1, 0)] * self.gamma0;
        d
    }

    /// Dissipative part of the Heisenberg-picture generator.
    pub fn dissipator_adjoint(&self, x: &M3) -> M3 {
        let mut d = M3::zeros();
        for (g, l) in self.jumps() {
            let ld = l.adjoint();
            let ldl = ld * l;
            d += (ld * x * l - (ldl * x + x * ldl) * c(0.5)) * c(g);
        }
        d[(0, 1)] -= x[(0, 1)] * self.gamma0;
        d[(1, 0)] -= x[(1, 0)] * self.gamma0;
        d
    }

    /// Full Heisenberg-picture generator: `Tr(ρ L†(X)) = Tr(L(ρ) X)`.
    pub fn apply_adjoint(&self, x: &M3) -> M3 {
        let h = &self.hamiltonian;
        (h * x - x * h) * I + self.dissipator_adjoint(x)
    }

    /// Liouvillian acting on the row-major vectorization `ρ_ab -> 3a + b`.
    pub fn liouvillian(&self) -> CMat {
        let mut l = zeros(9, 9);
        for k in 0..9 {
            let mut basis = M3::zeros();
            basis[(k / 3, k % 3)] = c(1.0);
            let col = self.apply(&basis);
            for r in 0..9 {
                l[(r, k)] = col[(r / 3, r % 3)];
            }
        }
        l
    }
}

/// Zeroth-order density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix3 {
    pub rho: M3,
}

impl DensityMatrix3 {
    pub fn new(rho: M3) -> Self {
        Self { rho }
    }

    pub fn pure(amplitudes: [Complex64; 3]) -> Self {
        let v = nalgebra::Vector3::from(amplitudes);
        let norm = v.norm();
        let v = v / c(norm);
        Self {
            rho: v * v.adjoint(),
        }
    }

    /// `⟨σ_ab⟩ = ρ_ba`, 1-based.
    pub fn sigma(&self, a: usize, b: usize) -> Complex64 {
        self.rho[(b - 1, a - 1)]
    }

    /// Expectation value `Tr(ρ X)`.
    pub fn expect(&self, x: &M3) -> Complex64 {
        (self.rho * x).trace()
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.rho - self.rho.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.rho + self.rho.adjoint()) * c(0.5);
        h.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.rho - other.rho)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Image under the level exchange 1 <-> 2 combined with `|3⟩ -> -|3⟩`,
    /// which is the symmetry of the drive under `Ω_p <-> Ω_c`.
    pub fn swapped(&self) -> Self {
        let perm = [1usize, 0, 2];
        let sign = [1.0, 1.0, -1.0];
        let mut out = M3::zeros();
        for a in 0..3 {
            for b in 0..3 {
                out[(a, b)] = self.rho[(perm[a], perm[b])] * (sign[a] * sign[b]);
            }
        }
        Self { rho: out }
    }

    /// Flattened as `[re, im]` pairs, row-major.
    fn to_real(self) -> [f64; 18] {
        let mut out = [0.0; 18];
        for k in 0..9 {
            let z = self.rho[(k / 3, k % 3)];
            out[2 * k] = z.re;
            out[2 * k + 1] = z.im;
        }
        out
    }

    fn from_real(v: &[f64]) -> Self {
        let mut rho = M3::zeros();
        for k in 0..9 {
            rho[(k / 3, k % 3)] = Complex64::new(v[2 * k], v[2 * k + 1]);
        }
        Self { rho }
    }
}

pub fn bloch_drift(rho: &DensityMatrix3, p: &PhysicalParams) -> M3 {
    BlochGenerator::new(p).apply(&rho.rho)
}

pub fn drift_norm(rho: &DensityMatrix3, p: &PhysicalParams) -> f64 {
    bloch_drift(rho, p)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Relative singular-value threshold for the kernel-dimension test.
const KERNEL_RTOL: f64 = 1e-11;

pub fn steady_state(p: &PhysicalParams) -> Result<DensityMatrix3, SteadyStateError> {
    let l = BlochGenerator::new(p).liouvillian();

    let sv = l.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let dim = sv
        .iter()
        .filter(|&&s| s <= KERNEL_RTOL * smax.max(1.0))
        .count();
    if dim != 1 {
        return Err(SteadyStateError::DegenerateSteadyState { dim });
    }

    // The ρ11 equation is redundant (trace preservation); replace it by Tr ρ = 1.
    let mut a = l;
    let mut rhs = nalgebra::DVector::<Complex64>::zeros(9);
    for k in 0..9 {
        a[(0, k)] = c(0.0);
    }
    for k in [0, 4, 8] {
        a[(0, k)] = c(1.0);
    }
    rhs[0] = c(1.0);
    let x = a
        .lu()
        .solve(&rhs)
        .ok_or(SteadyStateError::DegenerateSteadyState { dim: 0 })?;

    let mut rho = M3::zeros();
    for k in 0..9 {
        rho[(k / 3, k % 3)] = x[k];
    }
    let rho = (rho + rho.adjoint()) * c(0.5);
    Ok(DensityMatrix3 { rho })
}

/// The drive-decoupled superposition `(Ωp|1⟩ + Ωc|2⟩)/norm`.
pub fn dark_state(p: &PhysicalParams) -> DensityMatrix3 {
    DensityMatrix3::pure([c(p.omega_p), c(p.omega_c), c(0.0)])
}

/// Steady state by long-time integration from `|1⟩⟨1|`.
pub fn steady_state_ode_oracle(
    p: &PhysicalParams,
    t_max: f64,
) -> Result<DensityMatrix3, SteadyStateError> {
    let gen = BlochGenerator::new(p);
    let mut y = DensityMatrix3::new(ket_bra(1, 1)).to_real();
    let tol = Tolerances {
        rtol: 1e-11,
        atol: 1e-13,
        ..Tolerances::default()
    };
    let stats = dopri5(
        |y, dy| {
            let d = gen.apply(&DensityMatrix3::from_real(y).rho);
            dy.copy_from_slice(&DensityMatrix3 { rho: d }.to_real());
        },
        &mut y,
        t_max,
        tol,
    );
    let rho = DensityMatrix3::from_real(&y);
    let norm = drift_norm(&rho, p);
    if !stats.completed || norm > 1e-6 {
        return Err(SteadyStateError::NonConvergence {
            drift_norm: norm,
            t_max,
        });
    }
    Ok(rho)
}
