//! Diffusion coefficients of the collective Langevin forces from Einstein
//! relations evaluated in the zeroth-order steady state.
//!
//! `⟨F_μ(t) F_ν(t')⟩ = 2 D_μν δ(t - t')` per atom. For the continuum fields the
//! slice-averaged forces carry an extra `c / N` (see [`spatial_scale`]).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{c, zeros, CMat};
use crate::params::{DerivedParams, PhysicalParams, SPEED_OF_LIGHT};
use crate::steady_state::{ket_bra, BlochGenerator, DensityMatrix3, M3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("invalid pair count {0}: need at least one field pair")]
    InvalidPairCount(usize),
}

/// Langevin force `F_ab` attached to the coherence `σ_ab`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseChannel {
    F12,
    F21,
    F13,
    F31,
    F23,
    F32,
}

impl NoiseChannel {
    pub const ALL: [NoiseChannel; 6] = [
        NoiseChannel::F12,
        NoiseChannel::F21,
        NoiseChannel::F13,
        NoiseChannel::F31,
        NoiseChannel::F23,
        NoiseChannel::F32,
    ];

    pub fn levels(self) -> (usize, usize) {
        match self {
            NoiseChannel::F12 => (1, 2),
            NoiseChannel::F21 => (2, 1),
            NoiseChannel::F13 => (1, 3),
            NoiseChannel::F31 => (3, 1),
            NoiseChannel::F23 => (2, 3),
            NoiseChannel::F32 => (3, 2),
        }
    }

    /// `F_ab† = F_ba`.
    pub fn conjugate(self) -> Self {
        let (a, b) = self.levels();
        Self::from_levels(b, a).expect("closed under transpose")
    }

    pub fn from_levels(a: usize, b: usize) -> Option<Self> {
        Self::ALL.into_iter().find(|ch| ch.levels() == (a, b))
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&ch| ch == self).unwrap()
    }

    pub fn label(self) -> &'static str {
        match self {
            NoiseChannel::F12 => "F12",
            NoiseChannel::F21 => "F21",
            NoiseChannel::F13 => "F13",
            NoiseChannel::F31 => "F31",
            NoiseChannel::F23 => "F23",
            NoiseChannel::F32 => "F32",
        }
    }

    fn operator(self) -> M3 {
        let (a, b) = self.levels();
        ket_bra(a, b)
    }
}

/// How the diffusion coefficients are obtained from the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DiffusionModel {
    /// Stationary Einstein relation with the linear damping `-Γ_μ σ_μ` that
    /// the first-order coherence equations carry:
    /// `2D_μν = (Γ_μ + Γ_ν) ⟨σ_μ σ_ν⟩`.
    #[default]
    FirstOrder,
    /// `2D_μν = ⟨L(σ_μ σ_ν)⟩ - ⟨L(σ_μ) σ_ν⟩ - ⟨σ_μ L(σ_ν)⟩` with the full
    /// dissipative Heisenberg generator, including repopulation terms.
    FullGenerator,
}

/// Whether different field pairs see the same Langevin forces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReservoirSharing {
    /// One reservoir per field pair.
    #[default]
    Independent,
    /// The same spectral force component drives every pair.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionMatrix {
    pub model: DiffusionModel,
    /// `2D_μν` in [`NoiseChannel::ALL`] order.
    pub two_d: CMat,
}

impl DiffusionMatrix {
    /// `2D_μν`, the coefficient of `⟨F_μ F_ν⟩`.
    pub fn two_d(&self, mu: NoiseChannel, nu: NoiseChannel) -> Complex64 {
        self.two_d[(mu.index(), nu.index())]
    }

    pub fn d(&self, mu: NoiseChannel, nu: NoiseChannel) -> Complex64 {
        self.two_d(mu, nu) * 0.5
    }

    /// `⟨F_μ F_ν†⟩` over all six channels; a Gram matrix, hence PSD.
    pub fn doubled_basis(&self) -> CMat {
        let mut g = zeros(6, 6);
        for mu in NoiseChannel::ALL {
            for nu in NoiseChannel::ALL {
                g[(mu.index(), nu.index())] = self.two_d(mu, nu.conjugate());
            }
        }
        g
    }

    /// `max |D_μν - conj(D_ν̄μ̄)|`.
    pub fn conjugation_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for mu in NoiseChannel::ALL {
            for nu in NoiseChannel::ALL {
                let lhs = self.two_d(mu, nu);
                let rhs = self.two_d(nu.conjugate(), mu.conjugate()).conj();
                worst = worst.max((lhs - rhs).norm());
            }
        }
        worst
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            model: self.model,
            two_d: &self.two_d * c(factor),
        }
    }
}

/// Damping rate of `σ_ab` in the first-order equations.
fn coherence_rate(ch: NoiseChannel, p: &PhysicalParams) -> f64 {
    match ch {
        NoiseChannel::F12 | NoiseChannel::F21 => p.gamma0,
        _ => p.gamma_optical(),
    }
}

pub fn diffusion_matrix(ss: &DensityMatrix3, p: &PhysicalParams) -> DiffusionMatrix {
    diffusion_matrix_with(ss, p, DiffusionModel::default())
}

pub fn diffusion_matrix_with(
    ss: &DensityMatrix3,
    p: &PhysicalParams,
    model: DiffusionModel,
) -> DiffusionMatrix {
    let gen = BlochGenerator::new(p);
    let mut two_d = zeros(6, 6);
    for mu in NoiseChannel::ALL {
        let smu = mu.operator();
        for nu in NoiseChannel::ALL {
            let snu = nu.operator();
            let prod = smu * snu;
            let value = match model {
                DiffusionModel::FirstOrder => {
                    ss.expect(&prod) * (coherence_rate(mu, p) + coherence_rate(nu, p))
                }
                DiffusionModel::FullGenerator => {
                    ss.expect(&gen.dissipator_adjoint(&prod))
                        - ss.expect(&(gen.dissipator_adjoint(&smu) * snu))
                        - ss.expect(&(smu * gen.dissipator_adjoint(&snu)))
                }
            };
            two_d[(mu.index(), nu.index())] = value;
        }
    }
    DiffusionMatrix { model, two_d }
}

/// Factor converting per-atom `2D` into the strength of the slice-averaged
/// force that enters the field equations: `c / N`.
pub fn spatial_scale(d: &DerivedParams) -> f64 {
    SPEED_OF_LIGHT / d.n_atoms
}

/// One entry of the stacked noise vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSource {
    pub channel: NoiseChannel,
    pub reservoir: usize,
}

/// Noise vector used by the field equations: `[F13, F31, F23, F32]` per reservoir.
pub fn noise_basis_for_pairs(
    n_pairs: usize,
    sharing: ReservoirSharing,
) -> Result<Vec<NoiseSource>, NoiseError> {
    if n_pairs == 0 {
        return Err(NoiseError::InvalidPairCount(0));
    }
    let reservoirs = match sharing {
        ReservoirSharing::Shared => 1,
        ReservoirSharing::Independent => n_pairs,
    };
    let channels = [
        NoiseChannel::F13,
        NoiseChannel::F31,
        NoiseChannel::F23,
        NoiseChannel::F32,
    ];
    Ok((0..reservoirs)
        .flat_map(|reservoir| channels.map(|channel| NoiseSource { channel, reservoir }))
        .collect())
}

/// Symmetrized `⟨{f_μ, f_ν†}⟩` and commutator `⟨[f_μ, f_ν†]⟩` matrices of the
/// stacked noise vector, each multiplied by `scale`.
pub fn source_covariances(
    dm: &DiffusionMatrix,
    sources: &[NoiseSource],
    scale: f64,
) -> (CMat, CMat) {
    let n = sources.len();
    let mut sym = zeros(n, n);
    let mut comm = zeros(n, n);
    for (i, si) in sources.iter().enumerate() {
        for (j, sj) in sources.iter().enumerate() {
            if si.reservoir != sj.reservoir {
                continue;
            }
            let fwd = dm.two_d(si.channel, sj.channel.conjugate());
            let bwd = dm.two_d(sj.channel.conjugate(), si.channel);
            sym[(i, j)] = (fwd + bwd) * scale;
            comm[(i, j)] = (fwd - bwd) * scale;
        }
    }
    (sym, comm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_hermitian_eigenvalue;
    use crate::params::reference_params;
    use crate::steady_state::steady_state;
    use proptest::prelude::*;

    #[test]
    fn channel_set_is_closed_under_conjugation() {
        for ch in NoiseChannel::ALL {
            assert_eq!(ch.conjugate().conjugate(), ch);
            let (a, b) = ch.levels();
            assert_eq!(ch.conjugate().levels(), (b, a));
        }
    }

    #[test]
    fn closed_system_has_no_noise() {
        let mut p = reference_params();
        p.gamma0 = 0.0;
        p.gamma1 = 0.0;
        p.gamma2 = 0.0;
        let ss = DensityMatrix3::pure([c(1.0), c(0.3), c(0.2)]);
        for model in [DiffusionModel::FirstOrder, DiffusionModel::FullGenerator] {
            let dm = diffusion_matrix_with(&ss, &p, model);
            assert!(dm.two_d.iter().all(|z| *z == c(0.0)));
        }
    }

    #[test]
    fn decaying_coherence_from_ground_one() {
        // With only |1⟩ occupied, ⟨F13 F31⟩ comes from the decay of σ13 alone:
        // 2D = 2 γ13 = γ1 + γ2.
        let mut p = reference_params();
        p.omega_p = 0.0;
        p.omega_c = 0.0;
        p.gamma1 = 2.0;
        p.gamma2 = 4.0;
        let ss = DensityMatrix3::new(ket_bra(1, 1));
        for model in [DiffusionModel::FirstOrder, DiffusionModel::FullGenerator] {
            let dm = diffusion_matrix_with(&ss, &p, model);
            assert!((dm.d(NoiseChannel::F13, NoiseChannel::F31) - c(3.0)).norm() < 1e-14);
            assert_eq!(dm.two_d(NoiseChannel::F31, NoiseChannel::F13), c(0.0));
        }
    }

    #[test]
    fn hamiltonian_drops_out_of_einstein_relation() {
        let p = reference_params();
        let ss = steady_state(&p).unwrap();
        let gen = BlochGenerator::new(&p);
        let dm = diffusion_matrix_with(&ss, &p, DiffusionModel::FullGenerator);
        for mu in NoiseChannel::ALL {
            for nu in NoiseChannel::ALL {
                let (a, b) = (mu.operator(), nu.operator());
                let full = ss.expect(&gen.apply_adjoint(&(a * b)))
                    - ss.expect(&(gen.apply_adjoint(&a) * b))
                    - ss.expect(&(a * gen.apply_adjoint(&b)));
                assert!((full - dm.two_d(mu, nu)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn first_order_matches_closed_form() {
        let p = reference_params();
        let ss = steady_state(&p).unwrap();
        let dm = diffusion_matrix(&ss, &p);
        let g = p.gamma_optical();
        let s = |a, b| ss.sigma(a, b);
        assert!(
            (dm.two_d(NoiseChannel::F13, NoiseChannel::F31) - s(1, 1) * (2.0 * g)).norm() < 1e-15
        );
        assert!(
            (dm.two_d(NoiseChannel::F31, NoiseChannel::F13) - s(3, 3) * (2.0 * g)).norm() < 1e-15
        );
        assert!(
            (dm.two_d(NoiseChannel::F13, NoiseChannel::F32) - s(1, 2) * (2.0 * g)).norm() < 1e-15
        );
        assert!(
            (dm.two_d(NoiseChannel::F12, NoiseChannel::F21) - s(1, 1) * (2.0 * p.gamma0)).norm()
                < 1e-15
        );
    }

    #[test]
    fn reference_diffusion_is_psd() {
        let p = reference_params();
        let ss = steady_state(&p).unwrap();
        let dm = diffusion_matrix(&ss, &p);
        assert!(min_hermitian_eigenvalue(&dm.doubled_basis()) > -1e-10);
        assert!(dm.conjugation_asymmetry() < 1e-14);
    }

    #[test]
    fn full_generator_is_not_positive_under_strong_dephasing() {
        // Dephasing that acts on σ12 alone is not a completely positive map, and
        // the literal Einstein relation inherits a negative direction from it.
        let mut p = reference_params();
        p.gamma0 = 50.0;
        let ss = steady_state(&p).unwrap();
        let full = diffusion_matrix_with(&ss, &p, DiffusionModel::FullGenerator);
        assert!(min_hermitian_eigenvalue(&full.doubled_basis()) < -1e-5);
        let first = diffusion_matrix(&ss, &p);
        assert!(min_hermitian_eigenvalue(&first.doubled_basis()) > 0.0);
    }

    #[test]
    fn pair_bases() {
        let one = noise_basis_for_pairs(1, ReservoirSharing::Shared).unwrap();
        let chans: Vec<_> = one.iter().map(|s| s.channel).collect();
        assert_eq!(
            chans,
            [
                NoiseChannel::F13,
                NoiseChannel::F31,
                NoiseChannel::F23,
                NoiseChannel::F32
            ]
        );
        assert_eq!(
            noise_basis_for_pairs(2, ReservoirSharing::Shared).unwrap(),
            one
        );
        let ind = noise_basis_for_pairs(2, ReservoirSharing::Independent).unwrap();
        assert_eq!(ind.len(), 8);
        assert_eq!(ind[4].reservoir, 1);
        assert_eq!(
            noise_basis_for_pairs(0, ReservoirSharing::Shared),
            Err(NoiseError::InvalidPairCount(0))
        );
    }

    #[test]
    fn optical_commutators_follow_inversion() {
        let p = reference_params();
        let ss = steady_state(&p).unwrap();
        let dm = diffusion_matrix(&ss, &p);
        let src = noise_basis_for_pairs(1, ReservoirSharing::Shared).unwrap();
        let (_, comm) = source_covariances(&dm, &src, 1.0);
        let g2 = 2.0 * p.gamma_optical();
        assert!((comm[(0, 0)] - (ss.sigma(1, 1) - ss.sigma(3, 3)) * g2).norm() < 1e-15);
        assert!((comm[(2, 2)] - (ss.sigma(2, 2) - ss.sigma(3, 3)) * g2).norm() < 1e-15);
        assert!((comm[(0, 2)] - ss.sigma(1, 2) * g2).norm() < 1e-15);
        assert!((comm[(1, 1)] + comm[(0, 0)].conj()).norm() < 1e-15);
    }

    fn arb_params() -> impl Strategy<Value = PhysicalParams> {
        (
            0.1f64..20.0,
            0.1f64..20.0,
            0.0f64..50.0,
            1.0f64..800.0,
            1.0f64..800.0,
        )
            .prop_map(|(g1, g2, g0, op, oc)| {
                let mut p = reference_params();
                p.gamma1 = g1;
                p.gamma2 = g2;
                p.gamma0 = g0;
                p.omega_p = op;
                p.omega_c = oc;
                p
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn conjugation_symmetry_and_first_order_psd(p in arb_params()) {
            let ss = steady_state(&p).unwrap();
            for model in [DiffusionModel::FirstOrder, DiffusionModel::FullGenerator] {
                let dm = diffusion_matrix_with(&ss, &p, model);
                prop_assert!(dm.conjugation_asymmetry() < 1e-12);
            }
            let ev = min_hermitian_eigenvalue(&diffusion_matrix(&ss, &p).doubled_basis());
            prop_assert!(ev > -1e-10, "{}", ev);
        }

        #[test]
        fn relabeling_symmetry(p in arb_params()) {
            let mut q = p.clone();
            std::mem::swap(&mut q.omega_p, &mut q.omega_c);
            std::mem::swap(&mut q.gamma1, &mut q.gamma2);
            let ss_p = steady_state(&p).unwrap();
            let ss_q = steady_state(&q).unwrap();
            let perm = |l: usize| [2usize, 1, 3][l - 1];
            let sign = |l: usize| if l == 3 { -1.0 } else { 1.0 };
            let map = |ch: NoiseChannel| {
                let (a, b) = ch.levels();
                (NoiseChannel::from_levels(perm(a), perm(b)).unwrap(), sign(a) * sign(b))
            };
            for model in [DiffusionModel::FirstOrder, DiffusionModel::FullGenerator] {
                let dp = diffusion_matrix_with(&ss_p, &p, model);
                let dq = diffusion_matrix_with(&ss_q, &q, model);
                for mu in NoiseChannel::ALL {
                    for nu in NoiseChannel::ALL {
                        let (pm, sm) = map(mu);
                        let (pn, sn) = map(nu);
                        let diff = dq.two_d(pm, pn) - dp.two_d(mu, nu) * (sm * sn);
                        prop_assert!(diff.norm() < 1e-10, "{:?} {:?}: {}", mu, nu, diff);
                    }
                }
            }
        }
    }
}
