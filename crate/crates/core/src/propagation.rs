//! Fourier-domain input-output propagation of the field modes over `[0, L]`.
//!
//! The field vector is doubled: `X = (f_1, ..., f_n, f_1†, ..., f_n†)`, with
//! daggered operators taken at the same ω (coefficient conjugation). The
//! homogeneous medium gives `dX/dz = M X + Q f`, so `T = exp(M L)` and the
//! Langevin contribution is `∫ e^{M s} Q B Q† e^{M† s} ds`.
//!
//! Covariances are normalized so that vacuum has `Σ = ⟨{X, X†}⟩ = I` and
//! commutator matrix `J = diag(I, -I)`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::langevin_noise::{
    noise_basis_for_pairs, NoiseChannel, NoiseError, NoiseSource, ReservoirSharing,
};
use crate::linalg::{block_diag, c, expm, identity, max_abs, norm1, zeros, CMat, I};
use crate::params::{DerivedParams, PhysicalParams, SPEED_OF_LIGHT};
use crate::steady_state::DensityMatrix3;

pub const DEFAULT_GAIN_CEILING: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PropagationError {
    #[error("transfer gain {gain:.3e} exceeds ceiling {ceiling:.1e} at omega = {omega} MHz")]
    NumericalOverflow { omega: f64, gain: f64, ceiling: f64 },
}

/// Optical transition a field mode couples to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transition {
    T13,
    T23,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeKind {
    /// Generated Stokes / anti-Stokes field, vacuum input.
    A,
    /// Scattering field, coherent input.
    B,
}

/// `a{k}` or `b{k}` with 1-based pair index `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeLabel {
    pub kind: ModeKind,
    pub pair: usize,
}

impl ModeLabel {
    pub const A1: Self = Self {
        kind: ModeKind::A,
        pair: 1,
    };
    pub const B1: Self = Self {
        kind: ModeKind::B,
        pair: 1,
    };
    pub const A2: Self = Self {
        kind: ModeKind::A,
        pair: 2,
    };
    pub const B2: Self = Self {
        kind: ModeKind::B,
        pair: 2,
    };
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            ModeKind::A => 'a',
            ModeKind::B => 'b',
        };
        write!(f, "{k}{}", self.pair)
    }
}

impl FromStr for ModeLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.chars().next() {
            Some('a') => ModeKind::A,
            Some('b') => ModeKind::B,
            _ => return Err(format!("unknown mode `{s}`")),
        };
        let pair: usize = s[1..].parse().map_err(|_| format!("unknown mode `{s}`"))?;
        if pair == 0 {
            return Err(format!("unknown mode `{s}`"));
        }
        Ok(Self { kind, pair })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InputState {
    Vacuum,
    Coherent(Complex64),
}

impl InputState {
    pub fn mean(&self) -> Complex64 {
        match self {
            InputState::Vacuum => c(0.0),
            InputState::Coherent(a) => *a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMode {
    pub label: ModeLabel,
    pub transition: Transition,
    pub pair: usize,
    pub detuning: f64,
    pub input: InputState,
}

/// Ordered field modes: per pair `[1-3 mode, 2-3 mode]`.
///
/// Odd pairs put `a` on 1-3 and `b` on 2-3, even pairs the reverse, so the
/// default two-pair layout is `[a1, b1, b2, a2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeLayout {
    pub modes: Vec<FieldMode>,
    pub sharing: ReservoirSharing,
    pub sources: Vec<NoiseSource>,
}

impl ModeLayout {
    /// `n_pairs` pairs with detunings `Δ1, Δ2` as in the parameter set.
    pub fn from_params(
        p: &PhysicalParams,
        n_pairs: usize,
        sharing: ReservoirSharing,
    ) -> Result<Self, NoiseError> {
        if !(1..=2).contains(&n_pairs) {
            return Err(NoiseError::InvalidPairCount(n_pairs));
        }
        let pairs = [(p.delta1, p.alpha1), (p.delta2, p.alpha2)];
        Self::with_pairs(&pairs[..n_pairs], sharing)
    }

    /// Arbitrary number of pairs given `(detuning, α)` per pair.
    pub fn with_pairs(
        pairs: &[(f64, Complex64)],
        sharing: ReservoirSharing,
    ) -> Result<Self, NoiseError> {
        let sources = noise_basis_for_pairs(pairs.len(), sharing)?;
        let mut modes = Vec::with_capacity(2 * pairs.len());
        for (k, &(detuning, alpha)) in pairs.iter().enumerate() {
            let pair = k + 1;
            let (first, second) = if pair % 2 == 1 {
                (ModeKind::A, ModeKind::B)
            } else {
                (ModeKind::B, ModeKind::A)
            };
            for (kind, transition) in [(first, Transition::T13), (second, Transition::T23)] {
                let input = match kind {
                    ModeKind::A => InputState::Vacuum,
                    ModeKind::B => InputState::Coherent(alpha),
                };
                modes.push(FieldMode {
                    label: ModeLabel { kind, pair },
                    transition,
                    pair,
                    detuning,
                    input,
                });
            }
        }
        Ok(Self {
            modes,
            sharing,
            sources,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.modes.len() / 2
    }

    pub fn index_of(&self, label: ModeLabel) -> Option<usize> {
        self.modes.iter().position(|m| m.label == label)
    }

    pub fn labels(&self) -> Vec<ModeLabel> {
        self.modes.iter().map(|m| m.label).collect()
    }

    fn source_index(&self, channel: NoiseChannel, pair: usize) -> usize {
        let reservoir = match self.sharing {
            ReservoirSharing::Shared => 0,
            ReservoirSharing::Independent => pair - 1,
        };
        self.sources
            .iter()
            .position(|s| s.channel == channel && s.reservoir == reservoir)
            .expect("layout sources cover every pair")
    }

    /// Doubled-basis input means `(⟨f⟩, ⟨f⟩*)`.
    pub fn input_means(&self) -> Vec<Complex64> {
        let direct: Vec<_> = self.modes.iter().map(|m| m.input.mean()).collect();
        direct
            .iter()
            .copied()
            .chain(direct.iter().map(|z| z.conj()))
            .collect()
    }
}

/// Per-ω drift `M` and noise coupling `Q` over the doubled basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftMatrix {
    pub omega: f64,
    pub m: CMat,
    pub q: CMat,
}

impl DriftMatrix {
    /// Removes the common `-iω/c` free-propagation phase from the diagonal.
    pub fn without_free_phase(&self) -> Self {
        let n = self.m.nrows() / 2;
        let mut m = self.m.clone();
        let k = self.omega / SPEED_OF_LIGHT;
        for i in 0..n {
            m[(i, i)] += I * k;
            m[(n + i, n + i)] -= I * k;
        }
        Self {
            omega: self.omega,
            m,
            q: self.q.clone(),
        }
    }

    /// Field-space source matrix `Q B Q†`.
    pub fn field_source(&self, b: &CMat) -> CMat {
        &self.q * b * self.q.adjoint()
    }
}

/// Form of the pair-internal coupling between the two field modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CouplingForm {
    /// `a` driven by `b` and `b` by `a`, through `σ12` and `σ12*`.
    #[default]
    AsPrinted,
    /// The same coefficients moved to `a` driven by `b†` and `b` by `a†`.
    Parametric,
}

impl DriftMatrix {
    /// Rewrites each pair's cross terms into the requested form.
    pub fn with_coupling(mut self, form: CouplingForm, layout: &ModeLayout) -> Self {
        if form == CouplingForm::AsPrinted {
            return self;
        }
        let n = layout.n_modes();
        let m = &mut self.m;
        for pair in 0..layout.n_pairs() {
            let (i, j) = (2 * pair, 2 * pair + 1);
            for (r, col) in [(i, j), (j, i)] {
                let k = m[(r, col)];
                m[(r, col)] = Complex64::new(0.0, 0.0);
                m[(n + r, n + col)] = Complex64::new(0.0, 0.0);
                m[(r, n + col)] = k;
                m[(n + r, col)] = k.conj();
            }
        }
        self
    }
}

/// Mode-coupling entries `|M_ij|` for `i != j` within the direct block.
pub fn coupling_magnitudes(dm: &DriftMatrix) -> Vec<f64> {
    let n = dm.m.nrows() / 2;
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.push(dm.m[(i, j)].norm());
            }
        }
    }
    out
}

pub fn drift_matrix(
    omega: f64,
    ss: &DensityMatrix3,
    d: &DerivedParams,
    layout: &ModeLayout,
) -> DriftMatrix {
    let n = layout.n_modes();
    let n_atoms = d.n_atoms;
    let cl = SPEED_OF_LIGHT;
    let free = -I * (omega / cl);
    let s12 = ss.sigma(1, 2);
    let inv1 = ss.sigma(1, 1) - ss.sigma(3, 3);
    let inv2 = ss.sigma(2, 2) - ss.sigma(3, 3);
    let (g1, g2) = (d.g1, d.g2);

    let mut m = zeros(2 * n, 2 * n);
    let mut q = zeros(2 * n, layout.sources.len());
    for pair in 1..=layout.n_pairs() {
        let i = 2 * (pair - 1);
        let j = i + 1;
        let detuning = layout.modes[i].detuning;
        let d13 = Complex64::new(d.gamma13, omega - detuning);
        let d23 = Complex64::new(d.gamma23, omega - detuning);

        m[(i, i)] = free - inv1 * (g1 * g1 * n_atoms) / (d13 * cl);
        m[(i, j)] = -s12 * (g1 * g2 * n_atoms) / (d13 * cl);
        m[(j, j)] = free - inv2 * (g2 * g2 * n_atoms) / (d23 * cl);
        m[(j, i)] = -s12.conj() * (g1 * g2 * n_atoms) / (d23 * cl);

        q[(i, layout.source_index(NoiseChannel::F13, pair))] = I * (g1 * n_atoms) / (d13 * cl);
        q[(j, layout.source_index(NoiseChannel::F23, pair))] = I * (g2 * n_atoms) / (d23 * cl);
        q[(n + i, layout.source_index(NoiseChannel::F31, pair))] =
            (I * (g1 * n_atoms) / (d13 * cl)).conj();
        q[(n + j, layout.source_index(NoiseChannel::F32, pair))] =
            (I * (g2 * n_atoms) / (d23 * cl)).conj();
    }
    for r in 0..n {
        for col in 0..n {
            m[(n + r, n + col)] = m[(r, col)].conj();
        }
    }
    DriftMatrix { omega, m, q }
}

/// Homogeneous solution at one depth.
#[derive(Debug, Clone, PartialEq)]
pub struct ZProfile {
    pub z: f64,
    pub t: CMat,
}

/// Joint statistics of `X(L)` and the depth average `Y = (1/L) ∫ X dz`,
/// stacked as `[X; Y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZAverage {
    /// `(1/L) ∫ e^{M z} dz`.
    pub t_avg: CMat,
    /// Langevin part of the joint symmetrized covariance.
    pub noise_sym: CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferSolution {
    pub omega: f64,
    pub length: f64,
    pub t: CMat,
    /// `∫ e^{M s} Q B_sym Q† e^{M† s} ds`.
    pub noise_sym: CMat,
    /// Same with the commutator source.
    pub noise_comm: CMat,
    pub z_average: Option<ZAverage>,
    pub profiles: Vec<ZProfile>,
}

impl TransferSolution {
    pub fn n_modes(&self) -> usize {
        self.t.nrows() / 2
    }

    /// Output commutator matrix `T J T† + C_noise`.
    pub fn output_commutator(&self) -> CMat {
        let j = commutator_form(self.n_modes());
        &self.t * j * self.t.adjoint() + &self.noise_comm
    }

    /// `max_k |[f_k, f_k†] - 1|` over the direct modes.
    pub fn commutator_residual(&self) -> f64 {
        let cm = self.output_commutator();
        (0..self.n_modes())
            .map(|k| (cm[(k, k)] - c(1.0)).norm())
            .fold(0.0, f64::max)
    }

    /// `⟨X_out⟩ = T ⟨X_in⟩`.
    pub fn output_means(&self, layout: &ModeLayout) -> Vec<Complex64> {
        let x = nalgebra::DVector::from_vec(layout.input_means());
        (&self.t * x).iter().copied().collect()
    }
}

/// `diag(I_n, -I_n)`.
pub fn commutator_form(n: usize) -> CMat {
    let mut j = identity(2 * n);
    for k in n..2 * n {
        j[(k, k)] = c(-1.0);
    }
    j
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferOptions {
    pub gain_ceiling: f64,
    pub z_average: bool,
    pub profile_points: usize,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self {
            gain_ceiling: DEFAULT_GAIN_CEILING,
            z_average: false,
            profile_points: 0,
        }
    }
}

/// Symmetrized and commutator covariances of the stacked noise vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceCovariance {
    pub sym: CMat,
    pub comm: CMat,
}

impl SourceCovariance {
    pub fn zero(n_sources: usize) -> Self {
        Self {
            sym: zeros(n_sources, n_sources),
            comm: zeros(n_sources, n_sources),
        }
    }
}

/// `∫_0^L e^{M s} B_k e^{M† s} ds` for each `B_k`.
///
/// Van Loan block exponential on a base step with `‖M h‖ ≤ 1/2`, then
/// doubling `W(2h) = W(h) + e^{Mh} W(h) e^{M†h}`.
fn noise_integrals(m: &CMat, sources: &[&CMat], length: f64) -> Vec<CMat> {
    let n = m.nrows();
    let k = sources.len();
    if length == 0.0 || sources.iter().all(|b| max_abs(b) == 0.0) {
        return vec![zeros(n, n); k];
    }
    let mnorm = norm1(m) * length;
    let doublings = if mnorm > 0.5 {
        (mnorm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let h = length / 2f64.powi(doublings as i32);

    // W is linear in B; rescale so the blocks of Z are of comparable size.
    let mscale = norm1(m).max(1.0 / length);
    let scales: Vec<f64> = sources
        .iter()
        .map(|b| {
            let bn = norm1(b);
            if bn > 0.0 {
                bn / mscale
            } else {
                1.0
            }
        })
        .collect();

    let dim = n * (k + 1);
    let mut z = zeros(dim, dim);
    z.view_mut((0, 0), (n, n)).copy_from(&(m * c(h)));
    let minus_madj = m.adjoint() * c(-h);
    for (idx, b) in sources.iter().enumerate() {
        let off = n * (idx + 1);
        z.view_mut((0, off), (n, n))
            .copy_from(&(*b * c(h / scales[idx])));
        z.view_mut((off, off), (n, n)).copy_from(&minus_madj);
    }
    let ez = expm(&z);
    let e11 = ez.view((0, 0), (n, n)).into_owned();
    let e11_adj = e11.adjoint();
    let mut ws: Vec<CMat> = (0..k)
        .map(|idx| ez.view((0, n * (idx + 1)), (n, n)).into_owned() * &e11_adj)
        .collect();

    let mut e = e11;
    for _ in 0..doublings {
        let e_adj = e.adjoint();
        for w in ws.iter_mut() {
            *w = &*w + &e * &*w * &e_adj;
        }
        e = &e * &e;
    }
    for (w, s) in ws.iter_mut().zip(&scales) {
        *w *= c(*s);
        // Symmetrize away the rounding-level anti-Hermitian part.
        *w = (&*w + w.adjoint()) * c(0.5);
    }
    ws
}

fn check_gain(omega: f64, t: &CMat, ceiling: f64) -> Result<(), PropagationError> {
    let gain = max_abs(t);
    if !gain.is_finite() || gain > ceiling {
        return Err(PropagationError::NumericalOverflow {
            omega,
            gain,
            ceiling,
        });
    }
    Ok(())
}

pub fn transfer(
    dm: &DriftMatrix,
    length: f64,
    noise: &SourceCovariance,
    opts: &TransferOptions,
) -> Result<TransferSolution, PropagationError> {
    let n2 = dm.m.nrows();
    let b_sym = dm.field_source(&noise.sym);
    let b_comm = dm.field_source(&noise.comm);

    let t = expm(&(&dm.m * c(length)));
    check_gain(dm.omega, &t, opts.gain_ceiling)?;
    let ws = noise_integrals(&dm.m, &[&b_sym, &b_comm], length);
    let (noise_sym, noise_comm) = (ws[0].clone(), ws[1].clone());

    let z_average = if opts.z_average {
        let mut ma = zeros(2 * n2, 2 * n2);
        ma.view_mut((0, 0), (n2, n2)).copy_from(&dm.m);
        if length > 0.0 {
            ma.view_mut((n2, 0), (n2, n2))
                .copy_from(&(identity(n2) * c(1.0 / length)));
        }
        let ta = expm(&(&ma * c(length)));
        let t_avg = if length > 0.0 {
            ta.view((n2, 0), (n2, n2)).into_owned()
        } else {
            identity(n2)
        };
        let ba = block_diag(&b_sym, &zeros(n2, n2));
        let wa = noise_integrals(&ma, &[&ba], length).remove(0);
        Some(ZAverage {
            t_avg,
            noise_sym: wa,
        })
    } else {
        None
    };

    let profiles = if opts.profile_points >= 2 {
        (0..opts.profile_points)
            .map(|k| {
                let z = length * k as f64 / (opts.profile_points - 1) as f64;
                ZProfile {
                    z,
                    t: expm(&(&dm.m * c(z))),
                }
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(TransferSolution {
        omega: dm.omega,
        length,
        t,
        noise_sym,
        noise_comm,
        z_average,
        profiles,
    })
}

/// Fixed-step RK4 integration of `T' = M T` and `W' = M W + W M† + B`.
pub fn transfer_step_oracle(
    dm: &DriftMatrix,
    length: f64,
    noise: &SourceCovariance,
    n_steps: usize,
) -> TransferSolution {
    let n2 = dm.m.nrows();
    let m = &dm.m;
    let madj = m.adjoint();
    let b_sym = dm.field_source(&noise.sym);
    let b_comm = dm.field_source(&noise.comm);
    let h = length / n_steps as f64;
    let hc = c(h);

    let lyap = |w: &CMat, b: &CMat| m * w + w * &madj + b;
    let mut t = identity(n2);
    let mut ws = [zeros(n2, n2), zeros(n2, n2)];
    let bs = [&b_sym, &b_comm];
    for _ in 0..n_steps {
        let k1 = m * &t;
        let k2 = m * (&t + &k1 * c(h / 2.0));
        let k3 = m * (&t + &k2 * c(h / 2.0));
        let k4 = m * (&t + &k3 * hc);
        t += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0);
        for (w, b) in ws.iter_mut().zip(bs) {
            let k1 = lyap(w, b);
            let k2 = lyap(&(&*w + &k1 * c(h / 2.0)), b);
            let k3 = lyap(&(&*w + &k2 * c(h / 2.0)), b);
            let k4 = lyap(&(&*w + &k3 * hc), b);
            *w += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0);
        }
    }
    let [noise_sym, noise_comm] = ws;
    TransferSolution {
        omega: dm.omega,
        length,
        t,
        noise_sym,
        noise_comm,
        z_average: None,
        profiles: Vec::new(),
    }
}

/// How Langevin forces enter the output covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NoiseTreatment {
    /// Inputs plus the Langevin covariance integral.
    #[default]
    Langevin,
    /// Inputs propagated by `T` alone.
    Excluded,
}

/// Doubled-basis symmetrized covariance `⟨{Z, Z†}⟩` with mode labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeCovariance {
    pub labels: Vec<String>,
    pub sigma: CMat,
}

impl ModeCovariance {
    pub fn n_modes(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Output covariance of the field modes. Coherent displacements only shift
/// means, so every input contributes an identity block.
pub fn output_field_covariance(
    ts: &TransferSolution,
    layout: &ModeLayout,
    treatment: NoiseTreatment,
) -> ModeCovariance {
    let mut sigma = &ts.t * ts.t.adjoint();
    if treatment == NoiseTreatment::Langevin {
        sigma += &ts.noise_sym;
    }
    ModeCovariance {
        labels: layout.labels().iter().map(|l| l.to_string()).collect(),
        sigma,
    }
}
