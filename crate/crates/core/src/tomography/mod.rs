//! Two-qubit polarization states and their tomography.
//!
//! Qubit ordering is `|a b>` with basis index `2a + b` and `H = 0`, `V = 1`.
//! The target Bell state is `|Ψ+> = (|HV> + |VH>)/√2`.

mod bayes;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bayes::{bayesian_estimate, linear_inversion, PosteriorSummary, Prior, SamplerParams};

use crate::linalg::{c, Matrix4, C64};
use crate::math;
use crate::rng;

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TomographyError {
    #[error("unknown polarization label {0:?}")]
    UnknownLabel(String),
    #[error("matrix is not a density matrix: {0}")]
    InvalidState(&'static str),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset entry {index}: {reason}")]
    InvalidEntry { index: usize, reason: &'static str },
    #[error("invalid sampler parameters: {0}")]
    InvalidParams(&'static str),
}

/// Projection direction of one polarization analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Polarization {
    pub const ALL: [Polarization; 6] = [
        Polarization::H,
        Polarization::V,
        Polarization::D,
        Polarization::A,
        Polarization::R,
        Polarization::L,
    ];

    /// Unit Jones vector: `D = (H+V)/√2`, `A = (H-V)/√2`, `R = (H+iV)/√2`,
    /// `L = (H-iV)/√2`.
    pub fn vector(self) -> [C64; 2] {
        let h = FRAC_1_SQRT_2;
        match self {
            Polarization::H => [c(1.0, 0.0), c(0.0, 0.0)],
            Polarization::V => [c(0.0, 0.0), c(1.0, 0.0)],
            Polarization::D => [c(h, 0.0), c(h, 0.0)],
            Polarization::A => [c(h, 0.0), c(-h, 0.0)],
            Polarization::R => [c(h, 0.0), c(0.0, h)],
            Polarization::L => [c(h, 0.0), c(0.0, -h)],
        }
    }

    /// Pauli axis index (0 = Z, 1 = X, 2 = Y) and eigenvalue sign.
    pub(crate) fn axis(self) -> (usize, f64) {
        match self {
            Polarization::H => (0, 1.0),
            Polarization::V => (0, -1.0),
            Polarization::D => (1, 1.0),
            Polarization::A => (1, -1.0),
            Polarization::R => (2, 1.0),
            Polarization::L => (2, -1.0),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Polarization::H => 'H',
            Polarization::V => 'V',
            Polarization::D => 'D',
            Polarization::A => 'A',
            Polarization::R => 'R',
            Polarization::L => 'L',
        }
    }
}

impl FromStr for Polarization {
    type Err = TomographyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "H" | "h" => Ok(Polarization::H),
            "V" | "v" => Ok(Polarization::V),
            "D" | "d" => Ok(Polarization::D),
            "A" | "a" => Ok(Polarization::A),
            "R" | "r" => Ok(Polarization::R),
            "L" | "l" => Ok(Polarization::L),
            other => Err(TomographyError::UnknownLabel(String::from(other))),
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

pub fn basis_vector(label: &str) -> Result<[C64; 2], TomographyError> {
    Ok(label.parse::<Polarization>()?.vector())
}

/// One analyzer setting per user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub a: Polarization,
    pub b: Polarization,
}

impl MeasurementSetting {
    pub fn new(a: Polarization, b: Polarization) -> Self {
        Self { a, b }
    }

    /// The 36 settings, `a` major.
    pub fn all() -> impl Iterator<Item = MeasurementSetting> {
        Polarization::ALL
            .into_iter()
            .flat_map(|a| Polarization::ALL.into_iter().map(move |b| MeasurementSetting { a, b }))
    }

    /// Product projection vector `|a> ⊗ |b>`.
    pub fn vector(&self) -> [C64; 4] {
        let va = self.a.vector();
        let vb = self.b.vector();
        [va[0] * vb[0], va[0] * vb[1], va[1] * vb[0], va[1] * vb[1]]
    }
}

impl fmt::Display for MeasurementSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.a, self.b)
    }
}

// Entry-wise tolerances for the density-matrix contract.
const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const EIGEN_TOL: f64 = -1e-10;

/// A two-qubit density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix4(Matrix4);

impl DensityMatrix4 {
    /// Checks the invariants and wraps the matrix.
    pub fn new(m: Matrix4) -> Result<Self, TomographyError> {
        let scale = m.max_abs().max(1.0);
        if m.hermiticity_error() > HERMITIAN_TOL * scale {
            return Err(TomographyError::InvalidState("not Hermitian"));
        }
        if math::abs(m.trace().re - 1.0) > TRACE_TOL || math::abs(m.trace().im) > TRACE_TOL {
            return Err(TomographyError::InvalidState("trace differs from one"));
        }
        if m.hermitian_eigenvalues()[0] < EIGEN_TOL {
            return Err(TomographyError::InvalidState("negative eigenvalue"));
        }
        Ok(Self(m))
    }

    /// `T T† / Tr(T T†)`; positive by construction.
    pub fn from_factor(t: &Matrix4) -> Self {
        let g = t.gram();
        let tr = g.trace().re;
        Self(g.scale(1.0 / tr))
    }

    pub fn pure(psi: &[C64; 4]) -> Self {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        Self(Matrix4::outer(psi, psi).scale(1.0 / norm))
    }

    pub fn maximally_mixed() -> Self {
        Self(Matrix4::identity().scale(0.25))
    }

    /// `p |Ψ+><Ψ+| + (1 - p) I/4`
    pub fn werner(p: f64) -> Self {
        let bell = target_state().0;
        Self(bell.scale(p) + Matrix4::identity().scale((1.0 - p) / 4.0))
    }

    /// Convex mixture `w·self + (1-w)·other`.
    pub fn mix(&self, other: &DensityMatrix4, w: f64) -> Self {
        Self(self.0.scale(w) + other.0.scale(1.0 - w))
    }

    /// `U ρ U†`
    pub fn conjugated(&self, u: &Matrix4) -> Self {
        Self(*u * self.0 * u.adjoint())
    }

    pub fn matrix(&self) -> &Matrix4 {
        &self.0
    }

    pub fn get(&self, r: usize, col: usize) -> C64 {
        self.0[(r, col)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        self.0.hermitian_eigenvalues()
    }

    /// Re-checks the invariants; useful after averaging.
    pub fn check(&self) -> Result<(), TomographyError> {
        Self::new(self.0).map(|_| ())
    }

    /// Row-major `(re, im)` pairs.
    pub fn to_row_major_pairs(&self) -> Vec<[f64; 2]> {
        self.0
             .0
            .iter()
            .flatten()
            .map(|z| [z.re, z.im])
            .collect()
    }
}

/// `|Ψ+> = (|HV> + |VH>)/√2`
pub fn bell_psi_plus() -> [C64; 4] {
    [
        c(0.0, 0.0),
        c(FRAC_1_SQRT_2, 0.0),
        c(FRAC_1_SQRT_2, 0.0),
        c(0.0, 0.0),
    ]
}

pub fn target_state() -> DensityMatrix4 {
    DensityMatrix4::pure(&bell_psi_plus())
}

/// `Tr(Π ρ)` for the product projector of a setting, clipped to `[0, 1]`.
pub fn projection_probability(rho: &DensityMatrix4, setting: MeasurementSetting) -> f64 {
    let p = rho.0.expectation(&setting.vector()).re;
    p.clamp(0.0, 1.0)
}

/// `<ψ|ρ|ψ>` for a pure target.
pub fn fidelity(rho: &DensityMatrix4, target: &[C64; 4]) -> f64 {
    rho.0.expectation(target).re.clamp(0.0, 1.0)
}

/// `log2 ‖ρ^{T_B}‖₁`, in ebits.
pub fn log_negativity(rho: &DensityMatrix4) -> f64 {
    let eig = rho.0.partial_transpose_second().hermitian_eigenvalues();
    let mut norm: f64 = eig.iter().map(|&l| math::abs(l)).sum();
    if norm < 1.0 && norm > 1.0 - 1e-10 {
        norm = 1.0;
    }
    math::log2(norm).max(0.0)
}

/// Random single-qubit unitary from a Haar-like parameterization.
pub fn random_local_unitary<R: Rng + ?Sized>(rng: &mut R) -> Matrix4 {
    let mut one = || -> [[C64; 2]; 2] {
        let mut q = [0.0; 4];
        for x in q.iter_mut() {
            *x = rng::standard_normal(rng);
        }
        let n = math::sqrt(q.iter().map(|x| x * x).sum());
        let [a, b, cc, d] = q.map(|x| x / n);
        // SU(2) element from a unit quaternion
        [[c(a, b), c(cc, d)], [c(-cc, d), c(a, -b)]]
    };
    let u = one();
    let v = one();
    Matrix4::kron2(&u, &v)
}

/// One row of a tomography dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub setting: MeasurementSetting,
    pub counts: u64,
    pub duration_s: f64,
    /// Relative collection efficiency of this setting.
    #[serde(default = "one")]
    pub efficiency: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TomographyDataset {
    pub entries: Vec<DatasetEntry>,
}

impl TomographyDataset {
    pub fn validate(&self) -> Result<(), TomographyError> {
        if self.entries.is_empty() {
            return Err(TomographyError::EmptyDataset);
        }
        for (index, e) in self.entries.iter().enumerate() {
            if !(e.duration_s > 0.0) {
                return Err(TomographyError::InvalidEntry {
                    index,
                    reason: "duration must be positive",
                });
            }
            if !(e.efficiency > 0.0) {
                return Err(TomographyError::InvalidEntry {
                    index,
                    reason: "efficiency must be positive",
                });
            }
            if self.entries[..index].iter().any(|o| o.setting == e.setting) {
                return Err(TomographyError::InvalidEntry {
                    index,
                    reason: "duplicate setting",
                });
            }
        }
        Ok(())
    }

    pub fn total_counts(&self) -> u64 {
        self.entries.iter().map(|e| e.counts).sum()
    }
}

/// Poisson counts for all 36 settings with mean `flux · duration · Tr(Πρ)`.
pub fn simulate_dataset<R: Rng + ?Sized>(
    rho: &DensityMatrix4,
    flux: f64,
    duration_s: f64,
    rng: &mut R,
) -> TomographyDataset {
    let entries = MeasurementSetting::all()
        .map(|setting| {
            let mean = flux * duration_s * projection_probability(rho, setting);
            DatasetEntry {
                setting,
                counts: rng::poisson(rng, mean),
                duration_s,
                efficiency: 1.0,
            }
        })
        .collect();
    TomographyDataset { entries }
}
