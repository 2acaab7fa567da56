//! Pair-source brightness, detector response and the resulting count rates.
//!
//! The source emits frequency-entangled pairs with a Gaussian single-photon
//! spectrum centred on the grid origin. A pair lands in channel `n` when one
//! photon falls in signal slot `n`; its partner is then in idler slot `n`.

use alloc::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{FrequencySlot, GridError, CENTER_HZ};
use crate::math;
use crate::rng::{self, rng_from_seed};
use crate::tomography::DensityMatrix4;
use crate::UserId;

/// FWHM / σ for a Gaussian.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhotonicsError {
    #[error("invalid source model: {0}")]
    InvalidSource(&'static str),
    #[error("invalid detector model: {0}")]
    InvalidDetector(&'static str),
    #[error("no flux: true and accidental rates are both zero")]
    NoFlux,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    /// Pairs per second over the whole spectrum.
    pub total_pair_rate: f64,
    pub fwhm_ghz: f64,
    pub center_thz: f64,
    /// Visibility of the source before any accidental background.
    pub intrinsic_visibility: f64,
}

impl SourceModel {
    pub fn new(total_pair_rate: f64, fwhm_ghz: f64, intrinsic_visibility: f64) -> Result<Self, PhotonicsError> {
        let s = Self {
            total_pair_rate,
            fwhm_ghz,
            center_thz: CENTER_HZ as f64 * 1e-12,
            intrinsic_visibility,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), PhotonicsError> {
        if !(self.total_pair_rate > 0.0) {
            return Err(PhotonicsError::InvalidSource("pair rate must be positive"));
        }
        if !(self.fwhm_ghz > 0.0) {
            return Err(PhotonicsError::InvalidSource("bandwidth must be positive"));
        }
        if !(self.intrinsic_visibility > 0.0 && self.intrinsic_visibility <= 1.0) {
            return Err(PhotonicsError::InvalidSource("visibility outside (0, 1]"));
        }
        Ok(())
    }

    fn sigma_hz(&self) -> f64 {
        self.fwhm_ghz * 1e9 / FWHM_PER_SIGMA
    }

    /// Fraction of the single-photon spectrum falling inside `slot`.
    pub fn slot_fraction(&self, slot: FrequencySlot) -> f64 {
        let center = self.center_thz * 1e12;
        let (lo, hi) = slot.band_hz();
        let k = 1.0 / (self.sigma_hz() * core::f64::consts::SQRT_2);
        let zl = (lo as f64 - center) * k;
        let zh = (hi as f64 - center) * k;
        0.5 * (math::erf(zh) - math::erf(zl))
    }
}

/// Pair rate of channel `n`: a pair is counted once whichever of its two
/// photons lands in the signal slot, so both conjugate slots contribute.
pub fn channel_pair_rate(source: &SourceModel, channel: i64) -> Result<f64, PhotonicsError> {
    let s = FrequencySlot::new(channel, crate::grid::Role::Signal)?;
    Ok(source.total_pair_rate * (source.slot_fraction(s) + source.slot_fraction(s.conjugate())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Counts per second with no light.
    pub dark_rate: f64,
    /// Non-paralyzable dead time in seconds.
    pub dead_time: f64,
}

impl DetectorModel {
    pub fn new(efficiency: f64, dark_rate: f64, dead_time: f64) -> Result<Self, PhotonicsError> {
        let d = Self {
            efficiency,
            dark_rate,
            dead_time,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), PhotonicsError> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(PhotonicsError::InvalidDetector("efficiency outside [0, 1]"));
        }
        if !(self.dark_rate >= 0.0) {
            return Err(PhotonicsError::InvalidDetector("negative dark rate"));
        }
        if !(self.dead_time >= 0.0) {
            return Err(PhotonicsError::InvalidDetector("negative dead time"));
        }
        Ok(())
    }
}

/// Detected singles rate given the summed pair rate of all slots routed to
/// the detector and the path transmittance.
pub fn singles_rate(allocated_pair_rate: f64, transmittance: f64, detector: &DetectorModel) -> f64 {
    let raw = detector.efficiency * transmittance * allocated_pair_rate + detector.dark_rate;
    raw / (1.0 + raw * detector.dead_time)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub singles_a: f64,
    pub singles_b: f64,
    pub true_coinc: f64,
    pub accidental: f64,
    /// Coincidence window in seconds.
    pub window: f64,
}

impl RateReport {
    pub fn total(&self) -> f64 {
        self.true_coinc + self.accidental
    }
}

#[allow(clippy::too_many_arguments)]
pub fn coincidence_rates(
    pair_rate: f64,
    t_a: f64,
    eta_a: f64,
    t_b: f64,
    eta_b: f64,
    singles_a: f64,
    singles_b: f64,
    window: f64,
) -> RateReport {
    RateReport {
        singles_a,
        singles_b,
        true_coinc: pair_rate * t_a * eta_a * t_b * eta_b,
        accidental: singles_a * singles_b * window,
        window,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateModel {
    pub werner_weight: f64,
}

impl StateModel {
    /// `p = V₀·true/(true + accidental)`
    pub fn from_rates(true_coinc: f64, accidental: f64, visibility: f64) -> Result<Self, PhotonicsError> {
        let total = true_coinc + accidental;
        if !(total > 0.0) {
            return Err(PhotonicsError::NoFlux);
        }
        Ok(Self {
            werner_weight: (visibility * true_coinc / total).clamp(0.0, 1.0),
        })
    }

    pub fn fidelity(&self) -> f64 {
        (1.0 + 3.0 * self.werner_weight) / 4.0
    }

    pub fn density_matrix(&self) -> DensityMatrix4 {
        DensityMatrix4::werner(self.werner_weight)
    }
}

/// Werner state implied by the true and accidental coincidence rates.
pub fn effective_state(
    true_coinc: f64,
    accidental: f64,
    visibility: f64,
) -> Result<DensityMatrix4, PhotonicsError> {
    Ok(StateModel::from_rates(true_coinc, accidental, visibility)?.density_matrix())
}

/// One Poisson realization of `rate · duration`, reproducible from `seed`.
pub fn sample_counts(rate: f64, duration: f64, seed: u64) -> u64 {
    let mut rng = rng_from_seed(seed);
    rng::poisson(&mut rng, rate * duration)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub eta: f64,
    pub dark: f64,
    #[serde(default)]
    pub dead_time: f64,
}

impl From<DetectorConfig> for DetectorModel {
    fn from(d: DetectorConfig) -> Self {
        DetectorModel {
            efficiency: d.eta,
            dark_rate: d.dark,
            dead_time: d.dead_time,
        }
    }
}

fn default_center_thz() -> f64 {
    CENTER_HZ as f64 * 1e-12
}

fn default_window_ns() -> f64 {
    1.0
}

fn default_jitter_ps() -> f64 {
    50.0
}

/// Calibration block carried by a topology document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonicsConfig {
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "V0")]
    pub v0: f64,
    pub fwhm_ghz: f64,
    #[serde(default = "default_center_thz")]
    pub center_thz: f64,
    #[serde(default = "default_window_ns")]
    pub window_ns: f64,
    /// Per-event timing jitter of a detection chain.
    #[serde(default = "default_jitter_ps")]
    pub jitter_ps: f64,
    pub detectors: BTreeMap<UserId, DetectorConfig>,
}

impl PhotonicsConfig {
    pub fn source(&self) -> Result<SourceModel, PhotonicsError> {
        let s = SourceModel {
            total_pair_rate: self.r0,
            fwhm_ghz: self.fwhm_ghz,
            center_thz: self.center_thz,
            intrinsic_visibility: self.v0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn detector(&self, user: &str) -> Option<DetectorModel> {
        self.detectors.get(user).map(|&d| d.into())
    }

    pub fn window_s(&self) -> f64 {
        self.window_ns * 1e-9
    }

    pub fn validate(&self) -> Result<(), PhotonicsError> {
        self.source()?;
        if !(self.window_ns > 0.0) {
            return Err(PhotonicsError::InvalidSource("window must be positive"));
        }
        for d in self.detectors.values() {
            DetectorModel::from(*d).validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn source() -> SourceModel {
        SourceModel::new(1e6, 310.0, 0.95).unwrap()
    }

    fn trapezoid_fraction(fwhm_ghz: f64, lo_ghz: f64, hi_ghz: f64) -> f64 {
        let sigma = fwhm_ghz / (2.0 * (2.0 * 2f64.ln()).sqrt());
        let n = 10_000;
        let h = (hi_ghz - lo_ghz) / n as f64;
        let g = |x: f64| (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let mut acc = 0.5 * (g(lo_ghz) + g(hi_ghz));
        for k in 1..n {
            acc += g(lo_ghz + k as f64 * h);
        }
        acc * h
    }

    #[test]
    fn channel_rate_ratio_matches_quadrature() {
        let s = source();
        let r1 = channel_pair_rate(&s, 1).unwrap();
        let r8 = channel_pair_rate(&s, 8).unwrap();
        let q1 = trapezoid_fraction(310.0, 0.0, 25.0);
        let q8 = trapezoid_fraction(310.0, 175.0, 200.0);
        assert!(((r1 / r8) / (q1 / q8) - 1.0).abs() < 1e-6);
        // and the absolute fraction too
        assert!((r1 / s.total_pair_rate / (2.0 * q1) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn conjugate_slots_are_symmetric() {
        let s = source();
        for slot in FrequencySlot::all() {
            let a = s.slot_fraction(slot);
            let b = s.slot_fraction(slot.conjugate());
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn channel_rates_sum_below_total() {
        let s = source();
        let sum: f64 = (1..=8).map(|n| channel_pair_rate(&s, n).unwrap()).sum();
        assert!(sum < s.total_pair_rate);
        // 400 GHz out of a 310 GHz FWHM line: most but not all of it
        assert!(sum > 0.85 * s.total_pair_rate);
        assert!(channel_pair_rate(&s, 9).is_err());
        assert!(channel_pair_rate(&s, 0).is_err());
    }

    #[test]
    fn singles_examples() {
        let det = DetectorModel::new(0.2, 150.0, 10e-6).unwrap();
        assert_eq!(singles_rate(1e6, 0.0, &DetectorModel { dead_time: 0.0, ..det }), 150.0);
        let free = DetectorModel::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(singles_rate(42_000.0, 1.0, &free), 42_000.0);
        let apd = DetectorModel::new(1.0, 0.0, 10e-6).unwrap();
        assert!((singles_rate(50_000.0, 1.0, &apd) - 33_333.333_333).abs() < 1e-3);
    }

    #[test]
    fn coincidence_examples() {
        let r = coincidence_rates(1000.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1e-9);
        assert_eq!(r.true_coinc, 1000.0);
        let r = coincidence_rates(0.0, 0.5, 0.8, 0.5, 0.8, 341_315.0, 4_198.0, 1e-9);
        assert_eq!(r.true_coinc, 0.0);
        assert!((r.accidental - 1.4328).abs() < 1e-3);
    }

    #[test]
    fn effective_state_limits() {
        let rho = effective_state(10.0, 0.0, 1.0).unwrap();
        let f = crate::tomography::fidelity(&rho, &crate::tomography::bell_psi_plus());
        assert!((f - 1.0).abs() < 1e-12);
        let rho = effective_state(0.0, 3.0, 0.9).unwrap();
        let f = crate::tomography::fidelity(&rho, &crate::tomography::bell_psi_plus());
        assert!((f - 0.25).abs() < 1e-12);
        assert_eq!(effective_state(0.0, 0.0, 1.0), Err(PhotonicsError::NoFlux));
        let m = StateModel { werner_weight: 0.687 };
        assert!((m.fidelity() - 0.765).abs() < 1e-3);
    }

    #[test]
    fn sample_counts_is_reproducible_and_unbiased() {
        assert_eq!(sample_counts(0.0, 10.0, 3), 0);
        assert_eq!(sample_counts(100.0, 1.0, 77), sample_counts(100.0, 1.0, 77));
        let n = 2_000;
        let mean = (0..n).map(|s| sample_counts(866.5, 180.0, s) as f64).sum::<f64>() / n as f64;
        let expected = 866.5 * 180.0;
        // standard error of the sample mean
        assert!((mean - expected).abs() < 3.0 * (expected / n as f64).sqrt() * 1.5);
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(SourceModel::new(0.0, 310.0, 1.0).is_err());
        assert!(SourceModel::new(1.0, 310.0, 1.2).is_err());
        assert!(DetectorModel::new(1.2, 0.0, 0.0).is_err());
        assert!(DetectorModel::new(0.5, 0.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn rates_are_monotone(
            mu in 0.0..1e6f64,
            t1 in 0.0..1.0f64,
            t2 in 0.0..1.0f64,
            eta in 0.0..1.0f64,
            dark in 0.0..1e3f64,
            dead in 0.0..1e-5f64,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let det = DetectorModel { efficiency: eta, dark_rate: dark, dead_time: dead };
            prop_assert!(singles_rate(mu, lo, &det) <= singles_rate(mu, hi, &det) * (1.0 + 1e-12));
            let a = coincidence_rates(mu, lo, eta, 0.5, eta, 0.0, 0.0, 1e-9).true_coinc;
            let b = coincidence_rates(mu, hi, eta, 0.5, eta, 0.0, 0.0, 1e-9).true_coinc;
            prop_assert!(a <= b);
        }

        #[test]
        fn radiometric_scaling(
            mu in 1.0..1e6f64,
            ta in 1e-4..1.0f64,
            tb in 1e-4..1.0f64,
            delta_db in 0.0..20.0f64,
        ) {
            let k = math::db_to_transmittance(delta_db);
            let base = coincidence_rates(mu, ta, 0.8, tb, 0.2, 0.0, 0.0, 1e-9).true_coinc;
            let one = coincidence_rates(mu, ta * k, 0.8, tb, 0.2, 0.0, 0.0, 1e-9).true_coinc;
            let two = coincidence_rates(mu, ta * k, 0.8, tb * k, 0.2, 0.0, 0.0, 1e-9).true_coinc;
            prop_assert!((one / base - k).abs() <= 1e-12 * k.max(1.0));
            prop_assert!((two / base - k * k).abs() <= 1e-12);
        }

        #[test]
        fn effective_state_is_valid(true_c in 0.0..1e4f64, acc in 0.0..1e4f64, v0 in 0.01..1.0f64) {
            prop_assume!(true_c + acc > 0.0);
            let rho = effective_state(true_c, acc, v0).unwrap();
            prop_assert!(rho.check().is_ok());
        }

        #[test]
        fn fidelity_decreases_with_noise_fraction(
            true_c in 1.0..1e4f64,
            acc in 0.0..1e4f64,
            extra in 1e-3..1e3f64,
            v0 in 0.01..1.0f64,
        ) {
            let a = StateModel::from_rates(true_c, acc, v0).unwrap().fidelity();
            let b = StateModel::from_rates(true_c, acc + extra, v0).unwrap().fidelity();
            prop_assert!(b < a);
        }
    }
}
