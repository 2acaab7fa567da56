//! Rates for a whole network: which slots reach which detector, how bright
//! each detector is, and what each user pair should see in coincidence.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{AllocationPlan, FrequencySlot};
use crate::math;
use crate::photonics::{
    channel_pair_rate, coincidence_rates, singles_rate, DetectorModel, PhotonicsConfig,
    PhotonicsError, RateReport, SourceModel, StateModel,
};
use crate::rng::{derive_seed, label_hash, rng_from_seed};
use crate::tomography::log_negativity;
use crate::topology::{resolve_lightpath, NetworkState, Resolution, Topology, TopologyError};
use crate::UserId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("topology has no photonics calibration block")]
    MissingPhotonics,
    #[error("no detector configured for user {0}")]
    MissingDetector(UserId),
    #[error("users {0} and {1} share no conjugate channel")]
    NoSharedChannel(UserId, UserId),
    #[error("calibration did not converge: {0}")]
    Calibration(&'static str),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Photonics(#[from] PhotonicsError),
}

/// Where one allocated slot ends up.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotLink {
    pub slot: FrequencySlot,
    pub user: UserId,
    pub resolution: Resolution,
}

impl SlotLink {
    pub fn loss_db(&self) -> Option<f64> {
        self.resolution.path().map(|p| p.total_loss_db)
    }

    pub fn transmittance(&self) -> f64 {
        self.loss_db().map_or(0.0, math::db_to_transmittance)
    }
}

/// Analytic expectation for one user pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairPrediction {
    pub a: UserId,
    pub b: UserId,
    /// Channels whose signal and idler are split between the two users.
    pub channels: Vec<u8>,
    pub rates: RateReport,
    /// Accidental multiplier applied in the state model.
    pub multipair_factor: f64,
    pub werner_weight: f64,
    pub fidelity: f64,
    pub log_negativity: f64,
    /// Path loss of the first shared channel to each user, if it resolves.
    pub loss_a_db: Option<f64>,
    pub loss_b_db: Option<f64>,
}

impl PairPrediction {
    /// True coincidences plus accidentals scaled by the multipair factor.
    pub fn coincidence_rate(&self) -> f64 {
        self.rates.true_coinc + self.multipair_factor * self.rates.accidental
    }

    /// Part of the coincidence rate above the two-detector accidentals.
    pub fn multipair_excess(&self) -> f64 {
        (self.multipair_factor - 1.0).max(0.0) * self.rates.accidental
    }
}

/// Topology plus calibration; evaluates rates for any state and plan.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub topology: Topology,
    pub photonics: PhotonicsConfig,
}

impl NetworkModel {
    /// Uses the topology's own photonics block.
    pub fn new(topology: Topology) -> Result<Self, NetworkError> {
        let photonics = topology
            .photonics
            .clone()
            .ok_or(NetworkError::MissingPhotonics)?;
        Self::with_photonics(topology, photonics)
    }

    pub fn with_photonics(topology: Topology, photonics: PhotonicsConfig) -> Result<Self, NetworkError> {
        photonics.validate()?;
        Ok(Self {
            topology,
            photonics,
        })
    }

    pub fn source(&self) -> SourceModel {
        self.photonics.source().expect("validated on construction")
    }

    pub fn detector(&self, user: &str) -> Result<DetectorModel, NetworkError> {
        self.photonics
            .detector(user)
            .ok_or_else(|| NetworkError::MissingDetector(user.into()))
    }

    pub fn channel_rate(&self, channel: u8) -> f64 {
        channel_pair_rate(&self.source(), channel as i64).unwrap_or(0.0)
    }

    /// Resolution of every routable slot of `plan`.
    pub fn slot_links(&self, state: &NetworkState, plan: &AllocationPlan) -> Result<Vec<SlotLink>, NetworkError> {
        plan.routable()
            .into_iter()
            .map(|(slot, user)| {
                let resolution = resolve_lightpath(&self.topology, state, slot, user.as_str())?;
                Ok(SlotLink {
                    slot,
                    user,
                    resolution,
                })
            })
            .collect()
    }

    /// Photon flux reaching `user`'s analyzer output, before detection.
    pub fn photon_flux(&self, links: &[SlotLink], user: &str) -> f64 {
        links
            .iter()
            .filter(|l| l.user.as_str() == user)
            .map(|l| self.channel_rate(l.slot.channel()) * l.transmittance())
            .sum()
    }

    pub fn singles(&self, links: &[SlotLink], user: &str) -> Result<f64, NetworkError> {
        let det = self.detector(user)?;
        Ok(singles_rate(self.photon_flux(links, user), 1.0, &det))
    }

    /// Singles of every user holding at least one slot of `plan`.
    pub fn all_singles(
        &self,
        state: &NetworkState,
        plan: &AllocationPlan,
    ) -> Result<BTreeMap<UserId, f64>, NetworkError> {
        let links = self.slot_links(state, plan)?;
        let mut out = BTreeMap::new();
        for (_, user) in plan.routable() {
            if !out.contains_key(&user) {
                let s = self.singles(&links, user.as_str())?;
                out.insert(user, s);
            }
        }
        Ok(out)
    }

    pub fn predict_pair(
        &self,
        state: &NetworkState,
        plan: &AllocationPlan,
        a: &str,
        b: &str,
        multipair_factor: f64,
    ) -> Result<PairPrediction, NetworkError> {
        let channels = plan.shared_channels(a, b);
        if channels.is_empty() {
            return Err(NetworkError::NoSharedChannel(a.into(), b.into()));
        }
        let links = self.slot_links(state, plan)?;
        let det_a = self.detector(a)?;
        let det_b = self.detector(b)?;
        let link_to = |channel: u8, user: &str| {
            links.iter().find(|l| {
                l.slot.channel() == channel && l.user.as_str() == user
            })
        };

        let mut true_coinc = 0.0;
        for &n in &channels {
            let ta = link_to(n, a).map_or(0.0, SlotLink::transmittance);
            let tb = link_to(n, b).map_or(0.0, SlotLink::transmittance);
            true_coinc += coincidence_rates(
                self.channel_rate(n),
                ta,
                det_a.efficiency,
                tb,
                det_b.efficiency,
                0.0,
                0.0,
                self.photonics.window_s(),
            )
            .true_coinc;
        }
        let singles_a = self.singles(&links, a)?;
        let singles_b = self.singles(&links, b)?;
        let mut rates = coincidence_rates(0.0, 0.0, 0.0, 0.0, 0.0, singles_a, singles_b, self.photonics.window_s());
        rates.true_coinc = true_coinc;

        let model = StateModel::from_rates(true_coinc, multipair_factor * rates.accidental, self.photonics.v0)?;
        let rho = model.density_matrix();
        Ok(PairPrediction {
            a: a.into(),
            b: b.into(),
            loss_a_db: link_to(channels[0], a).and_then(SlotLink::loss_db),
            loss_b_db: link_to(channels[0], b).and_then(SlotLink::loss_db),
            channels,
            rates,
            multipair_factor,
            werner_weight: model.werner_weight,
            fidelity: model.fidelity(),
            log_negativity: log_negativity(&rho),
        })
    }

    /// Accidental multiplier that brings the pair's fidelity down to
    /// `target_fidelity`; never below one.
    pub fn fit_multipair_factor(
        &self,
        state: &NetworkState,
        plan: &AllocationPlan,
        a: &str,
        b: &str,
        target_fidelity: f64,
    ) -> Result<f64, NetworkError> {
        let pred = self.predict_pair(state, plan, a, b, 1.0)?;
        let p = (4.0 * target_fidelity - 1.0) / 3.0;
        let t = pred.rates.true_coinc;
        if !(p > 0.0) || pred.rates.accidental <= 0.0 {
            return Err(NetworkError::Calibration("fidelity target out of reach"));
        }
        let k = (self.photonics.v0 * t / p - t) / pred.rates.accidental;
        Ok(k.max(1.0))
    }

    /// Fits the pair rate `R0` so that the pair `(a, b)` shows `target_rate`
    /// total coincidences, then `V0` so its fidelity is `target_fidelity`.
    /// Returns the updated calibration.
    pub fn calibrate(
        &self,
        state: &NetworkState,
        plan: &AllocationPlan,
        a: &str,
        b: &str,
        target_rate: f64,
        target_fidelity: f64,
    ) -> Result<PhotonicsConfig, NetworkError> {
        let total_at = |r0: f64| -> Result<(f64, f64), NetworkError> {
            let mut pc = self.photonics.clone();
            pc.r0 = r0;
            pc.v0 = 1.0;
            let m = NetworkModel::with_photonics(self.topology.clone(), pc)?;
            let p = m.predict_pair(state, plan, a, b, 1.0)?;
            Ok((p.rates.total(), p.rates.true_coinc))
        };
        // total coincidences grow monotonically with R0
        let (mut lo, mut hi) = (1.0, 1e3);
        while total_at(hi)?.0 < target_rate {
            hi *= 10.0;
            if hi > 1e15 {
                return Err(NetworkError::Calibration("target rate unreachable"));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total_at(mid)?.0 < target_rate {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo) <= 1e-12 * hi {
                break;
            }
        }
        let r0 = 0.5 * (lo + hi);
        let (total, true_coinc) = total_at(r0)?;
        let p = (4.0 * target_fidelity - 1.0) / 3.0;
        let v0 = p * total / true_coinc;
        if !(v0 > 0.0 && v0 <= 1.0) {
            return Err(NetworkError::Calibration("fidelity target needs visibility above one"));
        }
        let mut pc = self.photonics.clone();
        pc.r0 = r0;
        pc.v0 = v0;
        Ok(pc)
    }
}

/// The simulated data plane the controller observes and reconfigures.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedNetwork {
    pub model: NetworkModel,
    pub state: NetworkState,
    pub plan: AllocationPlan,
    pub multipair_factor: f64,
}

impl SimulatedNetwork {
    pub fn new(model: NetworkModel, state: NetworkState, plan: AllocationPlan) -> Self {
        Self {
            model,
            state,
            plan,
            multipair_factor: 1.0,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.model.topology
    }

    /// Expected singles of every user holding a slot.
    pub fn expected_singles(&self) -> Result<BTreeMap<UserId, f64>, NetworkError> {
        self.model.all_singles(&self.state, &self.plan)
    }

    /// One counting interval of singles per monitored user, as rates.
    pub fn sample_singles(&self, interval_s: f64, seed: u64) -> Result<BTreeMap<UserId, f64>, NetworkError> {
        let expected = self.expected_singles()?;
        Ok(expected
            .into_iter()
            .map(|(user, rate)| {
                let mut rng = rng_from_seed(derive_seed(seed, &[label_hash(user.as_str())]));
                let n = crate::rng::poisson(&mut rng, rate * interval_s);
                (user, n as f64 / interval_s)
            })
            .collect())
    }

    pub fn fail_span(&mut self, span: &str) -> Result<(), NetworkError> {
        self.state = crate::topology::fail_span(&self.model.topology, &self.state, span)?;
        Ok(())
    }

    pub fn restore_span(&mut self, span: &str) -> Result<(), NetworkError> {
        self.state = crate::topology::restore_span(&self.model.topology, &self.state, span)?;
        Ok(())
    }

    pub fn predict_pair(&self, a: &str, b: &str) -> Result<PairPrediction, NetworkError> {
        self.model
            .predict_pair(&self.state, &self.plan, a, b, self.multipair_factor)
    }
}

/// Signal and idler slots of the channels `a` and `b` share, oriented so the
/// first element of each tuple goes to `a`.
pub fn shared_slots(plan: &AllocationPlan, a: &str, b: &str) -> Vec<(FrequencySlot, FrequencySlot)> {
    plan.shared_channels(a, b)
        .into_iter()
        .map(|n| {
            let s = FrequencySlot::signal(n);
            if plan.user_of(s).is_some_and(|u| u.as_str() == a) {
                (s, s.conjugate())
            } else {
                (s.conjugate(), s)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests;
