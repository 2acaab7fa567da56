//! Flex-grid channel arithmetic.
//!
//! The source spectrum is cut into eight pairs of frequency-correlated 25 GHz
//! slots placed symmetrically about the degenerate frequency. Slot centers are
//! kept as signed multiples of half a slot width (12.5 GHz) away from the
//! degenerate point so that slot identity never depends on float rounding:
//! signal channel `n` sits at `+(2n - 1)` half-widths and idler channel `n` at
//! `-(2n - 1)`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::UserId;

/// Degenerate (half-pump) frequency in Hz.
pub const CENTER_HZ: i64 = 192_312_500_000_000;
/// Slot width in Hz.
pub const SLOT_WIDTH_HZ: i64 = 25_000_000_000;
/// Number of signal/idler channel pairs carved out by the source hub.
pub const NUM_CHANNEL_PAIRS: u8 = 8;

const HALF_SLOT_HZ: i64 = SLOT_WIDTH_HZ / 2;

/// Grid parameters. Only the uniform 25 GHz grid is supported; the struct
/// exists so callers can read the constants in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConstants {
    pub center_thz: f64,
    pub slot_width_ghz: f64,
    pub num_channel_pairs: u8,
}

impl Default for GridConstants {
    fn default() -> Self {
        Self {
            center_thz: CENTER_HZ as f64 / 1e12,
            slot_width_ghz: SLOT_WIDTH_HZ as f64 / 1e9,
            num_channel_pairs: NUM_CHANNEL_PAIRS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Signal,
    Idler,
}

impl Role {
    pub fn flipped(self) -> Self {
        match self {
            Role::Signal => Role::Idler,
            Role::Idler => Role::Signal,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Signal => "signal",
            Role::Idler => "idler",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("channel index {0} out of range 1..={NUM_CHANNEL_PAIRS}")]
    ChannelOutOfRange(i64),
}

/// One 25 GHz slot of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSlot", into = "RawSlot")]
pub struct FrequencySlot {
    channel: u8,
    role: Role,
}

#[derive(Serialize, Deserialize)]
struct RawSlot {
    channel: i64,
    role: Role,
}

impl TryFrom<RawSlot> for FrequencySlot {
    type Error = GridError;

    fn try_from(raw: RawSlot) -> Result<Self, Self::Error> {
        FrequencySlot::new(raw.channel, raw.role)
    }
}

impl From<FrequencySlot> for RawSlot {
    fn from(slot: FrequencySlot) -> Self {
        RawSlot {
            channel: slot.channel as i64,
            role: slot.role,
        }
    }
}

impl FrequencySlot {
    pub fn new(channel: i64, role: Role) -> Result<Self, GridError> {
        if !(1..=NUM_CHANNEL_PAIRS as i64).contains(&channel) {
            return Err(GridError::ChannelOutOfRange(channel));
        }
        Ok(Self {
            channel: channel as u8,
            role,
        })
    }

    pub fn signal(channel: u8) -> Self {
        Self::new(channel as i64, Role::Signal).expect("signal channel in range")
    }

    pub fn idler(channel: u8) -> Self {
        Self::new(channel as i64, Role::Idler).expect("idler channel in range")
    }

    pub fn channel(&self) -> u8 {
        self.channel
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Signed offset of the slot center from the degenerate frequency, in
    /// units of half a slot width.
    pub fn half_slot_offset(&self) -> i64 {
        let magnitude = 2 * self.channel as i64 - 1;
        match self.role {
            Role::Signal => magnitude,
            Role::Idler => -magnitude,
        }
    }

    pub fn center_hz(&self) -> i64 {
        CENTER_HZ + self.half_slot_offset() * HALF_SLOT_HZ
    }

    pub fn center_thz(&self) -> f64 {
        self.center_hz() as f64 / 1e12
    }

    /// Lower and upper slot edges in Hz.
    pub fn band_hz(&self) -> (i64, i64) {
        let c = self.center_hz();
        (c - HALF_SLOT_HZ, c + HALF_SLOT_HZ)
    }

    pub fn width_ghz(&self) -> f64 {
        SLOT_WIDTH_HZ as f64 / 1e9
    }

    /// The frequency-correlated partner slot.
    pub fn conjugate(&self) -> Self {
        Self {
            channel: self.channel,
            role: self.role.flipped(),
        }
    }

    /// Decimal ITU channel label, `(center_THz - 190) * 10`.
    ///
    /// Computed as an exact multiple of 1/8 so the value is bit-exact.
    pub fn itu_label(&self) -> f64 {
        (185 + self.half_slot_offset()) as f64 / 8.0
    }

    /// All sixteen slots in ascending frequency order.
    pub fn all() -> impl Iterator<Item = FrequencySlot> {
        let idlers = (1..=NUM_CHANNEL_PAIRS).rev().map(FrequencySlot::idler);
        let signals = (1..=NUM_CHANNEL_PAIRS).map(FrequencySlot::signal);
        idlers.chain(signals)
    }
}

impl Ord for FrequencySlot {
    fn cmp(&self, other: &Self) -> Ordering {
        self.half_slot_offset().cmp(&other.half_slot_offset())
    }
}

impl PartialOrd for FrequencySlot {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FrequencySlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.role {
            Role::Signal => 's',
            Role::Idler => 'i',
        };
        write!(f, "{prefix}{}", self.channel)
    }
}

/// Center frequency of channel `n` for the given role, in THz.
pub fn slot_center(channel: i64, role: Role) -> Result<f64, GridError> {
    Ok(FrequencySlot::new(channel, role)?.center_thz())
}

/// ITU label for an arbitrary frequency in THz.
pub fn itu_label_for_thz(center_thz: f64) -> f64 {
    (center_thz - 190.0) * 10.0
}

/// A slot handed to a user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAssignment", into = "RawAssignment")]
pub struct Assignment {
    pub slot: FrequencySlot,
    pub user: UserId,
}

#[derive(Serialize, Deserialize)]
struct RawAssignment {
    channel: i64,
    role: Role,
    user: UserId,
}

impl TryFrom<RawAssignment> for Assignment {
    type Error = GridError;

    fn try_from(raw: RawAssignment) -> Result<Self, Self::Error> {
        Ok(Assignment {
            slot: FrequencySlot::new(raw.channel, raw.role)?,
            user: raw.user,
        })
    }
}

impl From<Assignment> for RawAssignment {
    fn from(a: Assignment) -> Self {
        RawAssignment {
            channel: a.slot.channel() as i64,
            role: a.slot.role(),
            user: a.user,
        }
    }
}

/// Slot-to-user assignments. A plan is a value; editing methods return a
/// modified copy.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub label: String,
    pub assignments: Vec<Assignment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanViolation {
    DoubleAssignment { slot: FrequencySlot, users: Vec<UserId> },
    UnservedPair { a: UserId, b: UserId },
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanViolation::DoubleAssignment { slot, users } => {
                write!(f, "slot {slot} assigned to more than one user:")?;
                for u in users {
                    write!(f, " {u}")?;
                }
                Ok(())
            }
            PlanViolation::UnservedPair { a, b } => {
                write!(f, "no conjugate slot pair serves {a}-{b}")
            }
        }
    }
}

/// Outcome of [`validate_plan`]; empty means valid.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct PlanValidation {
    pub violations: Vec<PlanViolation>,
}

impl PlanValidation {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl AllocationPlan {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            assignments: Vec::new(),
        }
    }

    pub fn with(mut self, slot: FrequencySlot, user: impl Into<UserId>) -> Self {
        self.assignments.push(Assignment {
            slot,
            user: user.into(),
        });
        self
    }

    /// Assigns channel `n` to a user pair: signal to `signal_user`, idler to
    /// `idler_user`.
    pub fn with_pair(self, channel: u8, signal_user: &str, idler_user: &str) -> Self {
        self.with(FrequencySlot::signal(channel), signal_user)
            .with(FrequencySlot::idler(channel), idler_user)
    }

    pub fn without(&self, index: usize) -> Self {
        let mut plan = self.clone();
        plan.assignments.remove(index);
        plan
    }

    /// Users holding the slot, in plan order.
    pub fn holders(&self, slot: FrequencySlot) -> Vec<&UserId> {
        self.assignments
            .iter()
            .filter(|a| a.slot == slot)
            .map(|a| &a.user)
            .collect()
    }

    /// The unique holder of a slot, or `None` if it is free or contested.
    pub fn user_of(&self, slot: FrequencySlot) -> Option<&UserId> {
        let holders = self.holders(slot);
        if holders.len() == 1 {
            Some(holders[0])
        } else {
            None
        }
    }

    pub fn users(&self) -> BTreeSet<UserId> {
        self.assignments.iter().map(|a| a.user.clone()).collect()
    }

    pub fn slots_of(&self, user: &str) -> Vec<FrequencySlot> {
        let mut slots: Vec<_> = self
            .assignments
            .iter()
            .filter(|a| a.user.as_str() == user)
            .map(|a| a.slot)
            .collect();
        slots.sort();
        slots.dedup();
        slots
    }

    /// Uniquely assigned slots and their users.
    pub fn routable(&self) -> BTreeMap<FrequencySlot, UserId> {
        let mut map = BTreeMap::new();
        for a in &self.assignments {
            if let Some(u) = self.user_of(a.slot) {
                map.insert(a.slot, u.clone());
            }
        }
        map
    }

    /// Channels whose signal and idler slots connect `a` and `b` (in either
    /// orientation).
    pub fn shared_channels(&self, a: &str, b: &str) -> Vec<u8> {
        (1..=NUM_CHANNEL_PAIRS)
            .filter(|&n| {
                let s = self.user_of(FrequencySlot::signal(n)).map(UserId::as_str);
                let i = self.user_of(FrequencySlot::idler(n)).map(UserId::as_str);
                matches!((s, i), (Some(s), Some(i)) if (s == a && i == b) || (s == b && i == a))
            })
            .collect()
    }
}

/// Checks a plan against the user pairs it is meant to serve.
///
/// A pair is served when at least one channel has its signal slot uniquely
/// assigned to one member and its idler slot uniquely assigned to the other.
/// Contested slots serve nobody.
pub fn validate_plan(plan: &AllocationPlan, requested: &[(UserId, UserId)]) -> PlanValidation {
    let mut violations = Vec::new();

    let mut by_slot: BTreeMap<FrequencySlot, Vec<UserId>> = BTreeMap::new();
    for a in &plan.assignments {
        by_slot.entry(a.slot).or_default().push(a.user.clone());
    }
    for (slot, users) in by_slot {
        if users.len() > 1 {
            violations.push(PlanViolation::DoubleAssignment { slot, users });
        }
    }

    for (a, b) in requested {
        if plan.shared_channels(a.as_str(), b.as_str()).is_empty() {
            violations.push(PlanViolation::UnservedPair {
                a: a.clone(),
                b: b.clone(),
            });
        }
    }

    PlanValidation { violations }
}
