//! Software-defined control plane: singles monitoring, failure diagnosis,
//! protection switching and verification.
//!
//! The controller never reads span status directly. It sees singles rates,
//! compares them against per-detector thresholds and infers which span broke
//! from the set of users that went dark.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{AllocationPlan, FrequencySlot};
use crate::math;
use crate::network::{NetworkError, SimulatedNetwork};
use crate::photonics::PhotonicsConfig;
use crate::rng::derive_seed;
use crate::topology::{
    resolve_lightpath, routes_under, set_device_state, set_wss_route, Lightpath, MemsState,
    NetworkState, Route, Topology, TopologyError,
};
use crate::{DeviceId, SpanId, UserId};

/// Largest loss deviation accepted when verifying a recovered path.
pub const VERIFY_TOLERANCE_DB: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("no route available around failed spans {0:?}")]
    NoRouteAvailable(Vec<SpanId>),
    #[error("command {index} rejected: {source}")]
    InvalidCommand { index: usize, source: TopologyError },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

fn default_hysteresis() -> f64 {
    1.2
}

fn default_interval() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthPolicy {
    /// Minimum singles rate per detector, counts per second.
    pub thresholds: BTreeMap<UserId, f64>,
    #[serde(default = "default_hysteresis")]
    pub hysteresis: f64,
    #[serde(default = "default_interval")]
    pub interval_s: f64,
    /// Move traffic back to the lowest-loss routes when a span is restored.
    #[serde(default)]
    pub revert_on_restore: bool,
}

impl HealthPolicy {
    /// Thresholds at `factor` times each detector's dark rate.
    pub fn from_dark_rates(photonics: &PhotonicsConfig, factor: f64) -> Self {
        Self {
            thresholds: photonics
                .detectors
                .iter()
                .map(|(u, d)| (u.clone(), factor * d.dark))
                .collect(),
            hysteresis: default_hysteresis(),
            interval_s: default_interval(),
            revert_on_restore: false,
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        for (u, t) in &self.thresholds {
            if !(*t > 0.0) {
                return Err(ControlError::InvalidPolicy(alloc::format!(
                    "threshold for {u} must be positive"
                )));
            }
        }
        if !(self.hysteresis >= 1.0) {
            return Err(ControlError::InvalidPolicy("hysteresis below 1".to_string()));
        }
        if !(self.interval_s > 0.0) {
            return Err(ControlError::InvalidPolicy("interval must be positive".to_string()));
        }
        Ok(())
    }

    pub fn threshold(&self, user: &str) -> Option<f64> {
        self.thresholds.get(user).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Up,
    Down,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Up => "up",
            Status::Down => "down",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStatus {
    pub status: Status,
    pub reading: Option<f64>,
    pub time_s: f64,
}

pub type Statuses = BTreeMap<UserId, LinkStatus>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatusChange {
    pub user: UserId,
    pub from: Status,
    pub to: Status,
    pub reading: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assessment {
    pub statuses: Statuses,
    pub changes: Vec<StatusChange>,
    pub missing: Vec<UserId>,
}

/// Updates link statuses from one set of readings.
///
/// A user goes down as soon as its reading drops below threshold but only
/// comes back once the reading exceeds `hysteresis × threshold`. A monitored
/// user without a reading is down. Users without a threshold are ignored.
pub fn assess(
    readings: &BTreeMap<UserId, f64>,
    monitored: &BTreeSet<UserId>,
    policy: &HealthPolicy,
    previous: &Statuses,
    time_s: f64,
) -> Assessment {
    let mut out = Assessment::default();
    for user in monitored {
        let Some(threshold) = policy.threshold(user.as_str()) else {
            continue;
        };
        let before = previous.get(user).map_or(Status::Up, |s| s.status);
        let reading = readings.get(user).copied();
        let now = match reading {
            None => {
                out.missing.push(user.clone());
                Status::Down
            }
            Some(r) if r < threshold => Status::Down,
            Some(r) => match before {
                Status::Up => Status::Up,
                Status::Down if r > policy.hysteresis * threshold => Status::Up,
                Status::Down => Status::Down,
            },
        };
        if now != before {
            out.changes.push(StatusChange {
                user: user.clone(),
                from: before,
                to: now,
                reading,
            });
        }
        out.statuses.insert(
            user.clone(),
            LinkStatus {
                status: now,
                reading,
                time_s,
            },
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Diagnosis {
    Healthy,
    Span { span: SpanId },
    /// Several spans whose users together are exactly the down set.
    MultiSpan { spans: Vec<SpanId> },
    Inconclusive { down: Vec<UserId> },
}

impl Diagnosis {
    pub fn spans(&self) -> Vec<SpanId> {
        match self {
            Diagnosis::Span { span } => alloc::vec![span.clone()],
            Diagnosis::MultiSpan { spans } => spans.clone(),
            _ => Vec::new(),
        }
    }
}

/// Users whose allocated slots are meant to cross each span, judged on the
/// configured routes with every span assumed up.
fn span_users(
    topology: &Topology,
    state: &NetworkState,
    plan: &AllocationPlan,
    monitored: &BTreeSet<UserId>,
) -> Result<BTreeMap<SpanId, BTreeSet<UserId>>, TopologyError> {
    let nominal = state.nominal();
    let mut map: BTreeMap<SpanId, BTreeSet<UserId>> =
        topology.spans.keys().map(|s| (s.clone(), BTreeSet::new())).collect();
    for (slot, user) in plan.routable() {
        if !monitored.contains(&user) {
            continue;
        }
        if let Some(path) = resolve_lightpath(topology, &nominal, slot, user.as_str())?.into_path() {
            for s in path.spans() {
                map.entry(s.clone()).or_default().insert(user.clone());
            }
        }
    }
    Ok(map)
}

/// Locates the failed span from the set of down users.
pub fn diagnose(
    statuses: &Statuses,
    topology: &Topology,
    state: &NetworkState,
    plan: &AllocationPlan,
) -> Result<Diagnosis, TopologyError> {
    let down: BTreeSet<UserId> = statuses
        .iter()
        .filter(|(_, s)| s.status == Status::Down)
        .map(|(u, _)| u.clone())
        .collect();
    if down.is_empty() {
        return Ok(Diagnosis::Healthy);
    }
    let monitored: BTreeSet<UserId> = statuses.keys().cloned().collect();
    let users = span_users(topology, state, plan, &monitored)?;

    let exact: Vec<&SpanId> = users
        .iter()
        .filter(|(_, u)| **u == down)
        .map(|(s, _)| s)
        .collect();
    if exact.len() == 1 {
        return Ok(Diagnosis::Span {
            span: exact[0].clone(),
        });
    }
    if exact.is_empty() {
        let parts: Vec<(&SpanId, &BTreeSet<UserId>)> = users
            .iter()
            .filter(|(_, u)| !u.is_empty() && u.is_subset(&down))
            .collect();
        let union: BTreeSet<UserId> = parts.iter().flat_map(|(_, u)| u.iter().cloned()).collect();
        if parts.len() > 1 && union == down {
            return Ok(Diagnosis::MultiSpan {
                spans: parts.into_iter().map(|(s, _)| s.clone()).collect(),
            });
        }
    }
    Ok(Diagnosis::Inconclusive {
        down: down.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    SetWssRoute {
        device: DeviceId,
        slot: FrequencySlot,
        port: Option<String>,
    },
    SetMems {
        device: DeviceId,
        state: MemsState,
    },
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::SetWssRoute { device, slot, port } => match port {
                Some(p) => write!(f, "{device}: {slot} -> {p}"),
                None => write!(f, "{device}: clear {slot}"),
            },
            Command::SetMems { device, state } => write!(f, "{device}: {state}"),
        }
    }
}

fn apply_command(
    topology: &Topology,
    state: &NetworkState,
    cmd: &Command,
) -> Result<NetworkState, TopologyError> {
    match cmd {
        Command::SetWssRoute { device, slot, port } => {
            set_wss_route(topology, state, device.as_str(), *slot, port.as_deref())
        }
        Command::SetMems { device, state: s } => set_device_state(topology, state, device.as_str(), *s),
    }
}

/// Loss a recovered slot is expected to show.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedPath {
    pub slot: FrequencySlot,
    pub user: UserId,
    pub loss_db: f64,
    pub route: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryPlan {
    pub failed_spans: Vec<SpanId>,
    /// WSS updates first, then MEMS positions.
    pub commands: Vec<Command>,
    pub expected: Vec<ExpectedPath>,
    pub mems: BTreeMap<DeviceId, MemsState>,
}

impl RecoveryPlan {
    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    pub fn total_loss_db(&self) -> f64 {
        self.expected.iter().map(|e| e.loss_db).sum()
    }

    /// Expected loss of each user's highest-loss recovered slot.
    pub fn loss_by_user(&self) -> BTreeMap<UserId, f64> {
        let mut out: BTreeMap<UserId, f64> = BTreeMap::new();
        for e in &self.expected {
            let v = out.entry(e.user.clone()).or_insert(f64::NEG_INFINITY);
            *v = v.max(e.loss_db);
        }
        out
    }
}

struct Candidate {
    mems: BTreeMap<DeviceId, MemsState>,
    routes: Vec<(FrequencySlot, UserId, Route)>,
    commands: Vec<Command>,
    loss: f64,
}

fn wss_changes(state: &NetworkState, slot: FrequencySlot, route: &Route) -> usize {
    route
        .wss
        .iter()
        .filter(|(d, p)| state.wss_route(d.as_str(), slot) != Some(p.as_str()))
        .count()
}

/// Searches MEMS positions and WSS outputs for the cheapest way to serve
/// `affected` while every path in `keep` stays exactly as it is.
fn optimize(
    topology: &Topology,
    state: &NetworkState,
    failed: &BTreeSet<SpanId>,
    affected: &BTreeMap<FrequencySlot, UserId>,
    keep: &[Lightpath],
) -> Result<Option<Candidate>, TopologyError> {
    let mut best: Option<Candidate> = None;
    for combo in crate::topology::mems_combinations(topology) {
        let mut trial = state.nominal();
        for (d, s) in &combo {
            trial.mems.insert(d.clone(), *s);
        }
        let mut kept = true;
        for path in keep {
            let now = resolve_lightpath(topology, &trial, path.slot, path.user.as_str())?;
            if !now.path().is_some_and(|p| p.same_route(path)) {
                kept = false;
                break;
            }
        }
        if !kept {
            continue;
        }

        let mut routes = Vec::with_capacity(affected.len());
        let mut loss = 0.0;
        let mut feasible = true;
        for (slot, user) in affected {
            let options = routes_under(topology, &combo, user.as_str(), Some(*slot), Some(failed))?;
            let choice = options.into_iter().min_by(|a, b| {
                a.loss_db()
                    .partial_cmp(&b.loss_db())
                    .unwrap_or(core::cmp::Ordering::Equal)
                    .then(wss_changes(state, *slot, a).cmp(&wss_changes(state, *slot, b)))
            });
            match choice {
                Some(r) => {
                    loss += r.loss_db();
                    routes.push((*slot, user.clone(), r));
                }
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if !feasible {
            continue;
        }

        let mut commands = Vec::new();
        for (slot, _, r) in &routes {
            for (d, p) in &r.wss {
                if state.wss_route(d.as_str(), *slot) != Some(p.as_str()) {
                    commands.push(Command::SetWssRoute {
                        device: d.clone(),
                        slot: *slot,
                        port: Some(p.clone()),
                    });
                }
            }
        }
        for (d, s) in &combo {
            if state.mems_state(d.as_str()).unwrap_or_default() != *s {
                commands.push(Command::SetMems {
                    device: d.clone(),
                    state: *s,
                });
            }
        }

        let better = match &best {
            None => true,
            Some(b) => {
                let tol = 1e-9 * b.loss.abs().max(1.0);
                loss < b.loss - tol || (math::abs(loss - b.loss) <= tol && commands.len() < b.commands.len())
            }
        };
        if better {
            best = Some(Candidate {
                mems: combo,
                routes,
                commands,
                loss,
            });
        }
    }
    Ok(best)
}

fn plan_from(candidate: Candidate, failed: &BTreeSet<SpanId>) -> RecoveryPlan {
    RecoveryPlan {
        failed_spans: failed.iter().cloned().collect(),
        commands: candidate.commands,
        expected: candidate
            .routes
            .iter()
            .map(|(slot, user, r)| ExpectedPath {
                slot: *slot,
                user: user.clone(),
                loss_db: r.loss_db(),
                route: r.hops.iter().map(|h| h.element.id().to_string()).collect(),
            })
            .collect(),
        mems: candidate.mems,
    }
}

/// Splits the allocated slots into those that must move and the paths that
/// must be left alone.
fn partition(
    topology: &Topology,
    state: &NetworkState,
    plan: &AllocationPlan,
    failed: &BTreeSet<SpanId>,
) -> Result<(BTreeMap<FrequencySlot, UserId>, Vec<Lightpath>), TopologyError> {
    let nominal = state.nominal();
    let mut affected = BTreeMap::new();
    let mut keep = Vec::new();
    for (slot, user) in plan.routable() {
        match resolve_lightpath(topology, &nominal, slot, user.as_str())?.into_path() {
            Some(p) if !p.spans().any(|s| failed.contains(s)) => keep.push(p),
            _ => {
                affected.insert(slot, user);
            }
        }
    }
    Ok((affected, keep))
}

/// Plans a reconfiguration that serves every allocated slot while avoiding
/// `failed`. Slots whose routes do not touch a failed span keep their exact
/// paths; among the remaining options the lowest total loss wins, then the
/// fewest commands.
pub fn plan_recovery(
    topology: &Topology,
    state: &NetworkState,
    plan: &AllocationPlan,
    failed: &BTreeSet<SpanId>,
) -> Result<RecoveryPlan, ControlError> {
    let (affected, keep) = partition(topology, state, plan, failed)?;
    if affected.is_empty() {
        return Ok(RecoveryPlan {
            failed_spans: failed.iter().cloned().collect(),
            commands: Vec::new(),
            expected: Vec::new(),
            mems: state.mems.clone(),
        });
    }
    match optimize(topology, state, failed, &affected, &keep)? {
        Some(c) => Ok(plan_from(c, failed)),
        None => Err(ControlError::NoRouteAvailable(failed.iter().cloned().collect())),
    }
}

/// Like [`plan_recovery`] but free to move every slot; used to return to the
/// lowest-loss configuration after a repair.
pub fn plan_reoptimize(
    topology: &Topology,
    state: &NetworkState,
    plan: &AllocationPlan,
    failed: &BTreeSet<SpanId>,
) -> Result<RecoveryPlan, ControlError> {
    let affected = plan.routable();
    match optimize(topology, state, failed, &affected, &[])? {
        Some(c) => Ok(plan_from(c, failed)),
        None => Err(ControlError::NoRouteAvailable(failed.iter().cloned().collect())),
    }
}

/// Result of programming an allocation onto the WSS tables.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationOutcome {
    pub state: NetworkState,
    pub commands: Vec<Command>,
    /// Slots with no route under the current switch positions.
    pub unrouted: Vec<(FrequencySlot, UserId)>,
}

/// Writes WSS routes for `plan` under the current MEMS positions, choosing the
/// lowest-loss path for each slot and clearing entries of unallocated slots.
pub fn program_allocation(
    topology: &Topology,
    state: &NetworkState,
    plan: &AllocationPlan,
    failed: &BTreeSet<SpanId>,
) -> Result<AllocationOutcome, TopologyError> {
    let mut next = state.clone();
    for table in next.wss.values_mut() {
        table.clear();
    }
    let mut unrouted = Vec::new();
    for (slot, user) in plan.routable() {
        let best = routes_under(topology, &state.mems, user.as_str(), Some(slot), Some(failed))?
            .into_iter()
            .min_by(|a, b| {
                a.loss_db()
                    .partial_cmp(&b.loss_db())
                    .unwrap_or(core::cmp::Ordering::Equal)
            });
        match best {
            Some(r) => next = r.apply(&next, slot),
            None => unrouted.push((slot, user)),
        }
    }

    let mut commands = Vec::new();
    let devices: BTreeSet<&DeviceId> = state.wss.keys().chain(next.wss.keys()).collect();
    for d in devices {
        let empty = BTreeMap::new();
        let old = state.wss.get(d).unwrap_or(&empty);
        let new = next.wss.get(d).unwrap_or(&empty);
        let slots: BTreeSet<&FrequencySlot> = old.keys().chain(new.keys()).collect();
        for slot in slots {
            if old.get(slot) != new.get(slot) {
                commands.push(Command::SetWssRoute {
                    device: d.clone(),
                    slot: *slot,
                    port: new.get(slot).cloned(),
                });
            }
        }
    }
    Ok(AllocationOutcome {
        state: next,
        commands,
        unrouted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotCheck {
    pub slot: FrequencySlot,
    pub user: UserId,
    pub expected_db: Option<f64>,
    pub actual_db: Option<f64>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<SlotCheck>,
    pub success: bool,
    pub rolled_back: bool,
}

/// Rejects a plan that names unknown devices, ports or wrong device kinds,
/// before anything is touched.
pub fn validate_commands(topology: &Topology, commands: &[Command]) -> Result<(), ControlError> {
    let mut scratch = NetworkState::default();
    for (index, cmd) in commands.iter().enumerate() {
        scratch = apply_command(topology, &scratch, cmd)
            .map_err(|source| ControlError::InvalidCommand { index, source })?;
    }
    Ok(())
}

/// Applies a plan and checks the outcome on the live state.
///
/// Every recovered slot must resolve with a loss within
/// [`VERIFY_TOLERANCE_DB`] of the plan, and every path that resolved before
/// must still resolve identically. On failure the original state is
/// returned together with a report marked `rolled_back`.
pub fn execute_and_verify(
    topology: &Topology,
    state: &NetworkState,
    plan: &AllocationPlan,
    recovery: &RecoveryPlan,
) -> Result<(NetworkState, VerificationReport), ControlError> {
    validate_commands(topology, &recovery.commands)?;

    let mut before = Vec::new();
    for (slot, user) in plan.routable() {
        if let Some(p) = resolve_lightpath(topology, state, slot, user.as_str())?.into_path() {
            before.push(p);
        }
    }

    let mut next = state.clone();
    for cmd in &recovery.commands {
        next = apply_command(topology, &next, cmd)?;
    }

    let mut checks = Vec::new();
    for e in &recovery.expected {
        let actual = resolve_lightpath(topology, &next, e.slot, e.user.as_str())?
            .path()
            .map(|p| p.total_loss_db);
        let ok = actual.is_some_and(|a| math::abs(a - e.loss_db) <= VERIFY_TOLERANCE_DB);
        checks.push(SlotCheck {
            slot: e.slot,
            user: e.user.clone(),
            expected_db: Some(e.loss_db),
            actual_db: actual,
            ok,
        });
    }
    for p in &before {
        if recovery.expected.iter().any(|e| e.slot == p.slot) {
            continue;
        }
        let now = resolve_lightpath(topology, &next, p.slot, p.user.as_str())?;
        let ok = now.path().is_some_and(|q| q.same_route(p));
        checks.push(SlotCheck {
            slot: p.slot,
            user: p.user.clone(),
            expected_db: Some(p.total_loss_db),
            actual_db: now.path().map(|q| q.total_loss_db),
            ok,
        });
    }

    let success = checks.iter().all(|c| c.ok);
    if success {
        Ok((
            next,
            VerificationReport {
                checks,
                success,
                rolled_back: false,
            },
        ))
    } else {
        Ok((
            state.clone(),
            VerificationReport {
                checks,
                success,
                rolled_back: true,
            },
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind {
    Reading {
        readings: BTreeMap<UserId, f64>,
    },
    StatusChange(StatusChange),
    Diagnosis {
        diagnosis: Diagnosis,
    },
    Plan {
        plan: RecoveryPlan,
    },
    Execute {
        commands: Vec<Command>,
    },
    Verify {
        report: VerificationReport,
    },
    Alert {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerEvent {
    pub seq: u64,
    pub time_s: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Controller memory between cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub policy: HealthPolicy,
    pub statuses: Statuses,
    /// Spans diagnosed as failed and not yet reported repaired.
    pub known_failed: BTreeSet<SpanId>,
    log: Vec<ControllerEvent>,
    last_time: f64,
}

impl Controller {
    pub fn new(policy: HealthPolicy) -> Self {
        Self {
            policy,
            statuses: Statuses::new(),
            known_failed: BTreeSet::new(),
            log: Vec::new(),
            last_time: f64::NEG_INFINITY,
        }
    }

    pub fn log(&self) -> &[ControllerEvent] {
        &self.log
    }

    fn emit(&mut self, out: &mut Vec<ControllerEvent>, time_s: f64, kind: EventKind) {
        // the log is append-only with nondecreasing timestamps
        let time_s = time_s.max(self.last_time);
        self.last_time = time_s;
        let event = ControllerEvent {
            seq: self.log.len() as u64,
            time_s,
            kind,
        };
        self.log.push(event.clone());
        out.push(event);
    }

    /// Users the controller expects light for under the current allocation.
    fn monitored(&self, net: &SimulatedNetwork) -> BTreeSet<UserId> {
        net.plan
            .routable()
            .into_values()
            .filter(|u| self.policy.threshold(u.as_str()).is_some())
            .collect()
    }

    fn observe(
        &mut self,
        net: &SimulatedNetwork,
        time_s: f64,
        seed: u64,
        out: &mut Vec<ControllerEvent>,
    ) -> Result<(), ControlError> {
        let monitored = self.monitored(net);
        let readings: BTreeMap<UserId, f64> = net
            .sample_singles(self.policy.interval_s, seed)?
            .into_iter()
            .filter(|(u, _)| monitored.contains(u))
            .collect();
        self.emit(out, time_s, EventKind::Reading {
            readings: readings.clone(),
        });
        let a = assess(&readings, &monitored, &self.policy, &self.statuses, time_s);
        for user in &a.missing {
            self.emit(out, time_s, EventKind::Alert {
                message: alloc::format!("no reading from {user}"),
            });
        }
        for change in a.changes {
            self.emit(out, time_s, EventKind::StatusChange(change));
        }
        self.statuses = a.statuses;
        Ok(())
    }

    fn execute(
        &mut self,
        net: &mut SimulatedNetwork,
        recovery: &RecoveryPlan,
        time_s: f64,
        out: &mut Vec<ControllerEvent>,
    ) -> Result<bool, ControlError> {
        self.emit(out, time_s, EventKind::Plan {
            plan: recovery.clone(),
        });
        let (state, report) = execute_and_verify(net.topology(), &net.state, &net.plan, recovery)?;
        self.emit(out, time_s, EventKind::Execute {
            commands: recovery.commands.clone(),
        });
        let success = report.success;
        net.state = state;
        self.emit(out, time_s, EventKind::Verify { report });
        Ok(success)
    }

    /// One monitoring pass: read, assess, and if anything is down diagnose,
    /// plan, execute and verify, then read again.
    pub fn cycle(
        &mut self,
        net: &mut SimulatedNetwork,
        time_s: f64,
        seed: u64,
    ) -> Result<Vec<ControllerEvent>, ControlError> {
        let mut out = Vec::new();
        self.observe(net, time_s, derive_seed(seed, &[0]), &mut out)?;
        if self.statuses.values().all(|s| s.status == Status::Up) {
            return Ok(out);
        }

        let diagnosis = diagnose(&self.statuses, net.topology(), &net.state, &net.plan)?;
        self.emit(&mut out, time_s, EventKind::Diagnosis {
            diagnosis: diagnosis.clone(),
        });
        let spans = diagnosis.spans();
        if spans.is_empty() {
            return Ok(out);
        }
        self.known_failed.extend(spans);

        let recovery = match plan_recovery(net.topology(), &net.state, &net.plan, &self.known_failed) {
            Ok(p) => p,
            Err(ControlError::NoRouteAvailable(failed)) => {
                let mut message = String::from("NoRouteAvailable:");
                for s in &failed {
                    message.push(' ');
                    message.push_str(s.as_str());
                }
                self.emit(&mut out, time_s, EventKind::Alert { message });
                return Ok(out);
            }
            Err(e) => return Err(e),
        };
        self.execute(net, &recovery, time_s, &mut out)?;

        let after = time_s + self.policy.interval_s;
        self.observe(net, after, derive_seed(seed, &[1]), &mut out)?;
        Ok(out)
    }

    /// Tells the controller a span has been repaired. With
    /// `revert_on_restore` set, traffic is moved back onto the lowest-loss
    /// routes.
    pub fn span_restored(
        &mut self,
        net: &mut SimulatedNetwork,
        span: &str,
        time_s: f64,
    ) -> Result<Vec<ControllerEvent>, ControlError> {
        let mut out = Vec::new();
        if !self.known_failed.remove(span) || !self.policy.revert_on_restore {
            return Ok(out);
        }
        let recovery = plan_reoptimize(net.topology(), &net.state, &net.plan, &self.known_failed)?;
        if !recovery.is_empty() {
            self.execute(net, &recovery, time_s, &mut out)?;
        }
        Ok(out)
    }

    /// Reprograms the WSS tables for a new allocation around known failures.
    pub fn set_allocation(
        &mut self,
        net: &mut SimulatedNetwork,
        plan: AllocationPlan,
        time_s: f64,
    ) -> Result<Vec<ControllerEvent>, ControlError> {
        let mut out = Vec::new();
        let outcome = program_allocation(net.topology(), &net.state, &plan, &self.known_failed)?;
        net.state = outcome.state;
        net.plan = plan;
        // statuses of users that left the plan are meaningless now
        let monitored = self.monitored(net);
        self.statuses.retain(|u, _| monitored.contains(u));
        self.emit(&mut out, time_s, EventKind::Execute {
            commands: outcome.commands,
        });
        for (slot, user) in outcome.unrouted {
            self.emit(&mut out, time_s, EventKind::Alert {
                message: alloc::format!("slot {slot} for {user} has no route"),
            });
        }
        Ok(out)
    }
}

/// One controller pass over a simulated network with a fresh controller
/// memory. Long-running simulations should keep a [`Controller`] instead.
pub fn controller_cycle(
    net: &mut SimulatedNetwork,
    policy: &HealthPolicy,
    time_s: f64,
    seed: u64,
) -> Result<Vec<ControllerEvent>, ControlError> {
    Controller::new(policy.clone()).cycle(net, time_s, seed)
}
