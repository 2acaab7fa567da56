use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

use super::{Device, DeviceKind, Element, Endpoint, MemsState, NetworkState, Topology, TopologyError};
use crate::grid::FrequencySlot;
use crate::{DeviceId, SpanId, UserId};

// Longest walk through the port graph before we call it a loop.
const MAX_HOPS: usize = 64;

/// One traversal of a device, span or user station.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hop {
    pub element: Element,
    pub entry: String,
    /// `None` for the terminating user station.
    pub exit: Option<String>,
    pub loss_db: f64,
}

impl Hop {
    fn same_route(&self, other: &Hop) -> bool {
        self.element == other.element && self.entry == other.entry && self.exit == other.exit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lightpath {
    pub slot: FrequencySlot,
    pub user: UserId,
    pub hops: Vec<Hop>,
    pub total_loss_db: f64,
}

impl Lightpath {
    fn new(slot: FrequencySlot, user: UserId, hops: Vec<Hop>) -> Self {
        let total_loss_db = hops.iter().map(|h| h.loss_db).sum();
        Self {
            slot,
            user,
            hops,
            total_loss_db,
        }
    }

    pub fn traverses_span(&self, span: &str) -> bool {
        self.hops
            .iter()
            .any(|h| matches!(&h.element, Element::Span(s) if s.as_str() == span))
    }

    pub fn spans(&self) -> impl Iterator<Item = &SpanId> {
        self.hops.iter().filter_map(|h| match &h.element {
            Element::Span(s) => Some(s),
            _ => None,
        })
    }

    /// Element ids along the path, e.g. `["WSS1", "A-C", "SW2x2", "WSS3", "C1"]`.
    pub fn element_ids(&self) -> Vec<&str> {
        self.hops.iter().map(|h| h.element.id()).collect()
    }

    pub fn same_route(&self, other: &Lightpath) -> bool {
        self.hops.len() == other.hops.len()
            && self.hops.iter().zip(&other.hops).all(|(a, b)| a.same_route(b))
    }

    pub fn transmittance(&self) -> f64 {
        crate::math::db_to_transmittance(self.total_loss_db)
    }
}

/// Sum of hop losses; zero for an empty hop list.
pub fn path_loss_db(hops: &[Hop]) -> f64 {
    hops.iter().map(|h| h.loss_db).sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum BlockReason {
    SpanFailed,
    /// WSS has no routing entry for the slot.
    NoRoute,
    /// MEMS position does not connect the entry port.
    SwitchOpen,
    /// Light entered a WSS through an output port.
    WrongDirection,
    Unwired,
    /// Light reached a different user.
    WrongUser(UserId),
    Loop,
}

/// The first element that does not pass the slot on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Blocked {
    pub element: Element,
    pub port: String,
    pub reason: BlockReason,
}

impl fmt::Display for Blocked {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "blocked at {}.{}: {:?}", self.element, self.port, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Resolution {
    Path(Lightpath),
    Blocked(Blocked),
}

impl Resolution {
    pub fn path(&self) -> Option<&Lightpath> {
        match self {
            Resolution::Path(p) => Some(p),
            Resolution::Blocked(_) => None,
        }
    }

    pub fn into_path(self) -> Option<Lightpath> {
        match self {
            Resolution::Path(p) => Some(p),
            Resolution::Blocked(_) => None,
        }
    }

    pub fn is_blocked(&self) -> bool {
        matches!(self, Resolution::Blocked(_))
    }
}

fn mems_exit(kind: &DeviceKind, state: MemsState, entry: &str) -> Option<&'static str> {
    match (kind, state, entry) {
        (DeviceKind::Mems2x1 { .. }, MemsState::Pass, "p1") => Some("com"),
        (DeviceKind::Mems2x1 { .. }, MemsState::Cross, "p2") => Some("com"),
        (DeviceKind::Mems2x1 { .. }, MemsState::Pass, "com") => Some("p1"),
        (DeviceKind::Mems2x1 { .. }, MemsState::Cross, "com") => Some("p2"),
        (DeviceKind::Mems2x2 { .. }, MemsState::Pass, "x1") => Some("y1"),
        (DeviceKind::Mems2x2 { .. }, MemsState::Pass, "y1") => Some("x1"),
        (DeviceKind::Mems2x2 { .. }, MemsState::Pass, "x2") => Some("y2"),
        (DeviceKind::Mems2x2 { .. }, MemsState::Pass, "y2") => Some("x2"),
        (DeviceKind::Mems2x2 { .. }, MemsState::Cross, "x1") => Some("y2"),
        (DeviceKind::Mems2x2 { .. }, MemsState::Cross, "y2") => Some("x1"),
        (DeviceKind::Mems2x2 { .. }, MemsState::Cross, "x2") => Some("y1"),
        (DeviceKind::Mems2x2 { .. }, MemsState::Cross, "y1") => Some("x2"),
        _ => None,
    }
}

fn circulator_exit(entry: &str) -> Option<&'static str> {
    match entry {
        "1" => Some("2"),
        "2" => Some("3"),
        "3" => Some("1"),
        _ => None,
    }
}

/// How a non-WSS device passes light entering at `entry`.
fn fixed_transit(
    device: &Device,
    mems: Option<MemsState>,
    entry: &str,
) -> Result<(String, f64), BlockReason> {
    match &device.kind {
        DeviceKind::Mems2x1 { loss_db } | DeviceKind::Mems2x2 { loss_db } => {
            let state = mems.unwrap_or_default();
            mems_exit(&device.kind, state, entry)
                .map(|p| (p.to_string(), *loss_db))
                .ok_or(BlockReason::SwitchOpen)
        }
        DeviceKind::Circulator { loss_db } => circulator_exit(entry)
            .map(|p| (p.to_string(), *loss_db))
            .ok_or(BlockReason::Unwired),
        DeviceKind::Wss { .. } => unreachable!("wss transit depends on routing"),
    }
}

fn blocked(at: &Endpoint, reason: BlockReason) -> Resolution {
    Resolution::Blocked(Blocked {
        element: at.element.clone(),
        port: at.port.clone(),
        reason,
    })
}

/// Follows a slot from the source through the current device states.
///
/// The walk is deterministic: each WSS sends a slot to at most one output, so
/// a slot has at most one lightpath. Anything that stops the light is reported
/// as [`Resolution::Blocked`]; only an unknown user is an error.
pub fn resolve_lightpath(
    topology: &Topology,
    state: &NetworkState,
    slot: FrequencySlot,
    user: &str,
) -> Result<Resolution, TopologyError> {
    let target = topology.user(user)?;
    let mut hops = Vec::new();
    let mut cursor = topology.source_endpoint();

    for _ in 0..MAX_HOPS {
        let Some(next) = topology.peer(&cursor) else {
            return Ok(blocked(&cursor, BlockReason::Unwired));
        };
        match &next.element {
            Element::User(u) => {
                if *u != target.id {
                    return Ok(blocked(next, BlockReason::WrongUser(u.clone())));
                }
                hops.push(Hop {
                    element: next.element.clone(),
                    entry: next.port.clone(),
                    exit: None,
                    loss_db: target.analyzer_loss_db,
                });
                return Ok(Resolution::Path(Lightpath::new(slot, u.clone(), hops)));
            }
            Element::Source(_) => return Ok(blocked(next, BlockReason::Loop)),
            Element::Span(s) => {
                if state.is_failed(s.as_str()) {
                    return Ok(blocked(next, BlockReason::SpanFailed));
                }
                let span = &topology.spans[s];
                let exit = if next.port == "a" { "b" } else { "a" };
                hops.push(Hop {
                    element: next.element.clone(),
                    entry: next.port.clone(),
                    exit: Some(exit.to_string()),
                    loss_db: span.loss_db,
                });
                cursor = Endpoint {
                    element: next.element.clone(),
                    port: exit.to_string(),
                };
            }
            Element::Device(d) => {
                let device = &topology.devices[d];
                let (exit, loss) = match &device.kind {
                    DeviceKind::Wss { input, outputs } => {
                        if next.port != *input {
                            return Ok(blocked(next, BlockReason::WrongDirection));
                        }
                        let Some(port) = state.wss_route(d.as_str(), slot) else {
                            return Ok(blocked(next, BlockReason::NoRoute));
                        };
                        let loss = outputs[port].loss_for(Some(slot));
                        (port.to_string(), loss)
                    }
                    _ => match fixed_transit(device, state.mems_state(d.as_str()), &next.port) {
                        Ok(t) => t,
                        Err(reason) => return Ok(blocked(next, reason)),
                    },
                };
                hops.push(Hop {
                    element: next.element.clone(),
                    entry: next.port.clone(),
                    exit: Some(exit.clone()),
                    loss_db: loss,
                });
                cursor = Endpoint {
                    element: next.element.clone(),
                    port: exit,
                };
            }
        }
    }
    Ok(blocked(&cursor, BlockReason::Loop))
}

/// A way to reach a user: the MEMS positions it needs, the WSS outputs it
/// uses and the resulting hop list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Route {
    pub mems: BTreeMap<DeviceId, MemsState>,
    pub wss: BTreeMap<DeviceId, String>,
    pub hops: Vec<Hop>,
}

impl Route {
    pub fn loss_db(&self) -> f64 {
        path_loss_db(&self.hops)
    }

    pub fn traverses_span(&self, span: &str) -> bool {
        self.hops
            .iter()
            .any(|h| matches!(&h.element, Element::Span(s) if s.as_str() == span))
    }

    pub fn spans(&self) -> BTreeSet<SpanId> {
        self.hops
            .iter()
            .filter_map(|h| match &h.element {
                Element::Span(s) => Some(s.clone()),
                _ => None,
            })
            .collect()
    }

    /// Writes the route's MEMS positions and WSS entries for `slot` into a
    /// state.
    pub fn apply(&self, state: &NetworkState, slot: FrequencySlot) -> NetworkState {
        let mut next = state.clone();
        for (d, s) in &self.mems {
            next.mems.insert(d.clone(), *s);
        }
        for (d, port) in &self.wss {
            next.wss.entry(d.clone()).or_default().insert(slot, port.clone());
        }
        next
    }

    fn same_hops(&self, other: &Route) -> bool {
        self.hops.len() == other.hops.len()
            && self.hops.iter().zip(&other.hops).all(|(a, b)| a.same_route(b))
    }
}

struct Search<'a> {
    topology: &'a Topology,
    mems: &'a BTreeMap<DeviceId, MemsState>,
    target: &'a UserId,
    slot: Option<FrequencySlot>,
    failed: Option<&'a BTreeSet<SpanId>>,
    found: Vec<(BTreeMap<DeviceId, String>, Vec<Hop>)>,
}

impl Search<'_> {
    fn walk(
        &mut self,
        cursor: Endpoint,
        hops: &mut Vec<Hop>,
        wss: &mut BTreeMap<DeviceId, String>,
    ) {
        if hops.len() >= MAX_HOPS {
            return;
        }
        let Some(next) = self.topology.peer(&cursor).cloned() else {
            return;
        };
        match &next.element {
            Element::User(u) => {
                if u == self.target {
                    let user = &self.topology.users[u];
                    hops.push(Hop {
                        element: next.element.clone(),
                        entry: next.port.clone(),
                        exit: None,
                        loss_db: user.analyzer_loss_db,
                    });
                    self.found.push((wss.clone(), hops.clone()));
                    hops.pop();
                }
            }
            Element::Source(_) => {}
            Element::Span(s) => {
                if self.failed.is_some_and(|f| f.contains(s)) {
                    return;
                }
                if hops.iter().any(|h| h.element == next.element) {
                    return;
                }
                let exit = if next.port == "a" { "b" } else { "a" };
                hops.push(Hop {
                    element: next.element.clone(),
                    entry: next.port.clone(),
                    exit: Some(exit.to_string()),
                    loss_db: self.topology.spans[s].loss_db,
                });
                self.walk(
                    Endpoint {
                        element: next.element.clone(),
                        port: exit.to_string(),
                    },
                    hops,
                    wss,
                );
                hops.pop();
            }
            Element::Device(d) => {
                let device = &self.topology.devices[d];
                match &device.kind {
                    DeviceKind::Wss { input, outputs } => {
                        if next.port != *input || wss.contains_key(d) {
                            return;
                        }
                        for (port, spec) in outputs {
                            hops.push(Hop {
                                element: next.element.clone(),
                                entry: next.port.clone(),
                                exit: Some(port.clone()),
                                loss_db: spec.loss_for(self.slot),
                            });
                            wss.insert(d.clone(), port.clone());
                            self.walk(
                                Endpoint {
                                    element: next.element.clone(),
                                    port: port.clone(),
                                },
                                hops,
                                wss,
                            );
                            wss.remove(d);
                            hops.pop();
                        }
                    }
                    _ => {
                        let state = self.mems.get(d).copied();
                        let Ok((exit, loss)) = fixed_transit(device, state, &next.port) else {
                            return;
                        };
                        if hops
                            .iter()
                            .any(|h| h.element == next.element && h.entry == next.port)
                        {
                            return;
                        }
                        hops.push(Hop {
                            element: next.element.clone(),
                            entry: next.port.clone(),
                            exit: Some(exit.clone()),
                            loss_db: loss,
                        });
                        self.walk(
                            Endpoint {
                                element: next.element.clone(),
                                port: exit,
                            },
                            hops,
                            wss,
                        );
                        hops.pop();
                    }
                }
            }
        }
    }
}

/// All paths to `user` for fixed MEMS positions, letting every WSS pick any
/// output. With `slot` set, per-slot WSS losses are included; spans in
/// `failed` are treated as unusable.
pub fn routes_under(
    topology: &Topology,
    mems: &BTreeMap<DeviceId, MemsState>,
    user: &str,
    slot: Option<FrequencySlot>,
    failed: Option<&BTreeSet<SpanId>>,
) -> Result<Vec<Route>, TopologyError> {
    let target = topology.user(user)?.id.clone();
    let mut search = Search {
        topology,
        mems,
        target: &target,
        slot,
        failed,
        found: Vec::new(),
    };
    search.walk(topology.source_endpoint(), &mut Vec::new(), &mut BTreeMap::new());
    Ok(search
        .found
        .into_iter()
        .map(|(wss, hops)| Route {
            mems: mems.clone(),
            wss,
            hops,
        })
        .collect())
}

/// Every assignment of pass/cross to the topology's MEMS switches, in
/// lexicographic order with `Pass` first.
pub(crate) fn mems_combinations(topology: &Topology) -> Vec<BTreeMap<DeviceId, MemsState>> {
    let ids: Vec<DeviceId> = topology.mems_devices().map(|d| d.id.clone()).collect();
    let n = ids.len();
    assert!(n < 16, "too many MEMS switches for exhaustive enumeration");
    (0..1u32 << n)
        .map(|bits| {
            ids.iter()
                .enumerate()
                .map(|(i, id)| {
                    let cross = bits & (1 << (n - 1 - i)) != 0;
                    let s = if cross { MemsState::Cross } else { MemsState::Pass };
                    (id.clone(), s)
                })
                .collect()
        })
        .collect()
}

/// Distinct physical routes from the source to `user` over all MEMS
/// combinations. Routes with identical hop lists are reported once, under
/// the first combination that produces them.
pub fn enumerate_routes(topology: &Topology, user: &str) -> Result<Vec<Route>, TopologyError> {
    topology.user(user)?;
    let mut routes: Vec<Route> = Vec::new();
    for combo in mems_combinations(topology) {
        for route in routes_under(topology, &combo, user, None, None)? {
            if !routes.iter().any(|r| r.same_hops(&route)) {
                routes.push(route);
            }
        }
    }
    Ok(routes)
}
