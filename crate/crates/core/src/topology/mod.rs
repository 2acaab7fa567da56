//! Switched optical topology.
//!
//! A [`Topology`] is immutable once built. Everything that changes at run
//! time (MEMS positions, WSS routing tables, failed spans) lives in a separate
//! [`NetworkState`] value that is passed explicitly, so several what-if states
//! can be evaluated against the same topology.

mod config;
mod resolve;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    DeviceConfig, MemsState, NodeConfig, NodeKind, RouteConfig, SlotLossConfig, SpanConfig,
    SpanStatus, TopologyConfig, WireConfig, WssPortConfig,
};
pub(crate) use resolve::mems_combinations;
pub use resolve::{
    enumerate_routes, path_loss_db, resolve_lightpath, routes_under, BlockReason, Blocked, Hop,
    Lightpath, Resolution, Route,
};

use crate::grid::FrequencySlot;
use crate::photonics::PhotonicsConfig;
use crate::{DeviceId, SpanId, UserId};

/// A wiring element. Ports belong to elements.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "lowercase")]
pub enum Element {
    Source(String),
    User(UserId),
    Device(DeviceId),
    Span(SpanId),
}

impl Element {
    pub fn id(&self) -> &str {
        match self {
            Element::Source(s) => s,
            Element::User(u) => u.as_str(),
            Element::Device(d) => d.as_str(),
            Element::Span(s) => s.as_str(),
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub element: Element,
    pub port: String,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.element, self.port)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WssPort {
    pub loss_db: f64,
    pub slot_extra_db: BTreeMap<FrequencySlot, f64>,
}

impl WssPort {
    pub fn loss_for(&self, slot: Option<FrequencySlot>) -> f64 {
        let extra = slot
            .and_then(|s| self.slot_extra_db.get(&s).copied())
            .unwrap_or(0.0);
        self.loss_db + extra
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceKind {
    Wss {
        input: String,
        outputs: BTreeMap<String, WssPort>,
    },
    Mems2x1 {
        loss_db: f64,
    },
    Mems2x2 {
        loss_db: f64,
    },
    /// Three-port circulator, light travels 1 -> 2 -> 3 -> 1.
    Circulator {
        loss_db: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub id: DeviceId,
    pub hub: Option<String>,
    pub kind: DeviceKind,
}

impl Device {
    pub fn ports(&self) -> Vec<String> {
        match &self.kind {
            DeviceKind::Wss { input, outputs } => {
                let mut ports = Vec::with_capacity(outputs.len() + 1);
                ports.push(input.clone());
                ports.extend(outputs.keys().cloned());
                ports
            }
            DeviceKind::Mems2x1 { .. } => ["p1", "p2", "com"].map(String::from).to_vec(),
            DeviceKind::Mems2x2 { .. } => ["x1", "x2", "y1", "y2"].map(String::from).to_vec(),
            DeviceKind::Circulator { .. } => ["1", "2", "3"].map(String::from).to_vec(),
        }
    }

    pub fn is_mems(&self) -> bool {
        matches!(
            self.kind,
            DeviceKind::Mems2x1 { .. } | DeviceKind::Mems2x2 { .. }
        )
    }

    pub fn is_wss(&self) -> bool {
        matches!(self.kind, DeviceKind::Wss { .. })
    }

    /// Scales every loss figure of the device by `factor`.
    pub fn scale_losses(&mut self, factor: f64) {
        match &mut self.kind {
            DeviceKind::Wss { outputs, .. } => {
                for port in outputs.values_mut() {
                    port.loss_db *= factor;
                    for extra in port.slot_extra_db.values_mut() {
                        *extra *= factor;
                    }
                }
            }
            DeviceKind::Mems2x1 { loss_db }
            | DeviceKind::Mems2x2 { loss_db }
            | DeviceKind::Circulator { loss_db } => *loss_db *= factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberSpan {
    pub id: SpanId,
    pub from: String,
    pub to: String,
    pub length_m: f64,
    pub loss_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserNode {
    pub id: UserId,
    pub hub: Option<String>,
    pub analyzer_loss_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub hub: Option<String>,
}

/// Run-time configuration of the data plane.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkState {
    pub mems: BTreeMap<DeviceId, MemsState>,
    pub wss: BTreeMap<DeviceId, BTreeMap<FrequencySlot, String>>,
    pub failed_spans: BTreeSet<SpanId>,
}

impl NetworkState {
    pub fn mems_state(&self, device: &str) -> Option<MemsState> {
        self.mems.get(device).copied()
    }

    pub fn wss_route(&self, device: &str, slot: FrequencySlot) -> Option<&str> {
        self.wss
            .get(device)
            .and_then(|table| table.get(&slot))
            .map(String::as_str)
    }

    pub fn is_failed(&self, span: &str) -> bool {
        self.failed_spans.contains(span)
    }

    /// Same device configuration with every span up; the controller's view of
    /// where light is meant to go.
    pub fn nominal(&self) -> NetworkState {
        NetworkState {
            failed_spans: BTreeSet::new(),
            ..self.clone()
        }
    }
}

/// Validation error from [`build_topology`], located by its path in the
/// configuration document.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {kind}")]
pub struct BuildError {
    pub path: String,
    pub kind: BuildErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildErrorKind {
    #[error("no source")]
    NoSource,
    #[error("more than one source")]
    MultipleSources,
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("unknown element {0}")]
    UnknownElement(String),
    #[error("element {element} has no port {port}")]
    UnknownPort { element: String, port: String },
    #[error("malformed endpoint {0}, expected <element>.<port>")]
    MalformedEndpoint(String),
    #[error("port conflict: {0} is wired more than once")]
    PortConflict(String),
    #[error("dangling port {0}")]
    DanglingPort(String),
    #[error("port {0} wired to itself")]
    SelfLoop(String),
    #[error("negative loss {0} dB")]
    NegativeLoss(String),
    #[error("invalid slot: {0}")]
    InvalidSlot(String),
    #[error("wss {device} has no output {port}")]
    UnknownWssOutput { device: String, port: String },
    #[error("unknown hub {0}")]
    UnknownHub(String),
}

fn err(path: impl Into<String>, kind: BuildErrorKind) -> BuildError {
    BuildError {
        path: path.into(),
        kind,
    }
}

/// Run-time lookup failures.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error("unknown span {0}")]
    UnknownSpan(SpanId),
    #[error("device {0} is not a MEMS switch")]
    NotMems(DeviceId),
    #[error("device {0} is not a WSS")]
    NotWss(DeviceId),
    #[error("wss {device} has no output {port}")]
    UnknownPort { device: DeviceId, port: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub name: String,
    pub nodes: Vec<Node>,
    pub devices: BTreeMap<DeviceId, Device>,
    pub spans: BTreeMap<SpanId, FiberSpan>,
    pub users: BTreeMap<UserId, UserNode>,
    pub source: String,
    wiring: BTreeMap<Endpoint, Endpoint>,
    initial: NetworkState,
    pub photonics: Option<PhotonicsConfig>,
}

impl Topology {
    pub fn initial_state(&self) -> &NetworkState {
        &self.initial
    }

    /// Counterpart of a wired port.
    pub fn peer(&self, endpoint: &Endpoint) -> Option<&Endpoint> {
        self.wiring.get(endpoint)
    }

    pub fn hubs(&self) -> Vec<&Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Hub).collect()
    }

    pub fn user(&self, id: &str) -> Result<&UserNode, TopologyError> {
        self.users
            .get(id)
            .ok_or_else(|| TopologyError::UnknownUser(id.into()))
    }

    pub fn device(&self, id: &str) -> Result<&Device, TopologyError> {
        self.devices
            .get(id)
            .ok_or_else(|| TopologyError::UnknownDevice(id.into()))
    }

    pub fn mems_devices(&self) -> impl Iterator<Item = &Device> {
        self.devices.values().filter(|d| d.is_mems())
    }

    pub fn source_endpoint(&self) -> Endpoint {
        Endpoint {
            element: Element::Source(self.source.clone()),
            port: String::from("out"),
        }
    }

    /// Copy with every device and span loss multiplied by `factor`.
    pub fn with_scaled_losses(&self, factor: f64) -> Topology {
        let mut t = self.clone();
        for d in t.devices.values_mut() {
            d.scale_losses(factor);
        }
        for s in t.spans.values_mut() {
            s.loss_db *= factor;
        }
        for u in t.users.values_mut() {
            u.analyzer_loss_db *= factor;
        }
        t
    }

    fn ports_of(&self, element: &Element) -> Vec<String> {
        match element {
            Element::Source(_) => alloc::vec![String::from("out")],
            Element::User(_) => alloc::vec![String::from("in")],
            Element::Span(_) => alloc::vec![String::from("a"), String::from("b")],
            Element::Device(d) => self.devices.get(d).map(Device::ports).unwrap_or_default(),
        }
    }

    fn element_by_id(&self, id: &str) -> Option<Element> {
        if id == self.source {
            Some(Element::Source(self.source.clone()))
        } else if self.users.contains_key(id) {
            Some(Element::User(id.into()))
        } else if self.devices.contains_key(id) {
            Some(Element::Device(id.into()))
        } else if self.spans.contains_key(id) {
            Some(Element::Span(id.into()))
        } else {
            None
        }
    }

    fn parse_endpoint(&self, text: &str, path: &str) -> Result<Endpoint, BuildError> {
        let (id, port) = text
            .rsplit_once('.')
            .filter(|(id, port)| !id.is_empty() && !port.is_empty())
            .ok_or_else(|| err(path, BuildErrorKind::MalformedEndpoint(text.to_string())))?;
        let element = self
            .element_by_id(id)
            .ok_or_else(|| err(path, BuildErrorKind::UnknownElement(id.to_string())))?;
        if !self.ports_of(&element).iter().any(|p| p == port) {
            return Err(err(
                path,
                BuildErrorKind::UnknownPort {
                    element: id.to_string(),
                    port: port.to_string(),
                },
            ));
        }
        Ok(Endpoint {
            element,
            port: port.to_string(),
        })
    }
}

fn check_loss(value: f64, path: &str) -> Result<(), BuildError> {
    if value < 0.0 || value.is_nan() {
        Err(err(path, BuildErrorKind::NegativeLoss(format!("{value}"))))
    } else {
        Ok(())
    }
}

/// Validates a configuration document and builds the topology.
pub fn build_topology(config: &TopologyConfig) -> Result<Topology, BuildError> {
    let mut ids = BTreeSet::new();
    let mut claim = |id: &str, path: String| -> Result<(), BuildError> {
        if ids.insert(id.to_string()) {
            Ok(())
        } else {
            Err(err(path, BuildErrorKind::DuplicateId(id.to_string())))
        }
    };

    let mut nodes = Vec::new();
    let mut users = BTreeMap::new();
    let mut source = None;
    for (i, n) in config.nodes.iter().enumerate() {
        let path = format!("nodes[{i}]");
        claim(&n.id, path.clone())?;
        check_loss(n.analyzer_loss_db, &format!("{path}.analyzer_loss_db"))?;
        match n.kind {
            NodeKind::Source => {
                if source.replace(n.id.clone()).is_some() {
                    return Err(err(path, BuildErrorKind::MultipleSources));
                }
            }
            NodeKind::User => {
                users.insert(
                    UserId::new(n.id.clone()),
                    UserNode {
                        id: UserId::new(n.id.clone()),
                        hub: n.hub.clone(),
                        analyzer_loss_db: n.analyzer_loss_db,
                    },
                );
            }
            NodeKind::Hub | NodeKind::Panel => {}
        }
        nodes.push(Node {
            id: n.id.clone(),
            kind: n.kind,
            hub: n.hub.clone(),
        });
    }
    let source = source.ok_or_else(|| err("nodes", BuildErrorKind::NoSource))?;

    let hub_ids: BTreeSet<&str> = config
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Hub)
        .map(|n| n.id.as_str())
        .collect();
    let check_hub = |hub: &Option<String>, path: String| -> Result<(), BuildError> {
        match hub {
            Some(h) if !hub_ids.contains(h.as_str()) => {
                Err(err(path, BuildErrorKind::UnknownHub(h.clone())))
            }
            _ => Ok(()),
        }
    };
    for (i, n) in config.nodes.iter().enumerate() {
        if n.kind != NodeKind::Hub {
            check_hub(&n.hub, format!("nodes[{i}].hub"))?;
        }
    }

    let mut devices = BTreeMap::new();
    let mut initial = NetworkState::default();
    for (i, d) in config.devices.iter().enumerate() {
        let path = format!("devices[{i}]");
        claim(d.id(), path.clone())?;
        let id = DeviceId::new(d.id());
        let (hub, kind) = match d {
            DeviceConfig::Wss {
                hub,
                input,
                outputs,
                routing,
                ..
            } => {
                let mut ports = BTreeMap::new();
                for (j, o) in outputs.iter().enumerate() {
                    let ppath = format!("{path}.outputs[{j}]");
                    check_loss(o.loss_db, &ppath)?;
                    if o.port == *input || ports.contains_key(&o.port) {
                        return Err(err(ppath, BuildErrorKind::DuplicateId(o.port.clone())));
                    }
                    let mut extra = BTreeMap::new();
                    for (k, s) in o.slot_loss_db.iter().enumerate() {
                        let spath = format!("{ppath}.slot_loss_db[{k}]");
                        let slot = FrequencySlot::new(s.channel, s.role)
                            .map_err(|e| err(&spath, BuildErrorKind::InvalidSlot(e.to_string())))?;
                        check_loss(o.loss_db + s.extra_db, &spath)?;
                        extra.insert(slot, s.extra_db);
                    }
                    ports.insert(
                        o.port.clone(),
                        WssPort {
                            loss_db: o.loss_db,
                            slot_extra_db: extra,
                        },
                    );
                }
                let mut table = BTreeMap::new();
                for (j, r) in routing.iter().enumerate() {
                    let rpath = format!("{path}.routing[{j}]");
                    let slot = FrequencySlot::new(r.channel, r.role)
                        .map_err(|e| err(&rpath, BuildErrorKind::InvalidSlot(e.to_string())))?;
                    if !ports.contains_key(&r.port) {
                        return Err(err(
                            rpath,
                            BuildErrorKind::UnknownWssOutput {
                                device: d.id().to_string(),
                                port: r.port.clone(),
                            },
                        ));
                    }
                    table.insert(slot, r.port.clone());
                }
                initial.wss.insert(id.clone(), table);
                (
                    hub,
                    DeviceKind::Wss {
                        input: input.clone(),
                        outputs: ports,
                    },
                )
            }
            DeviceConfig::Mems2x1 {
                hub,
                loss_db,
                state,
                ..
            } => {
                check_loss(*loss_db, &format!("{path}.loss_db"))?;
                initial.mems.insert(id.clone(), *state);
                (hub, DeviceKind::Mems2x1 { loss_db: *loss_db })
            }
            DeviceConfig::Mems2x2 {
                hub,
                loss_db,
                state,
                ..
            } => {
                check_loss(*loss_db, &format!("{path}.loss_db"))?;
                initial.mems.insert(id.clone(), *state);
                (hub, DeviceKind::Mems2x2 { loss_db: *loss_db })
            }
            DeviceConfig::Circulator { hub, loss_db, .. } => {
                check_loss(*loss_db, &format!("{path}.loss_db"))?;
                (hub, DeviceKind::Circulator { loss_db: *loss_db })
            }
        };
        check_hub(hub, format!("{path}.hub"))?;
        devices.insert(
            id.clone(),
            Device {
                id,
                hub: hub.clone(),
                kind,
            },
        );
    }

    let mut spans = BTreeMap::new();
    for (i, s) in config.spans.iter().enumerate() {
        let path = format!("spans[{i}]");
        claim(&s.id, path.clone())?;
        check_loss(s.loss_db, &format!("{path}.loss_db"))?;
        check_hub(&Some(s.from.clone()), format!("{path}.from"))?;
        check_hub(&Some(s.to.clone()), format!("{path}.to"))?;
        if s.status == SpanStatus::Failed {
            initial.failed_spans.insert(SpanId::new(s.id.clone()));
        }
        spans.insert(
            SpanId::new(s.id.clone()),
            FiberSpan {
                id: SpanId::new(s.id.clone()),
                from: s.from.clone(),
                to: s.to.clone(),
                length_m: s.length_m,
                loss_db: s.loss_db,
            },
        );
    }

    let mut topology = Topology {
        name: config.name.clone(),
        nodes,
        devices,
        spans,
        users,
        source,
        wiring: BTreeMap::new(),
        initial,
        photonics: config.photonics.clone(),
    };

    let mut wiring = BTreeMap::new();
    for (i, w) in config.wiring.iter().enumerate() {
        let a = topology.parse_endpoint(&w.a, &format!("wiring[{i}].a"))?;
        let b = topology.parse_endpoint(&w.b, &format!("wiring[{i}].b"))?;
        if a == b {
            return Err(err(
                format!("wiring[{i}]"),
                BuildErrorKind::SelfLoop(a.to_string()),
            ));
        }
        for (end, side) in [(&a, "a"), (&b, "b")] {
            if wiring.contains_key(end) {
                return Err(err(
                    format!("wiring[{i}].{side}"),
                    BuildErrorKind::PortConflict(end.to_string()),
                ));
            }
        }
        wiring.insert(a.clone(), b.clone());
        wiring.insert(b, a);
    }

    let mut terminals = BTreeSet::new();
    for (i, t) in config.terminals.iter().enumerate() {
        let path = format!("terminals[{i}]");
        let end = topology.parse_endpoint(t, &path)?;
        if wiring.contains_key(&end) {
            return Err(err(path, BuildErrorKind::PortConflict(end.to_string())));
        }
        terminals.insert(end);
    }

    let mut elements: Vec<Element> = Vec::new();
    elements.push(Element::Source(topology.source.clone()));
    elements.extend(topology.users.keys().cloned().map(Element::User));
    elements.extend(topology.devices.keys().cloned().map(Element::Device));
    elements.extend(topology.spans.keys().cloned().map(Element::Span));
    for element in elements {
        for port in topology.ports_of(&element) {
            let end = Endpoint {
                element: element.clone(),
                port,
            };
            if !wiring.contains_key(&end) && !terminals.contains(&end) {
                return Err(err("wiring", BuildErrorKind::DanglingPort(end.to_string())));
            }
        }
    }

    topology.wiring = wiring;
    Ok(topology)
}

/// Sets a MEMS switch position.
pub fn set_device_state(
    topology: &Topology,
    state: &NetworkState,
    device: &str,
    new_state: MemsState,
) -> Result<NetworkState, TopologyError> {
    let d = topology.device(device)?;
    if !d.is_mems() {
        return Err(TopologyError::NotMems(d.id.clone()));
    }
    let mut next = state.clone();
    next.mems.insert(d.id.clone(), new_state);
    Ok(next)
}

/// Points one WSS slot at an output port, or clears the entry with `None`.
pub fn set_wss_route(
    topology: &Topology,
    state: &NetworkState,
    device: &str,
    slot: FrequencySlot,
    port: Option<&str>,
) -> Result<NetworkState, TopologyError> {
    let d = topology.device(device)?;
    let DeviceKind::Wss { outputs, .. } = &d.kind else {
        return Err(TopologyError::NotWss(d.id.clone()));
    };
    let mut next = state.clone();
    let table = next.wss.entry(d.id.clone()).or_default();
    match port {
        Some(p) => {
            if !outputs.contains_key(p) {
                return Err(TopologyError::UnknownPort {
                    device: d.id.clone(),
                    port: p.to_string(),
                });
            }
            table.insert(slot, p.to_string());
        }
        None => {
            table.remove(&slot);
        }
    }
    Ok(next)
}

pub fn fail_span(
    topology: &Topology,
    state: &NetworkState,
    span: &str,
) -> Result<NetworkState, TopologyError> {
    let id = span_id(topology, span)?;
    let mut next = state.clone();
    next.failed_spans.insert(id);
    Ok(next)
}

pub fn restore_span(
    topology: &Topology,
    state: &NetworkState,
    span: &str,
) -> Result<NetworkState, TopologyError> {
    let id = span_id(topology, span)?;
    let mut next = state.clone();
    next.failed_spans.remove(&id);
    Ok(next)
}

fn span_id(topology: &Topology, span: &str) -> Result<SpanId, TopologyError> {
    topology
        .spans
        .get(span)
        .map(|s| s.id.clone())
        .ok_or_else(|| TopologyError::UnknownSpan(span.into()))
}
