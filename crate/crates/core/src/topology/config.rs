//! Serializable topology description.
//!
//! Endpoints in `wiring` are written as `"<element>.<port>"`. Port names per
//! element kind:
//!
//! | kind       | ports                          |
//! |------------|--------------------------------|
//! | source     | `out`                          |
//! | user       | `in`                           |
//! | span       | `a`, `b`                       |
//! | wss        | `input` name plus each output  |
//! | mems2x1    | `p1`, `p2`, `com`              |
//! | mems2x2    | `x1`, `x2`, `y1`, `y2`         |
//! | circulator | `1`, `2`, `3`                  |

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::grid::Role;
use crate::photonics::PhotonicsConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub nodes: Vec<NodeConfig>,
    pub devices: Vec<DeviceConfig>,
    pub spans: Vec<SpanConfig>,
    pub wiring: Vec<WireConfig>,
    /// Ports deliberately left unconnected.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terminals: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photonics: Option<PhotonicsConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Source,
    Hub,
    User,
    Panel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub id: String,
    pub kind: NodeKind,
    /// Building the node belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hub: Option<String>,
    /// Polarization analyzer loss for users, dB.
    #[serde(default)]
    pub analyzer_loss_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemsState {
    #[default]
    Pass,
    Cross,
}

impl MemsState {
    pub fn toggled(self) -> Self {
        match self {
            MemsState::Pass => MemsState::Cross,
            MemsState::Cross => MemsState::Pass,
        }
    }
}

impl core::fmt::Display for MemsState {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            MemsState::Pass => "pass",
            MemsState::Cross => "cross",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotLossConfig {
    pub channel: i64,
    pub role: Role,
    pub extra_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WssPortConfig {
    pub port: String,
    pub loss_db: f64,
    /// Per-slot deviations from `loss_db` on this output.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slot_loss_db: Vec<SlotLossConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteConfig {
    pub channel: i64,
    pub role: Role,
    pub port: String,
}

fn default_input() -> String {
    String::from("in")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DeviceConfig {
    Wss {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hub: Option<String>,
        #[serde(default = "default_input")]
        input: String,
        outputs: Vec<WssPortConfig>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        routing: Vec<RouteConfig>,
    },
    Mems2x1 {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hub: Option<String>,
        loss_db: f64,
        #[serde(default)]
        state: MemsState,
    },
    Mems2x2 {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hub: Option<String>,
        loss_db: f64,
        #[serde(default)]
        state: MemsState,
    },
    Circulator {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hub: Option<String>,
        loss_db: f64,
    },
}

impl DeviceConfig {
    pub fn id(&self) -> &str {
        match self {
            DeviceConfig::Wss { id, .. }
            | DeviceConfig::Mems2x1 { id, .. }
            | DeviceConfig::Mems2x2 { id, .. }
            | DeviceConfig::Circulator { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanStatus {
    #[default]
    Up,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanConfig {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Metadata only; attenuation is carried by `loss_db`.
    pub length_m: f64,
    pub loss_db: f64,
    #[serde(default)]
    pub status: SpanStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireConfig {
    pub a: String,
    pub b: String,
}
