//! Scenario documents and their validation.
//!
//! A scenario names a topology, an initial allocation and optionally a
//! health policy (paths relative to the scenario file), plus a timeline of
//! events executed in order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mhqn_core::control::HealthPolicy;
use mhqn_core::grid::{validate_plan, AllocationPlan};
use mhqn_core::tomography::{MeasurementSetting, SamplerParams};
use mhqn_core::topology::{build_topology, Topology, TopologyConfig};

use crate::io::sha256_hex;
use crate::locate::{locate, Seg};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub topology: String,
    pub allocation: String,
    /// Health policy file; thresholds default to three times each dark rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    /// Accidental multiplier for the initial allocation.
    #[serde(default = "one")]
    pub multipair_factor: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub measurement: MeasurementConfig,
    pub timeline: Vec<TimedEvent>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasurementConfig {
    pub sampler: SamplerParams,
    /// Expected coincidences aimed for in the delay-calibration recording.
    pub calibration_coincidences: f64,
    pub calibration_min_s: f64,
    pub calibration_max_s: f64,
    /// Half-width of the delay search, ns.
    pub search_range_ns: f64,
    pub histogram_bin_ps: u64,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerParams::default(),
            calibration_coincidences: 200.0,
            calibration_min_s: 10.0,
            calibration_max_s: 2000.0,
            search_range_ns: 20_000.0,
            histogram_bin_ps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t: f64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    FailSpan {
        span: String,
    },
    RestoreSpan {
        span: String,
    },
    SetAllocation {
        plan: String,
        #[serde(default = "one")]
        multipair_factor: f64,
    },
    Measure {
        /// Report key; defaults to `"<a>-<b>@<t>"`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        pair: [String; 2],
        /// Integration time per setting, s.
        duration_s: f64,
        /// Two-letter settings such as `"HV"`; all 36 when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        settings: Option<Vec<String>>,
    },
}

impl TimedEvent {
    pub fn measure_label(&self) -> Option<String> {
        match &self.event {
            Event::Measure { label, pair, .. } => Some(
                label
                    .clone()
                    .unwrap_or_else(|| format!("{}-{}@{}", pair[0], pair[1], self.t)),
            ),
            _ => None,
        }
    }
}

pub fn parse_settings(labels: &[String]) -> Result<Vec<MeasurementSetting>, String> {
    labels
        .iter()
        .map(|l| {
            let mut chars = l.chars();
            match (chars.next(), chars.next(), chars.next()) {
                (Some(a), Some(b), None) => {
                    let a = a.to_string().parse().map_err(|e| format!("{l}: {e}"))?;
                    let b = b.to_string().parse().map_err(|e| format!("{l}: {e}"))?;
                    Ok(MeasurementSetting::new(a, b))
                }
                _ => Err(format!("setting {l:?} must be two letters")),
            }
        })
        .collect()
}

/// One problem found by [`validate_files`] or [`load`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub file: PathBuf,
    /// JSON path inside the file, e.g. `timeline[2].pair[1]`.
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file.display())?;
        if let Some(l) = self.line {
            write!(f, ":{l}")?;
        }
        if !self.path.is_empty() {
            write!(f, ": {}", self.path)?;
        }
        write!(f, ": {}", self.message)
    }
}

/// A source file read once, with its hash.
#[derive(Debug, Clone)]
struct Source {
    path: PathBuf,
    text: String,
}

impl Source {
    fn read(path: &Path) -> Result<Self, Diagnostic> {
        fs::read_to_string(path)
            .map(|text| Self {
                path: path.to_path_buf(),
                text,
            })
            .map_err(|e| Diagnostic {
                file: path.to_path_buf(),
                path: String::new(),
                line: None,
                message: format!("cannot read: {e}"),
            })
    }

    fn parse<T: serde::de::DeserializeOwned>(&self) -> Result<T, Diagnostic> {
        serde_json::from_str(&self.text).map_err(|e| Diagnostic {
            file: self.path.clone(),
            path: String::new(),
            line: Some(e.line()),
            message: e.to_string(),
        })
    }

    fn diag(&self, segs: &[Seg], message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            file: self.path.clone(),
            path: render_path(segs),
            line: locate(&self.text, segs),
            message: message.into(),
        }
    }

    fn sha256(&self) -> String {
        sha256_hex(self.text.as_bytes())
    }
}

fn render_path(segs: &[Seg]) -> String {
    let mut out = String::new();
    for s in segs {
        match s {
            Seg::Key(k) => {
                if !out.is_empty() {
                    out.push('.');
                }
                out.push_str(k);
            }
            Seg::Index(i) => out.push_str(&format!("[{i}]")),
        }
    }
    out
}

/// Hash of one input file, as recorded in a report.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FileHash {
    pub role: String,
    /// As written in the scenario (relative to it), or the scenario's own name.
    pub path: String,
    pub sha256: String,
}

/// A scenario with every referenced file read, parsed and cross-checked.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub path: PathBuf,
    pub scenario: Scenario,
    pub topology: Topology,
    pub initial_plan: AllocationPlan,
    pub policy: HealthPolicy,
    /// Plans referenced by `set_allocation`, by the path written in the scenario.
    pub plans: BTreeMap<String, AllocationPlan>,
    pub files: Vec<FileHash>,
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.parent().unwrap_or(Path::new(".")).join(rel)
}

fn check_plan(src: &Source, plan: &AllocationPlan, topology: &Topology, out: &mut Vec<Diagnostic>) {
    for (i, a) in plan.assignments.iter().enumerate() {
        if !topology.users.contains_key(&a.user) {
            out.push(src.diag(
                &[Seg::Key("assignments"), Seg::Index(i), Seg::Key("user")],
                format!("unknown user {}", a.user),
            ));
        }
    }
    for v in validate_plan(plan, &[]).violations {
        out.push(src.diag(&[Seg::Key("assignments")], v.to_string()));
    }
}

/// Reads and checks a scenario and everything it references. Returns every
/// diagnostic found, not just the first.
pub fn load(path: &Path) -> Result<LoadedScenario, Vec<Diagnostic>> {
    let src = Source::read(path).map_err(|d| vec![d])?;
    let scenario: Scenario = src.parse().map_err(|d| vec![d])?;
    let mut diags = Vec::new();
    let mut files = vec![FileHash {
        role: "scenario".into(),
        path: path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
        sha256: src.sha256(),
    }];

    let mut read_ref = |role: &str, rel: &str, at: &[Seg], diags: &mut Vec<Diagnostic>| -> Option<Source> {
        match Source::read(&resolve(path, rel)) {
            Ok(s) => {
                files.push(FileHash {
                    role: role.into(),
                    path: rel.into(),
                    sha256: s.sha256(),
                });
                Some(s)
            }
            Err(e) => {
                diags.push(src.diag(at, e.message));
                None
            }
        }
    };

    let topo_src = read_ref("topology", &scenario.topology, &[Seg::Key("topology")], &mut diags);
    let topology = topo_src.as_ref().and_then(|s| {
        let cfg: TopologyConfig = s.parse().map_err(|d| diags.push(d)).ok()?;
        match build_topology(&cfg) {
            Ok(t) => Some(t),
            Err(e) => {
                diags.push(Diagnostic {
                    file: s.path.clone(),
                    path: e.path.clone(),
                    line: None,
                    message: e.kind.to_string(),
                });
                None
            }
        }
    });
    if let Some(t) = &topology {
        match &t.photonics {
            None => diags.push(topo_src.as_ref().unwrap().diag(&[], "topology has no photonics block")),
            Some(p) => {
                if let Err(e) = p.validate() {
                    diags.push(topo_src.as_ref().unwrap().diag(&[Seg::Key("photonics")], e.to_string()));
                }
            }
        }
    }

    let plan_src = read_ref("allocation", &scenario.allocation, &[Seg::Key("allocation")], &mut diags);
    let initial_plan: Option<AllocationPlan> = plan_src.as_ref().and_then(|s| s.parse().map_err(|d| diags.push(d)).ok());
    if let (Some(s), Some(p), Some(t)) = (&plan_src, &initial_plan, &topology) {
        check_plan(s, p, t, &mut diags);
    }

    let policy = match &scenario.policy {
        Some(rel) => read_ref("policy", rel, &[Seg::Key("policy")], &mut diags).and_then(|s| {
            let p: HealthPolicy = s.parse().map_err(|d| diags.push(d)).ok()?;
            if let Err(e) = p.validate() {
                diags.push(s.diag(&[], e.to_string()));
            }
            if let Some(t) = &topology {
                for u in p.thresholds.keys() {
                    if !t.users.contains_key(u) {
                        diags.push(s.diag(&[Seg::Key("thresholds"), Seg::Key(u.as_str())], format!("unknown user {u}")));
                    }
                }
            }
            Some(p)
        }),
        None => topology
            .as_ref()
            .and_then(|t| t.photonics.as_ref())
            .map(|p| HealthPolicy::from_dark_rates(p, 3.0)),
    };

    if !(scenario.multipair_factor >= 1.0) {
        diags.push(src.diag(&[Seg::Key("multipair_factor")], "multipair factor below one"));
    }

    let mut plans = BTreeMap::new();
    let mut current = initial_plan.clone();
    let mut labels = BTreeSet::new();
    let mut last_t = f64::NEG_INFINITY;
    for (i, ev) in scenario.timeline.iter().enumerate() {
        let at = |k: &'static str| [Seg::Key("timeline"), Seg::Index(i), Seg::Key(k)];
        if !ev.t.is_finite() || ev.t < 0.0 {
            diags.push(src.diag(&at("t"), "time must be finite and non-negative"));
        } else if ev.t < last_t {
            diags.push(src.diag(&at("t"), "timeline not sorted"));
        }
        last_t = last_t.max(ev.t);
        match &ev.event {
            Event::FailSpan { span } | Event::RestoreSpan { span } => {
                if let Some(t) = &topology {
                    if !t.spans.contains_key(span.as_str()) {
                        diags.push(src.diag(&at("span"), format!("unknown span {span}")));
                    }
                }
            }
            Event::SetAllocation { plan, multipair_factor } => {
                if !(*multipair_factor >= 1.0) {
                    diags.push(src.diag(&at("multipair_factor"), "multipair factor below one"));
                }
                if let Some(s) = read_ref("plan", plan, &at("plan"), &mut diags) {
                    if let Ok(p) = s.parse::<AllocationPlan>().map_err(|d| diags.push(d)) {
                        if let Some(t) = &topology {
                            check_plan(&s, &p, t, &mut diags);
                        }
                        plans.insert(plan.clone(), p.clone());
                        current = Some(p);
                    } else {
                        current = None;
                    }
                }
            }
            Event::Measure {
                pair,
                duration_s,
                settings,
                ..
            } => {
                let label = ev.measure_label().expect("measure");
                if !labels.insert(label.clone()) {
                    diags.push(src.diag(&at("label"), format!("duplicate measurement label {label}")));
                }
                if !(*duration_s > 0.0) {
                    diags.push(src.diag(&at("duration_s"), "duration must be positive"));
                }
                if pair[0] == pair[1] {
                    diags.push(src.diag(&at("pair"), "pair needs two distinct users"));
                }
                if let Some(list) = settings {
                    match parse_settings(list) {
                        Ok(s) => {
                            let unique: BTreeSet<_> = s.iter().collect();
                            if s.is_empty() || unique.len() != s.len() {
                                diags.push(src.diag(&at("settings"), "settings must be non-empty and distinct"));
                            }
                        }
                        Err(m) => diags.push(src.diag(&at("settings"), m)),
                    }
                }
                let mut known = true;
                if let Some(t) = &topology {
                    for (j, u) in pair.iter().enumerate() {
                        if !t.users.contains_key(u.as_str()) {
                            known = false;
                            diags.push(src.diag(
                                &[Seg::Key("timeline"), Seg::Index(i), Seg::Key("pair"), Seg::Index(j)],
                                format!("unknown user {u}"),
                            ));
                        }
                    }
                }
                if let (true, Some(p)) = (known, &current) {
                    if pair[0] != pair[1] && p.shared_channels(&pair[0], &pair[1]).is_empty() {
                        diags.push(src.diag(
                            &at("pair"),
                            format!("{} and {} share no channel in allocation {}", pair[0], pair[1], p.label),
                        ));
                    }
                }
            }
        }
    }

    match (diags.is_empty(), topology, initial_plan, policy) {
        (true, Some(topology), Some(initial_plan), Some(policy)) => Ok(LoadedScenario {
            path: path.to_path_buf(),
            scenario,
            topology,
            initial_plan,
            policy,
            plans,
            files,
        }),
        _ => {
            if diags.is_empty() {
                diags.push(src.diag(&[], "scenario could not be resolved"));
            }
            Err(diags)
        }
    }
}

/// What a standalone file looks like, judged by its top-level keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Scenario,
    Topology,
    Plan,
    Policy,
}

fn sniff(value: &serde_json::Value) -> Option<FileKind> {
    let obj = value.as_object()?;
    if obj.contains_key("timeline") {
        Some(FileKind::Scenario)
    } else if obj.contains_key("wiring") {
        Some(FileKind::Topology)
    } else if obj.contains_key("assignments") {
        Some(FileKind::Plan)
    } else if obj.contains_key("thresholds") {
        Some(FileKind::Policy)
    } else {
        None
    }
}

/// Schema and cross-reference checks for any mix of scenario, topology,
/// allocation and policy files. Empty means clean.
pub fn validate_files(paths: &[PathBuf]) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for path in paths {
        let src = match Source::read(path) {
            Ok(s) => s,
            Err(d) => {
                out.push(d);
                continue;
            }
        };
        let value: serde_json::Value = match src.parse() {
            Ok(v) => v,
            Err(d) => {
                out.push(d);
                continue;
            }
        };
        match sniff(&value) {
            Some(FileKind::Scenario) => {
                if let Err(d) = load(path) {
                    out.extend(d);
                }
            }
            Some(FileKind::Topology) => match src.parse::<TopologyConfig>() {
                Ok(cfg) => {
                    if let Err(e) = build_topology(&cfg) {
                        out.push(Diagnostic {
                            file: path.clone(),
                            path: e.path.clone(),
                            line: None,
                            message: e.kind.to_string(),
                        });
                    }
                }
                Err(d) => out.push(d),
            },
            Some(FileKind::Plan) => match src.parse::<AllocationPlan>() {
                Ok(p) => {
                    for v in validate_plan(&p, &[]).violations {
                        out.push(src.diag(&[Seg::Key("assignments")], v.to_string()));
                    }
                }
                Err(d) => out.push(d),
            },
            Some(FileKind::Policy) => match src.parse::<HealthPolicy>() {
                Ok(p) => {
                    if let Err(e) = p.validate() {
                        out.push(src.diag(&[], e.to_string()));
                    }
                }
                Err(d) => out.push(d),
            },
            None => out.push(src.diag(&[], "unrecognized document (expected scenario, topology, allocation or policy)")),
        }
    }
    out
}
