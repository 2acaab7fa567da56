//! Scenario runner. Drives the controller over the simulated network and
//! turns every `measure` event into time-tagged recordings, coincidence
//! counts and a Bayesian state estimate.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use mhqn_core::control::Controller;
use mhqn_core::grid::AllocationPlan;
use mhqn_core::network::{shared_slots, NetworkModel, PairPrediction, SimulatedNetwork, SlotLink};
use mhqn_core::photonics::DetectorModel;
use mhqn_core::rng::{derive_seed, label_hash};
use mhqn_core::timetag::{
    apply_dead_time, calibrate_delay, count_coincidences, generate_pair_streams, CoincidenceConfig,
    DelayEstimate, PairStreamParams, TimestampStream,
};
use mhqn_core::tomography::{
    bayesian_estimate, projection_probability, DatasetEntry, DensityMatrix4, MeasurementSetting,
    Polarization, PosteriorSummary, Prior, TomographyDataset,
};
use mhqn_core::topology::MemsState;

use crate::io::PosteriorFile;
use crate::scenario::{load, parse_settings, Event, FileHash, LoadedScenario, MeasurementConfig};

/// Group delay of standard fiber, ps per metre.
pub const FIBER_DELAY_PS_PER_M: f64 = 4900.0;
/// Tick of every simulated recording.
pub const RESOLUTION_PS: u32 = 1;

/// One channel split between the two users of a link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelArm {
    pub channel: u8,
    /// Pairs per second in this channel at the source.
    pub pair_rate: f64,
    /// Transmittance × efficiency of each arm.
    pub detect_a: f64,
    pub detect_b: f64,
}

/// Everything needed to synthesize recordings for one user pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSetup {
    pub channels: Vec<ChannelArm>,
    /// Flux of each user's other slots at its analyzer, photons per second.
    pub other_flux_a: f64,
    pub other_flux_b: f64,
    pub detector_a: DetectorModel,
    pub detector_b: DetectorModel,
    /// Extra correlated coincidences from multipair emission, per second,
    /// before the analyzers.
    pub multipair_rate: f64,
    pub source_state: DensityMatrix4,
    pub jitter_ps: f64,
    /// Latency of arm `b` relative to arm `a`.
    pub offset_ps: f64,
    pub window_ticks: u64,
}

fn orthogonal(p: Polarization) -> Polarization {
    use Polarization::*;
    match p {
        H => V,
        V => H,
        D => A,
        A => D,
        R => L,
        L => R,
    }
}

fn path_length_m(net: &SimulatedNetwork, link: Option<&SlotLink>) -> Option<f64> {
    let path = link?.resolution.path()?;
    Some(path.spans().map(|s| net.topology().spans[s].length_m).sum())
}

impl LinkSetup {
    pub fn from_network(net: &SimulatedNetwork, a: &str, b: &str) -> Result<(Self, PairPrediction)> {
        let prediction = net.predict_pair(a, b)?;
        let model = &net.model;
        let links = model.slot_links(&net.state, &net.plan)?;
        let link = |slot, user: &str| links.iter().find(|l| l.slot == slot && l.user.as_str() == user);
        let detector_a = model.detector(a)?;
        let detector_b = model.detector(b)?;

        let mut channels = Vec::new();
        let (mut shared_a, mut shared_b) = (0.0, 0.0);
        let mut offset_ps = None;
        for (sa, sb) in shared_slots(&net.plan, a, b) {
            let (la, lb) = (link(sa, a), link(sb, b));
            let pair_rate = model.channel_rate(sa.channel());
            let ta = la.map_or(0.0, SlotLink::transmittance);
            let tb = lb.map_or(0.0, SlotLink::transmittance);
            shared_a += pair_rate * ta;
            shared_b += pair_rate * tb;
            if offset_ps.is_none() {
                if let (Some(x), Some(y)) = (path_length_m(net, la), path_length_m(net, lb)) {
                    offset_ps = Some((y - x) * FIBER_DELAY_PS_PER_M);
                }
            }
            channels.push(ChannelArm {
                channel: sa.channel(),
                pair_rate,
                detect_a: ta * detector_a.efficiency,
                detect_b: tb * detector_b.efficiency,
            });
        }
        let window_ticks = (model.photonics.window_ns * 1000.0 / f64::from(RESOLUTION_PS)).round() as u64;
        Ok((
            Self {
                channels,
                other_flux_a: (model.photon_flux(&links, a) - shared_a).max(0.0),
                other_flux_b: (model.photon_flux(&links, b) - shared_b).max(0.0),
                detector_a,
                detector_b,
                multipair_rate: prediction.multipair_excess(),
                source_state: DensityMatrix4::werner(model.photonics.v0),
                jitter_ps: model.photonics.jitter_ps,
                offset_ps: offset_ps.unwrap_or(0.0),
                window_ticks,
            },
            prediction,
        ))
    }

    /// Joint pass probabilities `(P11, P10, P01)` of the analyzers; `None`
    /// means no analyzers in the beam.
    fn pass(&self, setting: Option<MeasurementSetting>) -> (f64, f64, f64) {
        match setting {
            None => (1.0, 0.0, 0.0),
            Some(s) => {
                let p = |a, b| projection_probability(&self.source_state, MeasurementSetting::new(a, b));
                (p(s.a, s.b), p(s.a, orthogonal(s.b)), p(orthogonal(s.a), s.b))
            }
        }
    }

    fn analyzer_share(setting: Option<MeasurementSetting>) -> f64 {
        if setting.is_some() {
            0.5
        } else {
            1.0
        }
    }

    /// Uncorrelated background of each detector: darks, other slots, and
    /// pairs whose partner the other analyzer rejected.
    fn background(&self, setting: Option<MeasurementSetting>) -> (f64, f64) {
        let (_, p10, p01) = self.pass(setting);
        let share = Self::analyzer_share(setting);
        let mut a = self.detector_a.dark_rate + self.detector_a.efficiency * share * self.other_flux_a;
        let mut b = self.detector_b.dark_rate + self.detector_b.efficiency * share * self.other_flux_b;
        for ch in &self.channels {
            a += ch.pair_rate * p10 * ch.detect_a;
            b += ch.pair_rate * p01 * ch.detect_b;
        }
        (a, b)
    }

    fn multipair_share(&self, setting: Option<MeasurementSetting>) -> f64 {
        self.multipair_rate * if setting.is_some() { 0.25 } else { 1.0 }
    }

    /// Expected correlated coincidences per second.
    pub fn expected_true_rate(&self, setting: Option<MeasurementSetting>) -> f64 {
        let (p11, _, _) = self.pass(setting);
        self.channels
            .iter()
            .map(|c| c.pair_rate * p11 * c.detect_a * c.detect_b)
            .sum::<f64>()
            + self.multipair_share(setting)
    }

    /// Expected singles before dead-time losses.
    pub fn expected_singles(&self, setting: Option<MeasurementSetting>) -> (f64, f64) {
        let (p11, _, _) = self.pass(setting);
        let (mut a, mut b) = self.background(setting);
        for c in &self.channels {
            a += c.pair_rate * p11 * c.detect_a;
            b += c.pair_rate * p11 * c.detect_b;
        }
        let m = self.multipair_share(setting);
        (a + m, b + m)
    }

    /// Expected coincidences per second in the configured window.
    pub fn expected_coincidence_rate(&self, setting: Option<MeasurementSetting>) -> f64 {
        let (sa, sb) = self.expected_singles(setting);
        let tau = self.window_ticks as f64 * f64::from(RESOLUTION_PS) * 1e-12;
        self.expected_true_rate(setting) + sa * sb * tau
    }

    /// Synthesizes both detectors' time tags for one setting.
    pub fn record(
        &self,
        setting: Option<MeasurementSetting>,
        duration_s: f64,
        seed: u64,
    ) -> (TimestampStream, TimestampStream) {
        let (p11, _, _) = self.pass(setting);
        let base = PairStreamParams {
            duration_s,
            jitter_ps: self.jitter_ps,
            offset_ps: self.offset_ps,
            resolution_ps: RESOLUTION_PS,
            ..PairStreamParams::default()
        };
        let mut ta = Vec::new();
        let mut tb = Vec::new();
        for (n, c) in self.channels.iter().enumerate() {
            let (a, b) = generate_pair_streams(
                &PairStreamParams {
                    pair_rate: c.pair_rate * p11,
                    detect_a: c.detect_a,
                    detect_b: c.detect_b,
                    ..base
                },
                derive_seed(seed, &[n as u64]),
            );
            ta.extend(a.into_ticks());
            tb.extend(b.into_ticks());
        }
        let (bg_a, bg_b) = self.background(setting);
        let (a, b) = generate_pair_streams(
            &PairStreamParams {
                pair_rate: self.multipair_share(setting),
                background_a: bg_a,
                background_b: bg_b,
                ..base
            },
            derive_seed(seed, &[self.channels.len() as u64]),
        );
        ta.extend(a.into_ticks());
        tb.extend(b.into_ticks());

        let finish = |ticks, det: &DetectorModel| {
            let s = TimestampStream::from_unsorted(ticks, RESOLUTION_PS).expect("positive resolution");
            let dead = (det.dead_time * 1e12 / f64::from(RESOLUTION_PS)).round() as u64;
            if dead > 0 {
                apply_dead_time(&s, dead)
            } else {
                s
            }
        };
        (finish(ta, &self.detector_a), finish(tb, &self.detector_b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub estimate: DelayEstimate,
    /// Latency difference expected from the fiber lengths.
    pub nominal_ps: i64,
    /// Delay added to arm `a` when counting.
    pub applied_ticks: i64,
    pub calibration_s: f64,
    /// The histogram showed no peak and the nominal value was used.
    pub fallback: bool,
}

/// Raw result of measuring one pair.
#[derive(Debug, Clone)]
pub struct PairMeasurement {
    pub prediction: PairPrediction,
    pub setup: LinkSetup,
    pub delay: DelayReport,
    pub dataset: TomographyDataset,
    /// Mean over settings.
    pub singles_a: f64,
    pub singles_b: f64,
    pub coincidences: u64,
    /// Analyzer-free equivalent: four times the summed counts per summed time.
    pub coincidence_rate: f64,
    pub coincidence_rate_sd: f64,
    pub posterior: PosteriorSummary,
}

/// Calibrates the delay on an analyzer-free recording, then records every
/// setting for `duration_s`, counts coincidences and estimates the state.
pub fn measure_pair(
    net: &SimulatedNetwork,
    a: &str,
    b: &str,
    duration_s: f64,
    settings: &[MeasurementSetting],
    cfg: &MeasurementConfig,
    seed: u64,
) -> Result<PairMeasurement> {
    if settings.is_empty() {
        bail!("no measurement settings");
    }
    let (setup, prediction) = LinkSetup::from_network(net, a, b)?;
    let res = f64::from(RESOLUTION_PS);

    let signal = setup.expected_true_rate(None);
    let calibration_s = if signal > 0.0 {
        (cfg.calibration_coincidences / signal).clamp(cfg.calibration_min_s, cfg.calibration_max_s)
    } else {
        cfg.calibration_min_s
    };
    let (ca, cb) = setup.record(None, calibration_s, derive_seed(seed, &[1]));
    let search = (cfg.search_range_ns * 1000.0 / res).round() as u64;
    let bin = (cfg.histogram_bin_ps as f64 / res).round().max(1.0) as u64;
    let estimate = match calibrate_delay(&ca, &cb, search, bin) {
        Ok(e) => e,
        Err(mhqn_core::timetag::TimetagError::Empty) => DelayEstimate::NoPeak,
        Err(e) => return Err(e.into()),
    };
    let nominal = (setup.offset_ps / res).round() as i64;
    let delay = DelayReport {
        estimate,
        nominal_ps: setup.offset_ps.round() as i64,
        applied_ticks: estimate.delay().unwrap_or(nominal),
        calibration_s,
        fallback: estimate.delay().is_none(),
    };
    if delay.fallback {
        log::warn!("{a}-{b}: no coincidence peak, using nominal delay {nominal} ticks");
    }

    let cc = CoincidenceConfig {
        delay: delay.applied_ticks,
        window: setup.window_ticks,
    };
    let mut entries = Vec::with_capacity(settings.len());
    let (mut singles_a, mut singles_b) = (0.0, 0.0);
    for (k, &setting) in settings.iter().enumerate() {
        let (sa, sb) = setup.record(Some(setting), duration_s, derive_seed(seed, &[2, k as u64]));
        singles_a += sa.len() as f64 / duration_s;
        singles_b += sb.len() as f64 / duration_s;
        entries.push(DatasetEntry {
            setting,
            counts: count_coincidences(&sa, &sb, cc)?,
            duration_s,
            efficiency: 1.0,
        });
    }
    let dataset = TomographyDataset { entries };
    let coincidences = dataset.total_counts();
    let total_time = duration_s * settings.len() as f64;
    let posterior = bayesian_estimate(&dataset, Prior::HilbertSchmidt, &cfg.sampler, derive_seed(seed, &[3]))?;
    Ok(PairMeasurement {
        prediction,
        setup,
        delay,
        dataset,
        singles_a: singles_a / settings.len() as f64,
        singles_b: singles_b / settings.len() as f64,
        coincidences,
        coincidence_rate: 4.0 * coincidences as f64 / total_time,
        coincidence_rate_sd: 4.0 * (coincidences as f64).sqrt() / total_time,
        posterior,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicted {
    pub true_rate: f64,
    pub accidental_rate: f64,
    pub multipair_factor: f64,
    pub coincidence_rate: f64,
    pub singles_a: f64,
    pub singles_b: f64,
    pub fidelity: f64,
    pub log_negativity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub singles_a: f64,
    pub singles_b: f64,
    pub coincidences: u64,
    pub coincidence_rate: f64,
    pub coincidence_rate_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub a: String,
    pub b: String,
    pub time_s: f64,
    pub channels: Vec<u8>,
    pub duration_per_setting_s: f64,
    pub settings: usize,
    pub loss_a_db: Option<f64>,
    pub loss_b_db: Option<f64>,
    pub predicted: Predicted,
    pub measured: Measured,
    pub delay: DelayReport,
    pub estimate: PosteriorFile,
}

impl PairReport {
    fn new(m: &PairMeasurement, time_s: f64, duration_s: f64) -> Self {
        let p = &m.prediction;
        Self {
            a: p.a.to_string(),
            b: p.b.to_string(),
            time_s,
            channels: p.channels.clone(),
            duration_per_setting_s: duration_s,
            settings: m.dataset.entries.len(),
            loss_a_db: p.loss_a_db,
            loss_b_db: p.loss_b_db,
            predicted: Predicted {
                true_rate: p.rates.true_coinc,
                accidental_rate: p.rates.accidental,
                multipair_factor: p.multipair_factor,
                coincidence_rate: p.coincidence_rate(),
                singles_a: p.rates.singles_a,
                singles_b: p.rates.singles_b,
                fidelity: p.fidelity,
                log_negativity: p.log_negativity,
            },
            measured: Measured {
                singles_a: m.singles_a,
                singles_b: m.singles_b,
                coincidences: m.coincidences,
                coincidence_rate: m.coincidence_rate,
                coincidence_rate_sd: m.coincidence_rate_sd,
            },
            delay: m.delay.clone(),
            estimate: PosteriorFile::from(&m.posterior),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub seed: u64,
    pub files: Vec<FileHash>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub allocation: String,
    pub failed_spans: Vec<String>,
    pub mems: BTreeMap<String, MemsState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub provenance: Provenance,
    /// Keyed by measurement label.
    pub measurements: BTreeMap<String, PairReport>,
    pub events: Vec<serde_json::Value>,
    pub final_state: FinalState,
}

impl RunReport {
    /// Stable pretty JSON; identical inputs give identical bytes.
    pub fn to_canonical_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// A report plus the raw tomography datasets behind it.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub datasets: BTreeMap<String, TomographyDataset>,
}

fn tool() -> String {
    format!("mhqn {}", env!("CARGO_PKG_VERSION"))
}

/// Executes a loaded scenario with `seed`.
pub fn run(loaded: &LoadedScenario, seed: u64) -> Result<RunOutput> {
    let sc = &loaded.scenario;
    let model = NetworkModel::new(loaded.topology.clone())?;
    let mut net = SimulatedNetwork::new(
        model,
        loaded.topology.initial_state().clone(),
        AllocationPlan::new("unallocated"),
    );
    let mut controller = Controller::new(loaded.policy.clone());
    let mut events: Vec<serde_json::Value> = Vec::new();
    let push = |evs: Vec<mhqn_core::control::ControllerEvent>, events: &mut Vec<serde_json::Value>| -> Result<()> {
        for e in evs {
            events.push(serde_json::to_value(e)?);
        }
        Ok(())
    };

    push(controller.set_allocation(&mut net, loaded.initial_plan.clone(), 0.0)?, &mut events)?;
    net.multipair_factor = sc.multipair_factor;

    let mut measurements = BTreeMap::new();
    let mut datasets = BTreeMap::new();
    for (i, ev) in sc.timeline.iter().enumerate() {
        let s = derive_seed(seed, &[i as u64]);
        let mut marker = serde_json::to_value(ev)?;
        if let Some(obj) = marker.as_object_mut() {
            let name = obj.remove("event").unwrap_or_default();
            obj.insert("kind".into(), "timeline".into());
            obj.insert("timeline".into(), name);
        }
        events.push(marker);
        log::info!("t={} {:?}", ev.t, ev.event);
        match &ev.event {
            Event::FailSpan { span } => {
                net.fail_span(span)?;
                push(controller.cycle(&mut net, ev.t, s)?, &mut events)?;
            }
            Event::RestoreSpan { span } => {
                net.restore_span(span)?;
                push(controller.span_restored(&mut net, span, ev.t)?, &mut events)?;
                push(controller.cycle(&mut net, ev.t, s)?, &mut events)?;
            }
            Event::SetAllocation { plan, multipair_factor } => {
                let plan = loaded
                    .plans
                    .get(plan)
                    .ok_or_else(|| anyhow!("allocation {plan} was not loaded"))?;
                push(controller.set_allocation(&mut net, plan.clone(), ev.t)?, &mut events)?;
                net.multipair_factor = *multipair_factor;
            }
            Event::Measure {
                pair,
                duration_s,
                settings,
                ..
            } => {
                push(controller.cycle(&mut net, ev.t, s)?, &mut events)?;
                let label = ev.measure_label().expect("measure event");
                let settings = match settings {
                    Some(l) => parse_settings(l).map_err(|e| anyhow!(e))?,
                    None => MeasurementSetting::all().collect(),
                };
                let m = measure_pair(
                    &net,
                    &pair[0],
                    &pair[1],
                    *duration_s,
                    &settings,
                    &sc.measurement,
                    derive_seed(s, &[label_hash(&label)]),
                )
                .with_context(|| format!("measuring {label}"))?;
                measurements.insert(label.clone(), PairReport::new(&m, ev.t, *duration_s));
                datasets.insert(label, m.dataset);
            }
        }
    }

    let report = RunReport {
        scenario: sc.name.clone(),
        provenance: Provenance {
            tool: tool(),
            seed,
            files: loaded.files.clone(),
        },
        measurements,
        events,
        final_state: FinalState {
            allocation: net.plan.label.clone(),
            failed_spans: net.state.failed_spans.iter().map(|s| s.to_string()).collect(),
            mems: net
                .state
                .mems
                .iter()
                .map(|(d, s)| (d.to_string(), *s))
                .collect(),
        },
    };
    Ok(RunOutput { report, datasets })
}

/// Loads and runs a scenario file, using its own seed unless overridden.
pub fn run_file(path: &Path, seed: Option<u64>) -> Result<RunOutput> {
    let loaded = load(path).map_err(|d| {
        let lines: Vec<String> = d.iter().map(ToString::to_string).collect();
        anyhow!("invalid scenario:\n{}", lines.join("\n"))
    })?;
    let seed = seed.unwrap_or(loaded.scenario.seed);
    run(&loaded, seed)
}

/// Files whose current hash differs from the one recorded in `report`.
pub fn provenance_mismatches(report: &RunReport, scenario_path: &Path) -> Result<Vec<String>> {
    let loaded = load(scenario_path).map_err(|d| anyhow!("{}", d[0]))?;
    let current: BTreeMap<_, _> = loaded.files.iter().map(|f| ((&f.role, &f.path), &f.sha256)).collect();
    let mut out = Vec::new();
    for f in &report.provenance.files {
        if current.get(&(&f.role, &f.path)) != Some(&&f.sha256) {
            out.push(f.path.clone());
        }
    }
    if current.len() != report.provenance.files.len() {
        out.push("<file set changed>".into());
    }
    Ok(out)
}

/// Re-runs the scenario a report came from and checks the result is
/// identical.
pub fn regenerate(report: &RunReport, scenario_path: &Path) -> Result<RunReport> {
    let stale = provenance_mismatches(report, scenario_path)?;
    if !stale.is_empty() {
        bail!("inputs changed since the report was made: {}", stale.join(", "));
    }
    let fresh = run_file(scenario_path, Some(report.provenance.seed))?.report;
    if fresh.to_canonical_json()? != report.to_canonical_json()? {
        bail!("regenerated report differs");
    }
    Ok(fresh)
}

/// Flat per-measurement summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub label: String,
    pub a: String,
    pub b: String,
    pub time_s: f64,
    pub coincidence_rate: f64,
    pub coincidence_rate_sd: f64,
    pub predicted_rate: f64,
    pub fidelity: f64,
    pub fidelity_sd: f64,
    pub log_negativity: f64,
    pub log_negativity_sd: f64,
    pub loss_a_db: Option<f64>,
    pub loss_b_db: Option<f64>,
    pub delay_ticks: i64,
    pub rhat: f64,
    pub converged: bool,
}

pub fn csv_rows(report: &RunReport) -> Vec<CsvRow> {
    report
        .measurements
        .iter()
        .map(|(label, m)| CsvRow {
            label: label.clone(),
            a: m.a.clone(),
            b: m.b.clone(),
            time_s: m.time_s,
            coincidence_rate: m.measured.coincidence_rate,
            coincidence_rate_sd: m.measured.coincidence_rate_sd,
            predicted_rate: m.predicted.coincidence_rate,
            fidelity: m.estimate.fidelity_mean,
            fidelity_sd: m.estimate.fidelity_sd,
            log_negativity: m.estimate.log_negativity_mean,
            log_negativity_sd: m.estimate.log_negativity_sd,
            loss_a_db: m.loss_a_db,
            loss_b_db: m.loss_b_db,
            delay_ticks: m.delay.applied_ticks,
            rhat: m.estimate.rhat,
            converged: m.estimate.converged,
        })
        .collect()
}

pub fn write_csv<W: std::io::Write>(writer: W, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<CsvRow>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Into::into))
        .collect()
}
