use super::*;
use crate::control::{execute_and_verify, plan_recovery, program_allocation};
use crate::topology::tests::{fixture, programmed, representative};
use alloc::collections::BTreeSet;
use std::string::ToString;
use std::vec;

fn model() -> NetworkModel {
    NetworkModel::new(fixture()).unwrap()
}

/// Representative plan after the controller has routed around `span`.
fn recovered(m: &NetworkModel, span: &str) -> NetworkState {
    let plan = representative();
    let base = programmed(&m.topology);
    let failed: BTreeSet<_> = [span.into()].into();
    let rp = plan_recovery(&m.topology, &base, &plan, &failed).unwrap();
    let (s, report) = execute_and_verify(&m.topology, &base, &plan, &rp).unwrap();
    assert!(report.success);
    crate::topology::fail_span(&m.topology, &s, span).unwrap()
}

fn gaussian_fraction_by_quadrature(center_offset_ghz: f64, fwhm_ghz: f64) -> f64 {
    // 25 GHz slot, trapezoid rule
    let sigma = fwhm_ghz / (8.0 * 2f64.ln()).sqrt();
    let (lo, hi) = (center_offset_ghz - 12.5, center_offset_ghz + 12.5);
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let g = |x: f64| (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * core::f64::consts::PI).sqrt());
    let mut acc = 0.5 * (g(lo) + g(hi));
    for i in 1..n {
        acc += g(lo + i as f64 * h);
    }
    acc * h
}

#[test]
fn fixture_reproduces_calibration_link() {
    let m = model();
    let p = m
        .predict_pair(&programmed(&m.topology), &representative(), "A1", "A2", 1.0)
        .unwrap();
    assert!((p.coincidence_rate() - 866.5).abs() < 0.05, "{}", p.coincidence_rate());
    assert!((p.fidelity - 0.9504).abs() < 1e-4, "{}", p.fidelity);
    assert_eq!(p.channels, vec![8]);
}

#[test]
fn calibration_round_trips() {
    let m = model();
    let s = programmed(&m.topology);
    let pc = m.calibrate(&s, &representative(), "A1", "A2", 866.5, 0.9504).unwrap();
    assert!((pc.r0 - m.photonics.r0).abs() / pc.r0 < 1e-6);
    assert!((pc.v0 - m.photonics.v0).abs() < 1e-6);
}

#[test]
fn true_rate_matches_independent_radiometry() {
    let m = model();
    let s = programmed(&m.topology);
    let p = m.predict_pair(&s, &representative(), "A1", "A2", 1.0).unwrap();
    // Ch. 8 sits 187.5 GHz either side of the pair centre
    let mu = m.photonics.r0 * 2.0 * gaussian_fraction_by_quadrature(187.5, 310.0);
    let ta = 10f64.powf(-7.25 / 10.0) * 0.81;
    let tb = 10f64.powf(-8.51 / 10.0) * 0.81;
    let expected = mu * ta * tb;
    assert!((p.rates.true_coinc - expected).abs() / expected < 1e-6);
    // accidentals are S_a S_b tau with the model's own singles
    let links = m.slot_links(&s, &representative()).unwrap();
    let sa = m.singles(&links, "A1").unwrap();
    let sb = m.singles(&links, "A2").unwrap();
    assert!((p.rates.accidental - sa * sb * 1e-9).abs() < 1e-12);
}

#[test]
fn direct_rate_ordering() {
    let m = model();
    let s = programmed(&m.topology);
    let plan = representative();
    let r = |a, b| m.predict_pair(&s, &plan, a, b, 1.0).unwrap().coincidence_rate();
    let (aa, bb, cc) = (r("A1", "A2"), r("B1", "B2"), r("C1", "C2"));
    assert!(aa > 10.0 * cc && cc > 2.0 * bb, "{aa} {bb} {cc}");
    for (a, b) in [("A1", "B1"), ("A2", "C1"), ("B1", "C1")] {
        assert!(r(a, b) > 0.0);
    }
}

#[test]
fn rerouted_rate_ratios() {
    let m = model();
    let plan = representative();
    let direct = programmed(&m.topology);
    let via_b = recovered(&m, "A-C");
    let r = |s: &NetworkState, a, b| m.predict_pair(s, &plan, a, b, 1.0).unwrap().coincidence_rate();

    let one_arm = r(&direct, "A2", "C1") / r(&via_b, "A1", "C1");
    let target = 246.6 / 23.9;
    assert!((one_arm / target - 1.0).abs() <= 0.25, "{one_arm}");

    let two_arm = r(&direct, "C1", "C2") / r(&via_b, "C1", "C2");
    let target = 48.1 / 0.33;
    assert!(two_arm >= target / 1.5 && two_arm <= target * 1.5, "{two_arm}");
}

#[test]
fn priority_allocations_fit_reported_fidelities() {
    let m = model();
    let via_c = recovered(&m, "A-B");
    for (file, a, b, f) in [
        (include_str!("../../../../fixtures/plan_priority_A1_B2.json"), "A1", "B2", 0.765),
        (include_str!("../../../../fixtures/plan_priority_B2_C2.json"), "B2", "C2", 0.76),
    ] {
        let plan: AllocationPlan = serde_json::from_str(file).unwrap();
        let out = program_allocation(&m.topology, &via_c, &plan, &via_c.failed_spans).unwrap();
        assert!(out.unrouted.is_empty());
        let k = m.fit_multipair_factor(&out.state, &plan, a, b, f).unwrap();
        let p = m.predict_pair(&out.state, &plan, a, b, k).unwrap();
        assert!((p.fidelity - f).abs() < 1e-9);
        assert!((p.log_negativity - (2.0 * f).log2()).abs() < 1e-9);
        assert_eq!(p.channels.len(), 8);
        assert!(p.multipair_excess() > 0.0);
    }
}

#[test]
fn singles_cover_users_holding_slots() {
    let m = model();
    let s = programmed(&m.topology);
    let singles = m.all_singles(&s, &representative()).unwrap();
    assert_eq!(singles.len(), 6);
    for (u, rate) in &singles {
        let dark = m.photonics.detectors[u].dark;
        assert!(*rate > 3.0 * 1.2 * dark, "{u}: {rate}");
    }
    let failed = crate::topology::fail_span(&m.topology, &s, "A-C").unwrap();
    let singles = m.all_singles(&failed, &representative()).unwrap();
    assert_eq!(singles["C1"], m.photonics.detectors["C1"].dark);
}

#[test]
fn recovered_users_clear_the_default_threshold() {
    let m = model();
    let plan = representative();
    for (span, users) in [("A-C", ["C1", "C2"]), ("A-B", ["B1", "B2"])] {
        let s = recovered(&m, span);
        let singles = m.all_singles(&s, &plan).unwrap();
        for u in users {
            let dark = m.photonics.detectors[u].dark;
            assert!(singles[u] > 3.0 * 1.2 * dark, "{u}: {}", singles[u]);
        }
    }
}

#[test]
fn missing_detector_and_unshared_pair() {
    let mut m = model();
    let s = programmed(&m.topology);
    assert!(matches!(
        m.predict_pair(&s, &representative(), "A1", "C2", 1.0),
        Err(NetworkError::NoSharedChannel(..))
    ));
    m.photonics.detectors.remove("A1");
    assert_eq!(
        m.predict_pair(&s, &representative(), "A1", "A2", 1.0),
        Err(NetworkError::MissingDetector("A1".to_string().into()))
    );
}

#[test]
fn sampled_singles_are_reproducible() {
    let m = model();
    let net = SimulatedNetwork::new(m.clone(), programmed(&m.topology), representative());
    let a = net.sample_singles(1.0, 42).unwrap();
    assert_eq!(a, net.sample_singles(1.0, 42).unwrap());
    assert_ne!(a, net.sample_singles(1.0, 43).unwrap());
}

#[test]
fn shared_slots_are_oriented() {
    let plan = representative();
    assert_eq!(
        shared_slots(&plan, "C1", "A2"),
        vec![(FrequencySlot::idler(1), FrequencySlot::signal(1))]
    );
    assert_eq!(
        shared_slots(&plan, "A2", "C1"),
        vec![(FrequencySlot::signal(1), FrequencySlot::idler(1))]
    );
}

