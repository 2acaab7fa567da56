//! Acceptance checks, one PASS/FAIL line each. Runs as its own binary so the
//! verdicts are printed even when everything passes.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::thread;
use std::time::Instant;

use rand::Rng;

use mhqn::harness::LinkSetup;
use mhqn_core::control::{Controller, ControlError, EventKind, Diagnosis};
use mhqn_core::grid::{slot_center, FrequencySlot, Role};
use mhqn_core::network::{NetworkModel, SimulatedNetwork};
use mhqn_core::rng::{derive_seed, rng_from_seed};
use mhqn_core::timetag::{
    calibrate_delay, count_coincidences, generate_pair_streams, CoincidenceConfig, PairStreamParams,
    TimestampStream,
};
use mhqn_core::tomography::{
    bayesian_estimate, fidelity, bell_psi_plus, log_negativity, simulate_dataset, DensityMatrix4,
    MeasurementSetting, Prior, SamplerParams,
};
use mhqn_core::topology::resolve_lightpath;

use common::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn workers() -> usize {
    thread::available_parallelism().map_or(4, |n| n.get())
}

/// Runs `f(i)` for `i in 0..n` across threads, results in index order.
fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let k = workers().min(n.max(1));
    let mut chunks: Vec<Vec<(usize, T)>> = thread::scope(|s| {
        let handles: Vec<_> = (0..k)
            .map(|w| {
                let f = &f;
                s.spawn(move || (w..n).step_by(k).map(|i| (i, f(i))).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut all: Vec<(usize, T)> = chunks.drain(..).flatten().collect();
    all.sort_by_key(|(i, _)| *i);
    all.into_iter().map(|(_, t)| t).collect()
}

fn loss_of(net: &SimulatedNetwork, user: &str) -> Option<f64> {
    let slot = net.plan.slots_of(user)[0];
    resolve_lightpath(net.topology(), &net.state, slot, user)
        .unwrap()
        .path()
        .map(|p| p.total_loss_db)
}

/// Fails `span` and lets one controller cycle react.
fn fail_and_recover(net: &mut SimulatedNetwork, controller: &mut Controller, spans: &[&str]) -> Vec<EventKind> {
    for s in spans {
        net.fail_span(s).unwrap();
    }
    controller
        .cycle(net, 100.0, 5)
        .unwrap()
        .into_iter()
        .map(|e| e.kind)
        .collect()
}

fn grid_exactness() -> Verdict {
    let s8 = slot_center(8, Role::Signal).unwrap();
    let i8 = slot_center(8, Role::Idler).unwrap();
    let labels: Vec<f64> = FrequencySlot::all().map(|s| s.itu_label()).collect();
    let on_lattice = labels.iter().all(|l| (l * 8.0).fract() == 0.0);
    let distinct: BTreeSet<u64> = labels.iter().map(|l| (l * 8.0) as u64).collect();
    let min = labels.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = labels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pass = s8 == 192.5 && i8 == 192.125 && labels.len() == 16 && distinct.len() == 16 && on_lattice && min == 21.25 && max == 25.0;
    verdict(pass, format!("ch8 signal {s8} THz, idler {i8} THz, {} labels {min}..{max}", labels.len()))
}

fn loss_calibration() -> Verdict {
    let net = network();
    let direct = [("A1", 7.25), ("A2", 8.51), ("B1", 17.4), ("B2", 16.6), ("C1", 17.2), ("C2", 17.6)];
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for (u, want) in direct {
        let got = loss_of(&net, u).unwrap_or(f64::NAN);
        worst = worst.max((got - want).abs());
        pass &= (got - want).abs() <= 0.01;
    }
    let mut detail = format!("direct worst {worst:.4} dB");
    for (span, users) in [("A-C", [("C1", 27.5), ("C2", 26.8)]), ("A-B", [("B1", 28.8), ("B2", 28.0)])] {
        let mut n = network();
        let mut c = Controller::new(policy());
        fail_and_recover(&mut n, &mut c, &[span]);
        for (u, want) in users {
            let got = loss_of(&n, u).unwrap_or(f64::NAN);
            let base = loss_of(&net, u).unwrap();
            let extra = got - base;
            pass &= (got - want).abs() <= 0.5 && (9.0..=12.0).contains(&extra);
            detail.push_str(&format!("; {u} {got:.2} (+{extra:.2})"));
        }
    }
    verdict(pass, detail)
}

fn rate_ratios() -> Verdict {
    let topo = topology();
    // start from an uncalibrated source and fit it on A1-A2 alone
    let mut pc = topo.photonics.clone().unwrap();
    pc.r0 = 5.0e5;
    pc.v0 = 0.99;
    let rough = network_with(NetworkModel::with_photonics(topo.clone(), pc).unwrap());
    let fitted = rough
        .model
        .calibrate(&rough.state, &rough.plan, "A1", "A2", 866.5, 0.9504)
        .unwrap();
    let model = NetworkModel::with_photonics(topo, fitted).unwrap();
    let direct = network_with(model);
    let mut via_b = direct.clone();
    fail_and_recover(&mut via_b, &mut Controller::new(policy()), &["A-C"]);
    let r = |n: &SimulatedNetwork, a, b| n.predict_pair(a, b).unwrap().coincidence_rate();
    let one = r(&direct, "A2", "C1") / r(&via_b, "A1", "C1");
    let two = r(&direct, "C1", "C2") / r(&via_b, "C1", "C2");
    let (t1, t2) = (246.6 / 23.9, 48.1 / 0.33);
    let pass = (one / t1 - 1.0).abs() <= 0.25 && two >= t2 / 1.5 && two <= t2 * 1.5;
    verdict(
        pass,
        format!("one-arm {one:.2} (target {t1:.2} ±25%), two-arm {two:.1} (target {t2:.1} ×/÷1.5)"),
    )
}

fn werner_consistency() -> Verdict {
    let mut pass = true;
    let mut detail = Vec::new();
    for (f, reported, bar) in [(0.765, 0.62, 0.02), (0.76, 0.61, 0.03)] {
        let p = (4.0 * f - 1.0) / 3.0;
        let rho = DensityMatrix4::werner(p);
        let en = log_negativity(&rho);
        let closed = (2.0f64 * f).log2();
        pass &= (fidelity(&rho, &bell_psi_plus()) - f).abs() < 1e-12;
        pass &= (en - closed).abs() < 1e-12 && (en - reported).abs() <= bar;
        detail.push(format!("F {f}: E_N {en:.3} vs {reported}({bar})"));
    }
    verdict(pass, detail.join(", "))
}

fn tomography_coverage() -> Verdict {
    // A1-A2 at a tenth of the bench integration time per setting
    let (flux, duration) = (866.5, 18.0);
    let params = SamplerParams::default();
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, p) in [1.0, 0.9, 0.687, 0.3].into_iter().enumerate() {
        let rho = DensityMatrix4::werner(p);
        let truth = fidelity(&rho, &bell_psi_plus());
        let runs = par_map(100, |i| {
            let mut rng = rng_from_seed(derive_seed(5, &[k as u64, i as u64]));
            let ds = simulate_dataset(&rho, flux, duration, &mut rng);
            let post = bayesian_estimate(&ds, Prior::HilbertSchmidt, &params, derive_seed(6, &[k as u64, i as u64])).unwrap();
            let valid = post.mean.check().is_ok() && (post.mean.trace() - 1.0).abs() < 1e-9;
            (post.fidelity_covers(truth, 3.0), valid)
        });
        let covered = runs.iter().filter(|r| r.0).count();
        let valid = runs.iter().all(|r| r.1);
        pass &= covered >= 90 && valid;
        detail.push(format!("p={p}: {covered}/100{}", if valid { "" } else { " INVALID MEAN" }));
    }
    verdict(pass, detail.join(", "))
}

fn brute_force(a: &[u64], b: &[u64], delay: i64, window: u64) -> u64 {
    let mut used = vec![false; b.len()];
    let mut n = 0;
    for &ta in a {
        let x = ta as i128 + delay as i128;
        for (j, &tb) in b.iter().enumerate() {
            if !used[j] && 2 * (tb as i128 - x).abs() <= window as i128 {
                used[j] = true;
                n += 1;
                break;
            }
        }
    }
    n
}

fn counter_oracle() -> Verdict {
    let mismatches: usize = par_map(1000, |i| {
        let mut rng = rng_from_seed(derive_seed(61, &[i as u64]));
        let na = if i < 10 { 10_000 } else { rng.random_range(0..=10_000) };
        let nb = if i < 10 { 10_000 } else { rng.random_range(0..=10_000) };
        // dense enough that windows overlap and greedy choices matter
        let span = (na.max(nb) as u64 + 1) * rng.random_range(200..5_000);
        let a: Vec<u64> = (0..na).map(|_| rng.random_range(0..span)).collect();
        let b: Vec<u64> = (0..nb).map(|_| rng.random_range(0..span)).collect();
        let a = TimestampStream::from_unsorted(a, 1).unwrap();
        let b = TimestampStream::from_unsorted(b, 1).unwrap();
        let window = rng.random_range(1..3_000);
        let delay = rng.random_range(-2_000..2_000);
        let fast = count_coincidences(&a, &b, CoincidenceConfig { delay, window }).unwrap();
        usize::from(fast != brute_force(a.ticks(), b.ticks(), delay, window))
    })
    .into_iter()
    .sum();

    let bin = 100;
    let hits = par_map(100, |i| {
        let mut rng = rng_from_seed(derive_seed(62, &[i as u64]));
        let offset: i64 = rng.random_range(-15_000_000..15_000_000);
        let params = PairStreamParams {
            pair_rate: 20_000.0,
            detect_a: 0.1,
            detect_b: 0.05,
            background_a: 20_000.0,
            background_b: 20_000.0,
            duration_s: 2.0,
            jitter_ps: 50.0,
            offset_ps: offset as f64,
            resolution_ps: 1,
        };
        // keep every tick non-negative whatever the sign of the offset
        let (a, b) = generate_pair_streams(&params, derive_seed(63, &[i as u64]));
        let (a, b) = if offset < 0 { (a.shifted(20_000_000), b.shifted(20_000_000)) } else { (a, b) };
        let est = calibrate_delay(&a, &b, 20_000_000, bin).unwrap();
        est.delay().is_some_and(|d| (d - offset).unsigned_abs() <= bin)
    })
    .into_iter()
    .filter(|&h| h)
    .count();
    verdict(
        mismatches == 0 && hits == 100,
        format!("{mismatches} counter mismatches in 1000 pairs, delay recovered {hits}/100"),
    )
}

fn protection_switching() -> Verdict {
    let mut pass = true;
    let mut detail = Vec::new();
    for (span, users, via) in [("A-B", ["B1", "B2"], "B-C"), ("A-C", ["C1", "C2"], "B-C")] {
        let mut net = network();
        let mut c = Controller::new(policy());
        let quiet = c.cycle(&mut net, 0.0, 1).unwrap();
        pass &= quiet.len() == 1;
        let before = net.model.slot_links(&net.state, &net.plan).unwrap();
        let events = fail_and_recover(&mut net, &mut c, &[span]);
        let detected = users.iter().all(|u| {
            events.iter().any(|e| matches!(e, EventKind::StatusChange(s) if s.user.as_str() == *u && s.to == mhqn_core::control::Status::Down))
        });
        let diagnosed = events
            .iter()
            .any(|e| matches!(e, EventKind::Diagnosis { diagnosis: Diagnosis::Span { span: s } } if s.as_str() == span));
        let verified = events
            .iter()
            .any(|e| matches!(e, EventKind::Verify { report } if report.success));
        let after = net.model.slot_links(&net.state, &net.plan).unwrap();
        let restored = after.iter().all(|l| l.resolution.path().is_some());
        let rerouted = after
            .iter()
            .filter(|l| users.contains(&l.user.as_str()))
            .all(|l| l.resolution.path().is_some_and(|p| p.traverses_span(via)));
        // paths that never touched the failed span keep their exact route
        let untouched = before.iter().zip(&after).all(|(x, y)| {
            let (Some(px), Some(py)) = (x.resolution.path(), y.resolution.path()) else {
                return true;
            };
            px.traverses_span(span) || px.hops == py.hops
        });
        let back_up = c.statuses.values().all(|s| s.status == mhqn_core::control::Status::Up);
        let ok = detected && diagnosed && verified && restored && rerouted && untouched && back_up;
        pass &= ok;
        detail.push(format!("{span}: {}", if ok { "recovered" } else { "FAILED" }));
    }

    let mut net = network();
    let mut c = Controller::new(policy());
    let events = fail_and_recover(&mut net, &mut c, &["A-B", "A-C"]);
    let alert = events
        .iter()
        .any(|e| matches!(e, EventKind::Alert { message } if message.starts_with("NoRouteAvailable")));
    let planned = mhqn_core::control::plan_recovery(net.topology(), &net.state, &net.plan, &c.known_failed);
    let hub_a_kept = ["A1", "A2"].iter().all(|u| loss_of(&net, u).is_some());
    let dual = alert && matches!(planned, Err(ControlError::NoRouteAvailable(_))) && hub_a_kept;
    pass &= dual;
    detail.push(format!("dual: {}", if dual { "NoRouteAvailable" } else { "FAILED" }));
    verdict(pass, detail.join(", "))
}

fn pipeline_closure() -> Verdict {
    let net = network();
    let (setup, pred) = LinkSetup::from_network(&net, "A1", "A2").unwrap();
    let duration = 1.0;
    // over all 36 settings the pairs sum to nine analyzer-free copies
    let expected = 9.0 * duration * (pred.rates.true_coinc + pred.rates.accidental);
    let cfg = CoincidenceConfig {
        delay: 0,
        window: setup.window_ticks,
    };
    let z: Vec<f64> = par_map(100, |i| {
        let total: u64 = MeasurementSetting::all()
            .enumerate()
            .map(|(k, s)| {
                let (a, b) = setup.record(Some(s), duration, derive_seed(81, &[i as u64, k as u64]));
                count_coincidences(&a, &b, cfg).unwrap()
            })
            .sum();
        (total as f64 - expected) / expected.sqrt()
    });
    let within = z.iter().filter(|z| z.abs() <= 4.0).count();
    let worst = z.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    verdict(
        within == 100,
        format!("{within}/100 within 4σ of {expected:.0} counts, worst |z| {worst:.2}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("grid exactness", grid_exactness),
        ("loss calibration", loss_calibration),
        ("rate-ratio prediction", rate_ratios),
        ("Werner consistency", werner_consistency),
        ("tomography coverage", tomography_coverage),
        ("coincidence-counter oracle", counter_oracle),
        ("protection switching", protection_switching),
        ("pipeline closure", pipeline_closure),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name} [{}] ({:.1} s)",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
