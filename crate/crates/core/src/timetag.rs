//! Timestamp streams and coincidence logic.
//!
//! Times are integer ticks (1 ps by default). Two events coincide when
//! `|(t_a + delay) − t_b| ≤ window/2`; the comparison is done as
//! `2·|Δ| ≤ window` so odd windows stay exact.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::rng::{self, rng_from_seed};

pub const DEFAULT_RESOLUTION_PS: u32 = 1;
/// 1 ns at 1 ps per tick.
pub const DEFAULT_WINDOW_TICKS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimetagError {
    #[error("stream is not sorted at index {0}")]
    Unsorted(usize),
    #[error("resolution mismatch: {0} ps vs {1} ps")]
    ResolutionMismatch(u32, u32),
    #[error("resolution must be positive")]
    ZeroResolution,
    #[error("coincidence window must be positive")]
    ZeroWindow,
    #[error("stream is empty")]
    Empty,
    #[error("search range must be at least one bin")]
    BadSearchRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestampStream {
    ticks: Vec<u64>,
    resolution_ps: u32,
}

impl TimestampStream {
    pub fn new(ticks: Vec<u64>, resolution_ps: u32) -> Result<Self, TimetagError> {
        if resolution_ps == 0 {
            return Err(TimetagError::ZeroResolution);
        }
        if let Some(i) = ticks.windows(2).position(|w| w[1] < w[0]) {
            return Err(TimetagError::Unsorted(i + 1));
        }
        Ok(Self {
            ticks,
            resolution_ps,
        })
    }

    /// Sorts `ticks` first.
    pub fn from_unsorted(mut ticks: Vec<u64>, resolution_ps: u32) -> Result<Self, TimetagError> {
        ticks.sort_unstable();
        Self::new(ticks, resolution_ps)
    }

    pub fn ticks(&self) -> &[u64] {
        &self.ticks
    }

    pub fn resolution_ps(&self) -> u32 {
        self.resolution_ps
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn into_ticks(self) -> Vec<u64> {
        self.ticks
    }

    /// Same events shifted later by `shift` ticks.
    pub fn shifted(&self, shift: u64) -> Self {
        Self {
            ticks: self.ticks.iter().map(|t| t + shift).collect(),
            resolution_ps: self.resolution_ps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceConfig {
    /// Added to stream `a` before comparison.
    pub delay: i64,
    /// Full window width in ticks.
    pub window: u64,
}

impl Default for CoincidenceConfig {
    fn default() -> Self {
        Self {
            delay: 0,
            window: DEFAULT_WINDOW_TICKS,
        }
    }
}

fn check_pair(a: &TimestampStream, b: &TimestampStream) -> Result<(), TimetagError> {
    if a.resolution_ps != b.resolution_ps {
        return Err(TimetagError::ResolutionMismatch(a.resolution_ps, b.resolution_ps));
    }
    Ok(())
}

/// Greedy earliest-first one-to-one matching: each `a` event, in order,
/// takes the earliest still-unmatched `b` event inside its window.
pub fn count_coincidences(
    a: &TimestampStream,
    b: &TimestampStream,
    cfg: CoincidenceConfig,
) -> Result<u64, TimetagError> {
    check_pair(a, b)?;
    if cfg.window == 0 {
        return Err(TimetagError::ZeroWindow);
    }
    let w = cfg.window as i128;
    let bt = &b.ticks;
    let mut j = 0;
    let mut count = 0;
    for &ta in &a.ticks {
        let x = ta as i128 + cfg.delay as i128;
        // b events too early for this a are too early for every later a
        while j < bt.len() && 2 * (x - bt[j] as i128) > w {
            j += 1;
        }
        if j < bt.len() && 2 * (bt[j] as i128 - x) <= w {
            count += 1;
            j += 1;
        }
    }
    Ok(count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum DelayEstimate {
    Peak { delay: i64, counts: u64 },
    /// The histogram has no bin standing clear of the background.
    NoPeak,
}

impl DelayEstimate {
    pub fn delay(&self) -> Option<i64> {
        match self {
            DelayEstimate::Peak { delay, .. } => Some(*delay),
            DelayEstimate::NoPeak => None,
        }
    }
}

/// Histograms `t_b − t_a` over `±search_range` in bins of `bin` ticks centred
/// on multiples of `bin` and returns the centre of the fullest bin.
pub fn calibrate_delay(
    a: &TimestampStream,
    b: &TimestampStream,
    search_range: u64,
    bin: u64,
) -> Result<DelayEstimate, TimetagError> {
    check_pair(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Err(TimetagError::Empty);
    }
    if bin == 0 || search_range < bin {
        return Err(TimetagError::BadSearchRange);
    }
    let k_max = (search_range / bin) as i64;
    let nbins = (2 * k_max + 1) as usize;
    let mut hist: Vec<u64> = alloc::vec![0; nbins];

    let bin = bin as i128;
    // Δ in [k·bin − bin/2, k·bin + bin/2) falls in bin k
    let lo = -(k_max as i128) * bin - bin / 2;
    let hi = k_max as i128 * bin + (bin - bin / 2);
    let bt = &b.ticks;
    let mut start = 0;
    for &ta in &a.ticks {
        let ta = ta as i128;
        while start < bt.len() && (bt[start] as i128 - ta) < lo {
            start += 1;
        }
        for &tb in &bt[start..] {
            let d = tb as i128 - ta;
            if d >= hi {
                break;
            }
            let idx = (d - lo).div_euclid(bin) as usize;
            hist[idx] += 1;
        }
    }

    let total: u64 = hist.iter().sum();
    let mean = total as f64 / nbins as f64;
    let mut best: Option<(i64, u64)> = None;
    for (i, &n) in hist.iter().enumerate() {
        let k = i as i64 - k_max;
        best = match best {
            None => Some((k, n)),
            Some((bk, bn)) => {
                if n > bn || (n == bn && (k.abs(), k) < (bk.abs(), bk)) {
                    Some((k, n))
                } else {
                    Some((bk, bn))
                }
            }
        };
    }
    let (k, peak) = best.unwrap_or((0, 0));
    if peak as f64 - mean <= 6.0 * math::sqrt(mean.max(1.0)) {
        return Ok(DelayEstimate::NoPeak);
    }
    Ok(DelayEstimate::Peak {
        delay: k * bin as i64,
        counts: peak,
    })
}

/// Parameters of a synthetic two-detector recording.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStreamParams {
    /// Pairs per second reaching the analyzers.
    pub pair_rate: f64,
    /// Detection probability of each photon (transmittance × efficiency).
    pub detect_a: f64,
    pub detect_b: f64,
    /// Uncorrelated background per detector, counts per second.
    pub background_a: f64,
    pub background_b: f64,
    pub duration_s: f64,
    /// Gaussian timing jitter per event, in ps.
    pub jitter_ps: f64,
    /// Extra latency of arm `b`, in ps.
    pub offset_ps: f64,
    pub resolution_ps: u32,
}

impl Default for PairStreamParams {
    fn default() -> Self {
        Self {
            pair_rate: 0.0,
            detect_a: 1.0,
            detect_b: 1.0,
            background_a: 0.0,
            background_b: 0.0,
            duration_s: 1.0,
            jitter_ps: 0.0,
            offset_ps: 0.0,
            resolution_ps: DEFAULT_RESOLUTION_PS,
        }
    }
}

/// Poisson pair emission thinned independently per arm, with background
/// events superposed and Gaussian jitter on every event.
///
/// Pairs seen by neither detector are never materialized: the emission
/// process is split into its independent both / a-only / b-only parts.
pub fn generate_pair_streams(params: &PairStreamParams, seed: u64) -> (TimestampStream, TimestampStream) {
    let mut rng = rng_from_seed(seed);
    let res = params.resolution_ps.max(1) as f64;
    let span_ps = params.duration_s * 1e12;
    let pa = params.detect_a.clamp(0.0, 1.0);
    let pb = params.detect_b.clamp(0.0, 1.0);
    let mu = params.pair_rate.max(0.0) * params.duration_s;

    let mut a: Vec<u64> = Vec::new();
    let mut b: Vec<u64> = Vec::new();

    let to_tick = |t_ps: f64| -> u64 {
        let t = math::round(t_ps / res);
        if t <= 0.0 {
            0
        } else {
            t as u64
        }
    };

    let jitter = |rng: &mut rng::SimRng| {
        if params.jitter_ps > 0.0 {
            params.jitter_ps * rng::standard_normal(rng)
        } else {
            0.0
        }
    };

    let n_both = rng::poisson(&mut rng, mu * pa * pb);
    let n_a = rng::poisson(&mut rng, mu * pa * (1.0 - pb));
    let n_b = rng::poisson(&mut rng, mu * (1.0 - pa) * pb);
    a.reserve((n_both + n_a) as usize);
    b.reserve((n_both + n_b) as usize);
    for _ in 0..n_both {
        let t = rng.random::<f64>() * span_ps;
        let ja = jitter(&mut rng);
        let jb = jitter(&mut rng);
        a.push(to_tick(t + ja));
        b.push(to_tick(t + params.offset_ps + jb));
    }
    for _ in 0..n_a {
        let t = rng.random::<f64>() * span_ps;
        let ja = jitter(&mut rng);
        a.push(to_tick(t + ja));
    }
    for _ in 0..n_b {
        let t = rng.random::<f64>() * span_ps;
        let jb = jitter(&mut rng);
        b.push(to_tick(t + params.offset_ps + jb));
    }
    for _ in 0..rng::poisson(&mut rng, params.background_a.max(0.0) * params.duration_s) {
        a.push(to_tick(rng.random::<f64>() * span_ps));
    }
    for _ in 0..rng::poisson(&mut rng, params.background_b.max(0.0) * params.duration_s) {
        b.push(to_tick(rng.random::<f64>() * span_ps + params.offset_ps));
    }

    let resolution = params.resolution_ps.max(1);
    (
        TimestampStream::from_unsorted(a, resolution).expect("positive resolution"),
        TimestampStream::from_unsorted(b, resolution).expect("positive resolution"),
    )
}

/// Non-paralyzable dead time: an event is dropped if it arrives less than
/// `dead_ticks` after the last kept event.
pub fn apply_dead_time(stream: &TimestampStream, dead_ticks: u64) -> TimestampStream {
    let mut kept = Vec::with_capacity(stream.len());
    let mut last: Option<u64> = None;
    for &t in &stream.ticks {
        if last.is_none_or(|l| t - l >= dead_ticks) {
            kept.push(t);
            last = Some(t);
        }
    }
    TimestampStream {
        ticks: kept,
        resolution_ps: stream.resolution_ps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::coincidence_rates;
    use proptest::prelude::*;
    use rand::Rng;
    use std::vec;

    /// Quadratic reference with the same greedy policy.
    fn brute_force(a: &[u64], b: &[u64], delay: i64, window: u64) -> u64 {
        let mut used = vec![false; b.len()];
        let mut count = 0;
        for &ta in a {
            let x = ta as i128 + delay as i128;
            for (j, &tb) in b.iter().enumerate() {
                if !used[j] && 2 * (x - tb as i128).abs() <= window as i128 {
                    used[j] = true;
                    count += 1;
                    break;
                }
            }
        }
        count
    }

    fn stream(ticks: Vec<u64>) -> TimestampStream {
        TimestampStream::from_unsorted(ticks, 1).unwrap()
    }

    fn random_stream(rng: &mut rng::SimRng, n: usize, span: u64) -> Vec<u64> {
        (0..n).map(|_| rng.random_range(0..span)).collect()
    }

    #[test]
    fn self_match_and_shift() {
        let mut rng = rng_from_seed(1);
        let a = stream(random_stream(&mut rng, 500, 1_000_000));
        let cfg = CoincidenceConfig { delay: 0, window: 1 };
        assert_eq!(count_coincidences(&a, &a, cfg).unwrap(), 500);
        let b = a.shifted(4321);
        let cfg = CoincidenceConfig { delay: 4321, window: 10 };
        assert_eq!(count_coincidences(&a, &b, cfg).unwrap(), 500);
    }

    #[test]
    fn window_edges_are_inclusive() {
        let a = stream(vec![1000]);
        let b = stream(vec![1500]);
        let hit = CoincidenceConfig { delay: 0, window: 1000 };
        let miss = CoincidenceConfig { delay: 0, window: 999 };
        assert_eq!(count_coincidences(&a, &b, hit).unwrap(), 1);
        assert_eq!(count_coincidences(&a, &b, miss).unwrap(), 0);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            TimestampStream::new(vec![3, 2], 1),
            Err(TimetagError::Unsorted(1))
        );
        assert_eq!(TimestampStream::new(vec![], 0), Err(TimetagError::ZeroResolution));
        let a = TimestampStream::new(vec![1], 1).unwrap();
        let b = TimestampStream::new(vec![1], 2).unwrap();
        assert_eq!(
            count_coincidences(&a, &b, CoincidenceConfig::default()),
            Err(TimetagError::ResolutionMismatch(1, 2))
        );
    }

    #[test]
    fn matches_brute_force_on_dense_streams() {
        let mut rng = rng_from_seed(99);
        for _ in 0..200 {
            let n = rng.random_range(0..300);
            let m = rng.random_range(0..300);
            let a = stream(random_stream(&mut rng, n, 100_000));
            let b = stream(random_stream(&mut rng, m, 100_000));
            let delay = rng.random_range(-2000..2000);
            let window = rng.random_range(1..3000);
            let cfg = CoincidenceConfig { delay, window };
            assert_eq!(
                count_coincidences(&a, &b, cfg).unwrap(),
                brute_force(a.ticks(), b.ticks(), delay, window)
            );
        }
    }

    #[test]
    fn calibrates_constructed_shift() {
        let mut rng = rng_from_seed(5);
        let a = stream(random_stream(&mut rng, 2000, 10_000_000));
        let b = a.shifted(37);
        let est = calibrate_delay(&a, &b, 200, 1).unwrap();
        assert_eq!(est.delay(), Some(37));
        let est = calibrate_delay(&a, &b, 200, 10).unwrap();
        assert!((est.delay().unwrap() - 37).abs() <= 10);
    }

    #[test]
    fn ties_prefer_small_delays() {
        let a = stream(vec![1000, 5000]);
        let b = stream(vec![1000 + 20, 5000 - 20, 5000 + 1000, 9000]);
        let est = calibrate_delay(&a, &b, 100, 10);
        // two single-count bins at ±20 do not clear the noise test
        assert_eq!(est.unwrap(), DelayEstimate::NoPeak);

        let a = stream((0..40).map(|i| i * 100_000).collect());
        let mut bt: Vec<u64> = (0..20).map(|i| i * 100_000 + 30).collect();
        bt.extend((20..40).map(|i| i * 100_000 - 30));
        let b = stream(bt);
        let est = calibrate_delay(&a, &b, 100, 10).unwrap();
        assert_eq!(est.delay(), Some(-30));
    }

    #[test]
    fn independent_streams_have_no_peak() {
        let p = PairStreamParams {
            background_a: 20_000.0,
            background_b: 20_000.0,
            duration_s: 1.0,
            ..PairStreamParams::default()
        };
        let (a, b) = generate_pair_streams(&p, 4);
        assert_eq!(calibrate_delay(&a, &b, 5000, 100).unwrap(), DelayEstimate::NoPeak);
    }

    #[test]
    fn recovers_generator_offset() {
        let p = PairStreamParams {
            pair_rate: 20_000.0,
            detect_a: 0.3,
            detect_b: 0.3,
            background_a: 2_000.0,
            background_b: 2_000.0,
            duration_s: 0.5,
            jitter_ps: 30.0,
            offset_ps: 1000.0,
            ..PairStreamParams::default()
        };
        let (a, b) = generate_pair_streams(&p, 17);
        let est = calibrate_delay(&a, &b, 5000, 50).unwrap();
        assert!((est.delay().unwrap() - 1000).abs() <= 50, "{est:?}");
    }

    #[test]
    fn ideal_arms_are_identical_up_to_offset() {
        let p = PairStreamParams {
            pair_rate: 1000.0,
            offset_ps: 250.0,
            ..PairStreamParams::default()
        };
        let (a, b) = generate_pair_streams(&p, 8);
        assert!(!a.is_empty());
        assert_eq!(a.shifted(250), b);
        assert_eq!(generate_pair_streams(&p, 8), (a, b));
    }

    #[test]
    fn thinning_halves_each_arm() {
        let p = PairStreamParams {
            pair_rate: 40_000.0,
            detect_a: 0.5,
            detect_b: 0.5,
            duration_s: 1.0,
            ..PairStreamParams::default()
        };
        let (a, b) = generate_pair_streams(&p, 3);
        let n = count_coincidences(&a, &b, CoincidenceConfig::default()).unwrap() as f64;
        let expected = 0.25 * 40_000.0;
        assert!((n - expected).abs() < 3.0 * expected.sqrt() + 5.0, "{n}");
    }

    #[test]
    fn counts_agree_with_rate_model() {
        let (pair_rate, pa, pb) = (50_000.0, 0.02, 0.05);
        let (bg_a, bg_b) = (30_000.0, 20_000.0);
        let p = PairStreamParams {
            pair_rate,
            detect_a: pa,
            detect_b: pb,
            background_a: bg_a,
            background_b: bg_b,
            duration_s: 2.0,
            jitter_ps: 50.0,
            ..PairStreamParams::default()
        };
        let sa = pair_rate * pa + bg_a;
        let sb = pair_rate * pb + bg_b;
        let r = coincidence_rates(pair_rate, pa, 1.0, pb, 1.0, sa, sb, 1e-9);
        let expected = r.total() * p.duration_s;
        let (a, b) = generate_pair_streams(&p, 12);
        let n = count_coincidences(&a, &b, CoincidenceConfig::default()).unwrap() as f64;
        assert!((n - expected).abs() < 4.0 * expected.sqrt(), "{n} vs {expected}");
    }

    #[test]
    fn dead_time_thins_bursts() {
        let s = stream(vec![0, 5, 10, 20, 21, 40]);
        assert_eq!(apply_dead_time(&s, 10).ticks(), &[0, 10, 20, 40]);
        assert_eq!(apply_dead_time(&s, 0), s);
    }

    proptest! {
        #[test]
        fn symmetric_under_swap(
            a in proptest::collection::vec(0u64..50_000, 0..200),
            b in proptest::collection::vec(0u64..50_000, 0..200),
            delay in -3000i64..3000,
            window in 1u64..4000,
        ) {
            let (a, b) = (stream(a), stream(b));
            let fwd = count_coincidences(&a, &b, CoincidenceConfig { delay, window }).unwrap();
            let back = count_coincidences(&b, &a, CoincidenceConfig { delay: -delay, window }).unwrap();
            prop_assert_eq!(fwd, back);
        }

        #[test]
        fn nondecreasing_in_window(
            a in proptest::collection::vec(0u64..50_000, 0..200),
            b in proptest::collection::vec(0u64..50_000, 0..200),
            delay in -3000i64..3000,
            w1 in 1u64..4000,
            extra in 0u64..4000,
        ) {
            let (a, b) = (stream(a), stream(b));
            let narrow = count_coincidences(&a, &b, CoincidenceConfig { delay, window: w1 }).unwrap();
            let wide = count_coincidences(&a, &b, CoincidenceConfig { delay, window: w1 + extra }).unwrap();
            prop_assert!(narrow <= wide);
        }

        #[test]
        fn two_cursor_equals_brute_force(
            a in proptest::collection::vec(0u64..20_000, 0..150),
            b in proptest::collection::vec(0u64..20_000, 0..150),
            delay in -2000i64..2000,
            window in 1u64..3000,
        ) {
            let (a, b) = (stream(a), stream(b));
            let fast = count_coincidences(&a, &b, CoincidenceConfig { delay, window }).unwrap();
            prop_assert_eq!(fast, brute_force(a.ticks(), b.ticks(), delay, window));
        }
    }
}
