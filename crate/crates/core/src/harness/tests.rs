use std::path::PathBuf;

use proptest::prelude::*;

use super::traces::{canonical, generate, CANONICAL};
use super::*;
use crate::kinematics::{SensorId, Vec3};
use crate::protocol::{Phase, Role};

fn traces_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("traces")
}

fn close(a: f32, b: f32) -> bool {
    (a - b).abs() <= 1e-4
}

fn same_trace(a: &MotionTrace, b: &MotionTrace) -> Result<(), String> {
    if (a.role, &a.name, a.spawn, a.spawn_yaw) != (b.role, &b.name, b.spawn, b.spawn_yaw) {
        return Err("header differs".into());
    }
    if a.events != b.events {
        return Err("events differ".into());
    }
    if a.samples.len() != b.samples.len() {
        return Err(format!(
            "{} vs {} samples",
            a.samples.len(),
            b.samples.len()
        ));
    }
    let flat = |i: &TraceInput| -> Vec<f32> {
        match i {
            TraceInput::Sensors(f) => SensorId::ALL
                .iter()
                .flat_map(|&s| {
                    let t = f.get(s).copied().unwrap_or_default();
                    t.position.into_iter().chain(t.rotation)
                })
                .collect(),
            TraceInput::Ik(t) => [t.head, t.left_hand, t.right_hand]
                .iter()
                .flat_map(|j| j.position.into_iter().chain(j.rotation))
                .collect(),
            TraceInput::Intent(i) => vec![
                i.yaw,
                i.keys.forward as u8 as f32,
                i.keys.left as u8 as f32,
                i.keys.back as u8 as f32,
                i.keys.right as u8 as f32,
            ],
        }
    };
    for (x, y) in a.samples.iter().zip(&b.samples) {
        let (fx, fy) = (flat(&x.input), flat(&y.input));
        if x.t_ms != y.t_ms
            || fx.len() != fy.len()
            || !fx.iter().zip(&fy).all(|(p, q)| close(*p, *q))
        {
            return Err(format!("sample at {} ms differs", x.t_ms));
        }
    }
    Ok(())
}

#[test]
fn canonical_traces_match_generators() {
    let bless = std::env::var_os("HPSYNC_BLESS").is_some();
    for (name, text) in CANONICAL {
        let fresh = generate(name).unwrap();
        if bless {
            std::fs::write(traces_dir().join(format!("{name}.jsonl")), fresh.to_jsonl()).unwrap();
            continue;
        }
        let shipped = MotionTrace::from_jsonl(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        if let Err(e) = same_trace(&shipped, &fresh) {
            panic!("{name}: {e}; rerun with HPSYNC_BLESS=1 to regenerate");
        }
    }
}

#[test]
fn jsonl_round_trip() {
    for (name, _) in CANONICAL {
        let t = canonical(name).unwrap();
        let again = MotionTrace::from_jsonl(&t.to_jsonl()).unwrap();
        assert_eq!(again, t, "{name}");
    }
}

#[test]
fn trace_validation() {
    let mut t = canonical("presentation/audience_browser").unwrap();
    t.validate().unwrap();
    t.events.push(TimedEvent {
        t_ms: 100,
        event: TraceEvent::Slide(2),
    });
    assert!(matches!(t.validate(), Err(HarnessError::Trace(_))));
    t.events[0].event = TraceEvent::Mute {
        target: None,
        muted: false,
    };
    t.validate().unwrap();
    t.events[0].event = TraceEvent::Mute {
        target: Some("bot:presenter".into()),
        muted: true,
    };
    assert!(t.validate().is_err());
    t.events.clear();

    let dup = t.samples[1].clone();
    t.samples.insert(1, dup);
    assert!(t.validate().is_err());

    let mut p = canonical("handshake/presenter").unwrap();
    p.events.push(TimedEvent {
        t_ms: 10,
        event: TraceEvent::Phase(Phase::OpenDiscussion),
    });
    p.validate().unwrap();
    p.role = Role::Audience;
    assert!(p.validate().is_err());

    assert!(MotionTrace::from_jsonl("").is_err());
    assert!(
        MotionTrace::from_jsonl("{\"kind\":\"intent\",\"t_ms\":0,\"keys\":\"\",\"yaw\":0}")
            .is_err()
    );
    let bad_key = "{\"kind\":\"header\",\"role\":\"audience\",\"name\":\"x\"}\n{\"kind\":\"intent\",\"t_ms\":0,\"keys\":\"wq\",\"yaw\":0}";
    assert!(MotionTrace::from_jsonl(bad_key).is_err());
}

#[test]
fn keys_parse_and_print() {
    let k: Keys = "wd".parse().unwrap();
    assert!(k.forward && k.right && !k.left && !k.back);
    assert_eq!(k.axes(), (1.0, 1.0));
    assert_eq!(k.to_string(), "wd");
    assert!(!Keys::default().any());
    assert!("x".parse::<Keys>().is_err());
}

#[test]
fn sampling_interpolates_and_holds() {
    let t = canonical("handshake/examiner_vr").unwrap();
    let z = |ms| match t.sample_at(ms).unwrap() {
        TraceInput::Ik(x) => x.head.position[2],
        _ => unreachable!(),
    };
    assert!(close(z(0), 2.5));
    assert!(close(z(3000), 0.8));
    assert!(close(z(99_999), z(8000)));
    let (a, b, mid) = (z(1000), z(1100), z(1050));
    assert!((mid - (a + b) / 2.0).abs() < 1e-5);

    let b = canonical("presentation/audience_browser").unwrap();
    let keys = |ms| match b.sample_at(ms).unwrap() {
        TraceInput::Intent(i) => i.keys,
        _ => unreachable!(),
    };
    assert!(keys(10_400).forward);
    assert!(!keys(9_999).any());
}

#[test]
fn ideal_link_is_transparent() {
    let c = NetConditions::default();
    let mut l = Link::new(&c, 7, 0, Direction::Up);
    for t in 0..1000 {
        assert_eq!(l.schedule(t, t % 2 == 0), Some(t));
    }
    assert_eq!(l.lost, 0);
}

#[test]
fn link_splits_latency_and_keeps_reliable_order() {
    let c = NetConditions::new(51, 40, 0.5).unwrap();
    let mut up = Link::new(&c, 1, 3, Direction::Up);
    let mut down = Link::new(&c, 1, 3, Direction::Down);
    let mut last = 0;
    for t in 0..5000 {
        let u = up.schedule(t, false).unwrap();
        assert!(u >= last);
        assert!(u >= t + 25 - 10 && u <= t + 25 + 10);
        last = u;
        down.schedule(t, true);
    }
    // Hop loss compounds to the requested end-to-end figure.
    let hop = 1.0 - 0.5f64.sqrt();
    let rate = down.lost as f64 / 5000.0;
    assert!((rate - hop).abs() < 0.03, "{rate}");
    assert!(NetConditions::new(0, 0, 1.0).is_err());
}

#[test]
fn links_are_seeded() {
    let c = NetConditions::new(20, 10, 0.1).unwrap();
    let run = |seed| {
        let mut l = Link::new(&c, seed, 2, Direction::Down);
        (0..500).map(|t| l.schedule(t, true)).collect::<Vec<_>>()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

fn nearest_rank(v: &[u64], p: f64) -> u64 {
    let mut s = v.to_vec();
    s.sort();
    let k = (p * s.len() as f64 / 100.0).ceil().max(1.0) as usize;
    s[k - 1]
}

proptest! {
    #[test]
    fn latency_percentiles_are_ordered(v in prop::collection::vec(0u64..500, 1..300)) {
        let s = LatencySummary::from_samples(&v);
        prop_assert!(s.p50 <= s.p95 && s.p95 <= s.p99 && s.p99 <= s.max);
        prop_assert_eq!(s.p50, nearest_rank(&v, 50.0));
        prop_assert_eq!(s.p99, nearest_rank(&v, 99.0));
        prop_assert_eq!(s.samples, v.len() as u64);
    }
}

fn moving(speed: f64, times: impl Iterator<Item = u64>) -> Vec<(u64, Vec3)> {
    times
        .map(|t| (t, Vec3::new(speed * t as f64 / 1000.0, 0.0, 0.0)))
        .collect()
}

#[test]
fn positional_error_examples() {
    let frames = |skip: Option<u64>| {
        (0..120u64)
            .filter(move |k| Some(*k) != skip)
            .map(|k| k * 1000 / 60)
    };
    let truth = RootTrack::new(moving(1.0, frames(None))).unwrap();

    // Observation equal to the truth one delay earlier.
    let observed: Vec<_> = (100..2000u64)
        .step_by(10)
        .map(|t| (t, truth.at((t - 100) as f64).unwrap()))
        .collect();
    let e = compute_positional_error(&truth, &observed, 100, ClockAlignment::Shared).unwrap();
    assert!(e < 1e-12);

    // One dropped 60 Hz sample: the observer bridges the gap from its buffer.
    let mut buf = crate::client::PoseBuffer::new();
    let mut observed = Vec::new();
    let mut arrivals = moving(1.0, frames(Some(60))).into_iter().peekable();
    for t in (100..1980u64).step_by(5) {
        // Frames arrive as they are sent; the buffer only keeps recent ones.
        while let Some(&(ts, p)) = arrivals.peek() {
            if ts > t {
                break;
            }
            let pose = crate::protocol::PosePayload::Simple(crate::protocol::TransformSimple {
                position: p.to_f32(),
                yaw: 0.0,
                locomotion: crate::protocol::Locomotion::Walk,
                intensity: 1.0,
            });
            buf.push(ts, pose);
            arrivals.next();
        }
        let s = crate::client::sample_pose(&buf, t - 100, 200).unwrap();
        observed.push((t, Vec3::from_f32(s.root_position())));
    }
    let worst = observed
        .iter()
        .map(|&(t, p)| p.distance(truth.at((t - 100) as f64).unwrap()))
        .fold(0.0, f64::max);
    assert!(worst <= 1.0 / 60.0 + 1e-6, "{worst}");
    let e = compute_positional_error(&truth, &observed, 100, ClockAlignment::Shared).unwrap();
    assert!(e <= 1.0 / 60.0);

    // Static truth: any subset of observations sits on it.
    let still = RootTrack::new(moving(0.0, frames(None))).unwrap();
    let obs: Vec<_> = (100..2000u64)
        .step_by(37)
        .map(|t| (t, Vec3::ZERO))
        .collect();
    assert_eq!(
        compute_positional_error(&still, &obs, 100, ClockAlignment::Shared).unwrap(),
        0.0
    );

    assert!(matches!(
        compute_positional_error(&still, &obs, 100, ClockAlignment::Unresolved),
        Err(HarnessError::ClockSkewUnresolved)
    ));
    assert!(matches!(
        compute_positional_error(&still, &[(50_000, Vec3::ZERO)], 100, ClockAlignment::Shared),
        Err(HarnessError::NoOverlap)
    ));
    // A recorded offset shifts the comparison.
    let shifted: Vec<_> = observed.iter().map(|&(t, p)| (t + 40, p)).collect();
    let e2 = compute_positional_error(&truth, &shifted, 100, ClockAlignment::Offset(40)).unwrap();
    assert!((e2 - e).abs() < 1e-9);
    assert!(RootTrack::new(vec![(5, Vec3::ZERO), (5, Vec3::ZERO)]).is_err());
}

#[test]
fn longest_run_counts_consecutive_samples() {
    let s: Vec<(u64, f64)> = [0.2, 0.1, 0.1, 0.1, 0.3, 0.05, 0.05]
        .iter()
        .enumerate()
        .map(|(i, &d)| (i as u64 * 10, d))
        .collect();
    assert_eq!(longest_run_within(&s, 0.12), 20);
    assert_eq!(longest_run_within(&[], 0.12), 0);
}

fn config(seed: u64, latency_ms: u64, jitter_ms: u64, loss: f64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        conditions: NetConditions::new(latency_ms, jitter_ms, loss).unwrap(),
        ..ScenarioConfig::default()
    }
}

#[test]
fn handshake_is_seen_remotely() {
    let out = run_scenario(Scenario::Handshake, &config(3, 0, 0, 0.0)).unwrap();
    let h = out.metrics.handshake.as_ref().unwrap();
    assert!(h.longest_contact_ms >= HANDSHAKE_HOLD_MS, "{h:?}");
    assert!(h.min_wrist_distance_m < 0.06, "{h:?}");
    assert_eq!(out.metrics.violations, 0);
    assert!(!out.log.is_empty());
}

#[test]
fn handshake_is_seed_deterministic_under_loss() {
    let a = run_scenario(Scenario::Handshake, &config(11, 50, 10, 0.05)).unwrap();
    let b = run_scenario(Scenario::Handshake, &config(11, 50, 10, 0.05)).unwrap();
    assert_eq!(a.metrics.to_json_pretty(), b.metrics.to_json_pretty());
    assert_eq!(a.log, b.log);
    assert!(a.metrics.drops.link_lost > 0);
    let c = run_scenario(Scenario::Handshake, &config(12, 50, 10, 0.05)).unwrap();
    assert_ne!(a.metrics.to_json_pretty(), c.metrics.to_json_pretty());
}

#[test]
fn injected_latency_shows_in_percentiles() {
    let out = run_scenario(Scenario::Handshake, &config(1, 50, 0, 0.0)).unwrap();
    let l = out.metrics.pose_latency_ms;
    assert_eq!((l.p50, l.p99), (50, 50));
    let ideal = run_scenario(Scenario::Handshake, &config(1, 0, 0, 0.0)).unwrap();
    assert_eq!(ideal.metrics.pose_latency_ms.p99, 0);
}

#[test]
fn freestyle_error_grows_with_loss() {
    let clean = run_scenario(Scenario::Freestyle, &config(4, 0, 0, 0.0)).unwrap();
    let lossy = run_scenario(Scenario::Freestyle, &config(4, 0, 0, 0.2)).unwrap();
    let (e0, e1) = (
        clean.metrics.positional_error_m.unwrap(),
        lossy.metrics.positional_error_m.unwrap(),
    );
    assert!(e0 < 1e-4, "{e0}");
    assert!(e1 > e0, "{e1} vs {e0}");
    assert!(lossy.metrics.passed());
}

#[test]
fn scenario_names_parse() {
    for s in Scenario::ALL {
        assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
    }
    assert!("dance".parse::<Scenario>().is_err());
}

#[test]
fn run_scenario_reports_assertion_failures() {
    // A presenter-only handshake cannot be observed.
    let cfg = config(0, 0, 0, 0.0);
    let mut specs = Scenario::Handshake.bots().unwrap();
    specs.truncate(1);
    let mut port = InProcess::new(cfg.room.clone());
    let out = scenario::run_specs(Scenario::Handshake, specs, &cfg, &mut port).unwrap();
    assert!(!out.metrics.passed());
    assert_eq!(out.metrics.failures().len(), 1);
}
