//! Run metrics and the positional-error measure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bot::{Bot, BotKind};
use super::netsim::NetConditions;
use super::HarnessError;
use crate::kinematics::Vec3;
use crate::protocol::Role;
use crate::server::RoomStats;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Traffic {
    pub frames_up: u64,
    pub bytes_up: u64,
    pub frames_down: u64,
    pub bytes_down: u64,
    pub uplink_bytes_per_s: f64,
    pub downlink_bytes_per_s: f64,
}

impl Traffic {
    fn add(&mut self, other: &Traffic) {
        self.frames_up += other.frames_up;
        self.bytes_up += other.bytes_up;
        self.frames_down += other.frames_down;
        self.bytes_down += other.bytes_down;
        self.uplink_bytes_per_s += other.uplink_bytes_per_s;
        self.downlink_bytes_per_s += other.downlink_bytes_per_s;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotMetrics {
    pub role: Role,
    pub kind: BotKind,
    #[serde(flatten)]
    pub traffic: Traffic,
    pub poses_received: u64,
    pub slides_observed: Vec<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positional_error_m: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub samples: u64,
    pub p50: u64,
    pub p95: u64,
    pub p99: u64,
    pub max: u64,
}

impl LatencySummary {
    /// Nearest-rank percentiles.
    pub fn from_samples(samples: &[u64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut v = samples.to_vec();
        v.sort_unstable();
        let rank = |p: f64| v[((p / 100.0 * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Self {
            samples: v.len() as u64,
            p50: rank(50.0),
            p95: rank(95.0),
            p99: rank(99.0),
            max: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Drops {
    /// Frames discarded by the injected link loss.
    pub link_lost: u64,
    /// Frames the server dropped as out of date.
    pub stale: u64,
    pub muted_audio: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandshakeMetrics {
    /// Longest stretch with the wrists within the contact distance.
    pub longest_contact_ms: u64,
    pub min_wrist_distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub seed: u64,
    pub conditions: NetConditions,
    pub duration_ms: u64,
    pub roles: BTreeMap<Role, Traffic>,
    pub bots: BTreeMap<String, BotMetrics>,
    pub pose_latency_ms: LatencySummary,
    /// Mean over observing bots; `None` when nobody saw the presenter.
    pub positional_error_m: Option<f64>,
    pub drops: Drops,
    /// Frames the server rejected.
    pub violations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub server: Option<RoomStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub handshake: Option<HandshakeMetrics>,
    pub assertions: Vec<Assertion>,
}

impl RunMetrics {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.assertions
            .iter()
            .filter(|a| !a.passed)
            .map(|a| format!("{}: {}", a.name, a.detail))
            .collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

pub(crate) fn bot_traffic(bot: &Bot, duration_ms: u64) -> Traffic {
    let secs = duration_ms.max(1) as f64 / 1000.0;
    let s = &bot.stats;
    Traffic {
        frames_up: s.frames_up,
        bytes_up: s.bytes_up,
        frames_down: s.frames_down,
        bytes_down: s.bytes_down,
        uplink_bytes_per_s: s.bytes_up as f64 / secs,
        downlink_bytes_per_s: s.bytes_down as f64 / secs,
    }
}

pub(crate) fn role_traffic(bots: &[Bot], duration_ms: u64) -> BTreeMap<Role, Traffic> {
    let mut out: BTreeMap<Role, Traffic> = BTreeMap::new();
    for b in bots {
        out.entry(b.role)
            .or_default()
            .add(&bot_traffic(b, duration_ms));
    }
    out
}

/// How an observer's clock relates to the clock that stamped the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockAlignment {
    /// Both ran in one process on one clock.
    Shared,
    /// Observer time minus truth time, from a recorded offset.
    Offset(i64),
    Unresolved,
}

/// Ground-truth root positions, linearly interpolated between samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RootTrack {
    samples: Vec<(u64, Vec3)>,
}

impl RootTrack {
    /// Samples must have strictly increasing times.
    pub fn new(samples: Vec<(u64, Vec3)>) -> Result<Self, HarnessError> {
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(HarnessError::Trace(
                "root track times must strictly increase".into(),
            ));
        }
        Ok(Self { samples })
    }

    /// Position at `t`, or `None` outside the recorded span.
    pub fn at(&self, t_ms: f64) -> Option<Vec3> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t_ms < first.0 as f64 || t_ms > last.0 as f64 {
            return None;
        }
        let i = self.samples.partition_point(|s| (s.0 as f64) <= t_ms);
        let a = self.samples[i - 1];
        match self.samples.get(i) {
            None => Some(a.1),
            Some(b) => Some(a.1.lerp(b.1, (t_ms - a.0 as f64) / (b.0 - a.0) as f64)),
        }
    }
}

/// Mean distance between each observed root and the truth `interp_delay_ms`
/// earlier. Observations whose delayed time falls outside the truth span are
/// skipped.
pub fn compute_positional_error(
    truth: &RootTrack,
    observed: &[(u64, Vec3)],
    interp_delay_ms: u64,
    alignment: ClockAlignment,
) -> Result<f64, HarnessError> {
    let offset = match alignment {
        ClockAlignment::Shared => 0,
        ClockAlignment::Offset(o) => o,
        ClockAlignment::Unresolved => return Err(HarnessError::ClockSkewUnresolved),
    };
    let mut sum = 0.0;
    let mut n = 0u64;
    for &(t, p) in observed {
        let truth_t = t as f64 - offset as f64 - interp_delay_ms as f64;
        if let Some(q) = truth.at(truth_t) {
            sum += p.distance(q);
            n += 1;
        }
    }
    if n == 0 {
        return Err(HarnessError::NoOverlap);
    }
    Ok(sum / n as f64)
}

/// Longest run of consecutive samples with distance at most `limit`, in ms.
pub fn longest_run_within(series: &[(u64, f64)], limit: f64) -> u64 {
    let mut best = 0;
    let mut start: Option<u64> = None;
    for &(t, d) in series {
        if d <= limit {
            let s = *start.get_or_insert(t);
            best = best.max(t - s);
        } else {
            start = None;
        }
    }
    best
}
