//! Scripted motion traces: one JSON object per line.
//!
//! The first line is a header naming the role. Every other line is either a
//! timestamped input sample or a timed room event:
//!
//! ```text
//! {"kind":"header","role":"presenter","name":"presenter","spawn":[0,0,0],"spawn_yaw":0}
//! {"kind":"sensors","t_ms":0,"hips":[0,0,0],"rotations":{"right_upper_arm":[0,0,0.64,0.77]}}
//! {"kind":"ik","t_ms":0,"head":{"position":[..],"rotation":[..]},"left_hand":{..},"right_hand":{..}}
//! {"kind":"intent","t_ms":0,"keys":"wd","yaw":1.57}
//! {"kind":"event","t_ms":5000,"event":{"slide":1}}
//! ```
//!
//! Sensors missing from a `sensors` line are at their calibration pose.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::kinematics::{IkTargets, Quat, SensorFrame, SensorId, Vec3};
use crate::protocol::{JointTransform, Phase, Role};

/// Movement keys held by a keyboard user.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Keys {
    pub forward: bool,
    pub left: bool,
    pub back: bool,
    pub right: bool,
}

impl Keys {
    pub fn any(self) -> bool {
        self.forward || self.left || self.back || self.right
    }

    /// Unit-free movement direction in the user's frame as (strafe right, forward).
    pub fn axes(self) -> (f64, f64) {
        let f = self.forward as i8 - self.back as i8;
        let r = self.right as i8 - self.left as i8;
        (r as f64, f as f64)
    }
}

impl FromStr for Keys {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut k = Keys::default();
        for c in s.chars() {
            match c {
                'w' => k.forward = true,
                'a' => k.left = true,
                's' => k.back = true,
                'd' => k.right = true,
                _ => return Err(HarnessError::Trace(format!("unknown key '{c}' in '{s}'"))),
            }
        }
        Ok(k)
    }
}

impl TryFrom<String> for Keys {
    type Error = HarnessError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl fmt::Display for Keys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (held, c) in [
            (self.forward, 'w'),
            (self.left, 'a'),
            (self.back, 's'),
            (self.right, 'd'),
        ] {
            if held {
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

impl From<Keys> for String {
    fn from(k: Keys) -> String {
        k.to_string()
    }
}

/// Keyboard-and-mouse input: held keys plus an absolute heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub keys: Keys,
    /// Heading in radians about +y; 0 faces +z.
    pub yaw: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceInput {
    Sensors(SensorFrame),
    Ik(IkTargets),
    Intent(Intent),
}

impl TraceInput {
    fn kind(&self) -> &'static str {
        match self {
            TraceInput::Sensors(_) => "sensors",
            TraceInput::Ik(_) => "ik",
            TraceInput::Intent(_) => "intent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t_ms: u64,
    pub input: TraceInput,
}

/// A room action the bot performs at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEvent {
    Slide(u16),
    Phase(Phase),
    /// Mute or unmute a participant, found by avatar reference; `None` targets the bot itself.
    Mute {
        target: Option<String>,
        muted: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t_ms: u64,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrace {
    pub role: Role,
    pub name: String,
    /// Starting position for keyboard users, who integrate their own motion.
    pub spawn: [f32; 3],
    pub spawn_yaw: f32,
    pub samples: Vec<TraceSample>,
    pub events: Vec<TimedEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header {
        role: Role,
        name: String,
        #[serde(default)]
        spawn: [f32; 3],
        #[serde(default)]
        spawn_yaw: f32,
    },
    Sensors {
        t_ms: u64,
        hips: [f32; 3],
        #[serde(default)]
        rotations: BTreeMap<SensorId, [f32; 4]>,
    },
    Ik {
        t_ms: u64,
        head: JointTransform,
        left_hand: JointTransform,
        right_hand: JointTransform,
    },
    Intent {
        t_ms: u64,
        keys: Keys,
        yaw: f32,
    },
    Event {
        t_ms: u64,
        event: TraceEvent,
    },
}

fn sample_line(s: &TraceSample) -> Line {
    let t_ms = s.t_ms;
    match &s.input {
        TraceInput::Sensors(frame) => {
            let hips = frame.get(SensorId::Hips).map_or([0.0; 3], |t| t.position);
            let rotations = frame
                .sensors
                .iter()
                .filter(|r| r.transform.rotation != JointTransform::IDENTITY.rotation)
                .map(|r| (r.sensor, r.transform.rotation))
                .collect();
            Line::Sensors {
                t_ms,
                hips,
                rotations,
            }
        }
        TraceInput::Ik(t) => Line::Ik {
            t_ms,
            head: t.head,
            left_hand: t.left_hand,
            right_hand: t.right_hand,
        },
        TraceInput::Intent(i) => Line::Intent {
            t_ms,
            keys: i.keys,
            yaw: i.yaw,
        },
    }
}

impl MotionTrace {
    pub fn new(role: Role, name: impl Into<String>) -> Self {
        Self {
            role,
            name: name.into(),
            spawn: [0.0; 3],
            spawn_yaw: 0.0,
            samples: Vec::new(),
            events: Vec::new(),
        }
    }

    /// Timestamps strictly increase, inputs match the role, and events are
    /// ordered and within the role's authority.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Trace(format!("{}: {m}", self.name)));
        let Some(first) = self.samples.first() else {
            return bad("no samples".into());
        };
        let kind = first.input.kind();
        let allowed: &[&str] = match self.role {
            Role::Presenter => &["sensors"],
            Role::Examiner | Role::Audience => &["ik", "intent"],
            Role::OnsiteBridge => &[],
        };
        if !allowed.contains(&kind) {
            return bad(format!("{kind} samples do not fit role {:?}", self.role));
        }
        for w in self.samples.windows(2) {
            if w[1].t_ms <= w[0].t_ms {
                return bad(format!(
                    "sample time {} does not follow {}",
                    w[1].t_ms, w[0].t_ms
                ));
            }
            if w[1].input.kind() != kind {
                return bad(format!("mixed {kind} and {} samples", w[1].input.kind()));
            }
        }
        for w in self.events.windows(2) {
            if w[1].t_ms < w[0].t_ms {
                return bad(format!("event time {} precedes {}", w[1].t_ms, w[0].t_ms));
            }
        }
        for e in &self.events {
            let ok = match &e.event {
                TraceEvent::Slide(_) | TraceEvent::Phase(_) => self.role == Role::Presenter,
                TraceEvent::Mute { target, .. } => self.role == Role::Presenter || target.is_none(),
            };
            if !ok {
                return bad(format!(
                    "{:?} at {} ms exceeds {:?} authority",
                    e.event, e.t_ms, self.role
                ));
            }
        }
        Ok(())
    }

    pub fn duration_ms(&self) -> u64 {
        let s = self.samples.last().map_or(0, |s| s.t_ms);
        let e = self.events.last().map_or(0, |e| e.t_ms);
        s.max(e)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, HarnessError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let parse = |n: usize, l: &str| {
            serde_json::from_str::<Line>(l)
                .map_err(|e| HarnessError::Trace(format!("line {}: {e}", n + 1)))
        };
        let (n, first) = lines
            .next()
            .ok_or_else(|| HarnessError::Trace("empty trace".into()))?;
        let Line::Header {
            role,
            name,
            spawn,
            spawn_yaw,
        } = parse(n, first)?
        else {
            return Err(HarnessError::Trace("first line must be a header".into()));
        };
        let mut trace = MotionTrace::new(role, name);
        trace.spawn = spawn;
        trace.spawn_yaw = spawn_yaw;
        for (n, l) in lines {
            let (t_ms, input) = match parse(n, l)? {
                Line::Header { .. } => {
                    return Err(HarnessError::Trace(format!(
                        "line {}: second header",
                        n + 1
                    )))
                }
                Line::Event { t_ms, event } => {
                    trace.events.push(TimedEvent { t_ms, event });
                    continue;
                }
                Line::Sensors {
                    t_ms,
                    hips,
                    rotations,
                } => {
                    let mut frame = SensorFrame::identity();
                    for (s, r) in rotations {
                        frame.set(s, JointTransform::new([0.0; 3], r));
                    }
                    let hips_rot = frame.get(SensorId::Hips).expect("identity frame").rotation;
                    frame.set(SensorId::Hips, JointTransform::new(hips, hips_rot));
                    (t_ms, TraceInput::Sensors(frame))
                }
                Line::Ik {
                    t_ms,
                    head,
                    left_hand,
                    right_hand,
                } => (
                    t_ms,
                    TraceInput::Ik(IkTargets {
                        head,
                        left_hand,
                        right_hand,
                        root_hint: None,
                    }),
                ),
                Line::Intent { t_ms, keys, yaw } => {
                    (t_ms, TraceInput::Intent(Intent { keys, yaw }))
                }
            };
            trace.samples.push(TraceSample { t_ms, input });
        }
        trace.validate()?;
        Ok(trace)
    }

    /// Header first, then samples and events merged by time (events after
    /// a sample with the same timestamp).
    pub fn to_jsonl(&self) -> String {
        let header = Line::Header {
            role: self.role,
            name: self.name.clone(),
            spawn: self.spawn,
            spawn_yaw: self.spawn_yaw,
        };
        let mut out = Vec::with_capacity(1 + self.samples.len() + self.events.len());
        out.push(header);
        let (mut si, mut ei) = (0, 0);
        while si < self.samples.len() || ei < self.events.len() {
            let take_sample = match (self.samples.get(si), self.events.get(ei)) {
                (Some(s), Some(e)) => s.t_ms <= e.t_ms,
                (Some(_), None) => true,
                _ => false,
            };
            if take_sample {
                out.push(sample_line(&self.samples[si]));
                si += 1;
            } else {
                let e = &self.events[ei];
                out.push(Line::Event {
                    t_ms: e.t_ms,
                    event: e.event.clone(),
                });
                ei += 1;
            }
        }
        let mut text = String::new();
        for l in out {
            text.push_str(&serde_json::to_string(&l).expect("trace lines serialize"));
            text.push('\n');
        }
        text
    }

    /// Input at `t_ms`: joint inputs are interpolated between keyframes,
    /// keyboard intents hold until the next sample. Clamped at both ends.
    pub fn sample_at(&self, t_ms: u64) -> Option<TraceInput> {
        let i = self.samples.partition_point(|s| s.t_ms <= t_ms);
        if i == 0 {
            return self.samples.first().map(|s| s.input.clone());
        }
        let a = &self.samples[i - 1];
        let Some(b) = self.samples.get(i) else {
            return Some(a.input.clone());
        };
        let u = (t_ms - a.t_ms) as f64 / (b.t_ms - a.t_ms) as f64;
        Some(match (&a.input, &b.input) {
            (TraceInput::Sensors(fa), TraceInput::Sensors(fb)) => {
                let mut frame = SensorFrame::identity();
                for s in SensorId::ALL {
                    let ta = fa.get(s).copied().unwrap_or_default();
                    let tb = fb.get(s).copied().unwrap_or_default();
                    frame.set(s, blend(ta, tb, u));
                }
                TraceInput::Sensors(frame)
            }
            (TraceInput::Ik(ta), TraceInput::Ik(tb)) => TraceInput::Ik(IkTargets {
                head: blend(ta.head, tb.head, u),
                left_hand: blend(ta.left_hand, tb.left_hand, u),
                right_hand: blend(ta.right_hand, tb.right_hand, u),
                root_hint: None,
            }),
            (held, _) => held.clone(),
        })
    }
}

fn blend(a: JointTransform, b: JointTransform, u: f64) -> JointTransform {
    let p = Vec3::from_f32(a.position).lerp(Vec3::from_f32(b.position), u);
    let q = Quat::from_f32(a.rotation).slerp(Quat::from_f32(b.rotation), u);
    JointTransform::new(p.to_f32(), q.to_f32())
}
