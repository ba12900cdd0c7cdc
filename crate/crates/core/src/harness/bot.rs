use std::sync::Arc;

use bytes::Bytes;
use serde::{Deserialize, Serialize};

use super::motion::{MotionTrace, TraceEvent, TraceInput};
use super::HarnessError;
use crate::animation::{
    speed_estimate, IntensityMeter, LocomotionConfig, LocomotionState, Timestamped,
};
use crate::client::{ClientConfig, ClientSession};
use crate::kinematics::{retarget, IkConfig, IkSolver, SkeletonManifest, Vec3};
use crate::protocol::{
    IkJoint, Message, MsgType, PoseIk, PosePayload, RejectCode, Role, StreamClass, TransformSimple,
};

/// Keyboard walking speed, m/s.
pub const WALK_SPEED_MPS: f64 = 1.4;
/// Remote views are sampled this often for metrics.
pub const OBSERVE_EVERY_MS: u64 = 10;
const HEARTBEAT_EVERY_MS: u64 = 1000;
const FINGER_CURL: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BotKind {
    /// Inertial suit: full-body poses at 60 Hz.
    Presenter,
    /// Headset and controllers: IK poses at 60 Hz.
    Vr,
    /// Keyboard and mouse: simple transforms at 20 Hz.
    Browser,
}

impl BotKind {
    pub fn pose_hz(self) -> u64 {
        match self {
            BotKind::Presenter | BotKind::Vr => 60,
            BotKind::Browser => 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BotSpec {
    pub name: String,
    pub kind: BotKind,
    pub trace: MotionTrace,
    pub join_at_ms: u64,
    /// Track the distance between the presenter's and examiner's right wrists.
    pub watch_handshake: bool,
}

#[derive(Debug, Clone, Default)]
pub struct BotStats {
    pub frames_up: u64,
    pub bytes_up: u64,
    pub frames_down: u64,
    pub bytes_down: u64,
    /// Receive time minus send timestamp of every remote pose.
    pub pose_latency_ms: Vec<u64>,
    /// Slide index after each change, in arrival order.
    pub slides: Vec<u16>,
    pub rejects: Vec<RejectCode>,
    pub joined_at: Option<u64>,
    pub closed_at: Option<u64>,
    pub excluded: bool,
}

#[derive(Debug)]
enum Driver {
    Presenter,
    Vr {
        solver: IkSolver,
        prev: Option<PoseIk>,
        loco: LocomotionState,
        last_head: Option<Timestamped>,
    },
    Browser {
        pos: Vec3,
        yaw: f32,
        last_t: Option<u64>,
        meter: IntensityMeter,
        loco: LocomotionState,
        last_sent: Option<Timestamped>,
    },
}

#[derive(Debug)]
pub struct Bot {
    pub name: String,
    pub kind: BotKind,
    pub role: Role,
    trace: MotionTrace,
    join_at_ms: u64,
    watch_handshake: bool,
    session: ClientSession,
    driver: Driver,
    locomotion: LocomotionConfig,
    manifest: Arc<SkeletonManifest>,
    right_hand: usize,
    join_sent: bool,
    pose_k: u64,
    next_heartbeat: u64,
    next_event: usize,
    pub stats: BotStats,
    /// Root of every pose this bot emitted.
    pub truth: Vec<(u64, Vec3)>,
    /// Presenter root as seen in this bot's interpolated view.
    pub observed_presenter: Vec<(u64, Vec3)>,
    /// Presenter-to-examiner right wrist distance as seen by this bot.
    pub wrist_distance: Vec<(u64, f64)>,
}

fn avatar_ref(name: &str) -> String {
    format!("bot:{name}")
}

impl Bot {
    pub fn new(
        spec: BotSpec,
        room_id: u32,
        client: ClientConfig,
        manifest: Arc<SkeletonManifest>,
    ) -> Result<Self, HarnessError> {
        spec.trace.validate()?;
        let role = spec.trace.role;
        let driver = match (spec.kind, spec.trace.samples[0].input.clone()) {
            (BotKind::Presenter, TraceInput::Sensors(_)) => Driver::Presenter,
            (BotKind::Vr, TraceInput::Ik(_)) => Driver::Vr {
                solver: IkSolver::new(&manifest, IkConfig::default())?,
                prev: None,
                loco: LocomotionState::default(),
                last_head: None,
            },
            (BotKind::Browser, TraceInput::Intent(_)) => Driver::Browser {
                pos: Vec3::from_f32(spec.trace.spawn),
                yaw: spec.trace.spawn_yaw,
                last_t: None,
                meter: IntensityMeter::new(),
                loco: LocomotionState::default(),
                last_sent: None,
            },
            (kind, _) => {
                return Err(HarnessError::InvalidConfig(format!(
                    "bot '{}': {kind:?} cannot replay trace '{}'",
                    spec.name, spec.trace.name
                )))
            }
        };
        let right_hand = manifest
            .index_of("right_hand")
            .ok_or_else(|| HarnessError::InvalidConfig("manifest lacks right_hand".into()))?;
        Ok(Self {
            name: spec.name,
            kind: spec.kind,
            role,
            trace: spec.trace,
            join_at_ms: spec.join_at_ms,
            watch_handshake: spec.watch_handshake,
            session: ClientSession::new(room_id, client),
            driver,
            locomotion: client.locomotion(),
            manifest,
            right_hand,
            join_sent: false,
            pose_k: 0,
            next_heartbeat: u64::MAX,
            next_event: 0,
            stats: BotStats::default(),
            truth: Vec::new(),
            observed_presenter: Vec::new(),
            wrist_distance: Vec::new(),
        })
    }

    pub fn session(&self) -> &ClientSession {
        &self.session
    }

    pub fn avatar_ref(&self) -> String {
        avatar_ref(&self.name)
    }

    pub fn is_joined(&self) -> bool {
        self.stats.joined_at.is_some() && !self.is_gone()
    }

    pub fn is_gone(&self) -> bool {
        self.stats.closed_at.is_some() || self.stats.excluded
    }

    /// Frames to send at `t_ms`. Called once per millisecond.
    pub fn step(&mut self, t_ms: u64) -> Result<Vec<Bytes>, HarnessError> {
        self.advance_input(t_ms);
        let mut out = Vec::new();
        if self.is_gone() {
            return Ok(out);
        }
        if !self.join_sent {
            if t_ms >= self.join_at_ms {
                out.push(
                    self.session
                        .join(self.role, &self.name, &self.avatar_ref(), t_ms)?,
                );
                self.join_sent = true;
            }
            return self.sent(out);
        }
        if !self.is_joined() {
            return self.sent(out);
        }

        let hz = self.kind.pose_hz();
        let slot = |k: u64| k * 1000 / hz;
        while slot(self.pose_k) < t_ms {
            self.pose_k += 1;
        }
        if slot(self.pose_k) == t_ms {
            self.pose_k += 1;
            let pose = self.make_pose(t_ms)?;
            self.truth
                .push((t_ms, Vec3::from_f32(pose.root_position())));
            out.push(self.session.pose(pose, t_ms)?);
        }

        while let Some(e) = self.trace.events.get(self.next_event) {
            if e.t_ms > t_ms {
                break;
            }
            let frame = match &e.event {
                TraceEvent::Slide(i) => Some(self.session.slide(*i, t_ms)?),
                TraceEvent::Phase(p) => Some(self.session.phase(*p, t_ms)?),
                TraceEvent::Mute { target, muted } => {
                    let id = match target {
                        None => self.session.self_id(),
                        Some(a) => self
                            .session
                            .view()
                            .participants()
                            .iter()
                            .find(|(_, p)| &p.avatar_ref == a)
                            .map(|(&id, _)| id),
                    };
                    match id {
                        Some(id) => Some(self.session.mute(id, *muted, t_ms)?),
                        None => None,
                    }
                }
            };
            out.extend(frame);
            self.next_event += 1;
        }

        if t_ms >= self.next_heartbeat {
            out.push(self.session.heartbeat(t_ms)?);
            self.next_heartbeat += HEARTBEAT_EVERY_MS;
        }
        self.sent(out)
    }

    fn sent(&mut self, out: Vec<Bytes>) -> Result<Vec<Bytes>, HarnessError> {
        for f in &out {
            self.stats.frames_up += 1;
            self.stats.bytes_up += f.len() as u64;
        }
        Ok(out)
    }

    /// Keyboard users move every millisecond whether or not they are sending.
    fn advance_input(&mut self, t_ms: u64) {
        let Driver::Browser {
            pos,
            yaw,
            last_t,
            meter,
            ..
        } = &mut self.driver
        else {
            return;
        };
        let Some(TraceInput::Intent(intent)) = self.trace.sample_at(t_ms) else {
            return;
        };
        if let Some(prev) = *last_t {
            let dt = (t_ms - prev) as f64 / 1000.0;
            let (right, fwd) = intent.keys.axes();
            let y = intent.yaw as f64;
            let forward = Vec3::new(y.sin(), 0.0, y.cos());
            let rightv = Vec3::new(-y.cos(), 0.0, y.sin());
            if let Some(dir) = (forward * fwd + rightv * right).try_normalize(1e-9) {
                *pos += dir * (WALK_SPEED_MPS * dt);
            }
        }
        *yaw = intent.yaw;
        *last_t = Some(t_ms);
        meter.record(t_ms, intent.keys.any());
    }

    fn make_pose(&mut self, t_ms: u64) -> Result<PosePayload, HarnessError> {
        let input = self.trace.sample_at(t_ms);
        let cfg = self.locomotion;
        match (&mut self.driver, input) {
            (Driver::Presenter, Some(TraceInput::Sensors(frame))) => Ok(PosePayload::Full(
                retarget(&frame, &self.manifest, FINGER_CURL)?,
            )),
            (
                Driver::Vr {
                    solver,
                    prev,
                    loco,
                    last_head,
                },
                Some(TraceInput::Ik(targets)),
            ) => {
                let head = Timestamped {
                    t_ms,
                    position: Vec3::from_f32(targets.head.position),
                };
                if let Some(last) = *last_head {
                    *loco = cfg.update(*loco, speed_estimate(last, head)?, t_ms);
                }
                *last_head = Some(head);
                let mut pose = solver.solve(&targets, prev.as_ref())?;
                pose.locomotion = loco.state;
                *prev = Some(pose.clone());
                Ok(PosePayload::Ik(pose))
            }
            (
                Driver::Browser {
                    pos,
                    yaw,
                    meter,
                    loco,
                    last_sent,
                    ..
                },
                Some(TraceInput::Intent(_)),
            ) => {
                let now = Timestamped {
                    t_ms,
                    position: *pos,
                };
                if let Some(last) = *last_sent {
                    *loco = cfg.update(*loco, speed_estimate(last, now)?, t_ms);
                }
                *last_sent = Some(now);
                Ok(PosePayload::Simple(TransformSimple {
                    position: pos.to_f32(),
                    yaw: *yaw,
                    locomotion: loco.state,
                    intensity: meter.intensity(t_ms) as f32,
                }))
            }
            _ => Err(HarnessError::Trace(format!(
                "trace '{}' has no input at {t_ms} ms",
                self.trace.name
            ))),
        }
    }

    pub fn receive(&mut self, frame: &[u8], t_ms: u64) -> Result<(), HarnessError> {
        self.stats.frames_down += 1;
        self.stats.bytes_down += frame.len() as u64;
        let before = self.session.view().slide_index();
        let env = self.session.receive(frame)?;
        let mt = env.message.msg_type();
        if mt.stream_class() == StreamClass::Pose
            && Some(env.header.sender_id) != self.session.self_id()
        {
            self.stats
                .pose_latency_ms
                .push(t_ms.saturating_sub(env.header.timestamp_ms));
        }
        match &env.message {
            Message::JoinAccept(_) => {
                self.stats.joined_at = Some(t_ms);
                self.next_heartbeat = t_ms + HEARTBEAT_EVERY_MS;
            }
            Message::PhaseExclusion(_) => self.stats.excluded = true,
            Message::Reject(r) => self.stats.rejects.push(r.code),
            _ => {}
        }
        let after = self.session.view().slide_index();
        if mt == MsgType::SlideCommand && after != before {
            self.stats.slides.push(after);
        }
        Ok(())
    }

    pub fn close(&mut self, t_ms: u64) {
        self.stats.closed_at.get_or_insert(t_ms);
    }

    /// Sample the interpolated view for metrics.
    pub fn observe(&mut self, t_ms: u64) {
        if self.role == Role::Presenter || !self.is_joined() || t_ms % OBSERVE_EVERY_MS != 0 {
            return;
        }
        let view = self.session.view();
        let find = |role: Role| {
            view.participants()
                .iter()
                .find(|(_, p)| p.role == role)
                .map(|(&id, _)| id)
        };
        let presenter = find(Role::Presenter).and_then(|id| self.session.sample(id, t_ms).ok());
        if let Some(p) = &presenter {
            self.observed_presenter
                .push((t_ms, Vec3::from_f32(p.root_position())));
        }
        if self.watch_handshake {
            let examiner = find(Role::Examiner).and_then(|id| self.session.sample(id, t_ms).ok());
            if let (Some(a), Some(b)) = (presenter.as_ref(), examiner.as_ref()) {
                if let (Some(wa), Some(wb)) = (self.right_wrist(a), self.right_wrist(b)) {
                    self.wrist_distance.push((t_ms, wa.distance(wb)));
                }
            }
        }
    }

    fn right_wrist(&self, pose: &PosePayload) -> Option<Vec3> {
        match pose {
            PosePayload::Full(p) => p
                .joints
                .get(self.right_hand)
                .map(|j| Vec3::from_f32(j.position)),
            PosePayload::Ik(p) => Some(Vec3::from_f32(p.joint(IkJoint::RightHand).position)),
            PosePayload::Simple(_) => None,
        }
    }
}
