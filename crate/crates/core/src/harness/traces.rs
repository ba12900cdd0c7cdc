//! Canonical synthetic motion traces and the generators that produce them.
//!
//! The checked-in files under `traces/` are the generators' output; a test
//! keeps the two in step. Set `HPSYNC_BLESS=1` to rewrite them.

use std::f64::consts::{FRAC_PI_2, PI};

use super::motion::{Intent, Keys, MotionTrace, TimedEvent, TraceEvent, TraceInput, TraceSample};
use super::HarnessError;
use crate::kinematics::{
    retarget, IkConfig, IkSolver, IkTargets, Quat, SensorFrame, SensorId, SkeletonManifest, Vec3,
};
use crate::protocol::{JointTransform, Role};

/// Trace names with their checked-in contents.
pub const CANONICAL: &[(&str, &str)] = &[
    (
        "handshake/presenter",
        include_str!("../../traces/handshake/presenter.jsonl"),
    ),
    (
        "handshake/examiner_vr",
        include_str!("../../traces/handshake/examiner_vr.jsonl"),
    ),
    (
        "handshake/observer",
        include_str!("../../traces/handshake/observer.jsonl"),
    ),
    (
        "presentation/presenter",
        include_str!("../../traces/presentation/presenter.jsonl"),
    ),
    (
        "presentation/examiner_vr",
        include_str!("../../traces/presentation/examiner_vr.jsonl"),
    ),
    (
        "presentation/audience_vr",
        include_str!("../../traces/presentation/audience_vr.jsonl"),
    ),
    (
        "presentation/audience_browser",
        include_str!("../../traces/presentation/audience_browser.jsonl"),
    ),
    (
        "freestyle/presenter",
        include_str!("../../traces/freestyle/presenter.jsonl"),
    ),
    (
        "freestyle/observer",
        include_str!("../../traces/freestyle/observer.jsonl"),
    ),
];

/// Load a checked-in trace by name.
pub fn canonical(name: &str) -> Result<MotionTrace, HarnessError> {
    let (_, text) = CANONICAL
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| HarnessError::Trace(format!("no canonical trace '{name}'")))?;
    MotionTrace::from_jsonl(text)
}

/// Regenerate a canonical trace from its generator.
pub fn generate(name: &str) -> Result<MotionTrace, HarnessError> {
    let t = match name {
        "handshake/presenter" => handshake_presenter(),
        "handshake/examiner_vr" => handshake_examiner(),
        "handshake/observer" => idle_browser("observer", [1.5, 0.0, 0.4], -FRAC_PI_2, 8_000),
        "presentation/presenter" => presentation_presenter(),
        "presentation/examiner_vr" => seated_listener(
            Role::Examiner,
            "examiner_vr",
            Vec3::new(-0.8, 0.0, 2.2),
            0.0,
        ),
        "presentation/audience_vr" => {
            seated_listener(Role::Audience, "audience_vr", Vec3::new(1.0, 0.0, 2.8), 1.3)
        }
        "presentation/audience_browser" => presentation_browser(),
        "freestyle/presenter" => freestyle_presenter(),
        "freestyle/observer" => idle_browser("observer", [2.0, 0.0, 2.0], -3.0 * PI / 4.0, 30_000),
        _ => return Err(HarnessError::Trace(format!("no generator for '{name}'"))),
    };
    t.validate()?;
    Ok(t)
}

/// Meeting point of the two right hands in the handshake.
pub const HANDSHAKE_MEET: Vec3 = Vec3::new(0.0, 1.1, 0.4);
/// Where the examiner stops, facing the presenter.
pub const HANDSHAKE_STOP_Z: f64 = 0.8;
const HANDSHAKE_START_Z: f64 = 2.5;

fn r5(x: f64) -> f32 {
    ((x * 1e5).round() / 1e5) as f32
}

fn rv(v: Vec3) -> [f32; 3] {
    [r5(v.x), r5(v.y), r5(v.z)]
}

fn rq(q: Quat) -> [f32; 4] {
    [r5(q.x), r5(q.y), r5(q.z), r5(q.w)]
}

fn rot(axis: Vec3, deg: f64) -> Quat {
    Quat::from_axis_angle(axis, deg.to_radians())
}

fn yaw(rad: f64) -> Quat {
    Quat::from_axis_angle(Vec3::Y, rad)
}

fn smoothstep(a: f64, b: f64, t: f64) -> f64 {
    let u = ((t - a) / (b - a)).clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Shortest-arc rotation taking unit `a` onto unit `b`.
fn rotation_between(a: Vec3, b: Vec3) -> Quat {
    let axis = a.cross(b);
    let s = axis.length();
    match axis.try_normalize(1e-12) {
        Some(axis) => Quat::from_axis_angle(axis, s.atan2(a.dot(b))),
        None => Quat::IDENTITY,
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ArmPose {
    /// Forward raise from hanging, degrees.
    raise: f64,
    /// Sideways lift from hanging, degrees.
    abduct: f64,
    elbow: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Body {
    hips: Vec3,
    heading: f64,
    lean: f64,
    head_yaw: f64,
    head_pitch: f64,
    right: ArmPose,
    left: ArmPose,
    /// Thigh swing, degrees; the legs move in opposition.
    stride: f64,
    /// Right upper arm rotation overriding `right`, with a straight elbow.
    right_override: Option<Quat>,
}

fn frame(b: &Body) -> SensorFrame {
    let mut f = SensorFrame::identity();
    let mut set = |s: SensorId, q: Quat| {
        let pos = if s == SensorId::Hips {
            rv(b.hips)
        } else {
            [0.0; 3]
        };
        f.set(s, JointTransform::new(pos, rq(q)));
    };
    set(SensorId::Hips, yaw(b.heading));
    set(SensorId::Spine, rot(Vec3::X, b.lean));
    set(
        SensorId::Head,
        yaw(b.head_yaw.to_radians()) * rot(Vec3::X, b.head_pitch),
    );
    let arm =
        |a: ArmPose, side: f64| rot(Vec3::X, -a.raise) * rot(Vec3::Z, side * (80.0 - a.abduct));
    match b.right_override {
        Some(q) => set(SensorId::RightUpperArm, q),
        None => {
            set(SensorId::RightUpperArm, arm(b.right, 1.0));
            set(SensorId::RightForearm, rot(Vec3::Y, b.right.elbow));
        }
    }
    set(SensorId::LeftUpperArm, arm(b.left, -1.0));
    set(SensorId::LeftForearm, rot(Vec3::Y, -b.left.elbow));
    set(SensorId::RightThigh, rot(Vec3::X, -b.stride));
    set(SensorId::LeftThigh, rot(Vec3::X, b.stride));
    set(SensorId::RightCalf, rot(Vec3::X, b.stride.abs() * 0.6));
    set(SensorId::LeftCalf, rot(Vec3::X, b.stride.abs() * 0.6));
    f
}

fn sensor_trace(name: &str, end_ms: u64, step_ms: u64, body: impl Fn(f64) -> Body) -> MotionTrace {
    let mut t = MotionTrace::new(Role::Presenter, name);
    for ms in (0..=end_ms).step_by(step_ms as usize) {
        t.samples.push(TraceSample {
            t_ms: ms,
            input: TraceInput::Sensors(frame(&body(ms as f64 / 1000.0))),
        });
    }
    t
}

const RELAXED: ArmPose = ArmPose {
    raise: 5.0,
    abduct: 0.0,
    elbow: 10.0,
};

/// Right upper arm rotation pointing the straight arm from the shoulder at `HANDSHAKE_MEET`.
fn handshake_arm(manifest: &SkeletonManifest) -> Quat {
    let shoulder = manifest.rest_position(manifest.sensor_joint(SensorId::RightUpperArm));
    let dir = (HANDSHAKE_MEET - shoulder)
        .try_normalize(1e-9)
        .expect("meet point off the shoulder");
    rotation_between(-Vec3::X, dir)
}

fn handshake_presenter() -> MotionTrace {
    let reach = handshake_arm(&SkeletonManifest::canonical());
    let hang = rot(Vec3::X, -RELAXED.raise) * rot(Vec3::Z, 80.0);
    sensor_trace("presenter", 8_000, 100, |t| {
        let lift = smoothstep(3.0, 4.0, t) * (1.0 - smoothstep(6.5, 7.5, t));
        Body {
            left: RELAXED,
            right_override: Some(hang.slerp(reach, lift)),
            ..Body::default()
        }
    })
}

/// Right wrist of the presenter while holding the handshake.
pub fn handshake_presenter_wrist(manifest: &SkeletonManifest) -> Vec3 {
    let body = Body {
        left: RELAXED,
        right_override: Some(handshake_arm(manifest)),
        ..Body::default()
    };
    // Round-trip through the trace precision so the bot sees the same pose.
    let f = frame(&body);
    let pose = retarget(&f, manifest, 0.0).expect("canonical frame retargets");
    let hand = manifest.index_of("right_hand").expect("canonical joint");
    Vec3::from_f32(pose.joints[hand].position)
}

fn ik_trace(
    role: Role,
    name: &str,
    end_ms: u64,
    step_ms: u64,
    targets: impl Fn(f64) -> IkTargets,
) -> MotionTrace {
    let mut t = MotionTrace::new(role, name);
    for ms in (0..=end_ms).step_by(step_ms as usize) {
        let mut x = targets(ms as f64 / 1000.0);
        for j in [&mut x.head, &mut x.left_hand, &mut x.right_hand] {
            j.position = rv(Vec3::from_f32(j.position));
            j.rotation = rq(Quat::from_f32(j.rotation));
        }
        t.samples.push(TraceSample {
            t_ms: ms,
            input: TraceInput::Ik(x),
        });
    }
    t
}

/// Head and hand targets for a standing VR user at `root` (floor level) facing `heading`.
fn vr_targets(
    solver: &IkSolver,
    root: Vec3,
    heading: f64,
    head_yaw: f64,
    right_hand: Option<Vec3>,
) -> IkTargets {
    let rest = solver.rest_targets();
    let body = yaw(heading);
    let head_h = rest.head.position[1] as f64;
    let hand = |local: Vec3| root + body.rotate(local);
    let head = JointTransform::new(
        (root + Vec3::new(0.0, head_h, 0.0)).to_f32(),
        (body * yaw(head_yaw)).to_f32(),
    );
    let rh = right_hand.unwrap_or_else(|| hand(Vec3::new(-0.2, 0.85, 0.12)));
    IkTargets {
        head,
        left_hand: JointTransform::new(hand(Vec3::new(0.2, 0.85, 0.12)).to_f32(), body.to_f32()),
        right_hand: JointTransform::new(rh.to_f32(), body.to_f32()),
        root_hint: None,
    }
}

fn handshake_examiner() -> MotionTrace {
    let manifest = SkeletonManifest::canonical();
    let solver = IkSolver::new(&manifest, IkConfig::default()).expect("canonical manifest");
    let target = handshake_presenter_wrist(&manifest) + Vec3::new(0.0, 0.0, 0.04);
    ik_trace(Role::Examiner, "examiner_vr", 8_000, 100, |t| {
        let z =
            HANDSHAKE_START_Z + (HANDSHAKE_STOP_Z - HANDSHAKE_START_Z) * smoothstep(0.0, 3.0, t);
        let root = Vec3::new(0.0, 0.0, z);
        let idle = vr_targets(&solver, root, PI, 0.0, None);
        let lift = smoothstep(3.0, 4.0, t) * (1.0 - smoothstep(6.5, 7.5, t));
        let rest = Vec3::from_f32(idle.right_hand.position);
        vr_targets(&solver, root, PI, 0.0, Some(rest.lerp(target, lift)))
    })
}

fn facing(from: Vec3, to: Vec3) -> f64 {
    let d = to - from;
    d.x.atan2(d.z)
}

fn seated_listener(role: Role, name: &str, root: Vec3, phase: f64) -> MotionTrace {
    let solver = IkSolver::new(&SkeletonManifest::canonical(), IkConfig::default())
        .expect("canonical manifest");
    let heading = facing(root, Vec3::ZERO);
    ik_trace(role, name, 60_000, 200, |t| {
        let look = 0.3 * (2.0 * PI * t / 7.0 + phase).sin();
        // One sideways step and back for the audience member; a raised hand for the examiner.
        let shift = match role {
            Role::Audience => 0.6 * (smoothstep(20.0, 21.5, t) - smoothstep(35.0, 36.5, t)),
            _ => 0.0,
        };
        let side = yaw(heading).rotate(-Vec3::X) * shift;
        let r = root + side + Vec3::new(0.01 * (t * 1.3 + phase).sin(), 0.0, 0.0);
        let raised = (role == Role::Examiner).then(|| {
            let up = smoothstep(40.0, 41.0, t) * (1.0 - smoothstep(44.0, 45.0, t));
            let low = r + yaw(heading).rotate(Vec3::new(-0.2, 0.85, 0.12));
            let high = r + yaw(heading).rotate(Vec3::new(-0.25, 1.75, 0.15));
            low.lerp(high, up)
        });
        vr_targets(&solver, r, heading, look, raised)
    })
}

fn intent_trace(
    name: &str,
    spawn: [f32; 3],
    spawn_yaw: f64,
    keys: &[(u64, &str, f64)],
) -> MotionTrace {
    let mut t = MotionTrace::new(Role::Audience, name);
    t.spawn = spawn;
    t.spawn_yaw = r5(spawn_yaw);
    for &(ms, k, y) in keys {
        t.samples.push(TraceSample {
            t_ms: ms,
            input: TraceInput::Intent(Intent {
                keys: k.parse::<Keys>().expect("static keys"),
                yaw: r5(y),
            }),
        });
    }
    t
}

fn idle_browser(name: &str, spawn: [f32; 3], heading: f64, end_ms: u64) -> MotionTrace {
    intent_trace(
        name,
        spawn,
        heading,
        &[(0, "", heading), (end_ms, "", heading)],
    )
}

fn presentation_browser() -> MotionTrace {
    let back = PI;
    intent_trace(
        "audience_browser",
        [0.0, 0.0, 3.5],
        back,
        &[
            (0, "", back),
            (10_000, "w", back),
            (10_800, "", back),
            (30_000, "d", back),
            (31_000, "", back),
            (45_000, "", back - 0.3),
            (50_000, "s", back - 0.3),
            (50_500, "", back - 0.3),
            (60_000, "", back - 0.3),
        ],
    )
}

fn presentation_presenter() -> MotionTrace {
    let mut t = sensor_trace("presenter", 60_000, 200, |t| {
        let walk = smoothstep(20.0, 24.0, t) - smoothstep(40.0, 44.0, t);
        let walking = (smoothstep(20.0, 20.5, t) - smoothstep(23.5, 24.0, t))
            + (smoothstep(40.0, 40.5, t) - smoothstep(43.5, 44.0, t));
        Body {
            hips: Vec3::new(0.4 * walk + 0.02 * (2.0 * PI * t / 8.0).sin(), 0.0, 0.0),
            heading: 0.15 * (2.0 * PI * t / 11.0).sin(),
            lean: 4.0 + 2.0 * (2.0 * PI * t / 13.0).sin(),
            head_yaw: 25.0 * (2.0 * PI * t / 9.0).sin(),
            head_pitch: 5.0 * (2.0 * PI * t / 5.0).sin(),
            right: ArmPose {
                raise: 25.0 + 25.0 * (2.0 * PI * t / 7.0).sin(),
                abduct: 10.0,
                elbow: 50.0 + 20.0 * (2.0 * PI * t / 3.5).sin(),
            },
            left: ArmPose {
                raise: 10.0 + 8.0 * (2.0 * PI * t / 10.0).sin(),
                abduct: 5.0,
                elbow: 30.0,
            },
            stride: 20.0 * walking * (2.0 * PI * 1.6 * t).sin(),
            right_override: None,
        }
    });
    for i in 1..=10u16 {
        t.events.push(TimedEvent {
            t_ms: 5_000 * i as u64,
            event: TraceEvent::Slide(i),
        });
    }
    t
}

fn freestyle_presenter() -> MotionTrace {
    sensor_trace("presenter", 30_000, 100, |t| {
        // A loop of radius 1 m with a faster middle section, heading along the path.
        let w = 2.0 * PI / 12.0;
        let angle = w * t
            + 0.8
                * (smoothstep(10.0, 14.0, t) - smoothstep(18.0, 22.0, t))
                * (t - 10.0).max(0.0)
                * w;
        let hips = Vec3::new(
            angle.sin(),
            0.03 * (2.0 * PI * 1.8 * t).sin().abs(),
            1.0 - angle.cos(),
        );
        Body {
            hips,
            heading: angle + FRAC_PI_2,
            lean: 15.0 * (2.0 * PI * t / 4.0).sin(),
            head_yaw: 60.0 * (2.0 * PI * t / 5.0).sin(),
            head_pitch: 20.0 * (2.0 * PI * t / 3.0).sin(),
            right: ArmPose {
                raise: 75.0 + 75.0 * (2.0 * PI * t / 3.0).sin(),
                abduct: 30.0 + 30.0 * (2.0 * PI * t / 4.5).cos(),
                elbow: 60.0 + 50.0 * (2.0 * PI * t / 2.0).sin(),
            },
            left: ArmPose {
                raise: 40.0 * (2.0 * PI * 0.9 * t).sin().max(0.0),
                abduct: 40.0 + 35.0 * (2.0 * PI * t / 6.0).sin(),
                elbow: 45.0 + 40.0 * (2.0 * PI * t / 2.5).cos(),
            },
            stride: 25.0 * (2.0 * PI * 0.9 * t).sin(),
            right_override: None,
        }
    })
}
