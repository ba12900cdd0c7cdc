//! Acceptance suite. Runs every release criterion at its stated tolerance and
//! prints one PASS/FAIL line per criterion. Built with `harness = false` so the
//! report is visible under a plain `cargo test`.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hpsync::animation::{LocomotionConfig, LocomotionState};
use hpsync::client::{ClientConfig, ClientSession};
use hpsync::harness::{run_scenario, NetConditions, RunMetrics, Scenario, ScenarioConfig};
use hpsync::kinematics::{
    pose_forward_positions, rest_pose, retarget, solve_two_bone, IkConfig, IkSolver, Quat,
    SensorFrame, SensorId, SkeletonManifest, Vec3,
};
use hpsync::protocol::golden::golden_messages;
use hpsync::protocol::{
    decode, encode, sample, AudioFrame, Envelope, Header, IkJoint, JointTransform, Message,
    MsgType, MuteControl, Phase, PhaseChange, Role, SlideCommand,
};
use hpsync::server::{Output, Room, RoomConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- codec

fn codec_conformance() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DEC);

    const PER_TYPE: usize = 700;
    let mut round_trips = 0usize;
    let mut valid_frames = Vec::new();
    for t in MsgType::ALL {
        for i in 0..PER_TYPE {
            let env = Envelope::new(sample::header(&mut rng), sample::message(&mut rng, t));
            let bytes = env
                .encode()
                .map_err(|e| format!("{t}: encode failed: {e}"))?;
            let back = decode(&bytes).map_err(|e| format!("{t}: decode failed: {e}"))?;
            if back != env {
                return Err(format!("{t}: round trip {i} differs"));
            }
            if back.encode().map_err(|e| e.to_string())? != bytes {
                return Err(format!("{t}: re-encode {i} differs"));
            }
            round_trips += 1;
            if i < 8 {
                valid_frames.push(bytes);
            }
        }
    }

    // Fuzz: a third pure noise, a third noise behind a plausible header, a third
    // mutated or truncated valid frames. Any panic aborts the run.
    const FUZZ: usize = 1_000_000;
    let mut accepted = 0usize;
    let mut buf = Vec::with_capacity(2048);
    for i in 0..FUZZ {
        buf.clear();
        match i % 3 {
            0 => {
                let n = rng.gen_range(0..256);
                buf.extend((0..n).map(|_| rng.gen::<u8>()));
            }
            1 => {
                let t = MsgType::ALL[rng.gen_range(0..MsgType::ALL.len())];
                let n: usize = rng.gen_range(0..300);
                buf.extend_from_slice(&[0x48, 0x50, 1, t as u8]);
                buf.extend((0..20).map(|_| rng.gen::<u8>()));
                buf.extend_from_slice(&(n as u16).to_le_bytes());
                buf.extend((0..n).map(|_| rng.gen::<u8>()));
            }
            _ => {
                let src = &valid_frames[rng.gen_range(0..valid_frames.len())];
                buf.extend_from_slice(src);
                for _ in 0..rng.gen_range(1..6) {
                    let j = rng.gen_range(0..buf.len());
                    buf[j] ^= 1 << rng.gen_range(0..8);
                }
                if rng.gen_bool(0.3) {
                    buf.truncate(rng.gen_range(0..=buf.len()));
                }
            }
        }
        if decode(&buf).is_ok() {
            accepted += 1;
        }
    }

    let elapsed = start.elapsed();
    check(
        elapsed < Duration::from_secs(60),
        format!(
            "{round_trips} round trips over {} types, {FUZZ} fuzz buffers without panic ({accepted} decoded), {:.1}s (limit 60s)",
            MsgType::ALL.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn golden_vectors() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../testdata/golden");
    let messages = golden_messages();
    for (name, env) in &messages {
        let path = dir.join(format!("{name}.bin"));
        let shipped = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let first = env.encode().map_err(|e| e.to_string())?;
        let second = golden_messages()
            .into_iter()
            .find(|(n, _)| n == name)
            .expect("same set")
            .1
            .encode()
            .map_err(|e| e.to_string())?;
        if first != shipped || second != shipped {
            return Err(format!("{name}: encoding differs from {}", path.display()));
        }
        if decode(&shipped).map_err(|e| format!("{name}: {e}"))? != *env {
            return Err(format!("{name}: decode differs"));
        }
    }
    Ok(format!(
        "{} vectors byte-identical across runs and against testdata/golden",
        messages.len()
    ))
}

// Field widths, summed independently of the codec's constants.
const HEADER_WIDTH: usize = 2 + 1 + 1 + 4 + 4 + 4 + 8 + 2;
const JOINT_WIDTH: usize = 3 * 4 + 4 * 4;
const POSE_FULL_BYTES: usize = HEADER_WIDTH + 1 + 1 + 59 * JOINT_WIDTH;
const POSE_IK_BYTES: usize = HEADER_WIDTH + 1 + 9 * JOINT_WIDTH + 1;

fn size_constants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut full = HashSet::new();
    let mut ik = HashSet::new();
    for _ in 0..1000 {
        let h = sample::header(&mut rng);
        full.insert(
            encode(&h, &Message::PoseFull(sample::pose_full(&mut rng)))
                .map_err(|e| e.to_string())?
                .len(),
        );
        ik.insert(
            encode(&h, &Message::PoseIk(sample::pose_ik(&mut rng)))
                .map_err(|e| e.to_string())?
                .len(),
        );
    }
    let full: Vec<_> = full.into_iter().collect();
    let ik: Vec<_> = ik.into_iter().collect();
    check(
        POSE_FULL_BYTES == 1680 && POSE_IK_BYTES == 280 && full == [1680] && ik == [280],
        format!("PoseFull {full:?} B (expected 1680), PoseIk {ik:?} B (expected 280) over 1000 random poses each"),
    )
}

// ---------------------------------------------------------------- kinematics

fn law_of_cosines(a: f64, b: f64, d: f64) -> f64 {
    ((a * a + b * b - d * d) / (2.0 * a * b))
        .clamp(-1.0, 1.0)
        .acos()
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.length();
        if n > 0.1 && n <= 1.0 {
            return v * (1.0 / n);
        }
    }
}

fn ik_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1C);
    let (mut reach_err, mut angle_err, mut clamp_err) = (0f64, 0f64, 0f64);
    let (mut reachable, mut unreachable) = (0usize, 0usize);
    while reachable < 10_000 || unreachable < 1_000 {
        let a: f64 = rng.gen_range(0.1..0.5);
        let b = rng.gen_range(0.1..0.5);
        let shoulder = Vec3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(0.5..2.0),
            rng.gen_range(-2.0..2.0),
        );
        let dir = random_unit(&mut rng);
        let pole = random_unit(&mut rng);
        if pole.cross(dir).length() < 1e-2 {
            continue;
        }
        let lo = (a - b).abs();
        if reachable < 10_000 {
            let d = rng.gen_range(lo + 1e-3..a + b - 1e-6);
            let target = shoulder + dir * d;
            let s = solve_two_bone(shoulder, target, a, b, pole).map_err(|e| e.to_string())?;
            reach_err = reach_err.max(s.end.distance(target));
            angle_err = angle_err.max((s.elbow_angle - law_of_cosines(a, b, d)).abs());
            reachable += 1;
        } else {
            let d = rng.gen_range(a + b + 1e-3..2.0 * (a + b));
            let target = shoulder + dir * d;
            let s = solve_two_bone(shoulder, target, a, b, pole).map_err(|e| e.to_string())?;
            clamp_err = clamp_err.max((s.end.distance(target) - (d - (a + b))).abs());
            clamp_err = clamp_err.max((s.end.distance(shoulder) - (a + b)).abs());
            unreachable += 1;
        }
    }

    // Full upper-body solver: hands placed inside each arm's reach from the
    // solved shoulder must be hit exactly.
    let m = SkeletonManifest::canonical();
    let solver = IkSolver::new(&m, IkConfig::default()).map_err(|e| e.to_string())?;
    let rest = solver.rest_targets();
    let reach = solver.arm_reach();
    let shoulders = {
        let p = solver.solve(&rest, None).map_err(|e| e.to_string())?;
        [
            p.joint(IkJoint::LeftUpperArm).position,
            p.joint(IkJoint::RightUpperArm).position,
        ]
        .map(Vec3::from_f32)
    };
    let mut body_err = 0f64;
    for _ in 0..2_000 {
        let mut t = rest;
        for (side, hand) in [&mut t.left_hand, &mut t.right_hand]
            .into_iter()
            .enumerate()
        {
            let d = rng.gen_range(0.35..0.95) * reach[side];
            hand.position = (shoulders[side] + random_unit(&mut rng) * d).to_f32();
        }
        let p = solver.solve(&t, None).map_err(|e| e.to_string())?;
        body_err = body_err
            .max(
                Vec3::from_f32(p.joint(IkJoint::LeftHand).position)
                    .distance(Vec3::from_f32(t.left_hand.position)),
            )
            .max(
                Vec3::from_f32(p.joint(IkJoint::RightHand).position)
                    .distance(Vec3::from_f32(t.right_hand.position)),
            );
    }

    check(
        reach_err < 1e-5 && angle_err < 1e-6 && clamp_err < 1e-5 && body_err < 1e-5,
        format!(
            "{reachable} reachable: max end error {reach_err:.2e} m (<1e-5), max elbow angle error {angle_err:.2e} rad (<1e-6); \
             {unreachable} unreachable: max clamp error {clamp_err:.2e} m (<1e-5); 2000 full-body solves: max hand error {body_err:.2e} m"
        ),
    )
}

// Yaw about the root with an explicit rotation matrix, independent of the
// quaternion code.
fn yaw_about(root: Vec3, p: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    let r = p - root;
    root + Vec3::new(c * r.x + s * r.z, r.y, -s * r.x + c * r.z)
}

fn retarget_identity() -> Outcome {
    let m = SkeletonManifest::canonical();
    let pose = retarget(&SensorFrame::identity(), &m, 0.0).map_err(|e| e.to_string())?;
    let rest = rest_pose(&m);
    if pose != rest {
        return Err("identity frame does not reproduce the rest pose bit for bit".into());
    }
    // Re-running FK from the encoded pose stays on the rest skeleton.
    let fk_err = pose_forward_positions(&pose, &m)
        .iter()
        .zip(m.rest_positions())
        .map(|(a, b)| a.distance(*b))
        .fold(0f64, f64::max);

    let mut worst = 0f64;
    let root = m.rest_position(0);
    for k in 0..24 {
        let angle = -PI + k as f64 * (2.0 * PI / 24.0);
        let mut frame = SensorFrame::identity();
        frame.set(
            SensorId::Hips,
            JointTransform::new([0.0; 3], Quat::from_axis_angle(Vec3::Y, angle).to_f32()),
        );
        let p = retarget(&frame, &m, 0.0).map_err(|e| e.to_string())?;
        for (i, j) in p.joints.iter().enumerate() {
            worst = worst.max(Vec3::from_f32(j.position).distance(yaw_about(
                root,
                m.rest_position(i),
                angle,
            )));
        }
    }
    check(
        worst < 1e-5 && fk_err < 1e-6,
        format!(
            "{} joints bit-identical to rest (FK re-check {fk_err:.1e} m); rotated root over 24 yaws: max error {worst:.2e} m (<1e-5)",
            rest.joints.len()
        ),
    )
}

// ---------------------------------------------------------------- room

const ROOM: u32 = 7;

fn frame(sender: u32, seq: u32, now: u64, msg: &Message) -> Bytes {
    let h = Header {
        room_id: ROOM,
        sender_id: sender,
        seq,
        timestamp_ms: now,
    };
    Bytes::from(encode(&h, msg).expect("encodable"))
}

struct Actor {
    conn: u64,
    role: Role,
    id: Option<u32>,
    seq: u32,
}

struct Trace {
    room: Room,
    eager: ClientSession,
    actors: Vec<Actor>,
    next_conn: u64,
    now: u64,
}

const EAGER_CONN: u64 = 1;
const LATE_CONN: u64 = 2;

impl Trace {
    fn deliver(&mut self, out: Vec<Output>) -> Result<(), String> {
        for o in out {
            match o {
                Output::Send { conn, bytes } if conn == EAGER_CONN => {
                    self.eager
                        .receive(&bytes)
                        .map_err(|e| format!("eager view rejected a relayed frame: {e}"))?;
                }
                Output::Send { conn, bytes } => {
                    if let Some(a) = self.actors.iter_mut().find(|a| a.conn == conn) {
                        if let Ok(Envelope {
                            message: Message::JoinAccept(acc),
                            ..
                        }) = decode(&bytes)
                        {
                            a.id = Some(acc.participant_id);
                        }
                    }
                }
                Output::Close { conn } => {
                    if let Some(a) = self.actors.iter_mut().find(|a| a.conn == conn) {
                        a.id = None;
                    }
                }
            }
        }
        Ok(())
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> Result<(), String> {
        self.now += rng.gen_range(1..40);
        let now = self.now;
        let i = rng.gen_range(0..self.actors.len());
        let a = &mut self.actors[i];
        let Some(id) = a.id else {
            self.next_conn += 1;
            a.conn = self.next_conn;
            a.seq = 0;
            let req = Message::JoinRequest(hpsync::protocol::JoinRequest {
                role: a.role,
                display_name: format!("actor {i}"),
                avatar_ref: if rng.gen_bool(0.05) {
                    "bad ref".into()
                } else {
                    format!("avatar:{i}")
                },
            });
            let f = frame(0, 0, now, &req);
            let out = self.room.handle(a.conn, f, now);
            return self.deliver(out);
        };
        a.seq = if rng.gen_bool(0.1) {
            a.seq.saturating_sub(rng.gen_range(0..3))
        } else {
            a.seq + 1
        };
        let (seq, conn, role) = (a.seq, a.conn, a.role);
        let msg = match rng.gen_range(0..100) {
            0..=39 => match role {
                Role::Presenter => Message::PoseFull(sample::pose_full(rng)),
                Role::OnsiteBridge => Message::PoseIk(sample::pose_ik(rng)),
                _ if rng.gen_bool(0.7) => Message::PoseIk(sample::pose_ik(rng)),
                _ => Message::TransformSimple(sample::transform_simple(rng)),
            },
            40..=51 => Message::SlideCommand(SlideCommand {
                slide_index: rng.gen_range(0..24),
            }),
            52..=63 => {
                let ids: Vec<u32> = self.room.participants().map(|p| p.id).collect();
                let target = if rng.gen_bool(0.5) {
                    id
                } else {
                    ids[rng.gen_range(0..ids.len())]
                };
                Message::MuteControl(MuteControl {
                    target_id: if rng.gen_bool(0.05) { 999 } else { target },
                    muted: rng.gen_bool(0.5),
                })
            }
            64..=71 => Message::PhaseChange(PhaseChange {
                phase: Phase::ALL[rng.gen_range(0..4)],
            }),
            72..=81 => Message::AudioFrame(AudioFrame {
                data: vec![rng.gen(); rng.gen_range(1..40)],
            }),
            82..=87 => Message::Heartbeat,
            88..=91 => Message::Leave,
            92..=94 => {
                let out = self.room.disconnect(conn, now);
                self.actors[i].id = None;
                return self.deliver(out);
            }
            95..=97 => {
                // Impersonation attempt.
                let f = frame(
                    id + 1,
                    seq,
                    now,
                    &Message::SlideCommand(SlideCommand { slide_index: 1 }),
                );
                let out = self.room.handle(conn, f, now);
                return self.deliver(out);
            }
            _ => {
                let out = self
                    .room
                    .handle(conn, Bytes::from(vec![rng.gen::<u8>(); 30]), now);
                return self.deliver(out);
            }
        };
        if matches!(msg, Message::Leave) {
            self.actors[i].id = None;
        }
        let out = self.room.handle(conn, frame(id, seq, now, &msg), now);
        self.deliver(out)
    }
}

fn join_observer(
    room: &mut Room,
    conn: u64,
    now: u64,
) -> Result<(ClientSession, Vec<Output>), String> {
    let mut s = ClientSession::new(ROOM, ClientConfig::default());
    let f = s
        .join(Role::Examiner, "observer", "avatar:observer", now)
        .map_err(|e| e.to_string())?;
    let out = room.handle(conn, f, now);
    Ok((s, out))
}

fn snapshot_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5AA9);
    let (mut steps_total, mut max_participants, mut with_pose) = (0usize, 0usize, 0usize);
    for trace_no in 0..1000 {
        let mut room = Room::new(RoomConfig {
            id: ROOM,
            deck_size: 20,
            ..RoomConfig::default()
        });
        let (mut eager, out) = join_observer(&mut room, EAGER_CONN, 0)?;
        for o in out {
            if let Output::Send { bytes, .. } = o {
                eager.receive(&bytes).map_err(|e| e.to_string())?;
            }
        }
        let n = rng.gen_range(3..=6);
        let actors = (0..n)
            .map(|i| Actor {
                conn: 0,
                role: if i == 0 || rng.gen_bool(0.1) {
                    Role::Presenter
                } else {
                    Role::ALL[rng.gen_range(1..4)]
                },
                id: None,
                seq: 0,
            })
            .collect();
        let mut t = Trace {
            room,
            eager,
            actors,
            next_conn: 10,
            now: 0,
        };
        let depth = rng.gen_range(1..=50);
        for _ in 0..depth {
            t.step(&mut rng)
                .map_err(|e| format!("trace {trace_no}: {e}"))?;
        }
        steps_total += depth;

        t.now += 1;
        let (mut late, out) = join_observer(&mut t.room, LATE_CONN, t.now)?;
        for o in &out {
            if let Output::Send {
                conn: LATE_CONN,
                bytes,
            } = o
            {
                late.receive(bytes).map_err(|e| e.to_string())?;
            }
        }
        t.deliver(out)?;
        let (e, l) = (t.eager.view().state(), late.view().state());
        max_participants = max_participants.max(e.participants.len());
        with_pose += e
            .participants
            .values()
            .filter(|p| p.last_pose.is_some())
            .count();
        if e != l {
            return Err(format!("trace {trace_no} (depth {depth}): late-join view differs\n eager {e:?}\n late  {l:?}"));
        }
    }
    Ok(format!(
        "1000 traces ({steps_total} steps, up to {max_participants} participants incl. observers, {with_pose} cached poses): late-join view == eager view"
    ))
}

/// One move in the authority model: who sends, and what.
#[derive(Debug, Clone, Copy)]
enum Move {
    NextSlide,
    NextPhase,
    ToggleSelfMute,
    ToggleNextMute,
    Pose,
    Audio,
}

const MOVES: [Move; 6] = [
    Move::NextSlide,
    Move::NextPhase,
    Move::ToggleSelfMute,
    Move::ToggleNextMute,
    Move::Pose,
    Move::Audio,
];
const CAST: [Role; 3] = [Role::Presenter, Role::Examiner, Role::Audience];

#[derive(Default)]
struct ModelStats {
    states: usize,
    transitions: usize,
    presenter_mutations: usize,
    unmute_attempts: usize,
    slide_or_phase_violations: Vec<String>,
    self_unmute_violations: Vec<String>,
}

type StateKey = (u16, Phase, Vec<(u32, bool)>);

fn state_key(room: &Room) -> StateKey {
    (
        room.slide_index(),
        room.phase(),
        room.participants().map(|p| (p.id, p.muted)).collect(),
    )
}

/// Builds the three-participant room and replays `path` on it.
fn replay(path: &[(usize, Move)]) -> (Room, Vec<u32>) {
    let mut room = Room::new(RoomConfig {
        id: ROOM,
        deck_size: 40,
        ..RoomConfig::default()
    });
    let mut ids = Vec::new();
    for (k, role) in CAST.iter().enumerate() {
        let req = Message::JoinRequest(hpsync::protocol::JoinRequest {
            role: *role,
            display_name: format!("{role:?}"),
            avatar_ref: format!("avatar:{k}"),
        });
        for o in room.handle(k as u64 + 1, frame(0, 0, 0, &req), 0) {
            if let Output::Send { bytes, .. } = o {
                if let Ok(Envelope {
                    message: Message::JoinAccept(a),
                    ..
                }) = decode(&bytes)
                {
                    ids.push(a.participant_id);
                }
            }
        }
    }
    for (step, &(who, mv)) in path.iter().enumerate() {
        apply_move(&mut room, &ids, step, who, mv);
    }
    (room, ids)
}

fn apply_move(
    room: &mut Room,
    ids: &[u32],
    step: usize,
    who: usize,
    mv: Move,
) -> (Bytes, Vec<Output>) {
    let id = ids[who];
    let muted = |room: &Room, id: u32| room.participant(id).is_some_and(|p| p.muted);
    let msg = match mv {
        Move::NextSlide => Message::SlideCommand(SlideCommand {
            slide_index: room.slide_index() + 1,
        }),
        Move::NextPhase => Message::PhaseChange(PhaseChange {
            phase: Phase::ALL[(room.phase() as usize + 1) % 4],
        }),
        Move::ToggleSelfMute => Message::MuteControl(MuteControl {
            target_id: id,
            muted: !muted(room, id),
        }),
        Move::ToggleNextMute => {
            let target = ids[(who + 1) % ids.len()];
            Message::MuteControl(MuteControl {
                target_id: target,
                muted: !muted(room, target),
            })
        }
        Move::Pose => match CAST[who] {
            Role::Presenter => Message::PoseFull(sample::pose_full(
                &mut ChaCha8Rng::seed_from_u64(step as u64),
            )),
            _ => Message::PoseIk(sample::pose_ik(&mut ChaCha8Rng::seed_from_u64(step as u64))),
        },
        Move::Audio => Message::AudioFrame(AudioFrame {
            data: vec![1, 2, 3],
        }),
    };
    let f = frame(id, step as u32 + 1, 10 + step as u64, &msg);
    let out = room.handle(who as u64 + 1, f.clone(), 10 + step as u64);
    (f, out)
}

fn explore(
    path: &mut Vec<(usize, Move)>,
    depth: usize,
    seen: &mut HashSet<(StateKey, usize)>,
    stats: &mut ModelStats,
) {
    let (room, _) = replay(path);
    if !seen.insert((state_key(&room), depth)) {
        return;
    }
    stats.states += 1;
    if depth == 0 {
        return;
    }
    for who in 0..CAST.len() {
        for mv in MOVES {
            let (mut room, ids) = replay(path);
            if room.participant(ids[who]).is_none() {
                continue;
            }
            let before = state_key(&room);
            let sender_muted = room.participant(ids[who]).map(|p| p.muted);
            let (f, out) = apply_move(&mut room, &ids, path.len(), who, mv);
            let after = state_key(&room);
            let relayed = out
                .iter()
                .any(|o| matches!(o, Output::Send { bytes, .. } if *bytes == f));
            stats.transitions += 1;
            let role = CAST[who];
            let trail = || format!("{:?} then {role:?} {mv:?}", path);
            match mv {
                Move::NextSlide | Move::NextPhase => {
                    let mutated = relayed || before.0 != after.0 || before.1 != after.1;
                    if role == Role::Presenter {
                        stats.presenter_mutations += usize::from(mutated);
                    } else if mutated {
                        stats.slide_or_phase_violations.push(trail());
                    }
                }
                Move::ToggleSelfMute => {
                    let attempt = role != Role::Presenter
                        && before.1 == Phase::Presentation
                        && sender_muted == Some(true);
                    stats.unmute_attempts += usize::from(attempt);
                    let unmuted = sender_muted == Some(true)
                        && room.participant(ids[who]).map(|p| p.muted) == Some(false);
                    if role != Role::Presenter
                        && before.1 == Phase::Presentation
                        && sender_muted == Some(true)
                        && (unmuted || relayed)
                    {
                        stats.self_unmute_violations.push(trail());
                    }
                }
                _ => {}
            }
            path.push((who, mv));
            explore(path, depth - 1, seen, stats);
            path.pop();
        }
    }
}

fn authority_model_check() -> Outcome {
    const DEPTH: usize = 6;
    let mut stats = ModelStats::default();
    let mut seen = HashSet::new();
    explore(&mut Vec::new(), DEPTH, &mut seen, &mut stats);
    let detail = format!(
        "{} participants, {} move kinds over 5 message types, depth {DEPTH}: {} distinct (state, depth) nodes, {} transitions; \
         {} non-presenter slide/phase mutations, {} of {} presentation self-unmute attempts accepted ({} presenter mutations as control)",
        CAST.len(),
        MOVES.len(),
        stats.states,
        stats.transitions,
        stats.slide_or_phase_violations.len(),
        stats.self_unmute_violations.len(),
        stats.unmute_attempts,
        stats.presenter_mutations,
    );
    let first = stats
        .slide_or_phase_violations
        .first()
        .or(stats.self_unmute_violations.first());
    match first {
        Some(v) => Err(format!("{detail}; first: {v}")),
        None if stats.presenter_mutations == 0 => {
            Err(format!("{detail}; checker never saw an accepted mutation"))
        }
        None => Ok(detail),
    }
}

// ---------------------------------------------------------------- scenarios

fn scenario_config(seed: u64, latency_ms: u64, jitter_ms: u64, loss: f64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        conditions: NetConditions::new(latency_ms, jitter_ms, loss).expect("valid conditions"),
        ..ScenarioConfig::default()
    }
}

fn within(measured: f64, expected: f64, rel: f64) -> bool {
    (measured - expected).abs() <= rel * expected
}

fn scenario_bandwidth() -> Outcome {
    let start = Instant::now();
    let mut runs: HashMap<&str, RunMetrics> = HashMap::new();
    for s in Scenario::ALL {
        let out = run_scenario(s, &scenario_config(1, 0, 0, 0.0))
            .map_err(|e| format!("{}: {e}", s.name()))?;
        runs.insert(s.name(), out.metrics);
    }
    let elapsed = start.elapsed();
    let m = &runs[Scenario::Presentation.name()];

    let presenter_expected = (POSE_FULL_BYTES * 60) as f64;
    let vr_expected = (POSE_IK_BYTES * 60) as f64;
    let presenter = m.bots["presenter"].traffic.uplink_bytes_per_s;
    let mut ok = within(presenter, presenter_expected, 0.01);
    let mut detail = format!("presenter uplink {presenter:.1} B/s vs {presenter_expected} (±1%)");
    for (name, b) in &m.bots {
        if name != "presenter" && b.kind == hpsync::harness::BotKind::Vr {
            let v = b.traffic.uplink_bytes_per_s;
            ok &= within(v, vr_expected, 0.01);
            detail += &format!(", {name} uplink {v:.1} B/s vs {vr_expected} (±1%)");
        }
    }
    ok &= elapsed < Duration::from_secs(120);
    detail += &format!(
        "; all {} scenarios in {:.2}s (limit 120s)",
        runs.len(),
        elapsed.as_secs_f64()
    );
    check(ok, detail)
}

fn handshake_under_loss() -> Outcome {
    let cfg = scenario_config(42, 50, 0, 0.05);
    let a = run_scenario(Scenario::Handshake, &cfg).map_err(|e| e.to_string())?;
    let b = run_scenario(Scenario::Handshake, &cfg).map_err(|e| e.to_string())?;
    let h = a.metrics.handshake.as_ref().ok_or("no handshake metrics")?;
    let same = a.metrics.to_json_pretty() == b.metrics.to_json_pretty() && a.log == b.log;
    check(
        h.longest_contact_ms >= 1000 && h.min_wrist_distance_m <= 0.12 && same && a.metrics.drops.link_lost > 0,
        format!(
            "50 ms latency, 5% loss ({} frames lost): wrists within 0.12 m for {} ms (need 1000), closest {:.3} m; two runs with seed 42 identical: {same}",
            a.metrics.drops.link_lost, h.longest_contact_ms, h.min_wrist_distance_m
        ),
    )
}

// ---------------------------------------------------------------- animation

/// Oracle: the number of times a speed walk passes from strictly below the exit
/// threshold to strictly above the enter threshold, or back.
fn band_crossings(speeds: &[f64], exit: f64, enter: f64) -> usize {
    let mut high = false;
    let mut crossings = 0;
    for &s in speeds {
        if !high && s > enter {
            high = true;
            crossings += 1;
        } else if high && s < exit {
            high = false;
            crossings += 1;
        }
    }
    crossings
}

fn hysteresis() -> Outcome {
    let cfg = LocomotionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4157);
    let (mut transitions, mut crossings) = (0usize, 0usize);
    let walks = 10;
    for _ in 0..walks {
        let mut speed: f64 = rng.gen_range(0.0..0.3);
        let mut speeds = Vec::with_capacity(100_000);
        for _ in 0..100_000 {
            speed = (speed + rng.gen_range(-0.02..0.02)).clamp(0.0, 0.3);
            speeds.push(speed);
        }
        let mut state = LocomotionState::default();
        let mut walk_transitions = 0;
        for (t, &s) in speeds.iter().enumerate() {
            let next = cfg.update(state, s, t as u64);
            walk_transitions += usize::from(next.state != state.state);
            state = next;
        }
        let walk_crossings = band_crossings(&speeds, cfg.walk_exit_mps, cfg.walk_enter_mps);
        if walk_transitions > walk_crossings {
            return Err(format!(
                "{walk_transitions} transitions for {walk_crossings} band crossings"
            ));
        }
        transitions += walk_transitions;
        crossings += walk_crossings;
    }
    check(
        crossings > 0,
        format!("{walks} walks x 100000 steps: {transitions} transitions for {crossings} band crossings (<= 1 each)"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("codec conformance", codec_conformance),
        ("golden vectors", golden_vectors),
        ("size constants", size_constants),
        ("ik oracle", ik_oracle),
        ("retarget identity", retarget_identity),
        ("snapshot equivalence", snapshot_equivalence),
        ("authority model check", authority_model_check),
        ("scenario bandwidth", scenario_bandwidth),
        ("handshake under loss", handshake_under_loss),
        ("hysteresis", hysteresis),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name} ({secs:.2}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.2}s): {detail}");
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
