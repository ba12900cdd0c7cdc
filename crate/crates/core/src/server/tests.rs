use bytes::Bytes;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::client::{ClientConfig, ClientSession};
use crate::protocol::{
    decode, sample, Envelope, Message, Phase, PosePayload, RejectCode, Role, HEADER_LEN,
    POSE_FULL_MESSAGE_LEN,
};

struct Fixture {
    room: Room,
    clients: Vec<(ConnId, ClientSession)>,
    now: u64,
}

impl Fixture {
    fn new(config: RoomConfig) -> Self {
        Self {
            room: Room::new(config),
            clients: Vec::new(),
            now: 0,
        }
    }

    /// Deliver outputs to the matching sessions and return them.
    fn deliver(&mut self, out: &[Output]) {
        for o in out {
            if let Output::Send { conn, bytes } = o {
                if let Some((_, s)) = self.clients.iter_mut().find(|(c, _)| c == conn) {
                    s.receive(bytes).unwrap();
                }
            }
        }
    }

    fn send(&mut self, idx: usize, frame: Bytes) -> Vec<Output> {
        self.now += 1;
        let conn = self.clients[idx].0;
        let out = self.room.handle(conn, frame, self.now);
        self.deliver(&out);
        out
    }

    /// Connect a new client and send its JoinRequest. Returns its index.
    fn join(&mut self, role: Role) -> (usize, Vec<Output>) {
        let conn = self.clients.len() as ConnId + 100;
        let mut s = ClientSession::new(self.room.id(), ClientConfig::default());
        let frame = s.join(role, "n", "avatar:x", self.now).unwrap();
        self.clients.push((conn, s));
        let idx = self.clients.len() - 1;
        let out = self.send(idx, frame);
        (idx, out)
    }

    fn session(&mut self, idx: usize) -> &mut ClientSession {
        &mut self.clients[idx].1
    }

    fn id(&self, idx: usize) -> u32 {
        self.clients[idx].1.self_id().unwrap()
    }
}

fn reject_code(out: &[Output]) -> Option<RejectCode> {
    out.iter().find_map(|o| match o {
        Output::Send { bytes, .. } => match decode(bytes).ok()?.message {
            Message::Reject(r) => Some(r.code),
            _ => None,
        },
        _ => None,
    })
}

fn sends(out: &[Output]) -> Vec<(ConnId, Envelope)> {
    out.iter()
        .filter_map(|o| match o {
            Output::Send { conn, bytes } => Some((*conn, decode(bytes).unwrap())),
            _ => None,
        })
        .collect()
}

fn full_pose(seed: u64) -> PosePayload {
    PosePayload::Full(sample::pose_full(&mut ChaCha8Rng::seed_from_u64(seed)))
}

#[test]
fn first_presenter_join() {
    let mut f = Fixture::new(RoomConfig::default());
    let (p, out) = f.join(Role::Presenter);
    let env = &sends(&out)[0].1;
    let Message::JoinAccept(acc) = &env.message else {
        panic!("{env:?}")
    };
    assert_eq!(acc.participant_id, 1);
    assert_eq!(acc.snapshot.slide_index, 0);
    assert_eq!(acc.snapshot.phase, Phase::Presentation);
    assert_eq!(acc.snapshot.participants.len(), 1);
    assert!(!acc.snapshot.participants[0].muted);
    assert_eq!(f.id(p), 1);
}

#[test]
fn second_presenter_conflicts() {
    let mut f = Fixture::new(RoomConfig::default());
    f.join(Role::Presenter);
    let (_, out) = f.join(Role::Presenter);
    assert_eq!(reject_code(&out), Some(RejectCode::PresenterConflict));
    assert_eq!(f.room.participants().count(), 1);
}

#[test]
fn join_broadcasts_manifest_and_mutes_non_presenters() {
    let mut f = Fixture::new(RoomConfig::default());
    let (p, _) = f.join(Role::Presenter);
    let (a, out) = f.join(Role::Audience);
    let s = sends(&out);
    assert_eq!(s.len(), 2);
    assert!(matches!(s[1].1.message, Message::AvatarManifest(ref m) if m.participant_id == 2));
    assert!(f.room.participant(f.id(a)).unwrap().muted);
    assert!(f.session(p).view().participant(2).unwrap().muted);
}

#[test]
fn room_full_and_bad_avatar() {
    let mut f = Fixture::new(RoomConfig {
        max_participants: 1,
        ..RoomConfig::default()
    });
    f.join(Role::Examiner);
    assert_eq!(
        reject_code(&f.join(Role::Audience).1),
        Some(RejectCode::RoomFull)
    );

    let mut f = Fixture::new(RoomConfig::default());
    let mut s = ClientSession::new(1, ClientConfig::default());
    let frame = s.join(Role::Audience, "n", "has space", 0).unwrap();
    f.clients.push((1, s));
    assert_eq!(
        reject_code(&f.send(0, frame)),
        Some(RejectCode::BadAvatarRef)
    );
}

#[test]
fn pose_relay_and_staleness() {
    let mut f = Fixture::new(RoomConfig::default());
    let (p, _) = f.join(Role::Presenter);
    f.join(Role::Examiner);
    f.join(Role::Audience);
    for _ in 0..9 {
        let fr = f.session(p).pose(full_pose(1), 10).unwrap();
        f.send(p, fr);
    }
    let tenth = f.session(p).pose(full_pose(2), 20).unwrap();
    assert_eq!(tenth.len(), POSE_FULL_MESSAGE_LEN);
    let out = f.send(p, tenth.clone());
    // Relayed byte-identical to the two other participants.
    let relayed: Vec<_> = out
        .iter()
        .filter_map(|o| match o {
            Output::Send { bytes, .. } => Some(bytes.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(relayed.len(), 2);
    assert!(relayed.iter().all(|b| *b == tenth));
    let cached = f
        .room
        .participant(f.id(p))
        .unwrap()
        .last_pose
        .clone()
        .unwrap();
    assert_eq!(cached.seq, 10);
    assert_eq!(cached.payload, tenth.slice(HEADER_LEN..));

    // Seq 9 after 10: silently dropped.
    let mut stale = tenth.to_vec();
    stale[12..16].copy_from_slice(&9u32.to_le_bytes());
    let out = f.send(p, Bytes::from(stale));
    assert!(out.is_empty());
    assert_eq!(
        f.room
            .participant(1)
            .unwrap()
            .last_pose
            .as_ref()
            .unwrap()
            .seq,
        10
    );
    assert_eq!(f.room.stats().stale_drops, 1);
}

#[test]
fn role_stream_mismatch() {
    let mut f = Fixture::new(RoomConfig::default());
    let (a, _) = f.join(Role::Audience);
    let fr = f.session(a).pose(full_pose(3), 0).unwrap();
    assert_eq!(
        reject_code(&f.send(a, fr)),
        Some(RejectCode::RoleStreamMismatch)
    );
    assert!(f.room.participant(f.id(a)).unwrap().last_pose.is_none());

    // The first accepted pose type fixes the mode.
    let ik = PosePayload::Ik(sample::pose_ik(&mut ChaCha8Rng::seed_from_u64(1)));
    let fr = f.session(a).pose(ik, 0).unwrap();
    assert_eq!(reject_code(&f.send(a, fr)), None);
    let simple = PosePayload::Simple(sample::transform_simple(&mut ChaCha8Rng::seed_from_u64(1)));
    let fr = f.session(a).pose(simple, 0).unwrap();
    assert_eq!(
        reject_code(&f.send(a, fr)),
        Some(RejectCode::RoleStreamMismatch)
    );
}

#[test]
fn slide_authority_and_range() {
    let mut f = Fixture::new(RoomConfig::default());
    let (p, _) = f.join(Role::Presenter);
    let (e, _) = f.join(Role::Examiner);
    let (a, _) = f.join(Role::Audience);
    let fr = f.session(p).slide(3, 0).unwrap();
    let out = f.send(p, fr);
    assert_eq!(sends(&out).len(), 3);
    assert_eq!(f.room.slide_index(), 3);
    for i in [p, e, a] {
        assert_eq!(f.session(i).view().slide_index(), 3);
    }
    let fr = f.session(e).slide(5, 0).unwrap();
    assert_eq!(
        reject_code(&f.send(e, fr)),
        Some(RejectCode::AuthorityViolation)
    );
    let fr = f.session(p).slide(41, 0).unwrap();
    assert_eq!(
        reject_code(&f.send(p, fr)),
        Some(RejectCode::SlideOutOfRange)
    );
    let fr = f.session(p).slide(40, 0).unwrap();
    assert_eq!(
        reject_code(&f.send(p, fr)),
        Some(RejectCode::SlideOutOfRange)
    );
    assert_eq!(f.room.slide_index(), 3);
    assert_eq!(f.room.slide_seq(), 1);
}

#[test]
fn mute_rules_by_phase() {
    let mut f = Fixture::new(RoomConfig::default());
    let (p, _) = f.join(Role::Presenter);
    let (a, _) = f.join(Role::Audience);
    let (e, _) = f.join(Role::Examiner);
    let aid = f.id(a);

    let fr = f.session(a).mute(aid, false, 0).unwrap();
    assert_eq!(
        reject_code(&f.send(a, fr)),
        Some(RejectCode::AuthorityViolation)
    );
    assert!(f.room.participant(aid).unwrap().muted);

    let fr = f.session(e).mute(aid, false, 0).unwrap();
    assert_eq!(
        reject_code(&f.send(e, fr)),
        Some(RejectCode::AuthorityViolation)
    );

    let fr = f.session(p).mute(aid, false, 0).unwrap();
    assert_eq!(reject_code(&f.send(p, fr)), None);
    assert!(!f.room.participant(aid).unwrap().muted);
    let fr = f.session(p).mute(aid, true, 0).unwrap();
    f.send(p, fr);

    let fr = f.session(p).phase(Phase::OpenDiscussion, 0).unwrap();
    f.send(p, fr);
    let fr = f.session(a).mute(aid, false, 0).unwrap();
    assert_eq!(reject_code(&f.send(a, fr)), None);
    assert!(!f.room.participant(aid).unwrap().muted);
    assert!(!f.session(e).view().participant(aid).unwrap().muted);
}

#[test]
fn audio_drops_when_muted() {
    let mut f = Fixture::new(RoomConfig::default());
    let (p, _) = f.join(Role::Presenter);
    let (a, _) = f.join(Role::Audience);
    let (b, _) = f.join(Role::OnsiteBridge);
    let fr = f.session(p).audio(vec![1, 2, 3], 0).unwrap();
    assert_eq!(sends(&f.send(p, fr)).len(), 2);
    let fr = f.session(a).audio(vec![1], 0).unwrap();
    assert!(f.send(a, fr).is_empty());
    assert_eq!(f.room.stats().muted_audio_drops, 1);
    let fr = f.session(b).audio(vec![9; 160], 0).unwrap();
    assert_eq!(sends(&f.send(b, fr)).len(), 2);
    // The bridge cannot be muted.
    let bid = f.id(b);
    let fr = f.session(p).mute(bid, true, 0).unwrap();
    assert_eq!(
        reject_code(&f.send(p, fr)),
        Some(RejectCode::AuthorityViolation)
    );
}

#[test]
fn closed_discussion_excludes_audience() {
    let mut f = Fixture::new(RoomConfig::default());
    let (p, _) = f.join(Role::Presenter);
    let (e, _) = f.join(Role::Examiner);
    let (a1, _) = f.join(Role::Audience);
    let (a2, _) = f.join(Role::Audience);
    let (c1, c2) = (f.clients[a1].0, f.clients[a2].0);

    let fr = f.session(e).phase(Phase::OpenDiscussion, 0).unwrap();
    assert_eq!(
        reject_code(&f.send(e, fr)),
        Some(RejectCode::AuthorityViolation)
    );

    let fr = f.session(p).phase(Phase::ClosedDiscussion, 0).unwrap();
    let out = f.send(p, fr);
    assert!(out.contains(&Output::Close { conn: c1 }));
    assert!(out.contains(&Output::Close { conn: c2 }));
    for i in [a1, a2] {
        assert_eq!(
            f.session(i).view().excluded(),
            Some(Phase::ClosedDiscussion)
        );
    }
    assert_eq!(f.room.participants().count(), 2);
    assert_eq!(f.room.stats().exclusions, 2);
    for i in [p, e] {
        let v = f.session(i).view();
        assert_eq!(v.phase(), Phase::ClosedDiscussion);
        assert_eq!(v.participants().len(), 2);
    }
    // No traffic to excluded connections after their notice.
    let fr = f.session(p).pose(full_pose(4), 0).unwrap();
    let out = f.send(p, fr);
    assert!(sends(&out).iter().all(|(c, _)| *c != c1 && *c != c2));
    // Audience cannot rejoin while the discussion is closed.
    assert_eq!(
        reject_code(&f.join(Role::Audience).1),
        Some(RejectCode::PhaseRestricted)
    );
}

#[test]
fn snapshot_embeds_cached_pose_and_no_pose_tag() {
    let mut f = Fixture::new(RoomConfig::default());
    let (p, _) = f.join(Role::Presenter);
    f.join(Role::Examiner);
    let mut last = Bytes::new();
    for _ in 0..42 {
        last = f.session(p).pose(full_pose(7), 5).unwrap();
        f.send(p, last.clone());
    }
    let (_, out) = f.join(Role::Audience);
    let Output::Send { bytes, .. } = &out[0] else {
        panic!()
    };
    // The cached payload appears verbatim inside the JoinAccept frame.
    let payload = &last[HEADER_LEN..];
    assert!(bytes.windows(payload.len()).any(|w| w == payload));
    let Message::JoinAccept(acc) = decode(bytes).unwrap().message else {
        panic!()
    };
    let entries = &acc.snapshot.participants;
    assert_eq!(entries.len(), 3);
    assert_eq!(entries[0].last_pose.as_ref().unwrap().seq, 42);
    assert!(entries[1].last_pose.is_none());
    assert!(entries[2].last_pose.is_none());
}

#[test]
fn protocol_errors_are_rejected() {
    let mut f = Fixture::new(RoomConfig::default());
    let (p, _) = f.join(Role::Presenter);
    assert_eq!(
        reject_code(&f.send(p, Bytes::from_static(b"garbage"))),
        Some(RejectCode::Malformed)
    );

    // Wrong sender id.
    let mut fr = f.session(p).heartbeat(0).unwrap().to_vec();
    fr[8..12].copy_from_slice(&77u32.to_le_bytes());
    assert_eq!(
        reject_code(&f.send(p, Bytes::from(fr))),
        Some(RejectCode::SenderMismatch)
    );

    // Anything but a join from a fresh connection.
    let mut other = ClientSession::new(1, ClientConfig::default());
    other.join(Role::Audience, "x", "a", 0).unwrap();
    f.clients.push((999, other));
    let hb = crate::protocol::encode(
        &crate::protocol::Header {
            room_id: 1,
            sender_id: 5,
            seq: 1,
            timestamp_ms: 0,
        },
        &Message::Heartbeat,
    )
    .unwrap();
    let idx = f.clients.len() - 1;
    assert_eq!(
        reject_code(&f.send(idx, Bytes::from(hb))),
        Some(RejectCode::NotJoined)
    );

    // Second join on an existing connection.
    let fr = f.session(p).join(Role::Examiner, "n", "a", 0).unwrap();
    assert_eq!(reject_code(&f.send(p, fr)), Some(RejectCode::AlreadyJoined));
}

#[test]
fn heartbeat_timeout_synthesizes_leave() {
    let mut f = Fixture::new(RoomConfig::default());
    let (p, _) = f.join(Role::Presenter);
    let (e, _) = f.join(Role::Examiner);
    let pid = f.id(p);
    f.now = 4_000;
    let fr = f.session(e).heartbeat(4_000).unwrap();
    f.send(e, fr);
    let out = f.room.tick(5_500);
    let s = sends(&out);
    assert_eq!(s.len(), 1);
    assert!(matches!(s[0].1.message, Message::Leave));
    assert_eq!(s[0].1.header.sender_id, pid);
    assert!(f.room.participant(pid).is_none());
    f.deliver(&out);
    assert!(f.session(e).view().participant(pid).is_none());
    assert!(f.room.tick(8_000).is_empty());
    assert_eq!(f.room.stats().timeouts, 1);
}

#[test]
fn log_events_serialize() {
    let mut f = Fixture::new(RoomConfig::default());
    f.join(Role::Presenter);
    f.join(Role::Presenter);
    let log = f.room.take_log();
    assert_eq!(log.len(), 2);
    let line = log[1].to_json();
    assert!(line.contains("\"outcome\":\"rejected\""), "{line}");
    assert!(line.contains("\"code\":\"presenter_conflict\""), "{line}");
    assert!(log[0].to_json().contains("\"msg_type\":\"join_request\""));
}

#[test]
fn recorded_trace_replays_identically() {
    let mut rec = trace::RecordingRoom::new(RoomConfig::default());
    let mut p = ClientSession::new(1, ClientConfig::default());
    let mut a = ClientSession::new(1, ClientConfig::default());
    let feed = |rec: &mut trace::RecordingRoom, conn, bytes: Bytes, t, s: &mut ClientSession| {
        for o in rec.handle(conn, bytes, t) {
            if let Output::Send { conn: c, bytes } = o {
                if c == conn {
                    let _ = s.receive(&bytes);
                }
            }
        }
    };
    let fr = p.join(Role::Presenter, "p", "a", 0).unwrap();
    feed(&mut rec, 1, fr, 0, &mut p);
    let fr = a.join(Role::Audience, "a", "b", 1).unwrap();
    feed(&mut rec, 2, fr, 1, &mut a);
    for t in 0..5 {
        let fr = p.pose(full_pose(t), 10 + t).unwrap();
        feed(&mut rec, 1, fr, 10 + t, &mut p);
    }
    rec.tick(20_000);
    let mut buf = Vec::new();
    rec.write_jsonl(&mut buf).unwrap();
    let lines = trace::read_jsonl(&buf[..]).unwrap();
    assert_eq!(lines, rec.lines());
    let report = trace::replay(&lines).unwrap();
    assert!(report.identical(), "{report:?}");
    assert!(report.outputs > 5);

    // A tampered output is detected.
    let mut tampered = lines.clone();
    let pos = tampered
        .iter()
        .position(|l| matches!(l, trace::TraceLine::Send { .. }))
        .unwrap();
    tampered[pos] = trace::TraceLine::Close { conn: 1 };
    assert!(!trace::replay(&tampered).unwrap().identical());
}
