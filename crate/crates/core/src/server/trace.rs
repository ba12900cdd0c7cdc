//! Recorded room traces: every input a room saw and every output it produced,
//! as JSON Lines. Replaying the inputs into a fresh room must reproduce the
//! outputs exactly.

use std::io::{BufRead, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use bytes::Bytes;
use serde::{Deserialize, Serialize};

use super::{ConnId, Output, Room, RoomConfig, ServerError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceLine {
    Config {
        room: RoomConfig,
    },
    Frame {
        t_ms: u64,
        conn: ConnId,
        #[serde(with = "b64")]
        bytes: Vec<u8>,
    },
    Disconnect {
        t_ms: u64,
        conn: ConnId,
    },
    Tick {
        t_ms: u64,
    },
    Send {
        conn: ConnId,
        #[serde(with = "b64")]
        bytes: Vec<u8>,
    },
    Close {
        conn: ConnId,
    },
}

impl TraceLine {
    fn is_output(&self) -> bool {
        matches!(self, TraceLine::Send { .. } | TraceLine::Close { .. })
    }

    fn from_output(o: &Output) -> Self {
        match o {
            Output::Send { conn, bytes } => TraceLine::Send {
                conn: *conn,
                bytes: bytes.to_vec(),
            },
            Output::Close { conn } => TraceLine::Close { conn: *conn },
        }
    }
}

mod b64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        B64.decode(s).map_err(serde::de::Error::custom)
    }
}

/// A room that records its inputs and outputs.
#[derive(Debug)]
pub struct RecordingRoom {
    room: Room,
    lines: Vec<TraceLine>,
}

impl RecordingRoom {
    pub fn new(config: RoomConfig) -> Self {
        Self {
            lines: vec![TraceLine::Config {
                room: config.clone(),
            }],
            room: Room::new(config),
        }
    }

    pub fn room(&self) -> &Room {
        &self.room
    }

    pub fn room_mut(&mut self) -> &mut Room {
        &mut self.room
    }

    pub fn handle(&mut self, conn: ConnId, frame: Bytes, now_ms: u64) -> Vec<Output> {
        self.lines.push(TraceLine::Frame {
            t_ms: now_ms,
            conn,
            bytes: frame.to_vec(),
        });
        let out = self.room.handle(conn, frame, now_ms);
        self.record(&out);
        out
    }

    pub fn disconnect(&mut self, conn: ConnId, now_ms: u64) -> Vec<Output> {
        self.lines
            .push(TraceLine::Disconnect { t_ms: now_ms, conn });
        let out = self.room.disconnect(conn, now_ms);
        self.record(&out);
        out
    }

    pub fn tick(&mut self, now_ms: u64) -> Vec<Output> {
        let out = self.room.tick(now_ms);
        // Idle ticks carry no information for replay.
        if !out.is_empty() {
            self.lines.push(TraceLine::Tick { t_ms: now_ms });
            self.record(&out);
        }
        out
    }

    fn record(&mut self, out: &[Output]) {
        self.lines.extend(out.iter().map(TraceLine::from_output));
    }

    pub fn lines(&self) -> &[TraceLine] {
        &self.lines
    }

    pub fn write_jsonl<W: Write>(&self, w: W) -> Result<(), ServerError> {
        write_jsonl(&self.lines, w)
    }
}

pub fn write_jsonl<W: Write>(lines: &[TraceLine], mut w: W) -> Result<(), ServerError> {
    for line in lines {
        serde_json::to_writer(&mut w, line).map_err(|e| ServerError::Trace(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TraceLine>, ServerError> {
    let mut lines = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str(&line)
            .map_err(|e| ServerError::Trace(format!("line {}: {e}", n + 1)))?;
        lines.push(parsed);
    }
    Ok(lines)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub inputs: usize,
    pub outputs: usize,
    pub recorded_outputs: usize,
    /// Index into the output sequence of the first divergence, if any.
    pub first_mismatch: Option<usize>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.first_mismatch.is_none() && self.outputs == self.recorded_outputs
    }
}

/// Feed a trace's inputs into a fresh room and compare outputs with the recorded ones.
pub fn replay(lines: &[TraceLine]) -> Result<ReplayReport, ServerError> {
    let Some(TraceLine::Config { room: config }) = lines.first() else {
        return Err(ServerError::Trace(
            "trace must start with a config line".into(),
        ));
    };
    config.validate()?;
    let mut room = Room::new(config.clone());
    let recorded: Vec<&TraceLine> = lines.iter().filter(|l| l.is_output()).collect();
    let mut produced = Vec::new();
    let mut inputs = 0;
    for line in &lines[1..] {
        let out = match line {
            TraceLine::Frame { t_ms, conn, bytes } => {
                room.handle(*conn, Bytes::from(bytes.clone()), *t_ms)
            }
            TraceLine::Disconnect { t_ms, conn } => room.disconnect(*conn, *t_ms),
            TraceLine::Tick { t_ms } => room.tick(*t_ms),
            TraceLine::Config { .. } => {
                return Err(ServerError::Trace("config line after start".into()))
            }
            TraceLine::Send { .. } | TraceLine::Close { .. } => continue,
        };
        inputs += 1;
        produced.extend(out.iter().map(TraceLine::from_output));
    }
    let first_mismatch = produced.iter().zip(&recorded).position(|(a, b)| a != *b);
    let first_mismatch = first_mismatch.or_else(|| {
        (produced.len() != recorded.len()).then_some(produced.len().min(recorded.len()))
    });
    Ok(ReplayReport {
        inputs,
        outputs: produced.len(),
        recorded_outputs: recorded.len(),
        first_mismatch,
    })
}
