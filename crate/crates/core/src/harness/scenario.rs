use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use bytes::Bytes;
use serde::{Deserialize, Serialize};

use super::bot::{Bot, BotKind, BotSpec};
use super::metrics::{
    bot_traffic, compute_positional_error, longest_run_within, role_traffic, Assertion, BotMetrics,
    ClockAlignment, Drops, HandshakeMetrics, LatencySummary, RootTrack, RunMetrics,
};
use super::netsim::{is_lossy, Delivery, Direction, InFlight, Link, NetConditions};
use super::traces::canonical;
use super::HarnessError;
use crate::client::ClientConfig;
use crate::kinematics::SkeletonManifest;
use crate::protocol::Role;
use crate::server::trace::{RecordingRoom, TraceLine};
use crate::server::{ConnId, LogEvent, Output, Room, RoomConfig, RoomStats};

/// Wrist distance that counts as a handshake.
pub const HANDSHAKE_CONTACT_M: f64 = 0.12;
/// How long the contact must last.
pub const HANDSHAKE_HOLD_MS: u64 = 1000;
/// Room ticks (heartbeat checks) happen this often.
const TICK_EVERY_MS: u64 = 250;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Handshake,
    Presentation,
    Freestyle,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::Handshake,
        Scenario::Presentation,
        Scenario::Freestyle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Handshake => "handshake",
            Scenario::Presentation => "presentation",
            Scenario::Freestyle => "freestyle",
        }
    }

    pub fn duration_ms(self) -> u64 {
        match self {
            Scenario::Handshake => 8_000,
            Scenario::Presentation => 60_000,
            Scenario::Freestyle => 30_000,
        }
    }

    pub fn bots(self) -> Result<Vec<BotSpec>, HarnessError> {
        let spec = |name: &str,
                    kind: BotKind,
                    trace: &str,
                    join_at_ms: u64|
         -> Result<BotSpec, HarnessError> {
            Ok(BotSpec {
                name: name.to_owned(),
                kind,
                trace: canonical(trace)?,
                join_at_ms,
                watch_handshake: false,
            })
        };
        Ok(match self {
            Scenario::Handshake => {
                let mut observer = spec("observer", BotKind::Browser, "handshake/observer", 2)?;
                observer.watch_handshake = true;
                vec![
                    spec("presenter", BotKind::Presenter, "handshake/presenter", 0)?,
                    spec("examiner_vr", BotKind::Vr, "handshake/examiner_vr", 1)?,
                    observer,
                ]
            }
            Scenario::Presentation => vec![
                spec("presenter", BotKind::Presenter, "presentation/presenter", 0)?,
                spec("examiner_vr", BotKind::Vr, "presentation/examiner_vr", 0)?,
                spec("audience_vr", BotKind::Vr, "presentation/audience_vr", 0)?,
                spec(
                    "audience_browser",
                    BotKind::Browser,
                    "presentation/audience_browser",
                    0,
                )?,
            ],
            Scenario::Freestyle => vec![
                spec("presenter", BotKind::Presenter, "freestyle/presenter", 0)?,
                spec("examiner_vr", BotKind::Vr, "presentation/examiner_vr", 0)?,
                spec("observer", BotKind::Browser, "freestyle/observer", 0)?,
            ],
        })
    }
}

impl FromStr for Scenario {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| HarnessError::InvalidConfig(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub conditions: NetConditions,
    pub client: ClientConfig,
    pub room: RoomConfig,
}

/// Metrics plus the server's structured log.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub log: Vec<LogEvent>,
}

/// The server side of a run: an in-process room or a remote endpoint.
pub trait ServerPort {
    /// Hand a frame from connection `conn` to the server.
    fn deliver(&mut self, conn: ConnId, frame: Bytes, now_ms: u64) -> Vec<Output>;
    /// Outputs produced without input (timers, or frames arriving from a socket).
    fn poll(&mut self, now_ms: u64) -> Vec<Output>;
    fn take_log(&mut self) -> Vec<LogEvent> {
        Vec::new()
    }
    fn stats(&self) -> Option<RoomStats> {
        None
    }
    /// Runs against the wall clock rather than virtual time.
    fn realtime(&self) -> bool {
        false
    }
}

/// Function-call loopback into a [`Room`].
#[derive(Debug)]
pub struct InProcess {
    room: Room,
}

impl InProcess {
    pub fn new(config: RoomConfig) -> Self {
        Self {
            room: Room::new(config),
        }
    }

    pub fn room(&self) -> &Room {
        &self.room
    }
}

impl ServerPort for InProcess {
    fn deliver(&mut self, conn: ConnId, frame: Bytes, now_ms: u64) -> Vec<Output> {
        self.room.handle(conn, frame, now_ms)
    }

    fn poll(&mut self, now_ms: u64) -> Vec<Output> {
        if now_ms % TICK_EVERY_MS == 0 {
            self.room.tick(now_ms)
        } else {
            Vec::new()
        }
    }

    fn take_log(&mut self) -> Vec<LogEvent> {
        self.room.take_log()
    }

    fn stats(&self) -> Option<RoomStats> {
        Some(self.room.stats().clone())
    }
}

/// [`InProcess`] that also records a replayable room trace.
#[derive(Debug)]
pub struct Recording {
    room: RecordingRoom,
}

impl Recording {
    pub fn new(config: RoomConfig) -> Self {
        Self {
            room: RecordingRoom::new(config),
        }
    }

    pub fn lines(&self) -> &[TraceLine] {
        self.room.lines()
    }
}

impl ServerPort for Recording {
    fn deliver(&mut self, conn: ConnId, frame: Bytes, now_ms: u64) -> Vec<Output> {
        self.room.handle(conn, frame, now_ms)
    }

    fn poll(&mut self, now_ms: u64) -> Vec<Output> {
        if now_ms % TICK_EVERY_MS == 0 {
            self.room.tick(now_ms)
        } else {
            Vec::new()
        }
    }

    fn take_log(&mut self) -> Vec<LogEvent> {
        self.room.room_mut().take_log()
    }

    fn stats(&self) -> Option<RoomStats> {
        Some(self.room.room().stats().clone())
    }
}

fn conn_of(bot: usize) -> ConnId {
    bot as ConnId + 1
}

/// Run a scenario against an in-process room. Fails with
/// [`HarnessError::ScenarioAssertionFailed`] if any scenario assertion fails.
pub fn run_scenario(
    scenario: Scenario,
    config: &ScenarioConfig,
) -> Result<RunOutput, HarnessError> {
    let out = run_with(scenario, config, &mut InProcess::new(config.room.clone()))?;
    if out.metrics.passed() {
        Ok(out)
    } else {
        Err(HarnessError::ScenarioAssertionFailed {
            failures: out.metrics.failures(),
            output: Box::new(out),
        })
    }
}

/// Run a scenario against any server. Assertion results are reported in the
/// metrics rather than as an error.
pub fn run_with(
    scenario: Scenario,
    config: &ScenarioConfig,
    port: &mut dyn ServerPort,
) -> Result<RunOutput, HarnessError> {
    run_specs(scenario, scenario.bots()?, config, port)
}

/// Run custom bots for the length of `scenario`, with its assertions.
pub fn run_specs(
    scenario: Scenario,
    specs: Vec<BotSpec>,
    config: &ScenarioConfig,
    port: &mut dyn ServerPort,
) -> Result<RunOutput, HarnessError> {
    config.conditions.validate()?;
    config
        .room
        .validate()
        .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let manifest = Arc::new(SkeletonManifest::canonical());
    let mut bots = specs
        .into_iter()
        .map(|s| Bot::new(s, config.room.id, config.client, manifest.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let cond = &config.conditions;
    let mut up: Vec<Link> = (0..bots.len())
        .map(|i| Link::new(cond, config.seed, i, Direction::Up))
        .collect();
    let mut down: Vec<Link> = (0..bots.len())
        .map(|i| Link::new(cond, config.seed, i, Direction::Down))
        .collect();
    let mut flight = InFlight::default();
    let mut log = Vec::new();
    let duration = scenario.duration_ms();
    let wall = Instant::now();

    let route = |outputs: Vec<Output>, t: u64, down: &mut [Link], flight: &mut InFlight| {
        for o in outputs {
            match o {
                Output::Send { conn, bytes } => {
                    let bot = (conn - 1) as usize;
                    if let Some(due) = down[bot].schedule(t, is_lossy(&bytes)) {
                        flight.push(due, Delivery::ToBot { bot, frame: bytes });
                    }
                }
                Output::Close { conn } => {
                    let bot = (conn - 1) as usize;
                    if let Some(due) = down[bot].schedule(t, false) {
                        flight.push(due, Delivery::CloseBot { bot });
                    }
                }
            }
        }
    };

    for t in 0..=duration {
        if port.realtime() {
            let target = wall + Duration::from_millis(t);
            if let Some(wait) = target.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        let polled = port.poll(t);
        route(polled, t, &mut down, &mut flight);
        for (i, bot) in bots.iter_mut().enumerate() {
            for frame in bot.step(t)? {
                if let Some(due) = up[i].schedule(t, is_lossy(&frame)) {
                    flight.push(due, Delivery::ToServer { bot: i, frame });
                }
            }
        }
        while let Some(d) = flight.pop_due(t) {
            match d {
                Delivery::ToServer { bot, frame } => {
                    let outputs = port.deliver(conn_of(bot), frame, t);
                    route(outputs, t, &mut down, &mut flight);
                }
                Delivery::ToBot { bot, frame } => bots[bot].receive(&frame, t)?,
                Delivery::CloseBot { bot } => bots[bot].close(t),
            }
        }
        for bot in &mut bots {
            bot.observe(t);
        }
        log.extend(port.take_log());
    }

    for b in &bots {
        if b.stats.joined_at.is_none() {
            return Err(HarnessError::ConnectionLost(format!(
                "bot '{}' never joined",
                b.name
            )));
        }
        if let Some(at) = b.stats.closed_at {
            if !b.stats.excluded {
                return Err(HarnessError::ConnectionLost(format!(
                    "bot '{}' closed at {at} ms",
                    b.name
                )));
            }
        }
    }

    let metrics = assemble(scenario, config, &bots, &up, &down, port.stats());
    Ok(RunOutput { metrics, log })
}

fn assemble(
    scenario: Scenario,
    config: &ScenarioConfig,
    bots: &[Bot],
    up: &[Link],
    down: &[Link],
    server: Option<RoomStats>,
) -> RunMetrics {
    let duration = scenario.duration_ms();
    let presenter = bots.iter().find(|b| b.role == Role::Presenter);
    let truth = presenter.and_then(|p| RootTrack::new(p.truth.clone()).ok());

    let mut bot_metrics = std::collections::BTreeMap::new();
    let mut latencies = Vec::new();
    let mut errors = Vec::new();
    for b in bots {
        latencies.extend_from_slice(&b.stats.pose_latency_ms);
        let err = truth.as_ref().and_then(|tr| {
            compute_positional_error(
                tr,
                &b.observed_presenter,
                config.client.interp_delay_ms,
                ClockAlignment::Shared,
            )
            .ok()
        });
        errors.extend(err);
        bot_metrics.insert(
            b.name.clone(),
            BotMetrics {
                role: b.role,
                kind: b.kind,
                traffic: bot_traffic(b, duration),
                poses_received: b.stats.pose_latency_ms.len() as u64,
                slides_observed: b.stats.slides.clone(),
                positional_error_m: err,
            },
        );
    }
    let positional_error_m =
        (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64);

    let mut assertions = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        assertions.push(Assertion {
            name: name.to_owned(),
            passed,
            detail,
        })
    };
    let rejects: usize = bots.iter().map(|b| b.stats.rejects.len()).sum();
    check(
        "no_rejects",
        rejects == 0,
        format!("{rejects} rejects received"),
    );

    let handshake = match scenario {
        Scenario::Handshake => {
            let observer = bots.iter().find(|b| !b.wrist_distance.is_empty());
            let series = observer.map_or(&[][..], |b| &b.wrist_distance[..]);
            let longest = longest_run_within(series, HANDSHAKE_CONTACT_M);
            let min = series.iter().map(|&(_, d)| d).fold(f64::INFINITY, f64::min);
            check(
                "handshake_contact",
                longest >= HANDSHAKE_HOLD_MS,
                format!("wrists within {HANDSHAKE_CONTACT_M} m for {longest} ms (min {min:.4} m)"),
            );
            Some(HandshakeMetrics {
                longest_contact_ms: longest,
                min_wrist_distance_m: if min.is_finite() { min } else { -1.0 },
            })
        }
        Scenario::Presentation => {
            let expected: Vec<u16> = (1..=10).collect();
            for b in bots {
                check(
                    &format!("slides_in_order:{}", b.name),
                    b.stats.slides == expected,
                    format!("observed {:?}", b.stats.slides),
                );
            }
            None
        }
        Scenario::Freestyle => {
            check(
                "presenter_observed",
                positional_error_m.is_some_and(f64::is_finite),
                format!("positional error {positional_error_m:?}"),
            );
            None
        }
    };

    let server_ref = server.as_ref();
    RunMetrics {
        scenario: scenario.name().to_owned(),
        seed: config.seed,
        conditions: config.conditions,
        duration_ms: duration,
        roles: role_traffic(bots, duration),
        bots: bot_metrics,
        pose_latency_ms: LatencySummary::from_samples(&latencies),
        positional_error_m,
        drops: Drops {
            link_lost: up.iter().chain(down).map(|l| l.lost).sum(),
            stale: server_ref.map_or(0, |s| s.stale_drops),
            muted_audio: server_ref.map_or(0, |s| s.muted_audio_drops),
        },
        violations: server_ref.map_or(rejects as u64, |s| s.total_rejects()),
        server,
        handshake,
        assertions,
    }
}
