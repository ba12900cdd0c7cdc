use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ServerError;
use crate::animation::LocomotionConfig;
use crate::client::AudioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomConfig {
    pub id: u32,
    pub deck_size: u16,
    /// Reserved for an aggregating broadcast mode; the relay forwards immediately.
    pub tick_hz: u32,
    pub max_participants: usize,
    pub heartbeat_timeout_ms: u64,
    pub walk_enter_mps: f64,
    pub walk_exit_mps: f64,
    pub audio_ref_m: f64,
    pub audio_min_gain: f64,
}

impl Default for RoomConfig {
    fn default() -> Self {
        Self {
            id: 1,
            deck_size: 40,
            tick_hz: 60,
            max_participants: 64,
            heartbeat_timeout_ms: 5_000,
            walk_enter_mps: LocomotionConfig::default().walk_enter_mps,
            walk_exit_mps: LocomotionConfig::default().walk_exit_mps,
            audio_ref_m: AudioConfig::default().audio_ref_m,
            audio_min_gain: AudioConfig::default().audio_min_gain,
        }
    }
}

impl RoomConfig {
    pub fn locomotion(&self) -> LocomotionConfig {
        LocomotionConfig {
            walk_enter_mps: self.walk_enter_mps,
            walk_exit_mps: self.walk_exit_mps,
        }
    }

    pub fn audio(&self) -> AudioConfig {
        AudioConfig {
            audio_ref_m: self.audio_ref_m,
            audio_min_gain: self.audio_min_gain,
        }
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        let bad = |msg: String| Err(ServerError::Config(format!("room {}: {msg}", self.id)));
        if self.deck_size < 1 {
            return bad("deck_size must be at least 1".into());
        }
        if !(1..=120).contains(&self.tick_hz) {
            return bad(format!("tick_hz {} outside [1, 120]", self.tick_hz));
        }
        if self.max_participants < 1 || self.max_participants > u16::MAX as usize {
            return bad(format!(
                "max_participants {} outside [1, 65535]",
                self.max_participants
            ));
        }
        if self.heartbeat_timeout_ms == 0 {
            return bad("heartbeat_timeout_ms must be positive".into());
        }
        if let Err(e) = self.locomotion().validate() {
            return bad(e.to_string());
        }
        let a = self.audio();
        if !(a.audio_ref_m > 0.0 && a.audio_ref_m.is_finite())
            || !(0.0..=1.0).contains(&a.audio_min_gain)
        {
            return bad("audio_ref_m must be positive and audio_min_gain in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_rooms", rename = "room")]
    pub rooms: Vec<RoomConfig>,
}

fn default_rooms() -> Vec<RoomConfig> {
    vec![RoomConfig::default()]
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            rooms: default_rooms(),
        }
    }
}

impl ServerConfig {
    /// Parse TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, ServerError> {
        let cfg: ServerConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ServerError::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| ServerError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ServerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        if self.rooms.is_empty() {
            return Err(ServerError::Config("no rooms defined".into()));
        }
        let mut ids: Vec<u32> = self.rooms.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(ServerError::Config("duplicate room id".into()));
        }
        self.rooms.iter().try_for_each(RoomConfig::validate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_rooms() {
        let cfg = ServerConfig::parse(
            r#"
            [[room]]
            id = 7
            deck_size = 10
            tick_hz = 30
            walk_enter_mps = 0.2

            [[room]]
            id = 8
            "#,
        )
        .unwrap();
        assert_eq!(cfg.rooms.len(), 2);
        assert_eq!(cfg.rooms[0].deck_size, 10);
        assert_eq!(cfg.rooms[0].walk_enter_mps, 0.2);
        assert_eq!(cfg.rooms[0].walk_exit_mps, 0.10);
        assert_eq!(cfg.rooms[1].deck_size, 40);
    }

    #[test]
    fn json_rooms() {
        let cfg = ServerConfig::parse(r#"{"room": [{"id": 3, "audio_min_gain": 0.1}]}"#).unwrap();
        assert_eq!(cfg.rooms[0].id, 3);
        assert_eq!(cfg.rooms[0].audio_min_gain, 0.1);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ServerConfig::parse("[[room]]\ndeck_size = 0").is_err());
        assert!(ServerConfig::parse("[[room]]\ntick_hz = 121").is_err());
        assert!(ServerConfig::parse("[[room]]\ntick_hz = 0").is_err());
        assert!(ServerConfig::parse("[[room]]\nid = 1\n[[room]]\nid = 1").is_err());
        assert!(ServerConfig::parse("[[room]]\nbogus = 1").is_err());
        assert!(ServerConfig::parse("[[room]]\nwalk_enter_mps = 0.05").is_err());
    }

    #[test]
    fn empty_file_gives_default_room() {
        assert_eq!(ServerConfig::parse("").unwrap(), ServerConfig::default());
    }
}
