use serde::{Deserialize, Serialize};

use crate::kinematics::Vec3;

/// Proximity audio parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    /// Distance inside which gain is 1.
    pub audio_ref_m: f64,
    /// Gain floor for distant speakers.
    pub audio_min_gain: f64,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            audio_ref_m: 1.0,
            audio_min_gain: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudioCue {
    pub gain: f64,
    /// Unit vector from listener to speaker.
    pub direction: Vec3,
    pub speaker_id: u32,
}

/// Gain and direction for one remote speaker, or `None` when muted.
///
/// Gain falls off as `ref / d` outside the reference radius, floored at the
/// configured minimum. A speaker at the listener's position is placed along
/// `listener_forward`.
pub fn audio_cue(
    listener_pos: Vec3,
    listener_forward: Vec3,
    speaker_pos: Vec3,
    speaker_muted: bool,
    speaker_id: u32,
    config: &AudioConfig,
) -> Option<AudioCue> {
    if speaker_muted {
        return None;
    }
    let offset = speaker_pos - listener_pos;
    let d = offset.length();
    let r = config.audio_ref_m;
    let gain = (r / d.max(r)).clamp(config.audio_min_gain, 1.0);
    let direction = offset
        .try_normalize(1e-9)
        .or_else(|| listener_forward.try_normalize(1e-9))
        .unwrap_or(Vec3::Z);
    Some(AudioCue {
        gain,
        direction,
        speaker_id,
    })
}
