//! Locomotion state and blend weights for avatars whose legs are not tracked.
//!
//! All functions are pure; the caller owns the state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Vec3;
use crate::protocol::Locomotion;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnimationError {
    #[error("intensity {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("timestamps not increasing: {prev_ms} ms then {next_ms} ms")]
    NonMonotonicTime { prev_ms: u64, next_ms: u64 },
    #[error("invalid locomotion config: {0}")]
    InvalidConfig(String),
}

/// Speed thresholds for the Idle/Walk state machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocomotionConfig {
    /// Idle becomes Walk above this horizontal speed.
    pub walk_enter_mps: f64,
    /// Walk becomes Idle below this horizontal speed.
    pub walk_exit_mps: f64,
}

impl Default for LocomotionConfig {
    fn default() -> Self {
        Self {
            walk_enter_mps: 0.15,
            walk_exit_mps: 0.10,
        }
    }
}

impl LocomotionConfig {
    pub fn validate(&self) -> Result<(), AnimationError> {
        let (enter, exit) = (self.walk_enter_mps, self.walk_exit_mps);
        if !(enter.is_finite() && exit.is_finite()) || exit < 0.0 || exit > enter {
            return Err(AnimationError::InvalidConfig(format!(
                "need 0 <= walk_exit_mps <= walk_enter_mps, got exit {exit} enter {enter}"
            )));
        }
        Ok(())
    }

    /// One step of the hysteresis machine.
    ///
    /// Speeds inside `[walk_exit_mps, walk_enter_mps]` leave the state
    /// unchanged. Negative or NaN speeds violate the precondition and are
    /// treated as standing still.
    pub fn update(
        &self,
        prev: LocomotionState,
        horizontal_speed: f64,
        now_ms: u64,
    ) -> LocomotionState {
        debug_assert!(
            !(horizontal_speed < 0.0),
            "negative speed {horizontal_speed}"
        );
        let speed = if horizontal_speed >= 0.0 {
            horizontal_speed
        } else {
            0.0
        };
        let next = match prev.state {
            Locomotion::Idle if speed > self.walk_enter_mps => Locomotion::Walk,
            Locomotion::Walk if speed < self.walk_exit_mps => Locomotion::Idle,
            s => s,
        };
        if next == prev.state {
            prev
        } else {
            LocomotionState {
                state: next,
                entered_at_ms: now_ms,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocomotionState {
    pub state: Locomotion,
    pub entered_at_ms: u64,
}

impl Default for LocomotionState {
    fn default() -> Self {
        Self {
            state: Locomotion::Idle,
            entered_at_ms: 0,
        }
    }
}

/// [`LocomotionConfig::update`] with the default thresholds.
pub fn update_locomotion(
    prev: LocomotionState,
    horizontal_speed: f64,
    now_ms: u64,
) -> LocomotionState {
    LocomotionConfig::default().update(prev, horizontal_speed, now_ms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendWeights {
    pub idle: f64,
    pub walk: f64,
}

pub fn blend_from_intensity(intensity: f64) -> Result<BlendWeights, AnimationError> {
    if !(0.0..=1.0).contains(&intensity) {
        return Err(AnimationError::OutOfRange(intensity));
    }
    Ok(BlendWeights {
        idle: 1.0 - intensity,
        walk: intensity,
    })
}

/// A position sample with its capture time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timestamped {
    pub t_ms: u64,
    pub position: Vec3,
}

/// Horizontal speed between two samples, m/s. Elapsed time is floored at 1 ms.
pub fn speed_estimate(a: Timestamped, b: Timestamped) -> Result<f64, AnimationError> {
    if b.t_ms <= a.t_ms {
        return Err(AnimationError::NonMonotonicTime {
            prev_ms: a.t_ms,
            next_ms: b.t_ms,
        });
    }
    let dt = ((b.t_ms - a.t_ms) as f64 / 1000.0).max(0.001);
    Ok((b.position - a.position).horizontal().length() / dt)
}

/// Window over which key-held duty cycle is measured.
pub const INTENSITY_WINDOW_MS: u64 = 250;

/// Movement intensity for keyboard users: the fraction of the last
/// [`INTENSITY_WINDOW_MS`] during which a movement key was held.
#[derive(Debug, Clone, Default)]
pub struct IntensityMeter {
    /// Key state changes as (time, held), oldest first.
    edges: Vec<(u64, bool)>,
}

impl IntensityMeter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record the key state at `t_ms`. Times must not go backwards.
    pub fn record(&mut self, t_ms: u64, held: bool) {
        if let Some(&(last_t, last_held)) = self.edges.last() {
            debug_assert!(t_ms >= last_t);
            if last_held == held {
                return;
            }
        }
        self.edges.push((t_ms, held));
    }

    /// Duty cycle over `(now - window, now]`, in [0, 1].
    pub fn intensity(&mut self, now_ms: u64) -> f64 {
        let start = now_ms.saturating_sub(INTENSITY_WINDOW_MS);
        // Keep the newest edge at or before the window start; it sets the initial state.
        let keep_from = self
            .edges
            .iter()
            .rposition(|&(t, _)| t <= start)
            .unwrap_or(0);
        self.edges.drain(..keep_from);

        let mut held_ms = 0u64;
        for (i, &(t, held)) in self.edges.iter().enumerate() {
            if !held {
                continue;
            }
            let from = t.max(start);
            let to = self
                .edges
                .get(i + 1)
                .map_or(now_ms, |&(next, _)| next)
                .min(now_ms);
            held_ms += to.saturating_sub(from);
        }
        let window = (now_ms - start).max(1);
        (held_ms as f64 / window as f64).clamp(0.0, 1.0)
    }
}
