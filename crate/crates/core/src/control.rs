//! Servo command generation for the three trigger modes.
//!
//! Commands are servo velocity set-points where [`NEUTRAL`] keeps the motor
//! stationary. In vision mode the close command is issued once the target has
//! stayed closer than `tau_grasp` for the dwell time; after that the command
//! is latched until an explicit release.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stationary servo command.
pub const NEUTRAL: i32 = 90;

/// Open interval of admissible trigger distances in mm.
pub const TAU_RANGE_MM: (f64, f64) = (200.0, 10000.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlConfig {
    #[serde(rename = "tau_grasp_mm")]
    pub tau_grasp: f64,
    pub v_close: i32,
    #[serde(rename = "dwell_s")]
    pub dwell: f64,
    #[serde(rename = "frame_period_s")]
    pub frame_period: f64,
    pub motor_enabled: bool,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            tau_grasp: 400.0,
            v_close: 110,
            dwell: 3.0,
            frame_period: 0.1,
            motor_enabled: true,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = TAU_RANGE_MM;
        if !(self.tau_grasp > lo && self.tau_grasp < hi) {
            return Err(Error::param(
                "control.tau_grasp_mm",
                format!("{} outside the valid range ({lo}, {hi}) mm", self.tau_grasp),
            ));
        }
        if self.v_close == NEUTRAL {
            return Err(Error::param(
                "control.v_close",
                format!("must differ from the neutral command {NEUTRAL}"),
            ));
        }
        if !(self.dwell >= 0.0 && self.dwell.is_finite()) {
            return Err(Error::param(
                "control.dwell_s",
                format!("must be >= 0, got {}", self.dwell),
            ));
        }
        if !(self.frame_period > 0.0 && self.frame_period.is_finite()) {
            return Err(Error::param(
                "control.frame_period_s",
                format!("must be > 0, got {}", self.frame_period),
            ));
        }
        Ok(())
    }

    /// Reverse command: mirrors `v_close` about neutral.
    pub fn release_command(&self) -> i32 {
        NEUTRAL - (self.v_close - NEUTRAL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Dwelling,
    Closing,
    Holding,
    Releasing,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Idle => "idle",
            Phase::Dwelling => "dwelling",
            Phase::Closing => "closing",
            Phase::Holding => "holding",
            Phase::Releasing => "releasing",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub phase: Phase,
    /// Consecutive in-range frames counted toward the dwell.
    pub dwell_frames: u32,
    /// `dwell_frames · frame_period`, capped at the configured dwell.
    pub dwell_elapsed: f64,
    pub last_command: i32,
    pub motor_enabled: bool,
}

impl ControllerState {
    pub fn new(motor_enabled: bool) -> Self {
        Self {
            phase: Phase::Idle,
            dwell_frames: 0,
            dwell_elapsed: 0.0,
            last_command: NEUTRAL,
            motor_enabled,
        }
    }

    fn with(self, phase: Phase, command: i32) -> (Self, i32) {
        let mut next = self;
        next.phase = phase;
        next.last_command = command;
        if !matches!(phase, Phase::Dwelling) {
            next.dwell_frames = 0;
            next.dwell_elapsed = 0.0;
        }
        (next, command)
    }
}

impl Default for ControllerState {
    fn default() -> Self {
        Self::new(true)
    }
}

/// Advances the vision-mode controller by one frame. `distance` is the
/// camera-to-target distance in mm, `None` when no target was found.
pub fn step_vision(
    state: ControllerState,
    distance: Option<f64>,
    cfg: &ControlConfig,
) -> (ControllerState, i32) {
    if !state.motor_enabled {
        return state.with(Phase::Idle, NEUTRAL);
    }
    let in_range = distance.is_some_and(|d| d < cfg.tau_grasp);
    match state.phase {
        Phase::Closing => state.with(Phase::Closing, cfg.v_close),
        Phase::Holding => state.with(Phase::Holding, NEUTRAL),
        Phase::Releasing if in_range => state.with(Phase::Releasing, cfg.release_command()),
        Phase::Releasing => state.with(Phase::Idle, NEUTRAL),
        Phase::Idle | Phase::Dwelling if in_range => {
            let frames = state.dwell_frames + 1;
            let elapsed = frames as f64 * cfg.frame_period;
            // tolerance absorbs accumulated rounding of frames × period
            if elapsed >= cfg.dwell - 1e-9 {
                state.with(Phase::Closing, cfg.v_close)
            } else {
                let mut next = state;
                next.dwell_frames = frames;
                next.dwell_elapsed = elapsed.min(cfg.dwell);
                next.with(Phase::Dwelling, NEUTRAL)
            }
        }
        Phase::Idle | Phase::Dwelling => state.with(Phase::Idle, NEUTRAL),
    }
}

/// Stops the motor after closing while keeping the grasp latched.
pub fn stop(state: ControllerState) -> (ControllerState, i32) {
    match state.phase {
        Phase::Closing | Phase::Holding => state.with(Phase::Holding, NEUTRAL),
        _ => (state, state.last_command),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ButtonEvent {
    GraspPressed,
    ReleasePressed,
    None,
}

/// Push-button mode; also the release path for vision mode.
pub fn step_button(
    event: ButtonEvent,
    state: ControllerState,
    cfg: &ControlConfig,
) -> (ControllerState, i32) {
    match event {
        ButtonEvent::GraspPressed => state.with(Phase::Closing, cfg.v_close),
        ButtonEvent::ReleasePressed => state.with(Phase::Releasing, cfg.release_command()),
        ButtonEvent::None => {
            let command = match state.phase {
                Phase::Closing => cfg.v_close,
                Phase::Releasing => cfg.release_command(),
                Phase::Idle | Phase::Dwelling | Phase::Holding => NEUTRAL,
            };
            (
                ControllerState {
                    last_command: command,
                    ..state
                },
                command,
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceTriggerConfig {
    /// ADC counts above baseline that are ignored.
    pub dead_zone: i64,
    /// Resting ADC reading.
    pub baseline: i64,
}

impl Default for ForceTriggerConfig {
    fn default() -> Self {
        Self {
            dead_zone: 5,
            baseline: 0,
        }
    }
}

/// True when the reading exceeds the baseline by more than the dead zone.
pub fn step_force(reading: i64, cfg: &ForceTriggerConfig) -> bool {
    reading - cfg.baseline > cfg.dead_zone
}
