//! Wire format shared by the server, the headless client and the browser UI.
//!
//! Every message is `[version: u8][length: u32 little endian][JSON payload]`
//! carried in one binary WebSocket message. The payload is an object with a
//! `type` tag; see `docs/protocol.md` for the field-by-field schema.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROTOCOL_VERSION: u8 = 1;
const HEADER_LEN: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("unsupported protocol version {found} (expected {PROTOCOL_VERSION})")]
    Version { found: u8 },
    #[error("truncated message: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{0} unexpected bytes after the payload")]
    Trailing(usize),
    #[error("payload: {0}")]
    Payload(String),
    #[error("non-finite value in field {0}")]
    NonFinite(&'static str),
}

/// Pressed state of the six control keys. Opposing keys of one joint cancel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeyStates {
    pub boom_up: bool,
    pub boom_down: bool,
    pub arm_up: bool,
    pub arm_down: bool,
    pub bucket_up: bool,
    pub bucket_down: bool,
}

impl KeyStates {
    pub const NAMES: [&'static str; 6] = ["boom_up", "boom_down", "arm_up", "arm_down", "bucket_up", "bucket_down"];

    pub fn from_array(k: [bool; 6]) -> Self {
        Self {
            boom_up: k[0],
            boom_down: k[1],
            arm_up: k[2],
            arm_down: k[3],
            bucket_up: k[4],
            bucket_down: k[5],
        }
    }

    pub fn to_array(self) -> [bool; 6] {
        [self.boom_up, self.boom_down, self.arm_up, self.arm_down, self.bucket_up, self.bucket_down]
    }

    /// Normalized action: each joint is +1, -1 or 0. The environment scales
    /// it by the joint's maximum speed, so a held key commands full speed.
    pub fn action(self) -> [f64; 3] {
        let axis = |plus: bool, minus: bool| f64::from(i8::from(plus) - i8::from(minus));
        [
            axis(self.boom_up, self.boom_down),
            axis(self.arm_up, self.arm_down),
            axis(self.bucket_up, self.bucket_down),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlMessage {
    pub key_states: KeyStates,
    /// Client clock in seconds; informational only.
    pub client_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Practice,
    Evaluation,
}

impl SessionMode {
    pub fn default_trials(self) -> usize {
        match self {
            SessionMode::Practice => 100,
            SessionMode::Evaluation => 10,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SessionMode::Practice => "practice",
            SessionMode::Evaluation => "evaluation",
        }
    }
}

impl std::str::FromStr for SessionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "practice" => Ok(SessionMode::Practice),
            "evaluation" => Ok(SessionMode::Evaluation),
            _ => Err(format!("unknown mode {s:?} (practice or evaluation)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConditions {
    pub proximity: bool,
    pub tilting: bool,
    pub goal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialInfo {
    pub mode: SessionMode,
    /// Zero-based index of the current trial.
    pub index: usize,
    pub total: usize,
}

/// Snapshot of the scene for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub frame_id: u64,
    pub sim_time: f64,
    pub step: usize,
    pub horizon: usize,
    pub joint_angles: [f64; 3],
    /// Boom foot, boom tip, bucket pivot and bucket tip (m).
    pub linkage: Vec<[f64; 2]>,
    pub bucket_polygon: Vec<[f64; 2]>,
    pub rock_polygon: Vec<[f64; 2]>,
    /// Logged for analysis. Operators only see the rock outline, so
    /// clients must not draw this point.
    pub rock_com: [f64; 2],
    pub rock_com_displayable: bool,
    pub terrain_x_origin: f64,
    pub terrain_spacing: f64,
    pub terrain_heights: Vec<f64>,
    pub goal: [f64; 2],
    pub goal_half_width: f64,
    pub theta: f64,
    pub phi: f64,
    pub tilt_limit: f64,
    pub conditions: FrameConditions,
    pub cumulative_reward: f64,
    /// Joint speeds applied on the last step (m/s).
    pub command: [f64; 3],
    pub trial: TrialInfo,
}

impl StateFrame {
    /// Name of the first non-finite numeric field.
    pub fn non_finite_field(&self) -> Option<&'static str> {
        let ok = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let pts = |ps: &[[f64; 2]]| ps.iter().all(|p| ok(p));
        if !ok(&[self.sim_time]) {
            Some("sim_time")
        } else if !ok(&self.joint_angles) {
            Some("joint_angles")
        } else if !pts(&self.linkage) {
            Some("linkage")
        } else if !pts(&self.bucket_polygon) {
            Some("bucket_polygon")
        } else if !pts(&self.rock_polygon) {
            Some("rock_polygon")
        } else if !ok(&self.rock_com) {
            Some("rock_com")
        } else if !ok(&[self.terrain_x_origin, self.terrain_spacing]) || !ok(&self.terrain_heights) {
            Some("terrain")
        } else if !ok(&self.goal) || !ok(&[self.goal_half_width]) {
            Some("goal")
        } else if !ok(&[self.theta, self.phi, self.tilt_limit]) {
            Some("tilt")
        } else if !ok(&[self.cumulative_reward]) {
            Some("cumulative_reward")
        } else if !ok(&self.command) {
            Some("command")
        } else {
            None
        }
    }
}

/// End-of-trial report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: TrialInfo,
    pub seed: u64,
    pub success: bool,
    pub cumulative_reward: f64,
    pub steps: usize,
    pub truncated: bool,
    /// Where the episode log was written, if recording is enabled.
    pub record_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub mode: SessionMode,
    pub completed: usize,
    pub successes: usize,
    pub aborted: usize,
    /// Successes over completed trials; aborted trials are excluded.
    pub success_rate: f64,
    pub cumulative_reward_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Physics advances at 60 Hz on the server clock.
    Realtime,
    /// Physics advances one step per control message; used by scripted
    /// clients that need reproducible episodes.
    Lockstep,
}

// Frames are almost all of the traffic, so boxing them would buy nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        protocol_version: u8,
        mode: SessionMode,
        trials: usize,
        clock: ClockMode,
        physics_hz: f64,
        frame_hz: f64,
        key_names: Vec<String>,
    },
    Frame(StateFrame),
    Result(TrialResult),
    Summary(SessionSummary),
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// Begin the next trial.
    Start,
    Control(ControlMessage),
    /// Abandon the running trial; it is excluded from the results.
    Abort,
}

fn frame_bytes(payload: Vec<u8>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.push(PROTOCOL_VERSION);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

fn unframe(bytes: &[u8]) -> Result<&[u8], ProtocolError> {
    if bytes.is_empty() {
        return Err(ProtocolError::Truncated {
            needed: HEADER_LEN,
            have: 0,
        });
    }
    if bytes[0] != PROTOCOL_VERSION {
        return Err(ProtocolError::Version { found: bytes[0] });
    }
    if bytes.len() < HEADER_LEN {
        return Err(ProtocolError::Truncated {
            needed: HEADER_LEN,
            have: bytes.len(),
        });
    }
    let len = u32::from_le_bytes(bytes[1..HEADER_LEN].try_into().expect("four bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() < len {
        return Err(ProtocolError::Truncated {
            needed: HEADER_LEN + len,
            have: bytes.len(),
        });
    }
    if body.len() > len {
        return Err(ProtocolError::Trailing(body.len() - len));
    }
    Ok(body)
}

pub fn encode_server(msg: &ServerMessage) -> Result<Vec<u8>, ProtocolError> {
    if let ServerMessage::Frame(f) = msg {
        if let Some(field) = f.non_finite_field() {
            return Err(ProtocolError::NonFinite(field));
        }
    }
    let json = serde_json::to_vec(msg).map_err(|e| ProtocolError::Payload(e.to_string()))?;
    Ok(frame_bytes(json))
}

pub fn decode_server(bytes: &[u8]) -> Result<ServerMessage, ProtocolError> {
    serde_json::from_slice(unframe(bytes)?).map_err(|e| ProtocolError::Payload(e.to_string()))
}

pub fn encode_frame(frame: &StateFrame) -> Result<Vec<u8>, ProtocolError> {
    encode_server(&ServerMessage::Frame(frame.clone()))
}

pub fn encode_client(msg: &ClientMessage) -> Vec<u8> {
    frame_bytes(serde_json::to_vec(msg).expect("client messages serialize"))
}

pub fn decode_client(bytes: &[u8]) -> Result<ClientMessage, ProtocolError> {
    serde_json::from_slice(unframe(bytes)?).map_err(|e| ProtocolError::Payload(e.to_string()))
}

/// Decodes a control message; any other client message is an error.
pub fn decode_control(bytes: &[u8]) -> Result<ControlMessage, ProtocolError> {
    match decode_client(bytes)? {
        ClientMessage::Control(c) => Ok(c),
        other => Err(ProtocolError::Payload(format!("expected a control message, got {other:?}"))),
    }
}
