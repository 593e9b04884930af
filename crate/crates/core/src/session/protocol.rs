//! Wire messages: one JSON object per line in each direction. Every message
//! carries the session id and a per-sender, strictly increasing sequence number.

use serde::{Deserialize, Serialize};

use super::{Ack, ControlCommand, SessionState, TelemetryRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    pub seq: u64,
    pub session_id: String,
    pub command: ControlCommand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    pub seq: u64,
    pub session_id: String,
    #[serde(flatten)]
    pub body: ServerBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerBody {
    Telemetry {
        record: TelemetryRecord,
    },
    State {
        state: SessionState,
        laser_on: bool,
        scenario: String,
    },
    Ack {
        command_seq: u64,
        ack: Ack,
    },
    Error {
        command_seq: Option<u64>,
        code: String,
        message: String,
    },
}

macro_rules! line_codec {
    ($t:ty) => {
        impl $t {
            pub fn to_line(&self) -> String {
                serde_json::to_string(self).expect("wire messages always serialize")
            }

            pub fn parse_line(line: &str) -> Result<Self> {
                serde_json::from_str(line.trim_end()).map_err(|e| Error::Parse {
                    line: 1,
                    message: e.to_string(),
                })
            }
        }
    };
}

line_codec!(ClientMessage);
line_codec!(ServerMessage);

impl ServerBody {
    /// Machine-readable code for a rejected command.
    pub fn from_error(command_seq: Option<u64>, err: &Error) -> Self {
        let code = match err {
            Error::State { code, .. } => (*code).to_string(),
            Error::NotFound(_) => "not_found".into(),
            Error::Parse { .. } => "bad_message".into(),
            _ => "invalid".into(),
        };
        ServerBody::Error {
            command_seq,
            code,
            message: err.to_string(),
        }
    }
}
