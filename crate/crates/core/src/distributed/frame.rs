use std::fmt;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::model::value::real;
use crate::model::EventValue;

/// Frames larger than this are treated as corrupt.
pub const MAX_FRAME_BYTES: usize = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Command {
    Init,
    GetTn,
    Lambda,
    Propagate,
    Deltfcn,
    Clock,
    Exit,
    Ack,
    TnReply,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Init,
        Command::GetTn,
        Command::Lambda,
        Command::Propagate,
        Command::Deltfcn,
        Command::Clock,
        Command::Exit,
        Command::Ack,
        Command::TnReply,
    ];
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Init => "INIT",
            Command::GetTn => "GET_TN",
            Command::Lambda => "LAMBDA",
            Command::Propagate => "PROPAGATE",
            Command::Deltfcn => "DELTFCN",
            Command::Clock => "CLOCK",
            Command::Exit => "EXIT",
            Command::Ack => "ACK",
            Command::TnReply => "TN_REPLY",
        };
        f.write_str(s)
    }
}

/// One protocol message. On the wire: a 4-byte big-endian body length
/// followed by the body as UTF-8 JSON with the fields below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub command: Command,
    pub sender: String,
    /// Target port of a PROPAGATE frame.
    pub port: Option<String>,
    pub values: Vec<EventValue>,
    #[serde(with = "real::option")]
    pub time: Option<f64>,
}

impl WireFrame {
    pub fn new(command: Command, sender: impl Into<String>) -> Self {
        Self {
            command,
            sender: sender.into(),
            port: None,
            values: Vec::new(),
            time: None,
        }
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn with_port(mut self, port: impl Into<String>) -> Self {
        self.port = Some(port.into());
        self
    }

    pub fn with_values(mut self, values: Vec<EventValue>) -> Self {
        self.values = values;
        self
    }

    pub fn encode(&self) -> Vec<u8> {
        let body = serde_json::to_vec(self).expect("frames always serialize");
        let mut out = Vec::with_capacity(4 + body.len());
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }

    /// Decodes exactly one frame from `bytes`, which must hold nothing else.
    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        let mut cursor = bytes;
        let frame = read_frame(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(FrameError::Malformed {
                reason: format!("{} trailing bytes", cursor.len()),
                bytes: preview(cursor),
            });
        }
        Ok(frame)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed frame ({reason}): {bytes}")]
    Malformed { reason: String, bytes: String },
}

fn preview(bytes: &[u8]) -> String {
    const LIMIT: usize = 200;
    let shown = &bytes[..bytes.len().min(LIMIT)];
    let mut s = String::from_utf8_lossy(shown).into_owned();
    if bytes.len() > LIMIT {
        s.push_str(&format!("... ({} bytes)", bytes.len()));
    }
    format!("{s:?}")
}

pub fn write_frame<W: Write>(w: &mut W, frame: &WireFrame) -> io::Result<()> {
    w.write_all(&frame.encode())?;
    w.flush()
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<WireFrame, FrameError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Err(FrameError::Closed),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(FrameError::Malformed {
            reason: format!("declared length {len} exceeds limit"),
            bytes: preview(&(len as u32).to_be_bytes()),
        });
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Malformed {
            reason: format!("body shorter than declared {len} bytes"),
            bytes: String::new(),
        },
        _ => FrameError::Io(e),
    })?;
    let text = std::str::from_utf8(&body).map_err(|e| FrameError::Malformed {
        reason: e.to_string(),
        bytes: preview(&body),
    })?;
    serde_json::from_str(text).map_err(|e| FrameError::Malformed {
        reason: e.to_string(),
        bytes: preview(&body),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_length_prefixed_json() {
        let f = WireFrame::new(Command::Clock, "coordinator").with_time(2.5);
        let bytes = f.encode();
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        assert_eq!(len, bytes.len() - 4);
        let body: serde_json::Value = serde_json::from_slice(&bytes[4..]).unwrap();
        assert_eq!(body["command"], "CLOCK");
        assert_eq!(body["sender"], "coordinator");
        assert_eq!(body["time"], 2.5);
        assert!(body["port"].is_null());
        assert_eq!(WireFrame::decode(&bytes).unwrap(), f);
    }

    #[test]
    fn infinite_time_survives() {
        let f = WireFrame::new(Command::TnReply, "processor").with_time(f64::INFINITY);
        assert_eq!(WireFrame::decode(&f.encode()).unwrap().time, Some(f64::INFINITY));
    }

    #[test]
    fn garbage_is_reported_with_bytes() {
        let mut bytes = 5u32.to_be_bytes().to_vec();
        bytes.extend_from_slice(b"hello");
        match WireFrame::decode(&bytes) {
            Err(FrameError::Malformed { bytes, .. }) => assert!(bytes.contains("hello")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(WireFrame::decode(&[0, 0]), Err(FrameError::Closed)));
        let short = [0, 0, 0, 9, b'{'];
        assert!(matches!(WireFrame::decode(&short), Err(FrameError::Malformed { .. })));
    }
}
