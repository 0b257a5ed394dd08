//! Length-prefixed frames: `"OSIM"`, version byte, message type byte,
//! big-endian u32 payload length, then that many bytes of UTF-8 JSON.

use std::fmt;
use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"OSIM";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
/// Frames larger than this are rejected before any allocation.
pub const MAX_PAYLOAD: u32 = 256 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgType {
    RegisterWorker = 0x01,
    AssignAgents = 0x02,
    EventBatch = 0x03,
    StateSync = 0x04,
    Ack = 0x05,
    Heartbeat = 0x06,
    Shutdown = 0x07,
    MetricsReport = 0x08,
}

impl MsgType {
    pub const ALL: [MsgType; 8] = [
        MsgType::RegisterWorker,
        MsgType::AssignAgents,
        MsgType::EventBatch,
        MsgType::StateSync,
        MsgType::Ack,
        MsgType::Heartbeat,
        MsgType::Shutdown,
        MsgType::MetricsReport,
    ];

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == b)
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MsgType::RegisterWorker => "REGISTER_WORKER",
            MsgType::AssignAgents => "ASSIGN_AGENTS",
            MsgType::EventBatch => "EVENT_BATCH",
            MsgType::StateSync => "STATE_SYNC",
            MsgType::Ack => "ACK",
            MsgType::Heartbeat => "HEARTBEAT",
            MsgType::Shutdown => "SHUTDOWN",
            MsgType::MetricsReport => "METRICS_REPORT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireFrame {
    pub msg_type: MsgType,
    pub payload: String,
}

impl WireFrame {
    pub fn new(msg_type: MsgType, payload: impl Into<String>) -> Self {
        WireFrame { msg_type, payload: payload.into() }
    }

    pub fn empty(msg_type: MsgType) -> Self {
        Self::new(msg_type, String::new())
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type 0x{0:02x}")]
    UnknownMsgType(u8),
    #[error("truncated frame: have {have} bytes, need {need}")]
    Truncated { have: usize, need: usize },
    #[error("payload of {0} bytes exceeds the frame limit")]
    TooLarge(u32),
    #[error("payload is not UTF-8")]
    InvalidUtf8,
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_frame(frame: &WireFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + frame.payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(frame.msg_type as u8);
    out.extend_from_slice(&(frame.payload.len() as u32).to_be_bytes());
    out.extend_from_slice(frame.payload.as_bytes());
    out
}

/// Validate a header and return the message type and payload length.
fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(MsgType, u32), WireError> {
    let magic = [h[0], h[1], h[2], h[3]];
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    if h[4] != VERSION {
        return Err(WireError::UnsupportedVersion(h[4]));
    }
    let msg_type = MsgType::from_byte(h[5]).ok_or(WireError::UnknownMsgType(h[5]))?;
    let len = u32::from_be_bytes([h[6], h[7], h[8], h[9]]);
    if len > MAX_PAYLOAD {
        return Err(WireError::TooLarge(len));
    }
    Ok((msg_type, len))
}

/// Decode one frame from the front of `bytes`, returning it and the bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(WireFrame, usize), WireError> {
    let header: &[u8; HEADER_LEN] = bytes
        .get(..HEADER_LEN)
        .and_then(|h| h.try_into().ok())
        .ok_or(WireError::Truncated { have: bytes.len(), need: HEADER_LEN })?;
    let (msg_type, len) = parse_header(header)?;
    let total = HEADER_LEN + len as usize;
    let body = bytes.get(HEADER_LEN..total).ok_or(WireError::Truncated { have: bytes.len(), need: total })?;
    let payload = std::str::from_utf8(body).map_err(|_| WireError::InvalidUtf8)?.to_string();
    Ok((WireFrame { msg_type, payload }, total))
}

/// Incremental decoder for byte streams that arrive in arbitrary pieces.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// The next complete frame, `Ok(None)` if more bytes are needed.
    /// Header errors are reported as soon as the header is complete.
    pub fn next_frame(&mut self) -> Result<Option<WireFrame>, WireError> {
        let Some(header) = self.buf.get(..HEADER_LEN) else {
            if self.buf.len() >= 4 && self.buf[..4] != MAGIC {
                return Err(WireError::BadMagic([self.buf[0], self.buf[1], self.buf[2], self.buf[3]]));
            }
            return Ok(None);
        };
        let header: &[u8; HEADER_LEN] = header.try_into().expect("sliced to header length");
        let (_, len) = parse_header(header)?;
        if self.buf.len() < HEADER_LEN + len as usize {
            return Ok(None);
        }
        let (frame, used) = decode_frame(&self.buf)?;
        self.buf.drain(..used);
        Ok(Some(frame))
    }
}

pub fn write_frame(w: &mut impl Write, frame: &WireFrame) -> Result<(), WireError> {
    w.write_all(&encode_frame(frame))?;
    w.flush()?;
    Ok(())
}

/// Blocking read of exactly one frame.
pub fn read_frame(r: &mut impl Read) -> Result<WireFrame, WireError> {
    let mut header = [0u8; HEADER_LEN];
    match r.read_exact(&mut header) {
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Err(WireError::Closed),
        other => other?,
    }
    let (msg_type, len) = parse_header(&header)?;
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => WireError::Truncated { have: HEADER_LEN, need: HEADER_LEN + len as usize },
        _ => WireError::Io(e),
    })?;
    let payload = String::from_utf8(body).map_err(|_| WireError::InvalidUtf8)?;
    Ok(WireFrame { msg_type, payload })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_heartbeat_is_ten_bytes() {
        let bytes = encode_frame(&WireFrame::empty(MsgType::Heartbeat));
        assert_eq!(bytes, [b'O', b'S', b'I', b'M', 1, 0x06, 0, 0, 0, 0]);
        assert_eq!(decode_frame(&bytes).unwrap(), (WireFrame::empty(MsgType::Heartbeat), 10));
    }

    #[test]
    fn header_errors() {
        let mut bytes = encode_frame(&WireFrame::new(MsgType::Ack, "{}"));
        assert!(matches!(decode_frame(&bytes[..11]), Err(WireError::Truncated { have: 11, need: 12 })));
        bytes[5] = 0x09;
        assert!(matches!(decode_frame(&bytes), Err(WireError::UnknownMsgType(9))));
        bytes[4] = 2;
        assert!(matches!(decode_frame(&bytes), Err(WireError::UnsupportedVersion(2))));
        bytes[0] = b'X';
        assert!(matches!(decode_frame(&bytes), Err(WireError::BadMagic(_))));
    }

    #[test]
    fn streaming_decoder_handles_byte_at_a_time() {
        let frames = [WireFrame::new(MsgType::EventBatch, "[1,2,3]"), WireFrame::empty(MsgType::Shutdown)];
        let bytes: Vec<u8> = frames.iter().flat_map(encode_frame).collect();
        let mut dec = FrameDecoder::new();
        let mut out = Vec::new();
        for b in bytes {
            dec.push(&[b]);
            while let Some(f) = dec.next_frame().unwrap() {
                out.push(f);
            }
        }
        assert_eq!(out, frames);
        assert_eq!(dec.buffered(), 0);
    }

    #[test]
    fn read_frame_reports_closed_and_truncated() {
        assert!(matches!(read_frame(&mut &[][..]), Err(WireError::Closed)));
        let bytes = encode_frame(&WireFrame::new(MsgType::Ack, "abc"));
        assert!(matches!(read_frame(&mut &bytes[..12]), Err(WireError::Truncated { .. })));
        assert_eq!(read_frame(&mut &bytes[..]).unwrap().payload, "abc");
    }
}
