//! Datagram wire formats.
//!
//! Probe packets carry a fixed-width big-endian 16-byte header (8-byte
//! sequence number, 8-byte monotonic send timestamp in nanoseconds)
//! followed by optional padding. The echo side returns the header
//! unchanged and drops the padding, so the reply stays negligible.
//!
//! Stream chunks carry a 16-byte big-endian header. Frames larger than one
//! datagram are split into `chunk_count` chunks; a frame counts as
//! delivered when every chunk has arrived.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    #[error("datagram too short: {got} bytes, need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("stream chunk index {index} out of range for chunk count {count}")]
    ChunkOutOfRange { index: u16, count: u16 },
}

pub const PROBE_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeHeader {
    pub seq: u64,
    pub send_timestamp_ns: u64,
}

impl ProbeHeader {
    pub fn encode(&self, padding_bytes: usize) -> Vec<u8> {
        let mut buf = Vec::with_capacity(PROBE_HEADER_LEN + padding_bytes);
        buf.extend_from_slice(&self.seq.to_be_bytes());
        buf.extend_from_slice(&self.send_timestamp_ns.to_be_bytes());
        buf.resize(PROBE_HEADER_LEN + padding_bytes, 0);
        buf
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        if buf.len() < PROBE_HEADER_LEN {
            return Err(WireError::TooShort {
                got: buf.len(),
                need: PROBE_HEADER_LEN,
            });
        }
        Ok(Self {
            seq: u64::from_be_bytes(buf[0..8].try_into().unwrap()),
            send_timestamp_ns: u64::from_be_bytes(buf[8..16].try_into().unwrap()),
        })
    }

    /// The echo reply: header only, padding stripped.
    pub fn echo_reply(buf: &[u8]) -> Result<[u8; PROBE_HEADER_LEN], WireError> {
        if buf.len() < PROBE_HEADER_LEN {
            return Err(WireError::TooShort {
                got: buf.len(),
                need: PROBE_HEADER_LEN,
            });
        }
        Ok(buf[..PROBE_HEADER_LEN].try_into().unwrap())
    }
}

pub const CHUNK_HEADER_LEN: usize = 16;
/// Payload bytes per stream chunk; frames are split at this size.
pub const CHUNK_PAYLOAD_BYTES: usize = 32 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkHeader {
    pub stream_id: u16,
    pub frame_seq: u64,
    pub chunk_index: u16,
    pub chunk_count: u16,
    pub payload_len: u16,
}

impl ChunkHeader {
    pub fn encode(&self) -> [u8; CHUNK_HEADER_LEN] {
        let mut buf = [0u8; CHUNK_HEADER_LEN];
        buf[0..2].copy_from_slice(&self.stream_id.to_be_bytes());
        buf[2..10].copy_from_slice(&self.frame_seq.to_be_bytes());
        buf[10..12].copy_from_slice(&self.chunk_index.to_be_bytes());
        buf[12..14].copy_from_slice(&self.chunk_count.to_be_bytes());
        buf[14..16].copy_from_slice(&self.payload_len.to_be_bytes());
        buf
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        if buf.len() < CHUNK_HEADER_LEN {
            return Err(WireError::TooShort {
                got: buf.len(),
                need: CHUNK_HEADER_LEN,
            });
        }
        let header = Self {
            stream_id: u16::from_be_bytes(buf[0..2].try_into().unwrap()),
            frame_seq: u64::from_be_bytes(buf[2..10].try_into().unwrap()),
            chunk_index: u16::from_be_bytes(buf[10..12].try_into().unwrap()),
            chunk_count: u16::from_be_bytes(buf[12..14].try_into().unwrap()),
            payload_len: u16::from_be_bytes(buf[14..16].try_into().unwrap()),
        };
        if header.chunk_index >= header.chunk_count.max(1) {
            return Err(WireError::ChunkOutOfRange {
                index: header.chunk_index,
                count: header.chunk_count,
            });
        }
        Ok(header)
    }
}

/// Control datagram asking a stream sink for its delivery report.
pub const REPORT_REQUEST: &[u8] = b"FLNK-REPORT?";
