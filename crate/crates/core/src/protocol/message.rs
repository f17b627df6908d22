//! Session messages and their wire framing. Header integers are big-endian
//! (network order); payloads carry their own little-endian formats.

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use super::ProtocolError;
use crate::codec::{Reader, Writer};

/// Largest frame accepted from the network, guarding allocation on a
/// corrupt length prefix.
pub const MAX_FRAME_BYTES: usize = 1 << 30;

const FIXED_BYTES: usize = 16 + 1 + 4 + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MsgType {
    EvalVector = 1,
    CandidateGradient = 2,
    ScoreResult = 3,
    Ack = 4,
    Error = 5,
    SessionOpen = 6,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Result<Self, ProtocolError> {
        Ok(match v {
            1 => Self::EvalVector,
            2 => Self::CandidateGradient,
            3 => Self::ScoreResult,
            4 => Self::Ack,
            5 => Self::Error,
            6 => Self::SessionOpen,
            other => return Err(ProtocolError::MalformedFrame(format!("unknown message type {other}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::EvalVector => "EvalVector",
            Self::CandidateGradient => "CandidateGradient",
            Self::ScoreResult => "ScoreResult",
            Self::Ack => "Ack",
            Self::Error => "Error",
            Self::SessionOpen => "SessionOpen",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SessionId(pub [u8; 16]);

impl SessionId {
    /// Deterministic id derived from a session seed.
    pub fn from_seed(seed: u64) -> Self {
        let digest = Sha256::new()
            .chain_update(b"tip-session")
            .chain_update(seed.to_le_bytes())
            .finalize();
        let mut id = [0u8; 16];
        id.copy_from_slice(&digest[..16]);
        Self(id)
    }

    pub fn hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionMessage {
    pub session_id: SessionId,
    pub msg_type: MsgType,
    /// Candidate index for CandidateGradient/ScoreResult; candidate count
    /// on the seller's closing Ack.
    pub sequence: u32,
    pub payload: Vec<u8>,
}

impl SessionMessage {
    pub fn new(session_id: SessionId, msg_type: MsgType, sequence: u32, payload: Vec<u8>) -> Self {
        Self {
            session_id,
            msg_type,
            sequence,
            payload,
        }
    }

    pub fn error(session_id: SessionId, sequence: u32, text: &str) -> Self {
        Self::new(session_id, MsgType::Error, sequence, text.as_bytes().to_vec())
    }

    pub fn error_text(&self) -> String {
        String::from_utf8_lossy(&self.payload).into_owned()
    }

    /// session_id | msg_type | sequence | payload_len | payload.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FIXED_BYTES + self.payload.len());
        out.extend_from_slice(&self.session_id.0);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.sequence.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        if bytes.len() < FIXED_BYTES {
            return Err(ProtocolError::MalformedFrame(format!(
                "{} byte message is shorter than its header",
                bytes.len()
            )));
        }
        let mut id = [0u8; 16];
        id.copy_from_slice(&bytes[..16]);
        let msg_type = MsgType::from_u8(bytes[16])?;
        let sequence = u32::from_be_bytes(bytes[17..21].try_into().unwrap());
        let len = u32::from_be_bytes(bytes[21..25].try_into().unwrap()) as usize;
        let payload = &bytes[FIXED_BYTES..];
        if payload.len() != len {
            return Err(ProtocolError::MalformedFrame(format!(
                "payload length {len} declared, {} present",
                payload.len()
            )));
        }
        Ok(Self::new(SessionId(id), msg_type, sequence, payload.to_vec()))
    }

    /// Encoded message behind a 4-byte big-endian length prefix.
    pub fn to_frame(&self) -> Vec<u8> {
        let body = self.encode();
        let mut out = Vec::with_capacity(4 + body.len());
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn frame_len(&self) -> usize {
        4 + FIXED_BYTES + self.payload.len()
    }
}

pub fn write_frame<W: Write>(w: &mut W, msg: &SessionMessage) -> Result<(), ProtocolError> {
    w.write_all(&msg.to_frame())?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<SessionMessage>, ProtocolError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(ProtocolError::MalformedFrame(format!(
            "frame of {len} bytes exceeds limit"
        )));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    SessionMessage::decode(&body).map(Some)
}

/// What the buyer publishes so that the other roles can fail fast on a
/// parameter or projection mismatch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionHeader {
    pub params_hash: [u8; 32],
    pub k: u32,
    pub projection_checksum: [u8; 32],
}

/// SessionOpen payload: header, public key, evaluation keys.
pub(crate) fn encode_open(header: &SessionHeader, public_key: &[u8], eval_keys: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(&header.params_hash)
        .u32(header.k)
        .bytes(&header.projection_checksum)
        .u64(public_key.len() as u64)
        .bytes(public_key)
        .u64(eval_keys.len() as u64)
        .bytes(eval_keys);
    w.finish()
}

pub(crate) fn decode_open(payload: &[u8]) -> Result<(SessionHeader, &[u8], &[u8]), ProtocolError> {
    let mut r = Reader::new(payload);
    let bad = |e: crate::codec::Truncated| ProtocolError::MalformedFrame(e.0);
    let mut params_hash = [0u8; 32];
    params_hash.copy_from_slice(r.take(32).map_err(bad)?);
    let k = r.u32().map_err(bad)?;
    let mut projection_checksum = [0u8; 32];
    projection_checksum.copy_from_slice(r.take(32).map_err(bad)?);
    let n = r.u64().map_err(bad)? as usize;
    let pk = r.take(n).map_err(bad)?;
    let n = r.u64().map_err(bad)? as usize;
    let ek = r.take(n).map_err(bad)?;
    r.finish().map_err(bad)?;
    Ok((
        SessionHeader {
            params_hash,
            k,
            projection_checksum,
        },
        pk,
        ek,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip_is_byte_identical() {
        let id = SessionId::from_seed(4);
        for (t, payload) in [
            (MsgType::EvalVector, vec![1u8, 2, 3]),
            (MsgType::CandidateGradient, vec![]),
            (MsgType::ScoreResult, vec![9; 300]),
            (MsgType::Ack, vec![]),
            (MsgType::Error, b"bad".to_vec()),
            (MsgType::SessionOpen, vec![0; 70]),
        ] {
            let m = SessionMessage::new(id, t, 7, payload);
            let frame = m.to_frame();
            let back = read_frame(&mut frame.as_slice()).unwrap().unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_frame(), frame);
            assert_eq!(frame.len(), m.frame_len());
        }
    }

    #[test]
    fn header_layout_is_big_endian() {
        let m = SessionMessage::new(SessionId([0xab; 16]), MsgType::ScoreResult, 0x0102_0304, vec![7, 8]);
        let b = m.encode();
        assert_eq!(&b[..16], &[0xab; 16]);
        assert_eq!(b[16], 3);
        assert_eq!(&b[17..21], &[1, 2, 3, 4]);
        assert_eq!(&b[21..25], &[0, 0, 0, 2]);
        assert_eq!(&b[25..], &[7, 8]);
        assert_eq!(&m.to_frame()[..4], &[0, 0, 0, 27]);
    }

    #[test]
    fn rejects_bad_frames() {
        let m = SessionMessage::new(SessionId([1; 16]), MsgType::Ack, 0, vec![1, 2, 3]);
        let mut b = m.encode();
        b.pop();
        assert!(matches!(
            SessionMessage::decode(&b),
            Err(ProtocolError::MalformedFrame(_))
        ));
        let mut b = m.encode();
        b[16] = 42;
        assert!(SessionMessage::decode(&b).is_err());
        assert!(SessionMessage::decode(&[0; 5]).is_err());
        assert!(read_frame(&mut [].as_slice()).unwrap().is_none());
    }

    #[test]
    fn open_payload_roundtrip() {
        let h = SessionHeader {
            params_hash: [3; 32],
            k: 384,
            projection_checksum: [5; 32],
        };
        let p = encode_open(&h, &[1, 2], &[3, 4, 5]);
        let (h2, pk, ek) = decode_open(&p).unwrap();
        assert_eq!((h2, pk, ek), (h, &[1u8, 2][..], &[3u8, 4, 5][..]));
        assert!(decode_open(&p[..p.len() - 1]).is_err());
    }

    #[test]
    fn session_ids_are_deterministic() {
        assert_eq!(SessionId::from_seed(1), SessionId::from_seed(1));
        assert_ne!(SessionId::from_seed(1), SessionId::from_seed(2));
        assert_eq!(SessionId::from_seed(1).hex().len(), 32);
    }
}
