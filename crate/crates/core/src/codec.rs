//! Bit-exact ES1090 extended squitter frames.
//!
//! Layout (112 bits, MSB first):
//!
//! ```text
//! | DF (5) | CA (3) | ICAO (24) | payload (56) | PI (24) |
//! ```
//!
//! The payload is either a position report (`type | T | F | alt | lat | lon`)
//! or a security payload (`type | chunk id | content`) when the type code is
//! 25 (verification digest) or 32 (verification key).

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Total frame length in bytes.
pub const FRAME_LEN: usize = 14;
/// Bytes covered by the parity field.
pub const PARITY_INPUT_LEN: usize = 11;
/// Downlink format used for ADS-B extended squitter.
pub const DF_EXTENDED_SQUITTER: u8 = 17;
/// Type code of a verification digest chunk.
pub const TYPE_VERIFICATION_DIGEST: u8 = 25;
/// Type code of a verification key chunk.
pub const TYPE_VERIFICATION_KEY: u8 = 32;
/// Width of the chunk content carried by a security payload.
pub const CHUNK_CONTENT_BITS: u32 = 46;

const PAYLOAD_BITS: u32 = 56;
const PAYLOAD_MASK: u64 = (1 << PAYLOAD_BITS) - 1;
const CONTENT_MASK: u64 = (1 << CHUNK_CONTENT_BITS) - 1;

/// Mode-S generator polynomial (x^24 term implicit).
const MODE_S_POLY: u32 = 0xFF_F409;

const CRC_TABLE: [u32; 256] = build_crc_table();

const fn build_crc_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u32) << 16;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x80_0000 != 0 {
                (crc << 1) ^ MODE_S_POLY
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc & 0xFF_FFFF;
        i += 1;
    }
    table
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("field `{field}` value {value:#x} does not fit in {bits} bits")]
    FieldOverflow {
        field: &'static str,
        value: u64,
        bits: u32,
    },
    #[error("type code {0} is not a security payload")]
    NotSecurityPayload(u8),
    #[error("type code {0} is reserved for security payloads")]
    ReservedTypeCode(u8),
    #[error("invalid hex frame: {0}")]
    Hex(String),
}

/// CRC-24 parity over the first 88 bits (DF through payload) of a frame.
pub fn compute_pi(header_and_payload: &[u8]) -> Result<u32, CodecError> {
    if header_and_payload.len() != PARITY_INPUT_LEN {
        return Err(CodecError::Length {
            expected: PARITY_INPUT_LEN,
            actual: header_and_payload.len(),
        });
    }
    let crc = header_and_payload.iter().fold(0u32, |crc, &byte| {
        let idx = ((crc >> 16) as u8 ^ byte) as usize;
        ((crc << 8) ^ CRC_TABLE[idx]) & 0xFF_FFFF
    });
    Ok(crc)
}

/// An encoded 112-bit frame as it travels over the air and through feeds.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RawFrame(pub [u8; FRAME_LEN]);

impl RawFrame {
    pub fn as_bytes(&self) -> &[u8; FRAME_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        let mut out = String::with_capacity(FRAME_LEN * 2);
        for b in self.0 {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    pub fn from_hex(s: &str) -> Result<Self, CodecError> {
        let s = s.trim();
        if s.len() != FRAME_LEN * 2 {
            return Err(CodecError::Hex(format!(
                "expected {} hex chars, got {}",
                FRAME_LEN * 2,
                s.len()
            )));
        }
        let mut out = [0u8; FRAME_LEN];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
                .map_err(|_| CodecError::Hex(format!("bad hex digit near offset {}", 2 * i)))?;
        }
        Ok(RawFrame(out))
    }

    pub fn icao(&self) -> u32 {
        u32::from_be_bytes([0, self.0[1], self.0[2], self.0[3]])
    }

    pub fn payload(&self) -> u64 {
        let mut buf = [0u8; 8];
        buf[1..].copy_from_slice(&self.0[4..11]);
        u64::from_be_bytes(buf)
    }

    pub fn type_code(&self) -> u8 {
        self.0[4]
    }
}

impl fmt::Debug for RawFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RawFrame({})", self.to_hex())
    }
}

impl fmt::Display for RawFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for RawFrame {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RawFrame::from_hex(s)
    }
}

/// Field view of an extended squitter frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Es1090Frame {
    pub df: u8,
    pub capability: u8,
    pub icao: u32,
    pub payload: u64,
    pub pi: u32,
}

impl Es1090Frame {
    /// Builds a DF17 frame with a freshly computed parity field.
    pub fn extended_squitter(capability: u8, icao: u32, payload: u64) -> Result<Self, CodecError> {
        let mut frame = Es1090Frame {
            df: DF_EXTENDED_SQUITTER,
            capability,
            icao,
            payload,
            pi: 0,
        };
        let raw = encode_frame(&frame)?;
        frame.pi = decode_frame(raw.as_bytes())?.frame.pi;
        Ok(frame)
    }
}

fn check_width(field: &'static str, value: u64, bits: u32) -> Result<(), CodecError> {
    if bits < 64 && value >> bits != 0 {
        return Err(CodecError::FieldOverflow { field, value, bits });
    }
    Ok(())
}

/// Packs a frame MSB-first. The `pi` field of the input is ignored and
/// recomputed from the first 88 bits.
pub fn encode_frame(frame: &Es1090Frame) -> Result<RawFrame, CodecError> {
    check_width("df", frame.df.into(), 5)?;
    check_width("capability", frame.capability.into(), 3)?;
    check_width("icao", frame.icao.into(), 24)?;
    check_width("payload", frame.payload, PAYLOAD_BITS)?;

    let mut out = [0u8; FRAME_LEN];
    out[0] = (frame.df << 3) | frame.capability;
    out[1..4].copy_from_slice(&frame.icao.to_be_bytes()[1..]);
    out[4..11].copy_from_slice(&frame.payload.to_be_bytes()[1..]);
    let pi = compute_pi(&out[..PARITY_INPUT_LEN])?;
    out[11..].copy_from_slice(&pi.to_be_bytes()[1..]);
    Ok(RawFrame(out))
}

/// Result of decoding: the fields as received, plus the parity verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodedFrame {
    pub frame: Es1090Frame,
    pub parity_ok: bool,
}

/// Extracts the fields of a 14-byte frame. Parity failures are reported
/// through [`DecodedFrame::parity_ok`], not as an error.
pub fn decode_frame(bytes: &[u8]) -> Result<DecodedFrame, CodecError> {
    if bytes.len() != FRAME_LEN {
        return Err(CodecError::Length {
            expected: FRAME_LEN,
            actual: bytes.len(),
        });
    }
    let raw = RawFrame(bytes.try_into().expect("length checked"));
    let pi = u32::from_be_bytes([0, bytes[11], bytes[12], bytes[13]]);
    let frame = Es1090Frame {
        df: bytes[0] >> 3,
        capability: bytes[0] & 0x07,
        icao: raw.icao(),
        payload: raw.payload(),
        pi,
    };
    let parity_ok = compute_pi(&bytes[..PARITY_INPUT_LEN])? == pi;
    Ok(DecodedFrame { frame, parity_ok })
}

/// Position report sub-fields. Altitude and coordinates are carried opaquely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PositionPayload {
    pub type_code: u8,
    pub t_flag: bool,
    pub f_flag: bool,
    pub altitude: u16,
    pub latitude: u32,
    pub longitude: u32,
}

pub fn encode_position_payload(p: &PositionPayload) -> Result<u64, CodecError> {
    if is_security_type(p.type_code) {
        return Err(CodecError::ReservedTypeCode(p.type_code));
    }
    check_width("altitude", p.altitude.into(), 12)?;
    check_width("latitude", p.latitude.into(), 17)?;
    check_width("longitude", p.longitude.into(), 17)?;
    Ok((u64::from(p.type_code) << 48)
        | (u64::from(p.t_flag) << 47)
        | (u64::from(p.f_flag) << 46)
        | (u64::from(p.altitude) << 34)
        | (u64::from(p.latitude) << 17)
        | u64::from(p.longitude))
}

pub fn decode_position_payload(field: u64) -> Result<PositionPayload, CodecError> {
    check_width("payload", field, PAYLOAD_BITS)?;
    let type_code = (field >> 48) as u8;
    if is_security_type(type_code) {
        return Err(CodecError::ReservedTypeCode(type_code));
    }
    Ok(PositionPayload {
        type_code,
        t_flag: (field >> 47) & 1 == 1,
        f_flag: (field >> 46) & 1 == 1,
        altitude: ((field >> 34) & 0xFFF) as u16,
        latitude: ((field >> 17) & 0x1_FFFF) as u32,
        longitude: (field & 0x1_FFFF) as u32,
    })
}

/// Which cryptographic element a security payload carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SecurityKind {
    /// Type 25: chunk of the slot digest, sent at the end of the slot.
    Digest,
    /// Type 32: chunk of the previous slot's key, sent at the start of the next.
    Key,
}

impl SecurityKind {
    pub fn type_code(self) -> u8 {
        match self {
            SecurityKind::Digest => TYPE_VERIFICATION_DIGEST,
            SecurityKind::Key => TYPE_VERIFICATION_KEY,
        }
    }

    pub fn from_type_code(code: u8) -> Option<Self> {
        match code {
            TYPE_VERIFICATION_DIGEST => Some(SecurityKind::Digest),
            TYPE_VERIFICATION_KEY => Some(SecurityKind::Key),
            _ => None,
        }
    }
}

pub fn is_security_type(type_code: u8) -> bool {
    SecurityKind::from_type_code(type_code).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SecurityPayload {
    pub kind: SecurityKind,
    pub chunk_id: u8,
    pub content: u64,
}

pub fn encode_security_payload(p: &SecurityPayload) -> Result<u64, CodecError> {
    check_width("chunk_id", p.chunk_id.into(), 2)?;
    check_width("content", p.content, CHUNK_CONTENT_BITS)?;
    Ok((u64::from(p.kind.type_code()) << 48)
        | (u64::from(p.chunk_id) << CHUNK_CONTENT_BITS)
        | p.content)
}

pub fn decode_security_payload(field: u64) -> Result<SecurityPayload, CodecError> {
    check_width("payload", field, PAYLOAD_BITS)?;
    let type_code = (field >> 48) as u8;
    let kind =
        SecurityKind::from_type_code(type_code).ok_or(CodecError::NotSecurityPayload(type_code))?;
    Ok(SecurityPayload {
        kind,
        chunk_id: ((field >> CHUNK_CONTENT_BITS) & 0x3) as u8,
        content: field & CONTENT_MASK,
    })
}

/// Payload classified by its type code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    Position(PositionPayload),
    Security(SecurityPayload),
}

pub fn classify_payload(field: u64) -> Payload {
    let field = field & PAYLOAD_MASK;
    match decode_security_payload(field) {
        Ok(sec) => Payload::Security(sec),
        Err(_) => Payload::Position(
            decode_position_payload(field).expect("non-security type codes always decode"),
        ),
    }
}
