//! Wire codec for tracker sync frames.
//!
//! Two frame types exist on the wire. A *microdump* carries device
//! identity and status only. A *megadump* carries activity data in four
//! data sections (daily summary, per-minute summary, overall summary,
//! alarms), each wrapped in `C0 CD DB DC ... C0` delimiters with the
//! body SLIP-escaped.
//!
//! Frame layout (all frames):
//!
//! ```text
//! offset  len  field
//! 0       6    device id
//! 6       2    firmware version (LE, major*100+minor)
//! 8       1    flags (bit0 = body encrypted, bit1 = body signed)
//! 9       4    message sequence (LE)
//! 13      3    reserved, zero
//! 16      ...  body (sections, or status bytes for a microdump)
//! n-6     2    CRC-16/CCITT-FALSE over the unescaped body (LE)
//! n-4     4    body length, unescaped (LE)
//! ```
//!
//! The footer checksum and length are computed over the *canonical*
//! body: section delimiters and terminators included, escaping removed.

mod crc;
mod dissect;
mod escape;

pub use crc::crc_ccitt;
pub use dissect::render_dissection;
pub use escape::{escape_section, unescape_section, SECTION_START};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const HEADER_LEN: usize = 16;
pub const FOOTER_LEN: usize = 6;
/// Largest canonical body a footer length field may declare.
pub const MAX_BODY_LEN: usize = 65_535;

const FLAG_ENCRYPTED: u8 = 0x01;
const FLAG_SIGNED: u8 = 0x02;

/// Marker closing a per-minute step record when another record follows.
const PER_MINUTE_CONT: u8 = 0xFF;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("malformed escape sequence: DB followed by {found:?}")]
    MalformedEscape { found: Option<u8> },
    #[error("bad CRC: expected {expected:04X}, found {found:04X}")]
    BadCrc { expected: u16, found: u16 },
    #[error("frame truncated")]
    TruncatedFrame,
    #[error("unknown section layout at offset {offset}")]
    UnknownSectionLayout { offset: usize },
    #[error("daily record timestamps not strictly increasing")]
    SectionOrderViolation,
    #[error("body length {len} exceeds maximum {MAX_BODY_LEN}")]
    OversizePayload { len: usize },
    #[error("footer declares body length {declared} but body is {actual} bytes")]
    LengthMismatch { declared: u32, actual: u32 },
    #[error("frame body is encrypted; a device key is required to decode it")]
    EncryptedBody,
    #[error("invalid tracker id: {0}")]
    BadTrackerId(String),
    #[error("invalid hex dump token: {0}")]
    BadHexDump(String),
}

/// 6-byte opaque device identifier, rendered as 12 uppercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrackerId(pub [u8; 6]);

impl TrackerId {
    pub fn as_bytes(&self) -> &[u8; 6] {
        &self.0
    }
}

impl fmt::Display for TrackerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02X}")?;
        }
        Ok(())
    }
}

impl FromStr for TrackerId {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|_| CodecError::BadTrackerId(s.to_string()))?;
        let arr: [u8; 6] = bytes
            .try_into()
            .map_err(|_| CodecError::BadTrackerId(s.to_string()))?;
        Ok(TrackerId(arr))
    }
}

impl serde::Serialize for TrackerId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for TrackerId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <String as serde::Deserialize>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Plaintext frame header. Present and readable even when the body is
/// encrypted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub device_id: TrackerId,
    /// Firmware version encoded as major*100 + minor (7.81 -> 781).
    pub firmware_version: u16,
    pub encrypted: bool,
    /// Body carries an 8-byte authentication tag after the ciphertext.
    pub signed: bool,
    pub sequence: u32,
}

impl FrameHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..6].copy_from_slice(&self.device_id.0);
        out[6..8].copy_from_slice(&self.firmware_version.to_le_bytes());
        let mut flags = 0u8;
        if self.encrypted {
            flags |= FLAG_ENCRYPTED;
        }
        if self.signed {
            flags |= FLAG_SIGNED;
        }
        out[8] = flags;
        out[9..13].copy_from_slice(&self.sequence.to_le_bytes());
        out
    }

    pub fn decode(wire: &[u8]) -> Result<Self, CodecError> {
        if wire.len() < HEADER_LEN {
            return Err(CodecError::TruncatedFrame);
        }
        let mut id = [0u8; 6];
        id.copy_from_slice(&wire[0..6]);
        Ok(FrameHeader {
            device_id: TrackerId(id),
            firmware_version: u16::from_le_bytes([wire[6], wire[7]]),
            encrypted: wire[8] & FLAG_ENCRYPTED != 0,
            signed: wire[8] & FLAG_SIGNED != 0,
            sequence: u32::from_le_bytes([wire[9], wire[10], wire[11], wire[12]]),
        })
    }
}

/// Frame footer: checksum and unescaped body length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameFooter {
    pub crc: u16,
    pub payload_len: u32,
}

impl FrameFooter {
    pub fn encode(&self) -> [u8; FOOTER_LEN] {
        let mut out = [0u8; FOOTER_LEN];
        out[0..2].copy_from_slice(&self.crc.to_le_bytes());
        out[2..6].copy_from_slice(&self.payload_len.to_le_bytes());
        out
    }

    pub fn decode(wire: &[u8]) -> Result<Self, CodecError> {
        if wire.len() < FOOTER_LEN {
            return Err(CodecError::TruncatedFrame);
        }
        Ok(FrameFooter {
            crc: u16::from_le_bytes([wire[0], wire[1]]),
            payload_len: u32::from_le_bytes([wire[2], wire[3], wire[4], wire[5]]),
        })
    }
}

/// One fixed-length daily summary record: 14 bytes on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DailyRecord {
    /// Unix seconds, little-endian on the wire.
    pub timestamp: u32,
    pub steps: u32,
    pub distance_mm: u32,
    pub calories: u16,
}

pub const DAILY_RECORD_LEN: usize = 14;

/// Per-minute activity, one u8 step count per slot of `period_code`
/// minutes starting at `base_time`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerMinuteSummary {
    /// Unix seconds; the only big-endian timestamp in the protocol.
    pub base_time: u32,
    /// Slot length in minutes. Typically 2.
    pub period_code: u8,
    pub slots: Vec<u8>,
}

impl PerMinuteSummary {
    pub fn new(base_time: u32, period_code: u8) -> Self {
        PerMinuteSummary {
            base_time,
            period_code,
            slots: Vec::new(),
        }
    }
}

/// Overall activity totals; all fields little-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OverallSummary {
    pub timestamp: u32,
    pub calories: u16,
    pub steps: u32,
    pub distance_mm: u32,
    pub elevation: u16,
    pub floors: u16,
    pub active_minutes: u16,
}

pub const OVERALL_LEN: usize = 20;
/// Offset of the step count inside the overall summary body.
pub const OVERALL_STEPS_OFFSET: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AlarmSection {
    /// (timestamp, repeat-mask byte) pairs; usually empty.
    pub entries: Vec<(u32, u8)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Megadump {
    pub header: FrameHeader,
    pub daily: Vec<DailyRecord>,
    pub per_minute: PerMinuteSummary,
    pub overall: OverallSummary,
    pub alarms: AlarmSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Microdump {
    pub header: FrameHeader,
    pub status_code: u8,
    pub battery_pct: u8,
}

// ---------------------------------------------------------------------------
// Section body encode/decode

fn encode_daily(records: &[DailyRecord]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(records.len() * DAILY_RECORD_LEN);
    let mut last: Option<u32> = None;
    for r in records {
        if let Some(prev) = last {
            if r.timestamp <= prev {
                return Err(CodecError::SectionOrderViolation);
            }
        }
        last = Some(r.timestamp);
        out.extend_from_slice(&r.timestamp.to_le_bytes());
        out.extend_from_slice(&r.steps.to_le_bytes());
        out.extend_from_slice(&r.distance_mm.to_le_bytes());
        out.extend_from_slice(&r.calories.to_le_bytes());
    }
    Ok(out)
}

fn decode_daily(body: &[u8]) -> Result<Vec<DailyRecord>, CodecError> {
    if body.len() % DAILY_RECORD_LEN != 0 {
        return Err(CodecError::UnknownSectionLayout { offset: body.len() });
    }
    let mut out = Vec::with_capacity(body.len() / DAILY_RECORD_LEN);
    let mut last: Option<u32> = None;
    for chunk in body.chunks_exact(DAILY_RECORD_LEN) {
        let rec = DailyRecord {
            timestamp: u32::from_le_bytes(chunk[0..4].try_into().unwrap()),
            steps: u32::from_le_bytes(chunk[4..8].try_into().unwrap()),
            distance_mm: u32::from_le_bytes(chunk[8..12].try_into().unwrap()),
            calories: u16::from_le_bytes(chunk[12..14].try_into().unwrap()),
        };
        if let Some(prev) = last {
            if rec.timestamp <= prev {
                return Err(CodecError::SectionOrderViolation);
            }
        }
        last = Some(rec.timestamp);
        out.push(rec);
    }
    Ok(out)
}

/// Per-minute body: base time (u32 BE), period byte, then 4-byte step
/// records `00 <steps> 00 FF`. The final record omits its 4th byte; the
/// section terminator `C0` doubles as it on the wire.
fn encode_per_minute(pm: &PerMinuteSummary) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + pm.slots.len() * 4);
    out.extend_from_slice(&pm.base_time.to_be_bytes());
    out.push(pm.period_code);
    for (i, &steps) in pm.slots.iter().enumerate() {
        out.push(0x00);
        out.push(steps);
        out.push(0x00);
        if i + 1 < pm.slots.len() {
            out.push(PER_MINUTE_CONT);
        }
    }
    out
}

fn decode_per_minute(body: &[u8]) -> Result<PerMinuteSummary, CodecError> {
    if body.len() < 5 {
        return Err(CodecError::UnknownSectionLayout { offset: body.len() });
    }
    let base_time = u32::from_be_bytes(body[0..4].try_into().unwrap());
    let period_code = body[4];
    if period_code == 0 {
        return Err(CodecError::UnknownSectionLayout { offset: 4 });
    }
    let rest = &body[5..];
    let mut slots = Vec::new();
    if !rest.is_empty() {
        // n slots occupy 4n-1 bytes: n-1 continuation records plus a
        // final 3-byte record.
        if rest.len() % 4 != 3 {
            return Err(CodecError::UnknownSectionLayout { offset: 5 + rest.len() });
        }
        let n = (rest.len() + 1) / 4;
        for i in 0..n {
            let rec = &rest[i * 4..];
            slots.push(rec[1]);
            if i + 1 < n && rec[3] != PER_MINUTE_CONT {
                return Err(CodecError::UnknownSectionLayout { offset: 5 + i * 4 + 3 });
            }
        }
    }
    Ok(PerMinuteSummary {
        base_time,
        period_code,
        slots,
    })
}

fn encode_overall(o: &OverallSummary) -> Vec<u8> {
    let mut out = Vec::with_capacity(OVERALL_LEN);
    out.extend_from_slice(&o.timestamp.to_le_bytes());
    out.extend_from_slice(&o.calories.to_le_bytes());
    out.extend_from_slice(&o.steps.to_le_bytes());
    out.extend_from_slice(&o.distance_mm.to_le_bytes());
    out.extend_from_slice(&o.elevation.to_le_bytes());
    out.extend_from_slice(&o.floors.to_le_bytes());
    out.extend_from_slice(&o.active_minutes.to_le_bytes());
    out
}

fn decode_overall(body: &[u8]) -> Result<OverallSummary, CodecError> {
    if body.len() != OVERALL_LEN {
        return Err(CodecError::UnknownSectionLayout { offset: body.len() });
    }
    Ok(OverallSummary {
        timestamp: u32::from_le_bytes(body[0..4].try_into().unwrap()),
        calories: u16::from_le_bytes(body[4..6].try_into().unwrap()),
        steps: u32::from_le_bytes(body[6..10].try_into().unwrap()),
        distance_mm: u32::from_le_bytes(body[10..14].try_into().unwrap()),
        elevation: u16::from_le_bytes(body[14..16].try_into().unwrap()),
        floors: u16::from_le_bytes(body[16..18].try_into().unwrap()),
        active_minutes: u16::from_le_bytes(body[18..20].try_into().unwrap()),
    })
}

fn encode_alarms(a: &AlarmSection) -> Vec<u8> {
    let mut out = Vec::with_capacity(a.entries.len() * 5);
    for &(ts, mask) in &a.entries {
        out.extend_from_slice(&ts.to_le_bytes());
        out.push(mask);
    }
    out
}

fn decode_alarms(body: &[u8]) -> Result<AlarmSection, CodecError> {
    if body.len() % 5 != 0 {
        return Err(CodecError::UnknownSectionLayout { offset: body.len() });
    }
    let entries = body
        .chunks_exact(5)
        .map(|c| (u32::from_le_bytes(c[0..4].try_into().unwrap()), c[4]))
        .collect();
    Ok(AlarmSection { entries })
}

// ---------------------------------------------------------------------------
// Section region handling

/// The four raw (unescaped) section bodies of a megadump, in canonical
/// order: daily, per-minute, overall, alarms.
pub type SectionBodies = [Vec<u8>; 4];

/// Raw section bodies for a megadump value.
pub fn section_bodies(dump: &Megadump) -> Result<SectionBodies, CodecError> {
    Ok([
        encode_daily(&dump.daily)?,
        encode_per_minute(&dump.per_minute),
        encode_overall(&dump.overall),
        encode_alarms(&dump.alarms),
    ])
}

/// Rebuild megadump fields from raw section bodies.
pub fn bodies_to_megadump(header: FrameHeader, bodies: &SectionBodies) -> Result<Megadump, CodecError> {
    Ok(Megadump {
        header,
        daily: decode_daily(&bodies[0])?,
        per_minute: decode_per_minute(&bodies[1])?,
        overall: decode_overall(&bodies[2])?,
        alarms: decode_alarms(&bodies[3])?,
    })
}

/// Canonical body: delimiters and terminators with escaping removed.
/// The footer CRC and length are computed over this form.
pub fn canonical_body(bodies: &SectionBodies) -> Vec<u8> {
    let mut out = Vec::new();
    for body in bodies {
        out.extend_from_slice(&SECTION_START);
        out.extend_from_slice(body);
        out.push(0xC0);
    }
    out
}

/// Wire form of the section region: delimiters with escaped bodies.
pub fn wire_region(bodies: &SectionBodies) -> Vec<u8> {
    let mut out = Vec::new();
    for body in bodies {
        out.extend_from_slice(&SECTION_START);
        out.extend_from_slice(&escape_section(body));
        out.push(0xC0);
    }
    out
}

/// One parsed section within a wire region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSection {
    /// Offset of the section start delimiter within the region.
    pub start: usize,
    /// Offset of the first escaped body byte.
    pub body_start: usize,
    /// Offset one past the last escaped body byte (the terminator).
    pub body_end: usize,
    /// Unescaped body bytes.
    pub raw: Vec<u8>,
}

/// Parse exactly four delimited sections from a wire region, returning
/// them plus the number of region bytes consumed.
pub fn parse_sections(region: &[u8]) -> Result<(Vec<ParsedSection>, usize), CodecError> {
    let mut pos = 0usize;
    let mut sections = Vec::with_capacity(4);
    for _ in 0..4 {
        if region.len() < pos + SECTION_START.len() {
            return Err(CodecError::TruncatedFrame);
        }
        if region[pos..pos + 4] != SECTION_START {
            return Err(CodecError::UnknownSectionLayout { offset: pos });
        }
        let body_start = pos + 4;
        // Escaping guarantees no literal C0 inside a body, so the next
        // C0 terminates the section.
        let rel_end = region[body_start..]
            .iter()
            .position(|&b| b == 0xC0)
            .ok_or(CodecError::TruncatedFrame)?;
        let body_end = body_start + rel_end;
        let raw = unescape_section(&region[body_start..body_end])?;
        sections.push(ParsedSection {
            start: pos,
            body_start,
            body_end,
            raw,
        });
        pos = body_end + 1;
    }
    Ok((sections, pos))
}

fn region_to_bodies(region: &[u8]) -> Result<SectionBodies, CodecError> {
    let (sections, consumed) = parse_sections(region)?;
    if consumed != region.len() {
        // Anything after the fourth section is a layout we don't know.
        return Err(CodecError::UnknownSectionLayout { offset: consumed });
    }
    let mut it = sections.into_iter().map(|s| s.raw);
    Ok([
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    ])
}

// ---------------------------------------------------------------------------
// Whole-frame encode/decode

fn footer_for(canonical: &[u8]) -> Result<FrameFooter, CodecError> {
    if canonical.len() > MAX_BODY_LEN {
        return Err(CodecError::OversizePayload {
            len: canonical.len(),
        });
    }
    Ok(FrameFooter {
        crc: crc_ccitt(canonical),
        payload_len: canonical.len() as u32,
    })
}

/// Encode a plaintext megadump. The footer CRC and length are computed
/// here, never taken from input.
pub fn encode_megadump(dump: &Megadump) -> Result<Vec<u8>, CodecError> {
    let mut header = dump.header;
    header.encrypted = false;
    header.signed = false;
    let bodies = section_bodies(dump)?;
    let canonical = canonical_body(&bodies);
    let footer = footer_for(&canonical)?;
    let mut out = Vec::new();
    out.extend_from_slice(&header.encode());
    out.extend_from_slice(&wire_region(&bodies));
    out.extend_from_slice(&footer.encode());
    Ok(out)
}

/// Split any frame into header, body region and footer without
/// interpreting or checksumming the region.
pub fn split_frame(wire: &[u8]) -> Result<(FrameHeader, &[u8], FrameFooter), CodecError> {
    if wire.len() < HEADER_LEN + FOOTER_LEN {
        return Err(CodecError::TruncatedFrame);
    }
    let header = FrameHeader::decode(wire)?;
    let footer = FrameFooter::decode(&wire[wire.len() - FOOTER_LEN..])?;
    Ok((header, &wire[HEADER_LEN..wire.len() - FOOTER_LEN], footer))
}

/// Decode a plaintext megadump, verifying the footer CRC and length.
pub fn decode_megadump(wire: &[u8]) -> Result<Megadump, CodecError> {
    let (header, region, footer) = split_frame(wire)?;
    if header.encrypted {
        return Err(CodecError::EncryptedBody);
    }
    let bodies = region_to_bodies(region)?;
    let canonical = canonical_body(&bodies);
    verify_footer(&canonical, footer)?;
    bodies_to_megadump(header, &bodies)
}

/// Check a footer against the canonical body it claims to cover,
/// reporting the computed CRC on mismatch.
pub fn verify_footer(canonical: &[u8], footer: FrameFooter) -> Result<(), CodecError> {
    let expected = crc_ccitt(canonical);
    if footer.crc != expected {
        return Err(CodecError::BadCrc {
            expected,
            found: footer.crc,
        });
    }
    if footer.payload_len as usize != canonical.len() {
        return Err(CodecError::LengthMismatch {
            declared: footer.payload_len,
            actual: canonical.len() as u32,
        });
    }
    Ok(())
}

pub const MICRODUMP_LEN: usize = HEADER_LEN + 2 + FOOTER_LEN;

pub fn encode_microdump(m: &Microdump) -> Vec<u8> {
    let body = [m.status_code, m.battery_pct];
    let footer = FrameFooter {
        crc: crc_ccitt(&body),
        payload_len: body.len() as u32,
    };
    let mut out = Vec::with_capacity(MICRODUMP_LEN);
    out.extend_from_slice(&m.header.encode());
    out.extend_from_slice(&body);
    out.extend_from_slice(&footer.encode());
    out
}

pub fn decode_microdump(wire: &[u8]) -> Result<Microdump, CodecError> {
    if wire.len() != MICRODUMP_LEN {
        return Err(CodecError::TruncatedFrame);
    }
    let (header, body, footer) = split_frame(wire)?;
    verify_footer(body, footer)?;
    Ok(Microdump {
        header,
        status_code: body[0],
        battery_pct: body[1],
    })
}

/// Map an offset within a raw section body to the offset of the same
/// byte within its escaped wire image.
pub fn raw_to_wire_offset(escaped: &[u8], raw_offset: usize) -> Option<usize> {
    let mut raw = 0usize;
    let mut wire = 0usize;
    while wire < escaped.len() {
        if raw == raw_offset {
            return Some(wire);
        }
        if escaped[wire] == 0xDB {
            wire += 2;
        } else {
            wire += 1;
        }
        raw += 1;
    }
    if raw == raw_offset {
        Some(wire)
    } else {
        None
    }
}

/// Parse hex-dump fixture text: lines of `offset  b0 b1 b2 ...`, with
/// offsets and blank lines/comments (`#`) tolerated.
pub fn parse_hex_dump(text: &str) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace().peekable();
        // Leading field may be an offset column; skip it when it parses
        // as hex wider than a byte or ends with ':'.
        if let Some(first) = fields.peek() {
            let bare = first.trim_end_matches(':');
            if first.ends_with(':') || (bare.len() > 2 && u32::from_str_radix(bare, 16).is_ok()) {
                fields.next();
            }
        }
        for field in fields {
            let b = u8::from_str_radix(field, 16)
                .map_err(|_| CodecError::BadHexDump(field.to_string()))?;
            out.push(b);
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests;
