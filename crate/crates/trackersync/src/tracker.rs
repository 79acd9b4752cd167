//! Simulated tracker device.
//!
//! State lives in an 8 KiB EEPROM image with a fixed memory map; frames
//! are generated from the EEPROM-resident activity records, so anything
//! written through the debug port shows up in the next sync frame.
//!
//! EEPROM memory map:
//!
//! | offset  | length | contents                                   |
//! |---------|--------|--------------------------------------------|
//! | 0x0020  | 6      | serial ID (tracker ID)                     |
//! | 0x0030  | 16     | device encryption key                      |
//! | 0x0046  | 1      | encryption flag: 01 encrypted, 00 plaintext|
//! | 0x0100  | 0x1E00 | activity records, megadump section format  |
//!
//! The debug port honors microcontroller readout protection levels:
//! level 0 allows everything, level 1 blocks reads of the key and
//! activity regions and all writes, level 2 disables the port.

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::codec::{
    self, bodies_to_megadump, parse_sections, raw_to_wire_offset, section_bodies, wire_region,
    CodecError, DailyRecord, FrameHeader, Megadump, Microdump, TrackerId, OVERALL_STEPS_OFFSET,
};
use crate::crypto::{seal_megadump, CryptoError, DeviceKey};

pub const EEPROM_SIZE: usize = 8192;
pub const SERIAL_OFFSET: usize = 0x0020;
pub const KEY_OFFSET: usize = 0x0030;
pub const ENC_FLAG_OFFSET: usize = 0x0046;
pub const ACTIVITY_START: usize = 0x0100;
pub const ACTIVITY_END: usize = 0x1F00;

/// Firmware version reported in frame headers (7.81).
pub const FIRMWARE_VERSION: u16 = 781;

/// Millimeters credited per recorded step.
const STRIDE_MM: u32 = 700;
/// Steps per calorie burned.
const STEPS_PER_CALORIE: u32 = 25;
const DEFAULT_PERIOD_MINUTES: u8 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrackerError {
    #[error("activity timestamp precedes tracker clock")]
    ClockRegression,
    #[error("memory readout protection blocks this read")]
    ReadProtected,
    #[error("debug features are disabled (protection level {0})")]
    DebugDisabled(u8),
    #[error("address range out of EEPROM bounds")]
    OutOfRange,
    #[error("server response addressed to a different device")]
    ResponseMismatch,
    #[error("activity records exceed the EEPROM activity region")]
    ActivityOverflow,
    #[error("protection level can be raised but not lowered")]
    ProtectionRegression,
    #[error("nonce (sequence) reuse detected")]
    NonceReuse,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Simulated non-volatile memory plus the chip's readout protection
/// option byte.
#[derive(Clone)]
pub struct EepromImage {
    bytes: Box<[u8; EEPROM_SIZE]>,
    protection_level: u8,
}

impl EepromImage {
    pub fn blank() -> Self {
        EepromImage {
            bytes: Box::new([0u8; EEPROM_SIZE]),
            protection_level: 0,
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrackerError> {
        let arr: Box<[u8; EEPROM_SIZE]> = bytes
            .to_vec()
            .into_boxed_slice()
            .try_into()
            .map_err(|_| TrackerError::OutOfRange)?;
        Ok(EepromImage {
            bytes: arr,
            protection_level: 0,
        })
    }

    pub fn as_bytes(&self) -> &[u8; EEPROM_SIZE] {
        &self.bytes
    }

    pub fn protection_level(&self) -> u8 {
        self.protection_level
    }

    fn slice(&self, addr: usize, len: usize) -> Result<&[u8], TrackerError> {
        if addr + len > EEPROM_SIZE {
            return Err(TrackerError::OutOfRange);
        }
        Ok(&self.bytes[addr..addr + len])
    }

    fn slice_mut(&mut self, addr: usize, len: usize) -> Result<&mut [u8], TrackerError> {
        if addr + len > EEPROM_SIZE {
            return Err(TrackerError::OutOfRange);
        }
        Ok(&mut self.bytes[addr..addr + len])
    }
}

#[derive(Clone)]
pub struct TrackerState {
    pub eeprom: EepromImage,
    /// Unix seconds of the most recent activity event.
    clock: u32,
    /// Last generated frame awaiting server acknowledgment.
    pending: Option<Vec<u8>>,
    sequence: u32,
    last_sealed_sequence: Option<u32>,
    /// Attach a signing-subkey MAC to encrypted frames (hardened mode).
    pub sign_messages: bool,
}

fn utc_date(ts: u32) -> chrono::NaiveDate {
    DateTime::<Utc>::from_timestamp(ts as i64, 0)
        .expect("u32 timestamp in range")
        .date_naive()
}

/// Provision a new tracker: serial ID, device key and encryption flag
/// written at their memory-map offsets, protection level 0.
pub fn new_tracker(serial: TrackerId, key: DeviceKey, encrypted: bool) -> TrackerState {
    let mut eeprom = EepromImage::blank();
    eeprom.bytes[SERIAL_OFFSET..SERIAL_OFFSET + 6].copy_from_slice(serial.as_bytes());
    eeprom.bytes[KEY_OFFSET..KEY_OFFSET + 16].copy_from_slice(&key.to_bytes());
    eeprom.bytes[ENC_FLAG_OFFSET] = if encrypted { 0x01 } else { 0x00 };
    let mut t = TrackerState {
        eeprom,
        clock: 0,
        pending: None,
        sequence: 0,
        last_sealed_sequence: None,
        sign_messages: false,
    };
    t.write_activity(&empty_activity(serial))
        .expect("blank activity fits");
    t
}

fn empty_activity(serial: TrackerId) -> Megadump {
    Megadump {
        header: FrameHeader {
            device_id: serial,
            firmware_version: FIRMWARE_VERSION,
            encrypted: false,
            signed: false,
            sequence: 0,
        },
        daily: Vec::new(),
        per_minute: codec::PerMinuteSummary::new(0, DEFAULT_PERIOD_MINUTES),
        overall: codec::OverallSummary::default(),
        alarms: codec::AlarmSection::default(),
    }
}

impl TrackerState {
    pub fn device_id(&self) -> TrackerId {
        let mut id = [0u8; 6];
        id.copy_from_slice(&self.eeprom.bytes[SERIAL_OFFSET..SERIAL_OFFSET + 6]);
        TrackerId(id)
    }

    pub fn device_key(&self) -> DeviceKey {
        DeviceKey::from_slice(&self.eeprom.bytes[KEY_OFFSET..KEY_OFFSET + 16]).expect("16 bytes")
    }

    pub fn encryption_enabled(&self) -> bool {
        self.eeprom.bytes[ENC_FLAG_OFFSET] == 0x01
    }

    pub fn clock(&self) -> u32 {
        self.clock
    }

    pub fn pending(&self) -> Option<&[u8]> {
        self.pending.as_deref()
    }

    pub fn sequence(&self) -> u32 {
        self.sequence
    }

    fn header(&self) -> FrameHeader {
        FrameHeader {
            device_id: self.device_id(),
            firmware_version: FIRMWARE_VERSION,
            encrypted: false,
            signed: false,
            sequence: self.sequence,
        }
    }

    /// Decode the EEPROM activity region. Trailing bytes after the
    /// fourth section are region padding.
    pub fn read_activity(&self) -> Result<Megadump, TrackerError> {
        let region = &self.eeprom.bytes[ACTIVITY_START..ACTIVITY_END];
        let (sections, _consumed) = parse_sections(region)?;
        let mut it = sections.into_iter().map(|s| s.raw);
        let bodies = [
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
        ];
        Ok(bodies_to_megadump(self.header(), &bodies)?)
    }

    fn write_activity(&mut self, dump: &Megadump) -> Result<(), TrackerError> {
        let bodies = section_bodies(dump)?;
        let wire = wire_region(&bodies);
        if wire.len() > ACTIVITY_END - ACTIVITY_START {
            return Err(TrackerError::ActivityOverflow);
        }
        let region = &mut self.eeprom.bytes[ACTIVITY_START..ACTIVITY_END];
        region[..wire.len()].copy_from_slice(&wire);
        region[wire.len()..].fill(0);
        Ok(())
    }

    /// Record `steps` taken at time `at`. Updates the per-minute slot,
    /// the overall totals for the current date, and rolls the previous
    /// date into a daily record on a date change.
    pub fn record_steps(&mut self, at: u32, steps: u32) -> Result<(), TrackerError> {
        if at < self.clock {
            return Err(TrackerError::ClockRegression);
        }
        self.clock = at;
        let mut dump = self.read_activity()?;

        if dump.overall.timestamp != 0 && utc_date(dump.overall.timestamp) != utc_date(at) {
            dump.daily.push(DailyRecord {
                timestamp: dump.overall.timestamp,
                steps: dump.overall.steps,
                distance_mm: dump.overall.distance_mm,
                calories: dump.overall.calories,
            });
            dump.overall = codec::OverallSummary::default();
            dump.per_minute.slots.clear();
            dump.per_minute.base_time = 0;
        }

        let period_secs = dump.per_minute.period_code as u32 * 60;
        if dump.per_minute.base_time == 0 {
            dump.per_minute.base_time = at - at % period_secs;
        }
        let slot = ((at - dump.per_minute.base_time) / period_secs) as usize;
        if dump.per_minute.slots.len() <= slot {
            dump.per_minute.slots.resize(slot + 1, 0);
        }
        dump.per_minute.slots[slot] =
            dump.per_minute.slots[slot].saturating_add(steps.min(255) as u8);

        dump.overall.timestamp = at;
        dump.overall.steps = dump.overall.steps.saturating_add(steps);
        dump.overall.distance_mm = dump
            .overall
            .distance_mm
            .saturating_add(steps.saturating_mul(STRIDE_MM));
        dump.overall.calories = dump
            .overall
            .calories
            .saturating_add((steps / STEPS_PER_CALORIE).min(u16::MAX as u32) as u16);
        dump.overall.active_minutes = dump
            .per_minute
            .slots
            .iter()
            .filter(|&&s| s > 0)
            .count()
            .saturating_mul(dump.per_minute.period_code as usize)
            .min(u16::MAX as usize) as u16;

        self.write_activity(&dump)
    }

    /// Build the next sync frame from the EEPROM activity region.
    /// Encrypts the body iff the EEPROM encryption flag is set; the
    /// header stays plaintext either way.
    pub fn generate_megadump(&mut self) -> Result<Vec<u8>, TrackerError> {
        self.sequence = self.sequence.wrapping_add(1);
        let dump = self.read_activity()?;
        let wire = if self.encryption_enabled() {
            if let Some(last) = self.last_sealed_sequence {
                if self.sequence <= last {
                    return Err(TrackerError::NonceReuse);
                }
            }
            self.last_sealed_sequence = Some(self.sequence);
            seal_megadump(&dump, &self.device_key(), self.sign_messages)?
        } else {
            codec::encode_megadump(&dump)?
        };
        self.pending = Some(wire.clone());
        Ok(wire)
    }

    /// Apply a server acknowledgment. Pending activity is cleared only
    /// on a success status addressed to this device.
    pub fn apply_server_response(&mut self, ack: &Microdump) -> Result<(), TrackerError> {
        if ack.header.device_id != self.device_id() {
            return Err(TrackerError::ResponseMismatch);
        }
        if ack.status_code == 0 {
            self.pending = None;
        }
        Ok(())
    }

    // -- debug port -------------------------------------------------------

    pub fn debug_read(&self, addr: usize, len: usize) -> Result<Vec<u8>, TrackerError> {
        match self.eeprom.protection_level {
            0 => Ok(self.eeprom.slice(addr, len)?.to_vec()),
            1 => {
                let end = addr.checked_add(len).ok_or(TrackerError::OutOfRange)?;
                let overlaps = |s: usize, e: usize| addr < e && end > s;
                if overlaps(KEY_OFFSET, KEY_OFFSET + 16) || overlaps(ACTIVITY_START, ACTIVITY_END) {
                    Err(TrackerError::ReadProtected)
                } else {
                    Ok(self.eeprom.slice(addr, len)?.to_vec())
                }
            }
            level => Err(TrackerError::DebugDisabled(level)),
        }
    }

    pub fn debug_write(&mut self, addr: usize, data: &[u8]) -> Result<(), TrackerError> {
        let level = self.eeprom.protection_level;
        if level > 0 {
            return Err(TrackerError::DebugDisabled(level));
        }
        self.eeprom.slice_mut(addr, data.len())?.copy_from_slice(data);
        Ok(())
    }

    /// Raise the readout protection level. Lowering would erase the
    /// chip on real hardware; the simulator refuses it.
    pub fn set_protection_level(&mut self, level: u8) -> Result<(), TrackerError> {
        if level < self.eeprom.protection_level {
            return Err(TrackerError::ProtectionRegression);
        }
        if level > 2 {
            return Err(TrackerError::OutOfRange);
        }
        self.eeprom.protection_level = level;
        Ok(())
    }

    /// EEPROM address of the overall-summary step count, for direct
    /// memory injection. Fails if the surrounding bytes are escaped on
    /// the wire (the 4-byte field would then not be byte-addressable).
    pub fn overall_steps_addr(&self) -> Result<usize, TrackerError> {
        let region = &self.eeprom.bytes[ACTIVITY_START..ACTIVITY_END];
        let (sections, _) = parse_sections(region)?;
        let overall = &sections[2];
        let escaped = &region[overall.body_start..overall.body_end];
        let start = raw_to_wire_offset(escaped, OVERALL_STEPS_OFFSET)
            .ok_or(CodecError::TruncatedFrame)?;
        let end = raw_to_wire_offset(escaped, OVERALL_STEPS_OFFSET + 4)
            .ok_or(CodecError::TruncatedFrame)?;
        if end - start != 4 {
            return Err(TrackerError::ActivityOverflow);
        }
        Ok(ACTIVITY_START + overall.body_start + start)
    }
}

/// Load a raw 8192-byte EEPROM image file.
pub fn load_eeprom(path: &std::path::Path) -> std::io::Result<EepromImage> {
    let bytes = std::fs::read(path)?;
    EepromImage::from_bytes(&bytes)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}

pub fn save_eeprom(path: &std::path::Path, eeprom: &EepromImage) -> std::io::Result<()> {
    std::fs::write(path, eeprom.as_bytes())
}
