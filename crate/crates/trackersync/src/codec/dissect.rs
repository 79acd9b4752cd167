//! Human-readable frame dissection: one line per decoded field with
//! its wire offset, raw bytes and value. Never fails; anything that
//! cannot be interpreted degrades to a plain hex dump.

use chrono::{TimeZone, Utc};

use super::{
    parse_sections, raw_to_wire_offset, split_frame, CodecError, FrameHeader, ParsedSection,
    DAILY_RECORD_LEN, FOOTER_LEN, HEADER_LEN, MICRODUMP_LEN,
};

fn hex(bytes: &[u8]) -> String {
    bytes
        .iter()
        .map(|b| format!("{b:02X}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn fmt_time(ts: u32) -> String {
    match Utc.timestamp_opt(ts as i64, 0).single() {
        Some(dt) => format!("{} ({ts})", dt.format("%Y-%m-%d %H:%M:%S UTC")),
        None => format!("({ts})"),
    }
}

struct Lines(Vec<String>);

impl Lines {
    fn field(&mut self, offset: usize, bytes: &[u8], text: &str) {
        self.0.push(format!("{offset:#06X}  {:<24} {text}", hex(bytes)));
    }
}

fn hex_dump(wire: &[u8], out: &mut Lines) {
    for (i, chunk) in wire.chunks(16).enumerate() {
        out.field(i * 16, chunk, "UNKNOWN");
    }
}

fn dissect_header(header: &FrameHeader, wire: &[u8], out: &mut Lines) {
    out.field(0, &wire[0..6], &format!("device_id: {}", header.device_id));
    out.field(
        6,
        &wire[6..8],
        &format!(
            "firmware_version: {}.{:02}",
            header.firmware_version / 100,
            header.firmware_version % 100
        ),
    );
    out.field(
        8,
        &wire[8..9],
        &format!(
            "flags: encrypted={} signed={}",
            header.encrypted, header.signed
        ),
    );
    out.field(9, &wire[9..13], &format!("sequence: {}", header.sequence));
    out.field(13, &wire[13..16], "reserved");
}

fn dissect_sections(region: &[u8], sections: &[ParsedSection], out: &mut Lines) {
    let names = ["daily", "per_minute", "overall", "alarms"];
    for (idx, s) in sections.iter().enumerate() {
        let base = HEADER_LEN + s.start;
        out.field(
            base,
            &region[s.start..s.start + 4],
            &format!("section start: {}", names[idx]),
        );
        let escaped = &region[s.body_start..s.body_end];
        let at = |raw_off: usize| -> usize {
            HEADER_LEN + s.body_start + raw_to_wire_offset(escaped, raw_off).unwrap_or(raw_off)
        };
        let raw = &s.raw;
        match idx {
            0 => {
                for (i, rec) in raw.chunks_exact(DAILY_RECORD_LEN).enumerate() {
                    let off = i * DAILY_RECORD_LEN;
                    let ts = u32::from_le_bytes(rec[0..4].try_into().unwrap());
                    out.field(at(off), &rec[0..4], &format!("daily[{i}].timestamp: {}", fmt_time(ts)));
                    let steps = u32::from_le_bytes(rec[4..8].try_into().unwrap());
                    out.field(at(off + 4), &rec[4..8], &format!("daily[{i}].steps: {steps}"));
                    let dist = u32::from_le_bytes(rec[8..12].try_into().unwrap());
                    out.field(at(off + 8), &rec[8..12], &format!("daily[{i}].distance_mm: {dist}"));
                    let cal = u16::from_le_bytes(rec[12..14].try_into().unwrap());
                    out.field(at(off + 12), &rec[12..14], &format!("daily[{i}].calories: {cal}"));
                }
                let tail = raw.len() - raw.len() % DAILY_RECORD_LEN;
                if tail < raw.len() {
                    out.field(at(tail), &raw[tail..], "UNKNOWN");
                }
            }
            1 if raw.len() >= 5 => {
                let base_time = u32::from_be_bytes(raw[0..4].try_into().unwrap());
                out.field(at(0), &raw[0..4], &format!("per_minute.base_time: {} [big-endian]", fmt_time(base_time)));
                out.field(at(4), &raw[4..5], &format!("per_minute.period_minutes: {}", raw[4]));
                let rest = &raw[5..];
                for (i, rec) in rest.chunks(4).enumerate() {
                    if rec.len() >= 2 {
                        out.field(at(5 + i * 4), rec, &format!("per_minute.slot[{i}].steps: {}", rec[1]));
                    } else {
                        out.field(at(5 + i * 4), rec, "UNKNOWN");
                    }
                }
            }
            2 if raw.len() == 20 => {
                let ts = u32::from_le_bytes(raw[0..4].try_into().unwrap());
                out.field(at(0), &raw[0..4], &format!("overall.timestamp: {}", fmt_time(ts)));
                let cal = u16::from_le_bytes(raw[4..6].try_into().unwrap());
                out.field(at(4), &raw[4..6], &format!("overall.calories: {cal}"));
                let steps = u32::from_le_bytes(raw[6..10].try_into().unwrap());
                out.field(at(6), &raw[6..10], &format!("overall.steps: {steps}"));
                let dist = u32::from_le_bytes(raw[10..14].try_into().unwrap());
                out.field(at(10), &raw[10..14], &format!("overall.distance_mm: {dist}"));
                let elev = u16::from_le_bytes(raw[14..16].try_into().unwrap());
                out.field(at(14), &raw[14..16], &format!("overall.elevation: {elev}"));
                let floors = u16::from_le_bytes(raw[16..18].try_into().unwrap());
                out.field(at(16), &raw[16..18], &format!("overall.floors: {floors}"));
                let act = u16::from_le_bytes(raw[18..20].try_into().unwrap());
                out.field(at(18), &raw[18..20], &format!("overall.active_minutes: {act}"));
            }
            3 => {
                for (i, rec) in raw.chunks_exact(5).enumerate() {
                    let ts = u32::from_le_bytes(rec[0..4].try_into().unwrap());
                    out.field(at(i * 5), rec, &format!("alarm[{i}]: {} repeat={:#04X}", fmt_time(ts), rec[4]));
                }
                let tail = raw.len() - raw.len() % 5;
                if tail < raw.len() {
                    out.field(at(tail), &raw[tail..], "UNKNOWN");
                }
            }
            _ => {
                if !raw.is_empty() {
                    out.field(at(0), raw, "UNKNOWN");
                }
            }
        }
        out.field(
            HEADER_LEN + s.body_end,
            &region[s.body_end..s.body_end + 1],
            "section end",
        );
    }
}

/// Render a frame as annotated text. Malformed input falls back to a
/// hex dump with all bytes marked `UNKNOWN`.
pub fn render_dissection(wire: &[u8]) -> String {
    let mut out = Lines(Vec::new());
    match split_frame(wire) {
        Ok((header, region, footer)) => {
            dissect_header(&header, wire, &mut out);
            if header.encrypted {
                out.field(HEADER_LEN, region, "encrypted body");
            } else if wire.len() == MICRODUMP_LEN && parse_sections(region).is_err() {
                out.field(HEADER_LEN, &region[0..1], &format!("status_code: {}", region[0]));
                out.field(HEADER_LEN + 1, &region[1..2], &format!("battery_pct: {}", region[1]));
            } else {
                match parse_sections(region) {
                    Ok((sections, consumed)) if consumed == region.len() && sections.len() == 4 => {
                        dissect_sections(region, &sections, &mut out);
                    }
                    _ => out.field(HEADER_LEN, region, "UNKNOWN"),
                }
            }
            let fo = wire.len() - FOOTER_LEN;
            out.field(fo, &wire[fo..fo + 2], &format!("footer.crc: {:04X}", footer.crc));
            out.field(fo + 2, &wire[fo + 2..], &format!("footer.payload_len: {}", footer.payload_len));
        }
        Err(CodecError::TruncatedFrame) | Err(_) => hex_dump(wire, &mut out),
    }
    out.0.join("\n")
}
