use super::*;
use proptest::prelude::*;

pub fn sample_header() -> FrameHeader {
    FrameHeader {
        device_id: "0A0B0C0D0E0F".parse().unwrap(),
        firmware_version: 781,
        encrypted: false,
        signed: false,
        sequence: 1,
    }
}

pub fn sample_megadump() -> Megadump {
    Megadump {
        header: sample_header(),
        daily: vec![],
        per_minute: PerMinuteSummary {
            base_time: 1_484_478_000,
            period_code: 2,
            slots: vec![10, 20, 30],
        },
        overall: OverallSummary {
            timestamp: 1_484_478_000,
            calories: 100,
            steps: 10_000,
            distance_mm: 10_000_000,
            elevation: 0,
            floors: 0,
            active_minutes: 0,
        },
        alarms: AlarmSection::default(),
    }
}

#[test]
fn overall_summary_fixture_bytes() {
    // Field span ts(4) cal(2) steps(4) dist(4) elev(2): values for
    // 2017-01-15, 100 cal, 10000 steps, 10000000 mm, 0 elevation.
    let bodies = section_bodies(&sample_megadump()).unwrap();
    let expected = [
        0x30, 0x56, 0x7B, 0x58, 0x64, 0x00, 0x10, 0x27, 0x00, 0x00, 0x80, 0x96, 0x98, 0x00, 0x00,
        0x00,
    ];
    assert_eq!(&bodies[2][..16], &expected);
}

#[test]
fn empty_sections_are_delimiters_only() {
    let bodies = section_bodies(&sample_megadump()).unwrap();
    let region = wire_region(&bodies);
    // daily is empty: region starts with C0 CD DB DC C0
    assert_eq!(&region[..5], &[0xC0, 0xCD, 0xDB, 0xDC, 0xC0]);
    // alarms is empty: region ends with C0 CD DB DC C0
    assert_eq!(&region[region.len() - 5..], &[0xC0, 0xCD, 0xDB, 0xDC, 0xC0]);
}

#[test]
fn per_minute_base_time_is_big_endian() {
    let bodies = section_bodies(&sample_megadump()).unwrap();
    assert_eq!(&bodies[1][..4], &[0x58, 0x7B, 0x56, 0x30]);
}

#[test]
fn per_minute_record_markers() {
    let bodies = section_bodies(&sample_megadump()).unwrap();
    // base(4) period(1) then records 00 s 00 FF ... final 00 s 00
    let pm = &bodies[1];
    assert_eq!(pm.len(), 5 + 4 + 4 + 3);
    assert_eq!(pm[5..9], [0x00, 10, 0x00, 0xFF]);
    assert_eq!(pm[9..13], [0x00, 20, 0x00, 0xFF]);
    assert_eq!(pm[13..16], [0x00, 30, 0x00]);
}

#[test]
fn round_trip_fixture() {
    let dump = sample_megadump();
    let wire = encode_megadump(&dump).unwrap();
    assert_eq!(decode_megadump(&wire).unwrap(), dump);
}

#[test]
fn decode_distance_from_fixture_bytes() {
    let mut dump = sample_megadump();
    dump.overall.distance_mm = u32::from_le_bytes([0xE0, 0xF9, 0x07, 0x00]);
    let wire = encode_megadump(&dump).unwrap();
    let decoded = decode_megadump(&wire).unwrap();
    assert_eq!(decoded.overall.distance_mm, 522_720);
}

#[test]
fn zeroed_crc_reports_expected_value() {
    let dump = sample_megadump();
    let mut wire = encode_megadump(&dump).unwrap();
    let n = wire.len();
    let correct = u16::from_le_bytes([wire[n - 6], wire[n - 5]]);
    wire[n - 6] = 0;
    wire[n - 5] = 0;
    match decode_megadump(&wire) {
        Err(CodecError::BadCrc { expected, found }) => {
            assert_eq!(expected, correct);
            assert_eq!(found, 0);
        }
        other => panic!("expected BadCrc, got {other:?}"),
    }
}

#[test]
fn length_mismatch_detected() {
    let dump = sample_megadump();
    let mut wire = encode_megadump(&dump).unwrap();
    let n = wire.len();
    wire[n - 4] ^= 0x01;
    assert!(matches!(
        decode_megadump(&wire),
        Err(CodecError::LengthMismatch { .. })
    ));
}

#[test]
fn extra_section_fails_closed() {
    let dump = sample_megadump();
    let wire = encode_megadump(&dump).unwrap();
    // splice a fifth empty section before the footer
    let mut forged = wire[..wire.len() - FOOTER_LEN].to_vec();
    forged.extend_from_slice(&[0xC0, 0xCD, 0xDB, 0xDC, 0xC0]);
    forged.extend_from_slice(&wire[wire.len() - FOOTER_LEN..]);
    assert!(matches!(
        decode_megadump(&forged),
        Err(CodecError::UnknownSectionLayout { .. })
    ));
}

#[test]
fn daily_order_enforced_on_encode() {
    let mut dump = sample_megadump();
    dump.daily = vec![
        DailyRecord {
            timestamp: 200,
            steps: 1,
            distance_mm: 1,
            calories: 1,
        },
        DailyRecord {
            timestamp: 100,
            steps: 1,
            distance_mm: 1,
            calories: 1,
        },
    ];
    assert_eq!(
        encode_megadump(&dump),
        Err(CodecError::SectionOrderViolation)
    );
}

#[test]
fn encrypted_flag_blocks_plain_decode() {
    let dump = sample_megadump();
    let mut wire = encode_megadump(&dump).unwrap();
    wire[8] |= 0x01;
    assert_eq!(decode_megadump(&wire), Err(CodecError::EncryptedBody));
}

#[test]
fn microdump_round_trip_and_rendering() {
    let m = Microdump {
        header: sample_header(),
        status_code: 0,
        battery_pct: 87,
    };
    let wire = encode_microdump(&m);
    let back = decode_microdump(&wire).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.header.device_id.to_string(), "0A0B0C0D0E0F");
}

#[test]
fn microdump_truncation() {
    let m = Microdump {
        header: sample_header(),
        status_code: 0,
        battery_pct: 87,
    };
    let wire = encode_microdump(&m);
    assert_eq!(
        decode_microdump(&wire[..HEADER_LEN]),
        Err(CodecError::TruncatedFrame)
    );
}

#[test]
fn dissection_shows_summary_fields() {
    let wire = encode_megadump(&sample_megadump()).unwrap();
    let text = render_dissection(&wire);
    assert!(text.contains("steps: 10000"), "{text}");
    assert!(text.contains("2017-01-15"), "{text}");
    assert!(text.contains("device_id: 0A0B0C0D0E0F"), "{text}");
}

#[test]
fn dissection_of_garbage_is_pure_hex_dump() {
    let text = render_dissection(&[0xDE, 0xAD]);
    for line in text.lines() {
        assert!(line.ends_with("UNKNOWN"), "{line}");
    }
    assert!(!text.contains("steps"));
}

#[test]
fn hex_dump_fixture_parses() {
    let text = "0000  C0 CD DB DC\n0004: C0\n# comment\n";
    assert_eq!(
        parse_hex_dump(text).unwrap(),
        vec![0xC0, 0xCD, 0xDB, 0xDC, 0xC0]
    );
}

prop_compose! {
    fn arb_daily()(n in 0usize..5, start in 0u32..1_000_000, steps in proptest::collection::vec((0u32..1_000_000, 0u32..10_000_000, 0u16..50_000), 0..5)) -> Vec<DailyRecord> {
        steps
            .into_iter()
            .take(n)
            .enumerate()
            .map(|(i, (s, d, c))| DailyRecord {
                timestamp: start + 1 + i as u32 * 86_400,
                steps: s,
                distance_mm: d,
                calories: c,
            })
            .collect()
    }
}

prop_compose! {
    fn arb_megadump()(
        daily in arb_daily(),
        base_time in any::<u32>(),
        period in 1u8..=15,
        slots in proptest::collection::vec(any::<u8>(), 0..40),
        ts in any::<u32>(),
        cal in any::<u16>(),
        steps in any::<u32>(),
        dist in any::<u32>(),
        alarms in proptest::collection::vec((any::<u32>(), any::<u8>()), 0..3),
        seq in any::<u32>(),
    ) -> Megadump {
        Megadump {
            header: FrameHeader { sequence: seq, ..sample_header() },
            daily,
            per_minute: PerMinuteSummary { base_time, period_code: period, slots },
            overall: OverallSummary {
                timestamp: ts,
                calories: cal,
                steps,
                distance_mm: dist,
                elevation: 0,
                floors: 0,
                active_minutes: 0,
            },
            alarms: AlarmSection { entries: alarms },
        }
    }
}

proptest! {
    #[test]
    fn megadump_round_trip(dump in arb_megadump()) {
        let wire = encode_megadump(&dump).unwrap();
        let back = decode_megadump(&wire).unwrap();
        prop_assert_eq!(back, dump);
    }

    #[test]
    fn decoded_frames_have_four_canonical_sections(dump in arb_megadump()) {
        let wire = encode_megadump(&dump).unwrap();
        let (header, region, _) = split_frame(&wire).unwrap();
        prop_assert!(!header.encrypted);
        let (sections, consumed) = parse_sections(region).unwrap();
        prop_assert_eq!(sections.len(), 4);
        prop_assert_eq!(consumed, region.len());
    }
}
