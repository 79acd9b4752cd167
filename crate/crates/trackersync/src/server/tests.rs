use super::*;
use crate::codec::tests::{sample_header, sample_megadump};
use crate::codec::{encode_megadump, encode_microdump};
use crate::crypto::seal_megadump;

fn vulnerable_state() -> ServerState {
    ServerState::new(
        ServerConfig::new(Mode::Vulnerable),
        Clock::manual(1_500_000_000),
        None,
    )
}

fn hardened_state() -> ServerState {
    ServerState::new(
        ServerConfig::new(Mode::Hardened),
        Clock::manual(1_500_000_000),
        None,
    )
}

fn tracker_a() -> TrackerId {
    "0A0B0C0D0E0F".parse().unwrap()
}

fn tracker_b() -> TrackerId {
    "B0B0B0B0B0B0".parse().unwrap()
}

fn key() -> DeviceKey {
    DeviceKey::new(*b"0123456789ABCDEF")
}

fn plain_envelope(id: TrackerId) -> SyncEnvelope {
    let dump = sample_megadump();
    SyncEnvelope::new(id, encode_megadump(&dump).unwrap())
}

const DATE: &str = "2017-01-15";

fn date() -> chrono::NaiveDate {
    DATE.parse().unwrap()
}

#[test]
fn validate_known_and_unknown() {
    let state = vulnerable_state();
    state.register("alice", tracker_a(), None);
    let micro = encode_microdump(&crate::codec::Microdump {
        header: sample_header(),
        status_code: 0,
        battery_pct: 90,
    });
    let env = SyncEnvelope::new(tracker_a(), micro.clone());
    assert_eq!(state.handle_validate(&env), Ok(true));
    let env = SyncEnvelope::new(tracker_b(), micro);
    assert_eq!(state.handle_validate(&env), Ok(false));
    // undecodable payload
    let env = SyncEnvelope::new(tracker_a(), vec![0u8; 30]);
    assert!(state.handle_validate(&env).is_err());
}

#[test]
fn fabricated_summary_accepted_in_vulnerable_mode() {
    let state = vulnerable_state();
    state.register("alice", tracker_a(), None);
    let outcome = state.handle_sync(&plain_envelope(tracker_a()));
    assert!(matches!(outcome, SyncOutcome::Accepted { .. }));
    let digest = state.get_digest("alice", date()).unwrap();
    assert_eq!(digest.steps, 10_000);
    assert_eq!(digest.distance_km, "10.00");
}

#[test]
fn impersonation_credits_the_envelope_tracker() {
    let state = vulnerable_state();
    state.register("alice", tracker_a(), None);
    state.register("bob", tracker_b(), None);
    // a frame generated by tracker A, replayed under B's ID
    let frame = encode_megadump(&sample_megadump()).unwrap();
    let outcome = state.handle_sync(&SyncEnvelope::new(tracker_b(), frame));
    assert!(matches!(outcome, SyncOutcome::Accepted { .. }));
    assert_eq!(state.get_digest("bob", date()).unwrap().steps, 10_000);
    assert_eq!(
        state.get_digest("alice", date()),
        Err(ServerError::NoData(date()))
    );
}

#[test]
fn unknown_tracker_rejected() {
    let state = vulnerable_state();
    assert_eq!(
        state.handle_sync(&plain_envelope(tracker_a())),
        SyncOutcome::UnknownTracker
    );
}

#[test]
fn hardened_rejects_plaintext_with_generic_error() {
    let state = hardened_state();
    state.register("alice", tracker_a(), Some(key()));
    assert_eq!(
        state.handle_sync(&plain_envelope(tracker_a())),
        SyncOutcome::Invalid
    );
    assert_eq!(
        state.get_digest("alice", date()),
        Err(ServerError::NoData(date()))
    );
}

#[test]
fn hardened_requires_valid_mac() {
    let state = hardened_state();
    state.register("alice", tracker_a(), Some(key()));
    // encrypted but unsigned
    let wire = seal_megadump(&sample_megadump(), &key(), false).unwrap();
    assert_eq!(
        state.handle_sync(&SyncEnvelope::new(tracker_a(), wire)),
        SyncOutcome::Invalid
    );
    // encrypted and signed
    let wire = seal_megadump(&sample_megadump(), &key(), true).unwrap();
    assert!(matches!(
        state.handle_sync(&SyncEnvelope::new(tracker_a(), wire)),
        SyncOutcome::Accepted { .. }
    ));
}

#[test]
fn crc_oracle_reports_expected_value_then_locks_out() {
    let state = vulnerable_state();
    state.register("alice", tracker_a(), None);
    let mut wire = encode_megadump(&sample_megadump()).unwrap();
    let n = wire.len();
    let correct = u16::from_le_bytes([wire[n - 6], wire[n - 5]]);
    wire[n - 6] = 0;
    wire[n - 5] = 0;
    let env = SyncEnvelope::new(tracker_a(), wire);

    for _ in 0..5 {
        assert_eq!(
            state.handle_sync(&env),
            SyncOutcome::CrcMismatch { expected: correct }
        );
    }
    // threshold reached: 6th request refused
    assert_eq!(state.handle_sync(&env), SyncOutcome::LockedOut);
    // and a good frame is refused too while locked
    assert_eq!(
        state.handle_sync(&plain_envelope(tracker_a())),
        SyncOutcome::LockedOut
    );
    // lockout expires with the clock
    state.clock.advance(3_601);
    assert!(matches!(
        state.handle_sync(&plain_envelope(tracker_a())),
        SyncOutcome::Accepted { .. }
    ));
}

#[test]
fn success_resets_error_count() {
    let state = vulnerable_state();
    state.register("alice", tracker_a(), None);
    let mut bad = encode_megadump(&sample_megadump()).unwrap();
    let n = bad.len();
    bad[n - 6] ^= 0xFF;
    let bad_env = SyncEnvelope::new(tracker_a(), bad);
    for _ in 0..4 {
        assert!(matches!(
            state.handle_sync(&bad_env),
            SyncOutcome::CrcMismatch { .. }
        ));
    }
    assert!(matches!(
        state.handle_sync(&plain_envelope(tracker_a())),
        SyncOutcome::Accepted { .. }
    ));
    // counter reset: five more errors needed before lockout
    for _ in 0..4 {
        assert!(matches!(
            state.handle_sync(&bad_env),
            SyncOutcome::CrcMismatch { .. }
        ));
    }
    assert!(matches!(
        state.handle_sync(&bad_env),
        SyncOutcome::CrcMismatch { .. }
    ));
    assert_eq!(state.handle_sync(&bad_env), SyncOutcome::LockedOut);
}

#[test]
fn fraud_rules() {
    let rules = FraudRules::default();
    let account = Account::new("x", tracker_a(), None);

    let mut dump = sample_megadump();
    dump.overall.steps = 16_777_215;
    assert_eq!(fraud_check(&rules, &account, &dump), FraudVerdict::Reject);

    let mut dump = sample_megadump();
    dump.overall.steps = 10_000;
    dump.overall.distance_mm = 10_000_000; // stride 1.0 m
    assert_eq!(fraud_check(&rules, &account, &dump), FraudVerdict::Accept);

    let mut dump = sample_megadump();
    dump.overall.steps = 0;
    dump.overall.distance_mm = 0;
    assert_eq!(fraud_check(&rules, &account, &dump), FraudVerdict::Accept);

    let mut dump = sample_megadump();
    dump.overall.steps = 100;
    dump.overall.distance_mm = 1_000_000; // stride 10 m
    assert_eq!(fraud_check(&rules, &account, &dump), FraudVerdict::Flag);
}

#[test]
fn hardened_flags_but_merges_odd_stride() {
    let state = hardened_state();
    state.register("alice", tracker_a(), Some(key()));
    let mut dump = sample_megadump();
    dump.overall.steps = 100;
    dump.overall.distance_mm = 1_000_000;
    let wire = seal_megadump(&dump, &key(), true).unwrap();
    assert!(matches!(
        state.handle_sync(&SyncEnvelope::new(tracker_a(), wire)),
        SyncOutcome::Accepted { .. }
    ));
    let accounts = state.accounts.lock().unwrap();
    assert!(accounts.get(&tracker_a()).unwrap().fraud_flag);
}

#[test]
fn digest_distance_formatting() {
    assert_eq!(format_distance_km(522_720), "0.52");
    assert_eq!(format_distance_km(0), "0.00");
    assert_eq!(format_distance_km(10_000_000), "10.00");
}

#[test]
fn digest_unknown_user() {
    let state = vulnerable_state();
    assert_eq!(
        state.get_digest("nobody", date()),
        Err(ServerError::UnknownUser)
    );
}

#[test]
fn accounts_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("accounts.json");
    {
        let state = ServerState::new(
            ServerConfig::new(Mode::Vulnerable),
            Clock::manual(1_500_000_000),
            Some(store.clone()),
        );
        state.register("alice", tracker_a(), None);
        assert!(matches!(
            state.handle_sync(&plain_envelope(tracker_a())),
            SyncOutcome::Accepted { .. }
        ));
    }
    let state = ServerState::new(
        ServerConfig::new(Mode::Vulnerable),
        Clock::manual(1_500_000_000),
        Some(store),
    );
    assert_eq!(state.get_digest("alice", date()).unwrap().steps, 10_000);
}

#[test]
fn corrupt_store_reported() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("accounts.json");
    std::fs::write(&store, "not json").unwrap();
    assert!(ServerState::try_new(
        ServerConfig::new(Mode::Vulnerable),
        Clock::manual(0),
        Some(store)
    )
    .is_err());
}

#[test]
fn http_round_trip() {
    let state = std::sync::Arc::new(vulnerable_state());
    state.register("alice", tracker_a(), None);
    let handle = spawn(state, 0).unwrap();
    let base = handle.base_url();

    let env = plain_envelope(tracker_a());
    let (status, body) = http_post(
        &format!("{base}/1/devices/client/sync"),
        "text/xml",
        &env.to_xml(),
    )
    .unwrap();
    assert_eq!(status, 200, "{body}");
    assert!(body.contains("<response>"));

    let (status, body) =
        http_get(&format!("{base}/1/user/alice/activities/date/2017-01-15.json")).unwrap();
    assert_eq!(status, 200);
    assert!(body.contains("\"steps\":10000"), "{body}");
    assert!(body.contains("\"distance_km\":\"10.00\""), "{body}");
    handle.stop();
}
