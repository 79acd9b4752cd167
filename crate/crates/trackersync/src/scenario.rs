//! Scripted end-to-end scenarios: one honest baseline plus the four
//! spoofing attacks (impersonation, fabrication, CRC oracle, hardware
//! injection) and the EEPROM decrypt-flag flip. Each scenario registers
//! the accounts it needs, runs against a live server, ends with a
//! digest fetch, and emits a machine-readable verdict.

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::agent::{AgentError, SyncAgent};
use crate::codec::{
    self, AlarmSection, CodecError, FrameHeader, Megadump, OverallSummary, PerMinuteSummary,
    TrackerId, FOOTER_LEN,
};
use crate::crypto::DeviceKey;
use crate::server::{http_get, http_post};
use crate::tracker::{new_tracker, TrackerError, FIRMWARE_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    Pass,
    Blocked,
}

impl std::str::FromStr for Expectation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pass" => Ok(Expectation::Pass),
            "blocked" => Ok(Expectation::Blocked),
            other => Err(format!("expectation must be pass or blocked, got {other}")),
        }
    }
}

impl Expectation {
    fn as_str(self) -> &'static str {
        match self {
            Expectation::Pass => "pass",
            Expectation::Blocked => "blocked",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioParams {
    pub server_url: String,
    pub tracker_id: TrackerId,
    pub date: NaiveDate,
    pub steps: u32,
    pub distance_mm: u32,
    pub protection_level: u8,
    pub expect: Expectation,
}

impl ScenarioParams {
    pub fn new(server_url: &str, tracker_id: TrackerId) -> Self {
        ScenarioParams {
            server_url: server_url.trim_end_matches('/').to_string(),
            tracker_id,
            date: NaiveDate::from_ymd_opt(2017, 1, 15).unwrap(),
            steps: 10_000,
            distance_mm: 10_000_000,
            protection_level: 0,
            expect: Expectation::Pass,
        }
    }

    fn noon(&self) -> u32 {
        self.date.and_hms_opt(12, 0, 0).unwrap().and_utc().timestamp() as u32
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("transport error: {0}")]
    Io(#[from] std::io::Error),
    #[error("server setup failed: {0}")]
    Setup(String),
    #[error("unknown scenario: {0}")]
    UnknownScenario(String),
}

/// Machine-readable scenario outcome. `met` drives the exit code.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub scenario: &'static str,
    pub expected: &'static str,
    pub observed: &'static str,
    pub met: bool,
    pub requests: u32,
    pub digest_before: Option<serde_json::Value>,
    pub digest_after: Option<serde_json::Value>,
    pub notes: Vec<String>,
}

impl Verdict {
    fn new(scenario: &'static str, expect: Expectation, attack_succeeded: bool) -> Self {
        let observed = if attack_succeeded {
            Expectation::Pass
        } else {
            Expectation::Blocked
        };
        Verdict {
            scenario,
            expected: expect.as_str(),
            observed: observed.as_str(),
            met: observed == expect,
            requests: 0,
            digest_before: None,
            digest_after: None,
            notes: Vec::new(),
        }
    }
}

/// Deterministic per-device key: the serial repeated across 16 bytes.
pub fn scenario_key(id: TrackerId) -> DeviceKey {
    let mut bytes = [0u8; 16];
    for (i, b) in bytes.iter_mut().enumerate() {
        *b = id.as_bytes()[i % 6];
    }
    DeviceKey::new(bytes)
}

fn user_for(id: TrackerId) -> String {
    format!("user-{}", id.to_string().to_lowercase())
}

fn register(server: &str, id: TrackerId, key: Option<&DeviceKey>) -> Result<(), ScenarioError> {
    let body = serde_json::json!({
        "user_id": user_for(id),
        "tracker_id": id.to_string(),
        "device_key": key.map(|k| hex::encode(k.to_bytes())),
    })
    .to_string();
    let (status, text) = http_post(&format!("{server}/admin/register"), "application/json", &body)?;
    if status != 200 {
        return Err(ScenarioError::Setup(format!("register: HTTP {status}: {text}")));
    }
    Ok(())
}

fn fetch_digest(
    server: &str,
    id: TrackerId,
    date: NaiveDate,
) -> Result<Option<serde_json::Value>, ScenarioError> {
    let url = format!(
        "{server}/1/user/{}/activities/date/{date}.json",
        user_for(id)
    );
    let (status, body) = http_get(&url)?;
    if status != 200 {
        return Ok(None);
    }
    Ok(serde_json::from_str(&body).ok())
}

fn digest_steps(digest: &Option<serde_json::Value>) -> Option<u64> {
    digest.as_ref()?.get("steps")?.as_u64()
}

/// Summary-only frame: daily, per-minute and alarm sections empty, the
/// overall section carrying the injected totals.
fn fabricated_dump(params: &ScenarioParams) -> Megadump {
    Megadump {
        header: FrameHeader {
            device_id: params.tracker_id,
            firmware_version: FIRMWARE_VERSION,
            encrypted: false,
            signed: false,
            sequence: 1,
        },
        daily: Vec::new(),
        per_minute: PerMinuteSummary::new(0, 2),
        overall: OverallSummary {
            timestamp: params.noon(),
            calories: 100,
            steps: params.steps,
            distance_mm: params.distance_mm,
            elevation: 0,
            floors: 0,
            active_minutes: 0,
        },
        alarms: AlarmSection::default(),
    }
}

pub fn run(name: &str, params: &ScenarioParams) -> Result<Verdict, ScenarioError> {
    match name {
        "honest-sync" => run_honest_sync(params),
        "impersonate" => run_impersonate(params),
        "fabricate" => run_fabricate(params),
        "crc-oracle" => run_crc_oracle(params),
        "hw-inject" => run_hw_inject(params),
        "hw-decrypt-flag" => run_hw_decrypt_flag(params),
        other => Err(ScenarioError::UnknownScenario(other.to_string())),
    }
}

/// Baseline: an encrypted, signed tracker syncing its own records.
pub fn run_honest_sync(params: &ScenarioParams) -> Result<Verdict, ScenarioError> {
    let server = &params.server_url;
    let key = scenario_key(params.tracker_id);
    register(server, params.tracker_id, Some(&key))?;

    let mut tracker = new_tracker(params.tracker_id, key, true);
    tracker.sign_messages = true;
    tracker.record_steps(params.noon(), params.steps)?;

    let mut agent = SyncAgent::new(server);
    let response = agent.sync(&mut tracker)?;
    let digest = fetch_digest(server, params.tracker_id, params.date)?;
    let synced = response.accepted() && digest_steps(&digest) == Some(params.steps as u64);

    let mut verdict = Verdict::new("honest-sync", params.expect, synced);
    verdict.requests = 1;
    verdict.digest_after = digest;
    verdict
        .notes
        .push(format!("recorded {} steps on-device", params.steps));
    Ok(verdict)
}

/// Replay an attacker tracker's plaintext frame under the victim's ID.
pub fn run_impersonate(params: &ScenarioParams) -> Result<Verdict, ScenarioError> {
    let server = &params.server_url;
    let victim = params.tracker_id;
    let mut attacker_bytes = *victim.as_bytes();
    attacker_bytes[0] ^= 0xFF;
    let attacker = TrackerId(attacker_bytes);

    register(server, victim, Some(&scenario_key(victim)))?;
    register(server, attacker, None)?;

    let mut tracker = new_tracker(attacker, scenario_key(attacker), false);
    tracker.record_steps(params.noon(), params.steps)?;
    let frame = tracker.generate_megadump()?;

    let before = fetch_digest(server, victim, params.date)?;
    let mut agent = SyncAgent::new(server);
    let response = agent.sync_raw(victim, frame)?;
    let after = fetch_digest(server, victim, params.date)?;

    let succeeded = response.accepted() && digest_steps(&after) == Some(params.steps as u64);
    let mut verdict = Verdict::new("impersonate", params.expect, succeeded);
    verdict.requests = 1;
    verdict.digest_before = before;
    verdict.digest_after = after;
    verdict.notes.push(format!(
        "frame from {attacker} submitted under victim ID {victim}"
    ));
    Ok(verdict)
}

/// Upload a summary-only frame with injected totals; no device at all.
pub fn run_fabricate(params: &ScenarioParams) -> Result<Verdict, ScenarioError> {
    let server = &params.server_url;
    register(server, params.tracker_id, Some(&scenario_key(params.tracker_id)))?;

    let frame = codec::encode_megadump(&fabricated_dump(params))?;
    let before = fetch_digest(server, params.tracker_id, params.date)?;
    let mut agent = SyncAgent::new(server);
    let response = agent.sync_raw(params.tracker_id, frame)?;
    let after = fetch_digest(server, params.tracker_id, params.date)?;

    let succeeded = response.accepted() && digest_steps(&after) == Some(params.steps as u64);
    let mut verdict = Verdict::new("fabricate", params.expect, succeeded);
    verdict.requests = 1;
    verdict.digest_before = before;
    verdict.digest_after = after;
    verdict.notes.push(format!(
        "summary-only frame: {} steps, {} mm, {}",
        params.steps, params.distance_mm, params.date
    ));
    Ok(verdict)
}

/// Submit with CRC 0x0000, read the expected value from the error
/// response, patch the frame, and resubmit.
pub fn run_crc_oracle(params: &ScenarioParams) -> Result<Verdict, ScenarioError> {
    let server = &params.server_url;
    register(server, params.tracker_id, Some(&scenario_key(params.tracker_id)))?;

    let mut frame = codec::encode_megadump(&fabricated_dump(params))?;
    let footer_at = frame.len() - FOOTER_LEN;
    frame[footer_at] = 0x00;
    frame[footer_at + 1] = 0x00;

    let mut agent = SyncAgent::new(server);
    let mut requests = 0u32;
    let first = agent.sync_raw(params.tracker_id, frame.clone())?;
    requests += 1;

    let mut verdict;
    match first.expected_crc {
        Some(expected) => {
            frame[footer_at..footer_at + 2].copy_from_slice(&expected.to_le_bytes());
            let second = agent.sync_raw(params.tracker_id, frame.clone())?;
            requests += 1;
            let after = fetch_digest(server, params.tracker_id, params.date)?;
            let succeeded = second.accepted()
                && requests == 2
                && digest_steps(&after) == Some(params.steps as u64);
            verdict = Verdict::new("crc-oracle", params.expect, succeeded);
            verdict.digest_after = after;
            let local = {
                let good = codec::encode_megadump(&fabricated_dump(params))?;
                let at = good.len() - FOOTER_LEN;
                u16::from_le_bytes([good[at], good[at + 1]])
            };
            verdict.notes.push(format!(
                "server leaked expected CRC {expected:04X}; sanity check: {}",
                if expected == local {
                    "matches local computation"
                } else {
                    "differs from local computation"
                }
            ));
        }
        None => {
            verdict = Verdict::new("crc-oracle", params.expect, false);
            verdict.digest_after = fetch_digest(server, params.tracker_id, params.date)?;
            verdict
                .notes
                .push("no expected-crc element in the error response".to_string());
        }
    }
    verdict.requests = requests;
    Ok(verdict)
}

/// Write 0x00FFFFFF into the overall step count through the debug port,
/// then sync the tampered EEPROM.
pub fn run_hw_inject(params: &ScenarioParams) -> Result<Verdict, ScenarioError> {
    let server = &params.server_url;
    let key = scenario_key(params.tracker_id);
    register(server, params.tracker_id, Some(&key))?;

    let mut tracker = new_tracker(params.tracker_id, key, true);
    tracker.sign_messages = true;
    tracker.record_steps(params.noon(), 10)?;
    tracker.set_protection_level(params.protection_level)?;

    let addr = match tracker.overall_steps_addr() {
        Ok(addr) => addr,
        Err(TrackerError::DebugDisabled(level)) => {
            let mut verdict = Verdict::new("hw-inject", params.expect, false);
            verdict
                .notes
                .push(format!("debug port disabled at protection level {level}"));
            return Ok(verdict);
        }
        Err(e) => return Err(e.into()),
    };
    if let Err(e) = tracker.debug_write(addr, &[0xFF, 0xFF, 0xFF, 0x00]) {
        let mut verdict = Verdict::new("hw-inject", params.expect, false);
        verdict.notes.push(format!("EEPROM write refused: {e}"));
        return Ok(verdict);
    }

    let before = fetch_digest(server, params.tracker_id, params.date)?;
    let mut agent = SyncAgent::new(server);
    let response = agent.sync(&mut tracker)?;
    let after = fetch_digest(server, params.tracker_id, params.date)?;

    let succeeded = response.accepted() && digest_steps(&after) == Some(16_777_215);
    let mut verdict = Verdict::new("hw-inject", params.expect, succeeded);
    verdict.requests = 1;
    verdict.digest_before = before;
    verdict.digest_after = after;
    verdict
        .notes
        .push(format!("wrote FF FF FF 00 at EEPROM address {addr:#06X}"));
    Ok(verdict)
}

/// Clear the EEPROM encryption flag so the next frame goes out in
/// plaintext, readable without the device key.
pub fn run_hw_decrypt_flag(params: &ScenarioParams) -> Result<Verdict, ScenarioError> {
    let server = &params.server_url;
    let key = scenario_key(params.tracker_id);
    register(server, params.tracker_id, Some(&key))?;

    let mut tracker = new_tracker(params.tracker_id, key, true);
    tracker.record_steps(params.noon(), params.steps)?;
    tracker.set_protection_level(params.protection_level)?;

    if let Err(e) = tracker.debug_write(crate::tracker::ENC_FLAG_OFFSET, &[0x00]) {
        let mut verdict = Verdict::new("hw-decrypt-flag", params.expect, false);
        verdict.notes.push(format!("EEPROM write refused: {e}"));
        return Ok(verdict);
    }

    let frame = tracker.generate_megadump()?;
    // the attack's point: the frame is now readable without the key
    let plaintext = codec::decode_megadump(&frame).is_ok();

    let before = fetch_digest(server, params.tracker_id, params.date)?;
    let mut agent = SyncAgent::new(server);
    let response = agent.sync_raw(params.tracker_id, frame)?;
    let after = fetch_digest(server, params.tracker_id, params.date)?;

    let succeeded = plaintext && response.accepted();
    let mut verdict = Verdict::new("hw-decrypt-flag", params.expect, succeeded);
    verdict.requests = 1;
    verdict.digest_before = before;
    verdict.digest_after = after;
    verdict.notes.push(if plaintext {
        "frame observed in plaintext without the device key".to_string()
    } else {
        "frame still encrypted".to_string()
    });
    Ok(verdict)
}
