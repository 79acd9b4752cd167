//! Simulated sync server.
//!
//! Runs in one of two modes. *Vulnerable* reproduces the observed
//! server behavior: it accepts plaintext frames for any known tracker
//! ID, answers CRC mismatches with the expected checksum, and locks a
//! source out only after an error threshold. *Hardened* applies the
//! mitigations: encryption is required where the tracker supports it,
//! errors are generic, messages must carry a valid signing-subkey MAC,
//! and fraud screening runs before any merge.

mod http;
mod store;

pub use http::{http_get, http_post, spawn, ServerHandle};
pub use store::{load_accounts, save_accounts, StoreError};

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{
    decode_megadump, decode_microdump, encode_microdump, CodecError, FrameHeader, Megadump,
    Microdump, TrackerId,
};
use crate::crypto::{open_megadump, DeviceKey, LABEL_SIGN};
use crate::envelope::SyncEnvelope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Vulnerable,
    Hardened,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vulnerable" => Ok(Mode::Vulnerable),
            "hardened" => Ok(Mode::Hardened),
            other => Err(format!("unknown mode: {other}")),
        }
    }
}

/// Screening thresholds. Configurable policy, not ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FraudRules {
    pub max_daily_steps: u32,
    pub max_steps_per_minute: u32,
    pub stride_min_mm: u32,
    pub stride_max_mm: u32,
}

impl Default for FraudRules {
    fn default() -> Self {
        FraudRules {
            max_daily_steps: 100_000,
            max_steps_per_minute: 300,
            stride_min_mm: 200,
            stride_max_mm: 2_500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub mode: Mode,
    pub error_threshold: u32,
    pub lockout_secs: u64,
    pub fraud: FraudRules,
}

impl ServerConfig {
    pub fn new(mode: Mode) -> Self {
        ServerConfig {
            mode,
            error_threshold: 5,
            lockout_secs: 3_600,
            fraud: FraudRules::default(),
        }
    }
}

/// Server time source; manual clocks let tests step past lockouts.
#[derive(Clone)]
pub enum Clock {
    System,
    Manual(Arc<AtomicU64>),
}

impl Clock {
    pub fn manual(start: u64) -> Self {
        Clock::Manual(Arc::new(AtomicU64::new(start)))
    }

    pub fn now(&self) -> u64 {
        match self {
            Clock::System => std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .expect("clock after epoch")
                .as_secs(),
            Clock::Manual(t) => t.load(Ordering::SeqCst),
        }
    }

    /// Advance a manual clock; no-op on the system clock.
    pub fn advance(&self, secs: u64) -> u64 {
        match self {
            Clock::System => self.now(),
            Clock::Manual(t) => t.fetch_add(secs, Ordering::SeqCst) + secs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DayTotals {
    pub steps: u32,
    pub distance_mm: u32,
    pub calories: u16,
    pub floors: u16,
    pub active_minutes: u16,
}

/// Server-side user record binding a tracker ID to an activity log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Account {
    pub user_id: String,
    pub tracker_id: TrackerId,
    /// Present iff the tracker is encryption-capable.
    pub device_key: Option<DeviceKey>,
    pub daily_log: BTreeMap<NaiveDate, DayTotals>,
    pub fraud_flag: bool,
    pub error_count: u32,
    pub locked_until: Option<u64>,
}

impl Account {
    pub fn new(user_id: &str, tracker_id: TrackerId, device_key: Option<DeviceKey>) -> Self {
        Account {
            user_id: user_id.to_string(),
            tracker_id,
            device_key,
            daily_log: BTreeMap::new(),
            fraud_flag: false,
            error_count: 0,
            locked_until: None,
        }
    }
}

pub type Accounts = BTreeMap<TrackerId, Account>;

/// Per-date digest served over the user API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DigestReport {
    pub date: NaiveDate,
    pub steps: u32,
    pub distance_km: String,
    pub calories: u16,
    pub active_minutes: u16,
}

pub fn format_distance_km(distance_mm: u32) -> String {
    format!("{:.2}", distance_mm as f64 / 1_000_000.0)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ServerError {
    #[error("unknown user")]
    UnknownUser,
    #[error("no data for {0}")]
    NoData(NaiveDate),
}

/// Result of a sync request, rendered to XML by the HTTP layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyncOutcome {
    Accepted { ack: Vec<u8> },
    /// Vulnerable mode only: the CRC oracle.
    CrcMismatch { expected: u16 },
    LockedOut,
    UnknownTracker,
    /// Generic rejection; the only error hardened mode ever emits.
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FraudVerdict {
    Accept,
    Flag,
    Reject,
}

pub struct ServerState {
    pub config: ServerConfig,
    pub clock: Clock,
    pub accounts: Mutex<Accounts>,
    pub store_path: Option<PathBuf>,
}

impl ServerState {
    pub fn new(config: ServerConfig, clock: Clock, store_path: Option<PathBuf>) -> Self {
        let accounts = match &store_path {
            Some(path) if path.exists() => load_accounts(path).unwrap_or_default(),
            _ => Accounts::new(),
        };
        ServerState {
            config,
            clock,
            accounts: Mutex::new(accounts),
            store_path,
        }
    }

    /// Load persisted accounts, failing loudly on a corrupt store.
    pub fn try_new(
        config: ServerConfig,
        clock: Clock,
        store_path: Option<PathBuf>,
    ) -> Result<Self, StoreError> {
        let accounts = match &store_path {
            Some(path) if path.exists() => load_accounts(path)?,
            _ => Accounts::new(),
        };
        Ok(ServerState {
            config,
            clock,
            accounts: Mutex::new(accounts),
            store_path,
        })
    }

    fn persist(&self, accounts: &Accounts) {
        if let Some(path) = &self.store_path {
            // Persistence failures shouldn't take the server down.
            if let Err(err) = save_accounts(path, accounts) {
                eprintln!("store write failed: {err}");
            }
        }
    }

    pub fn register(&self, user_id: &str, tracker_id: TrackerId, key: Option<DeviceKey>) {
        let mut accounts = self.accounts.lock().unwrap();
        accounts.insert(tracker_id, Account::new(user_id, tracker_id, key));
        self.persist(&accounts);
    }

    /// Tracker validation: is this ID known and bound to an account?
    pub fn handle_validate(&self, envelope: &SyncEnvelope) -> Result<bool, CodecError> {
        decode_microdump(&envelope.payload)?;
        let accounts = self.accounts.lock().unwrap();
        Ok(accounts.contains_key(&envelope.tracker_id))
    }

    pub fn handle_sync(&self, envelope: &SyncEnvelope) -> SyncOutcome {
        let now = self.clock.now();
        let mut accounts = self.accounts.lock().unwrap();
        let outcome = self.sync_locked(&mut accounts, envelope, now);
        self.persist(&accounts);
        outcome
    }

    fn sync_locked(
        &self,
        accounts: &mut Accounts,
        envelope: &SyncEnvelope,
        now: u64,
    ) -> SyncOutcome {
        let hardened = self.config.mode == Mode::Hardened;

        let Some(account) = accounts.get_mut(&envelope.tracker_id) else {
            return if hardened {
                SyncOutcome::Invalid
            } else {
                SyncOutcome::UnknownTracker
            };
        };

        if let Some(until) = account.locked_until {
            if now < until {
                return if hardened {
                    SyncOutcome::Invalid
                } else {
                    SyncOutcome::LockedOut
                };
            }
            account.locked_until = None;
            account.error_count = 0;
        }

        let Ok(header) = FrameHeader::decode(&envelope.payload) else {
            return SyncOutcome::Invalid;
        };

        let decoded: Result<Megadump, SyncOutcome> = if header.encrypted {
            let Some(key) = &account.device_key else {
                return SyncOutcome::Invalid;
            };
            // The CRC oracle exists for plaintext frames only; any
            // encrypted-frame failure gets a generic rejection.
            open_megadump(&envelope.payload, key, hardened).map_err(|_| SyncOutcome::Invalid)
        } else if hardened {
            // Suggestions 1-3: no plaintext processing at all.
            Err(SyncOutcome::Invalid)
        } else {
            match decode_megadump(&envelope.payload) {
                Ok(dump) => Ok(dump),
                Err(CodecError::BadCrc { expected, .. }) => {
                    account.error_count += 1;
                    if account.error_count >= self.config.error_threshold {
                        account.locked_until = Some(now + self.config.lockout_secs);
                    }
                    Err(SyncOutcome::CrcMismatch { expected })
                }
                Err(_) => Err(SyncOutcome::Invalid),
            }
        };

        let dump = match decoded {
            Ok(dump) => dump,
            Err(outcome) => return outcome,
        };

        account.error_count = 0;

        if hardened {
            match fraud_check(&self.config.fraud, account, &dump) {
                FraudVerdict::Reject => return SyncOutcome::Invalid,
                FraudVerdict::Flag => account.fraud_flag = true,
                FraudVerdict::Accept => {}
            }
        }

        let date = chrono::DateTime::from_timestamp(dump.overall.timestamp as i64, 0)
            .map(|dt| dt.date_naive());
        if let Some(date) = date {
            // Merge is keyed by the envelope tracker ID, not by any
            // identity inside the frame; last write wins per date.
            account.daily_log.insert(
                date,
                DayTotals {
                    steps: dump.overall.steps,
                    distance_mm: dump.overall.distance_mm,
                    calories: dump.overall.calories,
                    floors: dump.overall.floors,
                    active_minutes: dump.overall.active_minutes,
                },
            );
        }

        let ack = encode_microdump(&Microdump {
            header: FrameHeader {
                device_id: envelope.tracker_id,
                firmware_version: header.firmware_version,
                encrypted: false,
                signed: false,
                sequence: header.sequence,
            },
            status_code: 0,
            battery_pct: 100,
        });
        SyncOutcome::Accepted { ack }
    }

    pub fn get_digest(&self, user_id: &str, date: NaiveDate) -> Result<DigestReport, ServerError> {
        let accounts = self.accounts.lock().unwrap();
        let account = accounts
            .values()
            .find(|a| a.user_id == user_id)
            .ok_or(ServerError::UnknownUser)?;
        let totals = account
            .daily_log
            .get(&date)
            .ok_or(ServerError::NoData(date))?;
        Ok(DigestReport {
            date,
            steps: totals.steps,
            distance_km: format_distance_km(totals.distance_mm),
            calories: totals.calories,
            active_minutes: totals.active_minutes,
        })
    }
}

/// Screen an incoming frame against the fraud rules.
pub fn fraud_check(rules: &FraudRules, _account: &Account, dump: &Megadump) -> FraudVerdict {
    let overall = &dump.overall;
    if overall.steps > rules.max_daily_steps {
        return FraudVerdict::Reject;
    }
    if dump.daily.iter().any(|d| d.steps > rules.max_daily_steps) {
        return FraudVerdict::Reject;
    }
    let slot_cap = rules.max_steps_per_minute as u64 * dump.per_minute.period_code as u64;
    if dump
        .per_minute
        .slots
        .iter()
        .any(|&s| s as u64 > slot_cap)
    {
        return FraudVerdict::Reject;
    }
    if overall.steps == 0 {
        if overall.distance_mm > 0 {
            return FraudVerdict::Flag;
        }
    } else {
        let stride = overall.distance_mm as u64 / overall.steps as u64;
        if stride < rules.stride_min_mm as u64 || stride > rules.stride_max_mm as u64 {
            return FraudVerdict::Flag;
        }
    }
    FraudVerdict::Accept
}

/// Subkey used to verify message signatures in hardened mode.
pub fn signing_subkey(key: &DeviceKey) -> DeviceKey {
    crate::crypto::derive_subkey(key, LABEL_SIGN).expect("known label")
}

#[cfg(test)]
mod tests;
