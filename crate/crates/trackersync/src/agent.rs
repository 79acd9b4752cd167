//! Sync agent: the phone/PC side of a sync session.
//!
//! Pulls a frame from a tracker, wraps it in the XML envelope, posts it
//! to the server and feeds the acknowledgment back to the device. The
//! agent is also the natural man-in-the-middle position: an optional
//! capture hook sees (and may rewrite) every frame in transit, and the
//! envelope tracker ID can be overridden independently of the frame.

use thiserror::Error;

use crate::codec::{decode_microdump, CodecError, TrackerId};
use crate::envelope::{self, EnvelopeError, SyncEnvelope};
use crate::server::http_post;
use crate::tracker::{TrackerState, TrackerError};

/// Frame rewrite hook applied between capture and upload.
pub type CaptureHook = Box<dyn FnMut(Vec<u8>) -> Vec<u8>>;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("transport error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Parsed server reply to one sync upload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncResponse {
    pub http_status: u16,
    pub ack: Option<Vec<u8>>,
    pub error: Option<String>,
    /// CRC oracle leak, present only on vulnerable-mode CRC errors.
    pub expected_crc: Option<u16>,
}

impl SyncResponse {
    pub fn accepted(&self) -> bool {
        self.http_status == 200 && self.ack.is_some()
    }
}

pub struct SyncAgent {
    server_url: String,
    /// Envelope tracker ID override; `None` uses the device's own ID.
    pub spoof_id: Option<TrackerId>,
    pub capture_modify: Option<CaptureHook>,
}

impl SyncAgent {
    pub fn new(server_url: &str) -> Self {
        SyncAgent {
            server_url: server_url.trim_end_matches('/').to_string(),
            spoof_id: None,
            capture_modify: None,
        }
    }

    /// Upload an already-built frame under the given envelope ID.
    pub fn sync_raw(&mut self, id: TrackerId, frame: Vec<u8>) -> Result<SyncResponse, AgentError> {
        let frame = match &mut self.capture_modify {
            Some(hook) => hook(frame),
            None => frame,
        };
        let envelope = SyncEnvelope::new(id, frame);
        let url = format!("{}/1/devices/client/sync", self.server_url);
        let (http_status, body) = http_post(&url, "text/xml", &envelope.to_xml())?;
        let ack = match envelope::extract(&body, "response") {
            Some(b64) => Some(envelope::decode_frame_b64(&b64)?),
            None => None,
        };
        let expected_crc = envelope::extract(&body, "expected-crc")
            .and_then(|s| u16::from_str_radix(s.trim(), 16).ok());
        Ok(SyncResponse {
            http_status,
            ack,
            error: envelope::extract(&body, "error"),
            expected_crc,
        })
    }

    /// Run one full sync session for a tracker: generate, upload, and
    /// apply the acknowledgment so the device clears its pending frame.
    pub fn sync(&mut self, tracker: &mut TrackerState) -> Result<SyncResponse, AgentError> {
        let frame = tracker.generate_megadump()?;
        let id = self.spoof_id.unwrap_or_else(|| tracker.device_id());
        let response = self.sync_raw(id, frame)?;
        if let Some(ack) = &response.ack {
            let micro = decode_microdump(ack)?;
            // A spoofed session addresses the ack to the wrong device;
            // the tracker rejecting it is expected, not a failure.
            let _ = tracker.apply_server_response(&micro);
        }
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::DeviceKey;
    use crate::server::{spawn, Clock, Mode, ServerConfig, ServerState};
    use crate::tracker::new_tracker;
    use std::sync::Arc;

    fn key() -> DeviceKey {
        DeviceKey::new(*b"0123456789ABCDEF")
    }

    fn id() -> TrackerId {
        "0A0B0C0D0E0F".parse().unwrap()
    }

    fn spawn_server(mode: Mode) -> (crate::server::ServerHandle, Arc<ServerState>) {
        let state = Arc::new(ServerState::new(
            ServerConfig::new(mode),
            Clock::manual(1_500_000_000),
            None,
        ));
        let handle = spawn(state.clone(), 0).unwrap();
        (handle, state)
    }

    const NOON: u32 = 1_484_481_600;

    #[test]
    fn honest_sync_clears_pending() {
        let (handle, state) = spawn_server(Mode::Vulnerable);
        state.register("alice", id(), None);
        let mut tracker = new_tracker(id(), key(), false);
        tracker.record_steps(NOON, 250).unwrap();

        let mut agent = SyncAgent::new(&handle.base_url());
        let response = agent.sync(&mut tracker).unwrap();
        assert!(response.accepted());
        assert!(tracker.pending().is_none());
        assert_eq!(
            state
                .get_digest("alice", "2017-01-15".parse().unwrap())
                .unwrap()
                .steps,
            250
        );
        handle.stop();
    }

    #[test]
    fn capture_hook_rewrites_plaintext_frames() {
        let (handle, state) = spawn_server(Mode::Vulnerable);
        state.register("alice", id(), None);
        let mut tracker = new_tracker(id(), key(), false);
        tracker.record_steps(NOON, 100).unwrap();

        let mut agent = SyncAgent::new(&handle.base_url());
        agent.capture_modify = Some(Box::new(|wire| {
            let mut dump = crate::codec::decode_megadump(&wire).unwrap();
            dump.overall.steps *= 2;
            crate::codec::encode_megadump(&dump).unwrap()
        }));
        assert!(agent.sync(&mut tracker).unwrap().accepted());
        assert_eq!(
            state
                .get_digest("alice", "2017-01-15".parse().unwrap())
                .unwrap()
                .steps,
            200
        );
        handle.stop();
    }

    #[test]
    fn tampered_encrypted_frame_rejected_in_hardened_mode() {
        let (handle, state) = spawn_server(Mode::Hardened);
        state.register("alice", id(), Some(key()));
        let mut tracker = new_tracker(id(), key(), true);
        tracker.sign_messages = true;
        tracker.record_steps(NOON, 100).unwrap();

        let mut agent = SyncAgent::new(&handle.base_url());
        agent.capture_modify = Some(Box::new(|mut wire| {
            // flip one ciphertext bit
            wire[30] ^= 0x01;
            wire
        }));
        let response = agent.sync(&mut tracker).unwrap();
        assert!(!response.accepted());
        assert_eq!(response.error.as_deref(), Some("invalid message"));
        assert_eq!(response.expected_crc, None);
        handle.stop();
    }

    #[test]
    fn spoofed_envelope_id_credits_the_victim() {
        let (handle, state) = spawn_server(Mode::Vulnerable);
        let victim: TrackerId = "B0B0B0B0B0B0".parse().unwrap();
        state.register("victim", victim, None);
        let mut tracker = new_tracker(id(), key(), false);
        tracker.record_steps(NOON, 77).unwrap();

        let mut agent = SyncAgent::new(&handle.base_url());
        agent.spoof_id = Some(victim);
        assert!(agent.sync(&mut tracker).unwrap().accepted());
        assert_eq!(
            state
                .get_digest("victim", "2017-01-15".parse().unwrap())
                .unwrap()
                .steps,
            77
        );
        handle.stop();
    }
}
