//! XML + Base64 envelope carrying raw frames between client and server.
//!
//! Request schema:
//!
//! ```xml
//! <galileo-client version="2.0">
//!   <tracker-id>0A0B0C0D0E0F</tracker-id>
//!   <data>...base64 frame...</data>
//! </galileo-client>
//! ```
//!
//! Server responses use a `galileo-server` root with `<response>`
//! (Base64 ack frame), `<valid>`, `<error>` and, in vulnerable mode
//! only, `<expected-crc>` elements.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use thiserror::Error;

use crate::codec::{TrackerId, FOOTER_LEN, HEADER_LEN};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvelopeError {
    #[error("missing element <{0}>")]
    MissingElement(&'static str),
    #[error("invalid Base64 payload")]
    BadBase64,
    #[error("invalid tracker id")]
    BadTrackerId,
    #[error("payload shorter than header plus footer")]
    PayloadTooShort,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncEnvelope {
    pub tracker_id: TrackerId,
    pub payload: Vec<u8>,
    pub client_version: String,
}

impl SyncEnvelope {
    pub fn new(tracker_id: TrackerId, payload: Vec<u8>) -> Self {
        SyncEnvelope {
            tracker_id,
            payload,
            client_version: "2.0".to_string(),
        }
    }

    pub fn to_xml(&self) -> String {
        format!(
            "<?xml version=\"1.0\"?>\n<galileo-client version=\"{}\">\n  <tracker-id>{}</tracker-id>\n  <data>{}</data>\n</galileo-client>\n",
            self.client_version,
            self.tracker_id,
            BASE64.encode(&self.payload)
        )
    }

    pub fn from_xml(xml: &str) -> Result<Self, EnvelopeError> {
        let tracker = extract(xml, "tracker-id").ok_or(EnvelopeError::MissingElement("tracker-id"))?;
        let data = extract(xml, "data").ok_or(EnvelopeError::MissingElement("data"))?;
        let tracker_id: TrackerId = tracker.trim().parse().map_err(|_| EnvelopeError::BadTrackerId)?;
        let payload = BASE64
            .decode(data.trim().as_bytes())
            .map_err(|_| EnvelopeError::BadBase64)?;
        if payload.len() < HEADER_LEN + FOOTER_LEN {
            return Err(EnvelopeError::PayloadTooShort);
        }
        let client_version = extract_attr(xml, "galileo-client", "version")
            .unwrap_or_else(|| "unknown".to_string());
        Ok(SyncEnvelope {
            tracker_id,
            payload,
            client_version,
        })
    }
}

/// Extract the text content of the first `<tag>...</tag>` element.
pub fn extract(xml: &str, tag: &str) -> Option<String> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = xml.find(&open)? + open.len();
    let end = xml[start..].find(&close)? + start;
    Some(xml[start..end].to_string())
}

fn extract_attr(xml: &str, tag: &str, attr: &str) -> Option<String> {
    let open = format!("<{tag} ");
    let start = xml.find(&open)? + open.len();
    let end = xml[start..].find('>')? + start;
    let attrs = &xml[start..end];
    let needle = format!("{attr}=\"");
    let vstart = attrs.find(&needle)? + needle.len();
    let vend = attrs[vstart..].find('"')? + vstart;
    Some(attrs[vstart..vend].to_string())
}

/// Encode a server response document.
pub fn server_response(elements: &[(&str, String)]) -> String {
    let mut out = String::from("<?xml version=\"1.0\"?>\n<galileo-server>\n");
    for (tag, value) in elements {
        out.push_str(&format!("  <{tag}>{value}</{tag}>\n"));
    }
    out.push_str("</galileo-server>\n");
    out
}

pub fn encode_frame_b64(frame: &[u8]) -> String {
    BASE64.encode(frame)
}

pub fn decode_frame_b64(text: &str) -> Result<Vec<u8>, EnvelopeError> {
    BASE64
        .decode(text.trim().as_bytes())
        .map_err(|_| EnvelopeError::BadBase64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trip() {
        let env = SyncEnvelope::new(
            "0A0B0C0D0E0F".parse().unwrap(),
            vec![0u8; HEADER_LEN + FOOTER_LEN],
        );
        let xml = env.to_xml();
        assert!(xml.contains("<tracker-id>0A0B0C0D0E0F</tracker-id>"));
        assert_eq!(SyncEnvelope::from_xml(&xml).unwrap(), env);
    }

    #[test]
    fn short_payload_rejected() {
        let env = SyncEnvelope::new("0A0B0C0D0E0F".parse().unwrap(), vec![0u8; 4]);
        assert_eq!(
            SyncEnvelope::from_xml(&env.to_xml()),
            Err(EnvelopeError::PayloadTooShort)
        );
    }

    #[test]
    fn missing_elements_rejected() {
        assert_eq!(
            SyncEnvelope::from_xml("<galileo-client></galileo-client>"),
            Err(EnvelopeError::MissingElement("tracker-id"))
        );
    }
}
