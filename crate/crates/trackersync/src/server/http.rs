//! Minimal threaded HTTP/1.1 front end for the sync server, plus the
//! small client used by the sync agent and scenarios. Three public
//! routes mirror the cloud API; `/admin/*` routes exist for test and
//! scenario setup (account registration, manual clock control).

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use chrono::NaiveDate;

use super::{ServerError, ServerState, SyncOutcome};
use crate::envelope::{self, SyncEnvelope};

pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(join) = self.join.take() {
            let _ = join.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(join) = self.join.take() {
            let _ = join.join();
        }
    }
}

/// Bind and serve on a background thread. Pass port 0 for an ephemeral
/// port; the bound address is on the returned handle.
pub fn spawn(state: Arc<ServerState>, port: u16) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = shutdown.clone();
    let join = std::thread::spawn(move || {
        while !flag.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let state = state.clone();
                    std::thread::spawn(move || {
                        let _ = handle_connection(stream, &state);
                    });
                }
                Err(ref e) if e.kind() == io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(_) => break,
            }
        }
    });
    Ok(ServerHandle {
        addr,
        shutdown,
        join: Some(join),
    })
}

struct Request {
    method: String,
    path: String,
    query: String,
    body: String,
}

fn read_request(stream: &mut TcpStream) -> io::Result<Request> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let target = parts.next().unwrap_or_default().to_string();
    let (path, query) = match target.split_once('?') {
        Some((p, q)) => (p.to_string(), q.to_string()),
        None => (target, String::new()),
    };

    let mut content_length = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    Ok(Request {
        method,
        path,
        query,
        body: String::from_utf8_lossy(&body).into_owned(),
    })
}

fn write_response(
    stream: &mut TcpStream,
    status: u16,
    content_type: &str,
    body: &str,
) -> io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        429 => "Too Many Requests",
        _ => "Error",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
}

fn query_param(query: &str, name: &str) -> Option<String> {
    query.split('&').find_map(|pair| {
        let (k, v) = pair.split_once('=')?;
        (k == name).then(|| v.to_string())
    })
}

fn xml_error(msg: &str) -> String {
    envelope::server_response(&[("error", msg.to_string())])
}

fn render_sync_outcome(outcome: SyncOutcome) -> (u16, String) {
    match outcome {
        SyncOutcome::Accepted { ack } => (
            200,
            envelope::server_response(&[("response", envelope::encode_frame_b64(&ack))]),
        ),
        SyncOutcome::CrcMismatch { expected } => (
            400,
            envelope::server_response(&[
                ("error", "invalid CRC".to_string()),
                ("expected-crc", format!("{expected:04X}")),
            ]),
        ),
        SyncOutcome::LockedOut => (429, xml_error("locked out")),
        SyncOutcome::UnknownTracker => (404, xml_error("unknown tracker")),
        SyncOutcome::Invalid => (400, xml_error("invalid message")),
    }
}

fn handle_connection(mut stream: TcpStream, state: &ServerState) -> io::Result<()> {
    let req = read_request(&mut stream)?;
    let (status, content_type, body) = route(state, &req);
    write_response(&mut stream, status, content_type, &body)
}

fn route(state: &ServerState, req: &Request) -> (u16, &'static str, String) {
    const XML: &str = "text/xml";
    const JSON: &str = "application/json";
    match (req.method.as_str(), req.path.as_str()) {
        ("POST", "/1/devices/client/validate.json") => {
            let Ok(env) = SyncEnvelope::from_xml(&req.body) else {
                return (400, XML, xml_error("invalid message"));
            };
            let addr_ok = query_param(&req.query, "btAddress")
                .map(|a| a.eq_ignore_ascii_case(&env.tracker_id.to_string()))
                .unwrap_or(false);
            if !addr_ok {
                return (400, XML, xml_error("invalid message"));
            }
            match state.handle_validate(&env) {
                Ok(valid) => (
                    200,
                    XML,
                    envelope::server_response(&[("valid", valid.to_string())]),
                ),
                Err(_) => (400, XML, xml_error("invalid message")),
            }
        }
        ("POST", "/1/devices/client/sync") => {
            let Ok(env) = SyncEnvelope::from_xml(&req.body) else {
                return (400, XML, xml_error("invalid message"));
            };
            let (status, body) = render_sync_outcome(state.handle_sync(&env));
            (status, XML, body)
        }
        ("GET", path) if path.starts_with("/1/user/") && path.ends_with(".json") => {
            let rest = &path["/1/user/".len()..path.len() - ".json".len()];
            let Some((user, date)) = rest.split_once("/activities/date/") else {
                return (404, JSON, r#"{"error":"not found"}"#.to_string());
            };
            let Ok(date) = date.parse::<NaiveDate>() else {
                return (400, JSON, r#"{"error":"bad date"}"#.to_string());
            };
            match state.get_digest(user, date) {
                Ok(digest) => (
                    200,
                    JSON,
                    serde_json::json!({
                        "steps": digest.steps,
                        "distance_km": digest.distance_km,
                        "calories": digest.calories,
                        "active_minutes": digest.active_minutes,
                    })
                    .to_string(),
                ),
                Err(ServerError::UnknownUser) => {
                    (404, JSON, r#"{"error":"unknown user"}"#.to_string())
                }
                Err(ServerError::NoData(_)) => (404, JSON, r#"{"error":"no data"}"#.to_string()),
            }
        }
        ("POST", "/admin/register") => {
            #[derive(serde::Deserialize)]
            struct Register {
                user_id: String,
                tracker_id: crate::codec::TrackerId,
                device_key: Option<String>,
            }
            let Ok(reg) = serde_json::from_str::<Register>(&req.body) else {
                return (400, JSON, r#"{"error":"bad request"}"#.to_string());
            };
            let key = match reg.device_key {
                Some(hex) => match crate::crypto::DeviceKey::from_hex(&hex) {
                    Ok(k) => Some(k),
                    Err(_) => return (400, JSON, r#"{"error":"bad key"}"#.to_string()),
                },
                None => None,
            };
            state.register(&reg.user_id, reg.tracker_id, key);
            (200, JSON, r#"{"ok":true}"#.to_string())
        }
        ("POST", "/admin/clock") => {
            #[derive(serde::Deserialize)]
            struct Advance {
                advance_secs: u64,
            }
            let Ok(adv) = serde_json::from_str::<Advance>(&req.body) else {
                return (400, JSON, r#"{"error":"bad request"}"#.to_string());
            };
            let now = state.clock.advance(adv.advance_secs);
            (200, JSON, format!(r#"{{"now":{now}}}"#))
        }
        _ => (404, XML, xml_error("not found")),
    }
}

// ---------------------------------------------------------------------------
// Minimal HTTP client

fn split_url(url: &str) -> io::Result<(String, String)> {
    let rest = url
        .strip_prefix("http://")
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "only http:// URLs"))?;
    let (host, path) = match rest.split_once('/') {
        Some((h, p)) => (h.to_string(), format!("/{p}")),
        None => (rest.to_string(), "/".to_string()),
    };
    Ok((host, path))
}

fn request(method: &str, url: &str, content_type: &str, body: &str) -> io::Result<(u16, String)> {
    let (host, path) = split_url(url)?;
    let mut stream = TcpStream::connect(&host)?;
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {host}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    let mut response = String::new();
    BufReader::new(stream).read_to_string(&mut response)?;
    let status: u16 = response
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "bad status line"))?;
    let body = response
        .split_once("\r\n\r\n")
        .map(|(_, b)| b.to_string())
        .unwrap_or_default();
    Ok((status, body))
}

pub fn http_post(url: &str, content_type: &str, body: &str) -> io::Result<(u16, String)> {
    request("POST", url, content_type, body)
}

pub fn http_get(url: &str) -> io::Result<(u16, String)> {
    request("GET", url, "text/plain", "")
}
