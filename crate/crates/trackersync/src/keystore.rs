//! Key file format shared by the tracker simulator and server: one
//! `TRACKERID KEYHEX` pair per line, the key as 32 hex characters.
//! Blank lines and `#` comments are ignored.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use crate::codec::TrackerId;
use crate::crypto::DeviceKey;

pub type Keystore = BTreeMap<TrackerId, DeviceKey>;

pub fn parse(text: &str) -> io::Result<Keystore> {
    let mut out = Keystore::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(id), Some(key)) = (fields.next(), fields.next()) else {
            return Err(bad_line(lineno));
        };
        let id: TrackerId = id.parse().map_err(|_| bad_line(lineno))?;
        let key = DeviceKey::from_hex(key).map_err(|_| bad_line(lineno))?;
        out.insert(id, key);
    }
    Ok(out)
}

fn bad_line(lineno: usize) -> io::Error {
    io::Error::new(
        io::ErrorKind::InvalidData,
        format!("malformed keystore line {}", lineno + 1),
    )
}

pub fn load(path: &Path) -> io::Result<Keystore> {
    parse(&std::fs::read_to_string(path)?)
}

pub fn save(path: &Path, store: &Keystore) -> io::Result<()> {
    let mut text = String::new();
    for (id, key) in store {
        text.push_str(&format!("{id} {}\n", hex::encode(key.to_bytes())));
    }
    std::fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let text = "# keys\n0A0B0C0D0E0F 00112233445566778899AABBCCDDEEFF\n";
        let store = parse(text).unwrap();
        let id: TrackerId = "0A0B0C0D0E0F".parse().unwrap();
        assert_eq!(
            store.get(&id).unwrap().to_bytes()[..2],
            [0x00, 0x11]
        );

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("keys");
        save(&path, &store).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded.get(&id).unwrap().to_bytes(), store.get(&id).unwrap().to_bytes());
    }

    #[test]
    fn malformed_line_rejected() {
        assert!(parse("0A0B0C0D0E0F\n").is_err());
        assert!(parse("0A0B0C0D0E0F zz\n").is_err());
    }
}
