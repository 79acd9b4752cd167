//! SLIP-style byte stuffing for data section bodies.
//!
//! Section bodies are escaped so that the literal terminator byte `C0`
//! never appears inside a section on the wire: `C0 -> DB DC` and
//! `DB -> DB DD`. Delimiters, headers and footers are never escaped.

use super::CodecError;

pub const END: u8 = 0xC0;
pub const ESC: u8 = 0xDB;
pub const ESC_END: u8 = 0xDC;
pub const ESC_ESC: u8 = 0xDD;

/// Byte sequence opening every data section on the wire.
pub const SECTION_START: [u8; 4] = [0xC0, 0xCD, 0xDB, 0xDC];

/// Escape a raw section body. Total function; the output never contains
/// a literal `C0`.
pub fn escape_section(raw: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(raw.len());
    for &b in raw {
        match b {
            END => out.extend_from_slice(&[ESC, ESC_END]),
            ESC => out.extend_from_slice(&[ESC, ESC_ESC]),
            _ => out.push(b),
        }
    }
    out
}

/// Invert [`escape_section`]. Fails on `DB` followed by anything other
/// than `DC`/`DD`, or on input ending mid-escape.
pub fn unescape_section(escaped: &[u8]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(escaped.len());
    let mut iter = escaped.iter();
    while let Some(&b) = iter.next() {
        if b == ESC {
            match iter.next() {
                Some(&ESC_END) => out.push(END),
                Some(&ESC_ESC) => out.push(ESC),
                Some(&other) => return Err(CodecError::MalformedEscape { found: Some(other) }),
                None => return Err(CodecError::MalformedEscape { found: None }),
            }
        } else {
            out.push(b);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn no_escapable_bytes_pass_through() {
        assert_eq!(escape_section(&[0x01, 0x02, 0x03]), vec![0x01, 0x02, 0x03]);
    }

    #[test]
    fn end_byte_maps_to_esc_esc_end() {
        assert_eq!(escape_section(&[0xC0]), vec![0xDB, 0xDC]);
    }

    #[test]
    fn mixed_escapes_by_hand() {
        // DB C0 DB -> DB DD, DB DC, DB DD
        assert_eq!(
            escape_section(&[0xDB, 0xC0, 0xDB]),
            vec![0xDB, 0xDD, 0xDB, 0xDC, 0xDB, 0xDD]
        );
    }

    #[test]
    fn unescape_end_mapping() {
        assert_eq!(unescape_section(&[0xDB, 0xDC]).unwrap(), vec![0xC0]);
        assert_eq!(unescape_section(&[0x01, 0x02]).unwrap(), vec![0x01, 0x02]);
    }

    #[test]
    fn unescape_rejects_unknown_escape() {
        assert!(matches!(
            unescape_section(&[0xDB, 0x00]),
            Err(CodecError::MalformedEscape { found: Some(0x00) })
        ));
    }

    #[test]
    fn unescape_rejects_trailing_escape() {
        assert!(matches!(
            unescape_section(&[0x01, 0xDB]),
            Err(CodecError::MalformedEscape { found: None })
        ));
    }

    proptest! {
        #[test]
        fn escape_never_emits_literal_end(data in proptest::collection::vec(any::<u8>(), 0..512)) {
            prop_assert!(!escape_section(&data).contains(&END));
        }

        #[test]
        fn unescape_inverts_escape(data in proptest::collection::vec(any::<u8>(), 0..512)) {
            prop_assert_eq!(unescape_section(&escape_section(&data)).unwrap(), data);
        }
    }
}
