//! XTEA block cipher plus the payload modes built from it: CTR body
//! encryption, subkey derivation and CBC-MAC message authentication.
//!
//! Everything here is keyed by the 16-byte device key provisioned into
//! tracker EEPROM during manufacturing. Key material is never printed:
//! [`DeviceKey`] has an opaque `Debug` impl and no `Display`.

use thiserror::Error;

use crate::codec::{
    self, crc_ccitt, section_bodies, split_frame, CodecError, FrameFooter, Megadump, FOOTER_LEN,
    HEADER_LEN,
};

const DELTA: u32 = 0x9E37_79B9;
const ROUNDS: u32 = 32;

pub const NONCE_LEN: usize = 8;
pub const TAG_LEN: usize = 8;

/// Label for the message-signing subkey.
pub const LABEL_SIGN: &[u8; 8] = b"SIGN0001";
/// Label for a dedicated encryption subkey.
pub const LABEL_ENCR: &[u8; 8] = b"ENCR0001";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("block must be exactly 8 bytes, got {0}")]
    BadBlockLength(usize),
    #[error("key must be exactly 16 bytes, got {0}")]
    BadKeyLength(usize),
    #[error("unknown subkey label")]
    BadLabel,
    #[error("authentication tag mismatch")]
    BadTag,
    #[error("nonce already used with this key")]
    NonceReuse,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// 16-byte device secret. Never serialized into responses or logs.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct DeviceKey([u8; 16]);

impl std::fmt::Debug for DeviceKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("DeviceKey(..)")
    }
}

// Hex serialization exists for the persistent account store and key
// files; responses and logs never carry key material.
impl serde::Serialize for DeviceKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> serde::Deserialize<'de> for DeviceKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <String as serde::Deserialize>::deserialize(d)?;
        DeviceKey::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

impl DeviceKey {
    pub fn new(bytes: [u8; 16]) -> Self {
        DeviceKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 16] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadKeyLength(bytes.len()))?;
        Ok(DeviceKey(arr))
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(s.trim()).map_err(|_| CryptoError::BadKeyLength(0))?;
        Self::from_slice(&bytes)
    }

    /// Raw key bytes, for EEPROM provisioning and keystore files only.
    pub fn to_bytes(&self) -> [u8; 16] {
        self.0
    }

    fn words(&self) -> [u32; 4] {
        [
            u32::from_be_bytes(self.0[0..4].try_into().unwrap()),
            u32::from_be_bytes(self.0[4..8].try_into().unwrap()),
            u32::from_be_bytes(self.0[8..12].try_into().unwrap()),
            u32::from_be_bytes(self.0[12..16].try_into().unwrap()),
        ]
    }
}

/// Standard XTEA: 64-bit block, 32 cycles, delta 0x9E3779B9. Block and
/// key words are big-endian.
pub fn xtea_encrypt_block(key: &DeviceKey, block: &[u8]) -> Result<[u8; 8], CryptoError> {
    let block: [u8; 8] = block
        .try_into()
        .map_err(|_| CryptoError::BadBlockLength(block.len()))?;
    let k = key.words();
    let mut v0 = u32::from_be_bytes(block[0..4].try_into().unwrap());
    let mut v1 = u32::from_be_bytes(block[4..8].try_into().unwrap());
    let mut sum: u32 = 0;
    for _ in 0..ROUNDS {
        v0 = v0.wrapping_add(
            (((v1 << 4) ^ (v1 >> 5)).wrapping_add(v1)) ^ (sum.wrapping_add(k[(sum & 3) as usize])),
        );
        sum = sum.wrapping_add(DELTA);
        v1 = v1.wrapping_add(
            (((v0 << 4) ^ (v0 >> 5)).wrapping_add(v0))
                ^ (sum.wrapping_add(k[((sum >> 11) & 3) as usize])),
        );
    }
    let mut out = [0u8; 8];
    out[0..4].copy_from_slice(&v0.to_be_bytes());
    out[4..8].copy_from_slice(&v1.to_be_bytes());
    Ok(out)
}

pub fn xtea_decrypt_block(key: &DeviceKey, block: &[u8]) -> Result<[u8; 8], CryptoError> {
    let block: [u8; 8] = block
        .try_into()
        .map_err(|_| CryptoError::BadBlockLength(block.len()))?;
    let k = key.words();
    let mut v0 = u32::from_be_bytes(block[0..4].try_into().unwrap());
    let mut v1 = u32::from_be_bytes(block[4..8].try_into().unwrap());
    let mut sum: u32 = DELTA.wrapping_mul(ROUNDS);
    for _ in 0..ROUNDS {
        v1 = v1.wrapping_sub(
            (((v0 << 4) ^ (v0 >> 5)).wrapping_add(v0))
                ^ (sum.wrapping_add(k[((sum >> 11) & 3) as usize])),
        );
        sum = sum.wrapping_sub(DELTA);
        v0 = v0.wrapping_sub(
            (((v1 << 4) ^ (v1 >> 5)).wrapping_add(v1)) ^ (sum.wrapping_add(k[(sum & 3) as usize])),
        );
    }
    let mut out = [0u8; 8];
    out[0..4].copy_from_slice(&v0.to_be_bytes());
    out[4..8].copy_from_slice(&v1.to_be_bytes());
    Ok(out)
}

/// Nonce for a frame: the message sequence zero-extended to 8 bytes.
pub fn nonce_for_sequence(sequence: u32) -> [u8; NONCE_LEN] {
    let mut nonce = [0u8; NONCE_LEN];
    nonce[0..4].copy_from_slice(&sequence.to_le_bytes());
    nonce
}

/// XTEA-CTR keystream XOR. Keystream block i is the encryption of
/// `nonce[0..4] || i` (counter big-endian), so encrypt and decrypt are
/// the same operation.
pub fn ctr_xor(key: &DeviceKey, nonce: &[u8; NONCE_LEN], data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len());
    for (i, chunk) in data.chunks(8).enumerate() {
        let mut input = [0u8; 8];
        input[0..4].copy_from_slice(&nonce[0..4]);
        input[4..8].copy_from_slice(&(i as u32).to_be_bytes());
        let ks = xtea_encrypt_block(key, &input).expect("8-byte block");
        for (j, &b) in chunk.iter().enumerate() {
            out.push(b ^ ks[j]);
        }
    }
    out
}

/// Derive a 16-byte subkey: `E(key, label) || E(key, label ^ FF..FF)`.
pub fn derive_subkey(key: &DeviceKey, label: &[u8; 8]) -> Result<DeviceKey, CryptoError> {
    if label != LABEL_SIGN && label != LABEL_ENCR {
        return Err(CryptoError::BadLabel);
    }
    let lo = xtea_encrypt_block(key, label)?;
    let mut flipped = *label;
    for b in &mut flipped {
        *b ^= 0xFF;
    }
    let hi = xtea_encrypt_block(key, &flipped)?;
    let mut out = [0u8; 16];
    out[0..8].copy_from_slice(&lo);
    out[8..16].copy_from_slice(&hi);
    Ok(DeviceKey(out))
}

/// XTEA-CBC-MAC with a length-block prefix and zero padding.
pub fn mac(subkey: &DeviceKey, message: &[u8]) -> [u8; TAG_LEN] {
    let mut state = [0u8; 8];
    let len_block = (message.len() as u64).to_be_bytes();
    let mut absorb = |block: &[u8]| {
        let mut input = [0u8; 8];
        input[..block.len()].copy_from_slice(block);
        for (s, i) in state.iter_mut().zip(input.iter()) {
            *s ^= i;
        }
        state = xtea_encrypt_block(subkey, &state).expect("8-byte block");
    };
    absorb(&len_block);
    for chunk in message.chunks(8) {
        absorb(chunk);
    }
    state
}

pub fn verify_mac(subkey: &DeviceKey, message: &[u8], tag: &[u8]) -> Result<(), CryptoError> {
    if tag.len() == TAG_LEN && mac(subkey, message) == tag {
        Ok(())
    } else {
        Err(CryptoError::BadTag)
    }
}

/// Encrypt a megadump into an end-to-end protected frame.
///
/// Wire layout: plaintext header (encrypted flag set), then
/// `nonce(8) || ciphertext [|| tag(8)]`, then a footer whose CRC and
/// length cover that encrypted region. The ciphertext is the CTR
/// encryption of the plaintext section region; the optional tag is a
/// CBC-MAC under the signing subkey over `header || nonce || ciphertext`
/// (encrypt-then-MAC).
pub fn seal_megadump(dump: &Megadump, key: &DeviceKey, sign: bool) -> Result<Vec<u8>, CryptoError> {
    let mut header = dump.header;
    header.encrypted = true;
    header.signed = sign;
    let bodies = section_bodies(dump)?;
    let plain_region = codec::wire_region(&bodies);
    let nonce = nonce_for_sequence(header.sequence);
    let ciphertext = ctr_xor(key, &nonce, &plain_region);

    let header_bytes = header.encode();
    let mut region = Vec::with_capacity(NONCE_LEN + ciphertext.len() + TAG_LEN);
    region.extend_from_slice(&nonce);
    region.extend_from_slice(&ciphertext);
    if sign {
        let subkey = derive_subkey(key, LABEL_SIGN)?;
        let mut msg = Vec::with_capacity(header_bytes.len() + region.len());
        msg.extend_from_slice(&header_bytes);
        msg.extend_from_slice(&region);
        region.extend_from_slice(&mac(&subkey, &msg));
    }
    // CRC for encrypted frames covers the ciphertext region as sent.
    let footer = FrameFooter {
        crc: crc_ccitt(&region),
        payload_len: region.len() as u32,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + region.len() + FOOTER_LEN);
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&region);
    out.extend_from_slice(&footer.encode());
    Ok(out)
}

/// Decrypt and decode an encrypted frame. With `require_tag`, frames
/// without a valid signing-subkey MAC are rejected.
pub fn open_megadump(
    wire: &[u8],
    key: &DeviceKey,
    require_tag: bool,
) -> Result<Megadump, CryptoError> {
    let (header, region, footer) = split_frame(wire)?;
    if !header.encrypted {
        return Err(CodecError::EncryptedBody.into());
    }
    let expected = crc_ccitt(region);
    if footer.crc != expected {
        return Err(CodecError::BadCrc {
            expected,
            found: footer.crc,
        }
        .into());
    }
    if footer.payload_len as usize != region.len() {
        return Err(CodecError::LengthMismatch {
            declared: footer.payload_len,
            actual: region.len() as u32,
        }
        .into());
    }
    if region.len() < NONCE_LEN {
        return Err(CodecError::TruncatedFrame.into());
    }
    let (front, tag) = if header.signed {
        if region.len() < NONCE_LEN + TAG_LEN {
            return Err(CodecError::TruncatedFrame.into());
        }
        let split = region.len() - TAG_LEN;
        (&region[..split], Some(&region[split..]))
    } else {
        (region, None)
    };
    if require_tag && tag.is_none() {
        return Err(CryptoError::BadTag);
    }
    if let Some(tag) = tag {
        let subkey = derive_subkey(key, LABEL_SIGN)?;
        let mut msg = Vec::with_capacity(HEADER_LEN + front.len());
        msg.extend_from_slice(&wire[..HEADER_LEN]);
        msg.extend_from_slice(front);
        verify_mac(&subkey, &msg, tag)?;
    }
    let nonce: [u8; NONCE_LEN] = front[..NONCE_LEN].try_into().unwrap();
    let plain_region = ctr_xor(key, &nonce, &front[NONCE_LEN..]);
    let (sections, consumed) = codec::parse_sections(&plain_region)?;
    if consumed != plain_region.len() || sections.len() != 4 {
        return Err(CodecError::UnknownSectionLayout { offset: consumed }.into());
    }
    let mut it = sections.into_iter().map(|s| s.raw);
    let bodies = [
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    ];
    Ok(codec::bodies_to_megadump(header, &bodies)?)
}
