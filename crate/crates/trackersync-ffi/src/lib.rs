//! C ABI for the frame codec and crypto suite.
//!
//! Conventions: every function returns a `TsStatus` code (0 = success)
//! and writes results through out-pointers. Decoded megadumps are held
//! behind an opaque handle with accessor functions and an explicit
//! free. Strings returned by the library must be released with
//! `ts_string_free`.

use std::ffi::CString;
use std::slice;

use libc::{c_char, size_t};

use trackersync::codec::{
    crc_ccitt, decode_megadump, escape_section, render_dissection, unescape_section, Megadump,
};
use trackersync::crypto::{xtea_decrypt_block, xtea_encrypt_block, DeviceKey};

/// Status codes returned by every FFI entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullPointer = 1,
    BufferTooSmall = 2,
    BadLength = 3,
    DecodeFailed = 4,
}

/// Opaque handle to a decoded megadump.
pub struct TsMegadump {
    inner: Megadump,
}

unsafe fn input<'a>(data: *const u8, len: size_t) -> Option<&'a [u8]> {
    if data.is_null() && len != 0 {
        return None;
    }
    if len == 0 {
        return Some(&[]);
    }
    Some(slice::from_raw_parts(data, len))
}

fn copy_out(result: &[u8], out: *mut u8, cap: size_t, written: *mut size_t) -> TsStatus {
    if out.is_null() || written.is_null() {
        return TsStatus::NullPointer;
    }
    unsafe {
        *written = result.len();
        if result.len() > cap {
            return TsStatus::BufferTooSmall;
        }
        slice::from_raw_parts_mut(out, result.len()).copy_from_slice(result);
    }
    TsStatus::Ok
}

/// CRC-16/CCITT-FALSE over `data`.
#[no_mangle]
pub unsafe extern "C" fn ts_crc_ccitt(data: *const u8, len: size_t, out: *mut u16) -> TsStatus {
    let Some(data) = input(data, len) else {
        return TsStatus::NullPointer;
    };
    if out.is_null() {
        return TsStatus::NullPointer;
    }
    *out = crc_ccitt(data);
    TsStatus::Ok
}

/// SLIP-escape a section body. `out` needs at most `2 * len` bytes; the
/// exact size is reported through `written` (also on BufferTooSmall).
#[no_mangle]
pub unsafe extern "C" fn ts_escape(
    data: *const u8,
    len: size_t,
    out: *mut u8,
    cap: size_t,
    written: *mut size_t,
) -> TsStatus {
    let Some(data) = input(data, len) else {
        return TsStatus::NullPointer;
    };
    copy_out(&escape_section(data), out, cap, written)
}

/// Invert `ts_escape`. Fails with DecodeFailed on a dangling or unknown
/// escape byte.
#[no_mangle]
pub unsafe extern "C" fn ts_unescape(
    data: *const u8,
    len: size_t,
    out: *mut u8,
    cap: size_t,
    written: *mut size_t,
) -> TsStatus {
    let Some(data) = input(data, len) else {
        return TsStatus::NullPointer;
    };
    match unescape_section(data) {
        Ok(raw) => copy_out(&raw, out, cap, written),
        Err(_) => TsStatus::DecodeFailed,
    }
}

unsafe fn xtea_block(
    key: *const u8,
    block: *const u8,
    out: *mut u8,
    f: fn(&DeviceKey, &[u8]) -> Result<[u8; 8], trackersync::crypto::CryptoError>,
) -> TsStatus {
    if key.is_null() || block.is_null() || out.is_null() {
        return TsStatus::NullPointer;
    }
    let key = DeviceKey::from_slice(slice::from_raw_parts(key, 16)).expect("16 bytes");
    match f(&key, slice::from_raw_parts(block, 8)) {
        Ok(result) => {
            slice::from_raw_parts_mut(out, 8).copy_from_slice(&result);
            TsStatus::Ok
        }
        Err(_) => TsStatus::BadLength,
    }
}

/// XTEA-encrypt one 8-byte block with a 16-byte key.
#[no_mangle]
pub unsafe extern "C" fn ts_xtea_encrypt_block(
    key: *const u8,
    block: *const u8,
    out: *mut u8,
) -> TsStatus {
    xtea_block(key, block, out, |k, b| xtea_encrypt_block(k, b))
}

/// XTEA-decrypt one 8-byte block with a 16-byte key.
#[no_mangle]
pub unsafe extern "C" fn ts_xtea_decrypt_block(
    key: *const u8,
    block: *const u8,
    out: *mut u8,
) -> TsStatus {
    xtea_block(key, block, out, |k, b| xtea_decrypt_block(k, b))
}

/// Decode a plaintext megadump frame into an opaque handle. The handle
/// must be released with `ts_megadump_free`.
#[no_mangle]
pub unsafe extern "C" fn ts_megadump_decode(
    frame: *const u8,
    len: size_t,
    out: *mut *mut TsMegadump,
) -> TsStatus {
    let Some(frame) = input(frame, len) else {
        return TsStatus::NullPointer;
    };
    if out.is_null() {
        return TsStatus::NullPointer;
    }
    match decode_megadump(frame) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(TsMegadump { inner }));
            TsStatus::Ok
        }
        Err(_) => TsStatus::DecodeFailed,
    }
}

#[no_mangle]
pub unsafe extern "C" fn ts_megadump_free(handle: *mut TsMegadump) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Overall step total of a decoded frame.
#[no_mangle]
pub unsafe extern "C" fn ts_megadump_steps(handle: *const TsMegadump, out: *mut u32) -> TsStatus {
    if handle.is_null() || out.is_null() {
        return TsStatus::NullPointer;
    }
    *out = (*handle).inner.overall.steps;
    TsStatus::Ok
}

/// Overall distance in millimeters.
#[no_mangle]
pub unsafe extern "C" fn ts_megadump_distance_mm(
    handle: *const TsMegadump,
    out: *mut u32,
) -> TsStatus {
    if handle.is_null() || out.is_null() {
        return TsStatus::NullPointer;
    }
    *out = (*handle).inner.overall.distance_mm;
    TsStatus::Ok
}

/// Overall summary timestamp (Unix seconds).
#[no_mangle]
pub unsafe extern "C" fn ts_megadump_timestamp(
    handle: *const TsMegadump,
    out: *mut u32,
) -> TsStatus {
    if handle.is_null() || out.is_null() {
        return TsStatus::NullPointer;
    }
    *out = (*handle).inner.overall.timestamp;
    TsStatus::Ok
}

/// Device ID as 12 uppercase hex digits plus NUL; `out` needs 13 bytes.
#[no_mangle]
pub unsafe extern "C" fn ts_megadump_device_id(
    handle: *const TsMegadump,
    out: *mut c_char,
    cap: size_t,
) -> TsStatus {
    if handle.is_null() || out.is_null() {
        return TsStatus::NullPointer;
    }
    let id = (*handle).inner.header.device_id.to_string();
    if cap < id.len() + 1 {
        return TsStatus::BufferTooSmall;
    }
    let bytes = id.as_bytes();
    let dst = slice::from_raw_parts_mut(out as *mut u8, bytes.len() + 1);
    dst[..bytes.len()].copy_from_slice(bytes);
    dst[bytes.len()] = 0;
    TsStatus::Ok
}

/// Render the field-by-field dissection of a captured frame. The
/// returned string must be released with `ts_string_free`.
#[no_mangle]
pub unsafe extern "C" fn ts_dissect(frame: *const u8, len: size_t) -> *mut c_char {
    let Some(frame) = input(frame, len) else {
        return std::ptr::null_mut();
    };
    let text = render_dissection(frame);
    match CString::new(text) {
        Ok(s) => s.into_raw(),
        Err(_) => std::ptr::null_mut(),
    }
}

#[no_mangle]
pub unsafe extern "C" fn ts_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
