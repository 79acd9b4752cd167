/* C bindings for the trackersync frame codec and crypto suite. */

#ifndef TRACKERSYNC_H
#define TRACKERSYNC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every FFI entry point.
 */
typedef enum TsStatus {
  TsStatus_Ok = 0,
  TsStatus_NullPointer = 1,
  TsStatus_BufferTooSmall = 2,
  TsStatus_BadLength = 3,
  TsStatus_DecodeFailed = 4,
} TsStatus;

/**
 * Opaque handle to a decoded megadump.
 */
typedef struct TsMegadump TsMegadump;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * CRC-16/CCITT-FALSE over `data`.
 */
enum TsStatus ts_crc_ccitt(const uint8_t *data, size_t len, uint16_t *out);

/**
 * SLIP-escape a section body. `out` needs at most `2 * len` bytes; the
 * exact size is reported through `written` (also on BufferTooSmall).
 */
enum TsStatus ts_escape(const uint8_t *data, size_t len, uint8_t *out, size_t cap, size_t *written);

/**
 * Invert `ts_escape`. Fails with DecodeFailed on a dangling or unknown
 * escape byte.
 */
enum TsStatus ts_unescape(const uint8_t *data,
                          size_t len,
                          uint8_t *out,
                          size_t cap,
                          size_t *written);

/**
 * XTEA-encrypt one 8-byte block with a 16-byte key.
 */
enum TsStatus ts_xtea_encrypt_block(const uint8_t *key, const uint8_t *block, uint8_t *out);

/**
 * XTEA-decrypt one 8-byte block with a 16-byte key.
 */
enum TsStatus ts_xtea_decrypt_block(const uint8_t *key, const uint8_t *block, uint8_t *out);

/**
 * Decode a plaintext megadump frame into an opaque handle. The handle
 * must be released with `ts_megadump_free`.
 */
enum TsStatus ts_megadump_decode(const uint8_t *frame, size_t len, struct TsMegadump **out);

void ts_megadump_free(struct TsMegadump *handle);

/**
 * Overall step total of a decoded frame.
 */
enum TsStatus ts_megadump_steps(const struct TsMegadump *handle, uint32_t *out);

/**
 * Overall distance in millimeters.
 */
enum TsStatus ts_megadump_distance_mm(const struct TsMegadump *handle, uint32_t *out);

/**
 * Overall summary timestamp (Unix seconds).
 */
enum TsStatus ts_megadump_timestamp(const struct TsMegadump *handle, uint32_t *out);

/**
 * Device ID as 12 uppercase hex digits plus NUL; `out` needs 13 bytes.
 */
enum TsStatus ts_megadump_device_id(const struct TsMegadump *handle, char *out, size_t cap);

/**
 * Render the field-by-field dissection of a captured frame. The
 * returned string must be released with `ts_string_free`.
 */
char *ts_dissect(const uint8_t *frame, size_t len);

void ts_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TRACKERSYNC_H */
