//! CRC-16/CCITT-FALSE: polynomial 0x1021, initial value 0xFFFF,
//! no input/output reflection, no final XOR. Check value for
//! ASCII "123456789" is 0x29B1.

const POLY: u16 = 0x1021;
const INIT: u16 = 0xFFFF;

pub fn crc_ccitt(data: &[u8]) -> u16 {
    let mut crc = INIT;
    for &b in data {
        crc ^= (b as u16) << 8;
        for _ in 0..8 {
            if crc & 0x8000 != 0 {
                crc = (crc << 1) ^ POLY;
            } else {
                crc <<= 1;
            }
        }
    }
    crc
}
