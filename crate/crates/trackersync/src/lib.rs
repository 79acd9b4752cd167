//! Simulated fitness tracker ecosystem: wire codec, XTEA crypto suite,
//! tracker device with an EEPROM memory model, sync server with
//! vulnerable and hardened modes, and scripted attack scenarios.

pub mod agent;
pub mod codec;
pub mod crypto;
pub mod envelope;
pub mod keystore;
pub mod scenario;
pub mod server;
pub mod tracker;
