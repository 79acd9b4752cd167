//! Durable account storage: JSON on disk, written atomically via a
//! temp file and rename so a crash never leaves a half-written store.

use std::io;
use std::path::Path;

use thiserror::Error;

use super::Accounts;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt store: {0}")]
    Corrupt(String),
}

pub fn load_accounts(path: &Path) -> Result<Accounts, StoreError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| StoreError::Corrupt(e.to_string()))
}

pub fn save_accounts(path: &Path, accounts: &Accounts) -> Result<(), StoreError> {
    let text = serde_json::to_string_pretty(accounts)
        .map_err(|e| StoreError::Corrupt(e.to_string()))?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
