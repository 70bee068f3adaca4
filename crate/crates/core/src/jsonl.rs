//! Helpers shared by the append-only JSON Lines files.

use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::Path;

/// Takes an exclusive advisory lock. `Ok(false)` if another handle holds it.
pub fn try_lock(file: &File) -> std::io::Result<bool> {
    match file.try_lock() {
        Ok(()) => Ok(true),
        Err(std::fs::TryLockError::WouldBlock) => Ok(false),
        Err(std::fs::TryLockError::Error(e)) => Err(e),
    }
}

/// Cuts a partial trailing line so the next append starts on a fresh line.
pub fn truncate_partial_tail(file: &mut File, path: &Path) -> std::io::Result<()> {
    let len = file.seek(SeekFrom::End(0))?;
    if len == 0 {
        return Ok(());
    }
    let mut buf = Vec::new();
    file.seek(SeekFrom::Start(0))?;
    file.read_to_end(&mut buf)?;
    if buf.last() == Some(&b'\n') {
        return Ok(());
    }
    let keep = buf.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    log::warn!("{}: dropping {} bytes of truncated trailing line", path.display(), buf.len() - keep);
    file.set_len(keep as u64)?;
    file.seek(SeekFrom::End(0))?;
    Ok(())
}
