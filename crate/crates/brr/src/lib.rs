//! Console, script and JSON-protocol drivers for `brr-core` sessions.

pub mod dump;
pub mod frontend;
pub mod protocol;

use std::path::Path;

use anyhow::{Context, Result};
use brr_core::session::{Frontend, Session};

/// Loads each rule file into the session's world.
pub fn load_rules<F: Frontend>(session: &mut Session<F>, files: &[impl AsRef<Path>]) -> Result<()> {
    for f in files {
        let f = f.as_ref();
        let text = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        session.world.load_text(&text).with_context(|| format!("loading {}", f.display()))?;
    }
    Ok(())
}

/// Collapses runs of whitespace so transcripts compare modulo layout.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
