//! The experiment commands. Each module exposes a config type, a `compute`
//! function that returns in-memory results, a `write` function for the
//! artifacts and a `command` entry point used by the binary.

pub mod flow_diagnostics;
pub mod implicit_reg;
pub mod pipeline_compare;
pub mod quadratic_nn;
pub mod rip_report;
pub mod verify;

use anyhow::Result;
use serde::Serialize;

use crate::config::Common;

/// Sizes the global rayon pool. A pool that already exists is left alone.
pub fn setup_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// The resolved configuration as one flat JSON object.
pub fn config_echo<T: Serialize>(common: &Common, section: &T) -> Result<serde_json::Value> {
    let mut merged = serde_json::to_value(common)?;
    if let (Some(m), serde_json::Value::Object(s)) = (merged.as_object_mut(), serde_json::to_value(section)?) {
        m.extend(s);
    }
    Ok(merged)
}

/// `count` consecutive seeds starting at `base`.
pub fn seed_list(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}
