//! Provenance block attached to every output file.

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "metaqst";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex SHA-256 of the compact JSON form of `value`.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("serializable value");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// `{tool, version, config_hash, ...extra}`. Contains nothing run-specific,
/// so identical configurations give identical files.
pub fn block<T: Serialize>(config: &T, extra: Value) -> Value {
    let mut out = json!({
        "tool": TOOL,
        "version": VERSION,
        "config_hash": hash_json(config),
    });
    if let (Some(o), Value::Object(e)) = (out.as_object_mut(), extra) {
        o.extend(e);
    }
    out
}

pub fn csv_comment(block: &Value) -> String {
    format!("# provenance: {block}\n")
}
