use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

/// Provenance block embedded in every output: enough to rerun the command
/// and reproduce the bytes.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub timestamp: String,
    pub seed: Option<u64>,
    pub params: serde_json::Value,
}

impl RunManifest {
    pub fn new<P: Serialize>(command: &str, seed: Option<u64>, params: &P) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: reproducible_timestamp(),
            seed,
            params: serde_json::to_value(params).expect("parameters serialize"),
        }
    }
}

/// Honors SOURCE_DATE_EPOCH so archived outputs stay byte-identical across
/// reruns; falls back to the wall clock.
fn reproducible_timestamp() -> String {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|raw| raw.parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now)
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}
