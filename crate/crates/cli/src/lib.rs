//! Command-line pipeline and query service for the air-quality engine.

pub mod config;
pub mod pipeline;
pub mod service;

/// One-line JSON error report: `{"error": kind, "message": text}`.
pub fn error_line(e: &anyhow::Error) -> String {
    let kind = e
        .downcast_ref::<aqmap_core::Error>()
        .map_or("error", aqmap_core::Error::kind);
    serde_json::json!({ "error": kind, "message": format!("{e:#}") }).to_string()
}
