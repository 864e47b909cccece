//! Report envelope and output emission.
//!
//! Reports are serialized with fixed field order and deterministic float
//! formatting, so identical configurations produce byte-identical output.

use crate::Failure;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

/// SHA-256 of the effective configuration's canonical JSON encoding.
pub fn config_sha256<C: Serialize>(config: &C) -> String {
    let bytes = serde_json::to_vec(config).expect("config serialization cannot fail");
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write;
        write!(hex, "{b:02x}").expect("hex formatting cannot fail");
    }
    hex
}

/// The uniform report wrapper: which command ran, whether results come from
/// exact arithmetic or quadrature, the effective configuration with its
/// hash, the tolerances the verdicts used, and the results themselves.
#[derive(Serialize)]
pub struct Envelope<C: Serialize, R: Serialize> {
    pub command: &'static str,
    pub provenance: &'static str,
    pub config: C,
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<serde_json::Value>,
    pub results: R,
}

pub fn envelope<C: Serialize, R: Serialize>(
    command: &'static str,
    provenance: &'static str,
    config: C,
    tolerances: Option<serde_json::Value>,
    results: R,
) -> Envelope<C, R> {
    let config_sha256 = config_sha256(&config);
    Envelope {
        command,
        provenance,
        config,
        config_sha256,
        tolerances,
        results,
    }
}

/// Writes the optional JSON and CSV files, then prints the report to
/// standard output. Files come first so artifacts survive a closed pipe; a
/// reader that stops consuming standard output ends the run quietly.
pub fn emit<C: Serialize, R: Serialize>(
    envelope: &Envelope<C, R>,
    json_path: Option<&Path>,
    csv: Option<(&Path, &str)>,
) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(envelope)
        .map_err(|e| Failure::io(format!("report serialization: {e}")))?;
    if let Some(path) = json_path {
        std::fs::write(path, format!("{text}\n"))
            .map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some((path, body)) = csv {
        std::fs::write(path, body)
            .map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
    }
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(Failure::io(format!("cannot write report to stdout: {e}"))),
    }
}

/// A CSV table under construction; fields are pre-formatted strings.
pub struct Csv {
    lines: Vec<String>,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        Csv {
            lines: vec![header.to_string()],
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.lines.push(fields.join(","));
    }

    pub fn finish(self) -> String {
        let mut body = self.lines.join("\n");
        body.push('\n');
        body
    }
}

/// Formats an optional float, leaving the field empty when absent.
pub fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
