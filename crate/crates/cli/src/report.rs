use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use cga_core::Result;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let mut hasher = Sha256::new();
        let mut file = File::open(path)?;
        let mut buf = [0u8; 1 << 16];
        loop {
            let read = file.read(&mut buf)?;
            if read == 0 {
                break;
            }
            hasher.update(&buf[..read]);
        }
        Ok(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(hasher.finalize()),
        })
    }
}

/// Wrapper around every command result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub command: String,
    pub inputs: Vec<InputDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// RFC 3339, UTC.
    pub timestamp: String,
    pub payload: Value,
}

impl ReportEnvelope {
    pub fn new(command: &str, inputs: &[PathBuf], seed: Option<u64>, payload: Value) -> Result<Self> {
        Ok(ReportEnvelope {
            command: command.to_owned(),
            inputs: inputs.iter().map(|p| InputDigest::of(p)).collect::<Result<_>>()?,
            seed,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            payload,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("envelopes always serialize")
    }

    /// Writes to `path`, or stdout when `None`.
    pub fn emit(&self, path: Option<&Path>) -> Result<()> {
        let text = self.to_json();
        match path {
            Some(p) => {
                let mut w = BufWriter::new(File::create(p)?);
                writeln!(w, "{text}")?;
                w.flush()?;
            }
            None => {
                let stdout = std::io::stdout();
                let mut lock = stdout.lock();
                writeln!(lock, "{text}")?;
            }
        }
        Ok(())
    }
}
