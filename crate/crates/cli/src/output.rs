//! Artifact files. Each starts with a `#` header naming the tool version,
//! the command and the SHA-256 of the configuration text.

use std::fs;
use std::path::{Path, PathBuf};

pub struct Artifacts {
    dir: PathBuf,
    header: String,
}

impl Artifacts {
    pub fn new(dir: &Path, command: &str, config_sha256: &str) -> Self {
        let header = format!(
            "# carlab {}\n# command: {command}\n# config-sha256: {config_sha256}\n",
            env!("CARGO_PKG_VERSION")
        );
        Self { dir: dir.to_path_buf(), header }
    }

    /// Writes the header followed by `body`.
    pub fn write(&self, name: &str, body: &[u8]) -> std::io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let mut bytes = self.header.clone().into_bytes();
        bytes.extend_from_slice(body);
        fs::write(self.dir.join(name), bytes)
    }

    /// Comma-separated table with a mandatory header row.
    pub fn table(&self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
        let mut body = columns.join(",");
        body.push('\n');
        for r in rows {
            body.push_str(&r.join(","));
            body.push('\n');
        }
        self.write(name, body.as_bytes())
    }
}

/// Shortest decimal that parses back to the same value, in exponent form
/// outside `[1e-4, 1e15)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, -0.0, 1.0, 0.1, 1.0 / 3.0, 8.205230482602569e-13, -2.5e300, 1e15, 9.99e-5, f64::MIN_POSITIVE] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(num(1e-13), "1e-13");
        assert_eq!(num(0.25), "0.25");
    }
}
