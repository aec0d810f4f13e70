//! Output files with provenance.
//!
//! JSON outputs are `{"provenance": …, "result": …}`; CSV outputs start
//! with one `# key=value …` comment line. Nothing time-dependent is written,
//! so equal inputs give byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(command: &str, config_sha256: &str, seed: Option<u64>) -> Self {
        Provenance {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_sha256: config_sha256.to_string(),
            seed,
        }
    }

    pub fn comment_line(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "schema_version={} tool_version={} command={} config_sha256={} seed={}",
            self.schema_version, self.tool_version, self.command, self.config_sha256, seed
        )
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    provenance: &'a Provenance,
    result: &'a T,
}

/// Output directory of one run.
#[derive(Debug, Clone)]
pub struct OutputDir {
    dir: PathBuf,
    provenance: Provenance,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path, provenance: Provenance) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            provenance,
            written: Vec::new(),
        })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<PathBuf, CliError> {
        let env = Envelope {
            provenance: &self.provenance,
            result,
        };
        let mut text =
            serde_json::to_string_pretty(&env).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// One CSV row per item. The header is given explicitly so that an
    /// empty table still has one; it must match the field order of `T`.
    pub fn csv<T: Serialize>(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[T],
    ) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        writeln!(buf, "# {}", self.provenance.comment_line()).expect("write to Vec");
        {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(&mut buf);
            w.write_record(header).expect("write to Vec");
            for r in rows {
                w.serialize(r).map_err(|e| CliError::Data(e.to_string()))?;
            }
            w.flush().expect("flush to Vec");
        }
        self.write(name, &buf)
    }

    /// Writes raw bytes produced elsewhere (already carrying provenance).
    pub fn raw(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        self.write(name, bytes)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        self.written.push(p.clone());
        Ok(p)
    }
}
