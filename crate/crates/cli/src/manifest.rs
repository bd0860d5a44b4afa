use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::{Failure, Kind, Outcome};
use crate::settings::Settings;

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Debug, Serialize, PartialEq, Eq, Clone, Copy)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Complete,
    Failed,
}

/// `<command>.manifest.json` in the output directory. Written with status
/// `running` before work starts and rewritten when the command ends.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub status: Status,
    pub seed: Option<u64>,
    pub config: BTreeMap<String, String>,
    /// Input path → SHA-256 of its contents (directories are not hashed).
    pub inputs: BTreeMap<String, String>,
    /// Output file name → SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub model_sha256: Option<String>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub error: Option<String>,
    #[serde(skip)]
    dir: PathBuf,
}

impl Manifest {
    pub fn begin(command: &str, settings: &Settings) -> Outcome<Self> {
        fs::create_dir_all(&settings.out)
            .map_err(|e| Failure::new(Kind::Io, format!("{}: {e}", settings.out.display())))?;
        let mut m = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            status: Status::Running,
            seed: settings.seed,
            config: settings.snapshot.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            model_sha256: None,
            started_at: now(),
            finished_at: None,
            error: None,
            dir: settings.out.clone(),
        };
        let inputs = [&settings.embeddings, &settings.model, &settings.scores, &settings.annotations]
            .into_iter()
            .flatten()
            .chain(&settings.corpus);
        for path in inputs {
            if path.is_file() {
                let digest = sha256_file(path).map_err(|e| Failure::new(Kind::Io, format!("{}: {e}", path.display())))?;
                m.inputs.insert(path.display().to_string(), digest);
            }
        }
        m.write()?;
        Ok(m)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self) -> PathBuf {
        self.dir.join(format!("{}.manifest.json", self.command))
    }

    /// Records the checksum of a file already written in the output directory.
    pub fn record_output(&mut self, name: &str) -> Outcome {
        let path = self.dir.join(name);
        let digest = sha256_file(&path).map_err(|e| Failure::new(Kind::Io, format!("{}: {e}", path.display())))?;
        self.outputs.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn write(&self) -> Outcome {
        let path = self.path();
        let wrap = |e: io::Error| Failure::new(Kind::Io, format!("{}: {e}", path.display()));
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(wrap)?;
        serde_json::to_writer_pretty(&mut tmp, self).map_err(|e| wrap(e.into()))?;
        tmp.write_all(b"\n").map_err(wrap)?;
        tmp.persist(&path).map_err(|e| wrap(e.error))?;
        Ok(())
    }

    pub fn finish(mut self, result: &Outcome) -> Outcome {
        self.finished_at = Some(now());
        match result {
            Ok(()) => self.status = Status::Complete,
            Err(f) => {
                self.status = Status::Failed;
                self.error = Some(f.line());
            }
        }
        self.write()
    }
}
