//! `manifest.json`: one entry per command run into an output directory.

use crate::pipeline::{Check, FileEntry, RunResult};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub command: String,
    pub version: String,
    /// Decimal string, so seeds above `2⁵³` survive JSON readers.
    pub seed: String,
    pub config: String,
    pub threads: usize,
    pub files: Vec<FileEntry>,
    pub checks: Vec<Check>,
    pub exit_code: i32,
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub runs: Vec<RunEntry>,
}

impl Manifest {
    /// The manifest in `out`, or an empty one if there is none yet. An
    /// unreadable manifest is an error rather than silently replaced.
    pub fn load(out: &Path) -> RunResult<Manifest> {
        let path = out.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn append(out: &Path, run: RunEntry) -> RunResult<Manifest> {
        let mut m = Manifest::load(out)?;
        m.runs.push(run);
        crate::pipeline::write_json(&out.join(MANIFEST_FILE), &m)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(command: &str) -> RunEntry {
        RunEntry {
            command: command.into(),
            version: "0".into(),
            seed: u64::MAX.to_string(),
            config: "config.toml".into(),
            threads: 1,
            files: vec![],
            checks: vec![Check::at_most("x", 1.0, 2.0)],
            exit_code: 0,
            elapsed_seconds: 0.5,
        }
    }

    #[test]
    fn appends_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        Manifest::append(dir.path(), run("forward")).unwrap();
        let m = Manifest::append(dir.path(), run("reconstruct")).unwrap();
        assert_eq!(m.runs.len(), 2);
        assert_eq!(Manifest::load(dir.path()).unwrap(), m);
        assert_eq!(m.runs[0].seed, "18446744073709551615");
    }

    #[test]
    fn corrupt_manifest_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), "{").unwrap();
        assert!(Manifest::append(dir.path(), run("forward")).is_err());
    }
}
