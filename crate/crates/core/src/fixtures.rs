//! Golden-output regression fixtures.
//!
//! Layout of a fixture directory:
//!
//! ```text
//! <root>/<name>/config.json    study configuration
//! <root>/<name>/fixture.json   {"command": ..., "ms": [..]?, "digests": {file: sha256}}
//! <root>/<name>/golden/*.csv   blessed outputs
//! ```
//!
//! Verification reruns every fixture into a scratch directory and compares
//! output digests with the recorded ones. It also checks that the golden
//! files on disk still match their digests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{run_to_dir, sha256_hex, Command, ScenarioConfig, ScenarioError};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture directory {0} is missing or empty")]
    NoFixtures(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
    #[error("fixture {name}: {source}")]
    Run {
        name: String,
        #[source]
        source: ScenarioError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureMeta {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ms: Option<[f64; 3]>,
    #[serde(default)]
    pub digests: BTreeMap<String, String>,
}

impl FixtureMeta {
    pub fn to_command(&self) -> Result<Command, String> {
        match (self.command.as_str(), self.ms) {
            ("coverage", _) => Ok(Command::Coverage),
            ("pdp", Some(ms)) => Ok(Command::Pdp { ms }),
            ("pdp", None) => Err("pdp fixtures need `ms`".into()),
            ("chamber", _) => Ok(Command::Chamber),
            ("ffcheck", _) => Ok(Command::FfCheck),
            (other, _) => Err(format!("unknown command `{other}`")),
        }
    }
}

/// Outcome for one fixture; empty `problems` means it passed.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureReport {
    pub name: String,
    pub problems: Vec<String>,
}

impl FixtureReport {
    pub fn passed(&self) -> bool {
        self.problems.is_empty()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FixtureError {
    let path = path.to_path_buf();
    move |source| FixtureError::Io { path, source }
}

/// Fixture directories under `root`, sorted by name.
pub fn list_fixtures(root: &Path) -> Result<Vec<PathBuf>, FixtureError> {
    let entries =
        std::fs::read_dir(root).map_err(|_| FixtureError::NoFixtures(root.to_path_buf()))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("fixture.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(FixtureError::NoFixtures(root.to_path_buf()));
    }
    Ok(dirs)
}

fn load(dir: &Path) -> Result<(String, ScenarioConfig, FixtureMeta, Command), FixtureError> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let meta_path = dir.join("fixture.json");
    let text = std::fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: FixtureMeta = serde_json::from_str(&text).map_err(|e| FixtureError::Invalid {
        path: meta_path.clone(),
        reason: e.to_string(),
    })?;
    let command = meta.to_command().map_err(|reason| FixtureError::Invalid {
        path: meta_path,
        reason,
    })?;
    let cfg =
        ScenarioConfig::load(&dir.join("config.json")).map_err(|source| FixtureError::Run {
            name: name.clone(),
            source,
        })?;
    Ok((name, cfg, meta, command))
}

fn regenerate(
    name: &str,
    cfg: &ScenarioConfig,
    command: &Command,
) -> Result<BTreeMap<String, Vec<u8>>, FixtureError> {
    let scratch = tempfile::tempdir().map_err(io_err(Path::new("tempdir")))?;
    let manifest =
        run_to_dir(cfg, command, 0, scratch.path()).map_err(|source| FixtureError::Run {
            name: name.to_string(),
            source,
        })?;
    manifest
        .outputs
        .keys()
        .map(|file| {
            let path = scratch.path().join(file);
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            Ok((file.clone(), bytes))
        })
        .collect()
}

/// Reruns every fixture under `root` and reports digest mismatches.
pub fn verify_fixtures(root: &Path) -> Result<Vec<FixtureReport>, FixtureError> {
    let mut reports = Vec::new();
    for dir in list_fixtures(root)? {
        let (name, cfg, meta, command) = load(&dir)?;
        let outputs = regenerate(&name, &cfg, &command)?;
        let mut problems = Vec::new();
        for (file, bytes) in &outputs {
            let digest = sha256_hex(bytes);
            match meta.digests.get(file) {
                None => problems.push(format!("{file}: output has no recorded digest")),
                Some(d) if *d != digest => problems.push(format!(
                    "{file}: regenerated digest {digest} != recorded {d}"
                )),
                Some(_) => {}
            }
        }
        for (file, recorded) in &meta.digests {
            if !outputs.contains_key(file) {
                problems.push(format!("{file}: recorded but no longer produced"));
            }
            let golden = dir.join("golden").join(file);
            match std::fs::read(&golden) {
                Ok(bytes) if sha256_hex(&bytes) != *recorded => problems.push(format!(
                    "golden/{file}: contents do not match recorded digest"
                )),
                Ok(_) => {}
                Err(_) => problems.push(format!("golden/{file}: missing")),
            }
        }
        reports.push(FixtureReport { name, problems });
    }
    Ok(reports)
}

/// Regenerates goldens and digests for every fixture under `root`.
pub fn bless_fixtures(root: &Path) -> Result<usize, FixtureError> {
    let dirs = list_fixtures(root)?;
    for dir in &dirs {
        let (name, cfg, mut meta, command) = load(dir)?;
        let outputs = regenerate(&name, &cfg, &command)?;
        let golden_dir = dir.join("golden");
        if golden_dir.exists() {
            std::fs::remove_dir_all(&golden_dir).map_err(io_err(&golden_dir))?;
        }
        std::fs::create_dir_all(&golden_dir).map_err(io_err(&golden_dir))?;
        meta.digests.clear();
        for (file, bytes) in &outputs {
            let path = golden_dir.join(file);
            crate::report::write_atomic(&path, bytes).map_err(io_err(&path))?;
            meta.digests.insert(file.clone(), sha256_hex(bytes));
        }
        let meta_path = dir.join("fixture.json");
        let json =
            serde_json::to_string_pretty(&meta).expect("fixture metadata always serializes") + "\n";
        crate::report::write_atomic(&meta_path, json.as_bytes()).map_err(io_err(&meta_path))?;
        log::info!("blessed fixture {name}");
    }
    Ok(dirs.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_fixture(root: &Path) -> PathBuf {
        let dir = root.join("tiny");
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = serde_json::json!({
            "scene": {"surfaces": []},
            "frequency_hz": 27e9,
            "bs": [0.0, 0.0, 10.0],
            "ris": {"center": [0.0, 0.0, 0.0], "normal": [0.0, 0.0, 1.0], "nx": 4, "ny": 4},
            "area": {"origin": [0.0, 0.0], "extent_x": 2.0, "extent_y": 0.1, "ms_height": 5.0}
        });
        std::fs::write(dir.join("config.json"), cfg.to_string()).unwrap();
        std::fs::write(dir.join("fixture.json"), r#"{"command": "ffcheck"}"#).unwrap();
        dir
    }

    #[test]
    fn bless_then_verify() {
        let root = tempfile::tempdir().unwrap();
        let dir = write_fixture(root.path());
        let reports = verify_fixtures(root.path()).unwrap();
        assert!(!reports[0].passed());

        assert_eq!(bless_fixtures(root.path()).unwrap(), 1);
        let reports = verify_fixtures(root.path()).unwrap();
        assert!(reports[0].passed(), "{:?}", reports[0].problems);

        std::fs::write(dir.join("golden/ffcheck.csv"), "tampered\n").unwrap();
        let reports = verify_fixtures(root.path()).unwrap();
        assert_eq!(reports[0].problems.len(), 1);
        assert!(reports[0].problems[0].contains("golden/ffcheck.csv"));
    }

    #[test]
    fn empty_root_is_an_error() {
        let root = tempfile::tempdir().unwrap();
        assert!(matches!(
            verify_fixtures(root.path()),
            Err(FixtureError::NoFixtures(_))
        ));
        assert!(matches!(
            verify_fixtures(&root.path().join("missing")),
            Err(FixtureError::NoFixtures(_))
        ));
    }

    #[test]
    fn unknown_command_is_rejected() {
        let meta = FixtureMeta {
            command: "render".into(),
            ms: None,
            digests: BTreeMap::new(),
        };
        assert!(meta.to_command().is_err());
    }
}
