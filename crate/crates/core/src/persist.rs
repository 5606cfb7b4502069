//! On-disk formats: newline-delimited record files, the run manifest, and
//! report files. The manifest is written last, so its presence certifies a
//! complete run.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DialogueRecord, Scenario};
use crate::orchestrator::{AblationFlags, BatchOutcome, DialogueFailure, RunConfig};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} at line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io { path: path.to_path_buf(), source }
}

/// Writes one JSON object per line. Serialization is canonical (key order
/// preserved from the source structs), so equal inputs yield equal bytes.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PersistError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| PersistError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(file, "{line}").map_err(io_err(path))?;
    }
    file.flush().map_err(io_err(path))?;
    Ok(())
}

/// Reads a newline-delimited record file; parse failures name the 1-based
/// line number. Blank lines are tolerated.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PersistError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| PersistError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Summary artifact for one generation run. Present on disk only after every
/// record has flushed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub ablations: AblationFlags,
    /// Scenario counts keyed "topic/teachable moment/source".
    pub scenario_counts: BTreeMap<String, usize>,
    pub dialogue_count: usize,
    pub failure_count: usize,
    pub failures: Vec<DialogueFailure>,
    pub started_at_unix: u64,
    pub finished_at_unix: u64,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn build_manifest(
    config: &RunConfig,
    scenarios: &[Scenario],
    outcome: &BatchOutcome,
    started_at_unix: u64,
) -> RunManifest {
    let mut scenario_counts = BTreeMap::new();
    for s in scenarios {
        let key = format!("{}/{}/{:?}", s.topic.name(), s.teachable_moment.name(), s.source);
        *scenario_counts.entry(key).or_insert(0) += 1;
    }
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.config_hash(),
        master_seed: config.master_seed,
        ablations: config.ablations,
        scenario_counts,
        dialogue_count: outcome.records.len(),
        failure_count: outcome.failures.len(),
        failures: outcome.failures.clone(),
        started_at_unix,
        finished_at_unix: unix_now(),
    }
}

/// File names inside a run directory.
pub const RECORDS_FILE: &str = "records.jsonl";
pub const QUARANTINE_FILE: &str = "quarantine.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes records, then quarantine, then the manifest. A crash mid-way
/// leaves no manifest behind.
pub fn write_run_outputs(
    dir: &Path,
    config: &RunConfig,
    scenarios: &[Scenario],
    outcome: &BatchOutcome,
    started_at_unix: u64,
) -> Result<RunManifest, PersistError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_jsonl(&dir.join(RECORDS_FILE), &outcome.records)?;
    if !outcome.failures.is_empty() {
        write_jsonl(&dir.join(QUARANTINE_FILE), &outcome.failures)?;
    }
    let manifest = build_manifest(config, scenarios, outcome, started_at_unix);
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, PersistError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| PersistError::Parse {
        path,
        line: 0,
        message: e.to_string(),
    })
}

pub fn read_records(path: &Path) -> Result<Vec<DialogueRecord>, PersistError> {
    read_jsonl(path)
}

pub fn read_scenarios(path: &Path) -> Result<Vec<Scenario>, PersistError> {
    read_jsonl(path)
}

pub fn now_unix() -> u64 {
    unix_now()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ScenarioSource, TeachableMoment, Topic};
    use crate::orchestrator::run_batch;
    use crate::provider::mock::MockProvider;
    use crate::provider::Gateway;
    use std::sync::Arc;

    fn scenario(id: &str) -> Scenario {
        Scenario {
            id: id.to_string(),
            topic: Topic::Abstinence,
            teachable_moment: TeachableMoment::MassMedia,
            description: "Something on TV prompted the conversation.".to_string(),
            source: ScenarioSource::Synthetic,
            probability: Some(1.0),
            persona_hints: None,
            extra: serde_json::Map::new(),
        }
    }

    #[test]
    fn jsonl_round_trips_byte_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenarios.jsonl");
        let items = vec![scenario("s1"), scenario("s2")];
        write_jsonl(&path, &items).unwrap();
        let back: Vec<Scenario> = read_jsonl(&path).unwrap();
        assert_eq!(back, items);

        let first = fs::read(&path).unwrap();
        write_jsonl(&path, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(&path, "{\"id\": \"ok\"}\nnot json\n").unwrap();
        let err = read_jsonl::<serde_json::Value>(&path).unwrap_err();
        match err {
            PersistError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_survive_a_rewrite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let mut s = scenario("s1");
        s.extra.insert("future_field".to_string(), serde_json::json!({"nested": [1, 2]}));
        write_jsonl(&path, &[s]).unwrap();
        let back: Vec<Scenario> = read_jsonl(&path).unwrap();
        assert_eq!(back[0].extra["future_field"]["nested"][1], 2);
        write_jsonl(&path, &back).unwrap();
        let again: Vec<Scenario> = read_jsonl(&path).unwrap();
        assert_eq!(again, back);
    }

    #[test]
    fn run_outputs_and_manifest_are_consistent() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig::default();
        let gw = Gateway::new(Arc::new(MockProvider::new()));
        let scenarios = vec![scenario("s1"), scenario("s2")];
        let outcome = run_batch(&scenarios, &config, &gw);
        let started = now_unix();
        let manifest =
            write_run_outputs(dir.path(), &config, &scenarios, &outcome, started).unwrap();

        assert_eq!(manifest.dialogue_count, 6);
        assert_eq!(manifest.failure_count, 0);
        assert_eq!(manifest.scenario_counts["abstinence/Mass Media/Synthetic"], 2);
        assert_eq!(manifest.config_hash, config.config_hash());

        let records = read_records(&dir.path().join(RECORDS_FILE)).unwrap();
        assert_eq!(records.len(), manifest.dialogue_count);
        assert!(!dir.path().join(QUARANTINE_FILE).exists());

        let back = read_manifest(dir.path()).unwrap();
        assert_eq!(back, manifest);
    }

    #[test]
    fn failures_land_in_quarantine() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig::default();
        let mock = MockProvider::new().with_failing_rule("responding to your child", 1000, "down");
        let gw = Gateway::new(Arc::new(mock));
        let scenarios = vec![scenario("s1")];
        let outcome = run_batch(&scenarios, &config, &gw);
        let manifest =
            write_run_outputs(dir.path(), &config, &scenarios, &outcome, now_unix()).unwrap();
        assert_eq!(manifest.failure_count, 3);
        let q: Vec<DialogueFailure> =
            read_jsonl(&dir.path().join(QUARANTINE_FILE)).unwrap();
        assert_eq!(q.len(), 3);
    }
}
