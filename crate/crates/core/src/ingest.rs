//! File ingestion: data tables (CSV or JSON), task annotations, and the
//! paired-fixture layout used by the bundled corpus.

use crate::error::{Error, Result};
use crate::model::{DataTable, Row, TaskSpec};
use std::path::{Path, PathBuf};

fn ingest_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Loads a data table. Format is keyed on the file extension: `.csv` expects
/// a `category,value` header, `.json` expects the table object used inside
/// chart specs (`{"rows": [...], "value_unit": ...}`).
pub fn load_table(path: &Path) -> Result<DataTable> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => load_table_csv(path),
        Some("json") => {
            let data = std::fs::read_to_string(path)?;
            let table: DataTable = serde_json::from_str(&data)
                .map_err(|e| ingest_err(path, e.to_string()))?;
            Ok(table)
        }
        other => Err(ingest_err(
            path,
            format!("unsupported table extension {other:?}; expected .csv or .json"),
        )),
    }
}

fn load_table_csv(path: &Path) -> Result<DataTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "category" || &headers[1] != "value" {
        return Err(ingest_err(
            path,
            format!("expected header \"category,value\", got {headers:?}"),
        ));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(ingest_err(path, format!("row {i}: expected 2 fields")));
        }
        let value: f64 = record[1]
            .parse()
            .map_err(|e| ingest_err(path, format!("row {i}: bad value {:?}: {e}", &record[1])))?;
        rows.push(Row {
            category: record[0].to_string(),
            value,
        });
    }
    Ok(DataTable {
        rows,
        value_unit: None,
    })
}

/// Loads a task annotation (`{"type": ..., "targets": [...], "question": ...}`).
pub fn load_task(path: &Path) -> Result<TaskSpec> {
    let data = std::fs::read_to_string(path)?;
    serde_json::from_str(&data).map_err(|e| ingest_err(path, e.to_string()))
}

/// One entry of a paired-fixture directory.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub chart_id: String,
    pub table: DataTable,
    pub task: TaskSpec,
    pub table_path: PathBuf,
    pub task_path: PathBuf,
}

/// Loads every `<chart_id>.csv` / `<chart_id>.task.json` pair in `dir`,
/// sorted by chart id. A table without its task file (or vice versa) is an
/// error rather than a silent skip.
pub fn load_fixtures(dir: &Path) -> Result<Vec<Fixture>> {
    let mut tables: Vec<(String, PathBuf)> = Vec::new();
    let mut tasks: Vec<(String, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(id) = name.strip_suffix(".task.json") {
            tasks.push((id.to_string(), path));
        } else if let Some(id) = name.strip_suffix(".csv") {
            tables.push((id.to_string(), path));
        }
    }
    tables.sort();
    tasks.sort();

    let task_ids: std::collections::BTreeMap<String, PathBuf> = tasks.into_iter().collect();
    let mut fixtures = Vec::new();
    let mut matched = std::collections::BTreeSet::new();
    for (id, table_path) in tables {
        let task_path = task_ids
            .get(&id)
            .ok_or_else(|| ingest_err(&table_path, format!("no task file for chart {id:?}")))?;
        matched.insert(id.clone());
        fixtures.push(Fixture {
            table: load_table(&table_path)?,
            task: load_task(task_path)?,
            chart_id: id,
            table_path,
            task_path: task_path.clone(),
        });
    }
    for (id, task_path) in &task_ids {
        if !matched.contains(id) {
            return Err(ingest_err(task_path, format!("no table file for chart {id:?}")));
        }
    }
    if fixtures.is_empty() {
        return Err(ingest_err(dir, "no fixture pairs found"));
    }
    Ok(fixtures)
}

/// Path of the fixtures directory shipped with the repository. For use in
/// tests and benches; binaries take the directory as an argument.
pub fn bundled_fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .unwrap_or_else(|_| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"))
}
