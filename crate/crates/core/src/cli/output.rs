//! CSV tables and run manifests.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{Dataset, LearnerConfig};
use crate::scenarios::{CaseStudySpec, ScenarioSpec};

/// A table cell. Missing values print as `NA`.
pub enum Cell {
    Text(String),
    Num(f64),
    Int(i64),
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}
impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}
impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}
impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        Cell::Num(v.unwrap_or(f64::NAN))
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(v) if v.is_finite() => v.to_string(),
            Cell::Num(_) => "NA".into(),
            Cell::Int(i) => i.to_string(),
        }
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

/// Writes a header row and data rows with LF line endings.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<Cell>]) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(File::create(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(path: &Path, d: &Dataset, response: &str) -> Result<()> {
    let mut header: Vec<String> = d.feature_names().to_vec();
    header.push(response.to_string());
    let rows: Vec<Vec<Cell>> = d
        .x()
        .rows()
        .into_iter()
        .zip(d.y())
        .map(|(r, y)| r.iter().chain(std::iter::once(y)).map(|v| Cell::Num(*v)).collect())
        .collect();
    write_csv(path, &header, &rows)
}

/// Reads a numeric CSV. The response is the column named `response`, or
/// the last column when no such header exists.
pub fn read_dataset(path: &Path, response: &str) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new().from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(Error::InvalidData(format!(
            "{}: need at least one feature and a response column",
            path.display()
        )));
    }
    let y_col = header.iter().position(|h| h == response).unwrap_or(header.len() - 1);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidData(format!(
                    "{}: row {} column `{}` is not a number: `{field}`",
                    path.display(),
                    line + 2,
                    header[j]
                ))
            })?;
            if j == y_col {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    let n = ys.len();
    let p = header.len() - 1;
    let x = ndarray::Array2::from_shape_vec((n, p), xs)
        .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))?;
    let names = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != y_col)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::new(x, ndarray::Array1::from(ys), names)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedLearner {
    pub label: String,
    pub config: LearnerConfig,
}

/// Everything needed to rerun a command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Arguments after the program name.
    pub command: Vec<String>,
    pub seed: u64,
    pub scenario: Option<ScenarioSpec>,
    pub case_study: Option<CaseStudySpec>,
    pub learners: Vec<NamedLearner>,
    pub version: String,
    pub timestamp: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: Vec<String>, seed: u64) -> Self {
        Self {
            command,
            seed,
            scenario: None,
            case_study: None,
            learners: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        create_parent(path)?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// `data.csv` → `data.manifest.json`.
pub fn manifest_path_for(file: &Path) -> PathBuf {
    let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    file.with_file_name(format!("{stem}.manifest.json"))
}
