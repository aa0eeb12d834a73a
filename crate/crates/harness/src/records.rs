//! Run records and their CSV/JSON encodings.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column order of the CSV output.
pub const COLUMNS: [&str; 15] = [
    "run_id",
    "trajectory",
    "step",
    "predictor",
    "selected_index",
    "score_bits",
    "d_h",
    "d_h_stderr",
    "estimator",
    "errors_cum",
    "log_ratio_bits",
    "value_sel",
    "value_true",
    "value_gap",
    "seed",
];

#[derive(Debug, Error)]
pub enum RecordsError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("records lack column `{0}`")]
    MissingColumn(String),
    #[error("records mix runs {0} and {1}")]
    MixedRuns(String, String),
}

/// One `(trajectory, step, predictor)` row. Empty cells are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub run_id: String,
    pub trajectory: usize,
    pub step: usize,
    pub predictor: String,
    pub selected_index: Option<usize>,
    #[serde(with = "float_cell")]
    pub score_bits: Option<f64>,
    #[serde(with = "float_cell")]
    pub d_h: Option<f64>,
    #[serde(with = "float_cell")]
    pub d_h_stderr: Option<f64>,
    pub estimator: Option<String>,
    pub errors_cum: Option<usize>,
    #[serde(with = "float_cell")]
    pub log_ratio_bits: Option<f64>,
    #[serde(with = "float_cell")]
    pub value_sel: Option<f64>,
    #[serde(with = "float_cell")]
    pub value_true: Option<f64>,
    #[serde(with = "float_cell")]
    pub value_gap: Option<f64>,
    pub seed: u64,
    /// Rollout standard error of `value_gap`; kept in memory only.
    #[serde(skip)]
    pub value_gap_stderr: Option<f64>,
}

impl Row {
    pub fn new(run_id: &str, trajectory: usize, step: usize, predictor: &str, seed: u64) -> Self {
        Row {
            run_id: run_id.to_string(),
            trajectory,
            step,
            predictor: predictor.to_string(),
            selected_index: None,
            score_bits: None,
            d_h: None,
            d_h_stderr: None,
            estimator: None,
            errors_cum: None,
            log_ratio_bits: None,
            value_sel: None,
            value_true: None,
            value_gap: None,
            seed,
            value_gap_stderr: None,
        }
    }
}

/// Output encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// All rows of a run, sorted by `(trajectory, step, predictor order)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<Row>,
}

impl RunRecord {
    pub fn run_id(&self) -> Option<&str> {
        self.rows.first().map(|r| r.run_id.as_str())
    }

    /// Predictor labels in first-seen order.
    pub fn predictors(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.predictor) {
                seen.push(r.predictor.clone());
            }
        }
        seen
    }

    pub fn rows_for<'a>(&'a self, predictor: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.predictor == predictor)
    }

    /// Rows of one predictor grouped by trajectory, each group in step order.
    pub fn trajectories<'a>(&'a self, predictor: &'a str) -> Vec<Vec<&'a Row>> {
        let mut groups: std::collections::BTreeMap<usize, Vec<&Row>> = Default::default();
        for r in self.rows_for(predictor) {
            groups.entry(r.trajectory).or_default().push(r);
        }
        groups
            .into_values()
            .map(|mut g| {
                g.sort_by_key(|r| r.step);
                g
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), RecordsError> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        w.write_record(COLUMNS)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, RecordsError> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(input);
        let headers = rdr.headers()?.clone();
        if let Some(missing) = COLUMNS.iter().find(|c| !headers.iter().any(|h| h == **c)) {
            return Err(RecordsError::MissingColumn(missing.to_string()));
        }
        let rows = rdr.deserialize().collect::<Result<Vec<Row>, _>>()?;
        Self::checked(rows)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<(), RecordsError> {
        let mut out = std::io::BufWriter::new(out);
        serde_json::to_writer(&mut out, &self.rows)?;
        out.write_all(b"\n")
            .and_then(|_| out.flush())
            .map_err(|source| RecordsError::Io {
                path: "<output>".into(),
                source,
            })
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self, RecordsError> {
        let values: Vec<serde_json::Map<String, serde_json::Value>> =
            serde_json::from_reader(input)?;
        let mut rows = Vec::with_capacity(values.len());
        for v in values {
            if let Some(missing) = COLUMNS.iter().find(|c| !v.contains_key(**c)) {
                return Err(RecordsError::MissingColumn(missing.to_string()));
            }
            rows.push(serde_json::from_value(serde_json::Value::Object(v))?);
        }
        Self::checked(rows)
    }

    pub fn load(path: &Path) -> Result<Self, RecordsError> {
        let file = std::fs::File::open(path).map_err(|source| RecordsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let reader = std::io::BufReader::new(file);
        if path.extension().is_some_and(|e| e == "json") {
            Self::read_json(reader)
        } else {
            Self::read_csv(reader)
        }
    }

    pub fn save(&self, path: &Path, format: Format) -> Result<(), RecordsError> {
        let file = std::fs::File::create(path).map_err(|source| RecordsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let w = std::io::BufWriter::new(file);
        match format {
            Format::Csv => self.write_csv(w),
            Format::Json => self.write_json(w),
        }
    }

    fn checked(rows: Vec<Row>) -> Result<Self, RecordsError> {
        if let Some(first) = rows.first() {
            if let Some(other) = rows.iter().find(|r| r.run_id != first.run_id) {
                return Err(RecordsError::MixedRuns(
                    first.run_id.clone(),
                    other.run_id.clone(),
                ));
            }
        }
        Ok(RunRecord { rows })
    }
}

/// `Option<f64>` whose non-finite values travel as the strings `inf`, `-inf`
/// and `NaN`, which both CSV and JSON can carry.
mod float_cell {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_finite() => s.serialize_some(x),
            Some(x) if x.is_nan() => s.serialize_some("NaN"),
            Some(x) if *x > 0.0 => s.serialize_some("inf"),
            Some(_) => s.serialize_some("-inf"),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Cell {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Cell>::deserialize(d)? {
            None => Ok(None),
            Some(Cell::Num(x)) => Ok(Some(x)),
            Some(Cell::Text(t)) => t
                .parse::<f64>()
                .map(Some)
                .map_err(|_| serde::de::Error::custom(format!("not a number: {t}"))),
        }
    }
}
