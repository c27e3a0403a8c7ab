//! Prediction streams and their CSV representation.
//!
//! ```text
//! # dataset=bank-marketing
//! # model=random-forest
//! # training_cut=10000
//! index,label,p_1
//! 1,0,0.12
//! 2,1,0.57
//! ```
//!
//! A single probability column holds the probability of label 1 (binary
//! stream). Two or more columns `p_1..p_K` hold the probabilities of labels
//! `0..K-1`. An optional `timestamp` column is carried through verbatim.
//! Leading `# key=value` lines are metadata.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::forecast::{Forecast, SIMPLEX_TOLERANCE};
use crate::loss::{check_epsilon, truncate};

/// Default tolerance on `|Σ p - 1|` for categorical rows.
pub const DEFAULT_SUM_TOLERANCE: f64 = 0.02;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StreamMetadata {
    pub dataset: Option<String>,
    pub model: Option<String>,
    pub training_cut: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub index: u64,
    pub label: usize,
    pub forecast: Forecast,
    pub timestamp: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionStream {
    records: Vec<Record>,
    arity: usize,
    binary: bool,
    pub metadata: StreamMetadata,
}

impl PredictionStream {
    /// Validates and wraps `records`: indices strictly increasing from 1,
    /// uniform forecast shape, labels within range.
    pub fn new(records: Vec<Record>, metadata: StreamMetadata) -> Result<Self> {
        let (arity, binary) = records
            .first()
            .map_or((2, true), |r| (r.forecast.arity(), r.forecast.is_binary()));
        let mut prev = 0;
        for (row, r) in records.iter().enumerate() {
            let row = row + 1;
            if r.index <= prev || (row == 1 && r.index != 1) {
                return Err(Error::Parse {
                    row,
                    message: format!("index {} breaks the 1-based increasing order", r.index),
                });
            }
            prev = r.index;
            if r.forecast.arity() != arity || r.forecast.is_binary() != binary {
                return Err(Error::Parse {
                    row,
                    message: format!("forecast arity {} differs from {arity}", r.forecast.arity()),
                });
            }
            r.forecast.check_label(r.label).map_err(|e| Error::Parse {
                row,
                message: e.to_string(),
            })?;
        }
        Ok(PredictionStream {
            records,
            arity,
            binary,
            metadata,
        })
    }

    /// Stream with indices `1..=n` built from forecasts and labels.
    pub fn from_observations(observations: Vec<(Forecast, usize)>) -> Result<Self> {
        let records = observations
            .into_iter()
            .enumerate()
            .map(|(i, (forecast, label))| Record {
                index: i as u64 + 1,
                label,
                forecast,
                timestamp: None,
            })
            .collect();
        Self::new(records, StreamMetadata::default())
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of labels `K`.
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn forecasts(&self) -> Vec<Forecast> {
        self.records.iter().map(|r| r.forecast.clone()).collect()
    }

    pub fn observations(&self) -> impl Iterator<Item = (&Forecast, usize)> {
        self.records.iter().map(|r| (&r.forecast, r.label))
    }

    pub fn to_observations(&self) -> Vec<(Forecast, usize)> {
        self.records
            .iter()
            .map(|r| (r.forecast.clone(), r.label))
            .collect()
    }

    /// Copy with every forecast truncated at level `eps`.
    pub fn truncated(&self, eps: f64) -> Result<Self> {
        check_epsilon(eps, self.arity)?;
        let records = self
            .records
            .iter()
            .map(|r| Record {
                forecast: truncate(&r.forecast, eps),
                ..r.clone()
            })
            .collect();
        Ok(PredictionStream {
            records,
            ..self.clone()
        })
    }

    /// Replaces the forecasts, keeping indices, labels and timestamps.
    pub(crate) fn with_forecasts(&self, forecasts: Vec<Forecast>) -> Self {
        let records = self
            .records
            .iter()
            .zip(forecasts)
            .map(|(r, forecast)| Record {
                forecast,
                ..r.clone()
            })
            .collect();
        PredictionStream {
            records,
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        if let Some(d) = &self.metadata.dataset {
            writeln!(writer, "# dataset={d}")?;
        }
        if let Some(m) = &self.metadata.model {
            writeln!(writer, "# model={m}")?;
        }
        if let Some(c) = self.metadata.training_cut {
            writeln!(writer, "# training_cut={c}")?;
        }
        let has_time = self.records.iter().any(|r| r.timestamp.is_some());
        let columns = if self.binary { 1 } else { self.arity };
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["index".to_string(), "label".to_string()];
        if has_time {
            header.push("timestamp".into());
        }
        header.extend((1..=columns).map(|i| format!("p_{i}")));
        out.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.index.to_string(), r.label.to_string()];
            if has_time {
                row.push(r.timestamp.clone().unwrap_or_default());
            }
            row.extend(r.forecast.columns().iter().map(f64::to_string));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadOptions {
    /// Categorical rows with `|Σ p - 1|` within this tolerance are
    /// renormalised; rows further off are rejected.
    pub sum_tolerance: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            sum_tolerance: DEFAULT_SUM_TOLERANCE,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StreamFormat {
    #[default]
    Csv,
}

pub fn load_stream(path: impl AsRef<Path>, format: StreamFormat) -> Result<PredictionStream> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    match format {
        StreamFormat::Csv => read_stream(BufReader::new(file), LoadOptions::default()),
    }
}

/// Parses a stream from CSV text. Probabilities are kept raw.
pub fn read_stream<R: Read>(reader: R, options: LoadOptions) -> Result<PredictionStream> {
    let mut reader = BufReader::new(reader);
    let mut metadata = StreamMetadata::default();
    let mut line = String::new();
    let mut skipped = 0usize;
    let mut body = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let trimmed = line.trim();
        if let Some(meta) = trimmed.strip_prefix('#') {
            skipped += 1;
            if let Some((key, value)) = meta.split_once('=') {
                let value = value.trim().to_string();
                match key.trim() {
                    "dataset" => metadata.dataset = Some(value),
                    "model" => metadata.model = Some(value),
                    "training_cut" => {
                        metadata.training_cut = Some(value.parse().map_err(|_| Error::Parse {
                            row: skipped,
                            message: format!("bad training_cut `{value}`"),
                        })?)
                    }
                    _ => {}
                }
            }
            continue;
        }
        body.push_str(&line);
        reader.read_to_string(&mut body)?;
        break;
    }

    let mut csv_reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = csv_reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let header_row = skipped + 1;
    let index_col = find("index").ok_or_else(|| Error::Parse {
        row: header_row,
        message: "missing `index` column".into(),
    })?;
    let label_col = find("label").ok_or_else(|| Error::Parse {
        row: header_row,
        message: "missing `label` column".into(),
    })?;
    let time_col = find("timestamp");
    let mut prob_cols = Vec::new();
    for k in 1.. {
        match find(&format!("p_{k}")) {
            Some(c) => prob_cols.push(c),
            None => break,
        }
    }
    if prob_cols.is_empty() {
        return Err(Error::Parse {
            row: header_row,
            message: "missing probability column `p_1`".into(),
        });
    }
    let binary = prob_cols.len() == 1;

    let mut records = Vec::new();
    for (i, row) in csv_reader.records().enumerate() {
        let row_no = header_row + i + 1;
        let row = row?;
        let field = |c: usize| row.get(c).unwrap_or("");
        let parse_err = |message: String| Error::Parse {
            row: row_no,
            message,
        };
        let index: u64 = field(index_col)
            .parse()
            .map_err(|_| parse_err(format!("bad index `{}`", field(index_col))))?;
        let label: usize = field(label_col)
            .parse()
            .map_err(|_| parse_err(format!("bad label `{}`", field(label_col))))?;
        let mut probs = Vec::with_capacity(prob_cols.len());
        for &c in &prob_cols {
            let v: f64 = field(c)
                .parse()
                .map_err(|_| parse_err(format!("bad probability `{}`", field(c))))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(parse_err(format!("probability {v} is outside [0, 1]")));
            }
            probs.push(v);
        }
        let forecast = if binary {
            Forecast::Binary(probs[0])
        } else {
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > options.sum_tolerance + SIMPLEX_TOLERANCE {
                return Err(parse_err(format!(
                    "probabilities sum to {total}, beyond tolerance {}",
                    options.sum_tolerance
                )));
            }
            if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
                probs.iter_mut().for_each(|v| *v /= total);
            }
            Forecast::Categorical(probs)
        };
        if label >= forecast.arity() {
            return Err(parse_err(format!(
                "label {label} is unknown for {} labels",
                forecast.arity()
            )));
        }
        records.push(Record {
            index,
            label,
            forecast,
            timestamp: time_col.map(|c| field(c).to_string()),
        });
    }
    let mut stream = PredictionStream::new(records, metadata).map_err(|e| match e {
        Error::Parse { row, message } => Error::Parse {
            row: row + header_row,
            message,
        },
        other => other,
    })?;
    if stream.records.is_empty() && !binary {
        stream.arity = prob_cols.len();
        stream.binary = false;
    }
    Ok(stream)
}
