//! Dataset CSV interchange and the `key = value` config reader.
//!
//! The CSV dialect is deliberately plain: comma separators, no quoting, one
//! header line `time,event,cluster,<covariate names...>`. Times are written
//! with 17 significant digits so a write/read round trip is bit-exact;
//! covariates use the shortest representation that round-trips. The `event`
//! column holds 1 when the failure was observed and 0 when the record is
//! censored.

use std::path::Path;

use crate::error::{Error, Result};
use crate::likelihood::Dataset;
use crate::model::SubjectRecord;

/// Renders a dataset in the interchange format.
pub fn dataset_to_csv(data: &Dataset) -> Result<String> {
    let mut out = String::new();
    out.push_str("time,event,cluster");
    for name in data.covariate_names() {
        check_plain_field("covariate name", name)?;
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for subject in data.subjects() {
        check_plain_field("cluster id", &subject.cluster)?;
        out.push_str(&format!(
            "{:.16e},{},{}",
            subject.time,
            if subject.event { 1 } else { 0 },
            subject.cluster
        ));
        for value in &subject.covariates {
            out.push_str(&format!(",{value}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes [`dataset_to_csv`] output to a file.
pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_to_csv(data)?)?;
    Ok(())
}

fn check_plain_field(what: &str, value: &str) -> Result<()> {
    if value.is_empty() || value.contains(',') || value.contains('\n') || value.contains('\r') {
        return Err(Error::argument(
            "dataset_to_csv",
            format!("{what} '{value}' cannot be written without quoting"),
        ));
    }
    Ok(())
}

/// Parses the interchange format. The `time`, `event`, and `cluster`
/// columns are located by name and may appear in any order; every other
/// header column is read as a covariate, in header order.
pub fn dataset_from_csv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty dataset file".to_string()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| -> Result<usize> {
        columns.iter().position(|&c| c == name).ok_or_else(|| {
            Error::Parse(format!("missing required column '{name}' in header '{header}'"))
        })
    };
    let time_col = find("time")?;
    let event_col = find("event")?;
    let cluster_col = find("cluster")?;
    let covariate_cols: Vec<usize> = (0..columns.len())
        .filter(|&i| i != time_col && i != event_col && i != cluster_col)
        .collect();
    let covariate_names: Vec<String> =
        covariate_cols.iter().map(|&i| columns[i].to_string()).collect();

    let mut subjects = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse(format!(
                "line {line_no}: expected {} fields, found {}",
                columns.len(),
                fields.len()
            )));
        }
        let time: f64 = fields[time_col].parse().map_err(|_| {
            Error::Parse(format!("line {line_no}: bad time '{}'", fields[time_col]))
        })?;
        let event = match fields[event_col] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse(format!(
                    "line {line_no}: event must be 0 or 1, found '{other}'"
                )))
            }
        };
        let mut covariates = Vec::with_capacity(covariate_cols.len());
        for &col in &covariate_cols {
            let value: f64 = fields[col].parse().map_err(|_| {
                Error::Parse(format!(
                    "line {line_no}: bad value '{}' in column '{}'",
                    fields[col], columns[col]
                ))
            })?;
            covariates.push(value);
        }
        subjects.push(SubjectRecord {
            time,
            event,
            cluster: fields[cluster_col].to_string(),
            covariates,
        });
    }
    Dataset::new(subjects, covariate_names)
}

/// Reads a dataset file in the interchange format.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    dataset_from_csv(&text)
}

/// Splits `key = value` config text into `(key, value, line number)`
/// triples. Blank lines and lines starting with `#` are skipped; everything
/// after the first `=` belongs to the value.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::Parse(format!(
                "line {line_no}: expected 'key = value', found '{line}'"
            )));
        };
        let key = line[..eq].trim();
        let value = line[eq + 1..].trim();
        if key.is_empty() {
            return Err(Error::Parse(format!("line {line_no}: empty key")));
        }
        pairs.push((key.to_string(), value.to_string(), line_no));
    }
    Ok(pairs)
}
