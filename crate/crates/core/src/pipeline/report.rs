use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row per compressed layer. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub method: String,
    pub seed: Option<u64>,
    pub gamma_target: Option<f64>,
    pub gamma_achieved: f64,
    pub rho: Option<f64>,
    pub k: Option<usize>,
    pub s: Option<usize>,
    pub r: Option<usize>,
    pub activation_error_fro: f64,
    pub relative_activation_error: f64,
    pub weight_error_fro: f64,
    pub k_active: usize,
    pub multiply_count: u64,
    pub iterations: Option<usize>,
    pub wall_seconds: f64,
}

pub const CSV_HEADER: &str = "name,method,seed,gamma_target,gamma_achieved,rho,k,s,r,activation_error_fro,\
relative_activation_error,weight_error_fro,k_active,multiply_count,iterations,wall_seconds";

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(records: &[RunRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, records)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

pub fn read_csv(text: &str) -> Result<Vec<RunRecord>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

pub fn to_json_string(records: &[RunRecord]) -> Result<String> {
    serde_json::to_string_pretty(records).map_err(|e| Error::Io(e.to_string()))
}

/// CSV text with the `wall_seconds` column removed, for comparing runs.
pub fn strip_timing(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|line| match line.rfind(',') {
            Some(i) => &line[..i],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_fields() {
        let rec = RunRecord {
            name: "w".into(),
            method: "svd".into(),
            seed: None,
            gamma_target: Some(0.3),
            gamma_achieved: 0.31,
            rho: None,
            k: None,
            s: None,
            r: Some(4),
            activation_error_fro: 1.5,
            relative_activation_error: 0.25,
            weight_error_fro: 2.0,
            k_active: 0,
            multiply_count: 54,
            iterations: None,
            wall_seconds: 0.125,
        };
        let text = to_csv_string(std::slice::from_ref(&rec)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("w,svd,,0.3,0.31,,,,4,1.5,0.25,2.0,0,54,,0.125"));
        assert_eq!(read_csv(&text).unwrap(), vec![rec]);
        assert_eq!(strip_timing(&text).lines().nth(1), Some("w,svd,,0.3,0.31,,,,4,1.5,0.25,2.0,0,54,"));
    }
}
