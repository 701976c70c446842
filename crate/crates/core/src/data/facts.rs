//! The long-format fact table: one row per recorded event or measurement,
//! timed by integer quarter index.

use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{DataError, PatientId, Result};

/// One fact: an indicative event (`value` empty), a numeric measurement
/// (`value` set), or a static attribute (concept like `"gender:f"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactRow {
    pub patient_id: PatientId,
    pub interval: u32,
    pub concept: String,
    pub value: Option<f64>,
}

/// Calendar quarter serving as the interval origin when ingesting
/// date-stamped feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarterEpoch {
    year: i32,
    /// 1-based quarter within the year.
    quarter: u8,
}

impl Default for QuarterEpoch {
    fn default() -> Self {
        QuarterEpoch { year: 2007, quarter: 1 }
    }
}

impl std::fmt::Display for QuarterEpoch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

impl QuarterEpoch {
    pub fn new(year: i32, quarter: u8) -> Result<Self> {
        if !(1..=4).contains(&quarter) {
            return Err(DataError::Invalid(format!("quarter must be 1..=4, got {quarter}")));
        }
        Ok(QuarterEpoch { year, quarter })
    }
}

/// Maps a calendar date to its zero-based quarter index from the epoch:
/// with epoch 2007Q1, dates in 2007-01..=2007-03 map to 0, 2007-04 starts
/// 1, and so on.
pub fn bin_timestamp(date: NaiveDate, epoch: QuarterEpoch) -> Result<u32> {
    let quarters = (date.year() - epoch.year) * 4 + date.month0() as i32 / 3 - (epoch.quarter as i32 - 1);
    if quarters < 0 {
        return Err(DataError::DateBeforeEpoch { date, epoch });
    }
    Ok(quarters as u32)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    patient_id: PatientId,
    interval: u32,
    concept: String,
    value: Option<f64>,
}

/// Reads a fact CSV (`patient_id,interval,concept,value`); rows may be in
/// any order, though within-quarter tie order follows file order downstream.
pub fn read_facts(path: &Path) -> Result<Vec<FactRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let row: CsvRow = record?;
        rows.push(FactRow { patient_id: row.patient_id, interval: row.interval, concept: row.concept, value: row.value });
    }
    Ok(rows)
}

pub fn write_facts(path: &Path, rows: &[FactRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(CsvRow {
            patient_id: row.patient_id.clone(),
            interval: row.interval,
            concept: row.concept.clone(),
            value: row.value,
        })?;
    }
    writer.flush().map_err(DataError::Io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn quarter_boundaries_from_default_epoch() {
        let epoch = QuarterEpoch::default();
        assert_eq!(bin_timestamp(d("2007-01-01"), epoch).unwrap(), 0);
        assert_eq!(bin_timestamp(d("2007-02-15"), epoch).unwrap(), 0);
        assert_eq!(bin_timestamp(d("2007-03-31"), epoch).unwrap(), 0);
        assert_eq!(bin_timestamp(d("2007-04-01"), epoch).unwrap(), 1);
        assert_eq!(bin_timestamp(d("2009-12-31"), epoch).unwrap(), 11);
    }

    #[test]
    fn mid_year_epochs_shift_the_origin() {
        let epoch = QuarterEpoch::new(2006, 3).unwrap();
        assert_eq!(bin_timestamp(d("2006-07-01"), epoch).unwrap(), 0);
        assert_eq!(bin_timestamp(d("2007-01-01"), epoch).unwrap(), 2);
        assert!(QuarterEpoch::new(2006, 5).is_err());
    }

    #[test]
    fn pre_epoch_dates_are_rejected() {
        let err = bin_timestamp(d("2006-12-31"), QuarterEpoch::default()).unwrap_err();
        assert!(matches!(err, DataError::DateBeforeEpoch { .. }));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("facts.csv");
        let rows = vec![
            FactRow { patient_id: "3".into(), interval: 17, concept: "dx_a".into(), value: None },
            FactRow { patient_id: "3".into(), interval: 18, concept: "lab_x".into(), value: Some(7.25) },
            FactRow { patient_id: "9".into(), interval: 0, concept: "gender:f".into(), value: None },
        ];
        write_facts(&path, &rows).unwrap();
        assert_eq!(read_facts(&path).unwrap(), rows);
    }

    #[test]
    fn malformed_interval_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("facts.csv");
        std::fs::write(&path, "patient_id,interval,concept,value\n1,june,dx_a,\n").unwrap();
        assert!(matches!(read_facts(&path), Err(DataError::Csv(_))));
    }
}
