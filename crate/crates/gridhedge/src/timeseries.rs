//! Generation time series in CSV form.
//!
//! The file has a `timestamp,power_kw` header. Timestamps are ISO-8601,
//! with or without a UTC offset, and must be strictly increasing with one
//! uniform spacing.

use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime, TimeDelta};

use crate::error::Failure;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: NaiveDateTime,
    pub power_kw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<Sample>,
    spacing: TimeDelta,
}

impl TimeSeries {
    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn spacing(&self) -> TimeDelta {
        self.spacing
    }

    pub fn spacing_hours(&self) -> f64 {
        self.spacing.num_milliseconds() as f64 / 3.6e6
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Keeps every `factor`-th sample.
    pub fn subsample(&self, factor: usize) -> TimeSeries {
        TimeSeries {
            samples: self.samples.iter().step_by(factor.max(1)).cloned().collect(),
            spacing: self.spacing * factor.max(1) as i32,
        }
    }

    /// Contiguous runs of samples whose time of day lies in `window`, one
    /// run per day (or per gap in coverage).
    pub fn segments(&self, window: Option<&TimeWindow>) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        let mut prev: Option<NaiveDateTime> = None;
        for s in &self.samples {
            if window.is_some_and(|w| !w.contains(s.time.time())) {
                prev = None;
                continue;
            }
            match (prev, out.last_mut()) {
                (Some(p), Some(run)) if s.time - p == self.spacing => run.push(s.power_kw),
                _ => out.push(vec![s.power_kw]),
            }
            prev = Some(s.time);
        }
        out
    }
}

/// Inclusive time-of-day window such as `10:00-17:00`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub start: NaiveTime,
    pub end: NaiveTime,
}

impl TimeWindow {
    pub fn contains(&self, t: NaiveTime) -> bool {
        self.start <= t && t <= self.end
    }
}

impl std::str::FromStr for TimeWindow {
    type Err = Failure;

    fn from_str(s: &str) -> Result<Self, Failure> {
        let bad = || Failure::Input(format!("window '{s}' is not of the form HH:MM-HH:MM"));
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        let start = NaiveTime::parse_from_str(a.trim(), "%H:%M").map_err(|_| bad())?;
        let end = NaiveTime::parse_from_str(b.trim(), "%H:%M").map_err(|_| bad())?;
        if end <= start {
            return Err(Failure::Input(format!("window '{s}' ends before it starts")));
        }
        Ok(TimeWindow { start, end })
    }
}

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(t);
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

/// Reads and validates a series. Row numbers in errors count the header as
/// row 1.
pub fn read_series<R: Read>(reader: R) -> Result<TimeSeries, Failure> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Failure::Input(format!("cannot read header: {e}")))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Failure::Input("no data rows".into()));
    }
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "power_kw" {
        return Err(Failure::Input(format!(
            "row 1: expected header 'timestamp,power_kw', found '{}'",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut samples: Vec<Sample> = Vec::new();
    let mut spacing: Option<TimeDelta> = None;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Failure::Input(format!("row {row}: {e}")))?;
        if rec.len() != 2 {
            return Err(Failure::Input(format!("row {row}: expected 2 fields, found {}", rec.len())));
        }
        let time = parse_timestamp(&rec[0])
            .ok_or_else(|| Failure::Input(format!("row {row}: bad timestamp '{}'", &rec[0])))?;
        let power_kw: f64 = rec[1]
            .parse()
            .map_err(|_| Failure::Input(format!("row {row}: bad power value '{}'", &rec[1])))?;
        if !power_kw.is_finite() {
            return Err(Failure::Input(format!("row {row}: power value is not finite")));
        }
        if let Some(last) = samples.last() {
            let step = time - last.time;
            if step <= TimeDelta::zero() {
                return Err(Failure::Input(format!("row {row}: timestamp not strictly increasing")));
            }
            match spacing {
                None => spacing = Some(step),
                Some(s) if s != step => {
                    return Err(Failure::Input(format!(
                        "row {row}: spacing {} min differs from {} min",
                        step.num_seconds() as f64 / 60.0,
                        s.num_seconds() as f64 / 60.0
                    )))
                }
                _ => {}
            }
        }
        samples.push(Sample { time, power_kw });
    }
    if samples.is_empty() {
        return Err(Failure::Input("no data rows".into()));
    }
    Ok(TimeSeries {
        samples,
        spacing: spacing.unwrap_or(TimeDelta::zero()),
    })
}

pub fn read_series_file(path: &Path) -> Result<TimeSeries, Failure> {
    let file = std::fs::File::open(path)
        .map_err(|e| Failure::Input(format!("cannot open {}: {e}", path.display())))?;
    read_series(file)
}
