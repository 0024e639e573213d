use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::RawSeries;
use crate::error::{Error, Result};

/// Canonical timestamp layout, e.g. `2015-01-01T05:00`.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

const ACCEPTED_FORMATS: [&str; 4] = [
    TIMESTAMP_FORMAT,
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%d %H:%M:%S",
];

/// Column names of a market CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub timestamp: String,
    pub price: String,
    #[serde(default)]
    pub exog: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            price: "price".into(),
            exog: Vec::new(),
        }
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    ACCEPTED_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn parse_value(s: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line,
        reason: format!("column `{column}`: cannot parse `{s}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            reason: format!("column `{column}`: non-finite value `{s}`"),
        });
    }
    Ok(v)
}

pub fn parse_market_csv(path: &Path, schema: &CsvSchema) -> Result<RawSeries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_market_csv_reader(file, schema)
}

/// Parse a header-bearing CSV. Rows are sorted by timestamp before the
/// continuity check, so out-of-order files are accepted but gaps and
/// repeated hours are not.
pub fn parse_market_csv_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<RawSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let ts_idx = find(&schema.timestamp)?;
    let price_idx = find(&schema.price)?;
    let exog_idx = schema.exog.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<(NaiveDateTime, f64, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let raw_ts = rec.get(ts_idx).unwrap_or("");
        let ts = parse_timestamp(raw_ts).ok_or_else(|| Error::Parse {
            line,
            reason: format!("bad timestamp `{raw_ts}`"),
        })?;
        let price = parse_value(rec.get(price_idx).unwrap_or(""), line, &schema.price)?;
        let exog = exog_idx
            .iter()
            .zip(&schema.exog)
            .map(|(&j, name)| parse_value(rec.get(j).unwrap_or(""), line, name))
            .collect::<Result<Vec<_>>>()?;
        rows.push((ts, price, exog));
    }
    rows.sort_by_key(|r| r.0);

    let n = rows.len();
    let k = schema.exog.len();
    let mut exog = Array2::<f64>::zeros((n, k));
    let mut timestamps = Vec::with_capacity(n);
    let mut price = Vec::with_capacity(n);
    for (i, (ts, p, ex)) in rows.into_iter().enumerate() {
        timestamps.push(ts);
        price.push(p);
        for (j, v) in ex.into_iter().enumerate() {
            exog[[i, j]] = v;
        }
    }
    RawSeries::new(timestamps, price, exog, schema.exog.clone())
}

/// Write a series in the canonical layout: `timestamp,price,<exog...>`.
pub fn write_market_csv<W: Write>(series: &RawSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string(), "price".to_string()];
    header.extend(series.exog_names().iter().cloned());
    w.write_record(&header)?;
    for (i, ts) in series.timestamps().iter().enumerate() {
        let mut rec = vec![ts.format(TIMESTAMP_FORMAT).to_string(), series.price()[i].to_string()];
        rec.extend(series.exog().row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema2() -> CsvSchema {
        CsvSchema {
            timestamp: "timestamp".into(),
            price: "price".into(),
            exog: vec!["load".into(), "wind".into()],
        }
    }

    fn csv_of(hours: impl Iterator<Item = (u32, u32)>) -> String {
        let mut s = String::from("timestamp,price,load,wind\n");
        for (day, h) in hours {
            s.push_str(&format!("2015-01-{:02}T{:02}:00,{}.5,{},{}\n", day, h, h, h * 2, h * 3));
        }
        s
    }

    #[test]
    fn two_complete_days() {
        let text = csv_of((1..=2).flat_map(|d| (0..24).map(move |h| (d, h))));
        let raw = parse_market_csv_reader(text.as_bytes(), &schema2()).unwrap();
        assert_eq!(raw.len(), 48);
        assert_eq!(raw.exog().shape(), &[48, 2]);
        assert_eq!(raw.price()[3], 3.5);
    }

    #[test]
    fn gap_names_missing_hour() {
        let text = csv_of((0..24).filter(|&h| h != 5).map(|h| (1, h)));
        let err = parse_market_csv_reader(text.as_bytes(), &schema2()).unwrap_err();
        match err {
            Error::Continuity { instant, .. } => assert_eq!(instant, "2015-01-01T05:00"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_hour_rejected() {
        let text = csv_of((0..24).chain(std::iter::once(2)).map(|h| (1, h)));
        let err = parse_market_csv_reader(text.as_bytes(), &schema2()).unwrap_err();
        assert!(matches!(err, Error::Continuity { ref reason, .. } if reason.contains("duplicate")));
    }

    #[test]
    fn missing_column_and_bad_cells() {
        let text = "timestamp,price\n2015-01-01T00:00,1\n";
        assert!(matches!(
            parse_market_csv_reader(text.as_bytes(), &schema2()),
            Err(Error::Schema(_))
        ));
        let text = "timestamp,price\n2015-01-01T00:00,NaN\n";
        assert!(matches!(
            parse_market_csv_reader(text.as_bytes(), &CsvSchema::default()),
            Err(Error::Parse { line: 2, .. })
        ));
        let text = "timestamp,price\n2015-01-01T00:00,abc\n";
        assert!(matches!(
            parse_market_csv_reader(text.as_bytes(), &CsvSchema::default()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn unsorted_rows_are_sorted() {
        let text = "timestamp,price\n2015-01-01T01:00,2\n2015-01-01T00:00,1\n";
        let raw = parse_market_csv_reader(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(raw.price(), &[1.0, 2.0]);
    }

    #[test]
    fn write_then_parse() {
        let text = csv_of((1..=2).flat_map(|d| (0..24).map(move |h| (d, h))));
        let raw = parse_market_csv_reader(text.as_bytes(), &schema2()).unwrap();
        let mut buf = Vec::new();
        write_market_csv(&raw, &mut buf).unwrap();
        let again = parse_market_csv_reader(buf.as_slice(), &schema2()).unwrap();
        assert_eq!(raw, again);
    }
}
