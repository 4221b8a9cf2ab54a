//! CSV input and output.
//!
//! Observed data comes as `date,cases,deaths` with cumulative counts. The
//! date column is either an ISO date (`2014-03-22`) or an integer day; in both
//! cases model days are offsets from the first row.

use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::fit::ObservedSeries;

/// How the date column was written, kept so output can round-trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DateLabel {
    Iso(NaiveDate),
    Integer(i64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTable {
    /// Label of the first row; day `k` is `k` days after it.
    pub origin: DateLabel,
    pub series: ObservedSeries,
    /// Non-fatal findings, e.g. cumulative counts that decrease.
    pub warnings: Vec<String>,
}

impl ObservedTable {
    pub fn label(&self, day: i64) -> String {
        match self.origin {
            DateLabel::Iso(d) => (d + chrono::Duration::days(day)).format("%Y-%m-%d").to_string(),
            DateLabel::Integer(k) => (k + day).to_string(),
        }
    }
}

fn parse_label(field: &str, line: usize) -> Result<DateLabel> {
    let field = field.trim();
    if let Ok(k) = field.parse::<i64>() {
        return Ok(DateLabel::Integer(k));
    }
    NaiveDate::parse_from_str(field, "%Y-%m-%d")
        .map(DateLabel::Iso)
        .map_err(|_| Error::Malformed {
            line,
            reason: format!("`{field}` is neither an ISO date nor an integer day"),
        })
}

fn parse_count(field: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Malformed {
        line,
        reason: format!("{what} `{}` is not a number", field.trim()),
    })?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::Malformed {
            line,
            reason: format!("{what} must be finite and >= 0, got {v}"),
        });
    }
    Ok(v)
}

/// Reads `date,cases,deaths`. Decreasing cumulative counts produce warnings,
/// not errors; out-of-order or mixed date formats are errors.
pub fn read_observed_csv<R: Read>(reader: R) -> Result<ObservedTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let expected = ["date", "cases", "deaths"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| !h.eq_ignore_ascii_case(e)) {
        return Err(Error::Malformed {
            line: 1,
            reason: format!(
                "expected header `date,cases,deaths`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut origin = None;
    let (mut days, mut cases, mut deaths) = (Vec::new(), Vec::new(), Vec::new());
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 3 {
            return Err(Error::Malformed {
                line,
                reason: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let label = parse_label(&record[0], line)?;
        let origin = *origin.get_or_insert(label);
        let day = match (origin, label) {
            (DateLabel::Iso(o), DateLabel::Iso(d)) => (d - o).num_days(),
            (DateLabel::Integer(o), DateLabel::Integer(d)) => d.checked_sub(o).ok_or_else(|| Error::Malformed {
                line,
                reason: "day offset overflows".into(),
            })?,
            _ => {
                return Err(Error::Malformed {
                    line,
                    reason: "mixes ISO dates and integer days".into(),
                })
            }
        };
        if let Some(&prev) = days.last() {
            if day <= prev {
                return Err(Error::Malformed {
                    line,
                    reason: format!("dates must increase strictly (day {day} after day {prev})"),
                });
            }
        }
        days.push(day);
        cases.push(parse_count(&record[1], "cases", line)?);
        deaths.push(parse_count(&record[2], "deaths", line)?);
    }
    let Some(origin) = origin else {
        return Err(Error::EmptyData("no data rows".into()));
    };
    let series = ObservedSeries::new(days, cases, deaths)?;
    let warnings = series
        .monotonicity_violations()
        .into_iter()
        // rows are counted from 1, header excluded
        .map(|k| format!("row {}: cumulative count decreases (day {})", k + 1, series.days[k]))
        .collect();
    Ok(ObservedTable {
        origin,
        series,
        warnings,
    })
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Malformed {
        line,
        reason: e.to_string(),
    }
}

/// Writes the table back in its original date format.
pub fn write_observed_csv<W: Write>(table: &ObservedTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "cases", "deaths"]).map_err(csv_error)?;
    let s = &table.series;
    for k in 0..s.len() {
        w.write_record([table.label(s.days[k]), fmt_f64(s.cases[k]), fmt_f64(s.deaths[k])])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`; exponent
/// form for very small or very large magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes `day,<columns...>` rows after optional `# key: value` comment lines.
pub fn write_columns<W: Write>(
    mut writer: W,
    comments: &[(String, String)],
    names: &[&str],
    days: &[i64],
    columns: &[&[f64]],
) -> Result<()> {
    if names.len() != columns.len() {
        return Err(Error::DimensionMismatch {
            what: "column names",
            expected: columns.len(),
            got: names.len(),
        });
    }
    for c in columns {
        if c.len() != days.len() {
            return Err(Error::DimensionMismatch {
                what: "column length",
                expected: days.len(),
                got: c.len(),
            });
        }
    }
    for (k, v) in comments {
        writeln!(writer, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["day"];
    header.extend_from_slice(names);
    w.write_record(&header).map_err(csv_error)?;
    for (i, day) in days.iter().enumerate() {
        let mut row = vec![day.to_string()];
        row.extend(columns.iter().map(|c| fmt_f64(c[i])));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a τ grid such as `3,4,5` or `3..5` (inclusive). Whitespace is ignored.
pub fn parse_tau_grid(text: &str) -> Result<Vec<u32>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::param("tau_grid", "empty grid"));
    }
    let bad = |part: &str| Error::param("tau_grid", format!("`{part}` is not a positive integer or range"));
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: u32 = lo.trim().parse().map_err(|_| bad(part))?;
            let hi: u32 = hi.trim().parse().map_err(|_| bad(part))?;
            if lo == 0 || hi < lo {
                return Err(bad(part));
            }
            if hi - lo > 1000 {
                return Err(Error::param("tau_grid", format!("range `{part}` is too long")));
            }
            out.extend(lo..=hi);
        } else {
            let v: u32 = part.parse().map_err(|_| bad(part))?;
            if v == 0 {
                return Err(bad(part));
            }
            out.push(v);
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}
