//! Shared domain types: log records, provenance records, and timestamps.

use serde::{Deserialize, Serialize};

/// One raw log line as it entered the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    /// Unique opaque identifier within a corpus.
    pub log_id: String,
    /// Raw log text, UTF-8, preserved verbatim.
    pub raw_text: String,
    /// Strictly increasing arrival position within the stream.
    pub arrival_seq: u64,
    /// Time-window index the record was assigned to.
    pub window_id: u64,
    /// Optional platform hint forwarded to prompts (e.g. "Windows audit").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tag: Option<String>,
}

impl LogRecord {
    pub fn new(log_id: impl Into<String>, raw_text: impl Into<String>, arrival_seq: u64) -> Self {
        LogRecord {
            log_id: log_id.into(),
            raw_text: raw_text.into(),
            arrival_seq,
            window_id: 0,
            source_tag: None,
        }
    }
}

/// A timestamp as found in a log: the raw string bit-exact, plus a parsed
/// epoch when one of the registered formats matched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamp {
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch_micros: Option<i64>,
}

impl Timestamp {
    pub fn unparsed(raw: impl Into<String>) -> Self {
        Timestamp {
            raw: raw.into(),
            epoch_micros: None,
        }
    }
}

/// Format descriptor consulted by [`parse_timestamp`], tried in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimestampFormat {
    /// RFC 3339 / ISO-8601 with offset or trailing Z.
    Iso8601,
    /// Seconds since the Unix epoch, integer or fractional.
    UnixSeconds,
    /// Milliseconds since the Unix epoch.
    UnixMillis,
    /// Microseconds since the Unix epoch.
    UnixMicros,
    /// A chrono strftime pattern; naive datetimes are taken as UTC.
    Custom { pattern: String },
}

/// Parse `raw` against the registered formats, first match wins. The raw
/// string is always retained; unparseable inputs simply carry no epoch.
pub fn parse_timestamp(raw: &str, formats: &[TimestampFormat]) -> Timestamp {
    let trimmed = raw.trim();
    for format in formats {
        let epoch = match format {
            TimestampFormat::Iso8601 => chrono::DateTime::parse_from_rfc3339(trimmed)
                .ok()
                .map(|dt| dt.timestamp_micros()),
            TimestampFormat::UnixSeconds => parse_unix(trimmed, 1_000_000),
            TimestampFormat::UnixMillis => parse_unix(trimmed, 1_000),
            TimestampFormat::UnixMicros => parse_unix(trimmed, 1),
            TimestampFormat::Custom { pattern } => {
                chrono::NaiveDateTime::parse_from_str(trimmed, pattern)
                    .ok()
                    .map(|dt| dt.and_utc().timestamp_micros())
            }
        };
        if let Some(epoch_micros) = epoch {
            return Timestamp {
                raw: raw.to_string(),
                epoch_micros: Some(epoch_micros),
            };
        }
    }
    Timestamp::unparsed(raw)
}

fn parse_unix(text: &str, scale: i64) -> Option<i64> {
    if text.is_empty() || !text.chars().all(|c| c.is_ascii_digit() || c == '.' || c == '-') {
        return None;
    }
    if let Ok(whole) = text.parse::<i64>() {
        return whole.checked_mul(scale);
    }
    // Fractional epoch such as "1523361600.25".
    let value: f64 = text.parse().ok()?;
    if !value.is_finite() {
        return None;
    }
    Some((value * scale as f64).round() as i64)
}

/// Which stage produced a provenance record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordOrigin {
    /// Extracted by the candidate provenance extractor.
    Cpe,
    /// Extracted by a distilled rule set.
    Rule { rule_id: String },
}

/// One directed interaction between two entities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub sid: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stype: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sname: Option<String>,
    pub did: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtype: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dname: Option<String>,
    /// Interaction type; the literal token "NO LABEL" is permitted and preserved.
    pub itype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<Timestamp>,
    pub origin: RecordOrigin,
    pub source_log_id: String,
}

impl ProvenanceRecord {
    /// Dedup key over all present fields, ignoring origin.
    pub fn dedup_key(&self) -> (String, Option<String>, Option<String>, String, Option<String>, Option<String>, String, Option<String>) {
        (
            self.sid.clone(),
            self.stype.clone(),
            self.sname.clone(),
            self.did.clone(),
            self.dtype.clone(),
            self.dname.clone(),
            self.itype.clone(),
            self.time.as_ref().map(|t| t.raw.clone()),
        )
    }

    /// Structural validity: non-empty endpoints and interaction type.
    pub fn is_valid(&self) -> bool {
        !self.sid.is_empty() && !self.did.is_empty() && !self.itype.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iso8601_parses_to_epoch() {
        let ts = parse_timestamp("2018-04-10T12:00:00Z", &[TimestampFormat::Iso8601]);
        assert_eq!(ts.raw, "2018-04-10T12:00:00Z");
        assert_eq!(ts.epoch_micros, Some(1_523_361_600_000_000));
    }

    #[test]
    fn garbage_keeps_raw_without_epoch() {
        let formats = [TimestampFormat::Iso8601, TimestampFormat::UnixSeconds];
        let ts = parse_timestamp("garbage", &formats);
        assert_eq!(ts.raw, "garbage");
        assert_eq!(ts.epoch_micros, None);
    }

    #[test]
    fn unix_seconds_scale_to_micros() {
        let ts = parse_timestamp("1523361600", &[TimestampFormat::UnixSeconds]);
        assert_eq!(ts.epoch_micros, Some(1_523_361_600_000_000));
    }

    #[test]
    fn first_matching_format_wins() {
        // As unix-millis this would be a different instant.
        let formats = [TimestampFormat::UnixSeconds, TimestampFormat::UnixMillis];
        let ts = parse_timestamp("1000", &formats);
        assert_eq!(ts.epoch_micros, Some(1_000_000_000));
    }

    #[test]
    fn custom_pattern_parses_as_utc() {
        let formats = [TimestampFormat::Custom {
            pattern: "%Y/%m/%d %H:%M:%S".to_string(),
        }];
        let ts = parse_timestamp("2018/04/10 12:00:00", &formats);
        assert_eq!(ts.epoch_micros, Some(1_523_361_600_000_000));
    }
}
