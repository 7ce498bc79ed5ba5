//! Delimited-log reading and writing.
//!
//! The default layout is tab-separated with a header row. Booleans are
//! encoded 0/1 and absent optionals are empty fields. Feature columns are
//! any columns named `cat<k>`; the field index is `k`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ImpressionRecord;
use crate::error::{Error, Result};

const FIXED_COLUMNS: [&str; 11] = [
    "timestamp",
    "user_id",
    "campaign_id",
    "cost",
    "cpo",
    "click",
    "click_pos",
    "conversion",
    "conversion_timestamp",
    "conversion_value",
    "attribution",
];

/// Field-name to column mapping plus parsing options.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogSchema {
    /// Column delimiter, default tab.
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Whether the file starts with a header row.
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Explicit field-name to column-index mapping. When empty, the mapping
    /// is derived from the header row.
    #[serde(default)]
    pub columns: BTreeMap<String, usize>,
    /// Multiplier applied to raw timestamps to convert them to seconds, for
    /// logs recorded at a different time granularity.
    #[serde(default = "default_scale")]
    pub time_scale: f64,
}

fn default_delimiter() -> char {
    '\t'
}

fn default_true() -> bool {
    true
}

fn default_scale() -> f64 {
    1.0
}

impl Default for LogSchema {
    fn default() -> Self {
        LogSchema {
            delimiter: '\t',
            has_header: true,
            columns: BTreeMap::new(),
            time_scale: 1.0,
        }
    }
}

struct ColumnMap {
    fixed: BTreeMap<&'static str, usize>,
    /// (column index, feature field index) pairs.
    features: Vec<(usize, u32)>,
}

fn resolve_columns(schema: &LogSchema, header: Option<&[&str]>) -> Result<ColumnMap> {
    let named: Vec<(String, usize)> = if !schema.columns.is_empty() {
        schema.columns.iter().map(|(k, &v)| (k.clone(), v)).collect()
    } else if let Some(header) = header {
        header
            .iter()
            .enumerate()
            .map(|(i, name)| (name.trim().to_string(), i))
            .collect()
    } else {
        return Err(Error::Config(
            "no header row and no explicit column mapping".to_string(),
        ));
    };

    let mut map = ColumnMap {
        fixed: BTreeMap::new(),
        features: Vec::new(),
    };
    for (name, idx) in named {
        if let Some(fixed) = FIXED_COLUMNS.iter().find(|&&c| c == name) {
            map.fixed.insert(fixed, idx);
        } else if let Some(rest) = name.strip_prefix("cat") {
            if let Ok(field) = rest.parse::<u32>() {
                map.features.push((idx, field));
            }
        }
    }
    for required in ["timestamp", "user_id", "campaign_id", "cost"] {
        if !map.fixed.contains_key(required) {
            return Err(Error::Config(format!("missing required column `{required}`")));
        }
    }
    map.features.sort_by_key(|&(_, field)| field);
    Ok(map)
}

fn parse_bool(s: &str, line: usize, col: &str) -> Result<bool> {
    match s {
        "0" | "" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::MalformedLine {
            line,
            message: format!("column `{col}`: expected 0/1, got `{other}`"),
        }),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, col: &str) -> Result<T> {
    s.parse().map_err(|_| Error::MalformedLine {
        line,
        message: format!("column `{col}`: not a number: `{s}`"),
    })
}

/// Loads a delimited log into impression records, in file order.
pub fn load_log(path: impl AsRef<Path>, schema: &LogSchema) -> Result<Vec<ImpressionRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let header_fields: Option<Vec<&str>>;
    if schema.has_header {
        match lines.next() {
            Some((_, line)) => {
                header_fields = Some(line.split(schema.delimiter).collect());
            }
            None => return Ok(Vec::new()),
        }
    } else {
        header_fields = None;
    }
    let columns = resolve_columns(schema, header_fields.as_deref())?;
    let width = columns
        .fixed
        .values()
        .copied()
        .chain(columns.features.iter().map(|&(i, _)| i))
        .max()
        .unwrap_or(0)
        + 1;

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1; // 1-based, counting the header
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(schema.delimiter).collect();
        if fields.len() < width {
            return Err(Error::MalformedLine {
                line: line_no,
                message: format!("expected at least {width} columns, got {}", fields.len()),
            });
        }
        let get = |name: &str| -> &str {
            columns
                .fixed
                .get(name)
                .map(|&i| fields[i].trim())
                .unwrap_or("")
        };

        let raw_ts: f64 = parse_num(get("timestamp"), line_no, "timestamp")?;
        let timestamp = (raw_ts * schema.time_scale).round();
        if timestamp < 0.0 {
            return Err(Error::MalformedLine {
                line: line_no,
                message: "negative timestamp".to_string(),
            });
        }

        let click = parse_bool(get("click"), line_no, "click")?;
        let conversion = parse_bool(get("conversion"), line_no, "conversion")?;
        let attribution = parse_bool(get("attribution"), line_no, "attribution")?;
        if attribution && !conversion {
            return Err(Error::SchemaViolation { line: line_no });
        }

        let opt_u64 = |name: &str| -> Result<Option<u64>> {
            let s = get(name);
            if s.is_empty() {
                Ok(None)
            } else {
                parse_num::<u64>(s, line_no, name).map(Some)
            }
        };
        let opt_f64 = |name: &str| -> Result<Option<f64>> {
            let s = get(name);
            if s.is_empty() {
                Ok(None)
            } else {
                parse_num::<f64>(s, line_no, name).map(Some)
            }
        };

        let mut features = Vec::new();
        for &(col, field) in &columns.features {
            let token = fields[col].trim();
            if !token.is_empty() {
                features.push((field, token.to_string()));
            }
        }

        records.push(ImpressionRecord {
            timestamp: timestamp as u64,
            user_id: get("user_id").to_string(),
            campaign_id: get("campaign_id").to_string(),
            cost: parse_num(get("cost"), line_no, "cost")?,
            cpo: opt_f64("cpo")?.unwrap_or(0.0),
            features,
            click,
            click_pos: opt_u64("click_pos")?.map(|p| p as u32),
            conversion,
            conversion_timestamp: opt_u64("conversion_timestamp")?,
            conversion_value: opt_f64("conversion_value")?,
            attribution,
        });
    }
    Ok(records)
}

/// Writes records in the default column layout. The output re-loads into an
/// identical record list and is byte-stable for identical input.
pub fn write_log(path: impl AsRef<Path>, records: &[ImpressionRecord]) -> Result<()> {
    let n_feature_fields = records
        .iter()
        .flat_map(|r| r.features.iter().map(|&(f, _)| f + 1))
        .max()
        .unwrap_or(0);

    let mut out = String::new();
    for (i, col) in FIXED_COLUMNS.iter().enumerate() {
        if i > 0 {
            out.push('\t');
        }
        out.push_str(col);
    }
    for f in 0..n_feature_fields {
        let _ = write!(out, "\tcat{f}");
    }
    out.push('\n');

    for rec in records {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t",
            rec.timestamp,
            rec.user_id,
            rec.campaign_id,
            rec.cost,
            rec.cpo,
            rec.click as u8
        );
        if let Some(p) = rec.click_pos {
            let _ = write!(out, "{p}");
        }
        let _ = write!(out, "\t{}\t", rec.conversion as u8);
        if let Some(ts) = rec.conversion_timestamp {
            let _ = write!(out, "{ts}");
        }
        out.push('\t');
        if let Some(v) = rec.conversion_value {
            let _ = write!(out, "{v}");
        }
        let _ = write!(out, "\t{}", rec.attribution as u8);
        for f in 0..n_feature_fields {
            out.push('\t');
            if let Some((_, token)) = rec.features.iter().find(|&&(field, _)| field == f) {
                out.push_str(token);
            }
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "timestamp\tuser_id\tcampaign_id\tcost\tcpo\tclick\tclick_pos\tconversion\tconversion_timestamp\tconversion_value\tattribution\tcat0";

    #[test]
    fn loads_full_line() {
        let f = write_temp(&format!(
            "{HEADER}\n100\tu1\tc1\t0.5\t10\t1\t2\t1\t4000\t12.5\t1\ttokA\n"
        ));
        let recs = load_log(f.path(), &LogSchema::default()).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert!(r.click && r.conversion && r.attribution);
        assert_eq!(r.click_pos, Some(2));
        assert_eq!(r.conversion_timestamp, Some(4000));
        assert_eq!(r.conversion_value, Some(12.5));
        assert_eq!(r.features, vec![(0, "tokA".to_string())]);
    }

    #[test]
    fn loads_empty_optionals_as_absent() {
        let f = write_temp(&format!(
            "{HEADER}\n100\tu1\tc1\t0.5\t10\t0\t\t0\t\t\t0\t\n"
        ));
        let recs = load_log(f.path(), &LogSchema::default()).unwrap();
        let r = &recs[0];
        assert!(!r.conversion);
        assert_eq!(r.conversion_timestamp, None);
        assert_eq!(r.conversion_value, None);
        assert!(r.features.is_empty());
    }

    #[test]
    fn attribution_without_conversion_is_schema_violation() {
        let f = write_temp(&format!(
            "{HEADER}\n100\tu1\tc1\t0.5\t10\t1\t\t0\t\t\t1\t\n"
        ));
        match load_log(f.path(), &LogSchema::default()) {
            Err(Error::SchemaViolation { line }) => assert_eq!(line, 2),
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_line_number() {
        let f = write_temp(&format!(
            "{HEADER}\n100\tu1\tc1\t0.5\t10\t0\t\t0\t\t\t0\t\nnot_a_number\tu2\tc1\t0.5\t10\t0\t\t0\t\t\t0\t\n"
        ));
        match load_log(f.path(), &LogSchema::default()) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed line, got {other:?}"),
        }
    }

    #[test]
    fn wrong_column_count_is_an_error() {
        let f = write_temp(&format!("{HEADER}\n100\tu1\tc1\n"));
        assert!(matches!(
            load_log(f.path(), &LogSchema::default()),
            Err(Error::MalformedLine { line: 2, .. })
        ));
    }
}
