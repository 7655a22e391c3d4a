use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Interaction;
use crate::{Error, Result};

/// How to read an interaction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputFormat {
    /// One interaction per row, fields split on `delimiter`.
    Delimited {
        delimiter: String,
        user_col: usize,
        item_col: usize,
        time_col: usize,
        skip_header: bool,
    },
    /// One user per line: `[user] item:ts item:ts ...`. A leading token
    /// without `:` names the user, otherwise the 1-based line number does.
    Tokens,
}

impl InputFormat {
    pub fn tsv() -> Self {
        InputFormat::Delimited {
            delimiter: "\t".into(),
            user_col: 0,
            item_col: 1,
            time_col: 2,
            skip_header: false,
        }
    }

    pub fn csv() -> Self {
        InputFormat::Delimited {
            delimiter: ",".into(),
            user_col: 0,
            item_col: 1,
            time_col: 2,
            skip_header: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub interactions: Vec<Interaction>,
    /// Rows that could not be parsed.
    pub skipped: usize,
    /// Diagnostics for the first few skipped rows.
    pub warnings: Vec<String>,
}

const MAX_WARNINGS: usize = 20;

pub fn load_interactions(path: impl AsRef<Path>, format: &InputFormat) -> Result<LoadReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(&text, format)
}

pub fn parse_interactions(text: &str, format: &InputFormat) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    let skip = |report: &mut LoadReport, lineno: usize, line: &str| {
        report.skipped += 1;
        if report.warnings.len() < MAX_WARNINGS {
            report
                .warnings
                .push(format!("line {lineno}: cannot parse {:?}", truncate(line)));
        }
    };

    match format {
        InputFormat::Delimited {
            delimiter,
            user_col,
            item_col,
            time_col,
            skip_header,
        } => {
            if delimiter.is_empty() {
                return Err(Error::Config("empty delimiter".into()));
            }
            let need = 1 + (*user_col).max(*item_col).max(*time_col);
            for (idx, line) in text.lines().enumerate() {
                if idx == 0 && *skip_header {
                    continue;
                }
                let line = line.trim_end_matches('\r');
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = if delimiter.trim().is_empty() && delimiter != "\t" {
                    line.split_whitespace().collect()
                } else {
                    line.split(delimiter.as_str()).map(str::trim).collect()
                };
                if fields.len() < need {
                    skip(&mut report, idx + 1, line);
                    continue;
                }
                let (user, item) = (fields[*user_col], fields[*item_col]);
                match parse_timestamp(fields[*time_col]) {
                    Some(ts) if !user.is_empty() && !item.is_empty() => {
                        report.interactions.push(Interaction::new(user, item, ts))
                    }
                    _ => skip(&mut report, idx + 1, line),
                }
            }
        }
        InputFormat::Tokens => {
            for (idx, line) in text.lines().enumerate() {
                let mut tokens = line.split_whitespace().peekable();
                let Some(first) = tokens.peek().copied() else {
                    continue;
                };
                let user = if first.contains(':') {
                    (idx + 1).to_string()
                } else {
                    tokens.next();
                    first.to_string()
                };
                let parsed: Option<Vec<Interaction>> = tokens
                    .map(|tok| {
                        let (item, ts) = tok.rsplit_once(':')?;
                        let ts = parse_timestamp(ts)?;
                        (!item.is_empty()).then(|| Interaction::new(user.clone(), item, ts))
                    })
                    .collect();
                match parsed {
                    Some(rows) if !rows.is_empty() => report.interactions.extend(rows),
                    _ => skip(&mut report, idx + 1, line),
                }
            }
        }
    }

    if report.interactions.is_empty() {
        return Err(Error::Format(format!(
            "no valid interactions ({} malformed rows)",
            report.skipped
        )));
    }
    Ok(report)
}

fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    s.parse::<i64>().ok().or_else(|| {
        // fractional epoch seconds are truncated
        s.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite() && x.abs() < 9.0e18)
            .map(|x| x.floor() as i64)
    })
}

fn truncate(line: &str) -> String {
    line.chars().take(60).collect()
}
