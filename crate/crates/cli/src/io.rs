//! Event CSV and holiday file formats.
//!
//! Events: header `occurrence_date,observation_date`, ISO dates, one event
//! per row. Holidays: `YYYY-MM-DD,national|unofficial` per line, `#` starts
//! a comment.

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use hidden_events_core::calendar::{Calendar, HolidayCalendar};
use hidden_events_core::counts::{EventDataset, EventRecord};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    occurrence_date: NaiveDate,
    observation_date: NaiveDate,
}

/// Parsed events plus what was discarded on the way in.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedEvents {
    pub dataset: EventDataset,
    pub rows: usize,
}

impl ParsedEvents {
    pub fn summary(&self) -> String {
        format!(
            "{} rows read, {} events kept, {} dropped (observation before occurrence)",
            self.rows,
            self.dataset.len(),
            self.dataset.dropped_reversed()
        )
    }
}

pub fn read_events(path: &Path, cal: &Calendar) -> Result<ParsedEvents, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_events(file, cal).map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_events<R: Read>(reader: R, cal: &Calendar) -> Result<ParsedEvents, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = Vec::new();
    for row in rdr.deserialize::<EventRow>() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Data(format!("line {line}: {e}"))
        })?;
        records.push(EventRecord {
            occurrence: cal.index(row.occurrence_date),
            observation: cal.index(row.observation_date),
        });
    }
    if records.is_empty() {
        return Err(CliError::Data("no events in file".into()));
    }
    let rows = records.len();
    Ok(ParsedEvents {
        dataset: EventDataset::from_records(records),
        rows,
    })
}

pub fn write_events<W: Write>(
    writer: W,
    events: &EventDataset,
    cal: &Calendar,
    header_comment: Option<&str>,
) -> Result<(), CliError> {
    let mut writer = writer;
    if let Some(c) = header_comment {
        writeln!(writer, "# {c}").map_err(|e| CliError::io(Path::new("<events>"), e))?;
    }
    let mut w = csv::Writer::from_writer(writer);
    for e in events.events() {
        w.serialize(EventRow {
            occurrence_date: cal.date(e.occurrence),
            observation_date: cal.date(e.observation),
        })
        .map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(Path::new("<events>"), e))?;
    Ok(())
}

pub fn parse_holidays(text: &str) -> Result<HolidayCalendar, CliError> {
    let mut national = BTreeSet::new();
    let mut unofficial = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| CliError::Data(format!("holiday line {}: {what}: {raw:?}", i + 1));
        let (date, class) = line.split_once(',').ok_or_else(|| bad("expected DATE,CLASS"))?;
        let date = NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d")
            .map_err(|_| bad("bad date"))?;
        match class.trim() {
            "national" => national.insert(date),
            "unofficial" => unofficial.insert(date),
            _ => return Err(bad("class must be national or unofficial")),
        };
    }
    HolidayCalendar::new(national, unofficial).map_err(|e| CliError::Data(e.to_string()))
}

pub fn read_holidays(path: &Path) -> Result<HolidayCalendar, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_holidays(&text).map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn format_holidays(cal: &HolidayCalendar) -> String {
    let mut all: Vec<(NaiveDate, &str)> = cal
        .national()
        .iter()
        .map(|d| (*d, "national"))
        .chain(cal.unofficial().iter().map(|d| (*d, "unofficial")))
        .collect();
    all.sort();
    let mut out = String::new();
    for (d, c) in all {
        out.push_str(&format!("{d},{c}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use hidden_events_core::calendar::{DateIndex, Epoch};

    fn cal() -> Calendar {
        Calendar::new(Epoch::default(), HolidayCalendar::empty())
    }

    #[test]
    fn three_row_fixture() {
        let csv = "occurrence_date,observation_date\n\
                   1990-01-01,1990-01-01\n\
                   1990-01-02,1990-01-05\n\
                   1990-01-31,1990-02-01\n";
        let p = parse_events(csv.as_bytes(), &cal()).unwrap();
        let got: Vec<(i32, i32)> = p
            .dataset
            .events()
            .iter()
            .map(|e| (e.occurrence.0, e.observation.0))
            .collect();
        assert_eq!(got, vec![(1, 1), (2, 5), (31, 32)]);
    }

    #[test]
    fn reversed_row_dropped() {
        let csv = "occurrence_date,observation_date\n2000-01-05,2000-01-04\n2000-01-05,2000-01-06\n";
        let p = parse_events(csv.as_bytes(), &cal()).unwrap();
        assert_eq!(p.dataset.len(), 1);
        assert_eq!(p.dataset.dropped_reversed(), 1);
        assert_eq!(p.rows, 2);
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "occurrence_date,observation_date\n2000-01-05,2000-01-06\n2000-13-01,2000-01-06\n";
        match parse_events(csv.as_bytes(), &cal()) {
            Err(CliError::Data(msg)) => assert!(msg.starts_with("line 3"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_file_rejected() {
        let csv = "occurrence_date,observation_date\n";
        assert!(matches!(parse_events(csv.as_bytes(), &cal()), Err(CliError::Data(_))));
    }

    #[test]
    fn events_round_trip() {
        let ds = EventDataset::from_records([
            EventRecord { occurrence: DateIndex(3), observation: DateIndex(9) },
            EventRecord { occurrence: DateIndex(1), observation: DateIndex(1) },
        ]);
        let mut buf = Vec::new();
        write_events(&mut buf, &ds, &cal(), Some("seed=1")).unwrap();
        let back = parse_events(buf.as_slice(), &cal()).unwrap();
        assert_eq!(back.dataset, ds);
    }

    #[test]
    fn holidays_round_trip() {
        let h = HolidayCalendar::dutch(2001, 2003);
        assert_eq!(parse_holidays(&format_holidays(&h)).unwrap(), h);
    }

    #[test]
    fn holiday_parse_errors() {
        assert!(parse_holidays("2004-01-01,bank").is_err());
        assert!(parse_holidays("2004-01-01,national\n2004-01-01,unofficial").is_err());
        let h = parse_holidays("# comment\n\n2004-12-31, unofficial # eve\n").unwrap();
        assert_eq!(h.unofficial().len(), 1);
    }
}
