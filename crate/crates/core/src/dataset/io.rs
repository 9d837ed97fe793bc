use std::collections::HashSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::warn;

use super::{Dataset, DatasetParts, Event};
use crate::error::{Error, Result};
use crate::ids::{EventId, GroupId, InterestTerm, MemberId};

pub const DATASET_FILES: [&str; 5] = [
    "events.csv",
    "rsvps.csv",
    "memberships.csv",
    "member_interests.csv",
    "group_topics.csv",
];

#[derive(Clone, Debug)]
pub struct DatasetPaths {
    pub events: PathBuf,
    pub rsvps: PathBuf,
    pub memberships: PathBuf,
    pub member_interests: PathBuf,
    pub group_topics: PathBuf,
}

impl DatasetPaths {
    /// The five standard file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            events: dir.join(DATASET_FILES[0]),
            rsvps: dir.join(DATASET_FILES[1]),
            memberships: dir.join(DATASET_FILES[2]),
            member_interests: dir.join(DATASET_FILES[3]),
            group_topics: dir.join(DATASET_FILES[4]),
        }
    }

    fn all(&self) -> [&PathBuf; 5] {
        [
            &self.events,
            &self.rsvps,
            &self.memberships,
            &self.member_interests,
            &self.group_topics,
        ]
    }
}

#[derive(Debug)]
pub struct LoadReport {
    pub dataset: Dataset,
    /// Number of repeated (member, event) RSVP rows that were dropped.
    pub duplicate_rsvps: usize,
}

struct Rows {
    file: String,
    records: Vec<(u64, csv::StringRecord)>,
}

impl Rows {
    fn read(path: &Path, header: &[&str]) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let file = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(File::open(path)?);

        let found: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if found.iter().map(String::as_str).ne(header.iter().copied()) {
            return Err(Error::MalformedRow {
                file,
                line: 1,
                reason: format!("expected header `{}`, found `{}`", header.join(","), found.join(",")),
            });
        }

        let mut records = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::MalformedRow {
                file: file.clone(),
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != header.len() {
                return Err(Error::MalformedRow {
                    file,
                    line,
                    reason: format!("expected {} fields, found {}", header.len(), rec.len()),
                });
            }
            records.push((line, rec));
        }
        Ok(Self { file, records })
    }

    fn malformed(&self, line: u64, reason: impl Into<String>) -> Error {
        Error::MalformedRow {
            file: self.file.clone(),
            line,
            reason: reason.into(),
        }
    }

    fn id<'a>(&self, line: u64, rec: &'a csv::StringRecord, col: usize, what: &str) -> Result<&'a str> {
        let v = &rec[col];
        if v.is_empty() {
            Err(self.malformed(line, format!("empty {what}")))
        } else {
            Ok(v)
        }
    }

    fn term(&self, line: u64, rec: &csv::StringRecord, col: usize) -> Result<InterestTerm> {
        InterestTerm::new(&rec[col]).ok_or_else(|| self.malformed(line, "empty interest term"))
    }
}

/// Loads and validates the five CSV tables.
pub fn load_dataset(paths: &DatasetPaths) -> Result<LoadReport> {
    for p in paths.all() {
        if !p.is_file() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let mut parts = DatasetParts::default();

    let rows = Rows::read(&paths.events, &["event_id", "group_id", "date"])?;
    let mut ids = HashSet::new();
    for (line, rec) in &rows.records {
        let id = rows.id(*line, rec, 0, "event_id")?;
        let group = rows.id(*line, rec, 1, "group_id")?;
        let date: NaiveDate = rec[2]
            .parse()
            .map_err(|e| rows.malformed(*line, format!("invalid date `{}`: {e}", &rec[2])))?;
        if !ids.insert(id.to_owned()) {
            return Err(rows.malformed(*line, format!("duplicate event id `{id}`")));
        }
        parts.events.push(Event {
            id: EventId::new(id),
            group: GroupId::new(group),
            date,
        });
    }

    let rows = Rows::read(&paths.rsvps, &["member_id", "event_id"])?;
    let mut seen = HashSet::new();
    let mut duplicate_rsvps = 0;
    for (line, rec) in &rows.records {
        let m = rows.id(*line, rec, 0, "member_id")?;
        let e = rows.id(*line, rec, 1, "event_id")?;
        if !ids.contains(e) {
            return Err(Error::DanglingEvent {
                member: MemberId::new(m),
                event: EventId::new(e),
            });
        }
        if seen.insert((m.to_owned(), e.to_owned())) {
            parts.rsvps.push((MemberId::new(m), EventId::new(e)));
        } else {
            duplicate_rsvps += 1;
        }
    }
    if duplicate_rsvps > 0 {
        warn!("dropped {duplicate_rsvps} duplicate RSVP rows");
    }

    let rows = Rows::read(&paths.memberships, &["member_id", "group_id"])?;
    let mut seen = HashSet::new();
    for (line, rec) in &rows.records {
        let m = rows.id(*line, rec, 0, "member_id")?;
        let g = rows.id(*line, rec, 1, "group_id")?;
        if seen.insert((m.to_owned(), g.to_owned())) {
            parts.memberships.push((MemberId::new(m), GroupId::new(g)));
        }
    }

    let rows = Rows::read(&paths.member_interests, &["member_id", "term"])?;
    let mut seen = HashSet::new();
    for (line, rec) in &rows.records {
        let m = MemberId::new(rows.id(*line, rec, 0, "member_id")?);
        let t = rows.term(*line, rec, 1)?;
        if seen.insert((m.clone(), t.clone())) {
            parts.member_interests.push((m, t));
        }
    }

    let rows = Rows::read(&paths.group_topics, &["group_id", "term"])?;
    let mut seen = HashSet::new();
    for (line, rec) in &rows.records {
        let g = GroupId::new(rows.id(*line, rec, 0, "group_id")?);
        let t = rows.term(*line, rec, 1)?;
        if seen.insert((g.clone(), t.clone())) {
            parts.group_topics.push((g, t));
        }
    }

    parts.derive_universe();
    Ok(LoadReport {
        dataset: Dataset::from_parts(parts),
        duplicate_rsvps,
    })
}

/// Writes the dataset as the five CSV tables in `dir` (created if needed).
pub fn write_dataset(d: &Dataset, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let paths = DatasetPaths::in_dir(dir);

    let mut w = csv::Writer::from_path(&paths.events)?;
    w.write_record(["event_id", "group_id", "date"])?;
    for e in d.events() {
        w.write_record([e.id.as_str(), e.group.as_str(), &e.date.to_string()])?;
    }
    w.flush()?;

    write_pairs(
        &paths.rsvps,
        ["member_id", "event_id"],
        d.rsvps().iter().map(|(a, b)| (a.as_str(), b.as_str())),
    )?;
    write_pairs(
        &paths.memberships,
        ["member_id", "group_id"],
        d.memberships().iter().map(|(a, b)| (a.as_str(), b.as_str())),
    )?;
    write_pairs(
        &paths.member_interests,
        ["member_id", "term"],
        d.member_interests().iter().map(|(a, b)| (a.as_str(), b.as_str())),
    )?;
    write_pairs(
        &paths.group_topics,
        ["group_id", "term"],
        d.group_topics().iter().map(|(a, b)| (a.as_str(), b.as_str())),
    )?;
    Ok(paths.all().into_iter().cloned().collect())
}

fn write_pairs<'a>(path: &Path, header: [&str; 2], rows: impl Iterator<Item = (&'a str, &'a str)>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (a, b) in rows {
        w.write_record([a, b])?;
    }
    w.flush()?;
    Ok(())
}
