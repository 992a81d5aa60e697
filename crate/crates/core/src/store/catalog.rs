//! Catalog import from comma-delimited files with `id,title,source,year` headers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::protocol::Study;

const REQUIRED: [&str; 4] = ["id", "title", "source", "year"];

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize_title(title: &str) -> String {
    title
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuplicateReason {
    SameId,
    SameTitle,
}

/// A row that collapsed onto an already imported study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateEntry {
    pub line: u64,
    pub id: String,
    pub title: String,
    pub kept: String,
    pub reason: DuplicateReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupReport {
    pub rows: usize,
    pub imported: usize,
    pub duplicates: Vec<DuplicateEntry>,
}

/// Deduplicating study catalog.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    studies: Vec<Study>,
    by_id: HashMap<String, usize>,
    by_title: HashMap<String, usize>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn studies(&self) -> &[Study] {
        &self.studies
    }

    pub fn into_studies(self) -> Vec<Study> {
        self.studies
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    fn find_duplicate(&self, study: &Study) -> Option<(usize, DuplicateReason)> {
        if let Some(&i) = self.by_id.get(&study.id) {
            return Some((i, DuplicateReason::SameId));
        }
        self.by_title
            .get(&normalize_title(&study.title))
            .map(|&i| (i, DuplicateReason::SameTitle))
    }

    /// Add a study unless it duplicates one already present.
    pub fn insert(&mut self, study: Study) -> Result<(), (String, DuplicateReason)> {
        if let Some((i, reason)) = self.find_duplicate(&study) {
            return Err((self.studies[i].id.clone(), reason));
        }
        let i = self.studies.len();
        self.by_id.insert(study.id.clone(), i);
        self.by_title.insert(normalize_title(&study.title), i);
        self.studies.push(study);
        Ok(())
    }

    /// Read a catalog file into this catalog, collapsing duplicates.
    pub fn import<R: Read>(&mut self, reader: R) -> Result<DedupReport, StoreError> {
        let mut report = DedupReport::default();
        for row in parse_rows(reader)? {
            let (line, study) = row?;
            report.rows += 1;
            let (id, title) = (study.id.clone(), study.title.clone());
            match self.insert(study) {
                Ok(()) => report.imported += 1,
                Err((kept, reason)) => report.duplicates.push(DuplicateEntry {
                    line,
                    id,
                    title,
                    kept,
                    reason,
                }),
            }
        }
        Ok(report)
    }
}

/// Import into an empty catalog.
pub fn import_catalog<R: Read>(reader: R) -> Result<(Vec<Study>, DedupReport), StoreError> {
    let mut catalog = Catalog::new();
    let report = catalog.import(reader)?;
    Ok((catalog.into_studies(), report))
}

/// Read rows as-is, without collapsing duplicates.
pub fn read_catalog<R: Read>(reader: R) -> Result<Vec<Study>, StoreError> {
    parse_rows(reader)?
        .map(|row| row.map(|(_, study)| study))
        .collect()
}

type Row = Result<(u64, Study), StoreError>;

fn parse_rows<R: Read>(reader: R) -> Result<impl Iterator<Item = Row>, StoreError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(&e))?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let mut columns = [0usize; 4];
    for (slot, name) in columns.iter_mut().zip(REQUIRED) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| StoreError::MissingColumn(name.to_string()))?;
    }
    let extras: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !columns.contains(i))
        .map(|(i, h)| (i, h.clone()))
        .collect();

    Ok(rdr.into_records().map(move |rec| {
        let rec = rec.map_err(|e| csv_error(&e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        let parse_err = |message: String| StoreError::Parse { line, message };
        let [id, title, source, year] = columns.map(field);
        if id.is_empty() {
            return Err(parse_err("empty id".into()));
        }
        if title.is_empty() {
            return Err(parse_err(format!("empty title for `{id}`")));
        }
        let year = if year.is_empty() {
            0
        } else {
            year.parse()
                .map_err(|_| parse_err(format!("year `{year}` is not an integer")))?
        };
        let extra: BTreeMap<String, String> = extras
            .iter()
            .map(|(i, h)| (h.clone(), field(*i)))
            .filter(|(_, v)| !v.is_empty())
            .collect();
        Ok((
            line,
            Study {
                id,
                title,
                source,
                year,
                extra,
            },
        ))
    }))
}

fn csv_error(e: &csv::Error) -> StoreError {
    StoreError::Parse {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

/// Write studies back out, extra metadata as trailing columns.
pub fn write_catalog<W: Write>(studies: &[Study], writer: W) -> Result<(), StoreError> {
    let extra_keys: BTreeSet<&str> = studies
        .iter()
        .flat_map(|s| s.extra.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = REQUIRED.to_vec();
    header.extend(&extra_keys);
    w.write_record(&header).map_err(|e| csv_error(&e))?;
    for s in studies {
        let year = s.year.to_string();
        let mut row = vec![s.id.as_str(), s.title.as_str(), s.source.as_str(), year.as_str()];
        row.extend(
            extra_keys
                .iter()
                .map(|k| s.extra.get(*k).map_or("", String::as_str)),
        );
        w.write_record(&row).map_err(|e| csv_error(&e))?;
    }
    w.flush().map_err(|e| StoreError::Io {
        path: "<catalog>".into(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(
            normalize_title("  A Systematic   Review: of SLRs! "),
            "a systematic review of slrs"
        );
        assert_eq!(normalize_title("Kappa\tin\nSE"), "kappa in se");
    }

    #[test]
    fn collapses_case_variants() {
        let csv = "id,title,source,year\n1,Kappa in SE,ACM,2017\n2,KAPPA IN SE.,IEEE,2017\n";
        let (studies, report) = import_catalog(csv.as_bytes()).unwrap();
        assert_eq!(studies.len(), 1);
        assert_eq!(report.duplicates.len(), 1);
        let dup = &report.duplicates[0];
        assert_eq!((dup.line, dup.kept.as_str()), (3, "1"));
        assert_eq!(dup.reason, DuplicateReason::SameTitle);
    }

    #[test]
    fn collapses_repeated_ids() {
        let csv = "id,title,source,year\n1,First,ACM,2017\n1,Other title,IEEE,2017\n";
        let (studies, report) = import_catalog(csv.as_bytes()).unwrap();
        assert_eq!(studies.len(), 1);
        assert_eq!(report.duplicates[0].reason, DuplicateReason::SameId);
    }

    #[test]
    fn missing_column() {
        let csv = "title,source,year\nA,B,2001\n";
        assert!(matches!(
            import_catalog(csv.as_bytes()),
            Err(StoreError::MissingColumn(c)) if c == "id"
        ));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let csv = "id,title,source,year\n1,A,B,2001\n2,C,D,last year\n";
        match import_catalog(csv.as_bytes()) {
            Err(StoreError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let ragged = "id,title,source,year\n1,A,B\n";
        assert!(matches!(
            import_catalog(ragged.as_bytes()),
            Err(StoreError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn extra_columns_round_trip() {
        let csv = "ID,Title,Source,Year,doi\n1,A,B,2001,10.1/x\n2,C,D,2002,\n";
        let studies = read_catalog(csv.as_bytes()).unwrap();
        assert_eq!(studies[0].extra["doi"], "10.1/x");
        assert!(studies[1].extra.is_empty());
        let mut out = Vec::new();
        write_catalog(&studies, &mut out).unwrap();
        assert_eq!(read_catalog(out.as_slice()).unwrap(), studies);
    }

    #[test]
    fn reimport_is_all_duplicates() {
        let csv = "id,title,source,year\n1,A,x,2001\n2,B,x,2002\n2,b,x,2002\n";
        let mut catalog = Catalog::new();
        let first = catalog.import(csv.as_bytes()).unwrap();
        let before = catalog.studies().to_vec();
        let second = catalog.import(csv.as_bytes()).unwrap();
        assert_eq!(first.imported, 2);
        assert_eq!(second.imported, 0);
        assert_eq!(second.duplicates.len(), second.rows);
        assert_eq!(catalog.studies(), &before[..]);
    }
}
