//! Dual-review summary form for a closed round.
//!
//! One comma-delimited row per study with both reviewers' verdicts and the
//! criteria they cited, then a `#`-prefixed statistics block:
//!
//! ```text
//! study_id,title,R1,R2,comments
//! ...
//! # k=0.70 k_max=0.74 k_min=-0.07 k_nor=0.73 S_D=0.00 P++=0.60
//! # p0=0.87 pc=0.56 S_A=0.54 P--=0.27 band=Substantial gate=not_passed
//! # comments: <round discussion note>
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::agreement::Verdict;
use crate::protocol::{CriterionRef, ReviewSession};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub study: String,
    pub title: String,
    pub first: Verdict,
    pub second: Verdict,
    pub comments: String,
}

/// Parsed form of an exported round report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundReportDoc {
    pub reviewers: [String; 2],
    pub rows: Vec<ReportRow>,
    /// `key=value` statistics lines in order.
    pub statistics: Vec<Vec<(String, String)>>,
    pub comments: String,
}

impl RoundReportDoc {
    /// Build the form for a closed round.
    pub fn from_round(session: &ReviewSession, round: u32) -> Result<Self, StoreError> {
        let r = session.round(round)?;
        let report = r.report.as_ref().ok_or(StoreError::RoundNotClosed(round))?;
        let [first, second] = [&session.reviewers()[0], &session.reviewers()[1]];
        let cited = |rev: &str, study: &str| {
            r.decisions
                .get(rev)
                .and_then(|ds| ds.get(study))
                .map(|d| CriterionRef::format_list(&d.cited))
                .unwrap_or_default()
        };
        let rows = r
            .batch
            .iter()
            .map(|study| {
                let mut comments = format!(
                    "{first}: {}; {second}: {}",
                    cited(first, study),
                    cited(second, study)
                );
                if let Some(res) = r.resolutions.get(study) {
                    let _ = write!(comments, "; resolved {}", res.verdict);
                    if !res.note.is_empty() {
                        let _ = write!(comments, " ({})", one_line(&res.note));
                    }
                }
                ReportRow {
                    study: study.clone(),
                    title: session.study(study).map_or_else(String::new, |s| one_line(&s.title)),
                    first: r.verdict(first, study).expect("closed rounds are complete"),
                    second: r.verdict(second, study).expect("closed rounds are complete"),
                    comments,
                }
            })
            .collect();

        let d = report.display();
        let pairs = |items: &[(&str, &str)]| {
            items
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect::<Vec<_>>()
        };
        let band = report.band.map_or_else(|| "undef".to_string(), |b| format!("{b:?}"));
        let gate = match r.gate_passed {
            Some(true) => "passed",
            _ => "not_passed",
        };
        let statistics = vec![
            pairs(&[
                ("k", &d.k),
                ("k_max", &d.k_max),
                ("k_min", &d.k_min),
                ("k_nor", &d.k_nor),
                ("S_D", &d.s_d),
                ("P++", &d.ppp),
            ]),
            pairs(&[
                ("p0", &d.p0),
                ("pc", &d.pc),
                ("S_A", &d.s_a),
                ("P--", &d.pmm),
                ("band", &band),
                ("gate", gate),
            ]),
        ];
        Ok(Self {
            reviewers: [first.clone(), second.clone()],
            rows,
            statistics,
            comments: r.note.as_deref().map(one_line).unwrap_or_default(),
        })
    }

    pub fn render(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["study_id", "title", &self.reviewers[0], &self.reviewers[1], "comments"])
            .expect("in-memory write");
        for row in &self.rows {
            w.write_record([
                row.study.as_str(),
                row.title.as_str(),
                row.first.as_yn(),
                row.second.as_yn(),
                row.comments.as_str(),
            ])
            .expect("in-memory write");
        }
        let mut out = String::from_utf8(w.into_inner().expect("in-memory write"))
            .expect("csv output is utf-8");
        for line in &self.statistics {
            let body = line
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(out, "# {body}");
        }
        let _ = writeln!(out, "# comments: {}", self.comments);
        out
    }

    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let (table, block): (Vec<&str>, Vec<&str>) =
            text.lines().partition(|l| !l.starts_with('#'));
        let table = table.join("\n");
        let mut rdr = csv::Reader::from_reader(table.as_bytes());
        let headers = rdr.headers().map_err(|e| parse_error(0, e.to_string()))?.clone();
        if headers.len() != 5 {
            return Err(parse_error(1, "expected 5 columns".into()));
        }
        let reviewers = [headers[2].to_string(), headers[3].to_string()];
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| parse_error(0, e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let verdict = |s: &str| {
                Verdict::parse(s).ok_or_else(|| parse_error(line, format!("bad verdict `{s}`")))
            };
            rows.push(ReportRow {
                study: rec[0].to_string(),
                title: rec[1].to_string(),
                first: verdict(&rec[2])?,
                second: verdict(&rec[3])?,
                comments: rec[4].to_string(),
            });
        }
        let mut statistics = Vec::new();
        let mut comments = String::new();
        for line in block {
            let body = line.trim_start_matches('#').trim_start();
            if let Some(c) = body.strip_prefix("comments:") {
                comments = c.trim_start().to_string();
                continue;
            }
            let pairs = body
                .split_whitespace()
                .map(|kv| {
                    kv.split_once('=')
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .ok_or_else(|| parse_error(0, format!("bad statistic `{kv}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            statistics.push(pairs);
        }
        Ok(Self {
            reviewers,
            rows,
            statistics,
            comments,
        })
    }

    /// Look up a statistic by key.
    pub fn statistic(&self, key: &str) -> Option<&str> {
        self.statistics
            .iter()
            .flatten()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_error(line: u64, message: String) -> StoreError {
    StoreError::Parse { line, message }
}

/// Render the summary form for a closed round.
pub fn export_round_report(session: &ReviewSession, round: u32) -> Result<String, StoreError> {
    RoundReportDoc::from_round(session, round).map(|doc| doc.render())
}
