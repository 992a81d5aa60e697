//! Study selection form: one reviewer's verdicts on a batch.
//!
//! ```text
//! # reviewer: R1
//! # time_spent: 02:20
//! study_id,title,include,criteria
//! 35705,A mapping study,Y,IC1;IC2
//! 20381,Tool support for SLRs,N,EC2
//! ```

use std::fmt::Write as _;

use kappagate_core::agreement::Verdict;
use kappagate_core::protocol::CriterionRef;
use kappagate_core::store::StoreError;
use kappagate_core::timing::parse_hhmm;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormRow {
    pub study: String,
    pub title: String,
    pub verdict: Verdict,
    pub cited: Vec<CriterionRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SelectionForm {
    pub reviewer: Option<String>,
    /// Minutes from the `# time_spent: hh:mm` line.
    pub time_spent: Option<u32>,
    pub rows: Vec<FormRow>,
}

fn parse_error(line: u64, message: impl Into<String>) -> StoreError {
    StoreError::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_selection_form(text: &str) -> Result<SelectionForm, StoreError> {
    let mut form = SelectionForm::default();
    let mut table = String::new();
    let mut table_lines = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        match line.trim_start().strip_prefix('#') {
            Some(meta) => {
                let Some((key, value)) = meta.split_once(':') else {
                    continue;
                };
                let value = value.trim();
                match key.trim().to_ascii_lowercase().as_str() {
                    "reviewer" => form.reviewer = Some(value.to_string()),
                    "time_spent" | "time spent" => {
                        let minutes = parse_hhmm(value)
                            .map_err(|e| parse_error(line_no, e.to_string()))?;
                        form.time_spent = Some(minutes);
                    }
                    _ => {}
                }
            }
            None if line.trim().is_empty() => {}
            None => {
                table.push_str(line);
                table.push('\n');
                table_lines.push(line_no);
            }
        }
    }

    let mut rdr = csv::Reader::from_reader(table.as_bytes());
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_error(table_lines.first().copied().unwrap_or(0), e.to_string()))?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let find = |names: &[&str]| headers.iter().position(|h| names.contains(&h.as_str()));
    let first = table_lines.first().copied().unwrap_or(0);
    let id_col = find(&["study_id", "id", "study"])
        .ok_or_else(|| StoreError::MissingColumn("study_id".into()))?;
    let verdict_col = find(&["include", "include?", "verdict", "include? (y/n)"])
        .ok_or_else(|| StoreError::MissingColumn("include".into()))?;
    let title_col = find(&["title", "study title"]);
    let criteria_col = find(&["criteria", "ic/ec"]);
    let _ = first;

    for (i, rec) in rdr.records().enumerate() {
        let line = table_lines.get(i + 1).copied().unwrap_or(0);
        let rec = rec.map_err(|e| parse_error(line, e.to_string()))?;
        let get = |c: Option<usize>| c.and_then(|c| rec.get(c)).unwrap_or("").trim().to_string();
        let study = get(Some(id_col));
        if study.is_empty() {
            return Err(parse_error(line, "empty study id"));
        }
        let raw = get(Some(verdict_col));
        let verdict =
            Verdict::parse(&raw).ok_or_else(|| parse_error(line, format!("bad verdict `{raw}`")))?;
        let cited = CriterionRef::parse_list(&get(criteria_col))
            .map_err(|e| parse_error(line, e.to_string()))?;
        form.rows.push(FormRow {
            study,
            title: get(title_col),
            verdict,
            cited,
        });
    }
    Ok(form)
}

impl SelectionForm {
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(r) = &self.reviewer {
            let _ = writeln!(out, "# reviewer: {r}");
        }
        if let Some(m) = self.time_spent {
            let _ = writeln!(out, "# time_spent: {}", kappagate_core::timing::format_hhmm(m));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["study_id", "title", "include", "criteria"])
            .expect("in-memory write");
        for row in &self.rows {
            w.write_record([
                row.study.as_str(),
                row.title.as_str(),
                row.verdict.as_yn(),
                &CriterionRef::format_list(&row.cited),
            ])
            .expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8"));
        out
    }
}
