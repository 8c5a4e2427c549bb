use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FunctionRecord;
use crate::error::{Error, Result};

/// One row of the CVE label file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CveLabelEntry {
    pub cve_id: String,
    pub file_path: String,
    pub function_name: String,
}

/// Outcome of joining label entries onto records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMergeReport {
    pub matched_entries: usize,
    pub labeled_records: usize,
    pub unmatched: Vec<CveLabelEntry>,
}

fn valid_cve_id(id: &str) -> bool {
    let Some(rest) = id.strip_prefix("CVE-") else {
        return false;
    };
    let Some((year, seq)) = rest.split_once('-') else {
        return false;
    };
    year.len() == 4
        && year.bytes().all(|b| b.is_ascii_digit())
        && !seq.is_empty()
        && seq.bytes().all(|b| b.is_ascii_digit())
}

/// Parses label CSV text with header `cve_id,file_path,function_name`.
///
/// Duplicate (file_path, function_name) pairs keep their first occurrence.
pub fn parse_cve_labels(text: &str) -> Result<Vec<CveLabelEntry>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["cve_id", "file_path", "function_name"] {
        return Err(Error::Data(format!(
            "label file header must be `cve_id,file_path,function_name`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (row, rec) in reader.deserialize::<CveLabelEntry>().enumerate() {
        let entry = rec?;
        if !valid_cve_id(&entry.cve_id) {
            return Err(Error::Data(format!(
                "label row {}: `{}` is not a CVE id",
                row + 2,
                entry.cve_id
            )));
        }
        if seen.insert((entry.file_path.clone(), entry.function_name.clone())) {
            entries.push(entry);
        }
    }
    Ok(entries)
}

pub fn load_cve_labels(path: &Path) -> Result<Vec<CveLabelEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cve_labels(&text)
}

/// Sets `label = 1` on every record named by some entry, `0` elsewhere.
///
/// An entry names a record when file paths are equal and the function name
/// equals either the record's full name or its last `::` component. Same-named
/// overloads in one file are all labeled.
pub fn merge_cve_labels(
    records: &[FunctionRecord],
    labels: &[CveLabelEntry],
) -> (Vec<FunctionRecord>, LabelMergeReport) {
    let mut by_key: HashMap<(&str, &str), Vec<usize>> = HashMap::new();
    for (i, rec) in records.iter().enumerate() {
        let short = rec.name.rsplit("::").next().unwrap_or(&rec.name);
        by_key.entry((&rec.file_path, &rec.name)).or_default().push(i);
        if short != rec.name {
            by_key.entry((&rec.file_path, short)).or_default().push(i);
        }
    }

    let mut out = records.to_vec();
    for rec in &mut out {
        rec.label = 0;
    }
    let mut report = LabelMergeReport::default();
    for entry in labels {
        match by_key.get(&(entry.file_path.as_str(), entry.function_name.as_str())) {
            Some(hits) => {
                report.matched_entries += 1;
                for &i in hits {
                    out[i].label = 1;
                }
            }
            None => report.unmatched.push(entry.clone()),
        }
    }
    report.labeled_records = out.iter().filter(|r| r.label == 1).count();
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, file: &str, name: &str) -> FunctionRecord {
        FunctionRecord {
            id,
            name: name.into(),
            file_path: file.into(),
            line_start: id as usize + 1,
            line_end: id as usize + 1,
            body: format!("void {name}() {{}}"),
            param_count: 0,
            label: 0,
        }
    }

    fn entry(file: &str, name: &str) -> CveLabelEntry {
        CveLabelEntry {
            cve_id: "CVE-2017-0781".into(),
            file_path: file.into(),
            function_name: name.into(),
        }
    }

    #[test]
    fn single_match() {
        let recs = vec![rec(0, "a.c", "f"), rec(1, "a.c", "g"), rec(2, "b.c", "f")];
        let (out, report) = merge_cve_labels(&recs, &[entry("a.c", "g")]);
        let labels: Vec<u8> = out.iter().map(|r| r.label).collect();
        assert_eq!(labels, [0, 1, 0]);
        assert_eq!(report.matched_entries, 1);
        assert!(report.unmatched.is_empty());
        for (a, b) in recs.iter().zip(&out) {
            assert_eq!((&a.name, &a.body, a.id), (&b.name, &b.body, b.id));
        }
    }

    #[test]
    fn no_labels_means_all_zero() {
        let mut recs = vec![rec(0, "a.c", "f")];
        recs[0].label = 1;
        let (out, report) = merge_cve_labels(&recs, &[]);
        assert_eq!(out[0].label, 0);
        assert_eq!(report.labeled_records, 0);
    }

    #[test]
    fn overloads_are_all_labeled() {
        let recs = vec![rec(0, "a.cc", "f"), rec(1, "a.cc", "f"), rec(2, "a.cc", "g")];
        let (out, report) = merge_cve_labels(&recs, &[entry("a.cc", "f")]);
        assert_eq!(out.iter().map(|r| r.label).collect::<Vec<_>>(), [1, 1, 0]);
        assert_eq!(report.labeled_records, 2);
    }

    #[test]
    fn qualified_names_match_short_form() {
        let recs = vec![rec(0, "a.cc", "ns::Foo::bar")];
        let (out, _) = merge_cve_labels(&recs, &[entry("a.cc", "bar")]);
        assert_eq!(out[0].label, 1);
    }

    #[test]
    fn unmatched_entries_are_reported() {
        let recs = vec![rec(0, "a.c", "f")];
        let (_, report) = merge_cve_labels(&recs, &[entry("a.c", "nope"), entry("z.c", "f")]);
        assert_eq!(report.matched_entries, 0);
        assert_eq!(report.unmatched.len(), 2);
    }

    #[test]
    fn parse_dedupes_and_validates() {
        let text = "cve_id,file_path,function_name\nCVE-2017-0781,a.c,f\nCVE-2018-1,a.c,f\nCVE-2019-22,b.c,g\n";
        let got = parse_cve_labels(text).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].cve_id, "CVE-2017-0781");

        assert!(parse_cve_labels("cve_id,file_path,function_name\nCVE-17-1,a.c,f\n").is_err());
        assert!(parse_cve_labels("id,path,name\nCVE-2017-1,a.c,f\n").is_err());
    }
}
