//! Markdown risk report.

use std::fmt::Write as _;

use vulnrank_core::classify::{EvalReport, RiskReport};

use crate::config::ReportSection;
use crate::stages::{GAIN_CURVE, RANKING};

fn cell(s: &str) -> String {
    s.replace('\t', ", ").replace('|', "\\|")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

pub fn render(ranking: &RiskReport, eval: &EvalReport, matrix: &[Vec<f64>], section: &ReportSection) -> String {
    let mut md = String::new();
    let labeled = ranking.ranked.iter().filter(|r| r.label == 1).count();
    md.push_str("# Vulnerability risk report\n\n");
    let _ = writeln!(
        md,
        "{} functions scored, {labeled} carry a CVE label.\n",
        ranking.ranked.len()
    );

    let _ = writeln!(
        md,
        "## Held-out evaluation\n\n{} test functions, {} labeled (base rate {:.4}).\n",
        eval.n, eval.positives, eval.base_rate
    );
    md.push_str("| metric | value |\n|---|---|\n");
    let _ = writeln!(md, "| AUC | {} |", opt(eval.auc));
    let _ = writeln!(md, "| lift area | {} |", opt(eval.lift_area));
    for (name, v) in [
        ("accuracy", eval.accuracy),
        ("precision", eval.precision),
        ("recall", eval.recall),
        ("specificity", eval.specificity),
        ("threshold", eval.threshold),
    ] {
        let _ = writeln!(md, "| {name} | {v:.4} |");
    }
    let _ = writeln!(md, "\nGain curve: `{GAIN_CURVE}`.\n");
    md.push_str("| top % | examined | positives found | captured | precision | × base rate |\n");
    md.push_str("|---|---|---|---|---|---|\n");
    for c in &eval.top_percent_capture {
        let _ = writeln!(
            md,
            "| {} | {} | {:.2} | {:.4} | {:.4} | {:.2} |",
            c.percent, c.examined, c.positives_found, c.captured_fraction, c.precision, c.lift
        );
    }

    md.push_str("\n## Whole-corpus capture\n\nIncludes functions the model was trained on.\n\n");
    md.push_str("| top % | examined | positives found | captured |\n|---|---|---|---|\n");
    for c in &ranking.capture {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {:.4} |",
            c.percent, c.examined, c.positives_found, c.captured_fraction
        );
    }

    let _ = writeln!(md, "\n## Highest-risk functions\n\nFull ranking: `{RANKING}`.\n");
    md.push_str("| rank | function | file | score | label |\n|---|---|---|---|---|\n");
    for r in ranking.ranked.iter().take(section.top_rows) {
        let _ = writeln!(
            md,
            "| {} | `{}` | {} | {:.6} | {} |",
            r.rank,
            cell(&r.name),
            cell(&r.file_path),
            r.score,
            r.label
        );
    }

    if !matrix.is_empty() {
        md.push_str("\n## Similarity among the top-scored functions\n\nCosine similarity of function embeddings, in rank order.\n\n");
        md.push('|');
        md.push_str(" rank |");
        for r in ranking.ranked.iter().take(matrix.len()) {
            let _ = write!(md, " {} |", r.rank);
        }
        md.push_str("\n|---|");
        md.push_str(&"---|".repeat(matrix.len()));
        md.push('\n');
        for (i, row) in matrix.iter().enumerate() {
            let _ = write!(md, "| {} |", ranking.ranked[i].rank);
            for v in row {
                let _ = write!(md, " {v:.3} |");
            }
            md.push('\n');
        }
    }
    md
}
