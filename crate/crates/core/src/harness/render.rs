//! Markdown result tables.

use std::fmt::Write;

use super::{HarnessError, RunReport, Task};
use crate::metrics::MeanStd;

/// `mean ± std` with a fixed number of decimals.
pub fn fmt_mean_std(ms: &MeanStd, decimals: usize) -> String {
    format!("{:.*} ± {:.*}", decimals, ms.mean, decimals, ms.std)
}

fn cell(report: &RunReport, key: &str, decimals: usize) -> String {
    report
        .summary
        .get(key)
        .map_or_else(|| "-".to_string(), |ms| fmt_mean_std(ms, decimals))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn table(out: &mut String, title: &str, header: &[&str], rows: Vec<Vec<String>>) {
    let _ = writeln!(out, "### {title}\n");
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}|", header.iter().map(|_| "---").collect::<Vec<_>>().join("|"));
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out.push('\n');
}

/// One table per task, one row per report. Rates use two decimals,
/// normalized edit distance and BLEU three; missing values show as `-`.
pub fn render_markdown(reports: &[RunReport]) -> Result<String, HarnessError> {
    if reports.is_empty() || reports.iter().all(|r| r.runs.is_empty() || r.summary.is_empty()) {
        return Err(HarnessError::EmptyReport);
    }
    let with = |t: Task| -> Vec<&RunReport> { reports.iter().filter(|r| r.tasks.contains(&t)).collect() };
    let mut out = String::new();

    let gen = with(Task::Generation);
    if !gen.is_empty() {
        let rows = gen
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    yes_no(r.config.shuffle).into(),
                    yes_no(r.config.feedback).into(),
                    cell(r, "generation.function_precision", 2),
                    cell(r, "generation.function_recall", 2),
                    cell(r, "generation.levenshtein_normalized", 3),
                    cell(r, "generation.arg_name_precision", 2),
                    cell(r, "generation.arg_name_recall", 2),
                    cell(r, "generation.arg_value_embedscore", 2),
                    cell(r, "generation.arg_value_bleu", 3),
                ]
            })
            .collect();
        table(
            &mut out,
            "Protocol generation",
            &[
                "Model",
                "Shuffle",
                "Feedback",
                "Function P",
                "Function R",
                "L_dn",
                "Arg P",
                "Arg R",
                "EmbedScore",
                "BLEU",
            ],
            rows,
        );
    }

    let next = with(Task::NextStep);
    if !next.is_empty() {
        let rows = next
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    yes_no(r.config.shuffle).into(),
                    cell(r, "next_step.function_accuracy", 2),
                    cell(r, "next_step.arg_name_precision", 2),
                    cell(r, "next_step.arg_name_recall", 2),
                    cell(r, "next_step.arg_value_embedscore", 2),
                    cell(r, "next_step.arg_value_bleu", 3),
                ]
            })
            .collect();
        table(
            &mut out,
            "Next-step prediction",
            &["Model", "Shuffle", "Accuracy", "Arg P", "Arg R", "EmbedScore", "BLEU"],
            rows,
        );
    }

    let ret = with(Task::Retrieval);
    if !ret.is_empty() {
        let rows = ret
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    format!("{} ({})", r.config.distractors, r.config.distractor_mode),
                    cell(r, "retrieval.precision", 2),
                    cell(r, "retrieval.recall", 2),
                ]
            })
            .collect();
        table(
            &mut out,
            "Function retrieval",
            &["Model", "Distractors", "P", "R"],
            rows,
        );
    }

    let judge = with(Task::Judge);
    if !judge.is_empty() {
        let rows = judge
            .iter()
            .map(|r| vec![r.model.clone(), cell(r, "judge.predicted_preference_rate", 2)])
            .collect();
        table(&mut out, "Pairwise judging", &["Model", "Preferred over gold"], rows);
    }

    Ok(out.trim_end().to_string() + "\n")
}
