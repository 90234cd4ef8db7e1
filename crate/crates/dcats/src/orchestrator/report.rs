//! Human-readable and CSV reports over a batch of query results.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::orchestrator::{BaselineMetrics, QueryResult};

/// One target's line in the report.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub target: u32,
    pub backend: String,
    pub rounds: usize,
    pub best_val_mae: f64,
    pub baseline_val_mae: f64,
    pub val_improvement_pct: f64,
    pub test_mae: f64,
    pub baseline_test_mae: f64,
    pub test_improvement_pct: f64,
}

/// Percentage improvement of `ours` over `base`: `(base - ours) / base * 100`.
pub fn improvement_pct(base: f64, ours: f64) -> f64 {
    if base == 0.0 {
        return 0.0;
    }
    (base - ours) / base * 100.0
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Write `report.txt`, `report.csv`, and `word_freq.csv` into `out_dir`.
/// Improvement is measured against the fine-tuned-on-everything baseline.
pub fn emit_report(
    results: &[(QueryResult, BaselineMetrics)],
    out_dir: &Path,
) -> Result<Vec<ReportRow>> {
    std::fs::create_dir_all(out_dir)?;
    let rows: Vec<ReportRow> = results
        .iter()
        .map(|(r, b)| {
            let test_mae = r.test.as_ref().map(|m| m.mae).unwrap_or(f64::NAN);
            ReportRow {
                target: r.target,
                backend: r.backend.clone(),
                rounds: r.rounds_run,
                best_val_mae: r.best.val_mae,
                baseline_val_mae: b.all_data_val.mae,
                val_improvement_pct: improvement_pct(b.all_data_val.mae, r.best.val_mae),
                test_mae,
                baseline_test_mae: b.all_data_test.mae,
                test_improvement_pct: improvement_pct(b.all_data_test.mae, test_mae),
            }
        })
        .collect();

    // CSV, one row per target
    let mut csv = std::io::BufWriter::new(std::fs::File::create(out_dir.join("report.csv"))?);
    writeln!(
        csv,
        "target,backend,rounds,best_val_mae,baseline_val_mae,val_improvement_pct,\
         test_mae,baseline_test_mae,test_improvement_pct"
    )?;
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{:.4},{:.4},{:.2},{:.4},{:.4},{:.2}",
            r.target,
            r.backend,
            r.rounds,
            r.best_val_mae,
            r.baseline_val_mae,
            r.val_improvement_pct,
            r.test_mae,
            r.baseline_test_mae,
            r.test_improvement_pct
        )?;
    }
    csv.flush()?;

    // aligned text table plus the median summary
    let mut txt = std::io::BufWriter::new(std::fs::File::create(out_dir.join("report.txt"))?);
    writeln!(
        txt,
        "{:>8} {:>8} {:>6} {:>12} {:>12} {:>8} {:>12} {:>12} {:>8}",
        "target", "backend", "rounds", "val_mae", "base_val", "impr%", "test_mae", "base_test",
        "impr%"
    )?;
    for r in &rows {
        writeln!(
            txt,
            "{:>8} {:>8} {:>6} {:>12.4} {:>12.4} {:>8.2} {:>12.4} {:>12.4} {:>8.2}",
            r.target,
            r.backend,
            r.rounds,
            r.best_val_mae,
            r.baseline_val_mae,
            r.val_improvement_pct,
            r.test_mae,
            r.baseline_test_mae,
            r.test_improvement_pct
        )?;
    }
    let mut val_impr: Vec<f64> = rows.iter().map(|r| r.val_improvement_pct).collect();
    let mut test_impr: Vec<f64> = rows.iter().map(|r| r.test_improvement_pct).collect();
    writeln!(
        txt,
        "\nmedian val improvement: {:.2}%  median test improvement: {:.2}%  ({} targets)",
        median(&mut val_impr),
        median(&mut test_impr),
        rows.len()
    )?;
    txt.flush()?;

    // word frequencies over the winning explanations
    let freq = word_frequencies(results.iter().map(|(r, _)| r.best.proposal.explanation.as_str()));
    let mut wf = std::io::BufWriter::new(std::fs::File::create(out_dir.join("word_freq.csv"))?);
    writeln!(wf, "word,count")?;
    let mut entries: Vec<(&String, &usize)> = freq.iter().collect();
    entries.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    for (word, count) in entries {
        writeln!(wf, "{word},{count}")?;
    }
    wf.flush()?;
    Ok(rows)
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "have", "in", "is",
    "it", "its", "of", "on", "or", "so", "that", "the", "their", "these", "this", "to", "we",
    "which", "with",
];

/// Lowercased word counts over explanations, stopwords and bare numbers
/// removed.
pub fn word_frequencies<'a>(texts: impl Iterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut freq = BTreeMap::new();
    for text in texts {
        for word in text
            .to_lowercase()
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|w| !w.is_empty())
        {
            if STOPWORDS.contains(&word) || word.chars().all(|c| c.is_ascii_digit()) {
                continue;
            }
            *freq.entry(word.to_string()).or_insert(0) += 1;
        }
    }
    freq
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_formula() {
        assert!((improvement_pct(10.0, 9.0) - 10.0).abs() < 1e-12);
        assert!((improvement_pct(37.31, 35.91) - 3.7523).abs() < 1e-4);
        assert!(improvement_pct(10.0, 11.0) < 0.0);
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn word_frequencies_filter_stopwords_and_numbers() {
        let freq = word_frequencies(
            ["The road neighbors share flows.", "Road 42 pattern, road!"].into_iter(),
        );
        assert_eq!(freq.get("road"), Some(&3));
        assert_eq!(freq.get("pattern"), Some(&1));
        assert!(freq.get("the").is_none());
        assert!(freq.get("42").is_none());
    }
}
