//! Terminal tables for metrics reports.

use std::fmt::Write as _;

use vipera_core::metrics::{FewShotResult, Metrics, MetricsReport};

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn row(out: &mut String, generator: &str, crf: &str, m: &Metrics, n: usize) {
    writeln!(
        out,
        "{generator:<10} {crf:>5} {n:>6} {:>7} {:>7} {:>8.4} {:>7}",
        cell(m.tpr),
        cell(m.tnr),
        m.accuracy,
        cell(m.auc)
    )
    .unwrap();
}

pub fn render_report(report: &MetricsReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<10} {:>5} {:>6} {:>7} {:>7} {:>8} {:>7}",
        "generator", "crf", "n", "tpr", "tnr", "accuracy", "auc"
    )
    .unwrap();
    for c in &report.cells {
        row(&mut out, c.generator.tag(), &c.crf.to_string(), &c.metrics, c.counts.total());
    }
    row(&mut out, "overall", "", &report.overall, report.counts.total());
    out
}

pub fn render_fewshot(results: &[FewShotResult]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:>6} {:>6} {:>14} {:>14}",
        "M", "seeds", "accuracy", "auc"
    )
    .unwrap();
    for r in results {
        let m = r.m.map_or_else(|| "all".to_string(), |n| n.to_string());
        writeln!(
            out,
            "{m:>6} {:>6} {:>7.4}±{:<6.4} {:>7.4}±{:<6.4}",
            r.runs.len(),
            r.accuracy.mean,
            r.accuracy.std,
            r.auc.mean,
            r.auc.std
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use vipera_core::dataset::{Crf, Generator};
    use vipera_core::metrics::{grouped_report, EvalRecord};
    use vipera_core::sampler::Label;

    #[test]
    fn table_lists_cells_then_overall() {
        let recs = vec![
            EvalRecord::new("a", Label::Fake, Generator::Seine, Crf::Crf23, 0.9),
            EvalRecord::new("b", Label::Real, Generator::Real, Crf::Uncompressed, 0.1),
        ];
        let text = render_report(&grouped_report(&recs).unwrap());
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("real") && lines[1].contains(" none "));
        assert!(lines[2].starts_with("SEINE") && lines[2].contains(" 23 "));
        assert!(lines[3].starts_with("overall") && lines[3].ends_with("1.0000"));
    }
}
