use std::fmt::Write;

use crate::suite::BenchReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

fn seconds(ms: Option<f64>) -> String {
    match ms {
        Some(ms) => format!("{:.2} Sec", ms / 1e3),
        None => "-".to_string(),
    }
}

/// Modes as rows, queries as columns.
pub fn render_report(report: &BenchReport, format: ReportFormat) -> String {
    let cell = |mode: &str, query: &str| report.entry(mode, query).map(|e| e.elapsed_ms);
    let mut out = String::new();
    match format {
        ReportFormat::Text => {
            let mut rows = vec![std::iter::once("Time".to_string())
                .chain(report.queries.iter().cloned())
                .collect::<Vec<_>>()];
            for m in &report.modes {
                rows.push(
                    std::iter::once(m.clone())
                        .chain(report.queries.iter().map(|q| seconds(cell(m, q))))
                        .collect(),
                );
            }
            let ncols = rows[0].len();
            let widths: Vec<usize> = (0..ncols)
                .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
                .collect();
            for r in &rows {
                let line: Vec<String> = r
                    .iter()
                    .zip(&widths)
                    .map(|(v, w)| format!("{v:<w$}"))
                    .collect();
                writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
            }
            let env = &report.environment;
            writeln!(
                out,
                "\ncores: {}  partition bytes: {}  repetitions: {}  worker counts: {:?}",
                env.cores, env.partition_bytes, env.repetitions, env.workers
            )
            .unwrap();
        }
        ReportFormat::Csv => {
            writeln!(out, "Time,{}", report.queries.join(",")).unwrap();
            for m in &report.modes {
                let cells: Vec<String> = report
                    .queries
                    .iter()
                    .map(|q| cell(m, q).map_or(String::new(), |ms| format!("{:.2}", ms / 1e3)))
                    .collect();
                writeln!(out, "{m},{}", cells.join(",")).unwrap();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::{BenchEntry, Environment};

    fn report() -> BenchReport {
        let modes = vec!["disk-single".to_string(), "cached-single".to_string()];
        let queries = vec![
            "Query 1".to_string(),
            "Query 2".to_string(),
            "Query 3".to_string(),
        ];
        let mut entries = Vec::new();
        for (i, m) in modes.iter().enumerate() {
            for (j, q) in queries.iter().enumerate() {
                entries.push(BenchEntry {
                    mode: m.clone(),
                    query: q.clone(),
                    elapsed_ms: 1000.0 * (i + 1) as f64 + 10.0 * j as f64 + 0.4,
                    samples_ms: vec![],
                    row_count: 1,
                    digest: String::new(),
                });
            }
        }
        BenchReport {
            modes,
            queries,
            entries,
            environment: Environment {
                cores: 4,
                partition_bytes: 1 << 20,
                repetitions: 3,
                workers: vec![],
            },
        }
    }

    #[test]
    fn text_layout() {
        let text = render_report(&report(), ReportFormat::Text);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("Time"));
        for q in ["Query 1", "Query 2", "Query 3"] {
            assert!(lines[0].contains(q));
        }
        assert!(lines[1].starts_with("disk-single"));
        assert!(lines[1].contains("1.00 Sec") && lines[1].contains("1.02 Sec"));
        assert!(lines[2].contains("2.01 Sec"));
    }

    #[test]
    fn csv_shape() {
        let csv = render_report(&report(), ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "Time,Query 1,Query 2,Query 3");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], "cached-single,2.00,2.01,2.02");
    }
}
