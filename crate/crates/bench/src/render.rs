use std::fmt::Write;

use crate::{BenchResult, Metric};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?}; expected text, csv or json")),
        }
    }
}

/// Model labels in first-seen order.
fn models(results: &[BenchResult]) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for r in results {
        if !out.contains(&r.model.as_str()) {
            out.push(&r.model);
        }
    }
    out
}

fn sorted_rows<'a>(results: &'a [BenchResult], model: &str) -> Vec<&'a BenchResult> {
    let mut rows: Vec<&BenchResult> = results.iter().filter(|r| r.model == model).collect();
    rows.sort_by_key(|r| (Metric::ALL.iter().position(|m| *m == r.metric), r.backend.clone()));
    rows
}

pub fn render_table(results: &[BenchResult], format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(results).expect("results serialize");
            out.push(b'\n');
            out
        }
        Format::Csv => {
            let mut out = String::from("model,metric,backend,samples,mean,max,min,std\n");
            for model in models(results) {
                for r in sorted_rows(results, model) {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        r.model,
                        r.metric,
                        r.backend,
                        r.samples.len(),
                        r.mean,
                        r.max,
                        r.min,
                        r.std
                    );
                }
            }
            out.into_bytes()
        }
        Format::Text => {
            let mut out = String::new();
            for model in models(results) {
                let rows = sorted_rows(results, model);
                let n = rows.first().map_or(0, |r| r.samples.len());
                let _ = writeln!(out, "Model {model} ({n} runs)");
                let _ = writeln!(
                    out,
                    "{:<16} {:<18} {:>14} {:>14} {:>14} {:>14}",
                    "Metric", "Backend", "Mean", "Max", "Min", "Std"
                );
                for r in rows {
                    let _ = writeln!(
                        out,
                        "{:<16} {:<18} {:>14.3} {:>14.3} {:>14.3} {:>14.3}",
                        r.metric.as_str(),
                        r.backend,
                        r.mean,
                        r.max,
                        r.min,
                        r.std
                    );
                }
                out.push('\n');
            }
            out.into_bytes()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<BenchResult> {
        let mut out = Vec::new();
        for model in ["16-8-2", "64-32-10"] {
            for backend in ["reference", "mock"] {
                for metric in Metric::ALL {
                    out.push(BenchResult::new(backend, model, metric, vec![1.0, 2.0, 4.0]).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn text_has_stat_headers() {
        let text = String::from_utf8(render_table(&sample(), Format::Text)).unwrap();
        for h in ["Mean", "Max", "Min", "Std", "proving_ms", "verification_ms", "proof_bytes", "Model 64-32-10"] {
            assert!(text.contains(h), "missing {h}");
        }
        assert!(text.find("Model 16-8-2").unwrap() < text.find("Model 64-32-10").unwrap());
    }

    #[test]
    fn csv_rows_are_metrics_times_backends_per_model() {
        let csv = String::from_utf8(render_table(&sample(), Format::Csv)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "model,metric,backend,samples,mean,max,min,std");
        assert_eq!(lines.len() - 1, 2 * 3 * 2);
        assert_eq!(lines.iter().filter(|l| l.starts_with("16-8-2,")).count(), 3 * 2);
    }

    #[test]
    fn json_round_trips() {
        let results = sample();
        let back: Vec<BenchResult> = serde_json::from_slice(&render_table(&results, Format::Json)).unwrap();
        assert_eq!(back, results);
    }
}
