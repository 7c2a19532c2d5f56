//! Aggregation into report tables: per-(tier, topology, backend) means in the
//! column order Errors, Prec., Rec., Actions, Tokens In, Out, Cost, Incl., Acc.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::RunReport;

pub const COLUMNS: [&str; 9] = [
    "Errors", "Prec.", "Rec.", "Actions", "Tokens In", "Out", "Cost", "Incl.", "Acc.",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub tier: u8,
    pub topology: String,
    pub backend: String,
    pub runs: usize,
    pub values: [f64; 9],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

/// Group runs by (tier, topology, backend) and average each column. The fold
/// is ordered by item id, so aggregation is deterministic.
pub fn aggregate(reports: &[RunReport]) -> ReportTable {
    let mut sorted: Vec<&RunReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let mut groups: BTreeMap<(u8, String, String), Vec<&RunReport>> = BTreeMap::new();
    for r in sorted {
        groups
            .entry((r.tier, r.topology.clone(), r.backend.clone()))
            .or_default()
            .push(r);
    }
    let rows = groups
        .into_iter()
        .map(|((tier, topology, backend), runs)| {
            let n = runs.len() as f64;
            let mean = |f: &dyn Fn(&RunReport) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / n;
            ReportRow {
                tier,
                topology,
                backend,
                runs: runs.len(),
                values: [
                    mean(&|r| r.metrics.errors as f64),
                    mean(&|r| r.fidelity.precision),
                    mean(&|r| r.fidelity.recall),
                    mean(&|r| r.metrics.actions as f64),
                    mean(&|r| r.metrics.tokens_in as f64),
                    mean(&|r| r.metrics.tokens_out as f64),
                    mean(&|r| r.metrics.cost_cents),
                    mean(&|r| r.metrics.inclusion_rate),
                    mean(&|r| r.metrics.accuracy),
                ],
            }
        })
        .collect();
    ReportTable { rows }
}

impl ReportTable {
    /// Comma-separated form, one row per group.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tier,topology,backend,runs,");
        out.push_str(&COLUMNS.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}",
                row.tier, row.topology, row.backend, row.runs
            ));
            for v in row.values {
                out.push_str(&format!(",{v:.4}"));
            }
            out.push('\n');
        }
        out
    }

    /// Fixed-width text table.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<5} {:<16} {:<10} {:>5}",
            "Tier", "Topology", "Backend", "Runs"
        );
        for c in COLUMNS {
            out.push_str(&format!(" {c:>10}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{:<5} {:<16} {:<10} {:>5}",
                row.tier, row.topology, row.backend, row.runs
            ));
            for v in row.values {
                out.push_str(&format!(" {v:>10.3}"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::fidelity::FidelityScore;
    use crate::eval::judge::JudgeVerdict;
    use crate::eval::metrics::RunMetrics;

    fn report(item: &str, precision: f64) -> RunReport {
        RunReport {
            item_id: item.into(),
            tier: 1,
            topology: "single".into(),
            backend: "scripted".into(),
            metrics: RunMetrics {
                errors: 0,
                actions: 2,
                tokens_in: 100,
                tokens_out: 10,
                cost_cents: 0.0,
                inclusion_rate: 1.0,
                accuracy: 1.0,
            },
            fidelity: FidelityScore {
                precision,
                recall: 1.0,
                matched: 1,
                extra: 0,
                missing: 0,
            },
            verdict: JudgeVerdict {
                fields: vec![],
                included: 1,
                correct: 1,
                queried: 1,
            },
        }
    }

    #[test]
    fn single_run_group_equals_its_metrics() {
        let t = aggregate(&[report("a", 1.0)]);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].values[1], 1.0);
        assert_eq!(t.rows[0].runs, 1);
    }

    #[test]
    fn means_are_averaged() {
        let t = aggregate(&[report("a", 1.0), report("b", 0.5)]);
        assert_eq!(t.rows[0].values[1], 0.75);
    }

    #[test]
    fn csv_has_the_table_one_column_order() {
        let t = aggregate(&[report("a", 1.0)]);
        let csv = t.to_csv();
        assert!(csv.starts_with(
            "tier,topology,backend,runs,Errors,Prec.,Rec.,Actions,Tokens In,Out,Cost,Incl.,Acc."
        ));
        assert!(t.to_text().contains("Errors"));
    }
}
