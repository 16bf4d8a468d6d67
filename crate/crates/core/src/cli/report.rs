//! CSV tables derived from a run's metrics file.

use std::fmt::Write as _;
use std::path::Path;

use crate::metrics::EvalReport;
use crate::{Error, Result};

pub const DOMAIN_ACC_CSV: &str = "domain_acc_vs_step.csv";
pub const INVARIANCE_CSV: &str = "invariance_vs_ndcg.csv";

pub fn read_metrics(path: &Path) -> Result<Vec<EvalReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: EvalReport = serde_json::from_str(line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?;
        out.push(r);
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Returns `(domain_acc_vs_step, invariance_vs_ndcg)` as CSV text, rows
/// sorted by step.
pub fn tables(reports: &[EvalReport]) -> Result<(String, String)> {
    if reports.is_empty() {
        return Err(Error::Usage("metrics file has no evaluation records".into()));
    }
    let mut rows: Vec<&EvalReport> = reports.iter().collect();
    rows.sort_by_key(|r| r.step);

    let mut acc = String::from("step,global_domain_acc,local_domain_acc\n");
    let mut inv = String::from("step,knn_source_pct,target_ndcg,source_ndcg\n");
    for r in rows {
        let _ = writeln!(acc, "{},{},{}", r.step, opt(r.global_domain_acc), opt(r.local_domain_acc));
        let _ = writeln!(inv, "{},{},{},{}", r.step, r.knn_source_pct, r.target_ndcg, r.source_ndcg);
    }
    Ok((acc, inv))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(step: u64, domain: bool) -> EvalReport {
        EvalReport {
            step,
            mode: "x".into(),
            adv_loss: None,
            lambda: None,
            ndcg_k: 10,
            source_ndcg: 0.9,
            target_ndcg: 0.5,
            skipped_queries: 0,
            knn_k: 100,
            knn_source_pct: 12.5,
            global_domain_acc: domain.then_some(80.0),
            global_probe_iterations: None,
            local_domain_acc: domain.then_some(55.0),
            local_domain_acc_train_batch: None,
            ranking_loss: None,
            adversarial_loss: None,
            discrimination_loss: None,
        }
    }

    #[test]
    fn one_row_per_point_sorted() {
        let reports: Vec<EvalReport> = (1..=40).rev().map(|i| report(i * 50, true)).collect();
        let (acc, inv) = tables(&reports).unwrap();
        assert_eq!(acc.lines().count(), 41);
        assert_eq!(inv.lines().count(), 41);
        let steps: Vec<u64> = acc.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(steps.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(acc.lines().nth(1).unwrap(), "50,80,55");
    }

    #[test]
    fn baseline_rows_leave_domain_columns_empty() {
        let (acc, inv) = tables(&[report(50, false)]).unwrap();
        assert_eq!(acc.lines().nth(1).unwrap(), "50,,");
        assert_eq!(inv.lines().nth(1).unwrap(), "50,12.5,0.5,0.9");
    }

    #[test]
    fn empty_metrics_is_an_error() {
        assert!(tables(&[]).is_err());
    }
}
