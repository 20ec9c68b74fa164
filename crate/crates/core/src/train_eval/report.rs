use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::ablation::{select_optimal, AblationRow, SELECTION_TOLERANCE};
use super::metrics::{EvalReport, HISTOGRAM_BIN_S};
use super::train::EpochLoss;
use crate::error::{Error, Result};

pub struct ReportBundle<'a> {
    pub eval: &'a EvalReport,
    pub history: &'a [EpochLoss],
    pub ablation: Option<&'a [AblationRow]>,
    /// Free-form header lines for the summary (model spec, data source).
    pub context: Vec<String>,
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::io::BufWriter<std::fs::File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

pub fn write_history(path: &Path, history: &[EpochLoss]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "train_mse", "val_mse"])?;
    for h in history {
        w.write_record([
            h.epoch.to_string(),
            format!("{:.6}", h.train_mse),
            format!("{:.6}", h.val_mse),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<EpochLoss>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(file));
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("");
        let bad = || Error::Malformed {
            what: "history row",
            line,
            detail: format!("`{}`", row.iter().collect::<Vec<_>>().join(",")),
        };
        out.push(EpochLoss {
            epoch: field(0).parse().map_err(|_| bad())?,
            train_mse: field(1).parse().map_err(|_| bad())?,
            val_mse: field(2).parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

pub fn write_ablation(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "spec",
        "params",
        "macs",
        "flops_paper_convention",
        "test_rmse_s",
    ])?;
    for r in rows {
        w.write_record([
            r.spec.to_string(),
            r.params.to_string(),
            r.macs.to_string(),
            r.paper_flops_convention.to_string(),
            format!("{:.4}", r.test_rmse),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn summary(bundle: &ReportBundle<'_>) -> String {
    let e = bundle.eval;
    let mut s = String::new();
    for line in &bundle.context {
        let _ = writeln!(s, "{line}");
    }
    let _ = writeln!(s, "test examples         {}", e.n_test);
    let _ = writeln!(s, "RMSE (s)              {:.4}", e.rmse);
    let _ = writeln!(s, "MAE (s)               {:.4}", e.mae);
    match e.mape {
        Some(m) => {
            let _ = writeln!(
                s,
                "MAPE (%)              {m:.2} ({} zero-deviation targets excluded)",
                e.mape_excluded
            );
        }
        None => {
            let _ = writeln!(s, "MAPE (%)              undefined (all targets zero)");
        }
    }
    let _ = writeln!(s, "predict-zero RMSE (s) {:.4}", e.baseline_rmse);
    if let Some((route, worst)) = e
        .per_route
        .iter()
        .max_by(|a, b| a.1.rmse.total_cmp(&b.1.rmse))
    {
        let _ = writeln!(
            s,
            "worst route           {route} ({:.4} s over {} examples)",
            worst.rmse, worst.n
        );
    }
    if let Some(last) = bundle.history.last() {
        let _ = writeln!(
            s,
            "final epoch {:<10} train MSE {:.4}, val MSE {:.4}",
            last.epoch, last.train_mse, last.val_mse
        );
    }
    if let Some(rows) = bundle.ablation {
        let _ = writeln!(s, "ablation:");
        for r in rows {
            let _ = writeln!(
                s,
                "  {:<28} params {:>9}  MACs {:>9}  val RMSE {:>10.4}  test RMSE {:>10.4}",
                r.spec.to_string(),
                r.params,
                r.macs,
                r.val_rmse,
                r.test_rmse
            );
        }
        if let Some(i) = select_optimal(rows) {
            let _ = writeln!(
                s,
                "selected {} (fewest parameters within {:.1}% of the best validation RMSE)",
                rows[i].spec,
                SELECTION_TOLERANCE * 100.0
            );
        }
    }
    s
}

/// Writes `per_route_rmse.csv`, `history.csv`, `deviation_histogram.csv`,
/// `ablation.csv` (when present) and `summary.txt` into `dir`.
pub fn write_report(dir: &Path, bundle: &ReportBundle<'_>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(&dir.join("per_route_rmse.csv"))?;
    w.write_record(["route_id", "n", "rmse_s"])?;
    for (route, e) in &bundle.eval.per_route {
        w.write_record([route.clone(), e.n.to_string(), format!("{:.4}", e.rmse)])?;
    }
    w.flush()?;

    write_history(&dir.join("history.csv"), bundle.history)?;

    let mut w = csv_writer(&dir.join("deviation_histogram.csv"))?;
    w.write_record(["bin_lo_s", "bin_hi_s", "count"])?;
    for &(lo, count) in &bundle.eval.target_histogram {
        w.write_record([
            format!("{lo}"),
            format!("{}", lo + HISTOGRAM_BIN_S),
            count.to_string(),
        ])?;
    }
    w.flush()?;

    if let Some(rows) = bundle.ablation {
        write_ablation(&dir.join("ablation.csv"), rows)?;
    }

    let path = dir.join("summary.txt");
    let mut f = create(&path)?;
    f.write_all(summary(bundle).as_bytes())
        .map_err(|e| Error::io(&path, e))?;
    f.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}
