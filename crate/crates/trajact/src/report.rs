//! Report files: kinematics CSV, distribution JSON, metrics NDJSON and the
//! stdout table.

use std::fmt::Write as _;
use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;
use trajact_core::stats::ActionKinematics;
use trajact_core::train::{FoldMetrics, MeanStd, MetricsReport};
use trajact_core::vocab::ActionClass;

pub const STATS_HEADER: [&str; 8] =
    ["action", "n", "speed_mean", "speed_std", "accel_mean", "accel_std", "dist_mean", "dist_std"];

/// One row per action that occurs, then a `global` row; nothing but the
/// header when there are no tracklets.
pub fn write_stats_csv<W: Write>(out: W, per_action: &[ActionKinematics], global: &ActionKinematics) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATS_HEADER)?;
    for k in per_action.iter().chain(std::iter::once(global)).filter(|k| k.n > 0) {
        let name = k.action.map_or("global", ActionClass::name);
        w.write_record([
            name.to_string(),
            k.n.to_string(),
            k.speed_mean.to_string(),
            k.speed_std.to_string(),
            k.accel_mean.to_string(),
            k.accel_std.to_string(),
            k.dist_mean.to_string(),
            k.dist_std.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `{"total": N, "counts": [{"action": .., "count": ..}, ..]}`, sorted by
/// descending count.
pub fn distribution_json(sorted: &[(ActionClass, usize)]) -> serde_json::Value {
    let total: usize = sorted.iter().map(|x| x.1).sum();
    json!({
        "total": total,
        "counts": sorted.iter().map(|(a, n)| json!({"action": a.name(), "count": n})).collect::<Vec<_>>(),
    })
}

pub fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Serialize)]
struct Aggregate {
    record: &'static str,
    folds: usize,
    ade: Option<MeanStd>,
    fde: Option<MeanStd>,
    acc: Option<MeanStd>,
    f1: Option<MeanStd>,
}

#[derive(Serialize)]
struct Fold<'a> {
    record: &'static str,
    #[serde(flatten)]
    metrics: &'a FoldMetrics,
}

/// Header line (the only line with a timestamp), one line per fold and an
/// aggregate line.
pub fn write_metrics<W: Write>(mut out: W, context: serde_json::Value, report: &MetricsReport) -> std::io::Result<()> {
    let mut header = json!({"record": "header", "timestamp_unix": unix_time()});
    if let (Some(h), serde_json::Value::Object(extra)) = (header.as_object_mut(), context) {
        h.extend(extra);
    }
    writeln!(out, "{header}")?;
    for f in &report.per_fold {
        writeln!(out, "{}", serde_json::to_string(&Fold { record: "fold", metrics: f })?)?;
    }
    let a = &report.aggregate;
    let agg = Aggregate {
        record: "aggregate",
        folds: report.per_fold.len(),
        ade: a.ade,
        fde: a.fde,
        acc: a.acc,
        f1: a.f1,
    };
    writeln!(out, "{}", serde_json::to_string(&agg)?)?;
    out.flush()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn ms(v: Option<MeanStd>) -> String {
    v.map_or_else(|| "-".into(), |m| format!("{:.4}±{:.4}", m.mean, m.std))
}

pub fn metrics_table(report: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>6} {:>7} {:>10} {:>10} {:>8} {:>8}", "fold", "n_val", "ADE", "FDE", "ACC", "F1");
    for f in &report.per_fold {
        let e = &f.eval;
        let _ = writeln!(
            s,
            "{:>6} {:>7} {:>10} {:>10} {:>8} {:>8}",
            f.fold,
            e.n,
            cell(e.ade),
            cell(e.fde),
            cell(e.acc),
            cell(e.f1)
        );
    }
    let a = &report.aggregate;
    let _ = writeln!(s, "mean±std  ADE {}  FDE {}  ACC {}  F1 {}", ms(a.ade), ms(a.fde), ms(a.acc), ms(a.f1));
    s
}

pub fn stats_table(per_action: &[ActionKinematics], global: &ActionKinematics) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<18} {:>7} {:>14} {:>14} {:>14}", "action", "n", "speed m/s", "accel m/s²", "dist m");
    for k in per_action.iter().chain(std::iter::once(global)).filter(|k| k.n > 0) {
        let _ = writeln!(
            s,
            "{:<18} {:>7} {:>6.3}±{:<7.3} {:>6.3}±{:<7.3} {:>6.3}±{:<7.3}",
            k.action.map_or("global", ActionClass::name),
            k.n,
            k.speed_mean,
            k.speed_std,
            k.accel_mean,
            k.accel_std,
            k.dist_mean,
            k.dist_std
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use trajact_core::train::EvalMetrics;

    #[test]
    fn metrics_lines() {
        let fold = |i| FoldMetrics {
            fold: i,
            n_train: 8,
            epochs: 3,
            steps: 6,
            eval: EvalMetrics { n: 2, loss: 0.5, ade: Some(0.25), fde: Some(0.5), acc: None, f1: None },
        };
        let report = MetricsReport::from_folds(vec![fold(0), fold(1)]);
        let mut buf = Vec::new();
        write_metrics(&mut buf, json!({"command": "train", "seed": 7}), &report).unwrap();
        let lines: Vec<serde_json::Value> =
            String::from_utf8(buf).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0]["record"], "header");
        assert_eq!(lines[0]["seed"], 7);
        assert!(lines[0]["timestamp_unix"].is_u64());
        assert_eq!(lines[1]["record"], "fold");
        assert_eq!(lines[2]["ade"], 0.25);
        assert_eq!(lines[3]["folds"], 2);
        assert_eq!(lines[3]["ade"]["std"], 0.0);
        assert!(lines[3]["acc"].is_null());
        assert!(metrics_table(&report).contains("0.2500"));
    }

    #[test]
    fn empty_stats_is_header_only() {
        let empty = trajact_core::stats::global_kinematics(&[]);
        let mut buf = Vec::new();
        write_stats_csv(&mut buf, &trajact_core::stats::per_action_kinematics(&[]), &empty).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", STATS_HEADER.join(",")));
    }
}
