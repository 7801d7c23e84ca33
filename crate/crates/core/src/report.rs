//! File formats and text rendering for experiment results.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! results always produce equal bytes. Undefined values (a CTR with no wins,
//! a regret that was not computed) are written as `NaN` and an empty field.

use std::io::{Read, Write};

use crate::engine::Algorithm;
use crate::metrics::{aggregate_rounds, AggregateRow, MetricsReport, Stat};
use crate::sim::{AblationResult, SeriesPoint};
use crate::{Error, Result};

pub const ROUNDS_HEADER: [&str; 6] = [
    "algorithm",
    "round",
    "delivery_rate",
    "unsmoothness",
    "avg_ctr",
    "regret",
];
pub const SERIES_HEADER: [&str; 4] = ["campaign", "period", "series", "value"];
const STAT_COLUMNS: [&str; 8] = [
    "unsmoothness_mean",
    "unsmoothness_std",
    "delivery_rate_mean",
    "delivery_rate_std",
    "avg_ctr_mean",
    "avg_ctr_std",
    "regret_mean",
    "regret_std",
];

fn csv_err(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Parse {
            line: p.line(),
            reason: e.to_string(),
        },
        None => Error::Io(e.to_string()),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn stat_fields(row: &AggregateRow) -> Vec<String> {
    let r = row.regret;
    vec![
        row.unsmoothness.mean.to_string(),
        row.unsmoothness.std.to_string(),
        row.delivery_rate.mean.to_string(),
        row.delivery_rate.std.to_string(),
        row.avg_ctr.mean.to_string(),
        row.avg_ctr.std.to_string(),
        opt(r.map(|s| s.mean)),
        opt(r.map(|s| s.std)),
    ]
}

pub fn write_rounds_csv<W: Write>(w: W, reports: &[MetricsReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ROUNDS_HEADER).map_err(csv_err)?;
    for r in reports {
        out.write_record([
            r.algorithm.label().to_string(),
            r.round_index.to_string(),
            r.delivery_rate.to_string(),
            r.unsmoothness.to_string(),
            r.avg_ctr.to_string(),
            opt(r.regret),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a rounds file. Errors carry the 1-based line number.
pub fn read_rounds_csv<R: Read>(r: R) -> Result<Vec<MetricsReport>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut records = rdr.records();
    match records.next() {
        Some(Ok(h)) if h.iter().eq(ROUNDS_HEADER) => {}
        Some(Ok(h)) => {
            return Err(Error::Parse {
                line: 1,
                reason: format!(
                    "expected header `{}`, found `{}`",
                    ROUNDS_HEADER.join(","),
                    h.iter().collect::<Vec<_>>().join(",")
                ),
            })
        }
        Some(Err(e)) => return Err(csv_err(e)),
        None => {
            return Err(Error::Parse {
                line: 1,
                reason: "empty file".into(),
            })
        }
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |field: &str, value: &str| Error::Parse {
            line,
            reason: format!("invalid {field} `{value}`"),
        };
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(ROUNDS_HEADER[i], &rec[i]))
        };
        let algorithm: Algorithm = rec[0].parse().map_err(|_| bad("algorithm", &rec[0]))?;
        let round_index = rec[1].trim().parse().map_err(|_| bad("round", &rec[1]))?;
        let regret = if rec[5].trim().is_empty() {
            None
        } else {
            Some(num(5)?)
        };
        out.push(MetricsReport {
            algorithm,
            round_index,
            delivery_rate: num(2)?,
            unsmoothness: num(3)?,
            avg_ctr: num(4)?,
            regret,
            per_period_spend: Vec::new(),
        });
    }
    Ok(out)
}

pub fn write_aggregate_csv<W: Write>(w: W, rows: &[AggregateRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["algorithm", "rounds"];
    header.extend(STAT_COLUMNS);
    out.write_record(&header).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![row.algorithm.label().to_string(), row.rounds.to_string()];
        rec.extend(stat_fields(row));
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_series_csv<W: Write>(w: W, points: &[SeriesPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SERIES_HEADER).map_err(csv_err)?;
    for p in points {
        out.write_record([
            p.campaign.to_string(),
            p.period.to_string(),
            p.series.clone(),
            p.value.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_series_csv<R: Read>(r: R) -> Result<Vec<SeriesPoint>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        if i == 0 {
            if !rec.iter().eq(SERIES_HEADER) {
                return Err(Error::Parse {
                    line,
                    reason: format!("expected header `{}`", SERIES_HEADER.join(",")),
                });
            }
            continue;
        }
        let bad = |what: &str| Error::Parse {
            line,
            reason: format!("invalid {what}"),
        };
        out.push(SeriesPoint {
            campaign: rec[0].parse().map_err(|_| bad("campaign"))?,
            period: rec[1].parse().map_err(|_| bad("period"))?,
            series: rec[2].to_string(),
            value: rec[3].parse().map_err(|_| bad("value"))?,
        });
    }
    Ok(out)
}

/// One row per ablation cell, keyed by the varied parameters.
pub fn write_ablation_csv<W: Write>(w: W, results: &[AblationResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let keys: Vec<&str> = results
        .first()
        .map(|r| r.cell.key().into_iter().map(|(k, _)| k).collect())
        .unwrap_or_default();
    let mut header = keys.clone();
    header.push("rounds");
    header.extend(STAT_COLUMNS);
    out.write_record(&header).map_err(csv_err)?;
    for r in results {
        let mut rec: Vec<String> = r.cell.key().into_iter().map(|(_, v)| v).collect();
        rec.push(r.aggregate.rounds.to_string());
        rec.extend(stat_fields(&r.aggregate));
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<W: Write, T: serde::Serialize + ?Sized>(w: W, value: &T) -> Result<()> {
    let mut w = w;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Parses reports written by [`write_json`].
pub fn read_rounds_json<R: Read>(r: R) -> Result<Vec<MetricsReport>> {
    serde_json::from_reader(r).map_err(|e| Error::Parse {
        line: e.line() as u64,
        reason: e.to_string(),
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Better {
    Lower,
    Higher,
}

fn best_index(stats: &[Option<Stat>], better: Better) -> Vec<bool> {
    let means: Vec<f64> = stats
        .iter()
        .map(|s| s.map_or(f64::NAN, |s| s.mean))
        .collect();
    let finite = means.iter().filter(|m| m.is_finite());
    let best = match better {
        Better::Lower => finite.fold(f64::INFINITY, |a, &b| a.min(b)),
        Better::Higher => finite.fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
    };
    let marks = stats.len() > 1;
    means.iter().map(|&m| marks && m == best).collect()
}

/// Header, direction, display scale and accessor of one metric column.
type Column = (&'static str, Better, f64, fn(&AggregateRow) -> Option<Stat>);

fn render(labels: Vec<String>, label_header: &str, rows: &[&AggregateRow]) -> String {
    let columns: [Column; 4] = [
        ("UI", Better::Lower, 1.0, |r| Some(r.unsmoothness)),
        ("DR(%)", Better::Higher, 100.0, |r| Some(r.delivery_rate)),
        ("CTR(%)", Better::Higher, 100.0, |r| Some(r.avg_ctr)),
        ("Regret", Better::Lower, 1.0, |r| r.regret),
    ];
    let show_regret = rows.iter().any(|r| r.regret.is_some());
    let columns = &columns[..if show_regret { 4 } else { 3 }];

    let mut table: Vec<Vec<String>> = vec![std::iter::once(label_header.to_string())
        .chain(columns.iter().map(|c| c.0.to_string()))
        .collect()];
    let cells: Vec<Vec<String>> = columns
        .iter()
        .map(|&(_, better, scale, get)| {
            let stats: Vec<Option<Stat>> = rows.iter().map(|r| get(r)).collect();
            let best = best_index(&stats, better);
            stats
                .iter()
                .zip(best)
                .map(|(s, b)| match s {
                    Some(s) if s.mean.is_finite() => format!(
                        "{:.2} ± {:.2}{}",
                        s.mean * scale,
                        s.std * scale,
                        match (b, rows.len() > 1) {
                            (true, _) => " *",
                            (false, true) => "  ",
                            (false, false) => "",
                        }
                    ),
                    _ => "-".to_string(),
                })
                .collect()
        })
        .collect();
    for (i, label) in labels.into_iter().enumerate() {
        let mut line = vec![label];
        line.extend(cells.iter().map(|c| c[i].clone()));
        table.push(line);
    }

    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| {
            table
                .iter()
                .map(|r| r[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, &w))| {
                let pad = w - s.chars().count();
                if c == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Aligned mean ± std table, one row per algorithm. `*` marks the best mean
/// of each column when there is more than one row.
pub fn render_table(rows: &[AggregateRow]) -> String {
    let labels = rows
        .iter()
        .map(|r| r.algorithm.label().to_string())
        .collect();
    render(labels, "algorithm", &rows.iter().collect::<Vec<_>>())
}

pub fn render_ablation_table(results: &[AblationResult]) -> String {
    let labels = results
        .iter()
        .map(|r| {
            r.cell
                .key()
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let rows: Vec<&AggregateRow> = results.iter().map(|r| &r.aggregate).collect();
    render(labels, "cell", &rows)
}

/// Re-aggregates loaded rounds, for rendering from files.
pub fn summarize(reports: &[MetricsReport]) -> Vec<AggregateRow> {
    aggregate_rounds(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(
        alg: Algorithm,
        round: usize,
        ui: f64,
        ctr: f64,
        regret: Option<f64>,
    ) -> MetricsReport {
        MetricsReport {
            algorithm: alg,
            round_index: round,
            delivery_rate: 0.999,
            unsmoothness: ui,
            avg_ctr: ctr,
            regret,
            per_period_spend: Vec::new(),
        }
    }

    #[test]
    fn rounds_round_trip() {
        let reports = vec![
            report(Algorithm::Dmd, 0, 15.25, 0.0539, None),
            report(Algorithm::Rcpacing, 0, 6.37, f64::NAN, Some(1.5)),
        ];
        let mut buf = Vec::new();
        write_rounds_csv(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("algorithm,round,delivery_rate,unsmoothness,avg_ctr,regret\n"));
        assert!(text.contains("dmd,0,0.999,15.25,0.0539,\n"));
        let back = read_rounds_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], reports[0]);
        assert!(back[1].avg_ctr.is_nan());
        assert_eq!(back[1].regret, Some(1.5));
    }

    #[test]
    fn malformed_rounds_name_the_line() {
        let text = "algorithm,round,delivery_rate,unsmoothness,avg_ctr,regret\n\
                    dmd,0,1,2,0.1,\n\
                    dmd,1,1,oops,0.1,\n";
        match read_rounds_csv(text.as_bytes()) {
            Err(Error::Parse { line, reason }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("unsmoothness"));
            }
            other => panic!("{other:?}"),
        }
        let short = "algorithm,round,delivery_rate,unsmoothness,avg_ctr,regret\ndmd,0,1\n";
        assert!(matches!(
            read_rounds_csv(short.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read_rounds_csv("a,b\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            read_rounds_csv("".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn json_round_trip_keeps_nan() {
        let reports = vec![report(Algorithm::Smart, 3, 9.0, f64::NAN, None)];
        let mut buf = Vec::new();
        write_json(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"avg_ctr\": null"));
        assert!(text.contains("\"round_index\": 3"));
        let back = read_rounds_json(buf.as_slice()).unwrap();
        assert!(back[0].avg_ctr.is_nan());
        assert_eq!(back[0].unsmoothness, 9.0);
    }

    #[test]
    fn series_round_trip() {
        let pts = vec![SeriesPoint {
            campaign: 2,
            period: 7,
            series: "rcpacing.alpha".into(),
            value: 0.125,
        }];
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &pts).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "campaign,period,series,value\n2,7,rcpacing.alpha,0.125\n"
        );
        assert_eq!(read_series_csv(buf.as_slice()).unwrap(), pts);
    }

    #[test]
    fn single_row_table_has_no_marks() {
        let rows = summarize(&[report(Algorithm::Dmd, 0, 10.0, 0.05, None)]);
        let t = render_table(&rows);
        assert_eq!(t.lines().count(), 2);
        assert!(!t.contains('*'));
        assert!(t.contains("10.00 ± 0.00"));
    }

    #[test]
    fn best_values_are_marked() {
        let rows = summarize(&[
            report(Algorithm::Dmd, 0, 15.0, 0.05, Some(3.0)),
            report(Algorithm::Rcpacing, 0, 6.0, 0.07, Some(4.0)),
        ]);
        let t = render_table(&rows);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("algorithm"));
        // dmd: best regret only; both tie on delivery rate.
        assert_eq!(lines[1].matches('*').count(), 2, "{t}");
        assert!(lines[1].contains("3.00 ± 0.00 *"));
        // rcpacing: best UI, DR tie, CTR.
        assert_eq!(lines[2].matches('*').count(), 3, "{t}");
        assert!(lines[2].contains("6.00 ± 0.00 *"));
        assert!(lines[2].contains("7.00 ± 0.00 *"));
        // Columns line up whether or not a cell is marked.
        let pm = |l: &str| -> Vec<usize> {
            l.char_indices().filter(|&(_, c)| c == '±').map(|(i, _)| i).collect()
        };
        assert!(lines[1..].iter().all(|l| pm(l) == pm(lines[1])), "{t}");
    }
}
