use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::{keyed_rng, CampaignSpec, DriftConfig};
use crate::engine::{ImpressionRequest, ImpressionStream};
use crate::{CampaignId, Error, Result};

const STREAM_KEY: u64 = 0x57;
/// Generated qualities are rounded to this many decimals, the precision of
/// the CSV format.
const QUALITY_DECIMALS: f64 = 1e6;

pub const CSV_HEADER: [&str; 4] = ["request_id", "period", "campaign_id", "ctr"];

fn quantize(v: f64) -> f64 {
    ((v * QUALITY_DECIMALS).round() / QUALITY_DECIMALS)
        .clamp(1.0 / QUALITY_DECIMALS, 1.0 - 1.0 / QUALITY_DECIMALS)
}

/// Draws `num_periods * requests_per_period` requests. Each campaign recalls
/// a request independently with its `recall_prob` and a recalled pair gets a
/// quality from the campaign's Beta law, switched to the drifted law from
/// `drift.period` on. Request ids are `period * requests_per_period + index`;
/// requests that recall nothing are left out.
pub fn generate_stream(
    specs: &[CampaignSpec],
    num_periods: usize,
    requests_per_period: usize,
    drift: Option<&DriftConfig>,
    seed: u64,
    round: u64,
) -> ImpressionStream {
    let mut rng = keyed_rng(seed, STREAM_KEY, round, 0);
    let laws = |drifted: bool| -> Vec<Beta<f64>> {
        specs
            .iter()
            .map(|s| {
                let q = match drift {
                    Some(d) if drifted => s.quality_model.scaled(d.m_scale, d.n_scale),
                    _ => s.quality_model,
                };
                Beta::new(q.m(), q.n()).expect("validated beta shapes")
            })
            .collect()
    };
    let before = laws(false);
    let after = laws(true);
    let mut periods = Vec::with_capacity(num_periods);
    for t in 0..num_periods {
        let law = match drift {
            Some(d) if t >= d.period => &after,
            _ => &before,
        };
        let mut requests = Vec::with_capacity(requests_per_period);
        for i in 0..requests_per_period {
            let mut qualities = Vec::new();
            for (j, s) in specs.iter().enumerate() {
                if rng.random::<f64>() < s.recall_prob {
                    qualities.push((CampaignId(j as u32), quantize(law[j].sample(&mut rng))));
                }
            }
            if !qualities.is_empty() {
                requests.push(ImpressionRequest {
                    request_id: (t * requests_per_period + i) as u64,
                    period: t,
                    qualities,
                });
            }
        }
        periods.push(requests);
    }
    ImpressionStream { periods }
}

/// Writes one row per recalled (request, campaign) pair.
pub fn write_stream_csv<W: Write>(stream: &ImpressionStream, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in stream.requests() {
        for &(id, v) in &r.qualities {
            w.write_record([
                r.request_id.to_string(),
                r.period.to_string(),
                id.to_string(),
                v.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_stream_csv(stream: &ImpressionStream, path: &Path) -> Result<()> {
    let file =
        std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_stream_csv(stream, std::io::BufWriter::new(file))
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        reason: e.to_string(),
    }
}

/// Reads a stream in the `request_id,period,campaign_id,ctr` layout.
///
/// Rows of one request must be adjacent and periods must not decrease. The
/// number of periods is one past the largest period seen; periods without
/// rows are kept empty. Logs in other layouts need converting to this one
/// first, e.g. by projecting their request, hour and predicted-CTR columns.
pub fn read_stream_csv<R: Read>(input: R) -> Result<ImpressionStream> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().map(str::trim).ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            reason: format!(
                "expected header `{}`, got `{}`",
                CSV_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut periods: Vec<Vec<ImpressionRequest>> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut current: Option<ImpressionRequest> = None;
    let mut record = csv::StringRecord::new();
    let finish = |req: ImpressionRequest, periods: &mut Vec<Vec<ImpressionRequest>>| {
        if periods.len() <= req.period {
            periods.resize_with(req.period + 1, Vec::new);
        }
        periods[req.period].push(req);
    };
    while rdr.read_record(&mut record).map_err(csv_err)? {
        let line = record.position().map_or(0, |p| p.line());
        let bad = |reason: String| Error::Parse { line, reason };
        if record.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", record.len())));
        }
        let field = |i: usize| record[i].trim();
        let request_id: u64 = field(0)
            .parse()
            .map_err(|_| bad(format!("request_id `{}` is not an integer", field(0))))?;
        let period: usize = field(1)
            .parse()
            .map_err(|_| bad(format!("period `{}` is not an integer", field(1))))?;
        let campaign: u32 = field(2)
            .parse()
            .map_err(|_| bad(format!("campaign_id `{}` is not an integer", field(2))))?;
        let ctr: f64 = field(3)
            .parse()
            .map_err(|_| bad(format!("ctr `{}` is not a number", field(3))))?;
        if !(ctr > 0.0 && ctr < 1.0) {
            return Err(bad(format!("ctr {ctr} is outside (0, 1)")));
        }
        match current.as_mut() {
            Some(req) if req.request_id == request_id => {
                if req.period != period {
                    return Err(bad(format!(
                        "request {request_id} appears in periods {} and {period}",
                        req.period
                    )));
                }
                if req.qualities.iter().any(|(id, _)| id.0 == campaign) {
                    return Err(bad(format!(
                        "campaign {campaign} listed twice for request {request_id}"
                    )));
                }
                req.qualities.push((CampaignId(campaign), ctr));
            }
            _ => {
                if let Some(prev) = current.take() {
                    if period < prev.period {
                        return Err(bad(format!(
                            "period {period} follows period {}; rows must be grouped by period",
                            prev.period
                        )));
                    }
                    finish(prev, &mut periods);
                }
                if !seen.insert(request_id) {
                    return Err(bad(format!(
                        "rows of request {request_id} are not contiguous"
                    )));
                }
                current = Some(ImpressionRequest {
                    request_id,
                    period,
                    qualities: vec![(CampaignId(campaign), ctr)],
                });
            }
        }
    }
    if let Some(prev) = current.take() {
        finish(prev, &mut periods);
    }
    for r in periods.iter_mut().flatten() {
        r.qualities.sort_by_key(|(id, _)| *id);
    }
    Ok(ImpressionStream { periods })
}

pub fn load_stream_csv(path: &Path) -> Result<ImpressionStream> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_stream_csv(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::BetaQualityModel;

    fn spec(j: u32, recall: f64, m: f64, n: f64) -> CampaignSpec {
        CampaignSpec {
            id: CampaignId(j),
            budget: 10,
            recall_prob: recall,
            quality_model: BetaQualityModel::new(m, n).unwrap(),
        }
    }

    #[test]
    fn full_recall_single_campaign() {
        let s = generate_stream(&[spec(0, 1.0, 2.0, 5.0)], 3, 50, None, 1, 0);
        assert_eq!(s.num_periods(), 3);
        assert!(s.periods.iter().all(|p| p.len() == 50));
        assert!(s.requests().all(|r| r.qualities.len() == 1));
        assert_eq!(s.periods[2][0].request_id, 100);
    }

    #[test]
    fn recall_fraction_and_mean() {
        // 10^5 requests for the recall check, ~10^5 recalls for the mean.
        let s = generate_stream(
            &[spec(0, 0.3, 3.0, 2.0), spec(1, 1.0, 3.0, 2.0)],
            10,
            10_000,
            None,
            2,
            0,
        );
        let n = 100_000.0;
        let recalled0 = s
            .requests()
            .filter(|r| r.qualities[0].0 == CampaignId(0))
            .count();
        assert!((recalled0 as f64 / n - 0.3).abs() < 0.01);
        let v1: Vec<f64> = s
            .requests()
            .flat_map(|r| {
                r.qualities
                    .iter()
                    .filter(|q| q.0 == CampaignId(1))
                    .map(|q| q.1)
            })
            .collect();
        assert_eq!(v1.len(), 100_000);
        let mean = v1.iter().sum::<f64>() / v1.len() as f64;
        assert!((mean - 0.6).abs() < 0.01);
    }

    #[test]
    fn deterministic_and_round_keyed() {
        let specs = [spec(0, 0.5, 2.0, 30.0), spec(1, 0.2, 3.0, 40.0)];
        let a = generate_stream(&specs, 4, 100, None, 7, 0);
        assert_eq!(a, generate_stream(&specs, 4, 100, None, 7, 0));
        assert_ne!(a, generate_stream(&specs, 4, 100, None, 7, 1));
        assert_ne!(a, generate_stream(&specs, 4, 100, None, 8, 0));
    }

    #[test]
    fn drift_switches_law() {
        let specs = [spec(0, 1.0, 2.0, 30.0)];
        let drift = DriftConfig {
            period: 2,
            m_scale: 4.0,
            n_scale: 1.0,
        };
        let s = generate_stream(&specs, 4, 5000, Some(&drift), 3, 0);
        let mean = |t: usize| s.periods[t].iter().map(|r| r.qualities[0].1).sum::<f64>() / 5000.0;
        assert!((mean(1) - 2.0 / 32.0).abs() < 0.005);
        assert!((mean(3) - 8.0 / 38.0).abs() < 0.005);
    }

    #[test]
    fn csv_round_trip() {
        let specs = [
            spec(0, 0.5, 2.0, 30.0),
            spec(1, 0.7, 3.0, 4.0),
            spec(2, 0.1, 2.0, 2.0),
        ];
        let s = generate_stream(&specs, 5, 200, None, 11, 0);
        let mut buf = Vec::new();
        write_stream_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("request_id,period,campaign_id,ctr\n"));
        assert!(!text.contains('\r'));
        assert_eq!(read_stream_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn csv_examples() {
        let empty = read_stream_csv("request_id,period,campaign_id,ctr\n".as_bytes()).unwrap();
        assert_eq!(empty.num_periods(), 0);
        let one = read_stream_csv(
            "request_id,period,campaign_id,ctr\n5,0,1,0.2\n5,0,0,0.125\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(one.num_requests(), 1);
        assert_eq!(
            one.periods[0][0].qualities,
            vec![(CampaignId(0), 0.125), (CampaignId(1), 0.2)]
        );
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let cases = [
            (
                "request_id,period,campaign_id,ctr\n1,0,0,0.5\n2,0,0,abc\n",
                3,
            ),
            ("request_id,period,campaign_id,ctr\n1,0,0,1.5\n", 2),
            (
                "request_id,period,campaign_id,ctr\n1,1,0,0.5\n2,0,0,0.5\n",
                3,
            ),
            (
                "request_id,period,campaign_id,ctr\n1,0,0,0.5\n2,0,0,0.5\n1,0,1,0.5\n",
                4,
            ),
            (
                "request_id,period,campaign_id,ctr\n1,0,0,0.5\n1,0,0,0.4\n",
                3,
            ),
            ("request_id,period,campaign_id,ctr\n1,0,0\n", 2),
        ];
        for (text, want) in cases {
            match read_stream_csv(text.as_bytes()) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
        assert!(matches!(
            read_stream_csv("id,period,campaign_id,ctr\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
