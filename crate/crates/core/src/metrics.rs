//! Time-to-correct-answer metrics and report emission.
//!
//! A request's TTCA is the sum of per-attempt latencies up to and including
//! the first correct attempt. Requests with no correct answer within the
//! retry cap are censored: their TTCA is the total accumulated latency and
//! they are included in means as-is rather than dropped, so policies that
//! fail more do not look faster.

use std::fs;
use std::path::Path;

use crate::simulator::{AttemptRecord, RequestOutcome};
use crate::types::LanguageClass;
use crate::workload::WorkloadQuery;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("empty attempt list")]
    EmptyAttempts,
    #[error("attempt indices must run 1..=n, found {found} at position {position}")]
    NonconsecutiveIndices { position: usize, found: u32 },
    #[error("empty outcome list")]
    EmptyOutcomes,
    #[error("outcome lists cover different workloads ({left} vs {right} requests)")]
    MismatchedWorkloads { left: usize, right: usize },
    #[error("baseline mean TTCA is zero")]
    ZeroBaselineMean,
    #[error("report file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("report file {source_name} line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("outcome for `{request_id}` references no known query")]
    UnknownRequest { request_id: String },
}

/// Result of TTCA computation over one request's attempts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TtcaResult {
    pub ttca: f64,
    /// 1-based index of the first correct attempt, if any.
    pub first_correct: Option<u32>,
    pub censored: bool,
}

/// Sums attempt latencies up to the first correct attempt; with no correct
/// attempt the request is censored at the total. Attempts recorded after
/// the first correct one are ignored.
pub fn compute_ttca(
    attempts: &[AttemptRecord],
    retry_cap: u32,
) -> Result<TtcaResult, MetricsError> {
    if attempts.is_empty() {
        return Err(MetricsError::EmptyAttempts);
    }
    debug_assert!(attempts.len() <= retry_cap as usize);
    for (i, attempt) in attempts.iter().enumerate() {
        if attempt.attempt_index != (i + 1) as u32 {
            return Err(MetricsError::NonconsecutiveIndices {
                position: i,
                found: attempt.attempt_index,
            });
        }
    }
    let mut total = 0.0;
    for attempt in attempts {
        total += attempt.latency();
        if attempt.correct {
            return Ok(TtcaResult {
                ttca: total,
                first_correct: Some(attempt.attempt_index),
                censored: false,
            });
        }
    }
    Ok(TtcaResult {
        ttca: total,
        first_correct: None,
        censored: true,
    })
}

/// Entry k (1-based) is the fraction of requests answered correctly within
/// k attempts. Early-terminated requests keep their terminal status for all
/// later k, so the curve is nondecreasing by construction.
pub fn success_curve(
    outcomes: &[RequestOutcome],
    retry_cap: u32,
) -> Result<Vec<f64>, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyOutcomes);
    }
    let n = outcomes.len() as f64;
    let mut curve = Vec::with_capacity(retry_cap as usize);
    for k in 1..=retry_cap {
        let solved = outcomes
            .iter()
            .filter(|o| o.first_correct.is_some_and(|fc| fc <= k))
            .count();
        curve.push(solved as f64 / n);
    }
    Ok(curve)
}

/// Mean TTCA over a set of outcomes, censored values included.
pub fn mean_ttca(outcomes: &[RequestOutcome]) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyOutcomes);
    }
    Ok(outcomes.iter().map(|o| o.ttca).sum::<f64>() / outcomes.len() as f64)
}

/// Relative TTCA improvement of `laar` over `baseline`:
/// (mean_baseline - mean_laar) / mean_baseline.
pub fn improvement_ratio(
    laar: &[RequestOutcome],
    baseline: &[RequestOutcome],
) -> Result<f64, MetricsError> {
    if laar.len() != baseline.len() {
        return Err(MetricsError::MismatchedWorkloads {
            left: laar.len(),
            right: baseline.len(),
        });
    }
    let mean_laar = mean_ttca(laar)?;
    let mean_baseline = mean_ttca(baseline)?;
    if mean_baseline == 0.0 {
        return Err(MetricsError::ZeroBaselineMean);
    }
    Ok((mean_baseline - mean_laar) / mean_baseline)
}

/// Aggregated metrics for one (policy, language, length) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct TtcaSummary {
    pub policy: String,
    pub language: LanguageClass,
    pub target_tokens: u64,
    pub mean_ttca: f64,
    /// Cumulative success rate after 1..=retry_cap attempts.
    pub success_curve: Vec<f64>,
    pub censored_fraction: f64,
    pub n: usize,
}

/// Groups outcomes by (language, target length) and summarizes each cell.
/// Rows come back sorted by language then length.
pub fn summarize_cells(
    policy: &str,
    outcomes: &[RequestOutcome],
    queries: &[WorkloadQuery],
    retry_cap: u32,
) -> Result<Vec<TtcaSummary>, MetricsError> {
    use std::collections::BTreeMap;
    let by_id: BTreeMap<&str, &WorkloadQuery> =
        queries.iter().map(|q| (q.query_id.as_str(), q)).collect();
    let mut cells: BTreeMap<(LanguageClass, u64), Vec<&RequestOutcome>> = BTreeMap::new();
    for outcome in outcomes {
        let query =
            by_id
                .get(outcome.request_id.as_str())
                .ok_or_else(|| MetricsError::UnknownRequest {
                    request_id: outcome.request_id.clone(),
                })?;
        cells
            .entry((query.language, query.target_tokens))
            .or_default()
            .push(outcome);
    }
    let mut summaries = Vec::with_capacity(cells.len());
    for ((language, target_tokens), cell) in cells {
        let owned: Vec<RequestOutcome> = cell.iter().map(|o| (*o).clone()).collect();
        let censored = owned.iter().filter(|o| o.censored).count();
        summaries.push(TtcaSummary {
            policy: policy.to_string(),
            language,
            target_tokens,
            mean_ttca: mean_ttca(&owned)?,
            success_curve: success_curve(&owned, retry_cap)?,
            censored_fraction: censored as f64 / owned.len() as f64,
            n: owned.len(),
        });
    }
    Ok(summaries)
}

const REPORT_HEADER: &str = "# laar-report v1";
const REPORT_COLUMNS: &str =
    "policy\tlanguage\ttarget_tokens\tn\tmean_ttca\tcensored_fraction\tsuccess_curve";

/// Writes summaries as a tab-separated table with a versioned header. The
/// success curve is comma-joined in the final column. Floats use shortest
/// round-trip formatting, so `read_report(write_report(x)) == x`.
pub fn write_report(summaries: &[TtcaSummary], path: &Path) -> Result<(), MetricsError> {
    let mut out = String::new();
    out.push_str(REPORT_HEADER);
    out.push('\n');
    out.push_str(REPORT_COLUMNS);
    out.push('\n');
    for s in summaries {
        let curve: Vec<String> = s.success_curve.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            s.policy,
            s.language,
            s.target_tokens,
            s.n,
            s.mean_ttca,
            s.censored_fraction,
            curve.join(",")
        ));
    }
    fs::write(path, out).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses a report written by [`write_report`].
pub fn read_report(path: &Path) -> Result<Vec<TtcaSummary>, MetricsError> {
    let text = fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let source_name = path.display().to_string();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == REPORT_HEADER => {}
        other => {
            return Err(MetricsError::Parse {
                source_name,
                line: 1,
                message: format!(
                    "expected header `{REPORT_HEADER}`, found `{}`",
                    other.map(|(_, l)| l).unwrap_or("")
                ),
            });
        }
    }
    let mut summaries = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() || line == REPORT_COLUMNS {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(MetricsError::Parse {
                source_name,
                line: line_no,
                message: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let err = |message: String| MetricsError::Parse {
            source_name: source_name.clone(),
            line: line_no,
            message,
        };
        let curve = if fields[6].is_empty() {
            Vec::new()
        } else {
            fields[6]
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| err("bad success curve".into()))?
        };
        summaries.push(TtcaSummary {
            policy: fields[0].to_string(),
            language: fields[1].parse().map_err(err)?,
            target_tokens: fields[2]
                .parse()
                .map_err(|_| err(format!("`{}` is not a token count", fields[2])))?,
            n: fields[3]
                .parse()
                .map_err(|_| err(format!("`{}` is not a count", fields[3])))?,
            mean_ttca: fields[4]
                .parse()
                .map_err(|_| err(format!("`{}` is not a number", fields[4])))?,
            censored_fraction: fields[5]
                .parse()
                .map_err(|_| err(format!("`{}` is not a number", fields[5])))?,
            success_curve: curve,
        });
    }
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attempt(index: u32, latency: f64, correct: bool) -> AttemptRecord {
        AttemptRecord {
            attempt_index: index,
            model_id: format!("m{index}"),
            dispatch_time: 0.0,
            start_time: 0.0,
            end_time: latency,
            correct,
        }
    }

    /// Attempts with the given latencies; `correct_at` is 1-based.
    fn attempts(latencies: &[f64], correct_at: Option<usize>) -> Vec<AttemptRecord> {
        latencies
            .iter()
            .enumerate()
            .map(|(i, &l)| attempt((i + 1) as u32, l, Some(i + 1) == correct_at))
            .collect()
    }

    fn outcome(id: &str, first_correct: Option<u32>, ttca: f64) -> RequestOutcome {
        RequestOutcome {
            request_id: id.to_string(),
            attempts: Vec::new(),
            first_correct,
            ttca,
            censored: first_correct.is_none(),
        }
    }

    #[test]
    fn ttca_sums_latencies_up_to_first_correct() {
        let r = compute_ttca(&attempts(&[2.0, 3.0, 4.0], Some(3)), 10).unwrap();
        assert_eq!(r.ttca, 9.0);
        assert_eq!(r.first_correct, Some(3));
        assert!(!r.censored);
    }

    #[test]
    fn ttca_first_try_success() {
        let r = compute_ttca(&attempts(&[5.0], Some(1)), 10).unwrap();
        assert_eq!(r.ttca, 5.0);
        assert_eq!(r.first_correct, Some(1));
    }

    #[test]
    fn ttca_censors_at_total() {
        let r = compute_ttca(&attempts(&[2.0, 2.0, 2.0], None), 3).unwrap();
        assert_eq!(r.ttca, 6.0);
        assert_eq!(r.first_correct, None);
        assert!(r.censored);
    }

    #[test]
    fn ttca_ignores_attempts_after_first_correct() {
        let mut list = attempts(&[1.0, 2.0, 100.0], Some(2));
        list[2].correct = true;
        let r = compute_ttca(&list, 10).unwrap();
        assert_eq!(r.ttca, 3.0);
        assert_eq!(r.first_correct, Some(2));
    }

    #[test]
    fn ttca_rejects_empty_and_gapped_input() {
        assert!(matches!(
            compute_ttca(&[], 10).unwrap_err(),
            MetricsError::EmptyAttempts
        ));
        let mut list = attempts(&[1.0, 1.0], None);
        list[1].attempt_index = 3;
        assert!(matches!(
            compute_ttca(&list, 10).unwrap_err(),
            MetricsError::NonconsecutiveIndices { .. }
        ));
    }

    #[test]
    fn curve_counts_cumulative_successes() {
        let outcomes = vec![
            outcome("a", Some(1), 1.0),
            outcome("b", Some(2), 2.0),
            outcome("c", Some(2), 2.0),
            outcome("d", None, 3.0),
        ];
        assert_eq!(success_curve(&outcomes, 3).unwrap(), vec![0.25, 0.75, 0.75]);
    }

    #[test]
    fn curve_extremes() {
        let all = vec![outcome("a", Some(1), 1.0), outcome("b", Some(1), 1.0)];
        assert_eq!(success_curve(&all, 4).unwrap(), vec![1.0; 4]);
        let none = vec![outcome("a", None, 1.0), outcome("b", None, 1.0)];
        assert_eq!(success_curve(&none, 4).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn curve_is_nondecreasing_on_random_outcomes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_pcg::Pcg64::seed_from_u64(99);
        for _ in 0..200 {
            let outcomes: Vec<RequestOutcome> = (0..rng.random_range(1..40))
                .map(|i| {
                    let fc = if rng.random_bool(0.5) {
                        Some(rng.random_range(1..=10))
                    } else {
                        None
                    };
                    outcome(&format!("r{i}"), fc, 1.0)
                })
                .collect();
            let curve = success_curve(&outcomes, 10).unwrap();
            for pair in curve.windows(2) {
                assert!(pair[1] >= pair[0]);
            }
        }
    }

    #[test]
    fn improvement_ratio_examples() {
        let laar: Vec<_> = (0..10)
            .map(|i| outcome(&format!("r{i}"), Some(1), 6.9))
            .collect();
        let base: Vec<_> = (0..10)
            .map(|i| outcome(&format!("r{i}"), Some(1), 10.0))
            .collect();
        let ratio = improvement_ratio(&laar, &base).unwrap();
        assert!((ratio - 0.31).abs() < 1e-12);
        assert_eq!(improvement_ratio(&base, &base).unwrap(), 0.0);
        let laar2: Vec<_> = (0..10)
            .map(|i| outcome(&format!("r{i}"), Some(1), 5.1))
            .collect();
        assert!((improvement_ratio(&laar2, &base).unwrap() - 0.49).abs() < 1e-12);
    }

    #[test]
    fn improvement_ratio_guards() {
        let zero: Vec<_> = (0..3)
            .map(|i| outcome(&format!("r{i}"), Some(1), 0.0))
            .collect();
        let some: Vec<_> = (0..3)
            .map(|i| outcome(&format!("r{i}"), Some(1), 1.0))
            .collect();
        assert!(matches!(
            improvement_ratio(&some, &zero).unwrap_err(),
            MetricsError::ZeroBaselineMean
        ));
        assert!(matches!(
            improvement_ratio(&some[..2], &zero).unwrap_err(),
            MetricsError::MismatchedWorkloads { .. }
        ));
        assert!(improvement_ratio(&[], &[]).is_err());
    }

    #[test]
    fn mean_is_permutation_invariant() {
        let mut outcomes: Vec<_> = (0..20)
            .map(|i| outcome(&format!("r{i}"), Some(1), i as f64 * 1.25))
            .collect();
        let forward = mean_ttca(&outcomes).unwrap();
        outcomes.reverse();
        assert_eq!(mean_ttca(&outcomes).unwrap(), forward);
    }

    #[test]
    fn report_round_trips() {
        let dir = std::env::temp_dir().join("laar-report-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("report.tsv");
        let summaries = vec![
            TtcaSummary {
                policy: "laar".into(),
                language: LanguageClass::English,
                target_tokens: 4096,
                mean_ttca: 3.0625,
                success_curve: vec![0.5, 0.75, 1.0],
                censored_fraction: 0.0,
                n: 4,
            },
            TtcaSummary {
                policy: "load-aware".into(),
                language: LanguageClass::Chinese,
                target_tokens: 65536,
                mean_ttca: 1.0 / 3.0,
                success_curve: vec![0.1, 0.1, 0.2],
                censored_fraction: 0.8,
                n: 10,
            },
        ];
        write_report(&summaries, &path).unwrap();
        assert_eq!(read_report(&path).unwrap(), summaries);
    }

    #[test]
    fn empty_report_is_header_only() {
        let dir = std::env::temp_dir().join("laar-report-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.tsv");
        write_report(&[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(read_report(&path).unwrap(), Vec::new());
    }
}
