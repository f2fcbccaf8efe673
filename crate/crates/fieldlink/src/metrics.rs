//! Run statistics: the six per-run performance figures and the two
//! aggregation methodologies (per-run, and combined over the raw samples of
//! repeated runs). All values are kept at full precision internally;
//! rounding happens only in the presentation helpers.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("statistics over an empty series")]
    EmptySeries,
    #[error("domain error: {0}")]
    Domain(String),
}

/// Mean / sample std / min / max over one series of present samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// The six statistics reported for one experiment run: latency summarised by
/// mean/std/min, throughput by mean/std/max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunStats {
    pub latency_mean_ms: f64,
    pub latency_std_ms: f64,
    pub latency_min_ms: f64,
    pub throughput_mean_mbps: f64,
    pub throughput_std_mbps: f64,
    pub throughput_max_mbps: f64,
    /// Present samples across both series.
    pub sample_count: usize,
}

/// Mean, sample (n-1) standard deviation, min and max of a series.
/// Errors on an empty series; a single sample has std 0.
pub fn summarize(samples: &[f64]) -> Result<SeriesSummary, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySeries);
    }
    let n = samples.len();
    let sum: f64 = samples.iter().sum();
    let mean = sum / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SeriesSummary {
        mean,
        std,
        min,
        max,
        count: n,
    })
}

/// Statistics over the concatenation of several raw series - not a mean of
/// per-series means, so repeat counts weight naturally.
pub fn summarize_concat<'a, I>(series: I) -> Result<SeriesSummary, StatsError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let all: Vec<f64> = series.into_iter().flatten().copied().collect();
    summarize(&all)
}

/// The six run statistics from one run's raw latency and throughput series.
pub fn compute_run_stats(rtt_ms: &[f64], throughput_mbps: &[f64]) -> Result<RunStats, StatsError> {
    let lat = summarize(rtt_ms)?;
    let tp = summarize(throughput_mbps)?;
    Ok(RunStats {
        latency_mean_ms: lat.mean,
        latency_std_ms: lat.std,
        latency_min_ms: lat.min,
        throughput_mean_mbps: tp.mean,
        throughput_std_mbps: tp.std,
        throughput_max_mbps: tp.max,
        sample_count: lat.count + tp.count,
    })
}

/// Combined statistics over repeated runs: both families are concatenated
/// across runs before summarising.
pub fn combine_runs<'a, I>(runs: I) -> Result<RunStats, StatsError>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let mut rtt = Vec::new();
    let mut tp = Vec::new();
    for (r, t) in runs {
        rtt.extend_from_slice(r);
        tp.extend_from_slice(t);
    }
    compute_run_stats(&rtt, &tp)
}

/// Half of a round-trip time. Present with [`present_1dp`].
pub fn one_way_latency_ms(rtt_ms: f64) -> Result<f64, StatsError> {
    if !rtt_ms.is_finite() || rtt_ms < 0.0 {
        return Err(StatsError::Domain(format!(
            "round-trip time must be >= 0, got {rtt_ms}"
        )));
    }
    Ok(rtt_ms / 2.0)
}

/// Rounds half away from zero at `decimals` places, on the decimal
/// representation rather than the raw binary value, so a stored 11.45
/// (binary 11.4499999...) still rounds up to 11.5.
pub fn round_half_up(value: f64, decimals: usize) -> f64 {
    if !value.is_finite() {
        return value;
    }
    let negative = value.is_sign_negative();
    // Four guard digits absorb binary representation noise before the
    // decimal half-up rule is applied.
    let text = format!("{:.*}", decimals + 4, value.abs());
    let (int_part, frac_part) = text.split_once('.').unwrap_or((text.as_str(), ""));
    let mut digits: Vec<u8> = int_part
        .bytes()
        .chain(frac_part.bytes().take(decimals))
        .map(|b| b - b'0')
        .collect();
    let next = frac_part.as_bytes().get(decimals).map_or(0, |b| b - b'0');
    if next >= 5 {
        for d in digits.iter_mut().rev() {
            if *d == 9 {
                *d = 0;
            } else {
                *d += 1;
                break;
            }
        }
        if digits.iter().all(|&d| d == 0) {
            // every digit was 9: the carry grows one place
            digits.insert(0, 1);
        }
    }
    let int_len = digits.len().saturating_sub(decimals);
    let mut out = String::new();
    if negative && digits.iter().any(|&d| d != 0) {
        out.push('-');
    }
    for (i, d) in digits.iter().enumerate() {
        if i == int_len && decimals > 0 {
            out.push('.');
        }
        out.push((b'0' + d) as char);
    }
    out.parse().expect("rounded decimal parses")
}

/// Presentation rounding used by every rendered table: one decimal, half up.
pub fn present_1dp(value: f64) -> String {
    format!("{:.1}", round_half_up(value, 1))
}
