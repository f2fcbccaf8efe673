//! Stats tables rendered from persisted runs.
//!
//! Every number in a rendered table is recomputed from the raw CSVs on
//! disk and presented at one decimal (half-up), so re-rendering the same
//! results directory reproduces the same bytes.

use std::collections::BTreeMap;

use fieldlink::metrics::{present_1dp, summarize, summarize_concat, SeriesSummary};
use fieldlink::store::StoredRun;

pub const STATS_CSV_HEADER: &str = "location,network,profile,run,latency_mean_ms,latency_std_ms,\
latency_min_ms,throughput_mean_mbps,throughput_std_mbps,throughput_max_mbps,sample_count";

pub const GAPS_CSV_HEADER: &str = "network_a,network_b,latency_mean_gap_ms";

#[derive(Debug, Clone)]
pub struct StatsRow {
    pub location: String,
    pub network: String,
    pub profile: String,
    /// `None` marks the combined-over-repeats row.
    pub run: Option<u32>,
    pub latency: Option<SeriesSummary>,
    pub throughput: Option<SeriesSummary>,
}

impl StatsRow {
    pub fn sample_count(&self) -> usize {
        self.latency.map_or(0, |s| s.count) + self.throughput.map_or(0, |s| s.count)
    }
}

/// Per-run rows plus one combined row per (location, network, profile)
/// group, in sorted order. Combined statistics concatenate the raw samples
/// of the repeats; they are not means of per-run means.
pub fn stats_rows(runs: &[StoredRun]) -> Vec<StatsRow> {
    let mut groups: BTreeMap<(String, String, String), Vec<&StoredRun>> = BTreeMap::new();
    for run in runs {
        groups
            .entry((
                run.meta.location_label.clone(),
                run.meta.network_label.clone(),
                run.meta.profile_name.clone(),
            ))
            .or_default()
            .push(run);
    }

    let mut rows = Vec::new();
    for ((location, network, profile), mut group) in groups {
        group.sort_by_key(|r| r.meta.run_index);
        let mut rtt_all: Vec<Vec<f64>> = Vec::new();
        let mut tp_all: Vec<Vec<f64>> = Vec::new();
        for run in &group {
            let rtts = run.present_rtts();
            let tp = run.sent_mbps();
            rows.push(StatsRow {
                location: location.clone(),
                network: network.clone(),
                profile: profile.clone(),
                run: Some(run.meta.run_index),
                latency: summarize(&rtts).ok(),
                throughput: summarize(&tp).ok(),
            });
            rtt_all.push(rtts);
            tp_all.push(tp);
        }
        rows.push(StatsRow {
            location,
            network,
            profile,
            run: None,
            latency: summarize_concat(rtt_all.iter().map(Vec::as_slice)).ok(),
            throughput: summarize_concat(tp_all.iter().map(Vec::as_slice)).ok(),
        });
    }
    rows
}

fn cell(value: Option<f64>) -> String {
    value.map(present_1dp).unwrap_or_default()
}

pub fn stats_csv(rows: &[StatsRow]) -> String {
    let mut out = String::from(STATS_CSV_HEADER);
    out.push('\n');
    for row in rows {
        let run = row
            .run
            .map_or_else(|| "combined".to_string(), |r| r.to_string());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            row.location,
            row.network,
            row.profile,
            run,
            cell(row.latency.map(|s| s.mean)),
            cell(row.latency.map(|s| s.std)),
            cell(row.latency.map(|s| s.min)),
            cell(row.throughput.map(|s| s.mean)),
            cell(row.throughput.map(|s| s.std)),
            cell(row.throughput.map(|s| s.max)),
            row.sample_count(),
        ));
    }
    out
}

pub fn stats_json(rows: &[StatsRow]) -> String {
    let items: Vec<serde_json::Value> = rows
        .iter()
        .map(|row| {
            serde_json::json!({
                "location": row.location,
                "network": row.network,
                "profile": row.profile,
                "run": row.run.map_or_else(|| "combined".to_string(), |r| r.to_string()),
                "latency_mean_ms": row.latency.map(|s| s.mean),
                "latency_std_ms": row.latency.map(|s| s.std),
                "latency_min_ms": row.latency.map(|s| s.min),
                "throughput_mean_mbps": row.throughput.map(|s| s.mean),
                "throughput_std_mbps": row.throughput.map(|s| s.std),
                "throughput_max_mbps": row.throughput.map(|s| s.max),
                "sample_count": row.sample_count(),
            })
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&items).expect("stats serialize");
    text.push('\n');
    text
}

/// Fixed-width text table in location x network x profile order.
pub fn text_table(rows: &[StatsRow]) -> String {
    let header = [
        "location", "network", "profile", "run", "lat_mean", "lat_std", "lat_min", "tp_mean",
        "tp_std", "tp_max", "samples",
    ];
    let mut grid: Vec<[String; 11]> = vec![header.map(str::to_string)];
    for row in rows {
        grid.push([
            row.location.clone(),
            row.network.clone(),
            row.profile.clone(),
            row.run
                .map_or_else(|| "combined".to_string(), |r| r.to_string()),
            cell(row.latency.map(|s| s.mean)),
            cell(row.latency.map(|s| s.std)),
            cell(row.latency.map(|s| s.min)),
            cell(row.throughput.map(|s| s.mean)),
            cell(row.throughput.map(|s| s.std)),
            cell(row.throughput.map(|s| s.max)),
            row.sample_count().to_string(),
        ]);
    }
    let mut widths = [0usize; 11];
    for line in &grid {
        for (i, cell) in line.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for (n, line) in grid.iter().enumerate() {
        for (i, cell) in line.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            out.push_str(&format!("{:<width$}", cell, width = widths[i]));
        }
        out.push('\n');
        if n == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}

/// Pairwise gaps between the per-network combined latency means.
pub fn latency_gap_rows(rows: &[StatsRow]) -> Vec<(String, String, f64)> {
    // combined latency samples per network, pooled over locations/profiles
    let mut per_network: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.run.is_none()) {
        if let Some(lat) = row.latency {
            let entry = per_network.entry(row.network.as_str()).or_insert((0.0, 0));
            entry.0 += lat.mean * lat.count as f64;
            entry.1 += lat.count;
        }
    }
    let means: Vec<(String, f64)> = per_network
        .into_iter()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(k, (sum, n))| (k.to_string(), sum / n as f64))
        .collect();
    let mut gaps = Vec::new();
    for i in 0..means.len() {
        for j in (i + 1)..means.len() {
            gaps.push((
                means[i].0.clone(),
                means[j].0.clone(),
                (means[i].1 - means[j].1).abs(),
            ));
        }
    }
    gaps
}

pub fn gaps_csv(gaps: &[(String, String, f64)]) -> String {
    let mut out = String::from(GAPS_CSV_HEADER);
    out.push('\n');
    for (a, b, gap) in gaps {
        out.push_str(&format!("{a},{b},{}\n", present_1dp(*gap)));
    }
    out
}
