//! Report rendering: tables, latency-gap rows and the mean +/- 1 std band
//! plots, all recomputed from the raw CSVs in a results directory.

use std::collections::BTreeMap;
use std::path::Path;

use fieldlink::channel::PresetCatalog;
use fieldlink::metrics::present_1dp;
use fieldlink::plot::{band_chart, BandSeries};
use fieldlink::store::{self, StoredRun};

use crate::runs::write;
use crate::table;
use crate::CliError;

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect::<String>()
        .trim_matches('-')
        .to_string()
}

/// Mean and sample std across runs at each sample index of a series family.
fn across_runs(series: &[Vec<(f64, f64)>]) -> Vec<(f64, f64, f64)> {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let x = series[0][i].0;
            let values: Vec<f64> = series.iter().map(|s| s[i].1).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = if values.len() < 2 {
                0.0
            } else {
                (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            };
            (x, mean, std)
        })
        .collect()
}

/// Renders everything into `<out>/`: stats table, gap rows, one latency and
/// one throughput chart per (location, profile). Returns the text summary.
pub fn render(results_dir: &Path, out_dir: &Path) -> Result<String, CliError> {
    let (runs, skipped) = store::read_runs(results_dir).map_err(CliError::transport)?;
    let mut summary = String::new();
    for note in &skipped {
        summary.push_str(&format!(
            "skipped: {} ({})\n",
            note.path.display(),
            note.reason
        ));
    }
    if runs.is_empty() {
        return Err(CliError::Validation(format!(
            "nothing to render in {}{}",
            results_dir.display(),
            if skipped.is_empty() {
                ""
            } else {
                " (every file was skipped)"
            }
        )));
    }

    let rows = table::stats_rows(&runs);
    write(&out_dir.join("stats.csv"), &table::stats_csv(&rows))?;
    write(&out_dir.join("stats.json"), &table::stats_json(&rows))?;
    let text = table::text_table(&rows);
    write(&out_dir.join("stats.txt"), &text)?;
    summary.push_str(&text);

    let gaps = table::latency_gap_rows(&rows);
    if !gaps.is_empty() {
        write(&out_dir.join("latency_gaps.csv"), &table::gaps_csv(&gaps))?;
        summary.push_str("\nlatency mean gaps:\n");
        for (a, b, gap) in &gaps {
            summary.push_str(&format!("  {a} vs {b}: {} ms\n", present_1dp(*gap)));
        }
    }

    // one chart pair per (location, profile), one band per network
    let mut groups: BTreeMap<(String, String), BTreeMap<String, Vec<&StoredRun>>> = BTreeMap::new();
    for run in &runs {
        groups
            .entry((
                run.meta.location_label.clone(),
                run.meta.profile_name.clone(),
            ))
            .or_default()
            .entry(run.meta.network_label.clone())
            .or_default()
            .push(run);
    }
    let mut charts = 0usize;
    for ((location, profile), networks) in groups {
        let mut latency_series = Vec::new();
        let mut throughput_series = Vec::new();
        for (network, runs) in networks {
            let rtt: Vec<Vec<(f64, f64)>> = runs
                .iter()
                .map(|r| {
                    r.rtt
                        .iter()
                        .filter_map(|s| s.rtt_ms.map(|ms| (s.time_s, ms)))
                        .collect()
                })
                .collect();
            if rtt.iter().all(|s| !s.is_empty()) {
                latency_series.push(BandSeries {
                    label: network.clone(),
                    points: across_runs(&rtt),
                });
            }
            let tp: Vec<Vec<(f64, f64)>> = runs
                .iter()
                .map(|r| {
                    r.tp.iter()
                        .map(|row| (row.second as f64, row.sent_mbps))
                        .collect()
                })
                .collect();
            if tp.iter().all(|s| !s.is_empty()) {
                throughput_series.push(BandSeries {
                    label: network.clone(),
                    points: across_runs(&tp),
                });
            }
        }
        let stem = format!("{}_{}", sanitize(&location), sanitize(&profile));
        if !latency_series.is_empty() {
            let svg = band_chart(
                &format!("Latency at {location} ({profile})"),
                "time (s)",
                "RTT (ms)",
                &latency_series,
            );
            write(&out_dir.join(format!("latency_{stem}.svg")), &svg)?;
            charts += 1;
        }
        if !throughput_series.is_empty() {
            let svg = band_chart(
                &format!("Throughput at {location} ({profile})"),
                "time (s)",
                "sent (Mbps)",
                &throughput_series,
            );
            write(&out_dir.join(format!("throughput_{stem}.svg")), &svg)?;
            charts += 1;
        }
    }
    summary.push_str(&format!(
        "\n{} run(s), {charts} chart(s) rendered to {}\n",
        runs.len(),
        out_dir.display()
    ));
    Ok(summary)
}

/// Renders the preset catalog: the encoded numbers, their provenance notes
/// and the pairwise mean-RTT gaps.
pub fn render_presets(catalog: &PresetCatalog) -> String {
    let mut out = String::new();
    out.push_str("preset             up_mbps  down_mbps  rtt_dist          mean_ms  std_ms  min_ms  tunnel_ms  loss\n");
    out.push_str(&"-".repeat(100));
    out.push('\n');
    for (name, preset) in catalog.iter() {
        let p = &preset.profile;
        out.push_str(&format!(
            "{:<18} {:>7} {:>10} {:<17} {:>8} {:>7} {:>7} {:>10} {:>5}\n",
            name,
            present_1dp(p.uplink_cap_mbps),
            present_1dp(p.downlink_cap_mbps),
            p.rtt_model.distribution.as_str(),
            present_1dp(p.rtt_model.mean_ms),
            present_1dp(p.rtt_model.std_ms),
            present_1dp(p.rtt_model.min_ms),
            format!("{:.3}", p.tunnel_overhead_ms),
            format!("{:.2}", p.loss_fraction),
        ));
    }
    out.push_str("\nmean RTT gaps (ms):\n");
    let names: Vec<&str> = catalog.names().collect();
    for i in 0..names.len() {
        for j in (i + 1)..names.len() {
            let gap = catalog
                .mean_rtt_gap_ms(names[i], names[j])
                .expect("known names");
            out.push_str(&format!(
                "  {} vs {}: {}\n",
                names[i],
                names[j],
                present_1dp(gap)
            ));
        }
    }
    out.push_str("\nprovenance:\n");
    for (name, preset) in catalog.iter() {
        out.push_str(&format!("  {name}: {}\n", preset.provenance));
    }
    out
}
