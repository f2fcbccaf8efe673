//! Acceptance suite.
//!
//! Each test is one acceptance criterion, pinned at its stated tolerance,
//! and prints a single `[PASS]`/`[FAIL]` line (visible with
//! `cargo test --test acceptance -- --nocapture`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use fieldlink::channel::{
    ChannelProfile, Direction, LatencyModel, PresetCatalog, FIVEG_N77_NVLOS, FIVEG_N77_VLOS,
    FOURG_PUBLIC, WIFI6_LOCAL,
};
use fieldlink::loadgen::{run_probe_protocol, run_throughput_test, StreamProfile, Transport};
use fieldlink::metrics::{
    combine_runs, compute_run_stats, one_way_latency_ms, present_1dp, summarize, summarize_concat,
};
use fieldlink::rtsim::{
    response_window_ms, simulate_mission, trend_rtt, DelayModel, MissionSpec, TrendMode,
};

fn criterion(name: &str, body: impl FnOnce() -> Result<String, String>) {
    match body() {
        Ok(detail) => println!("[PASS] {name}: {detail}"),
        Err(detail) => {
            println!("[FAIL] {name}: {detail}");
            panic!("{name}: {detail}");
        }
    }
}

fn check(cond: bool, detail: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(detail)
    }
}

#[test]
fn c01_one_way_latency_reproduction() {
    criterion("C1 one-way latency presents 11.5 / 32.0", || {
        let near = present_1dp(one_way_latency_ms(22.9).map_err(|e| e.to_string())?);
        let far = present_1dp(one_way_latency_ms(63.9).map_err(|e| e.to_string())?);
        check(
            near == "11.5",
            format!("22.9/2 presented {near}, want 11.5"),
        )?;
        check(far == "32.0", format!("63.9/2 presented {far}, want 32.0"))?;
        Ok(format!("22.9 -> {near}, 63.9 -> {far}"))
    });
}

#[test]
fn c02_response_window() {
    criterion("C2 response window 333.3 ms", || {
        let window = response_window_ms(1.0, 3.0).map_err(|e| e.to_string())?;
        check(
            (window - 1000.0 / 3.0).abs() < 1e-9,
            format!("window {window}, want 1000/3"),
        )?;
        let presented = present_1dp(window);
        check(
            presented == "333.3",
            format!("presented {presented}, want 333.3"),
        )?;
        Ok(format!("window {window:.6} ms, presented {presented}"))
    });
}

#[test]
fn c03_lag_bracket() {
    criterion(
        "C3 lag bracket 4.70 s / 7.00 s over 30 messages in 10 s",
        || {
            let spec = MissionSpec::default();
            check(
                spec.messages() == 30,
                format!("messages {}", spec.messages()),
            )?;
            check(
                (spec.travel_time_s() - 10.0).abs() < 1e-12,
                format!("travel {}", spec.travel_time_s()),
            )?;
            let mut totals = Vec::new();
            for (rtt, want_s) in [(217.0, 4.70), (293.6, 7.00)] {
                let report = simulate_mission(&spec, &DelayModel::constant(rtt))
                    .map_err(|e| e.to_string())?;
                let total_s = report.total_cumulative_delay_ms / 1000.0;
                check(
                    (total_s - want_s).abs() <= 0.05,
                    format!("RTT {rtt}: total {total_s:.4} s, want {want_s} +/- 0.05"),
                )?;
                check(
                    !report.real_time,
                    format!("RTT {rtt} must not be real-time"),
                )?;
                totals.push(format!("RTT {rtt} -> {total_s:.3} s"));
            }
            Ok(totals.join(", "))
        },
    );
}

#[test]
fn c04_verdicts_and_margin() {
    criterion(
        "C4 verdicts: 22.9 leads +37.4, >= 60.4 lags; footnote present",
        || {
            let spec = MissionSpec::default();
            let lead =
                simulate_mission(&spec, &DelayModel::constant(22.9)).map_err(|e| e.to_string())?;
            check(lead.real_time, "22.9 ms must be real-time".into())?;
            for m in &lead.messages {
                check(
                    (m.margin_ms - 37.4).abs() <= 0.1,
                    format!("margin {} want 37.4 +/- 0.1", m.margin_ms),
                )?;
            }
            for rtt in [60.4, 63.9, 100.0, 400.0] {
                let report = simulate_mission(&spec, &DelayModel::constant(rtt))
                    .map_err(|e| e.to_string())?;
                check(!report.real_time, format!("RTT {rtt} must lag"))?;
                check(
                    !report.footnote.is_empty() && report.footnote.contains("60.3"),
                    "footnote must document the computed-sign rule and threshold".into(),
                )?;
            }
            Ok("margin +37.4 +/- 0.1; lag verdicts from 60.4 ms up, footnote present".into())
        },
    );
}

#[test]
fn c05_saturation_behaviour() {
    criterion(
        "C5 RGBD saturation: 5G 60 Mbps / 12.5 FPS, WiFi6 144 Mbps / 30 FPS",
        || {
            let catalog = PresetCatalog::bundled();
            let mut details = Vec::new();
            for (preset, want_mbps, tol_mbps, want_fps, tol_fps) in [
                (FIVEG_N77_VLOS, 60.0, 3.0, 12.5, 1.0),
                (WIFI6_LOCAL, 144.0, 3.0, 30.0, 0.5),
            ] {
                let profile = catalog
                    .get(preset)
                    .map_err(|e| e.to_string())?
                    .profile
                    .clone();
                let mut t = Transport::emulated(&profile, 1).map_err(|e| e.to_string())?;
                let record = run_throughput_test(&mut t, &StreamProfile::rgbd1(), 30.0)
                    .map_err(|e| e.to_string())?;
                let mean_sent = record.sent_mbps_series.iter().sum::<f64>()
                    / record.sent_mbps_series.len() as f64;
                let mean_fps = (0..record.delivered_fps_series.len())
                    .map(|s| record.mean_fps_at(s))
                    .sum::<f64>()
                    / record.delivered_fps_series.len() as f64;
                check(
                    (mean_sent - want_mbps).abs() <= tol_mbps,
                    format!("{preset}: sent {mean_sent:.2} want {want_mbps} +/- {tol_mbps}"),
                )?;
                check(
                    (mean_fps - want_fps).abs() <= tol_fps,
                    format!("{preset}: fps {mean_fps:.2} want {want_fps} +/- {tol_fps}"),
                )?;
                details.push(format!("{preset}: {mean_sent:.1} Mbps / {mean_fps:.2} FPS"));
            }
            Ok(details.join("; "))
        },
    );
}

#[test]
fn c06_probe_fidelity() {
    criterion(
        "C6 probe fidelity: combined mean 50 +/- 2, min >= 40 over 5x30 s",
        || {
            let profile = ChannelProfile {
                name: "tn".into(),
                uplink_cap_mbps: 100.0,
                downlink_cap_mbps: 100.0,
                rtt_model: LatencyModel::truncated_normal(50.0, 5.0, 40.0),
                tunnel_overhead_ms: 0.0,
                loss_fraction: 0.0,
            };
            let records = run_probe_protocol(
                |run| Transport::emulated(&profile, 9000 + run as u64),
                5,
                30.0,
                10.0,
            )
            .map_err(|e| e.to_string())?;
            check(records.len() == 5, format!("{} runs", records.len()))?;
            let series: Vec<Vec<f64>> = records.iter().map(|r| r.present_rtts()).collect();
            let combined =
                summarize_concat(series.iter().map(Vec::as_slice)).map_err(|e| e.to_string())?;
            check(
                combined.count == 1500,
                format!("{} samples, want 1500", combined.count),
            )?;
            check(
                (combined.mean - 50.0).abs() <= 2.0,
                format!("combined mean {:.3}, want 50 +/- 2", combined.mean),
            )?;
            check(
                combined.min >= 40.0,
                format!("min {:.3}, want >= 40", combined.min),
            )?;
            Ok(format!(
                "combined mean {:.3} ms, min {:.3} ms, {} samples",
                combined.mean, combined.min, combined.count
            ))
        },
    );
}

/// Independent statistics route: sorts ascending before both passes and
/// uses the direct definition of each figure.
fn brute_force_stats(values: &[f64]) -> (f64, f64, f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = if sorted.len() < 2 {
        0.0
    } else {
        sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    (mean, var.sqrt(), sorted[0], sorted[sorted.len() - 1])
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn c07_metrics_oracle_equivalence() {
    criterion(
        "C7 metrics agree with brute force on 1000 random series",
        || {
            // deterministic xorshift-style generator for reproducible inputs
            let mut state = 0x1234_5678_9abc_def0u64;
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            for case in 0..1000 {
                let len = 1 + (next() * 49.0) as usize;
                let series: Vec<f64> = (0..len).map(|_| next() * 1000.0).collect();
                let s = summarize(&series).map_err(|e| e.to_string())?;
                let (mean, std, min, max) = brute_force_stats(&series);
                check(
                    close(s.mean, mean) && close(s.std, std) && s.min == min && s.max == max,
                    format!("case {case}: summarize disagrees with brute force"),
                )?;

                // split into chunks: combined stats must equal whole-series stats
                let cut = len / 2;
                let (a, b) = series.split_at(cut);
                let combined = if a.is_empty() {
                    summarize(b).map_err(|e| e.to_string())?
                } else {
                    summarize_concat([a, b]).map_err(|e| e.to_string())?
                };
                check(
                    close(combined.mean, mean) && close(combined.std, std),
                    format!("case {case}: combine disagrees with brute force"),
                )?;

                // the RunStats wrappers route through the same figures
                let stats = compute_run_stats(&series, &series).map_err(|e| e.to_string())?;
                check(
                    close(stats.latency_mean_ms, mean)
                        && close(stats.throughput_std_mbps, std)
                        && stats.latency_min_ms == min
                        && stats.throughput_max_mbps == max
                        && stats.sample_count == 2 * len,
                    format!("case {case}: compute_run_stats disagrees"),
                )?;
                let combined_stats = combine_runs([(a, b), (b, a)]).map_err(|e| e.to_string())?;
                check(
                    close(combined_stats.latency_mean_ms, mean)
                        && close(combined_stats.throughput_mean_mbps, mean),
                    format!("case {case}: combine_runs disagrees"),
                )?;
            }
            Ok("1000 random series, all four entry points within 1e-9 relative".into())
        },
    );
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fieldlink"))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if entry.path().is_file() {
            out.insert(
                entry.file_name().to_string_lossy().into_owned(),
                fs::read(entry.path()).unwrap(),
            );
        }
    }
    out
}

#[test]
fn c08_pipeline_determinism() {
    criterion("C8 identical seeds give byte-identical CSV outputs", || {
        let base = std::env::temp_dir().join(format!("fieldlink-acc8-{}", std::process::id()));
        let _ = fs::remove_dir_all(&base);
        fs::create_dir_all(&base).unwrap();
        let plan_path = base.join("plan.conf");
        fs::write(
            &plan_path,
            "[plan]\nrepeats = 3\nduration_s = 10\n\
             networks = FOURG_PUBLIC, FIVEG_N77_VLOS, WIFI6_LOCAL\nprofiles = RGB1, RGBD1\n\
             [location P.R.L.]\ndistance_to_ap_m = 49.1\n",
        )
        .unwrap();
        let run_pipeline = |tag: &str| -> Result<PathBuf, String> {
            let results = base.join(format!("results-{tag}"));
            let output = bin()
                .args(["stream", "--plan"])
                .arg(&plan_path)
                .args(["--seed", "2024", "--out"])
                .arg(&results)
                .output()
                .map_err(|e| e.to_string())?;
            check(output.status.success(), format!("pipeline {tag} failed"))?;
            let output = bin()
                .args(["report", "--results"])
                .arg(&results)
                .args(["--out"])
                .arg(results.join("report"))
                .output()
                .map_err(|e| e.to_string())?;
            check(output.status.success(), format!("report {tag} failed"))?;
            Ok(results)
        };
        let a = run_pipeline("a")?;
        let b = run_pipeline("b")?;
        let (snap_a, snap_b) = (snapshot(&a), snapshot(&b));
        check(
            !snap_a.is_empty() && snap_a.len() == snap_b.len(),
            format!("{} vs {} files", snap_a.len(), snap_b.len()),
        )?;
        let mut csvs = 0;
        for (name, bytes) in &snap_a {
            check(
                snap_b.get(name) == Some(bytes),
                format!("{name} differs between the two runs"),
            )?;
            if name.ends_with(".csv") {
                csvs += 1;
            }
        }
        let (rep_a, rep_b) = (snapshot(&a.join("report")), snapshot(&b.join("report")));
        for (name, bytes) in &rep_a {
            check(
                rep_b.get(name) == Some(bytes),
                format!("report/{name} differs between the two runs"),
            )?;
        }
        fs::remove_dir_all(&base).unwrap();
        Ok(format!(
            "{} files identical ({csvs} CSVs) plus {} report files",
            snap_a.len(),
            rep_a.len()
        ))
    });
}

/// Fits `a` in vertex form `a (f - h)^2 + k` by bisection on the remaining
/// endpoint constraint, never using the closed form under test.
fn fit_vertex_quadratic(start: f64, end: f64) -> impl Fn(f64) -> f64 {
    let (h, k, f_other, y_other): (f64, f64, f64, f64) = if start <= end {
        (0.0, start, 1.0, end)
    } else {
        (1.0, end, 0.0, start)
    };
    let residual = |a: f64| a * (f_other - h).powi(2) + k - y_other;
    let (mut lo, mut hi) = (0.0, 1.0);
    while residual(hi) < 0.0 && hi < 1e12 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    move |f: f64| a * (f - h).powi(2) + k
}

#[test]
fn c09_trend_interpolation() {
    criterion(
        "C9 vertex-quadratic: exact endpoints, monotone, matches fit oracle",
        || {
            let mut state = 0xfeed_f00du64;
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            for case in 0..100 {
                let start = next() * 500.0;
                let end = next() * 500.0;
                let model = DelayModel {
                    rtt_start_ms: start,
                    rtt_end_ms: end,
                    mode: TrendMode::VertexQuadratic,
                };
                let at = |f: f64| trend_rtt(&model, f).map_err(|e| e.to_string());
                check(
                    at(0.0)? == start,
                    format!("case {case}: start endpoint not exact"),
                )?;
                check(
                    at(1.0)? == end,
                    format!("case {case}: end endpoint not exact"),
                )?;

                let oracle = fit_vertex_quadratic(start, end);
                let mut prev = at(0.0)?;
                for step in 1..=40 {
                    let f = step as f64 / 40.0;
                    let v = at(f)?;
                    let fitted = oracle(f);
                    check(
                        (v - fitted).abs() <= 1e-6 * fitted.abs().max(1.0),
                        format!("case {case}: f={f}: {v} vs fitted {fitted}"),
                    )?;
                    check(
                        if end >= start {
                            v >= prev - 1e-9
                        } else {
                            v <= prev + 1e-9
                        },
                        format!("case {case}: not monotone at f={f}"),
                    )?;
                    prev = v;
                }
            }
            Ok("100 random endpoint pairs: exact endpoints, monotone, fit agrees".into())
        },
    );
}

#[test]
fn c10_preset_regression() {
    criterion(
        "C10 bundled presets reproduce the encoded statistics",
        || {
            let catalog = PresetCatalog::bundled();
            // encoding check, not an independent field reproduction
            let gap = catalog
                .mean_rtt_gap_ms(FIVEG_N77_VLOS, WIFI6_LOCAL)
                .map_err(|e| e.to_string())?;
            check(
                present_1dp(gap) == "18.2",
                format!("encoded mean gap {} want 18.2", present_1dp(gap)),
            )?;
            let fiveg = &catalog
                .get(FIVEG_N77_VLOS)
                .map_err(|e| e.to_string())?
                .profile;
            check(
                fiveg.saturated_throughput(144.0, Direction::Uplink) == 60.0,
                "5G uplink must saturate at 60 Mbps".into(),
            )?;
            let wifi = &catalog.get(WIFI6_LOCAL).map_err(|e| e.to_string())?.profile;
            check(
                wifi.saturated_throughput(144.0, Direction::Uplink) == 144.0,
                "WiFi6 must pass the 144 Mbps RGBD load unsaturated".into(),
            )?;
            for name in [FOURG_PUBLIC, FIVEG_N77_VLOS, FIVEG_N77_NVLOS, WIFI6_LOCAL] {
                let preset = catalog.get(name).map_err(|e| e.to_string())?;
                check(
                    !preset.provenance.is_empty(),
                    format!("{name} is missing its provenance note"),
                )?;
            }
            // the rendered catalog carries the same gap row
            let output = bin().arg("presets").output().map_err(|e| e.to_string())?;
            let text = String::from_utf8_lossy(&output.stdout).into_owned();
            check(
                text.contains("FIVEG_N77_VLOS vs WIFI6_LOCAL: 18.2"),
                "rendered preset table must show the 18.2 ms gap".into(),
            )?;
            Ok("18.2 ms encoded gap, 60/144 Mbps caps, provenance on all four presets".into())
        },
    );
}
