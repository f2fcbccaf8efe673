//! Browser demo: the simulator and channel sampler compiled to wasm behind
//! three interactive operations (mission verdicts, RTT trend curves, preset
//! latency sampling). `index.html` in this crate is the whole frontend.

use fieldlink::channel::PresetCatalog;
use fieldlink::loadgen::{run_throughput_test, StreamProfile, Transport};
use fieldlink::metrics::{present_1dp, summarize};
use fieldlink::plot::{band_chart, histogram, BandSeries};
use fieldlink::rtsim::{
    simulate_mission, timeline_svg, trend_rtt, DelayModel, MissionSpec, TrendMode,
};
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn build_mission(
    rtt_start_ms: f64,
    rtt_end_ms: f64,
    mode: &str,
    velocity_mps: f64,
    processing_ms: f64,
) -> Result<(MissionSpec, DelayModel), String> {
    let mode = TrendMode::parse(mode).ok_or_else(|| err(format!("unknown trend mode `{mode}`")))?;
    let spec = MissionSpec {
        velocity_mps,
        processing_ms,
        ..Default::default()
    };
    let model = DelayModel {
        rtt_start_ms,
        rtt_end_ms,
        mode,
    };
    Ok((spec, model))
}

/// JSON array of the bundled preset names.
#[wasm_bindgen]
pub fn preset_names() -> String {
    let names: Vec<String> = PresetCatalog::bundled()
        .names()
        .map(str::to_string)
        .collect();
    serde_json::to_string(&names).expect("names serialize")
}

/// Runs the traversal and returns the report with presented headline
/// figures as JSON.
#[wasm_bindgen]
pub fn mission_report_json(
    rtt_start_ms: f64,
    rtt_end_ms: f64,
    mode: &str,
    velocity_mps: f64,
    processing_ms: f64,
) -> Result<String, String> {
    let (spec, model) = build_mission(rtt_start_ms, rtt_end_ms, mode, velocity_mps, processing_ms)?;
    let report = simulate_mission(&spec, &model).map_err(err)?;
    let worst = report
        .messages
        .iter()
        .map(|m| m.margin_ms)
        .fold(f64::INFINITY, f64::min);
    let json = serde_json::json!({
        "verdict": report.verdict(),
        "real_time": report.real_time,
        "response_window_ms": present_1dp(report.response_window_ms),
        "worst_margin_ms": present_1dp(worst),
        "total_cumulative_delay_s": present_1dp(report.total_cumulative_delay_ms / 1000.0),
        "messages": report.messages.len(),
        "footnote": report.footnote,
    });
    Ok(json.to_string())
}

/// Timeline of the first second of the traversal.
#[wasm_bindgen]
pub fn mission_timeline_svg(
    rtt_start_ms: f64,
    rtt_end_ms: f64,
    mode: &str,
    velocity_mps: f64,
    processing_ms: f64,
) -> Result<String, String> {
    let (spec, model) = build_mission(rtt_start_ms, rtt_end_ms, mode, velocity_mps, processing_ms)?;
    let report = simulate_mission(&spec, &model).map_err(err)?;
    Ok(timeline_svg(&report))
}

/// Cumulative delay across the path against the response window.
#[wasm_bindgen]
pub fn trend_chart_svg(
    rtt_start_ms: f64,
    rtt_end_ms: f64,
    mode: &str,
    velocity_mps: f64,
    processing_ms: f64,
) -> Result<String, String> {
    let (spec, model) = build_mission(rtt_start_ms, rtt_end_ms, mode, velocity_mps, processing_ms)?;
    spec.validate().map_err(err)?;
    let window = spec.response_window_ms();
    let mut delay_points = Vec::new();
    let mut window_points = Vec::new();
    let steps = 60;
    for k in 0..=steps {
        let fraction = k as f64 / steps as f64;
        let position = fraction * spec.path_length_m;
        let rtt = trend_rtt(&model, fraction).map_err(err)?;
        delay_points.push((position, rtt + spec.processing_ms, 0.0));
        window_points.push((position, window, 0.0));
    }
    let series = [
        BandSeries {
            label: "cumulative delay".into(),
            points: delay_points,
        },
        BandSeries {
            label: "response window".into(),
            points: window_points,
        },
    ];
    Ok(band_chart(
        "Cumulative delay along the path",
        "position (m)",
        "delay (ms)",
        &series,
    ))
}

fn preset_samples(preset: &str, seed: u32, draws: u32) -> Result<Vec<f64>, String> {
    let catalog = PresetCatalog::bundled();
    let profile = catalog.get(preset).map_err(err)?.profile.clone();
    let mut sampler = profile.sampler(seed as u64).map_err(err)?;
    Ok((0..draws.min(1_000_000))
        .map(|_| sampler.sample_rtt())
        .collect())
}

/// Histogram of seeded effective RTT draws for one preset.
#[wasm_bindgen]
pub fn latency_histogram_svg(preset: &str, seed: u32, draws: u32) -> Result<String, String> {
    let samples = preset_samples(preset, seed, draws)?;
    Ok(histogram(
        &format!("{preset}: {} effective RTT draws", samples.len()),
        "RTT (ms)",
        &samples,
        40,
    ))
}

/// Summary statistics of the same draw sequence, presented at one decimal.
#[wasm_bindgen]
pub fn latency_sample_stats_json(preset: &str, seed: u32, draws: u32) -> Result<String, String> {
    let samples = preset_samples(preset, seed, draws)?;
    let stats = summarize(&samples).map_err(err)?;
    let json = serde_json::json!({
        "preset": preset,
        "count": stats.count,
        "mean_ms": present_1dp(stats.mean),
        "std_ms": present_1dp(stats.std),
        "min_ms": present_1dp(stats.min),
        "max_ms": present_1dp(stats.max),
    });
    Ok(json.to_string())
}

/// One virtual-clock stream run of the static heavy profile over a preset:
/// per-second carried throughput and delivered FPS as JSON series.
#[wasm_bindgen]
pub fn saturation_run_json(preset: &str, seed: u32, duration_s: f64) -> Result<String, String> {
    let catalog = PresetCatalog::bundled();
    let profile = catalog.get(preset).map_err(err)?.profile.clone();
    let mut transport = Transport::emulated(&profile, seed as u64).map_err(err)?;
    let record = run_throughput_test(
        &mut transport,
        &StreamProfile::rgbd1(),
        duration_s.clamp(1.0, 120.0),
    )
    .map_err(err)?;
    let seconds = record.sent_mbps_series.len();
    let fps: Vec<f64> = (0..seconds).map(|s| record.mean_fps_at(s)).collect();
    let json = serde_json::json!({
        "preset": preset,
        "offered_mbps": 144.0,
        "sent_mbps": record.sent_mbps_series,
        "delivered_fps": fps,
        "dropped_frames": record.dropped_frames,
    });
    Ok(json.to_string())
}
