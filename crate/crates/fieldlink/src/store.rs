//! Raw result persistence.
//!
//! Each run produces three files in the results directory:
//!
//! * `<stem>_meta.json` - run identity: labels, profile, run index, seed,
//!   duration, drop/loss counters.
//! * `<stem>_rtt.csv` - header `time_s,rtt_ms`; a lost echo keeps its row
//!   with an empty `rtt_ms` field.
//! * `<stem>_tp.csv` - header `second,sent_mbps,delivered_fps`; the fps
//!   column is the per-stream mean for that second.
//!
//! Everything a rendered table shows is recomputed from these files, never
//! from in-memory state, so re-rendering a directory cannot drift.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::loadgen::{RttSample, RunRecord};

pub const RTT_CSV_HEADER: &str = "time_s,rtt_ms";
pub const TP_CSV_HEADER: &str = "second,sent_mbps,delivered_fps";

/// Run identity written next to the raw series.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunMeta {
    pub location_label: String,
    pub network_label: String,
    pub profile_name: String,
    pub stream_count: u32,
    pub run_index: u32,
    pub seed: u64,
    pub duration_s: f64,
    pub dropped_frames: u64,
    pub lost_probes: u64,
}

impl RunMeta {
    pub fn of(record: &RunRecord) -> Self {
        Self {
            location_label: record.location_label.clone(),
            network_label: record.network_label.clone(),
            profile_name: record.profile_name.clone(),
            stream_count: record.stream_count,
            run_index: record.run_index,
            seed: record.seed,
            duration_s: record.duration_s,
            dropped_frames: record.dropped_frames,
            lost_probes: record.lost_probes,
        }
    }
}

/// One parsed `_tp.csv` row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TpRow {
    pub second: u32,
    pub sent_mbps: f64,
    pub delivered_fps: f64,
}

/// A run read back from disk.
#[derive(Debug, Clone)]
pub struct StoredRun {
    pub meta: RunMeta,
    pub rtt: Vec<RttSample>,
    pub tp: Vec<TpRow>,
}

impl StoredRun {
    pub fn present_rtts(&self) -> Vec<f64> {
        self.rtt.iter().filter_map(|s| s.rtt_ms).collect()
    }

    pub fn sent_mbps(&self) -> Vec<f64> {
        self.tp.iter().map(|r| r.sent_mbps).collect()
    }
}

/// A file the reader had to skip, and why.
#[derive(Debug, Clone)]
pub struct SkipNote {
    pub path: PathBuf,
    pub reason: String,
}

fn sanitize(label: &str) -> String {
    let mut out: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    while out.contains("--") {
        out = out.replace("--", "-");
    }
    out.trim_matches('-').to_string()
}

/// File stem identifying one run, built from its labels.
pub fn run_stem(meta: &RunMeta) -> String {
    format!(
        "{}_{}_{}_run{:02}",
        sanitize(&meta.location_label),
        sanitize(&meta.network_label),
        sanitize(&meta.profile_name),
        meta.run_index
    )
}

pub fn rtt_csv(samples: &[RttSample]) -> String {
    let mut out = String::from(RTT_CSV_HEADER);
    out.push('\n');
    for s in samples {
        match s.rtt_ms {
            Some(ms) => out.push_str(&format!("{:.3},{:.3}\n", s.time_s, ms)),
            None => out.push_str(&format!("{:.3},\n", s.time_s)),
        }
    }
    out
}

pub fn tp_csv(record: &RunRecord) -> String {
    let mut out = String::from(TP_CSV_HEADER);
    out.push('\n');
    for (second, mbps) in record.sent_mbps_series.iter().enumerate() {
        out.push_str(&format!(
            "{},{:.4},{:.2}\n",
            second,
            mbps,
            record.mean_fps_at(second)
        ));
    }
    out
}

fn parse_finite(field: &str, name: &str, row: usize) -> Result<f64, String> {
    let value: f64 = field
        .trim()
        .parse()
        .map_err(|_| format!("row {row}: bad {name} `{field}`"))?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("row {row}: non-finite {name} `{field}`"))
    }
}

pub fn parse_rtt_csv(text: &str) -> Result<Vec<RttSample>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == RTT_CSV_HEADER => {}
        other => {
            return Err(format!(
                "bad header: expected `{RTT_CSV_HEADER}`, got {other:?}"
            ))
        }
    }
    let mut samples = Vec::new();
    let mut last_time = f64::NEG_INFINITY;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (time, rtt) = line
            .split_once(',')
            .ok_or_else(|| format!("row {}: expected two fields", i + 2))?;
        let time_s: f64 = parse_finite(time, "time", i + 2)?;
        if time_s < last_time {
            return Err(format!("row {}: timestamps not monotonic", i + 2));
        }
        last_time = time_s;
        let rtt = rtt.trim();
        let rtt_ms = if rtt.is_empty() {
            None
        } else {
            Some(parse_finite(rtt, "rtt", i + 2)?)
        };
        samples.push(RttSample { time_s, rtt_ms });
    }
    Ok(samples)
}

pub fn parse_tp_csv(text: &str) -> Result<Vec<TpRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TP_CSV_HEADER => {}
        other => {
            return Err(format!(
                "bad header: expected `{TP_CSV_HEADER}`, got {other:?}"
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(format!("row {}: expected three fields", i + 2));
        }
        let parse = |f: &str, name: &str| parse_finite(f, name, i + 2);
        rows.push(TpRow {
            second: parse(fields[0], "second")? as u32,
            sent_mbps: parse(fields[1], "sent_mbps")?,
            delivered_fps: parse(fields[2], "delivered_fps")?,
        });
    }
    Ok(rows)
}

/// Persists one run; returns the three paths written.
pub fn write_run(dir: &Path, record: &RunRecord) -> io::Result<[PathBuf; 3]> {
    fs::create_dir_all(dir)?;
    let meta = RunMeta::of(record);
    let stem = run_stem(&meta);
    let meta_path = dir.join(format!("{stem}_meta.json"));
    let rtt_path = dir.join(format!("{stem}_rtt.csv"));
    let tp_path = dir.join(format!("{stem}_tp.csv"));

    let mut meta_json = serde_json::to_string_pretty(&meta)?;
    meta_json.push('\n');
    atomic_write(&meta_path, meta_json.as_bytes())?;
    atomic_write(&rtt_path, rtt_csv(&record.rtt_samples).as_bytes())?;
    atomic_write(&tp_path, tp_csv(record).as_bytes())?;
    Ok([meta_path, rtt_path, tp_path])
}

fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
    }
    fs::rename(&tmp, path)
}

/// Reads every run in a directory, sorted by file stem. Unreadable or
/// corrupt files end up itemised in the skip list instead of failing the
/// whole read.
pub fn read_runs(dir: &Path) -> io::Result<(Vec<StoredRun>, Vec<SkipNote>)> {
    let mut stems: Vec<String> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix("_meta.json") {
            stems.push(stem.to_string());
        }
    }
    stems.sort();

    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    let skip = |path: PathBuf, reason: String, skipped: &mut Vec<SkipNote>| {
        skipped.push(SkipNote { path, reason });
    };
    for stem in stems {
        let meta_path = dir.join(format!("{stem}_meta.json"));
        let rtt_path = dir.join(format!("{stem}_rtt.csv"));
        let tp_path = dir.join(format!("{stem}_tp.csv"));

        let meta: RunMeta = match fs::read_to_string(&meta_path)
            .map_err(|e| e.to_string())
            .and_then(|text| serde_json::from_str(&text).map_err(|e| e.to_string()))
        {
            Ok(meta) => meta,
            Err(reason) => {
                skip(meta_path, reason, &mut skipped);
                continue;
            }
        };
        let rtt = match fs::read_to_string(&rtt_path)
            .map_err(|e| e.to_string())
            .and_then(|text| parse_rtt_csv(&text))
        {
            Ok(rtt) => rtt,
            Err(reason) => {
                skip(rtt_path, reason, &mut skipped);
                continue;
            }
        };
        let tp = match fs::read_to_string(&tp_path)
            .map_err(|e| e.to_string())
            .and_then(|text| parse_tp_csv(&text))
        {
            Ok(tp) => tp,
            Err(reason) => {
                skip(tp_path, reason, &mut skipped);
                continue;
            }
        };
        runs.push(StoredRun { meta, rtt, tp });
    }
    Ok((runs, skipped))
}
