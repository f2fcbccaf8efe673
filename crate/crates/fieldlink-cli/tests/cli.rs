//! End-to-end runs of the `fieldlink` binary.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fieldlink"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fieldlink-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, text: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

const QUICK_PLAN: &str = "\
[plan]
repeats = 2
duration_s = 10
networks = FIVEG_N77_VLOS, WIFI6_LOCAL
profiles = RGBD1

[location P.R.L.]
distance_to_ap_m = 49.1
";

#[test]
fn stream_plan_emulated_saturates_and_exits_zero() {
    let dir = tmp_dir("stream");
    let plan = dir.join("plan.conf");
    write(&plan, QUICK_PLAN);
    let out = dir.join("results");
    let output = bin()
        .args(["stream", "--plan"])
        .arg(&plan)
        .args(["--seed", "7", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );

    let stats = fs::read_to_string(out.join("stats.csv")).unwrap();
    let wifi_combined = stats
        .lines()
        .find(|l| l.starts_with("P.R.L.,WIFI6_LOCAL,RGBD1,combined"))
        .expect("combined WiFi6 row");
    let tp_mean: f64 = wifi_combined.split(',').nth(7).unwrap().parse().unwrap();
    assert!((tp_mean - 144.0).abs() < 3.0, "{wifi_combined}");
    let fiveg_combined = stats
        .lines()
        .find(|l| l.starts_with("P.R.L.,FIVEG_N77_VLOS,RGBD1,combined"))
        .expect("combined 5G row");
    let tp_mean: f64 = fiveg_combined.split(',').nth(7).unwrap().parse().unwrap();
    assert!((tp_mean - 60.0).abs() < 3.0, "{fiveg_combined}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn empty_plan_is_validation_error_exit_1() {
    let dir = tmp_dir("empty-plan");
    let plan = dir.join("plan.conf");
    write(&plan, "[plan]\nnetworks = WIFI6_LOCAL\nprofiles = RGB1\n");
    let output = bin()
        .args(["stream", "--plan"])
        .arg(&plan)
        .args(["--out"])
        .arg(dir.join("results"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "{output:?}");
    assert!(String::from_utf8_lossy(&output.stderr).contains("no [location"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn full_design_space_produces_360_run_records() {
    let dir = tmp_dir("design-space");
    let mut plan = String::from(
        "[plan]\nrepeats = 5\nduration_s = 2\n\
         networks = FOURG_PUBLIC, FIVEG_N77_VLOS, WIFI6_LOCAL\n\
         profiles = RGB1, RGB4, RGBD1\n",
    );
    for i in 0..8 {
        plan.push_str(&format!("[location L{i}]\ndistance_to_ap_m = {}\n", 40 + i));
    }
    let plan_path = dir.join("plan.conf");
    write(&plan_path, &plan);
    let out = dir.join("results");
    let output = bin()
        .args(["stream", "--plan"])
        .arg(&plan_path)
        .args(["--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let metas = fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with("_meta.json")
        })
        .count();
    assert_eq!(metas, 8 * 3 * 3 * 5);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn probe_plan_writes_latency_only_rows() {
    let dir = tmp_dir("probe");
    let plan = dir.join("plan.conf");
    write(
        &plan,
        "[plan]\nrepeats = 3\nduration_s = 5\nnetworks = FIVEG_N77_VLOS\n\
         [location P.R.L.]\ndistance_to_ap_m = 49.1\n",
    );
    let out = dir.join("results");
    let output = bin()
        .args(["probe", "--plan"])
        .arg(&plan)
        .args(["--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stats = fs::read_to_string(out.join("stats.csv")).unwrap();
    let combined = stats
        .lines()
        .find(|l| l.contains(",PROBE,combined"))
        .expect("combined probe row");
    let fields: Vec<&str> = combined.split(',').collect();
    // constant 5G preset: 22.9 + 2 x 0.403 tunnel crossings
    assert_eq!(fields[4], "23.7");
    assert_eq!(fields[7], "", "throughput cells stay empty for probe runs");
    // 3 repeats x 5 s x 10 Hz
    assert_eq!(fields[10], "150");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn simulate_near_point_leads_and_prints_window() {
    let dir = tmp_dir("sim-near");
    let mission = dir.join("m.conf");
    write(&mission, "[mission]\n[delay]\nrtt_start_ms = 22.9\n");
    let output = bin()
        .args(["simulate", "--mission"])
        .arg(&mission)
        .args(["--out"])
        .arg(dir.join("sim"))
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = stdout_of(&output);
    assert!(text.contains("verdict: real-time"), "{text}");
    assert!(text.contains("response window: 333.3 ms"), "{text}");
    assert!(text.contains("+37.4 ms (lead)"), "{text}");
    for file in ["mission.csv", "mission.json", "mission.svg"] {
        assert!(dir.join("sim").join(file).exists(), "{file} missing");
    }
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn simulate_lagging_link_reports_total_lag() {
    let dir = tmp_dir("sim-lag");
    let mission = dir.join("m.conf");
    write(&mission, "[mission]\n[delay]\nrtt_start_ms = 217.0\n");
    let output = bin()
        .args(["simulate", "--mission"])
        .arg(&mission)
        .args(["--out"])
        .arg(dir.join("sim"))
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = stdout_of(&output);
    assert!(text.contains("verdict: not real-time"), "{text}");
    assert!(text.contains("total lag: 4.7 s over 10.0 s"), "{text}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn simulate_rejects_bad_config_listing_keys() {
    let dir = tmp_dir("sim-bad");
    let mission = dir.join("m.conf");
    write(
        &mission,
        "[mission]\nvelocity_mps = warp\nspace_m = nine\n[delay]\nrtt_start_ms = 5\n",
    );
    let output = bin()
        .args(["simulate", "--mission"])
        .arg(&mission)
        .args(["--out"])
        .arg(dir.join("sim"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(
        err.contains("velocity_mps") && err.contains("space_m"),
        "{err}"
    );
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn report_renders_gap_row_and_is_idempotent() {
    let dir = tmp_dir("report");
    let plan = dir.join("plan.conf");
    write(&plan, QUICK_PLAN);
    let results = dir.join("results");
    assert!(bin()
        .args(["stream", "--plan"])
        .arg(&plan)
        .args(["--seed", "9", "--out"])
        .arg(&results)
        .output()
        .unwrap()
        .status
        .success());

    let render = |out: &Path| {
        let output = bin()
            .args(["report", "--results"])
            .arg(&results)
            .args(["--out"])
            .arg(out)
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "{}",
            String::from_utf8_lossy(&output.stderr)
        );
        stdout_of(&output)
    };
    let text = render(&dir.join("rep-a"));
    assert!(text.contains("latency mean gaps"), "{text}");
    // constant presets: measured gap = (22.9 + 0.806) - 4.7
    assert!(
        text.contains("FIVEG_N77_VLOS vs WIFI6_LOCAL: 19.0 ms"),
        "{text}"
    );
    render(&dir.join("rep-b"));

    let snapshot = |out: &Path| -> BTreeMap<String, Vec<u8>> {
        fs::read_dir(out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    fs::read(e.path()).unwrap(),
                )
            })
            .collect()
    };
    let a = snapshot(&dir.join("rep-a"));
    let b = snapshot(&dir.join("rep-b"));
    assert_eq!(a.len(), b.len());
    for (name, bytes) in &a {
        assert_eq!(Some(bytes), b.get(name), "{name} differs between renders");
    }
    assert!(a
        .keys()
        .any(|k| k.starts_with("latency_") && k.ends_with(".svg")));
    assert!(a
        .keys()
        .any(|k| k.starts_with("throughput_") && k.ends_with(".svg")));
    // the re-rendered table round-trips from the persisted CSVs: it matches
    // the table the stream command derived from the same files
    assert_eq!(
        fs::read(results.join("stats.csv")).unwrap(),
        a["stats.csv"],
        "report stats must equal the stream-time stats"
    );
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn report_skips_corrupt_csv_and_fails_only_when_nothing_renders() {
    let dir = tmp_dir("report-skip");
    let plan = dir.join("plan.conf");
    write(&plan, QUICK_PLAN);
    let results = dir.join("results");
    assert!(bin()
        .args(["stream", "--plan"])
        .arg(&plan)
        .args(["--out"])
        .arg(&results)
        .output()
        .unwrap()
        .status
        .success());

    // corrupt one rtt file: its run is skipped, the rest still renders
    let victim = fs::read_dir(&results)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with("_rtt.csv"))
        .unwrap();
    fs::write(&victim, "garbage\n").unwrap();
    let output = bin()
        .args(["report", "--results"])
        .arg(&results)
        .args(["--out"])
        .arg(dir.join("rep"))
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = stdout_of(&output);
    assert!(text.contains("skipped:"), "{text}");

    // empty directory: nothing renders, validation exit
    let empty = dir.join("nothing");
    fs::create_dir_all(&empty).unwrap();
    let output = bin()
        .args(["report", "--results"])
        .arg(&empty)
        .args(["--out"])
        .arg(dir.join("rep2"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn presets_table_shows_encoded_gap() {
    let output = bin().arg("presets").output().unwrap();
    assert!(output.status.success());
    let text = stdout_of(&output);
    assert!(
        text.contains("FIVEG_N77_VLOS vs WIFI6_LOCAL: 18.2"),
        "{text}"
    );
    assert!(text.contains("provenance:"), "{text}");
}

#[test]
fn unknown_preset_file_is_validation_error() {
    let dir = tmp_dir("bad-presets");
    let plan = dir.join("plan.conf");
    write(&plan, QUICK_PLAN);
    let presets = dir.join("p.presets");
    write(
        &presets,
        "[ONLY]\nuplink_cap_mbps = 1\ndownlink_cap_mbps = 1\nrtt_mean_ms = 5\n",
    );
    let output = bin()
        .args(["stream", "--plan"])
        .arg(&plan)
        .args(["--presets"])
        .arg(&presets)
        .args(["--out"])
        .arg(dir.join("results"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("unknown preset"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn udp_transport_against_serve_round_trips() {
    let dir = tmp_dir("udp");
    let plan = dir.join("plan.conf");
    write(
        &plan,
        "[plan]\nrepeats = 1\nduration_s = 1\nnetworks = WIFI6_LOCAL\nprofiles = RGB1\n\
         [location LAB]\ndistance_to_ap_m = 1\n",
    );
    let mut serve = bin()
        .args([
            "serve",
            "--bind",
            "127.0.0.1",
            "--echo-port",
            "0",
            "--sink-port",
            "0",
            "--duration-s",
            "30",
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut reader = BufReader::new(serve.stdout.take().unwrap());
    let mut parse_addr = || {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        line.rsplit(' ').next().unwrap().trim().to_string()
    };
    let echo = parse_addr();
    let sink = parse_addr();

    let output = bin()
        .args(["stream", "--plan"])
        .arg(&plan)
        .args([
            "--transport",
            "udp",
            "--echo",
            &echo,
            "--sink",
            &sink,
            "--out",
        ])
        .arg(dir.join("results"))
        .output()
        .unwrap();
    serve.kill().unwrap();
    let _ = serve.wait();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stats = fs::read_to_string(dir.join("results/stats.csv")).unwrap();
    let row = stats.lines().find(|l| l.contains("combined")).unwrap();
    let lat_mean: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
    assert!(lat_mean < 5.0, "loopback latency should be tiny: {row}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn udp_without_peer_is_transport_error() {
    let dir = tmp_dir("udp-dead");
    let plan = dir.join("plan.conf");
    write(
        &plan,
        "[plan]\nrepeats = 1\nduration_s = 1\nnetworks = WIFI6_LOCAL\nprofiles = RGB1\n\
         [location LAB]\ndistance_to_ap_m = 1\n",
    );
    // port 9 (discard) with nobody listening: every echo is lost, the sink
    // never answers, so the stream run fails and nothing is persisted
    let output = bin()
        .args(["stream", "--plan"])
        .arg(&plan)
        .args([
            "--transport",
            "udp",
            "--echo",
            "127.0.0.1:9",
            "--sink",
            "127.0.0.1:9",
            "--out",
        ])
        .arg(dir.join("results"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(
        err.contains("LAB"),
        "failure report names the location: {err}"
    );
    fs::remove_dir_all(&dir).unwrap();
}
