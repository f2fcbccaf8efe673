//! Plan execution: drives the probe/stream protocol over every
//! (location, network, profile) combination and persists the results.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use fieldlink::channel::PresetCatalog;
use fieldlink::loadgen::{
    run_probe_protocol, run_protocol, RunRecord, SessionError, StreamProfile, Transport,
};
use fieldlink::store;

use crate::plan::ExperimentPlan;
use crate::table;
use crate::CliError;

#[derive(Debug, Clone, Copy)]
pub enum TransportKind {
    Emulated,
    Udp {
        echo: SocketAddr,
        sink: Option<SocketAddr>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionMode {
    Probe,
    Stream,
}

pub struct ExecArgs {
    pub plan: ExperimentPlan,
    pub catalog: PresetCatalog,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub transport: TransportKind,
    pub probe_rate_hz: f64,
}

struct PlanItem {
    index: u64,
    location: String,
    network: String,
    profile: Option<StreamProfile>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Every run gets its own stream of randomness, derived from the base seed
/// and the item/run coordinates, so runs are independent yet reproducible.
fn derive_seed(base: u64, item: u64, run: u32) -> u64 {
    splitmix64(base ^ splitmix64(item.wrapping_mul(2) + 1) ^ splitmix64((run as u64) * 2 + 1))
}

fn item_failure(item: &PlanItem, err: &SessionError) -> String {
    let profile = item.profile.as_ref().map_or("PROBE", |p| p.name.as_str());
    format!(
        "{} / {} / {}: {}",
        item.location, item.network, profile, err
    )
}

/// Runs the plan and persists every completed record. Returns the stats
/// table printed by the command.
pub fn execute(args: &ExecArgs, mode: SessionMode) -> Result<String, CliError> {
    args.plan
        .validate(&args.catalog, mode == SessionMode::Stream)?;

    let mut items = Vec::new();
    let mut index = 0u64;
    for location in &args.plan.locations {
        for network in &args.plan.networks {
            match mode {
                SessionMode::Probe => {
                    items.push(PlanItem {
                        index,
                        location: location.label.clone(),
                        network: network.clone(),
                        profile: None,
                    });
                    index += 1;
                }
                SessionMode::Stream => {
                    for profile in &args.plan.profiles {
                        items.push(PlanItem {
                            index,
                            location: location.label.clone(),
                            network: network.clone(),
                            profile: StreamProfile::by_name(profile),
                        });
                        index += 1;
                    }
                }
            }
        }
    }

    let results: Vec<(usize, Result<Vec<RunRecord>, SessionError>)> = match args.transport {
        // emulated items are independent seeded computations; run them on
        // every core and stitch the results back in plan order
        TransportKind::Emulated => {
            let collected = Mutex::new(Vec::new());
            let workers = std::thread::available_parallelism()
                .map_or(1, |n| n.get())
                .min(items.len().max(1));
            std::thread::scope(|scope| {
                for worker in 0..workers {
                    let items = &items;
                    let collected = &collected;
                    scope.spawn(move || {
                        for (i, item) in items.iter().enumerate() {
                            if i % workers != worker {
                                continue;
                            }
                            let outcome = run_item(item, args, mode);
                            collected.lock().unwrap().push((i, outcome));
                        }
                    });
                }
            });
            let mut results = collected.into_inner().unwrap();
            results.sort_by_key(|(i, _)| *i);
            results
        }
        // one network at a time on real transports: runs must not
        // interfere with each other
        TransportKind::Udp { .. } => items
            .iter()
            .enumerate()
            .map(|(i, item)| (i, run_item(item, args, mode)))
            .collect(),
    };

    let mut failures = Vec::new();
    let mut persisted = 0usize;
    for (i, outcome) in results {
        let item = &items[i];
        let records = match outcome {
            Ok(records) => records,
            Err(SessionError::Aborted {
                completed,
                source,
                failed_run,
            }) => {
                failures.push(item_failure(
                    item,
                    &SessionError::Aborted {
                        failed_run,
                        completed: Vec::new(),
                        source,
                    },
                ));
                completed
            }
            Err(e) => {
                failures.push(item_failure(item, &e));
                Vec::new()
            }
        };
        for record in records {
            let record = record.with_labels(&item.location, &item.network);
            store::write_run(&args.out_dir, &record).map_err(CliError::transport)?;
            persisted += 1;
        }
    }

    if !failures.is_empty() && persisted == 0 {
        return Err(CliError::Transport(format!(
            "every plan item failed:\n{}",
            failures.join("\n")
        )));
    }

    // stats are recomputed from what landed on disk, never from memory
    let (stored, skipped) = store::read_runs(&args.out_dir).map_err(CliError::transport)?;
    let rows = table::stats_rows(&stored);
    let stats_csv = table::stats_csv(&rows);
    write(&args.out_dir.join("stats.csv"), &stats_csv)?;
    write(&args.out_dir.join("stats.json"), &table::stats_json(&rows))?;
    let locations: Vec<String> = args
        .plan
        .locations
        .iter()
        .map(|l| format!("{} ({} m to AP)", l.label, l.distance_to_ap_m))
        .collect();
    let mut rendered = format!("locations: {}\n\n", locations.join(", "));
    rendered.push_str(&table::text_table(&rows));
    rendered.push_str(&format!(
        "\n{persisted} run(s) persisted to {}\n",
        args.out_dir.display()
    ));
    for note in &skipped {
        rendered.push_str(&format!(
            "skipped: {} ({})\n",
            note.path.display(),
            note.reason
        ));
    }

    if !failures.is_empty() {
        return Err(CliError::Partial(format!(
            "{} of {} plan item(s) failed:\n{}\npartial results in {}",
            failures.len(),
            items.len(),
            failures.join("\n"),
            args.out_dir.display()
        )));
    }
    Ok(rendered)
}

fn run_item(
    item: &PlanItem,
    args: &ExecArgs,
    mode: SessionMode,
) -> Result<Vec<RunRecord>, SessionError> {
    let make_transport = |run: u32| -> Result<Transport, SessionError> {
        let seed = derive_seed(args.seed, item.index, run);
        match args.transport {
            TransportKind::Emulated => {
                let preset = args.catalog.get(&item.network)?;
                Transport::emulated(&preset.profile, seed)
            }
            TransportKind::Udp { echo, sink } => Transport::udp(echo, sink, seed),
        }
    };
    match mode {
        SessionMode::Probe => run_probe_protocol(
            make_transport,
            args.plan.repeats,
            args.plan.duration_s,
            args.probe_rate_hz,
        ),
        SessionMode::Stream => {
            let profile = item.profile.clone().expect("stream items carry a profile");
            run_protocol(
                make_transport,
                &profile,
                args.plan.repeats,
                args.plan.duration_s,
            )
        }
    }
}

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(CliError::transport)?;
    }
    std::fs::write(path, text).map_err(CliError::transport)
}
