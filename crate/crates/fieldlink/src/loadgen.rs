//! Probe and stream load generation over a transport.
//!
//! Two transports sit behind the same operations: real UDP sockets (an echo
//! peer for probes, a sink peer for streams) and the emulated channel. The
//! emulated path runs on a virtual clock, so a "30 second" run costs
//! milliseconds of wall time and identical seeds reproduce identical
//! records, byte for byte, all the way into persisted CSV.

use std::collections::{BTreeMap, VecDeque};
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, ChannelProfile, RttSampler};
use crate::wire::{ChunkHeader, ProbeHeader, CHUNK_PAYLOAD_BYTES, REPORT_REQUEST};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("transport: {0}")]
    Transport(#[from] io::Error),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("invalid stream profile: {0}")]
    InvalidProfile(String),
    #[error("invalid session parameter: {0}")]
    InvalidParameter(String),
    #[error("stream sink did not answer the delivery-report request")]
    NoSinkReport,
    #[error("no stream sink configured on this transport")]
    NoSinkConfigured,
    #[error("protocol aborted at run {failed_run} with {} completed run(s): {source}", completed.len())]
    Aborted {
        failed_run: u32,
        completed: Vec<RunRecord>,
        source: Box<SessionError>,
    },
}

/// Default probe cadence when none is given.
pub const DEFAULT_PROBE_RATE_HZ: f64 = 10.0;
/// Echoes missing after this long count as lost, excluded from statistics.
pub const DEFAULT_PROBE_TIMEOUT_S: f64 = 2.0;
/// Sender-side queue bound, in frames per stream. A live sender sends late
/// frames immediately but drops once the backlog is hopeless.
pub const SEND_QUEUE_FRAMES: usize = 90;

/// Per-frame payload model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameModel {
    /// Compressed colour video: per-frame rate drawn uniformly per frame.
    /// The default 2-12 Mbps bounds are a configuration choice (scene-driven
    /// compression was only ever observed to be variable, not bounded).
    Variable { min_mbps: f64, max_mbps: f64 },
    /// Depth-augmented video: compressed at a fixed rate.
    Static { rate_mbps: f64 },
}

impl FrameModel {
    /// Payload of one frame in bits: rate divided across the frame cadence.
    fn frame_bits<R: Rng>(&self, fps: f64, rng: &mut R) -> u64 {
        let mbps = match *self {
            FrameModel::Static { rate_mbps } => rate_mbps,
            FrameModel::Variable { min_mbps, max_mbps } => {
                if max_mbps > min_mbps {
                    rng.random_range(min_mbps..=max_mbps)
                } else {
                    min_mbps
                }
            }
        };
        (mbps * 1e6 / fps).round() as u64
    }
}

/// A load shape: how many concurrent streams, at what frame cadence, with
/// which per-frame payload model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamProfile {
    pub name: String,
    pub stream_count: u32,
    pub fps: f64,
    pub frame_model: FrameModel,
}

impl StreamProfile {
    /// Single colour stream: typical, medium load.
    pub fn rgb1() -> Self {
        Self {
            name: "RGB1".into(),
            stream_count: 1,
            fps: 30.0,
            frame_model: FrameModel::Variable {
                min_mbps: 2.0,
                max_mbps: 12.0,
            },
        }
    }

    /// Four concurrent colour streams: heavy, contended load.
    pub fn rgb4() -> Self {
        Self {
            stream_count: 4,
            name: "RGB4".into(),
            ..Self::rgb1()
        }
    }

    /// One depth-augmented stream: constant heavy load at a static rate.
    pub fn rgbd1() -> Self {
        Self {
            name: "RGBD1".into(),
            stream_count: 1,
            fps: 30.0,
            frame_model: FrameModel::Static { rate_mbps: 144.0 },
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "RGB1" => Some(Self::rgb1()),
            "RGB4" => Some(Self::rgb4()),
            "RGBD1" => Some(Self::rgbd1()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.stream_count == 0 {
            return Err(SessionError::InvalidProfile(
                "stream_count must be >= 1".into(),
            ));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(SessionError::InvalidProfile(format!(
                "fps must be > 0, got {}",
                self.fps
            )));
        }
        match self.frame_model {
            FrameModel::Static { rate_mbps } => {
                if !(rate_mbps.is_finite() && rate_mbps >= 0.0) {
                    return Err(SessionError::InvalidProfile(format!(
                        "static rate must be >= 0, got {rate_mbps}"
                    )));
                }
            }
            FrameModel::Variable { min_mbps, max_mbps } => {
                if !(min_mbps.is_finite()
                    && max_mbps.is_finite()
                    && min_mbps >= 0.0
                    && max_mbps >= min_mbps)
                {
                    return Err(SessionError::InvalidProfile(format!(
                        "variable rate bounds must satisfy 0 <= min <= max, got [{min_mbps}, {max_mbps}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One probe observation. A lost echo keeps its slot with `rtt_ms: None`;
/// it is never recorded as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RttSample {
    pub time_s: f64,
    pub rtt_ms: Option<f64>,
}

/// Raw record of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub location_label: String,
    pub network_label: String,
    pub profile_name: String,
    pub stream_count: u32,
    pub run_index: u32,
    pub seed: u64,
    pub duration_s: f64,
    pub rtt_samples: Vec<RttSample>,
    /// Per-second data actually carried by the link, totalled over streams.
    pub sent_mbps_series: Vec<f64>,
    /// Per-second completed frames, one inner entry per stream.
    pub delivered_fps_series: Vec<Vec<f64>>,
    pub dropped_frames: u64,
    pub lost_probes: u64,
}

impl RunRecord {
    /// Wraps a probe-only session (no stream load) as a record.
    pub fn probe_only(samples: Vec<RttSample>, duration_s: f64, seed: u64) -> Self {
        let lost_probes = samples.iter().filter(|s| s.rtt_ms.is_none()).count() as u64;
        Self {
            location_label: String::new(),
            network_label: String::new(),
            profile_name: "PROBE".into(),
            stream_count: 0,
            run_index: 0,
            seed,
            duration_s,
            rtt_samples: samples,
            sent_mbps_series: Vec::new(),
            delivered_fps_series: Vec::new(),
            dropped_frames: 0,
            lost_probes,
        }
    }

    pub fn with_labels(mut self, location: &str, network: &str) -> Self {
        self.location_label = location.to_string();
        self.network_label = network.to_string();
        self
    }

    /// RTT values of the echoes that actually came back.
    pub fn present_rtts(&self) -> Vec<f64> {
        self.rtt_samples.iter().filter_map(|s| s.rtt_ms).collect()
    }

    /// Mean per-stream delivered FPS for one second of the run.
    pub fn mean_fps_at(&self, second: usize) -> f64 {
        let per_stream = &self.delivered_fps_series[second];
        if per_stream.is_empty() {
            0.0
        } else {
            per_stream.iter().sum::<f64>() / per_stream.len() as f64
        }
    }

    pub fn total_sent_bits(&self) -> f64 {
        self.sent_mbps_series.iter().sum::<f64>() * 1e6
    }
}

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

/// The emulated channel behind the same interface as the socket transport.
/// All time is virtual; nothing sleeps.
pub struct EmulatedTransport {
    profile: ChannelProfile,
    sampler: RttSampler,
    load_rng: ChaCha8Rng,
    seed: u64,
}

impl EmulatedTransport {
    pub fn new(profile: &ChannelProfile, seed: u64) -> Result<Self, SessionError> {
        let sampler = profile.sampler(seed)?;
        // load generation draws from its own stream so probe sampling and
        // frame sizing cannot perturb each other
        let load_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
        Ok(Self {
            profile: profile.clone(),
            sampler,
            load_rng,
            seed,
        })
    }

    /// One datagram round trip: the encoded probe goes out, the echoed
    /// header comes back, or the packet is lost.
    fn exchange(&mut self, datagram: &[u8]) -> Option<(Vec<u8>, f64)> {
        if self.sampler.packet_lost() {
            return None;
        }
        let reply = ProbeHeader::echo_reply(datagram).ok()?;
        Some((reply.to_vec(), self.sampler.sample_rtt()))
    }
}

/// Real datagram sockets: probes against an echo peer, stream load against
/// a sink peer that counts delivery and answers report requests.
pub struct UdpTransport {
    probe_socket: UdpSocket,
    stream_addr: Option<SocketAddr>,
    load_rng: ChaCha8Rng,
    seed: u64,
    label: String,
}

impl UdpTransport {
    pub fn new(
        echo_addr: SocketAddr,
        stream_addr: Option<SocketAddr>,
        seed: u64,
    ) -> Result<Self, SessionError> {
        let probe_socket = UdpSocket::bind(("0.0.0.0", 0))?;
        probe_socket.connect(echo_addr)?;
        Ok(Self {
            probe_socket,
            stream_addr,
            load_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15),
            seed,
            label: format!("udp:{echo_addr}"),
        })
    }
}

pub enum Transport {
    Emulated(Box<EmulatedTransport>),
    Udp(Box<UdpTransport>),
}

impl Transport {
    pub fn emulated(profile: &ChannelProfile, seed: u64) -> Result<Self, SessionError> {
        Ok(Self::Emulated(Box::new(EmulatedTransport::new(
            profile, seed,
        )?)))
    }

    pub fn udp(
        echo_addr: SocketAddr,
        stream_addr: Option<SocketAddr>,
        seed: u64,
    ) -> Result<Self, SessionError> {
        Ok(Self::Udp(Box::new(UdpTransport::new(
            echo_addr,
            stream_addr,
            seed,
        )?)))
    }

    pub fn network_label(&self) -> &str {
        match self {
            Self::Emulated(t) => &t.profile.name,
            Self::Udp(t) => &t.label,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Emulated(t) => t.seed,
            Self::Udp(t) => t.seed,
        }
    }
}

// ---------------------------------------------------------------------------
// Latency probing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct ProbeOptions {
    pub rate_hz: f64,
    pub padding_bytes: usize,
    pub timeout_s: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            rate_hz: DEFAULT_PROBE_RATE_HZ,
            padding_bytes: 0,
            timeout_s: DEFAULT_PROBE_TIMEOUT_S,
        }
    }
}

/// Sends echo probes at a fixed cadence for `duration_s` and returns one
/// sample per probe: round-trip time, or missing for a lost echo.
pub fn run_latency_probe(
    transport: &mut Transport,
    duration_s: f64,
    rate_hz: f64,
) -> Result<Vec<RttSample>, SessionError> {
    run_latency_probe_with(
        transport,
        duration_s,
        &ProbeOptions {
            rate_hz,
            ..Default::default()
        },
    )
}

pub fn run_latency_probe_with(
    transport: &mut Transport,
    duration_s: f64,
    opts: &ProbeOptions,
) -> Result<Vec<RttSample>, SessionError> {
    if !(opts.rate_hz.is_finite() && opts.rate_hz > 0.0) {
        return Err(SessionError::InvalidParameter(format!(
            "probe rate must be > 0 Hz, got {}",
            opts.rate_hz
        )));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(SessionError::InvalidParameter(format!(
            "duration must be > 0 s, got {duration_s}"
        )));
    }
    match transport {
        Transport::Emulated(t) => Ok(probe_emulated(t, duration_s, opts)),
        Transport::Udp(t) => probe_udp(t, duration_s, opts),
    }
}

fn probe_emulated(
    t: &mut EmulatedTransport,
    duration_s: f64,
    opts: &ProbeOptions,
) -> Vec<RttSample> {
    let count = (duration_s * opts.rate_hz).round() as u64;
    let mut samples = Vec::with_capacity(count as usize);
    for seq in 0..count {
        let time_s = seq as f64 / opts.rate_hz;
        let header = ProbeHeader {
            seq,
            send_timestamp_ns: (time_s * 1e9) as u64,
        };
        let datagram = header.encode(opts.padding_bytes);
        let rtt_ms = t.exchange(&datagram).map(|(reply, rtt)| {
            debug_assert_eq!(ProbeHeader::decode(&reply).unwrap().seq, seq);
            rtt
        });
        samples.push(RttSample { time_s, rtt_ms });
    }
    samples
}

fn probe_udp(
    t: &mut UdpTransport,
    duration_s: f64,
    opts: &ProbeOptions,
) -> Result<Vec<RttSample>, SessionError> {
    let count = (duration_s * opts.rate_hz).round() as u64;
    let period = 1.0 / opts.rate_hz;
    let start = Instant::now();
    let mut results: Vec<Option<f64>> = vec![None; count as usize];
    let mut received: u64 = 0;
    let mut buf = [0u8; 65_536];

    let mut poll = |deadline: f64,
                    results: &mut Vec<Option<f64>>,
                    received: &mut u64|
     -> Result<(), SessionError> {
        loop {
            let now = start.elapsed().as_secs_f64();
            let remaining = deadline - now;
            if remaining <= 0.0 {
                return Ok(());
            }
            t.probe_socket
                .set_read_timeout(Some(Duration::from_secs_f64(remaining.min(0.02))))?;
            match t.probe_socket.recv(&mut buf) {
                Ok(len) => {
                    if let Ok(header) = ProbeHeader::decode(&buf[..len]) {
                        let now_ns = start.elapsed().as_nanos() as u64;
                        if (header.seq as usize) < results.len()
                            && results[header.seq as usize].is_none()
                        {
                            let rtt_ms =
                                now_ns.saturating_sub(header.send_timestamp_ns) as f64 / 1e6;
                            results[header.seq as usize] = Some(rtt_ms);
                            *received += 1;
                        }
                    }
                }
                Err(e)
                    if e.kind() == io::ErrorKind::WouldBlock
                        || e.kind() == io::ErrorKind::TimedOut => {}
                Err(e) => return Err(e.into()),
            }
        }
    };

    for seq in 0..count {
        // answers are collected while pacing, so slow echoes overlap the
        // next probes instead of throttling the send rate
        poll(seq as f64 * period, &mut results, &mut received)?;
        let header = ProbeHeader {
            seq,
            send_timestamp_ns: start.elapsed().as_nanos() as u64,
        };
        t.probe_socket.send(&header.encode(opts.padding_bytes))?;
    }
    let deadline = duration_s + opts.timeout_s;
    while received < count && start.elapsed().as_secs_f64() < deadline {
        poll(
            (start.elapsed().as_secs_f64() + 0.02).min(deadline),
            &mut results,
            &mut received,
        )?;
    }

    Ok(results
        .into_iter()
        .enumerate()
        .map(|(i, rtt_ms)| RttSample {
            time_s: i as f64 * period,
            rtt_ms,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Stream load
// ---------------------------------------------------------------------------

/// Runs one stream-load experiment and probes latency at the default
/// cadence while the stream is up, mirroring how the field runs recorded
/// both metrics at once.
pub fn run_throughput_test(
    transport: &mut Transport,
    profile: &StreamProfile,
    duration_s: f64,
) -> Result<RunRecord, SessionError> {
    profile.validate()?;
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(SessionError::InvalidParameter(format!(
            "duration must be > 0 s, got {duration_s}"
        )));
    }
    match transport {
        Transport::Emulated(t) => Ok(stream_emulated(t, profile, duration_s)),
        Transport::Udp(t) => stream_udp(t, profile, duration_s),
    }
}

/// Fluid per-second accounting on the virtual clock. Frames queue at the
/// sender, the link drains at the capacity cap with an equal share per
/// backlogged stream, and whole frames count as delivered when their last
/// bit drains.
fn stream_emulated(
    t: &mut EmulatedTransport,
    profile: &StreamProfile,
    duration_s: f64,
) -> RunRecord {
    struct StreamState {
        /// Remaining bits of each queued frame, front partially drained.
        pending: VecDeque<f64>,
    }

    let seconds = duration_s.ceil() as usize;
    let cap_bits = t.profile.uplink_cap_mbps * 1e6;
    let fps = profile.fps;
    let n_streams = profile.stream_count as usize;
    let mut streams: Vec<StreamState> = (0..n_streams)
        .map(|_| StreamState {
            pending: VecDeque::new(),
        })
        .collect();

    let probe_rate = DEFAULT_PROBE_RATE_HZ;
    let probe_count = (duration_s * probe_rate).round() as u64;
    let mut next_probe: u64 = 0;

    let mut sent_mbps_series = Vec::with_capacity(seconds);
    let mut delivered_fps_series = Vec::with_capacity(seconds);
    let mut rtt_samples = Vec::with_capacity(probe_count as usize);
    let mut dropped_frames = 0u64;
    let mut lost_probes = 0u64;

    for sec in 0..seconds {
        // frames scheduled in [sec, sec+1), same cadence on every stream
        let first = (sec as f64 * fps).ceil() as u64;
        let last = (((sec + 1) as f64 * fps).ceil() as u64).min((duration_s * fps).round() as u64);
        for _frame in first..last {
            for state in streams.iter_mut() {
                let bits = profile.frame_model.frame_bits(fps, &mut t.load_rng);
                if bits == 0 {
                    continue; // zero offered load puts nothing on the wire
                }
                if t.sampler.packet_lost() {
                    dropped_frames += 1;
                    continue;
                }
                if state.pending.len() >= SEND_QUEUE_FRAMES {
                    dropped_frames += 1; // backpressure: drop, never stretch
                    continue;
                }
                state.pending.push_back(bits as f64);
            }
        }

        // drain the second's capacity budget with an equal share per
        // backlogged stream (iterative water-fill)
        let mut sent_bits = vec![0.0f64; n_streams];
        let mut completed = vec![0u32; n_streams];
        let mut budget = cap_bits;
        loop {
            let active: Vec<usize> = (0..n_streams)
                .filter(|&i| !streams[i].pending.is_empty())
                .collect();
            if active.is_empty() || budget <= 1e-6 {
                break;
            }
            let share = budget / active.len() as f64;
            let mut any_limited = false;
            for &i in &active {
                let mut allowance = share;
                let state = &mut streams[i];
                while allowance > 1e-9 {
                    let Some(front) = state.pending.front_mut() else {
                        any_limited = true;
                        break;
                    };
                    if *front <= allowance {
                        allowance -= *front;
                        sent_bits[i] += *front;
                        state.pending.pop_front();
                        completed[i] += 1;
                    } else {
                        *front -= allowance;
                        sent_bits[i] += allowance;
                        allowance = 0.0;
                    }
                }
                budget -= share - allowance;
            }
            if !any_limited {
                break; // every active stream consumed its full share
            }
        }

        sent_mbps_series.push(sent_bits.iter().sum::<f64>() / 1e6);
        delivered_fps_series.push(completed.iter().map(|&c| c as f64).collect());

        // probes scheduled inside this second
        while next_probe < probe_count && (next_probe as f64 / probe_rate) < (sec + 1) as f64 {
            let time_s = next_probe as f64 / probe_rate;
            let header = ProbeHeader {
                seq: next_probe,
                send_timestamp_ns: (time_s * 1e9) as u64,
            };
            let rtt_ms = t.exchange(&header.encode(0)).map(|(_, rtt)| rtt);
            if rtt_ms.is_none() {
                lost_probes += 1;
            }
            rtt_samples.push(RttSample { time_s, rtt_ms });
            next_probe += 1;
        }
    }

    RunRecord {
        location_label: String::new(),
        network_label: t.profile.name.clone(),
        profile_name: profile.name.clone(),
        stream_count: profile.stream_count,
        run_index: 0,
        seed: t.seed,
        duration_s,
        rtt_samples,
        sent_mbps_series,
        delivered_fps_series,
        dropped_frames,
        lost_probes,
    }
}

/// Per-second delivery counters reported back by a [`StreamSink`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SinkReport {
    /// [second][stream_id as string] -> payload bytes received.
    pub bytes: Vec<BTreeMap<String, u64>>,
    /// [second][stream_id as string] -> frames fully reassembled.
    pub frames: Vec<BTreeMap<String, u32>>,
}

fn stream_udp(
    t: &mut UdpTransport,
    profile: &StreamProfile,
    duration_s: f64,
) -> Result<RunRecord, SessionError> {
    let sink_addr = t.stream_addr.ok_or(SessionError::NoSinkConfigured)?;
    let seconds = duration_s.ceil() as usize;
    let fps = profile.fps;
    let frame_total = (duration_s * fps).round() as u64;
    let n_streams = profile.stream_count;

    // pre-draw frame sizes so the wall-clock sender stays deterministic
    // with respect to the seed
    let mut frame_bits: Vec<Vec<u64>> = Vec::with_capacity(frame_total as usize);
    for _ in 0..frame_total {
        let per_stream: Vec<u64> = (0..n_streams)
            .map(|_| profile.frame_model.frame_bits(fps, &mut t.load_rng))
            .collect();
        frame_bits.push(per_stream);
    }

    let send_socket = UdpSocket::bind(("0.0.0.0", 0))?;
    send_socket.connect(sink_addr)?;
    let sent_counter: Arc<std::sync::Mutex<Vec<f64>>> =
        Arc::new(std::sync::Mutex::new(vec![0.0; seconds]));
    let sent_counter_tx = Arc::clone(&sent_counter);
    let dropped = Arc::new(std::sync::atomic::AtomicU64::new(0));
    let dropped_tx = Arc::clone(&dropped);

    let sender: JoinHandle<Result<(), io::Error>> = thread::spawn(move || {
        let start = Instant::now();
        let zeros = vec![0u8; CHUNK_PAYLOAD_BYTES];
        for (frame_idx, per_stream) in frame_bits.iter().enumerate() {
            let due = frame_idx as f64 / fps;
            let now = start.elapsed().as_secs_f64();
            if due > now {
                thread::sleep(Duration::from_secs_f64(due - now));
            }
            // late frames fall through and go out immediately, never skipped
            for (stream_id, &bits) in per_stream.iter().enumerate() {
                let bytes = bits.div_ceil(8) as usize;
                if bytes == 0 {
                    continue;
                }
                let chunk_count = bytes.div_ceil(CHUNK_PAYLOAD_BYTES) as u16;
                let mut remaining = bytes;
                for chunk_index in 0..chunk_count {
                    let payload_len = remaining.min(CHUNK_PAYLOAD_BYTES);
                    remaining -= payload_len;
                    let header = ChunkHeader {
                        stream_id: stream_id as u16,
                        frame_seq: frame_idx as u64,
                        chunk_index,
                        chunk_count,
                        payload_len: payload_len as u16,
                    };
                    let mut datagram = Vec::with_capacity(16 + payload_len);
                    datagram.extend_from_slice(&header.encode());
                    datagram.extend_from_slice(&zeros[..payload_len]);
                    match send_socket.send(&datagram) {
                        Ok(_) => {
                            let sec = (start.elapsed().as_secs_f64() as usize).min(seconds - 1);
                            let mut counter = sent_counter_tx.lock().unwrap();
                            counter[sec] += (payload_len * 8) as f64 / 1e6;
                        }
                        Err(_) => {
                            dropped_tx.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                }
            }
        }
        Ok(())
    });

    // probe while the stream is up
    let rtt_samples = probe_udp(t, duration_s, &ProbeOptions::default())?;
    sender
        .join()
        .map_err(|_| SessionError::InvalidParameter("stream sender thread panicked".into()))??;

    // ask the sink what actually arrived
    let report = request_sink_report(sink_addr)?;
    let mut delivered_fps_series = vec![vec![0.0; n_streams as usize]; seconds];
    for (sec, frames) in report.frames.iter().enumerate().take(seconds) {
        for (stream, count) in frames {
            if let Ok(stream_idx) = stream.parse::<usize>() {
                if stream_idx < n_streams as usize {
                    delivered_fps_series[sec][stream_idx] = *count as f64;
                }
            }
        }
    }

    let sent_mbps_series = Arc::try_unwrap(sent_counter)
        .map(|m| m.into_inner().unwrap())
        .unwrap_or_else(|arc| arc.lock().unwrap().clone());
    let lost_probes = rtt_samples.iter().filter(|s| s.rtt_ms.is_none()).count() as u64;
    Ok(RunRecord {
        location_label: String::new(),
        network_label: t.label.clone(),
        profile_name: profile.name.clone(),
        stream_count: profile.stream_count,
        run_index: 0,
        seed: t.seed,
        duration_s,
        rtt_samples,
        sent_mbps_series,
        delivered_fps_series,
        dropped_frames: dropped.load(Ordering::Relaxed),
        lost_probes,
    })
}

fn request_sink_report(sink_addr: SocketAddr) -> Result<SinkReport, SessionError> {
    let socket = UdpSocket::bind(("0.0.0.0", 0))?;
    socket.connect(sink_addr)?;
    socket.set_read_timeout(Some(Duration::from_millis(400)))?;
    let mut buf = vec![0u8; 256 * 1024];
    for _ in 0..5 {
        socket.send(REPORT_REQUEST)?;
        match socket.recv(&mut buf) {
            Ok(len) => {
                if let Ok(report) = serde_json::from_slice::<SinkReport>(&buf[..len]) {
                    return Ok(report);
                }
            }
            Err(e)
                if e.kind() == io::ErrorKind::WouldBlock || e.kind() == io::ErrorKind::TimedOut => {
            }
            Err(e) => return Err(e.into()),
        }
    }
    Err(SessionError::NoSinkReport)
}

// ---------------------------------------------------------------------------
// The measurement protocol: fixed-duration runs, repeated
// ---------------------------------------------------------------------------

/// Runs the full protocol: `repeats` independent fixed-duration runs of the
/// given stream profile, each on a freshly seeded transport from the
/// factory. A failed run aborts with the completed records attached.
pub fn run_protocol<F>(
    mut make_transport: F,
    profile: &StreamProfile,
    repeats: u32,
    duration_s: f64,
) -> Result<Vec<RunRecord>, SessionError>
where
    F: FnMut(u32) -> Result<Transport, SessionError>,
{
    if repeats == 0 {
        return Err(SessionError::InvalidParameter(
            "repeats must be >= 1".into(),
        ));
    }
    let mut records = Vec::with_capacity(repeats as usize);
    for run_index in 0..repeats {
        let result = make_transport(run_index)
            .and_then(|mut t| run_throughput_test(&mut t, profile, duration_s));
        match result {
            Ok(mut record) => {
                record.run_index = run_index;
                records.push(record);
            }
            Err(e) => {
                return Err(SessionError::Aborted {
                    failed_run: run_index,
                    completed: records,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(records)
}

/// Probe-only variant of the protocol, for latency-only sessions.
pub fn run_probe_protocol<F>(
    mut make_transport: F,
    repeats: u32,
    duration_s: f64,
    rate_hz: f64,
) -> Result<Vec<RunRecord>, SessionError>
where
    F: FnMut(u32) -> Result<Transport, SessionError>,
{
    if repeats == 0 {
        return Err(SessionError::InvalidParameter(
            "repeats must be >= 1".into(),
        ));
    }
    let mut records = Vec::with_capacity(repeats as usize);
    for run_index in 0..repeats {
        let result = make_transport(run_index).and_then(|mut t| {
            let samples = run_latency_probe(&mut t, duration_s, rate_hz)?;
            let mut record = RunRecord::probe_only(samples, duration_s, t.seed());
            record.network_label = t.network_label().to_string();
            record.run_index = run_index;
            Ok(record)
        });
        match result {
            Ok(record) => records.push(record),
            Err(e) => {
                return Err(SessionError::Aborted {
                    failed_run: run_index,
                    completed: records,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Server roles: echo peer and stream sink
// ---------------------------------------------------------------------------

/// Echo peer for probes: returns each probe's 16-byte header unchanged.
pub struct EchoServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl EchoServer {
    pub fn spawn(bind: &str) -> io::Result<Self> {
        let socket = UdpSocket::bind(bind)?;
        socket.set_read_timeout(Some(Duration::from_millis(50)))?;
        let addr = socket.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop_rx = Arc::clone(&stop);
        let handle = thread::spawn(move || {
            let mut buf = [0u8; 65_536];
            while !stop_rx.load(Ordering::Relaxed) {
                match socket.recv_from(&mut buf) {
                    Ok((len, peer)) => {
                        if let Ok(reply) = ProbeHeader::echo_reply(&buf[..len]) {
                            let _ = socket.send_to(&reply, peer);
                        }
                    }
                    Err(e)
                        if e.kind() == io::ErrorKind::WouldBlock
                            || e.kind() == io::ErrorKind::TimedOut => {}
                    Err(_) => break,
                }
            }
        });
        Ok(Self {
            addr,
            stop,
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for EchoServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

/// Stream sink: reassembles chunked frames, counts per-second delivery per
/// stream, and answers [`REPORT_REQUEST`] datagrams with a JSON
/// [`SinkReport`]. Seconds are indexed from the first data packet.
pub struct StreamSink {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StreamSink {
    pub fn spawn(bind: &str) -> io::Result<Self> {
        let socket = UdpSocket::bind(bind)?;
        socket.set_read_timeout(Some(Duration::from_millis(50)))?;
        let addr = socket.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop_rx = Arc::clone(&stop);
        let handle = thread::spawn(move || sink_loop(socket, stop_rx));
        Ok(Self {
            addr,
            stop,
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for StreamSink {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn sink_loop(socket: UdpSocket, stop: Arc<AtomicBool>) {
    let mut buf = vec![0u8; 65_536];
    let mut started: Option<Instant> = None;
    let mut report = SinkReport::default();
    // chunks already seen per in-flight frame
    let mut partial: BTreeMap<(u16, u64), Vec<bool>> = BTreeMap::new();

    while !stop.load(Ordering::Relaxed) {
        let (len, peer) = match socket.recv_from(&mut buf) {
            Ok(v) => v,
            Err(e)
                if e.kind() == io::ErrorKind::WouldBlock || e.kind() == io::ErrorKind::TimedOut =>
            {
                continue
            }
            Err(_) => break,
        };
        if &buf[..len] == REPORT_REQUEST {
            if let Ok(json) = serde_json::to_vec(&report) {
                let _ = socket.send_to(&json, peer);
            }
            continue;
        }
        let Ok(header) = ChunkHeader::decode(&buf[..len]) else {
            continue;
        };
        let now = *started.get_or_insert_with(Instant::now);
        let sec = now.elapsed().as_secs() as usize;
        while report.bytes.len() <= sec {
            report.bytes.push(BTreeMap::new());
            report.frames.push(BTreeMap::new());
        }
        let stream_key = header.stream_id.to_string();
        *report.bytes[sec].entry(stream_key.clone()).or_insert(0) += header.payload_len as u64;

        let seen = partial
            .entry((header.stream_id, header.frame_seq))
            .or_insert_with(|| vec![false; header.chunk_count as usize]);
        if let Some(slot) = seen.get_mut(header.chunk_index as usize) {
            *slot = true;
        }
        if seen.iter().all(|&s| s) {
            partial.remove(&(header.stream_id, header.frame_seq));
            *report.frames[sec].entry(stream_key).or_insert(0) += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{LatencyModel, PresetCatalog, FIVEG_N77_VLOS, WIFI6_LOCAL};

    fn constant_channel(rtt_ms: f64) -> ChannelProfile {
        ChannelProfile {
            name: "const".into(),
            uplink_cap_mbps: 1000.0,
            downlink_cap_mbps: 1000.0,
            rtt_model: LatencyModel::constant(rtt_ms),
            tunnel_overhead_ms: 0.0,
            loss_fraction: 0.0,
        }
    }

    #[test]
    fn emulated_probe_constant_channel() {
        let mut t = Transport::emulated(&constant_channel(20.0), 1).unwrap();
        let samples = run_latency_probe(&mut t, 30.0, 10.0).unwrap();
        assert_eq!(samples.len(), 300);
        for s in &samples {
            assert_eq!(s.rtt_ms, Some(20.0));
        }
        // timestamps monotonic
        for pair in samples.windows(2) {
            assert!(pair[1].time_s > pair[0].time_s);
        }
    }

    #[test]
    fn emulated_probe_truncated_normal_mean() {
        let profile = ChannelProfile {
            name: "tn".into(),
            uplink_cap_mbps: 100.0,
            downlink_cap_mbps: 100.0,
            rtt_model: LatencyModel::truncated_normal(50.0, 5.0, 40.0),
            tunnel_overhead_ms: 0.0,
            loss_fraction: 0.0,
        };
        let mut t = Transport::emulated(&profile, 11).unwrap();
        let samples = run_latency_probe(&mut t, 30.0, 10.0).unwrap();
        let present: Vec<f64> = samples.iter().filter_map(|s| s.rtt_ms).collect();
        assert_eq!(present.len(), 300);
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        assert!((mean - 50.0).abs() < 2.0, "mean {mean}");
        assert!(present.iter().all(|&v| v >= 40.0));
    }

    #[test]
    fn lost_echoes_recorded_missing_not_zero() {
        let mut profile = constant_channel(15.0);
        profile.loss_fraction = 0.5;
        let mut t = Transport::emulated(&profile, 3).unwrap();
        let samples = run_latency_probe(&mut t, 10.0, 10.0).unwrap();
        assert_eq!(samples.len(), 100);
        let missing = samples.iter().filter(|s| s.rtt_ms.is_none()).count();
        assert!(missing > 20 && missing < 80, "missing {missing}");
        assert!(samples.iter().all(|s| s.rtt_ms != Some(0.0)));
    }

    #[test]
    fn rgbd_over_wifi6_delivers_full_rate() {
        let catalog = PresetCatalog::bundled();
        let wifi = catalog.get(WIFI6_LOCAL).unwrap().profile.clone();
        let mut t = Transport::emulated(&wifi, 5).unwrap();
        let record = run_throughput_test(&mut t, &StreamProfile::rgbd1(), 30.0).unwrap();
        let mean_sent = record.sent_mbps_series.iter().sum::<f64>() / 30.0;
        assert!((mean_sent - 144.0).abs() < 1.0, "mean sent {mean_sent}");
        for sec in 0..30 {
            assert_eq!(record.delivered_fps_series[sec][0], 30.0);
        }
        assert_eq!(record.dropped_frames, 0);
    }

    #[test]
    fn rgbd_over_fiveg_saturates_at_cap() {
        let catalog = PresetCatalog::bundled();
        let fiveg = catalog.get(FIVEG_N77_VLOS).unwrap().profile.clone();
        let mut t = Transport::emulated(&fiveg, 5).unwrap();
        let record = run_throughput_test(&mut t, &StreamProfile::rgbd1(), 30.0).unwrap();
        let mean_sent = record.sent_mbps_series.iter().sum::<f64>() / 30.0;
        assert!((mean_sent - 60.0).abs() < 1.0, "mean sent {mean_sent}");
        let mean_fps: f64 = (0..30)
            .map(|s| record.delivered_fps_series[s][0])
            .sum::<f64>()
            / 30.0;
        assert!((mean_fps - 12.5).abs() < 1.0, "mean fps {mean_fps}");
        assert!(record.dropped_frames > 0, "backlog should eventually drop");
    }

    #[test]
    fn zero_rate_stream_sends_nothing() {
        let profile = StreamProfile {
            name: "RGB1".into(),
            stream_count: 1,
            fps: 30.0,
            frame_model: FrameModel::Static { rate_mbps: 0.0 },
        };
        let mut t = Transport::emulated(&constant_channel(10.0), 1).unwrap();
        let record = run_throughput_test(&mut t, &profile, 5.0).unwrap();
        assert!(record.sent_mbps_series.iter().all(|&v| v == 0.0));
        assert!(record.delivered_fps_series.iter().all(|s| s[0] == 0.0));
    }

    #[test]
    fn rgb4_shares_capacity_across_streams() {
        let mut profile = constant_channel(10.0);
        profile.uplink_cap_mbps = 20.0;
        let mut t = Transport::emulated(&profile, 9).unwrap();
        // four static 10 Mbps streams offered over a 20 Mbps link: each
        // stream settles at an equal 5 Mbps share
        let stream = StreamProfile {
            name: "RGB4".into(),
            stream_count: 4,
            fps: 30.0,
            frame_model: FrameModel::Static { rate_mbps: 10.0 },
        };
        let record = run_throughput_test(&mut t, &stream, 10.0).unwrap();
        let mean_sent = record.sent_mbps_series.iter().sum::<f64>() / 10.0;
        assert!((mean_sent - 20.0).abs() < 0.5, "mean {mean_sent}");
        let last = record.delivered_fps_series.last().unwrap();
        let total_fps: f64 = last.iter().sum();
        // 20 Mbps across frames of 1/3 Mbit each = 60 completed frames/s
        assert!((total_fps - 60.0).abs() < 3.0, "fps {total_fps}");
        let spread = last.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - last.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread <= 2.0, "uneven share: {last:?}");
    }

    #[test]
    fn conservation_of_sent_bits() {
        // static frames: bits on the wire must equal completed frames times
        // the frame size, give or take the one frame in flight at the end
        let catalog = PresetCatalog::bundled();
        let frame_bits = 144.0 * 1e6 / 30.0;
        for preset in [WIFI6_LOCAL, FIVEG_N77_VLOS] {
            let profile = catalog.get(preset).unwrap().profile.clone();
            let mut t = Transport::emulated(&profile, 21).unwrap();
            let record = run_throughput_test(&mut t, &StreamProfile::rgbd1(), 30.0).unwrap();
            for &mbps in &record.sent_mbps_series {
                assert!(mbps <= profile.uplink_cap_mbps + 1e-9);
            }
            let delivered_bits: f64 = record
                .delivered_fps_series
                .iter()
                .map(|s| s.iter().sum::<f64>() * frame_bits)
                .sum();
            assert!(
                (record.total_sent_bits() - delivered_bits).abs() < frame_bits,
                "{preset}: sent {} vs delivered {}",
                record.total_sent_bits(),
                delivered_bits
            );
        }
    }

    #[test]
    fn protocol_repeats_and_abort_semantics() {
        let profile = constant_channel(12.0);
        let records = run_protocol(
            |run| Transport::emulated(&profile, 100 + run as u64),
            &StreamProfile::rgb1(),
            5,
            30.0,
        )
        .unwrap();
        assert_eq!(records.len(), 5);
        let total_s: f64 = records.iter().map(|r| r.duration_s).sum();
        assert_eq!(total_s, 150.0);
        // constant channel: every repeat reports the same six statistics
        // even though the runs are independently seeded
        let stats: Vec<_> = records
            .iter()
            .map(|r| {
                crate::metrics::compute_run_stats(&r.present_rtts(), &r.sent_mbps_series)
                    .map(|s| (s.latency_mean_ms, s.latency_std_ms, s.latency_min_ms))
                    .unwrap()
            })
            .collect();
        assert!(stats.windows(2).all(|w| w[0] == w[1]), "{stats:?}");
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.run_index, i as u32);
        }

        // third run fails: protocol aborts carrying two completed records
        let err = run_protocol(
            |run| {
                if run == 2 {
                    Err(SessionError::InvalidParameter("boom".into()))
                } else {
                    Transport::emulated(&profile, run as u64)
                }
            },
            &StreamProfile::rgb1(),
            5,
            5.0,
        )
        .unwrap_err();
        match err {
            SessionError::Aborted {
                failed_run,
                completed,
                ..
            } => {
                assert_eq!(failed_run, 2);
                assert_eq!(completed.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identical_seeds_identical_records() {
        let catalog = PresetCatalog::bundled();
        let fiveg = catalog.get(FIVEG_N77_VLOS).unwrap().profile.clone();
        let run = |seed| {
            let mut t = Transport::emulated(&fiveg, seed).unwrap();
            run_throughput_test(&mut t, &StreamProfile::rgb1(), 10.0).unwrap()
        };
        assert_eq!(run(77), run(77));
        assert_ne!(run(77).sent_mbps_series, run(78).sent_mbps_series);
    }

    #[test]
    fn loopback_probe_round_trip() {
        let echo = EchoServer::spawn("127.0.0.1:0").unwrap();
        let mut t = Transport::udp(echo.addr(), None, 0).unwrap();
        let samples = run_latency_probe(&mut t, 1.0, 50.0).unwrap();
        assert_eq!(samples.len(), 50);
        let present: Vec<f64> = samples.iter().filter_map(|s| s.rtt_ms).collect();
        assert!(
            present.len() >= 45,
            "only {} echoes returned",
            present.len()
        );
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        // loopback baseline: well under a millisecond
        assert!(mean < 1.0, "loopback mean {mean} ms");
        assert!(present.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn loopback_stream_counts_delivery() {
        let echo = EchoServer::spawn("127.0.0.1:0").unwrap();
        let sink = StreamSink::spawn("127.0.0.1:0").unwrap();
        let mut t = Transport::udp(echo.addr(), Some(sink.addr()), 42).unwrap();
        let profile = StreamProfile {
            name: "RGB1".into(),
            stream_count: 1,
            fps: 30.0,
            frame_model: FrameModel::Static { rate_mbps: 2.0 },
        };
        let record = run_throughput_test(&mut t, &profile, 2.0).unwrap();
        let sent: f64 = record.sent_mbps_series.iter().sum();
        assert!(sent > 3.0, "sent {sent} Mbit over 2 s");
        let delivered: f64 = record
            .delivered_fps_series
            .iter()
            .map(|s| s.iter().sum::<f64>())
            .sum();
        assert!(delivered >= 50.0, "delivered {delivered} frames of ~60");
        assert!(!record.rtt_samples.is_empty());
    }
}
