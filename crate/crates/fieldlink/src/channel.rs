//! Seedable emulation of a wireless link's latency and capacity behaviour.
//!
//! A [`ChannelProfile`] is an immutable description of one link: capacity
//! caps per direction, an RTT model, a per-hop tunnel overhead and an
//! optional loss fraction. Sampling goes through an [`RttSampler`], which
//! owns its RNG state so identical seeds replay identical sequences.

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::config::{self, ConfigError};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid channel profile `{name}`: {}", problems.join("; "))]
    InvalidProfile { name: String, problems: Vec<String> },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("preset file: {0}")]
    Config(#[from] ConfigError),
}

/// Shape of the raw RTT distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatencyDistribution {
    /// Normal draw floored at `min_ms`.
    TruncatedNormal,
    /// Every draw equals `mean_ms`.
    Constant,
}

impl LatencyDistribution {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "truncated-normal" => Some(Self::TruncatedNormal),
            "constant" => Some(Self::Constant),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TruncatedNormal => "truncated-normal",
            Self::Constant => "constant",
        }
    }
}

/// Raw round-trip latency model: the (mean, std, min) triple that a run's
/// latency statistics are summarised by, plus the distribution shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyModel {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub min_ms: f64,
    pub distribution: LatencyDistribution,
}

impl LatencyModel {
    pub fn constant(mean_ms: f64) -> Self {
        Self {
            mean_ms,
            std_ms: 0.0,
            min_ms: mean_ms,
            distribution: LatencyDistribution::Constant,
        }
    }

    pub fn truncated_normal(mean_ms: f64, std_ms: f64, min_ms: f64) -> Self {
        Self {
            mean_ms,
            std_ms,
            min_ms,
            distribution: LatencyDistribution::TruncatedNormal,
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.min_ms.is_finite() || self.min_ms < 0.0 {
            out.push(format!("rtt_min_ms must be >= 0, got {}", self.min_ms));
        }
        if !self.std_ms.is_finite() || self.std_ms < 0.0 {
            out.push(format!("rtt_std_ms must be >= 0, got {}", self.std_ms));
        }
        if !self.mean_ms.is_finite() || self.mean_ms < self.min_ms {
            out.push(format!(
                "rtt_mean_ms must be >= rtt_min_ms, got mean {} < min {}",
                self.mean_ms, self.min_ms
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Uplink,
    Downlink,
}

/// One emulated link. Values are plain data; cloning is cheap and a profile
/// can be shared freely across threads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelProfile {
    pub name: String,
    pub uplink_cap_mbps: f64,
    pub downlink_cap_mbps: f64,
    pub rtt_model: LatencyModel,
    /// One-way tunnel cost; an RTT crosses the tunnel twice.
    pub tunnel_overhead_ms: f64,
    pub loss_fraction: f64,
}

impl ChannelProfile {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let mut problems = self.rtt_model.problems();
        if !(self.uplink_cap_mbps.is_finite() && self.uplink_cap_mbps > 0.0) {
            problems.push(format!(
                "uplink_cap_mbps must be > 0, got {}",
                self.uplink_cap_mbps
            ));
        }
        if !(self.downlink_cap_mbps.is_finite() && self.downlink_cap_mbps > 0.0) {
            problems.push(format!(
                "downlink_cap_mbps must be > 0, got {}",
                self.downlink_cap_mbps
            ));
        }
        if !(self.tunnel_overhead_ms.is_finite() && self.tunnel_overhead_ms >= 0.0) {
            problems.push(format!(
                "tunnel_overhead_ms must be >= 0, got {}",
                self.tunnel_overhead_ms
            ));
        }
        if !(0.0..=1.0).contains(&self.loss_fraction) || !self.loss_fraction.is_finite() {
            problems.push(format!(
                "loss_fraction must be within [0, 1], got {}",
                self.loss_fraction
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ChannelError::InvalidProfile {
                name: self.name.clone(),
                problems,
            })
        }
    }

    pub fn cap_mbps(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Uplink => self.uplink_cap_mbps,
            Direction::Downlink => self.downlink_cap_mbps,
        }
    }

    /// Load actually carried by the link: offered load clipped at the cap.
    pub fn saturated_throughput(&self, offered_mbps: f64, direction: Direction) -> f64 {
        offered_mbps.min(self.cap_mbps(direction))
    }

    /// Lowest possible effective RTT sample for this profile.
    pub fn rtt_floor_ms(&self) -> f64 {
        self.rtt_model.min_ms + 2.0 * self.tunnel_overhead_ms
    }

    /// Validates the profile and binds it to a fresh deterministic RNG.
    pub fn sampler(&self, seed: u64) -> Result<RttSampler, ChannelError> {
        self.validate()?;
        Ok(RttSampler {
            model: self.rtt_model,
            tunnel_overhead_ms: self.tunnel_overhead_ms,
            uplink_cap_mbps: self.uplink_cap_mbps,
            downlink_cap_mbps: self.downlink_cap_mbps,
            loss_fraction: self.loss_fraction,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

/// Draws RTT and transfer-time samples for one profile. Owns its RNG, so a
/// sampler is used from one task at a time; identical (profile, seed) pairs
/// produce identical sequences.
#[derive(Debug, Clone)]
pub struct RttSampler {
    model: LatencyModel,
    tunnel_overhead_ms: f64,
    uplink_cap_mbps: f64,
    downlink_cap_mbps: f64,
    loss_fraction: f64,
    rng: ChaCha8Rng,
}

impl RttSampler {
    /// Effective RTT: raw draw floored at `min_ms`, plus the tunnel crossed
    /// once each way.
    pub fn sample_rtt(&mut self) -> f64 {
        let raw = match self.model.distribution {
            LatencyDistribution::Constant => self.model.mean_ms,
            LatencyDistribution::TruncatedNormal => {
                // std 0 degenerates to the mean; Normal::new only rejects
                // negative spreads, which validation already excludes.
                let normal = Normal::new(self.model.mean_ms, self.model.std_ms)
                    .expect("validated std_ms is non-negative");
                normal.sample(&mut self.rng).max(self.model.min_ms)
            }
        };
        raw + 2.0 * self.tunnel_overhead_ms
    }

    /// Serialization at the direction's cap plus one-way propagation
    /// (half of a sampled RTT).
    pub fn transfer_time_ms(&mut self, payload_bits: u64, direction: Direction) -> f64 {
        let cap_mbps = match direction {
            Direction::Uplink => self.uplink_cap_mbps,
            Direction::Downlink => self.downlink_cap_mbps,
        };
        let bits_per_ms = cap_mbps * 1000.0;
        payload_bits as f64 / bits_per_ms + self.sample_rtt() / 2.0
    }

    /// Per-packet loss decision at the profile's `loss_fraction`.
    pub fn packet_lost(&mut self) -> bool {
        self.loss_fraction > 0.0 && self.rng.random::<f64>() < self.loss_fraction
    }
}

/// One named preset plus the note saying where its numbers came from.
#[derive(Debug, Clone, Serialize)]
pub struct Preset {
    pub profile: ChannelProfile,
    pub provenance: String,
}

/// Catalog of named channel presets, loadable from a plain-text file.
/// Iteration order is the name's sort order, keeping rendered output stable.
#[derive(Debug, Clone, Default)]
pub struct PresetCatalog {
    presets: BTreeMap<String, Preset>,
}

pub const FOURG_PUBLIC: &str = "FOURG_PUBLIC";
pub const FIVEG_N77_VLOS: &str = "FIVEG_N77_VLOS";
pub const FIVEG_N77_NVLOS: &str = "FIVEG_N77_NVLOS";
pub const WIFI6_LOCAL: &str = "WIFI6_LOCAL";

const BUNDLED_PRESETS: &str = include_str!("../presets/default.presets");

impl PresetCatalog {
    /// The presets shipped with the toolkit, parsed from the bundled file.
    ///
    /// ```
    /// use fieldlink::channel::{PresetCatalog, FIVEG_N77_VLOS};
    ///
    /// let catalog = PresetCatalog::bundled();
    /// let profile = &catalog.get(FIVEG_N77_VLOS).unwrap().profile;
    /// let mut sampler = profile.sampler(42).unwrap();
    /// // constant preset: every effective draw is the encoded mean plus
    /// // the tunnel crossed once each way
    /// assert_eq!(sampler.sample_rtt(), 22.9 + 2.0 * 0.403);
    /// ```
    pub fn bundled() -> Self {
        Self::from_text(BUNDLED_PRESETS).expect("bundled preset file is valid")
    }

    /// Raw text of the bundled preset file, for installing a starting copy.
    pub fn bundled_text() -> &'static str {
        BUNDLED_PRESETS
    }

    /// Parses a preset file. Each `[NAME]` section describes one profile:
    ///
    /// ```text
    /// [FIVEG_N77_VLOS]
    /// uplink_cap_mbps   = 60.0
    /// downlink_cap_mbps = 60.0
    /// rtt_distribution  = constant        # or truncated-normal
    /// rtt_mean_ms       = 22.9
    /// rtt_std_ms        = 0.0             # optional, default 0
    /// rtt_min_ms        = 22.9            # optional, default 0
    /// tunnel_overhead_ms = 0.403          # optional, default 0
    /// loss_fraction     = 0.0             # optional, default 0
    /// provenance        = where these numbers came from
    /// ```
    pub fn from_text(text: &str) -> Result<Self, ChannelError> {
        let mut presets = BTreeMap::new();
        for section in config::parse(text)? {
            let name = section.header();
            let mut r = section.reader();
            let uplink: Option<f64> = r.require("uplink_cap_mbps");
            let downlink: Option<f64> = r.require("downlink_cap_mbps");
            let mean: Option<f64> = r.require("rtt_mean_ms");
            let std_ms = r.optional("rtt_std_ms", 0.0);
            let dist_raw = r.optional_str("rtt_distribution", "truncated-normal");
            let distribution = match LatencyDistribution::parse(&dist_raw) {
                Some(d) => d,
                None => {
                    r.note_problem(format!(
                        "rtt_distribution = {dist_raw} (expected truncated-normal or constant)"
                    ));
                    LatencyDistribution::TruncatedNormal
                }
            };
            // Constant models default their floor to the mean itself.
            let min_default = match distribution {
                LatencyDistribution::Constant => mean.unwrap_or(0.0),
                LatencyDistribution::TruncatedNormal => 0.0,
            };
            let min_ms = r.optional("rtt_min_ms", min_default);
            let tunnel_overhead_ms = r.optional("tunnel_overhead_ms", 0.0);
            let loss_fraction = r.optional("loss_fraction", 0.0);
            let provenance = r.optional_str("provenance", "");
            r.finish()?;

            let profile = ChannelProfile {
                name: name.clone(),
                uplink_cap_mbps: uplink.unwrap_or(0.0),
                downlink_cap_mbps: downlink.unwrap_or(0.0),
                rtt_model: LatencyModel {
                    mean_ms: mean.unwrap_or(0.0),
                    std_ms,
                    min_ms,
                    distribution,
                },
                tunnel_overhead_ms,
                loss_fraction,
            };
            profile.validate()?;
            if presets
                .insert(
                    name.clone(),
                    Preset {
                        profile,
                        provenance,
                    },
                )
                .is_some()
            {
                return Err(ChannelError::Config(ConfigError::DuplicateSection(name)));
            }
        }
        Ok(Self { presets })
    }

    pub fn get(&self, name: &str) -> Result<&Preset, ChannelError> {
        self.presets
            .get(name)
            .ok_or_else(|| ChannelError::UnknownPreset(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.presets.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Preset)> {
        self.presets.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.presets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.presets.is_empty()
    }

    /// Gap between two presets' encoded mean RTTs, in ms.
    pub fn mean_rtt_gap_ms(&self, a: &str, b: &str) -> Result<f64, ChannelError> {
        let pa = self.get(a)?.profile.rtt_model.mean_ms;
        let pb = self.get(b)?.profile.rtt_model.mean_ms;
        Ok((pa - pb).abs())
    }
}
