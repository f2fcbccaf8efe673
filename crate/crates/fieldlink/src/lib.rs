//! fieldlink: wireless field-link measurement and simulation toolkit.
//!
//! The crate has four working parts:
//!
//! * [`channel`] - deterministic, seedable emulation of a wireless link
//!   (latency distribution, capacity caps, tunnel overhead) plus the
//!   bundled preset catalog.
//! * [`loadgen`] - probe and video-stream load generation over either real
//!   UDP sockets or the emulated channel, recording raw sample series.
//! * [`metrics`] - the six run statistics and both aggregation
//!   methodologies (per-run, combined-over-raw-samples).
//! * [`rtsim`] - the real-time operation-delay simulator: message-pair
//!   delay accounting over a traversal, lead/lag margins and verdicts.
//!
//! Supporting modules: [`wire`] (datagram formats), [`store`] (CSV/JSON
//! persistence), [`plot`] (direct SVG emission) and [`config`] (the
//! plain-text config file format).

pub mod channel;
pub mod config;
pub mod loadgen;
pub mod metrics;
pub mod plot;
pub mod rtsim;
pub mod store;
pub mod wire;
