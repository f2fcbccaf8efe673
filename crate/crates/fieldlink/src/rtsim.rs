//! Real-time operation-delay simulator.
//!
//! A robot traverses a straight path split into equal location spaces,
//! exchanging one message pair per space: a position update goes out, a
//! command reply comes back after the server's processing time. The reply
//! is useful only while the robot is still inside the space it was sent
//! from, which gives each pair a fixed response window. The simulator
//! accounts the delay of every pair against that window and issues a
//! real-time verdict for the whole traversal.

use serde::Serialize;
use thiserror::Error;

use crate::plot::{ChartFrame, Svg, PALETTE};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid mission: {}", problems.join("; "))]
    InvalidMission { problems: Vec<String> },
}

/// Server processing time default: the median human hand-eye reaction time,
/// for a human-in-the-loop worst case.
pub const HUMAN_REACTION_PROCESSING_MS: f64 = 273.0;
/// Alternative preset: per-image speed of the detection pipeline itself.
pub const PIPELINE_PROCESSING_MS: f64 = 14.5;

/// The traversal being simulated. Defaults describe the reference scenario:
/// a 30 m path in 1 m spaces at 3 m/s with 273 ms server processing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MissionSpec {
    pub path_length_m: f64,
    pub space_m: f64,
    pub velocity_mps: f64,
    pub processing_ms: f64,
}

impl Default for MissionSpec {
    fn default() -> Self {
        Self {
            path_length_m: 30.0,
            space_m: 1.0,
            velocity_mps: 3.0,
            processing_ms: HUMAN_REACTION_PROCESSING_MS,
        }
    }
}

impl MissionSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let mut problems = Vec::new();
        if !(self.path_length_m.is_finite() && self.path_length_m > 0.0) {
            problems.push(format!(
                "path_length_m must be > 0, got {}",
                self.path_length_m
            ));
        }
        if !(self.space_m.is_finite() && self.space_m > 0.0) {
            problems.push(format!("space_m must be > 0, got {}", self.space_m));
        }
        if !(self.velocity_mps.is_finite() && self.velocity_mps > 0.0) {
            problems.push(format!(
                "velocity_mps must be > 0, got {}",
                self.velocity_mps
            ));
        }
        if !(self.processing_ms.is_finite() && self.processing_ms >= 0.0) {
            problems.push(format!(
                "processing_ms must be >= 0, got {}",
                self.processing_ms
            ));
        }
        if problems.is_empty() {
            let n = self.path_length_m / self.space_m;
            if (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
                problems.push(format!(
                    "path_length_m / space_m must be a whole number of spaces, got {n}"
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SimError::InvalidMission { problems })
        }
    }

    /// One message pair per location space.
    pub fn messages(&self) -> u32 {
        (self.path_length_m / self.space_m).round() as u32
    }

    pub fn response_window_ms(&self) -> f64 {
        response_window_ms(self.space_m, self.velocity_mps).expect("validated spec")
    }

    pub fn travel_time_s(&self) -> f64 {
        self.path_length_m / self.velocity_mps
    }

    /// Messages on the wire over the traversal: one update sent and one
    /// command received per location space.
    pub fn total_message_count(&self) -> u32 {
        2 * self.messages()
    }
}

/// How the RTT evolves along the path, anchored at the two endpoint
/// measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrendMode {
    /// Whole path at the start-point RTT.
    ConstantStart,
    /// Whole path at the end-point RTT.
    ConstantEnd,
    Linear,
    /// Quadratic in vertex form, vertex at the lower-RTT endpoint.
    VertexQuadratic,
}

impl TrendMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant-start" => Some(Self::ConstantStart),
            "constant-end" => Some(Self::ConstantEnd),
            "linear" => Some(Self::Linear),
            "vertex-quadratic" => Some(Self::VertexQuadratic),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ConstantStart => "constant-start",
            Self::ConstantEnd => "constant-end",
            Self::Linear => "linear",
            Self::VertexQuadratic => "vertex-quadratic",
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::ConstantStart | Self::ConstantEnd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayModel {
    pub rtt_start_ms: f64,
    pub rtt_end_ms: f64,
    pub mode: TrendMode,
}

impl DelayModel {
    pub fn constant(rtt_ms: f64) -> Self {
        Self {
            rtt_start_ms: rtt_ms,
            rtt_end_ms: rtt_ms,
            mode: TrendMode::ConstantStart,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("rtt_start_ms", self.rtt_start_ms),
            ("rtt_end_ms", self.rtt_end_ms),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(SimError::Domain(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Delay accounted against one message pair: network round trip plus the
/// server's processing time.
pub fn cumulative_delay_ms(rtt_ms: f64, processing_ms: f64) -> Result<f64, SimError> {
    for (name, v) in [("rtt_ms", rtt_ms), ("processing_ms", processing_ms)] {
        if !v.is_finite() || v < 0.0 {
            return Err(SimError::Domain(format!("{name} must be >= 0, got {v}")));
        }
    }
    Ok(rtt_ms + processing_ms)
}

/// Time before the robot leaves the current location space.
pub fn response_window_ms(space_m: f64, velocity_mps: f64) -> Result<f64, SimError> {
    if !(velocity_mps.is_finite() && velocity_mps > 0.0) {
        return Err(SimError::Domain(format!(
            "velocity_mps must be > 0, got {velocity_mps}"
        )));
    }
    if !(space_m.is_finite() && space_m > 0.0) {
        return Err(SimError::Domain(format!(
            "space_m must be > 0, got {space_m}"
        )));
    }
    Ok(space_m / velocity_mps * 1000.0)
}

/// Margin between the window and one pair's delay: positive is lead
/// (the reply lands inside its space), negative is lag.
pub fn message_margin_ms(cumulative_delay_ms: f64, window_ms: f64) -> f64 {
    window_ms - cumulative_delay_ms
}

/// Lag accumulated over a whole traversal at a fixed per-pair delay.
pub fn total_cumulative_delay_ms(cumulative_delay_ms: f64, window_ms: f64, messages: u32) -> f64 {
    (cumulative_delay_ms - window_ms) * messages as f64
}

/// RTT along the path at `fraction` in [0, 1] of the way from start to end.
pub fn trend_rtt(model: &DelayModel, fraction: f64) -> Result<f64, SimError> {
    model.validate()?;
    if !(0.0..=1.0).contains(&fraction) {
        return Err(SimError::Domain(format!(
            "fraction must be within [0, 1], got {fraction}"
        )));
    }
    let (a, b) = (model.rtt_start_ms, model.rtt_end_ms);
    // endpoints are anchored measurements; interpolation must hit them
    // exactly, not up to rounding
    if fraction == 0.0 && model.mode != TrendMode::ConstantEnd {
        return Ok(a);
    }
    if fraction == 1.0 && model.mode != TrendMode::ConstantStart {
        return Ok(b);
    }
    Ok(match model.mode {
        TrendMode::ConstantStart => a,
        TrendMode::ConstantEnd => b,
        TrendMode::Linear => a + (b - a) * fraction,
        TrendMode::VertexQuadratic => {
            // Vertex sits at the lower-RTT endpoint, so the curve leaves the
            // vertex flat and stays monotone across the path.
            if a <= b {
                (b - a) * fraction * fraction + a
            } else {
                (a - b) * (fraction - 1.0) * (fraction - 1.0) + b
            }
        }
    })
}

/// One message pair's accounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MessageTiming {
    /// 1-based pair index; the pair is sent entering its location space.
    pub index: u32,
    pub position_m: f64,
    pub rtt_ms: f64,
    pub cumulative_delay_ms: f64,
    /// Positive = lead, negative = lag.
    pub margin_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissionReport {
    pub spec: MissionSpec,
    pub model: DelayModel,
    pub response_window_ms: f64,
    pub messages: Vec<MessageTiming>,
    pub total_cumulative_delay_ms: f64,
    pub real_time: bool,
    /// Fixed caveat rendered under every report.
    pub footnote: String,
}

impl MissionReport {
    pub fn verdict(&self) -> &'static str {
        if self.real_time {
            "real-time"
        } else {
            "not real-time"
        }
    }
}

/// Runs the traversal: one message pair per location space, RTT taken from
/// the trend model at the pair's position along the path.
///
/// ```
/// use fieldlink::rtsim::{simulate_mission, DelayModel, MissionSpec};
///
/// let spec = MissionSpec::default(); // 30 m at 3 m/s, 273 ms processing
/// let report = simulate_mission(&spec, &DelayModel::constant(22.9)).unwrap();
/// assert!(report.real_time);
/// assert_eq!(report.messages.len(), 30);
/// ```
pub fn simulate_mission(spec: &MissionSpec, model: &DelayModel) -> Result<MissionReport, SimError> {
    spec.validate()?;
    model.validate()?;
    let n = spec.messages();
    let window = spec.response_window_ms();

    let mut messages = Vec::with_capacity(n as usize);
    let mut real_time = true;
    for i in 1..=n {
        let fraction = if n == 1 {
            0.0
        } else {
            (i - 1) as f64 / (n - 1) as f64
        };
        let rtt = trend_rtt(model, fraction)?;
        let cumulative = cumulative_delay_ms(rtt, spec.processing_ms)?;
        let margin = message_margin_ms(cumulative, window);
        if margin < 0.0 {
            real_time = false;
        }
        messages.push(MessageTiming {
            index: i,
            position_m: (i - 1) as f64 * spec.space_m,
            rtt_ms: rtt,
            cumulative_delay_ms: cumulative,
            margin_ms: margin,
        });
    }

    // For constant trends the closed form is used verbatim so the report
    // total matches it bit for bit; varying trends sum per-pair lag.
    let total = if model.mode.is_constant() || model.rtt_start_ms == model.rtt_end_ms {
        total_cumulative_delay_ms(messages[0].cumulative_delay_ms, window, n)
    } else {
        messages
            .iter()
            .map(|m| m.cumulative_delay_ms - window)
            .sum()
    };

    let lag_threshold_ms = window - spec.processing_ms;
    let footnote = format!(
        "Margins are computed, not assumed: margin = response window - (RTT + processing). \
         With processing {:.1} ms and a {:.1} ms window, any RTT above {:.1} ms lags the \
         window, however fast the link otherwise looks.",
        spec.processing_ms, window, lag_threshold_ms
    );

    Ok(MissionReport {
        spec: *spec,
        model: *model,
        response_window_ms: window,
        messages,
        total_cumulative_delay_ms: total,
        real_time,
        footnote,
    })
}

/// Timeline diagram of the first second of the traversal: one row per
/// message pair showing its send instant, response window box and the
/// dashed reply line, green when the reply lands inside the window.
pub fn timeline_svg(report: &MissionReport) -> String {
    let window = report.response_window_ms;
    let shown: Vec<&MessageTiming> = report
        .messages
        .iter()
        .take_while(|m| ((m.index - 1) as f64) * window < 1000.0)
        .take(6)
        .collect();
    let t_end = shown
        .iter()
        .map(|m| (m.index - 1) as f64 * window + m.cumulative_delay_ms)
        .fold(shown.len() as f64 * window, f64::max)
        * 1.06;

    let (width, height) = (640.0, 90.0 + shown.len() as f64 * 46.0);
    let mut svg = Svg::new(width, height);
    svg.text(
        width / 2.0,
        20.0,
        13.0,
        "middle",
        &format!(
            "Message-pair timeline: window {:.1} ms, verdict {}",
            window,
            report.verdict()
        ),
    );
    let frame = ChartFrame {
        x0: 60.0,
        y0: 34.0,
        w: width - 90.0,
        h: shown.len() as f64 * 46.0,
        x_min: 0.0,
        x_max: t_end,
        y_min: 0.0,
        y_max: 1.0,
    };
    for (row, m) in shown.iter().enumerate() {
        let y = frame.y0 + row as f64 * 46.0 + 8.0;
        let send = (m.index - 1) as f64 * window;
        let reply = send + m.cumulative_delay_ms;
        let ok = m.margin_ms >= 0.0;
        let color = if ok { PALETTE[2] } else { PALETTE[3] };
        // window box: the reply must land inside it
        svg.rect(
            frame.x(send),
            y,
            frame.x(send + window) - frame.x(send),
            28.0,
            "#b0c4de",
            0.45,
        );
        svg.line(
            frame.x(send),
            y - 2.0,
            frame.x(send),
            y + 30.0,
            "#333333",
            1.0,
        );
        svg.dashed_line(
            frame.x(reply),
            y - 2.0,
            frame.x(reply),
            y + 30.0,
            color,
            1.5,
        );
        svg.text(
            frame.x0 - 52.0,
            y + 18.0,
            10.0,
            "start",
            &format!("pair {}", m.index),
        );
        svg.text(
            frame.x(reply) + 4.0,
            y + 12.0,
            9.0,
            "start",
            &format!("{:+.1} ms", crate::metrics::round_half_up(m.margin_ms, 1)),
        );
    }
    let axis_y = frame.y0 + frame.h + 12.0;
    svg.line(frame.x0, axis_y, frame.x0 + frame.w, axis_y, "#333333", 1.0);
    for i in 0..=4 {
        let t = t_end * i as f64 / 4.0;
        svg.line(frame.x(t), axis_y, frame.x(t), axis_y + 4.0, "#333333", 1.0);
        svg.text(
            frame.x(t),
            axis_y + 16.0,
            10.0,
            "middle",
            &format!("{t:.0}"),
        );
    }
    svg.text(
        frame.x0 + frame.w / 2.0,
        axis_y + 30.0,
        11.0,
        "middle",
        "time (ms)",
    );
    svg.render()
}
