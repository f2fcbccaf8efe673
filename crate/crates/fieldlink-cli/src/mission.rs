//! Mission config files for the simulator.
//!
//! ```text
//! [mission]
//! path_length_m = 30
//! space_m       = 1
//! velocity_mps  = 3
//! processing_ms = 273        # or processing_preset = human-reaction | pipeline
//!
//! [delay]
//! mode         = constant-start   # constant-end | linear | vertex-quadratic
//! rtt_start_ms = 22.9
//! rtt_end_ms   = 22.9             # optional for constant-start
//! ```

use fieldlink::config;
use fieldlink::rtsim::{
    DelayModel, MissionSpec, TrendMode, HUMAN_REACTION_PROCESSING_MS, PIPELINE_PROCESSING_MS,
};

use crate::CliError;

pub fn parse_mission(text: &str) -> Result<(MissionSpec, DelayModel), CliError> {
    let sections = config::parse(text).map_err(CliError::validation)?;

    let mission = config::single(&sections, "mission").map_err(CliError::validation)?;
    let mut r = mission.reader();
    let path_length_m = r.optional("path_length_m", 30.0);
    let space_m = r.optional("space_m", 1.0);
    let velocity_mps = r.optional("velocity_mps", 3.0);
    let mut processing_ms = r.optional("processing_ms", HUMAN_REACTION_PROCESSING_MS);
    let preset = r.optional_str("processing_preset", "");
    match preset.as_str() {
        "" => {}
        "human-reaction" => processing_ms = HUMAN_REACTION_PROCESSING_MS,
        "pipeline" => processing_ms = PIPELINE_PROCESSING_MS,
        other => r.note_problem(format!(
            "processing_preset = {other} (expected human-reaction or pipeline)"
        )),
    }
    if mission.raw("processing_ms").is_some() && !preset.is_empty() {
        r.note_problem("give either processing_ms or processing_preset, not both");
    }
    r.finish().map_err(CliError::validation)?;

    let delay = config::single(&sections, "delay").map_err(CliError::validation)?;
    let mut r = delay.reader();
    let mode_raw = r.optional_str("mode", "constant-start");
    let mode = TrendMode::parse(&mode_raw).unwrap_or_else(|| {
        r.note_problem(format!(
            "mode = {mode_raw} (expected constant-start, constant-end, linear or vertex-quadratic)"
        ));
        TrendMode::ConstantStart
    });
    let rtt_start_ms: Option<f64> = r.require("rtt_start_ms");
    let rtt_end_ms = r.optional("rtt_end_ms", rtt_start_ms.unwrap_or(0.0));
    r.finish().map_err(CliError::validation)?;

    let spec = MissionSpec {
        path_length_m,
        space_m,
        velocity_mps,
        processing_ms,
    };
    spec.validate().map_err(CliError::validation)?;
    let model = DelayModel {
        rtt_start_ms: rtt_start_ms.unwrap_or(0.0),
        rtt_end_ms,
        mode,
    };
    model.validate().map_err(CliError::validation)?;
    Ok((spec, model))
}
