//! Experiment plan files.
//!
//! ```text
//! [plan]
//! repeats    = 5
//! duration_s = 30
//! networks   = FIVEG_N77_VLOS, WIFI6_LOCAL
//! profiles   = RGB1, RGB4, RGBD1
//!
//! [location P.R.L.]
//! distance_to_ap_m = 49.1
//! ```

use fieldlink::channel::PresetCatalog;
use fieldlink::config;
use fieldlink::loadgen::StreamProfile;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct PlanLocation {
    pub label: String,
    pub distance_to_ap_m: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub locations: Vec<PlanLocation>,
    pub networks: Vec<String>,
    pub profiles: Vec<String>,
    pub repeats: u32,
    pub duration_s: f64,
}

impl ExperimentPlan {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let sections = config::parse(text).map_err(CliError::validation)?;
        let plan_section = config::single(&sections, "plan").map_err(CliError::validation)?;
        let mut r = plan_section.reader();
        let repeats: u32 = r.optional("repeats", 5);
        let duration_s: f64 = r.optional("duration_s", 30.0);
        let networks: Vec<String> = r.require("networks").unwrap_or_default();
        let profiles: Vec<String> = r.optional("profiles", Vec::new());
        r.finish().map_err(CliError::validation)?;

        let mut locations = Vec::new();
        for section in sections.iter().filter(|s| s.kind == "location") {
            if section.arg.is_empty() {
                return Err(CliError::Validation(format!(
                    "line {}: [location] needs a label, e.g. [location P.R.L.]",
                    section.line
                )));
            }
            let mut r = section.reader();
            let distance: Option<f64> = r.require("distance_to_ap_m");
            r.finish().map_err(CliError::validation)?;
            locations.push(PlanLocation {
                label: section.arg.clone(),
                distance_to_ap_m: distance.unwrap_or(0.0),
            });
        }

        let plan = Self {
            locations,
            networks,
            profiles,
            repeats,
            duration_s,
        };
        Ok(plan)
    }

    /// Checks the plan against the preset catalog and the known stream
    /// profiles. `need_profiles` is set for stream plans; probe plans may
    /// omit the profile list.
    pub fn validate(&self, catalog: &PresetCatalog, need_profiles: bool) -> Result<(), CliError> {
        let mut problems = Vec::new();
        if self.locations.is_empty() {
            problems.push("plan has no [location ...] sections".to_string());
        }
        if self.networks.is_empty() {
            problems.push("plan names no networks".to_string());
        }
        if need_profiles && self.profiles.is_empty() {
            problems.push("plan names no stream profiles".to_string());
        }
        if self.repeats == 0 {
            problems.push("repeats must be >= 1".to_string());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            problems.push(format!("duration_s must be > 0, got {}", self.duration_s));
        }
        let mut seen = std::collections::BTreeSet::new();
        for loc in &self.locations {
            if !seen.insert(loc.label.as_str()) {
                problems.push(format!("duplicate location label `{}`", loc.label));
            }
        }
        for network in &self.networks {
            if let Err(e) = catalog.get(network) {
                problems.push(e.to_string());
            }
        }
        for profile in &self.profiles {
            if StreamProfile::by_name(profile).is_none() {
                problems.push(format!(
                    "unknown stream profile `{profile}` (expected RGB1, RGB4 or RGBD1)"
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(problems.join("; ")))
        }
    }
}
