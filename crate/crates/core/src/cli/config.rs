//! Experiment configuration files.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::distributions::TailModel;
use crate::moments::Drift;
use crate::scales::{GridSpec, ScaleFunction};
use crate::zigzag::YRecursion;

use super::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Classify,
    MomentIndex,
    Determinacy,
    Zigzag,
    Verify,
}

/// Which named models and scales play which part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Roles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopping: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_x: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_n: Option<String>,
    /// `h1`, …, `h4` for the zigzag construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelopes: Option<[String; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_increment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Drift>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopping_cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hill_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zigzag_terms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_recursion: Option<YRecursion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub command: Command,
    pub models: BTreeMap<String, TailModel>,
    #[serde(default)]
    pub scales: BTreeMap<String, ScaleFunction>,
    pub grid: GridSpec,
    pub replicates: u64,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub roles: Roles,
    #[serde(default)]
    pub settings: Settings,
}

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    CliError::ConfigInvalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn model(&self, role: &str, name: &Option<String>) -> Result<&TailModel, CliError> {
        let name = name
            .as_ref()
            .ok_or_else(|| invalid(&format!("roles.{role}"), "required"))?;
        self.models
            .get(name)
            .ok_or_else(|| invalid(&format!("roles.{role}"), format!("unknown model `{name}`")))
    }

    pub fn scale(&self, role: &str, name: &Option<String>) -> Result<&ScaleFunction, CliError> {
        let name = name
            .as_ref()
            .ok_or_else(|| invalid(&format!("roles.{role}"), "required"))?;
        self.scale_named(role, name)
    }

    fn scale_named(&self, role: &str, name: &str) -> Result<&ScaleFunction, CliError> {
        self.scales
            .get(name)
            .ok_or_else(|| invalid(&format!("roles.{role}"), format!("unknown scale `{name}`")))
    }

    pub fn envelopes(&self) -> Result<[&ScaleFunction; 4], CliError> {
        let names = self
            .roles
            .envelopes
            .as_ref()
            .ok_or_else(|| invalid("roles.envelopes", "required"))?;
        Ok([
            self.scale_named("envelopes", &names[0])?,
            self.scale_named("envelopes", &names[1])?,
            self.scale_named("envelopes", &names[2])?,
            self.scale_named("envelopes", &names[3])?,
        ])
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(invalid(
                "version",
                format!("expected {CONFIG_VERSION}, got {}", self.version),
            ));
        }
        if self.replicates == 0 {
            return Err(invalid("replicates", "must be >= 1"));
        }
        self.grid.validate().map_err(|e| invalid("grid", e.to_string()))?;
        for (name, m) in &self.models {
            m.validate()
                .map_err(|e| invalid(&format!("models.{name}"), e.to_string()))?;
        }
        for (name, s) in &self.scales {
            s.validate()
                .map_err(|e| invalid(&format!("scales.{name}"), e.to_string()))?;
        }
        if let Some(w) = self.settings.workers {
            if w == 0 {
                return Err(invalid("settings.workers", "must be >= 1"));
            }
        }
        let roles = &self.roles;
        match self.command {
            Command::Simulate | Command::MomentIndex => {
                self.model("increment", &roles.increment)?;
                self.model("stopping", &roles.stopping)?;
            }
            Command::Classify | Command::Verify => {
                self.model("increment", &roles.increment)?;
                self.model("stopping", &roles.stopping)?;
                self.scale("h_x", &roles.h_x)?;
                self.scale("h_n", &roles.h_n)?;
            }
            Command::Determinacy => {
                self.model("increment", &roles.increment)?;
                if roles.stopping.is_some() {
                    self.model("stopping", &roles.stopping)?;
                    self.scale("h_x", &roles.h_x)?;
                    self.scale("h_n", &roles.h_n)?;
                } else if roles.h_x.is_some() {
                    self.scale("h_x", &roles.h_x)?;
                }
            }
            Command::Zigzag => {
                self.envelopes()?;
            }
        }
        Ok(())
    }
}
