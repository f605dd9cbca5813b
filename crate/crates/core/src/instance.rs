//! The on-disk instance format: a JSON document with named arrays mirroring
//! the environment description, parsed with strict schema validation.
//!
//! Layout of the arrays: `prior[theta]`, `initial[theta][s]`,
//! `trans[s][a][theta][s']`, `outcome[s][theta][y]`, `reward[y][a]`. A
//! partial-feedback instance adds a `partial_feedback` block naming the
//! per-action outcome count, the preference values (which must be pairwise
//! distinct and exactly representable), and the full-reveal flag. An
//! optional `product_metric` overrides the discrete default used by the
//! Lipschitz bound on the joint outcome-state cells (row index
//! `y * n_states + s`).
//!
//! Unknown fields are rejected; dimension mismatches and kernel defects are
//! reported with the offending table row named.

use crate::env::{EnvironmentSpec, Instance, PartialFeedbackSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: {detail}")]
    Shape { path: String, detail: String },
    #[error("{path}: instance failed validation:\n{detail}")]
    Invalid { path: String, detail: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PartialFeedbackFile {
    pub n_per_action_outcomes: usize,
    pub preference: Vec<f64>,
    pub full_reveal: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub name: String,
    pub horizon: usize,
    pub prior: Vec<f64>,
    pub initial: Vec<Vec<f64>>,
    pub trans: Vec<Vec<Vec<Vec<f64>>>>,
    pub outcome: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partial_feedback: Option<PartialFeedbackFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_metric: Option<Vec<Vec<f64>>>,
}

impl InstanceFile {
    pub fn from_instance(name: &str, instance: &Instance) -> Self {
        let spec = instance.base();
        Self {
            schema_version: crate::report::SCHEMA_VERSION,
            name: name.to_string(),
            horizon: spec.horizon,
            prior: spec.prior_weights().to_vec(),
            initial: (0..spec.n_params)
                .map(|theta| spec.initial_row(theta).to_vec())
                .collect(),
            trans: (0..spec.n_states)
                .map(|s| {
                    (0..spec.n_actions)
                        .map(|a| {
                            (0..spec.n_params)
                                .map(|theta| spec.trans_row(s, a, theta).to_vec())
                                .collect()
                        })
                        .collect()
                })
                .collect(),
            outcome: (0..spec.n_states)
                .map(|s| {
                    (0..spec.n_params)
                        .map(|theta| spec.outcome_row(s, theta).to_vec())
                        .collect()
                })
                .collect(),
            reward: (0..spec.n_outcomes)
                .map(|y| {
                    (0..spec.n_actions)
                        .map(|a| spec.reward(y, a))
                        .collect()
                })
                .collect(),
            partial_feedback: instance.partial_feedback().map(|pf| PartialFeedbackFile {
                n_per_action_outcomes: pf.n_per_action,
                preference: pf.preference.clone(),
                full_reveal: pf.full_reveal,
            }),
            product_metric: None,
        }
    }

    pub fn to_instance(&self, path: &str) -> Result<Instance, InstanceError> {
        let shape = |detail: String| InstanceError::Shape {
            path: path.to_string(),
            detail,
        };
        let n_params = self.prior.len();
        let n_states = self.trans.len();
        if n_states == 0 {
            return Err(shape("trans has no states".into()));
        }
        let n_actions = self.trans[0].len();
        let n_outcomes = self.reward.len();
        if self.initial.len() != n_params {
            return Err(shape(format!(
                "initial has {} parameter rows, prior has {n_params}",
                self.initial.len()
            )));
        }
        let mut initial = Vec::new();
        for (theta, row) in self.initial.iter().enumerate() {
            if row.len() != n_states {
                return Err(shape(format!(
                    "initial[theta={theta}] has {} states, trans has {n_states}",
                    row.len()
                )));
            }
            initial.extend(row.iter().copied());
        }
        let mut trans = Vec::new();
        for (s, per_action) in self.trans.iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(shape(format!(
                    "trans[s={s}] has {} actions, expected {n_actions}",
                    per_action.len()
                )));
            }
            for (a, per_theta) in per_action.iter().enumerate() {
                if per_theta.len() != n_params {
                    return Err(shape(format!(
                        "trans[s={s}][a={a}] has {} parameter rows, expected {n_params}",
                        per_theta.len()
                    )));
                }
                for (theta, row) in per_theta.iter().enumerate() {
                    if row.len() != n_states {
                        return Err(shape(format!(
                            "trans[s={s}][a={a}][theta={theta}] has {} entries, expected {n_states}",
                            row.len()
                        )));
                    }
                    trans.extend(row.iter().copied());
                }
            }
        }
        if self.outcome.len() != n_states {
            return Err(shape(format!(
                "outcome has {} state rows, expected {n_states}",
                self.outcome.len()
            )));
        }
        let mut outcome = Vec::new();
        for (s, per_theta) in self.outcome.iter().enumerate() {
            if per_theta.len() != n_params {
                return Err(shape(format!(
                    "outcome[s={s}] has {} parameter rows, expected {n_params}",
                    per_theta.len()
                )));
            }
            for (theta, row) in per_theta.iter().enumerate() {
                if row.len() != n_outcomes {
                    return Err(shape(format!(
                        "outcome[s={s}][theta={theta}] has {} entries, expected {n_outcomes}",
                        row.len()
                    )));
                }
                outcome.extend(row.iter().copied());
            }
        }
        let mut reward = Vec::new();
        for (y, row) in self.reward.iter().enumerate() {
            if row.len() != n_actions {
                return Err(shape(format!(
                    "reward[y={y}] has {} entries, expected {n_actions}",
                    row.len()
                )));
            }
            reward.extend(row.iter().copied());
        }
        let spec = EnvironmentSpec::new(
            n_states,
            n_actions,
            n_outcomes,
            n_params,
            self.horizon,
            self.prior.clone(),
            initial,
            trans,
            outcome,
            reward,
        )
        .map_err(|e| shape(e.to_string()))?;
        let violations = spec.validate();
        if !violations.is_empty() {
            let detail = violations
                .iter()
                .map(|v| format!("  - {v}"))
                .collect::<Vec<_>>()
                .join("\n");
            return Err(InstanceError::Invalid {
                path: path.to_string(),
                detail,
            });
        }
        match &self.partial_feedback {
            Some(pf_file) => {
                let pf = PartialFeedbackSpec::new(
                    spec,
                    pf_file.n_per_action_outcomes,
                    pf_file.preference.clone(),
                    pf_file.full_reveal,
                )
                .map_err(|e| shape(e.to_string()))?;
                Ok(Instance::PartialFeedback(pf))
            }
            None => Ok(Instance::General(spec)),
        }
    }
}

/// Loads an instance file, applying strict schema validation and the full
/// invariant check.
pub fn load_instance(path: &Path) -> Result<(InstanceFile, Instance), InstanceError> {
    let text = std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: InstanceFile =
        serde_json::from_str(&text).map_err(|source| InstanceError::Parse {
            path: path.display().to_string(),
            source,
        })?;
    let instance = file.to_instance(&path.display().to_string())?;
    Ok((file, instance))
}

/// Serializes an instance file as pretty JSON with a trailing newline.
pub fn instance_to_json(file: &InstanceFile) -> String {
    let mut text = serde_json::to_string_pretty(file).expect("instance serializes");
    text.push('\n');
    text
}
