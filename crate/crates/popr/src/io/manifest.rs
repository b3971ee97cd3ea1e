//! Policy manifests: the JSON file that names the candidate set of a run.

use std::collections::HashSet;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{external_policy_client, IoError};
use crate::core::{Action, ActionSpace, ConstantPolicy, Policy};
use crate::toyenv::{expert_policy, mixture_policy, MixturePolicySpec};

/// One candidate policy description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum PolicySpec {
    ToyExpert { n_states: usize },
    ToyMixture { n_states: usize, epsilon: f64, seed: u64 },
    Constant { action: Action },
    External { command: Vec<String>, timeout_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(flatten)]
    pub spec: PolicySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyManifest {
    pub version: u64,
    pub policies: Vec<ManifestEntry>,
}

pub const MANIFEST_VERSION: u64 = 1;

impl PolicyManifest {
    pub fn new(policies: Vec<ManifestEntry>) -> Self {
        PolicyManifest { version: MANIFEST_VERSION, policies }
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if self.version != MANIFEST_VERSION {
            return Err(IoError::Manifest {
                detail: format!("unsupported manifest version {}", self.version),
            });
        }
        if self.policies.is_empty() {
            return Err(IoError::Manifest { detail: "manifest lists no policies".into() });
        }
        let mut seen = HashSet::new();
        for entry in &self.policies {
            if !seen.insert(entry.id.as_str()) {
                return Err(IoError::Manifest {
                    detail: format!("duplicate policy id '{}'", entry.id),
                });
            }
            match &entry.spec {
                PolicySpec::ToyExpert { n_states } | PolicySpec::ToyMixture { n_states, .. }
                    if *n_states < 3 =>
                {
                    return Err(IoError::Manifest {
                        detail: format!("policy '{}': n_states must be >= 3", entry.id),
                    });
                }
                PolicySpec::ToyMixture { epsilon, .. } if !(0.0..=1.0).contains(epsilon) => {
                    return Err(IoError::Manifest {
                        detail: format!("policy '{}': epsilon must be in [0, 1]", entry.id),
                    });
                }
                PolicySpec::External { command, .. } if command.is_empty() => {
                    return Err(IoError::Manifest {
                        detail: format!("policy '{}': empty command", entry.id),
                    });
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Read and validate a manifest file.
pub fn read_manifest(path: &Path) -> Result<PolicyManifest, IoError> {
    let contents = std::fs::read_to_string(path)
        .map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    let manifest: PolicyManifest = serde_json::from_str(&contents)
        .map_err(|e| IoError::Manifest { detail: format!("{}: {e}", path.display()) })?;
    manifest.validate()?;
    Ok(manifest)
}

/// Instantiate every policy in the manifest against the dataset's action
/// space. External policies are spawned and handshaken here, so protocol
/// violations surface before any sampling starts.
pub fn build_policies(
    manifest: &PolicyManifest,
    space: &ActionSpace,
) -> Result<Vec<Box<dyn Policy>>, IoError> {
    manifest.validate()?;
    let ring_space = ActionSpace::Discrete { n: 2 };
    let mut policies: Vec<Box<dyn Policy>> = Vec::with_capacity(manifest.policies.len());
    for entry in &manifest.policies {
        let policy: Box<dyn Policy> = match &entry.spec {
            PolicySpec::ToyExpert { n_states } => {
                if *space != ring_space {
                    return Err(IoError::Manifest {
                        detail: format!(
                            "policy '{}': ring policies need a discrete(2) action space",
                            entry.id
                        ),
                    });
                }
                Box::new(expert_policy(*n_states).with_id(entry.id.clone()))
            }
            PolicySpec::ToyMixture { n_states, epsilon, seed } => {
                if *space != ring_space {
                    return Err(IoError::Manifest {
                        detail: format!(
                            "policy '{}': ring policies need a discrete(2) action space",
                            entry.id
                        ),
                    });
                }
                let spec = MixturePolicySpec { epsilon: *epsilon, seed: *seed };
                Box::new(mixture_policy(spec, *n_states).with_id(entry.id.clone()))
            }
            PolicySpec::Constant { action } => {
                space.validate_action(action).map_err(|e| IoError::Manifest {
                    detail: format!("policy '{}': constant action invalid: {e}", entry.id),
                })?;
                Box::new(ConstantPolicy::new(entry.id.clone(), action.clone()))
            }
            PolicySpec::External { command, timeout_ms } => Box::new(external_policy_client(
                entry.id.clone(),
                command,
                Duration::from_millis(*timeout_ms),
                space,
            )?),
        };
        policies.push(policy);
    }
    Ok(policies)
}
