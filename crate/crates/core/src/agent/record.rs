use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::memory::{MemoryEntry, MemoryWindow, OutOfOrder};
use crate::behavior_graph::{AgentTypeSpec, NodeId};
use crate::value::{Value, ValueMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("agent {agent}: field `{field}` missing from profile")]
    MissingField { agent: AgentId, field: String },
    #[error("agent {agent}: field `{field}` is not declared for type `{agent_type}`")]
    UnknownField { agent: AgentId, agent_type: String, field: String },
    #[error("agent {agent}: field `{field}` expects {expected}, got {got}")]
    TypeMismatch { agent: AgentId, field: String, expected: String, got: String },
}

/// One simulated agent: profile, memory and position in the behavior graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: AgentId,
    pub agent_type: String,
    pub profile: ValueMap,
    pub memory: MemoryWindow,
    pub current_node: Option<NodeId>,
}

impl AgentRecord {
    /// Build a record whose profile conforms to `spec`.
    pub fn new(id: AgentId, spec: &AgentTypeSpec, profile: ValueMap) -> Result<Self, ProfileError> {
        check_profile(id, spec, &profile)?;
        Ok(AgentRecord {
            id,
            agent_type: spec.name.clone(),
            profile,
            memory: MemoryWindow::new(spec.memory_capacity),
            current_node: None,
        })
    }

    pub fn get(&self, field: &str) -> Option<&Value> {
        self.profile.get(field)
    }

    pub fn remember(&mut self, entry: MemoryEntry) -> Result<(), OutOfOrder> {
        self.memory.remember(entry)
    }

    /// Everything the agent itself may see.
    pub fn self_view(&self) -> AgentSnapshot {
        AgentSnapshot {
            id: self.id,
            agent_type: self.agent_type.clone(),
            fields: self.profile.clone(),
            redacted: BTreeSet::new(),
        }
    }

    /// What other agents may see: public fields only. Private field names are
    /// kept (without values) so that a request for them is recognisable.
    pub fn public_view(&self, spec: &AgentTypeSpec) -> AgentSnapshot {
        let mut fields = ValueMap::new();
        let mut redacted = BTreeSet::new();
        for (k, v) in &self.profile {
            if spec.is_private(k) {
                redacted.insert(k.clone());
            } else {
                fields.insert(k.clone(), v.clone());
            }
        }
        AgentSnapshot { id: self.id, agent_type: self.agent_type.clone(), fields, redacted }
    }

    /// Assign `field = value`, checking the declared kind.
    pub fn set_field(&mut self, spec: &AgentTypeSpec, field: &str, value: Value) -> Result<(), ProfileError> {
        let decl = spec.profile_schema.get(field).ok_or_else(|| ProfileError::UnknownField {
            agent: self.id,
            agent_type: spec.name.clone(),
            field: field.to_string(),
        })?;
        if !decl.kind.accepts(&value) {
            return Err(ProfileError::TypeMismatch {
                agent: self.id,
                field: field.to_string(),
                expected: decl.kind.to_string(),
                got: value.kind_name().to_string(),
            });
        }
        self.profile.insert(field.to_string(), value);
        Ok(())
    }
}

pub fn check_profile(id: AgentId, spec: &AgentTypeSpec, profile: &ValueMap) -> Result<(), ProfileError> {
    for (field, decl) in &spec.profile_schema {
        let value = profile
            .get(field)
            .ok_or_else(|| ProfileError::MissingField { agent: id, field: field.clone() })?;
        if !decl.kind.accepts(value) {
            return Err(ProfileError::TypeMismatch {
                agent: id,
                field: field.clone(),
                expected: decl.kind.to_string(),
                got: value.kind_name().to_string(),
            });
        }
    }
    if let Some(extra) = profile.keys().find(|k| !spec.profile_schema.contains_key(*k)) {
        return Err(ProfileError::UnknownField {
            agent: id,
            agent_type: spec.name.clone(),
            field: extra.clone(),
        });
    }
    Ok(())
}

/// Read-only view of an agent handed to decision backends and prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub id: AgentId,
    pub agent_type: String,
    pub fields: ValueMap,
    /// Names of private fields withheld from this view.
    pub redacted: BTreeSet<String>,
}

impl AgentSnapshot {
    pub fn get(&self, field: &str) -> Option<&Value> {
        self.fields.get(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior_graph::{FieldKind, ProfileField, Visibility};

    fn spec() -> AgentTypeSpec {
        AgentTypeSpec {
            name: "Student".into(),
            memory_capacity: 4,
            profile_schema: [
                ("music".to_string(), ProfileField { kind: FieldKind::Text, visibility: Visibility::Public }),
                ("secret".to_string(), ProfileField { kind: FieldKind::Real, visibility: Visibility::Private }),
            ]
            .into_iter()
            .collect(),
        }
    }

    fn profile() -> ValueMap {
        [("music".to_string(), Value::from("jazz")), ("secret".to_string(), Value::Real(0.25))]
            .into_iter()
            .collect()
    }

    #[test]
    fn profile_must_conform() {
        let s = spec();
        AgentRecord::new(AgentId(1), &s, profile()).unwrap();
        let mut missing = profile();
        missing.remove("secret");
        assert!(matches!(AgentRecord::new(AgentId(1), &s, missing), Err(ProfileError::MissingField { .. })));
        let mut wrong = profile();
        wrong.insert("music".into(), Value::Int(3));
        assert!(matches!(AgentRecord::new(AgentId(1), &s, wrong), Err(ProfileError::TypeMismatch { .. })));
        let mut extra = profile();
        extra.insert("shoe".into(), Value::Int(3));
        assert!(matches!(AgentRecord::new(AgentId(1), &s, extra), Err(ProfileError::UnknownField { .. })));
    }

    #[test]
    fn public_view_withholds_private_values() {
        let s = spec();
        let a = AgentRecord::new(AgentId(1), &s, profile()).unwrap();
        let view = a.public_view(&s);
        assert!(view.get("secret").is_none());
        assert!(view.redacted.contains("secret"));
        assert_eq!(view.get("music"), Some(&Value::from("jazz")));
        assert!(a.self_view().get("secret").is_some());
    }
}
