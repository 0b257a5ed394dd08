//! Prompt templates for text backends.
//!
//! Placeholders are `{scope.field}` with scope one of `self`, `partner`,
//! `env`, `event` or `feature`, plus the bare names `{node}` and
//! `{actions}`. `{{` and `}}` produce literal braces.

use thiserror::Error;

use super::decision::DecisionRequest;
use super::record::AgentSnapshot;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("unresolved placeholder `{{{0}}}`")]
    Unresolved(String),
    #[error("visibility violation: `{{{0}}}` is private to another agent")]
    VisibilityViolation(String),
    #[error("unterminated placeholder at byte {0}")]
    Unterminated(usize),
}

fn snapshot_field(snap: &AgentSnapshot, field: &str, placeholder: &str) -> Result<String, PromptError> {
    if field == "id" {
        return Ok(snap.id.to_string());
    }
    if field == "type" {
        return Ok(snap.agent_type.clone());
    }
    if snap.redacted.contains(field) {
        return Err(PromptError::VisibilityViolation(placeholder.to_string()));
    }
    snap.get(field)
        .map(ToString::to_string)
        .ok_or_else(|| PromptError::Unresolved(placeholder.to_string()))
}

fn resolve(placeholder: &str, req: &DecisionRequest) -> Result<String, PromptError> {
    let unresolved = || PromptError::Unresolved(placeholder.to_string());
    match placeholder {
        "node" => return Ok(req.node.clone()),
        "actions" => return Ok(req.allowed_actions.join(", ")),
        _ => {}
    }
    let (scope, field) = placeholder.split_once('.').ok_or_else(unresolved)?;
    match scope {
        "self" => snapshot_field(&req.agent, field, placeholder),
        "partner" => {
            let partner = req.partner.as_ref().ok_or_else(unresolved)?;
            snapshot_field(partner, field, placeholder)
        }
        "env" => req.environment.get(field).map(ToString::to_string).ok_or_else(unresolved),
        "event" => req.trigger.payload.get(field).map(ToString::to_string).ok_or_else(unresolved),
        "feature" => req.features.get(field).map(ToString::to_string).ok_or_else(unresolved),
        _ => Err(unresolved()),
    }
}

/// Substitute every placeholder in `template` from `request`.
pub fn render_prompt(template: &str, request: &DecisionRequest) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    let mut offset = 0;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if tail.starts_with("{{") {
            out.push('{');
            rest = &tail[2..];
            offset += i + 2;
        } else if tail.starts_with("}}") {
            out.push('}');
            rest = &tail[2..];
            offset += i + 2;
        } else if tail.starts_with('}') {
            out.push('}');
            rest = &tail[1..];
            offset += i + 1;
        } else {
            let end = tail.find('}').ok_or(PromptError::Unterminated(offset + i))?;
            out.push_str(&resolve(&tail[1..end], request)?);
            rest = &tail[end + 1..];
            offset += i + end + 1;
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::decision::TriggerView;
    use crate::agent::record::AgentId;
    use crate::value::{Value, ValueMap};
    use std::collections::BTreeSet;

    fn req() -> DecisionRequest {
        let me = AgentSnapshot {
            id: AgentId(1),
            agent_type: "Resident".into(),
            fields: [("music".to_string(), Value::from("jazz")), ("wealth".to_string(), Value::Real(0.5))]
                .into_iter()
                .collect(),
            redacted: BTreeSet::new(),
        };
        let partner = AgentSnapshot {
            id: AgentId(2),
            agent_type: "Resident".into(),
            fields: [("music".to_string(), Value::from("rock"))].into_iter().collect(),
            redacted: ["wealth".to_string()].into_iter().collect(),
        };
        DecisionRequest {
            node: "select_partner".into(),
            agent: me,
            partner: Some(partner),
            trigger: TriggerView { event_type: "round_start".into(), source: None, payload: ValueMap::new() },
            environment: [("width".to_string(), Value::Int(10))].into_iter().collect(),
            features: ValueMap::new(),
            allowed_actions: vec!["interact".into()],
            seed: 0,
        }
    }

    #[test]
    fn no_placeholders_is_identity() {
        let t = "Pick one action.";
        assert_eq!(render_prompt(t, &req()).unwrap(), t);
    }

    #[test]
    fn self_field_substitutes() {
        assert_eq!(render_prompt("{self.music}", &req()).unwrap(), "jazz");
        assert_eq!(
            render_prompt("{self.id} likes {self.music}, {partner.id} likes {partner.music} on {env.width}; {{x}} [{actions}]", &req())
                .unwrap(),
            "1 likes jazz, 2 likes rock on 10; {x} [interact]"
        );
    }

    #[test]
    fn partner_private_field_is_a_violation() {
        assert_eq!(
            render_prompt("{partner.wealth}", &req()),
            Err(PromptError::VisibilityViolation("partner.wealth".into()))
        );
        // the agent's own private value is fine
        assert_eq!(render_prompt("{self.wealth}", &req()).unwrap(), "0.5");
    }

    #[test]
    fn unresolved_and_unterminated() {
        assert_eq!(render_prompt("{self.age}", &req()), Err(PromptError::Unresolved("self.age".into())));
        assert_eq!(render_prompt("{bogus}", &req()), Err(PromptError::Unresolved("bogus".into())));
        assert_eq!(render_prompt("ab {self.music", &req()), Err(PromptError::Unterminated(3)));
    }
}
