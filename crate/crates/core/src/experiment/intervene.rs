use std::collections::BTreeSet;

use thiserror::Error;

use super::plan::{GroupSpec, InterventionSpec};
use crate::agent::{AgentId, ProfileError};
use crate::behavior_graph::ScenarioSpec;
use crate::kernel::Population;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterventionError {
    #[error("group `{group}`: unknown agent type `{agent_type}`")]
    UnknownAgentType { group: String, agent_type: String },
    #[error("group `{group}`: `{agent_type}` has no field `{field}`")]
    UnknownField { group: String, agent_type: String, field: String },
    #[error("group `{group}`: {source}")]
    TypeMismatch { group: String, source: ProfileError },
}

/// `round(percentage / 100 * matching)`, halves rounded up.
pub fn selected_count(percentage: f64, matching: usize) -> usize {
    ((percentage / 100.0 * matching as f64).round() as usize).min(matching)
}

/// Check every field an intervention names against the scenario schemas.
pub fn check_intervention(spec: &ScenarioSpec, group: &str, i: &InterventionSpec) -> Result<(), InterventionError> {
    let types: Vec<_> = match &i.selector.agent_type {
        Some(t) => vec![spec.agent_type(t).ok_or_else(|| InterventionError::UnknownAgentType {
            group: group.to_string(),
            agent_type: t.clone(),
        })?],
        None => spec.agent_types.iter().collect(),
    };
    let mut fields = vec![&i.modification.field];
    fields.extend(i.selector.predicate.as_ref().map(|p| &p.field));
    for field in fields {
        if !types.iter().any(|t| t.profile_schema.contains_key(field)) {
            return Err(InterventionError::UnknownField {
                group: group.to_string(),
                agent_type: i.selector.agent_type.clone().unwrap_or_else(|| "*".into()),
                field: field.clone(),
            });
        }
    }
    Ok(())
}

/// Apply the group's interventions in order. Returns the agents modified.
///
/// Each intervention matches agents by type and predicate, then modifies the
/// `round(percentage% of matches)` with the smallest ids.
pub fn apply_interventions(
    population: &mut Population,
    spec: &ScenarioSpec,
    group: &GroupSpec,
) -> Result<BTreeSet<AgentId>, InterventionError> {
    let mut order: Vec<usize> = (0..population.agents.len()).collect();
    order.sort_by_key(|&i| population.agents[i].id);
    let mut modified = BTreeSet::new();
    for iv in &group.interventions {
        check_intervention(spec, &group.name, iv)?;
        let sel = &iv.selector;
        let matching: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| {
                let a = &population.agents[i];
                sel.agent_type.as_ref().is_none_or(|t| &a.agent_type == t)
                    && sel.predicate.as_ref().is_none_or(|p| a.get(&p.field).is_some_and(|v| p.matches(v)))
            })
            .collect();
        let n = selected_count(sel.percentage, matching.len());
        for &i in &matching[..n] {
            let agent = &mut population.agents[i];
            let type_spec = spec.agent_type(&agent.agent_type).ok_or_else(|| InterventionError::UnknownAgentType {
                group: group.name.clone(),
                agent_type: agent.agent_type.clone(),
            })?;
            if !type_spec.profile_schema.contains_key(&iv.modification.field) {
                return Err(InterventionError::UnknownField {
                    group: group.name.clone(),
                    agent_type: agent.agent_type.clone(),
                    field: iv.modification.field.clone(),
                });
            }
            agent
                .set_field(type_spec, &iv.modification.field, iv.modification.value.clone())
                .map_err(|source| InterventionError::TypeMismatch { group: group.name.clone(), source })?;
            modified.insert(agent.id);
        }
    }
    Ok(modified)
}
