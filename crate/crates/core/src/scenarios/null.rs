//! Agents that wake each round, ask their backend, and do nothing. Used to
//! measure kernel and transport overhead.

use std::collections::BTreeMap;

use super::{config_error, default_value, field_int};
use crate::agent::{AgentId, AgentRecord, DecisionResponse, RuleBackend};
use crate::behavior_graph::{Relationship, ScenarioSpec};
use crate::kernel::{HandlerContext, HandlerError, MetricsSnapshot, ModelError, Population, ScenarioModel, SimEvent, World};
use crate::value::{Value, ValueMap};

#[derive(Debug, Clone, Copy, Default)]
pub struct NullModel;

impl ScenarioModel for NullModel {
    fn name(&self) -> &'static str {
        "null"
    }

    /// Agents of every declared type, linked in a ring by id.
    fn populate(&self, spec: &ScenarioSpec, _seed: u64) -> Result<Population, ModelError> {
        let mut agents = Vec::new();
        for (type_name, &count) in &spec.population {
            let t = spec.agent_type(type_name).ok_or_else(|| config_error(spec, format!("unknown type `{type_name}`")))?;
            for _ in 0..count {
                let profile: ValueMap =
                    t.profile_schema.iter().map(|(k, f)| (k.clone(), default_value(&f.kind))).collect();
                agents.push(AgentRecord::new(AgentId(agents.len() as u64), t, profile)?);
            }
        }
        let n = agents.len() as u64;
        let relationships = if n > 2 {
            (0..n).map(|i| Relationship { a: i, b: (i + 1) % n, weight: 1.0 }).collect()
        } else {
            Vec::new()
        };
        Ok(Population { agents, relationships, subscriptions: Vec::new() })
    }

    fn handle(&self, ctx: &mut HandlerContext<'_>, agent: &mut AgentRecord, _event: &SimEvent) -> Result<(), HandlerError> {
        ctx.decide(agent, None, ValueMap::new())?;
        if let Ok(w) = field_int(&agent.profile, "wakeups") {
            let spec = ctx.spec().agent_type(&agent.agent_type).expect("validated type");
            agent.set_field(spec, "wakeups", Value::Int(w + 1))?;
        }
        Ok(())
    }

    fn rule(&self) -> RuleBackend {
        RuleBackend::new("null", |_| DecisionResponse::skip())
    }

    fn metrics(&self, _world: &World, agents: &BTreeMap<AgentId, AgentRecord>) -> MetricsSnapshot {
        let wakeups: i64 = agents.values().filter_map(|a| a.get("wakeups").and_then(Value::as_int)).sum();
        [("agents".to_string(), agents.len() as f64), ("wakeups".to_string(), wakeups as f64)]
            .into_iter()
            .collect()
    }
}
