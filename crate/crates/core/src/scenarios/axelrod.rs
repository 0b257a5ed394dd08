//! Axelrod cultural dissemination: residents on a non-wrapping grid adopt a
//! neighbor's trait with probability equal to their cultural similarity.

use std::collections::BTreeMap;

use rand::Rng;

use super::{config_error, field_int, field_text};
use crate::agent::{AgentId, AgentRecord, DecisionResponse, RuleBackend};
use crate::analysis::{
    adjacent_pairs, cluster_sizes, diversity, diversity_vectors, dominant_share, high_sim_fraction,
    identical_pair_count, local_convergence, similarity, CultureGrid,
};
use crate::behavior_graph::{FieldKind, Relationship, ScenarioSpec};
use crate::kernel::{
    HandlerContext, HandlerError, MetricsSnapshot, ModelError, Population, ScenarioModel, SimEvent, Target, World,
};
use crate::seed::{mix, rng_from_seed, SimRng};
use crate::value::{Value, ValueMap};

pub const AGENT_TYPE: &str = "Resident";

/// Grid shape and the categorical features of the resident type, in name order.
#[derive(Debug, Clone, PartialEq)]
pub struct AxelrodConfig {
    pub width: usize,
    pub height: usize,
    pub features: Vec<(String, Vec<String>)>,
}

impl AxelrodConfig {
    pub fn from_spec(spec: &ScenarioSpec) -> Result<Self, ModelError> {
        let resident = spec
            .agent_type(AGENT_TYPE)
            .ok_or_else(|| config_error(spec, format!("missing agent type `{AGENT_TYPE}`")))?;
        let features: Vec<(String, Vec<String>)> = resident
            .profile_schema
            .iter()
            .filter_map(|(name, f)| match &f.kind {
                FieldKind::Categorical(values) => Some((name.clone(), values.clone())),
                _ => None,
            })
            .collect();
        if features.is_empty() {
            return Err(config_error(spec, "resident profile declares no categorical features"));
        }
        let width = spec.env_int("width", 10);
        let height = spec.env_int("height", 10);
        if width < 1 || height < 1 {
            return Err(config_error(spec, "grid dimensions must be positive"));
        }
        let (width, height) = (width as usize, height as usize);
        let declared = spec.population.get(AGENT_TYPE).copied().unwrap_or(0);
        if declared != (width * height) as u64 {
            return Err(config_error(spec, format!("population {declared} does not fill a {width}x{height} grid")));
        }
        Ok(AxelrodConfig { width, height, features })
    }

    pub fn agents(&self) -> usize {
        self.width * self.height
    }

    /// Culture vector of a profile as value indices.
    pub fn culture(&self, fields: &ValueMap) -> Vec<usize> {
        self.features
            .iter()
            .map(|(name, values)| {
                fields
                    .get(name)
                    .and_then(Value::as_text)
                    .and_then(|v| values.iter().position(|x| x == v))
                    .unwrap_or(usize::MAX)
            })
            .collect()
    }

    pub fn profile(&self, culture: &[usize]) -> ValueMap {
        self.features
            .iter()
            .zip(culture)
            .map(|((name, values), &i)| (name.clone(), Value::from(values[i].as_str())))
            .collect()
    }

    pub fn grid(&self, agents: &BTreeMap<AgentId, AgentRecord>) -> CultureGrid {
        let cells = agents.values().map(|a| self.culture(&a.profile)).collect();
        CultureGrid::new(self.width, self.height, cells).expect("population fills the grid")
    }
}

/// One interaction attempt of `a` with `b`: with probability `sim(a, b)` the
/// agent copies one uniformly chosen trait on which they differ.
pub fn axelrod_step(a: &[usize], b: &[usize], rng: &mut SimRng) -> Vec<usize> {
    let sim = similarity(a, b).unwrap_or(0.0);
    let mut out = a.to_vec();
    if sim <= 0.0 || sim >= 1.0 || rng.random::<f64>() >= sim {
        return out;
    }
    let differing: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
    let f = differing[rng.random_range(0..differing.len())];
    out[f] = b[f];
    out
}

/// Interact with probability equal to the `similarity` feature.
pub fn axelrod_rule() -> RuleBackend {
    RuleBackend::new("axelrod", |req| {
        let sim = req.features.get("similarity").and_then(Value::as_real).unwrap_or(0.0);
        let mut rng = rng_from_seed(req.seed);
        if rng.random::<f64>() < sim {
            let partner = req.partner.as_ref().map_or(-1, |p| p.id.0 as i64);
            DecisionResponse::action("interact").with("partner", partner)
        } else {
            DecisionResponse::skip()
        }
    })
}

const SELECT_TEMPLATE: &str = "You are resident {self.id}. Your culture: music {self.music}, diet {self.diet}, \
fashion {self.fashion}, politics {self.politics}, leisure {self.leisure}.\n\
Your neighbor {partner.id}: music {partner.music}, diet {partner.diet}, fashion {partner.fashion}, \
politics {partner.politics}, leisure {partner.leisure}.\n\
Do you engage with this neighbor? Reply `ACTION: interact` or `ACTION: skip`.";

#[derive(Debug, Clone, Copy, Default)]
pub struct AxelrodModel;

impl ScenarioModel for AxelrodModel {
    fn name(&self) -> &'static str {
        "axelrod"
    }

    fn populate(&self, spec: &ScenarioSpec, seed: u64) -> Result<Population, ModelError> {
        let cfg = AxelrodConfig::from_spec(spec)?;
        let resident = spec.agent_type(AGENT_TYPE).expect("checked by config");
        let mut rng = rng_from_seed(mix(&[seed, 0xA8E1]));
        let mut agents = Vec::with_capacity(cfg.agents());
        for id in 0..cfg.agents() as u64 {
            let culture: Vec<usize> = cfg.features.iter().map(|(_, v)| rng.random_range(0..v.len())).collect();
            let mut profile = cfg.profile(&culture);
            // any non-feature fields get neutral defaults
            for (name, f) in &resident.profile_schema {
                profile.entry(name.clone()).or_insert_with(|| super::default_value(&f.kind));
            }
            agents.push(AgentRecord::new(AgentId(id), resident, profile)?);
        }
        let mut relationships: Vec<Relationship> = adjacent_pairs(cfg.width, cfg.height)
            .into_iter()
            .map(|(a, b)| Relationship { a: a as u64, b: b as u64, weight: 1.0 })
            .collect();
        relationships.extend(spec.relationships.iter().cloned());
        Ok(Population { agents, relationships, subscriptions: Vec::new() })
    }

    fn handle(&self, ctx: &mut HandlerContext<'_>, agent: &mut AgentRecord, event: &SimEvent) -> Result<(), HandlerError> {
        let cfg = AxelrodConfig::from_spec(ctx.spec()).map_err(|e| HandlerError::new(e.to_string()))?;
        match ctx.node.action_name.as_str() {
            "select_partner" => {
                let neighbors = ctx.neighbors(agent.id);
                if neighbors.is_empty() {
                    return Ok(());
                }
                let partner = neighbors[ctx.rng().random_range(0..neighbors.len())].0;
                let view = ctx.peer(partner).ok_or_else(|| HandlerError::new(format!("no view of agent {partner}")))?;
                let sim = similarity(&cfg.culture(&agent.profile), &cfg.culture(&view.fields))
                    .map_err(|e| HandlerError::new(e.to_string()))?;
                let features: ValueMap = [("similarity".to_string(), Value::Real(sim))].into_iter().collect();
                let decision = ctx.decide(agent, Some(partner), features)?;
                if decision.is_skip() {
                    return Ok(());
                }
                let payload = [("partner".to_string(), Value::Int(partner.0 as i64))].into_iter().collect();
                ctx.emit("interact", Target::Agent(agent.id), payload)?;
            }
            "interact" => {
                let partner = AgentId(field_int(&event.payload, "partner")? as u64);
                let view = ctx.peer(partner).ok_or_else(|| HandlerError::new(format!("no view of agent {partner}")))?;
                let mine = cfg.culture(&agent.profile);
                let theirs = cfg.culture(&view.fields);
                let differing: Vec<usize> = (0..mine.len()).filter(|&i| mine[i] != theirs[i]).collect();
                if differing.is_empty() {
                    return Ok(());
                }
                let f = differing[ctx.rng().random_range(0..differing.len())];
                let (name, values) = &cfg.features[f];
                let payload = [
                    ("partner".to_string(), Value::Int(partner.0 as i64)),
                    ("feature".to_string(), Value::from(name.as_str())),
                    ("value".to_string(), Value::from(values[theirs[f]].as_str())),
                ]
                .into_iter()
                .collect();
                ctx.emit("update_culture", Target::Agent(agent.id), payload)?;
            }
            "update_culture" => {
                let feature = field_text(&event.payload, "feature")?;
                let value = field_text(&event.payload, "value")?;
                let spec = ctx.spec().agent_type(AGENT_TYPE).expect("checked by config");
                agent.set_field(spec, &feature, Value::Text(value))?;
            }
            other => return Err(HandlerError::new(format!("no axelrod handler for `{other}`"))),
        }
        Ok(())
    }

    fn rule(&self) -> RuleBackend {
        axelrod_rule()
    }

    fn metrics(&self, world: &World, agents: &BTreeMap<AgentId, AgentRecord>) -> MetricsSnapshot {
        let Ok(cfg) = AxelrodConfig::from_spec(world.spec()) else { return MetricsSnapshot::new() };
        let grid = cfg.grid(agents);
        let n = grid.len() as f64;
        let mut m = MetricsSnapshot::new();
        m.insert("local_convergence".into(), local_convergence(&grid).unwrap_or(1.0));
        m.insert("diversity".into(), diversity(&grid).expect("non-empty grid"));
        m.insert("diversity_vectors".into(), diversity_vectors(&grid.cells).expect("non-empty grid"));
        m.insert("high_sim_fraction".into(), high_sim_fraction(&grid, 0.6).unwrap_or(1.0));
        m.insert("identical_pairs".into(), identical_pair_count(&grid) as f64);
        let sizes = cluster_sizes(&grid);
        let in_size = |pred: &dyn Fn(usize) -> bool| -> f64 {
            sizes.iter().filter(|(s, _)| pred(**s)).map(|(s, c)| (s * c) as f64).sum::<f64>() / n
        };
        m.insert("singleton_share".into(), in_size(&|s| s == 1));
        m.insert("large_cluster_share".into(), in_size(&|s| s >= 4));
        let mut total = 0.0;
        for (i, (name, _)) in cfg.features.iter().enumerate() {
            let share = dominant_share(&grid.cells, i).expect("non-empty grid");
            total += share;
            m.insert(format!("dominant_share_{name}"), share);
        }
        m.insert("dominant_share_mean".into(), total / cfg.features.len() as f64);
        m
    }

    fn predicate(&self, name: &str, world: &World, agents: &BTreeMap<AgentId, AgentRecord>) -> Result<bool, ModelError> {
        let cfg = AxelrodConfig::from_spec(world.spec())?;
        let grid = cfg.grid(agents);
        match name {
            "all_identical" => Ok(grid.cells.windows(2).all(|w| w[0] == w[1])),
            "absorbing" => Ok(adjacent_pairs(grid.width, grid.height).into_iter().all(|(i, j)| {
                let s = similarity(&grid.cells[i], &grid.cells[j]).unwrap_or(0.0);
                s == 0.0 || s == 1.0
            })),
            other => Err(ModelError::UnknownPredicate(other.to_string())),
        }
    }

    fn prompt_templates(&self) -> BTreeMap<String, String> {
        [("select_partner".to_string(), SELECT_TEMPLATE.to_string())].into_iter().collect()
    }
}
