//! Leader-follower public goods game. Leaders contribute first; followers
//! observe the amount and whether it was chosen or assigned, then contribute;
//! the leader settles the round's payoffs exactly.

use std::collections::BTreeMap;
use std::sync::{Mutex, OnceLock};

use num_rational::Ratio;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};
use thiserror::Error;

use super::{config_error, field_int, field_text};
use crate::agent::{AgentId, AgentRecord, DecisionResponse, RuleBackend};
use crate::behavior_graph::{Relationship, ScenarioSpec};
use crate::kernel::{
    HandlerContext, HandlerError, MetricsSnapshot, ModelError, Population, ScenarioModel, SimEvent,
    SimulationResult, Target, World,
};
use crate::seed::rng_from_seed;
use crate::value::{Value, ValueMap};

pub const LEADER: &str = "Leader";
pub const FOLLOWER: &str = "Follower";
pub const LEVELS: [i64; 3] = [2, 5, 8];

pub type Tokens = Ratio<i64>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PgError {
    #[error("contribution {contribution} outside [0, {endowment}]")]
    OutOfRange { contribution: i64, endowment: i64 },
    #[error("no contributions")]
    Empty,
}

/// `payoff_i = e - c_i + m * sum(c) / n`, exactly.
pub fn pg_payoff(contributions: &[i64], endowment: i64, multiplier: Tokens) -> Result<Vec<Tokens>, PgError> {
    if contributions.is_empty() {
        return Err(PgError::Empty);
    }
    if let Some(&c) = contributions.iter().find(|&&c| !(0..=endowment).contains(&c)) {
        return Err(PgError::OutOfRange { contribution: c, endowment });
    }
    let n = contributions.len() as i64;
    let share = multiplier * Tokens::from_integer(contributions.iter().sum::<i64>()) / Tokens::from_integer(n);
    Ok(contributions.iter().map(|&c| Tokens::from_integer(endowment - c) + share).collect())
}

/// Exact rational from a decimal literal such as `1.6`.
pub fn ratio_from_decimal(x: f64) -> Option<Tokens> {
    let text = format!("{x}");
    let (int, frac) = text.split_once('.').unwrap_or((&text, ""));
    let den = 10i64.checked_pow(frac.len() as u32)?;
    let digits: i64 = format!("{int}{frac}").parse().ok()?;
    Some(Tokens::new(digits, den))
}

/// Planted follower response: `clamp(round(w_leader * L + w_mechanism * forced + eps), 0, e)`
/// with `eps ~ N(0, noise_sd)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerRule {
    pub w_leader: f64,
    pub w_mechanism: f64,
    pub noise_sd: f64,
    pub endowment: i64,
}

impl FollowerRule {
    pub fn contribution(&self, leader_c: i64, forced: bool, eps: f64) -> i64 {
        let raw = self.w_leader * leader_c as f64 + if forced { self.w_mechanism } else { 0.0 } + eps;
        (raw.round() as i64).clamp(0, self.endowment)
    }

    pub fn sample(&self, leader_c: i64, forced: bool, rng: &mut impl Rng) -> i64 {
        let eps = if self.noise_sd > 0.0 {
            Normal::new(0.0, self.noise_sd).expect("positive sd").sample(rng)
        } else {
            0.0
        };
        self.contribution(leader_c, forced, eps)
    }

    /// Exact distribution of the contribution in one condition.
    pub fn distribution(&self, leader_c: i64, forced: bool) -> Vec<f64> {
        let mu = self.w_leader * leader_c as f64 + if forced { self.w_mechanism } else { 0.0 };
        let e = self.endowment;
        let phi = StdNormal::new(0.0, 1.0).expect("standard normal");
        let cdf = |k: f64| if self.noise_sd > 0.0 { phi.cdf((k - mu) / self.noise_sd) } else { f64::from(u8::from(mu < k)) };
        (0..=e)
            .map(|k| {
                let lo = if k == 0 { 0.0 } else { cdf(k as f64 - 0.5) };
                let hi = if k == e { 1.0 } else { cdf(k as f64 + 0.5) };
                hi - lo
            })
            .collect()
    }

    /// Population standardized effects `(leader, mechanism)` over the balanced
    /// 2 x 3 design.
    pub fn standardized_effects(&self) -> (f64, f64) {
        let cells: Vec<(f64, f64, f64, f64)> = LEVELS
            .iter()
            .flat_map(|&l| [false, true].map(move |f| (l, f)))
            .map(|(l, f)| {
                let d = self.distribution(l, f);
                let m1: f64 = d.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
                let m2: f64 = d.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum();
                (l as f64, f64::from(u8::from(f)), m1, m2)
            })
            .collect();
        let n = cells.len() as f64;
        let mean = |g: &dyn Fn(&(f64, f64, f64, f64)) -> f64| cells.iter().map(g).sum::<f64>() / n;
        let (ml, mf, my, my2) = (mean(&|c| c.0), mean(&|c| c.1), mean(&|c| c.2), mean(&|c| c.3));
        let var_y = my2 - my * my;
        let var_l = mean(&|c| (c.0 - ml).powi(2));
        let var_f = mean(&|c| (c.1 - mf).powi(2));
        let cov_l = mean(&|c| (c.0 - ml) * c.2);
        let cov_f = mean(&|c| (c.1 - mf) * c.2);
        (cov_l / (var_l * var_y).sqrt(), cov_f / (var_f * var_y).sqrt())
    }

    /// Choose `w_mechanism` and `noise_sd` so the population standardized
    /// effects equal the targets after rounding and clamping.
    pub fn calibrate(w_leader: f64, target_leader: f64, target_mechanism: f64, endowment: i64) -> Self {
        let with = |w_mechanism, noise_sd| FollowerRule { w_leader, w_mechanism, noise_sd, endowment };
        let solve_mechanism = |sd: f64| {
            let (mut lo, mut hi) = (0.0, 10.0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if with(mid, sd).standardized_effects().1 < target_mechanism {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let (mut lo, mut hi) = (1e-3, 20.0);
        for _ in 0..100 {
            let sd = 0.5 * (lo + hi);
            if with(solve_mechanism(sd), sd).standardized_effects().0 > target_leader {
                lo = sd;
            } else {
                hi = sd;
            }
        }
        let sd = 0.5 * (lo + hi);
        with(solve_mechanism(sd), sd)
    }
}

/// [`FollowerRule::calibrate`], memoized per argument tuple.
pub fn calibrated_follower_rule(w_leader: f64, target_leader: f64, target_mechanism: f64, endowment: i64) -> FollowerRule {
    static CACHE: OnceLock<Mutex<BTreeMap<[u64; 4], FollowerRule>>> = OnceLock::new();
    let key = [w_leader.to_bits(), target_leader.to_bits(), target_mechanism.to_bits(), endowment as u64];
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.lock().unwrap().get(&key) {
        return *rule;
    }
    let rule = FollowerRule::calibrate(w_leader, target_leader, target_mechanism, endowment);
    cache.lock().unwrap().insert(key, rule);
    rule
}

/// Calibrated rule for the default anchors (0.794, 0.104, e = 10).
pub fn default_follower_rule() -> FollowerRule {
    calibrated_follower_rule(0.794, 0.794, 0.104, 10)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgConfig {
    pub players: usize,
    pub endowment: i64,
    pub multiplier: Tokens,
    pub cycles: u32,
    pub groups: usize,
    pub rule: FollowerRule,
}

impl PgConfig {
    pub fn from_spec(spec: &ScenarioSpec) -> Result<Self, ModelError> {
        let players = spec.env_int("players", 4);
        let endowment = spec.env_int("endowment", 10);
        if players < 2 || endowment < 1 {
            return Err(config_error(spec, "need at least 2 players and a positive endowment"));
        }
        let multiplier = ratio_from_decimal(spec.env_real("multiplier", 1.6))
            .ok_or_else(|| config_error(spec, "multiplier is not a finite decimal"))?;
        if multiplier <= Tokens::from_integer(1) || multiplier >= Tokens::from_integer(players) {
            return Err(config_error(spec, "multiplier must satisfy 1 < m < players"));
        }
        let groups = spec.population.get(LEADER).copied().unwrap_or(0) as usize;
        let followers = spec.population.get(FOLLOWER).copied().unwrap_or(0) as usize;
        if groups == 0 || followers != groups * (players as usize - 1) {
            return Err(config_error(spec, format!("{followers} followers do not fill {groups} groups of {players}")));
        }
        let w_leader = spec.env_real("w_leader", 0.794);
        let rule = match (spec.environment.get("w_mechanism"), spec.environment.get("noise_sd")) {
            (Some(w), Some(sd)) => FollowerRule {
                w_leader,
                w_mechanism: w.as_real().unwrap_or(0.0),
                noise_sd: sd.as_real().unwrap_or(0.0),
                endowment,
            },
            _ => {
                let target_leader = spec.env_real("target_leader_beta", w_leader);
                let target_mech = spec.env_real("target_mechanism_beta", 0.104);
                calibrated_follower_rule(w_leader, target_leader, target_mech, endowment)
            }
        };
        Ok(PgConfig {
            players: players as usize,
            endowment,
            multiplier,
            cycles: spec.env_int("cycles", 1).max(1) as u32,
            groups,
            rule,
        })
    }
}

fn parse_list(text: &str) -> Vec<i64> {
    text.split(',').filter(|s| !s.is_empty()).filter_map(|s| s.parse().ok()).collect()
}

fn parse_ratios(text: &str) -> Vec<Tokens> {
    text.split(' ').filter(|s| !s.is_empty()).filter_map(|s| s.parse().ok()).collect()
}

/// `|sum(payoffs) - (n e + (m - 1) sum(c))|` for one settlement.
pub fn conservation_residual(contributions: &[i64], payoffs: &[Tokens], endowment: i64, multiplier: Tokens) -> Tokens {
    let n = contributions.len() as i64;
    let total: Tokens = payoffs.iter().copied().sum();
    let c: i64 = contributions.iter().sum();
    let expected = Tokens::from_integer(n * endowment) + (multiplier - 1) * Tokens::from_integer(c);
    let d = total - expected;
    if d < Tokens::from_integer(0) {
        -d
    } else {
        d
    }
}

fn rule_backend() -> RuleBackend {
    RuleBackend::new("public_goods", |req| match req.node.as_str() {
        "leader_contribute" => {
            let level = req.agent.get("level").and_then(Value::as_int).unwrap_or(5);
            DecisionResponse::action("follower_decide").with("amount", level)
        }
        "follower_decide" => {
            let rule = FollowerRule {
                w_leader: req.features.get("w_leader").and_then(Value::as_real).unwrap_or(0.0),
                w_mechanism: req.features.get("w_mechanism").and_then(Value::as_real).unwrap_or(0.0),
                noise_sd: req.features.get("noise_sd").and_then(Value::as_real).unwrap_or(0.0),
                endowment: req.features.get("endowment").and_then(Value::as_int).unwrap_or(10),
            };
            let leader_c = req.trigger.payload.get("amount").and_then(Value::as_int).unwrap_or(0);
            let forced = req.trigger.payload.get("mechanism").and_then(Value::as_text) == Some("forced");
            let amount = rule.sample(leader_c, forced, &mut rng_from_seed(req.seed));
            DecisionResponse::action("settle_payoffs").with("amount", amount)
        }
        _ => DecisionResponse::skip(),
    })
}

const LEADER_TEMPLATE: &str = "You lead a group of {env.players} in a public goods game with an endowment of \
{env.endowment} tokens and a {env.multiplier}x multiplier. Your contribution is {self.mechanism}: level {self.level}.\n\
Reply `ACTION: follower_decide` and a line `amount: <tokens>`.";

const FOLLOWER_TEMPLATE: &str = "You play a public goods game with an endowment of {env.endowment} tokens and a \
{env.multiplier}x multiplier. Your group leader contributed {event.amount} tokens; the contribution was \
{event.mechanism}.\nReply `ACTION: settle_payoffs` and a line `amount: <tokens>` between 0 and {env.endowment}.";

#[derive(Debug, Clone, Copy, Default)]
pub struct PublicGoodsModel;

impl PublicGoodsModel {
    fn leader_contribute(&self, ctx: &mut HandlerContext<'_>, agent: &mut AgentRecord, cfg: &PgConfig) -> Result<(), HandlerError> {
        if ctx.round > cfg.cycles {
            return Ok(());
        }
        let decision = ctx.decide(agent, None, ValueMap::new())?;
        if decision.is_skip() {
            return Ok(());
        }
        let level = agent.get("level").and_then(Value::as_int).unwrap_or(0);
        let amount = decision.payload.get("amount").and_then(Value::as_int).unwrap_or(level).clamp(0, cfg.endowment);
        let mechanism = field_text(&agent.profile, "mechanism")?;
        let followers: Vec<AgentId> = ctx.neighbors(agent.id).iter().map(|&(f, _)| f).collect();
        for f in followers {
            let payload = [
                ("amount".to_string(), Value::Int(amount)),
                ("mechanism".to_string(), Value::from(mechanism.as_str())),
                ("cycle".to_string(), Value::Int(i64::from(ctx.round))),
            ]
            .into_iter()
            .collect();
            ctx.emit("follower_decide", Target::Agent(f), payload)?;
        }
        Ok(())
    }

    fn follower_decide(&self, ctx: &mut HandlerContext<'_>, agent: &mut AgentRecord, event: &SimEvent, cfg: &PgConfig) -> Result<(), HandlerError> {
        let features: ValueMap = [
            ("w_leader".to_string(), Value::Real(cfg.rule.w_leader)),
            ("w_mechanism".to_string(), Value::Real(cfg.rule.w_mechanism)),
            ("noise_sd".to_string(), Value::Real(cfg.rule.noise_sd)),
            ("endowment".to_string(), Value::Int(cfg.endowment)),
        ]
        .into_iter()
        .collect();
        let decision = ctx.decide(agent, None, features)?;
        if decision.is_skip() {
            return Ok(());
        }
        let amount = match decision.payload.get("amount").and_then(Value::as_int) {
            Some(a) => a.clamp(0, cfg.endowment),
            None => ctx.rng().random_range(0..=cfg.endowment),
        };
        let leader_amount = field_int(&event.payload, "amount")?;
        let cycle = field_int(&event.payload, "cycle")?;
        let spec = ctx.spec().agent_type(FOLLOWER).expect("validated type");
        agent.set_field(spec, "last_contribution", Value::Int(amount))?;
        agent.set_field(spec, "last_cycle", Value::Int(cycle))?;
        let leader = AgentId(field_int(&agent.profile, "leader")? as u64);
        let payload = [
            ("amount".to_string(), Value::Int(amount)),
            ("leader_amount".to_string(), Value::Int(leader_amount)),
            ("mechanism".to_string(), event.payload["mechanism"].clone()),
            ("cycle".to_string(), Value::Int(cycle)),
        ]
        .into_iter()
        .collect();
        ctx.emit("settle_payoffs", Target::Agent(leader), payload)?;
        Ok(())
    }

    fn settle(&self, ctx: &mut HandlerContext<'_>, agent: &mut AgentRecord, event: &SimEvent, cfg: &PgConfig) -> Result<(), HandlerError> {
        let cycle = field_int(&event.payload, "cycle")?;
        let spec = ctx.spec().agent_type(LEADER).expect("validated type").clone();
        let mut pending = if field_int(&agent.profile, "pending_cycle")? == cycle {
            parse_list(&field_text(&agent.profile, "pending")?)
        } else {
            Vec::new()
        };
        pending.push(field_int(&event.payload, "amount")?);
        if pending.len() + 1 < cfg.players {
            agent.set_field(&spec, "pending_cycle", Value::Int(cycle))?;
            agent.set_field(&spec, "pending", Value::Text(pending.iter().map(i64::to_string).collect::<Vec<_>>().join(",")))?;
            return Ok(());
        }
        let mut contributions = vec![field_int(&event.payload, "leader_amount")?];
        contributions.extend(pending);
        let payoffs = pg_payoff(&contributions, cfg.endowment, cfg.multiplier).map_err(|e| HandlerError::new(e.to_string()))?;
        let settled = field_int(&agent.profile, "settled")? + 1;
        let join = |xs: Vec<String>, sep: &str| xs.join(sep);
        agent.set_field(&spec, "pending_cycle", Value::Int(0))?;
        agent.set_field(&spec, "pending", Value::Text(String::new()))?;
        agent.set_field(&spec, "settled", Value::Int(settled))?;
        agent.set_field(&spec, "contributions", Value::Text(join(contributions.iter().map(i64::to_string).collect(), ",")))?;
        agent.set_field(&spec, "payoffs", Value::Text(join(payoffs.iter().map(Tokens::to_string).collect(), " ")))?;
        Ok(())
    }
}

impl ScenarioModel for PublicGoodsModel {
    fn name(&self) -> &'static str {
        "public_goods"
    }

    fn populate(&self, spec: &ScenarioSpec, _seed: u64) -> Result<Population, ModelError> {
        let cfg = PgConfig::from_spec(spec)?;
        let leader_t = spec.agent_type(LEADER).ok_or_else(|| config_error(spec, "missing Leader type"))?;
        let follower_t = spec.agent_type(FOLLOWER).ok_or_else(|| config_error(spec, "missing Follower type"))?;
        let mut agents = Vec::new();
        let mut relationships = Vec::new();
        for g in 0..cfg.groups as u64 {
            let leader = g * cfg.players as u64;
            let profile: ValueMap = [
                ("level".to_string(), Value::Int(5)),
                ("mechanism".to_string(), Value::from("voluntary")),
                ("pending_cycle".to_string(), Value::Int(0)),
                ("pending".to_string(), Value::from("")),
                ("settled".to_string(), Value::Int(0)),
                ("contributions".to_string(), Value::from("")),
                ("payoffs".to_string(), Value::from("")),
            ]
            .into_iter()
            .collect();
            agents.push(AgentRecord::new(AgentId(leader), leader_t, profile)?);
            for k in 1..cfg.players as u64 {
                let profile: ValueMap = [
                    ("leader".to_string(), Value::Int(leader as i64)),
                    ("last_contribution".to_string(), Value::Int(-1)),
                    ("last_cycle".to_string(), Value::Int(0)),
                ]
                .into_iter()
                .collect();
                agents.push(AgentRecord::new(AgentId(leader + k), follower_t, profile)?);
                relationships.push(Relationship { a: leader, b: leader + k, weight: 1.0 });
            }
        }
        Ok(Population { agents, relationships, subscriptions: Vec::new() })
    }

    fn handle(&self, ctx: &mut HandlerContext<'_>, agent: &mut AgentRecord, event: &SimEvent) -> Result<(), HandlerError> {
        let cfg = PgConfig::from_spec(ctx.spec()).map_err(|e| HandlerError::new(e.to_string()))?;
        match ctx.node.action_name.as_str() {
            "leader_contribute" => self.leader_contribute(ctx, agent, &cfg),
            "follower_decide" => self.follower_decide(ctx, agent, event, &cfg),
            "settle_payoffs" => self.settle(ctx, agent, event, &cfg),
            other => Err(HandlerError::new(format!("no public goods handler for `{other}`"))),
        }
    }

    fn rule(&self) -> RuleBackend {
        rule_backend()
    }

    fn metrics(&self, world: &World, agents: &BTreeMap<AgentId, AgentRecord>) -> MetricsSnapshot {
        let Ok(cfg) = PgConfig::from_spec(world.spec()) else { return MetricsSnapshot::new() };
        let mut residual = Tokens::from_integer(0);
        let mut settled_groups = 0.0;
        let mut payoff_total = Tokens::from_integer(0);
        let mut payoff_count = 0i64;
        let mut contrib = Vec::new();
        for a in agents.values() {
            if a.agent_type == LEADER {
                let c = parse_list(a.get("contributions").and_then(Value::as_text).unwrap_or(""));
                let p = parse_ratios(a.get("payoffs").and_then(Value::as_text).unwrap_or(""));
                if !c.is_empty() {
                    settled_groups += 1.0;
                    residual += conservation_residual(&c, &p, cfg.endowment, cfg.multiplier);
                    payoff_count += p.len() as i64;
                    payoff_total += p.iter().copied().sum::<Tokens>();
                }
            } else if let Some(c) = a.get("last_contribution").and_then(Value::as_int).filter(|&c| c >= 0) {
                contrib.push(c as f64);
            }
        }
        let ratio_f64 = |r: Tokens| *r.numer() as f64 / *r.denom() as f64;
        let mut m = MetricsSnapshot::new();
        m.insert("conservation_residual".into(), ratio_f64(residual));
        m.insert("settled_groups".into(), settled_groups);
        if payoff_count > 0 {
            m.insert("mean_payoff".into(), ratio_f64(payoff_total / Tokens::from_integer(payoff_count)));
        }
        if !contrib.is_empty() {
            m.insert("mean_follower_contribution".into(), contrib.iter().sum::<f64>() / contrib.len() as f64);
        }
        m
    }

    fn predicate(&self, name: &str, world: &World, agents: &BTreeMap<AgentId, AgentRecord>) -> Result<bool, ModelError> {
        match name {
            "all_settled" => {
                let cfg = PgConfig::from_spec(world.spec())?;
                Ok(agents
                    .values()
                    .filter(|a| a.agent_type == LEADER)
                    .all(|a| a.get("settled").and_then(Value::as_int) == Some(i64::from(cfg.cycles))))
            }
            other => Err(ModelError::UnknownPredicate(other.to_string())),
        }
    }

    /// One row per follower decision: `leader_amount`, `forced`, `contribution`, `cycle`.
    fn observations(&self, result: &SimulationResult) -> Vec<ValueMap> {
        result
            .events
            .iter()
            .filter(|e| e.event_type == "follower_contribution")
            .map(|e| {
                let forced = e.payload.get("mechanism").and_then(Value::as_text) == Some("forced");
                [
                    ("follower".to_string(), Value::Int(e.source.agent().map_or(-1, |a| a.0 as i64))),
                    ("leader_amount".to_string(), e.payload["leader_amount"].clone()),
                    ("forced".to_string(), Value::Int(i64::from(forced))),
                    ("contribution".to_string(), e.payload["amount"].clone()),
                    ("cycle".to_string(), e.payload["cycle"].clone()),
                ]
                .into_iter()
                .collect()
            })
            .collect()
    }

    fn prompt_templates(&self) -> BTreeMap<String, String> {
        [
            ("leader_contribute".to_string(), LEADER_TEMPLATE.to_string()),
            ("follower_decide".to_string(), FOLLOWER_TEMPLATE.to_string()),
        ]
        .into_iter()
        .collect()
    }
}
