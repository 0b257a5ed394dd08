//! Declarative scenario documents (`.onesim`).
//!
//! A scenario is a TOML document with the top-level keys `name`, `domain`,
//! optional `model`, `[termination]`, `[environment]`, `[population]`,
//! `[[agent_types]]`, `[[relationships]]`, `[[actions]]` and `[[events]]`.
//! Parsing is strict: unknown keys, unknown field kinds and every invariant
//! violation are hard errors naming the offending element.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::{Value, ValueMap};

/// Default sliding-window memory capacity.
pub const DEFAULT_MEMORY_CAPACITY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Communication,
    Demography,
    Economics,
    Law,
    OrganizationalStudies,
    PoliticalScience,
    Psychology,
    Sociology,
}

impl Domain {
    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::Communication => "communication",
            Domain::Demography => "demography",
            Domain::Economics => "economics",
            Domain::Law => "law",
            Domain::OrganizationalStudies => "organizational_studies",
            Domain::PoliticalScience => "political_science",
            Domain::Psychology => "psychology",
            Domain::Sociology => "sociology",
        }
    }
}

/// Kind of a profile or payload field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum FieldKind {
    Int,
    Real,
    Categorical(Vec<String>),
    Text,
    Bool,
}

impl FieldKind {
    pub fn accepts(&self, value: &Value) -> bool {
        match (self, value) {
            (FieldKind::Int, Value::Int(_)) => true,
            (FieldKind::Real, Value::Int(_) | Value::Real(_)) => true,
            (FieldKind::Text, Value::Text(_)) => true,
            (FieldKind::Bool, Value::Bool(_)) => true,
            (FieldKind::Categorical(values), Value::Text(s)) => values.iter().any(|v| v == s),
            _ => false,
        }
    }

    fn from_name(name: &str, values: Option<Vec<String>>) -> Option<Self> {
        match (name, values) {
            ("int", None) => Some(FieldKind::Int),
            ("real", None) => Some(FieldKind::Real),
            ("text", None) => Some(FieldKind::Text),
            ("bool", None) => Some(FieldKind::Bool),
            ("categorical", Some(v)) if !v.is_empty() => Some(FieldKind::Categorical(v)),
            _ => None,
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::Int => f.write_str("int"),
            FieldKind::Real => f.write_str("real"),
            FieldKind::Text => f.write_str("text"),
            FieldKind::Bool => f.write_str("bool"),
            FieldKind::Categorical(v) => write!(f, "categorical({})", v.join("|")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    #[default]
    Public,
    Private,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileField {
    pub kind: FieldKind,
    pub visibility: Visibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTypeSpec {
    pub name: String,
    pub memory_capacity: usize,
    pub profile_schema: BTreeMap<String, ProfileField>,
}

impl AgentTypeSpec {
    pub fn is_private(&self, field: &str) -> bool {
        self.profile_schema
            .get(field)
            .is_some_and(|f| f.visibility == Visibility::Private)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relationship {
    pub a: u64,
    pub b: u64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub agent_type: String,
    pub name: String,
    pub handler: String,
    pub is_start: bool,
    pub is_terminal: bool,
    /// Payload fields the handler reads from its triggering event.
    pub reads: BTreeSet<String>,
    /// Event types the handler may emit.
    pub emits: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSpec {
    pub event_type: String,
    pub from_action: String,
    pub to_action: String,
    pub payload_schema: BTreeMap<String, FieldKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Termination {
    pub max_rounds: u32,
    pub predicate: Option<String>,
}

/// A parsed, invariant-checked scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub domain: Domain,
    /// Registration name of the rule model that implements the handlers.
    pub model: Option<String>,
    pub agent_types: Vec<AgentTypeSpec>,
    pub environment: ValueMap,
    /// Agent count per agent type.
    pub population: BTreeMap<String, u64>,
    pub relationships: Vec<Relationship>,
    pub actions: Vec<ActionSpec>,
    pub events: Vec<EventSpec>,
    pub termination: Termination,
}

impl ScenarioSpec {
    pub fn agent_type(&self, name: &str) -> Option<&AgentTypeSpec> {
        self.agent_types.iter().find(|t| t.name == name)
    }

    pub fn env_int(&self, key: &str, default: i64) -> i64 {
        self.environment.get(key).and_then(Value::as_int).unwrap_or(default)
    }

    pub fn env_real(&self, key: &str, default: f64) -> f64 {
        self.environment.get(key).and_then(Value::as_real).unwrap_or(default)
    }

    pub fn env_text<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.environment.get(key).and_then(Value::as_text).unwrap_or(default)
    }

    pub fn total_population(&self) -> u64 {
        self.population.values().sum()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown field kind `{kind}` for `{field}`")]
    UnknownFieldKind { field: String, kind: String },
    #[error("duplicate agent_type `{0}`")]
    DuplicateAgentType(String),
    #[error("unknown agent_type `{agent_type}` referenced by {element}")]
    UnknownAgentType { element: String, agent_type: String },
    #[error("invalid {element}: {message}")]
    Invariant { element: String, message: String },
}

impl ParseError {
    fn invariant(element: impl Into<String>, message: impl Into<String>) -> Self {
        ParseError::Invariant { element: element.into(), message: message.into() }
    }
}

// Raw document shape, deserialized before invariant checks.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    domain: Domain,
    model: Option<String>,
    termination: RawTermination,
    #[serde(default)]
    environment: toml::Table,
    #[serde(default)]
    population: BTreeMap<String, u64>,
    #[serde(default)]
    agent_types: Vec<RawAgentType>,
    #[serde(default)]
    relationships: Vec<Relationship>,
    #[serde(default)]
    actions: Vec<RawAction>,
    #[serde(default)]
    events: Vec<RawEvent>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTermination {
    max_rounds: i64,
    predicate: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgentType {
    name: String,
    memory_capacity: Option<i64>,
    #[serde(default)]
    profile: BTreeMap<String, RawField>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawField {
    Short(String),
    Full(RawFieldTable),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFieldTable {
    kind: String,
    values: Option<Vec<String>>,
    #[serde(default)]
    visibility: Visibility,
}

impl RawField {
    fn resolve(self, field: &str) -> Result<(FieldKind, Visibility), ParseError> {
        let (kind, values, visibility) = match self {
            RawField::Short(kind) => (kind, None, Visibility::Public),
            RawField::Full(t) => (t.kind, t.values, t.visibility),
        };
        FieldKind::from_name(&kind, values)
            .map(|k| (k, visibility))
            .ok_or_else(|| ParseError::UnknownFieldKind { field: field.to_string(), kind })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAction {
    agent_type: String,
    name: String,
    handler: Option<String>,
    #[serde(default)]
    start: bool,
    #[serde(default)]
    terminal: bool,
    #[serde(default)]
    reads: BTreeSet<String>,
    #[serde(default)]
    emits: BTreeSet<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    #[serde(rename = "type")]
    event_type: String,
    from: String,
    to: String,
    #[serde(default)]
    payload: BTreeMap<String, RawField>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let prefix = &text[..offset.min(text.len())];
    let line = prefix.matches('\n').count() + 1;
    let column = prefix.rfind('\n').map_or(prefix.len(), |i| prefix.len() - i - 1) + 1;
    (line, column)
}

fn toml_to_value(key: &str, v: toml::Value) -> Result<Value, ParseError> {
    match v {
        toml::Value::Integer(i) => Ok(Value::Int(i)),
        toml::Value::Float(f) => Ok(Value::Real(f)),
        toml::Value::Boolean(b) => Ok(Value::Bool(b)),
        toml::Value::String(s) => Ok(Value::Text(s)),
        other => Err(ParseError::invariant(
            format!("environment.{key}"),
            format!("unsupported value type {}", other.type_str()),
        )),
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Parse and check a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ParseError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ParseError::Syntax { line, column, message: e.message().to_string() }
    })?;

    if !is_identifier(&raw.name) {
        return Err(ParseError::invariant("name", format!("`{}` is not an identifier", raw.name)));
    }
    if raw.termination.max_rounds < 0 || raw.termination.max_rounds > i64::from(u32::MAX) {
        return Err(ParseError::invariant(
            "termination.max_rounds",
            "must be a non-negative round count",
        ));
    }

    let mut agent_types = Vec::with_capacity(raw.agent_types.len());
    let mut type_names = BTreeSet::new();
    for t in raw.agent_types {
        if !type_names.insert(t.name.clone()) {
            return Err(ParseError::DuplicateAgentType(t.name));
        }
        let capacity = match t.memory_capacity {
            None => DEFAULT_MEMORY_CAPACITY,
            Some(k) if k >= 1 => k as usize,
            Some(_) => {
                return Err(ParseError::invariant(
                    format!("agent_types.{}.memory_capacity", t.name),
                    "must be positive",
                ))
            }
        };
        let mut profile_schema = BTreeMap::new();
        for (field, raw_field) in t.profile {
            let (kind, visibility) = raw_field.resolve(&format!("{}.{field}", t.name))?;
            profile_schema.insert(field, ProfileField { kind, visibility });
        }
        agent_types.push(AgentTypeSpec { name: t.name, memory_capacity: capacity, profile_schema });
    }

    for name in raw.population.keys() {
        if !type_names.contains(name) {
            return Err(ParseError::UnknownAgentType {
                element: "population".into(),
                agent_type: name.clone(),
            });
        }
    }

    let mut environment = ValueMap::new();
    for (k, v) in raw.environment {
        let value = toml_to_value(&k, v)?;
        environment.insert(k, value);
    }

    for (i, r) in raw.relationships.iter().enumerate() {
        if r.a == r.b {
            return Err(ParseError::invariant(format!("relationships[{i}]"), "self-loop"));
        }
        if !(r.weight.is_finite() && r.weight >= 0.0) {
            return Err(ParseError::invariant(
                format!("relationships[{i}]"),
                "weight must be finite and non-negative",
            ));
        }
    }

    let mut actions = Vec::with_capacity(raw.actions.len());
    let mut action_names = BTreeSet::new();
    for a in raw.actions {
        if !type_names.contains(&a.agent_type) {
            return Err(ParseError::UnknownAgentType {
                element: format!("action `{}`", a.name),
                agent_type: a.agent_type,
            });
        }
        if !is_identifier(&a.name) {
            return Err(ParseError::invariant(format!("action `{}`", a.name), "name is not an identifier"));
        }
        if !action_names.insert(a.name.clone()) {
            return Err(ParseError::invariant(format!("action `{}`", a.name), "duplicate action name"));
        }
        let handler = a.handler.unwrap_or_else(|| a.name.clone());
        actions.push(ActionSpec {
            agent_type: a.agent_type,
            name: a.name,
            handler,
            is_start: a.start,
            is_terminal: a.terminal,
            reads: a.reads,
            emits: a.emits,
        });
    }
    if !actions.iter().any(|a| a.is_start) {
        return Err(ParseError::invariant("actions", "no start action declared"));
    }
    if !actions.iter().any(|a| a.is_terminal) {
        return Err(ParseError::invariant("actions", "no terminal action declared"));
    }

    let mut events = Vec::with_capacity(raw.events.len());
    let mut edge_keys = BTreeSet::new();
    for e in raw.events {
        let element = format!("event `{}`", e.event_type);
        if !is_identifier(&e.event_type) {
            return Err(ParseError::invariant(element, "type is not an identifier"));
        }
        for endpoint in [&e.from, &e.to] {
            if !action_names.contains(endpoint) {
                return Err(ParseError::invariant(
                    element.clone(),
                    format!("references undeclared action `{endpoint}`"),
                ));
            }
        }
        if !edge_keys.insert((e.from.clone(), e.to.clone(), e.event_type.clone())) {
            return Err(ParseError::invariant(element, "duplicate event between the same actions"));
        }
        let mut payload_schema = BTreeMap::new();
        for (field, raw_field) in e.payload {
            let (kind, _) = raw_field.resolve(&format!("{}.{field}", e.event_type))?;
            payload_schema.insert(field, kind);
        }
        events.push(EventSpec {
            event_type: e.event_type,
            from_action: e.from,
            to_action: e.to,
            payload_schema,
        });
    }

    Ok(ScenarioSpec {
        name: raw.name,
        domain: raw.domain,
        model: raw.model,
        agent_types,
        environment,
        population: raw.population,
        relationships: raw.relationships,
        actions,
        events,
        termination: Termination {
            max_rounds: raw.termination.max_rounds as u32,
            predicate: raw.termination.predicate,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
name = "minimal"
domain = "sociology"

[termination]
max_rounds = 1

[[agent_types]]
name = "Person"

[[actions]]
agent_type = "Person"
name = "act"
start = true
terminal = true
"#;

    #[test]
    fn minimal_spec_parses() {
        let spec = parse_scenario(MINIMAL).unwrap();
        assert_eq!(spec.agent_types.len(), 1);
        assert_eq!(spec.actions.len(), 1);
        assert!(spec.events.is_empty());
        assert_eq!(spec.agent_types[0].memory_capacity, DEFAULT_MEMORY_CAPACITY);
        assert_eq!(spec.actions[0].handler, "act");
    }

    #[test]
    fn undeclared_agent_type_is_rejected() {
        let text = MINIMAL.replace("agent_type = \"Person\"", "agent_type = \"Ghost\"");
        let err = parse_scenario(&text).unwrap_err();
        assert!(matches!(err, ParseError::UnknownAgentType { ref agent_type, .. } if agent_type == "Ghost"));
        assert!(err.to_string().contains("unknown agent_type"));
    }

    #[test]
    fn duplicate_agent_type_is_rejected() {
        let text = format!("{MINIMAL}\n[[agent_types]]\nname = \"Person\"\n");
        assert_eq!(parse_scenario(&text).unwrap_err(), ParseError::DuplicateAgentType("Person".into()));
    }

    #[test]
    fn unknown_field_kind_is_rejected() {
        let text = MINIMAL.replace(
            "name = \"Person\"\n",
            "name = \"Person\"\n[agent_types.profile]\nmood = \"complex\"\n",
        );
        let err = parse_scenario(&text).unwrap_err();
        assert!(matches!(err, ParseError::UnknownFieldKind { ref kind, .. } if kind == "complex"));
    }

    #[test]
    fn syntax_error_names_line() {
        let text = "name = \"x\"\ndomain = \"law\"\n[termination\nmax_rounds = 1\n";
        match parse_scenario(text).unwrap_err() {
            ParseError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_loop_and_negative_weight_rejected() {
        let looped = format!("{MINIMAL}\n[[relationships]]\na = 1\nb = 1\nweight = 1.0\n");
        assert!(parse_scenario(&looped).unwrap_err().to_string().contains("self-loop"));
        let negative = format!("{MINIMAL}\n[[relationships]]\na = 1\nb = 2\nweight = -0.5\n");
        assert!(parse_scenario(&negative).unwrap_err().to_string().contains("non-negative"));
    }

    #[test]
    fn missing_start_or_terminal_rejected() {
        let no_start = MINIMAL.replace("start = true", "start = false");
        assert!(parse_scenario(&no_start).unwrap_err().to_string().contains("no start"));
        let no_term = MINIMAL.replace("terminal = true", "terminal = false");
        assert!(parse_scenario(&no_term).unwrap_err().to_string().contains("no terminal"));
    }

    #[test]
    fn event_to_undeclared_action_rejected() {
        let text = format!(
            "{MINIMAL}\n[[events]]\ntype = \"ping\"\nfrom = \"act\"\nto = \"missing\"\n"
        );
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("undeclared action `missing`"));
    }

    #[test]
    fn categorical_field_accepts_declared_values_only() {
        let kind = FieldKind::Categorical(vec!["jazz".into(), "rock".into()]);
        assert!(kind.accepts(&Value::from("jazz")));
        assert!(!kind.accepts(&Value::from("polka")));
        assert!(!kind.accepts(&Value::Int(0)));
        assert!(FieldKind::Real.accepts(&Value::Int(3)));
        assert!(!FieldKind::Int.accepts(&Value::Real(3.0)));
    }
}
