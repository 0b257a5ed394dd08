//! Bundled scenario models and their `.onesim` documents.

mod axelrod;
mod classroom;
mod null;
mod public_goods;

use std::sync::Arc;

use thiserror::Error;

pub use axelrod::{axelrod_rule, axelrod_step, AxelrodConfig, AxelrodModel};
pub use classroom::{
    allocate_units, attention_transitions, hypothesis_field, mean_classroom_rho, softmax,
    ClassroomConfig, ClassroomModel, HYPOTHESES,
};
pub use null::NullModel;
pub use public_goods::{
    calibrated_follower_rule, conservation_residual, default_follower_rule, pg_payoff, ratio_from_decimal,
    FollowerRule, PgConfig, PgError, PublicGoodsModel, Tokens, LEVELS,
};

use crate::behavior_graph::{parse_scenario, FieldKind, ParseError, ScenarioSpec, ValidationReport};
use crate::kernel::{BackendKind, HandlerError, ModelError, ScenarioModel, ScenarioRuntime};
use crate::value::{Value, ValueMap};

/// Bundled scenario documents by name.
pub const SCENARIOS: &[(&str, &str)] = &[
    ("axelrod", include_str!("../../scenarios/axelrod.onesim")),
    ("public_goods", include_str!("../../scenarios/public_goods.onesim")),
    ("classroom", include_str!("../../scenarios/classroom.onesim")),
    ("null", include_str!("../../scenarios/null.onesim")),
];

/// Bundled experiment plans by name.
pub const PLANS: &[(&str, &str)] = &[
    ("axelrod_plan", include_str!("../../scenarios/axelrod_plan.onesim")),
    ("pg_plan", include_str!("../../scenarios/pg_plan.onesim")),
    ("classroom_plan", include_str!("../../scenarios/classroom_plan.onesim")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn bundled_plan(name: &str) -> Option<&'static str> {
    PLANS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn model_for(name: &str) -> Result<Arc<dyn ScenarioModel>, ModelError> {
    Ok(match name {
        "axelrod" => Arc::new(AxelrodModel),
        "public_goods" => Arc::new(PublicGoodsModel),
        "classroom" => Arc::new(ClassroomModel),
        "null" => Arc::new(NullModel),
        other => return Err(ModelError::UnknownModel(other.to_string())),
    })
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("behavior graph is invalid:\n{}", .0.render())]
    Invalid(ValidationReport),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Build a runtime for `spec` with its registered model.
pub fn runtime_for(spec: ScenarioSpec, backend: BackendKind) -> Result<Arc<ScenarioRuntime>, LoadError> {
    let model = model_for(spec.model.as_deref().unwrap_or(&spec.name))?;
    ScenarioRuntime::new(spec, model, backend).map(Arc::new).map_err(LoadError::Invalid)
}

/// Parse, validate and bind a scenario document.
pub fn load(text: &str, backend: BackendKind) -> Result<Arc<ScenarioRuntime>, LoadError> {
    runtime_for(parse_scenario(text)?, backend)
}

pub(crate) fn config_error(spec: &ScenarioSpec, message: impl Into<String>) -> ModelError {
    ModelError::Config { scenario: spec.name.clone(), message: message.into() }
}

pub(crate) fn field_int(map: &ValueMap, field: &str) -> Result<i64, HandlerError> {
    map.get(field).and_then(Value::as_int).ok_or_else(|| HandlerError::new(format!("missing int field `{field}`")))
}

pub(crate) fn field_text(map: &ValueMap, field: &str) -> Result<String, HandlerError> {
    map.get(field)
        .and_then(Value::as_text)
        .map(str::to_string)
        .ok_or_else(|| HandlerError::new(format!("missing text field `{field}`")))
}

pub(crate) fn default_value(kind: &FieldKind) -> Value {
    match kind {
        FieldKind::Int => Value::Int(0),
        FieldKind::Real => Value::Real(0.0),
        FieldKind::Bool => Value::Bool(false),
        FieldKind::Text => Value::Text(String::new()),
        FieldKind::Categorical(values) => Value::Text(values[0].clone()),
    }
}
