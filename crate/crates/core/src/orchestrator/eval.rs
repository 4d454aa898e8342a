use serde::Serialize;
use thiserror::Error;

use super::call::{Arg, CallExpr};
use crate::map::{LanguageEnhancedMap, ObjectId};
use crate::spatial::{ArgValue, ObjectSet, Operator, SpatialError, SpatialValue};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("{operator}: argument {index} has the wrong type ({detail})")]
    Type {
        operator: String,
        index: usize,
        detail: String,
    },
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

/// Evaluates a call tree bottom-up against the map. `objs` binds to all map
/// objects; nested object lists feed the enclosing call.
pub fn eval_call<'m>(expr: &CallExpr, map: &'m LanguageEnhancedMap) -> Result<SpatialValue<'m>, EvalError> {
    let op = Operator::from_name(&expr.name).ok_or_else(|| EvalError::UnknownOperator(expr.name.clone()))?;
    let mut args = Vec::with_capacity(expr.args.len());
    for (index, arg) in expr.args.iter().enumerate() {
        let type_error = |detail: &str| EvalError::Type {
            operator: expr.name.clone(),
            index,
            detail: detail.to_string(),
        };
        args.push(match arg {
            Arg::Objs => ArgValue::Objects(ObjectSet::from_objects(&map.objects)),
            Arg::Call(inner) => match eval_call(inner, map)? {
                SpatialValue::Objects(set) => ArgValue::Objects(set),
                SpatialValue::Object(o) => ArgValue::Objects(ObjectSet(vec![o])),
                SpatialValue::Distance(_) => return Err(type_error("nested call returned a distance")),
            },
            Arg::Int(v) => ArgValue::Int(*v),
            Arg::Float(v) => ArgValue::Float(*v),
            Arg::Str(_) => return Err(type_error("strings are not accepted")),
        });
    }
    op.apply(args, &map.objects).map_err(|e| match e {
        SpatialError::ArgumentType { operator, message } => EvalError::Type {
            operator: operator.to_string(),
            index: 0,
            detail: message,
        },
        other => EvalError::Spatial(other),
    })
}

/// Serializable outcome of one evaluated call.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ToolOutput {
    Objects { object_ids: Vec<ObjectId> },
    Distance { meters: f64, object_ids: Vec<ObjectId> },
    Error { message: String },
}

impl ToolOutput {
    /// Objects the result refers to: the ids of an object list, or the
    /// objects a distance was measured to.
    pub fn referenced_ids(&self) -> &[ObjectId] {
        match self {
            ToolOutput::Objects { object_ids } | ToolOutput::Distance { object_ids, .. } => object_ids,
            ToolOutput::Error { .. } => &[],
        }
    }
}

/// Evaluates `expr` and describes the result for the LLM and the trace.
pub fn run_call(expr: &CallExpr, map: &LanguageEnhancedMap) -> ToolOutput {
    match eval_call(expr, map) {
        Ok(SpatialValue::Objects(set)) => ToolOutput::Objects { object_ids: set.ids() },
        Ok(SpatialValue::Object(o)) => ToolOutput::Objects {
            object_ids: vec![o.object_id],
        },
        Ok(SpatialValue::Distance(meters)) => ToolOutput::Distance {
            meters,
            object_ids: expr
                .args
                .iter()
                .filter_map(|a| match a {
                    Arg::Int(v) => ObjectId::try_from(*v).ok(),
                    _ => None,
                })
                .collect(),
        },
        Err(e) => ToolOutput::Error { message: e.to_string() },
    }
}
