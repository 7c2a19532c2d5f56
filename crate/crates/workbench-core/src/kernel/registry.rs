//! Tool registry: descriptors plus implementation bindings, generic over the
//! tool execution context.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use crate::toolbox::result::{error_kind, ToolResult};

use super::KernelError;

/// Semantic type tags for tool parameters, rendered into agent schemas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    /// Object handle id ("obj_3").
    Handle,
    Text,
    Number,
    /// Millimeter triple like [1.0, 1.0, 1.0].
    Triple,
    /// Lesion/label integer id.
    Id,
}

impl ParamKind {
    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Handle => "handle",
            ParamKind::Text => "text",
            ParamKind::Number => "number",
            ParamKind::Triple => "triple",
            ParamKind::Id => "id",
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub required: bool,
    pub description: String,
}

impl ParamSpec {
    pub fn new(name: &str, kind: ParamKind, required: bool, description: &str) -> Self {
        ParamSpec {
            name: name.into(),
            kind,
            required,
            description: description.into(),
        }
    }
}

/// Registry entry describing one atomic tool.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub returns: String,
}

type ToolFn<C> = Box<dyn Fn(&mut C, &Map<String, Value>) -> ToolResult + Send + Sync>;

/// Named atomic tools an episode can dispatch. `C` is the execution context
/// (the simulated environment in production, anything in tests). The registry
/// itself is immutable during episodes and shared across them.
pub struct ToolRegistry<C> {
    tools: BTreeMap<String, (ToolDescriptor, ToolFn<C>)>,
}

impl<C> Default for ToolRegistry<C> {
    fn default() -> Self {
        ToolRegistry {
            tools: BTreeMap::new(),
        }
    }
}

impl<C> ToolRegistry<C> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        descriptor: ToolDescriptor,
        imp: impl Fn(&mut C, &Map<String, Value>) -> ToolResult + Send + Sync + 'static,
    ) -> Result<(), KernelError> {
        if self.tools.contains_key(&descriptor.name) {
            return Err(KernelError::Duplicate(descriptor.name.clone()));
        }
        self.tools
            .insert(descriptor.name.clone(), (descriptor, Box::new(imp)));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn descriptor(&self, name: &str) -> Option<&ToolDescriptor> {
        self.tools.get(name).map(|(d, _)| d)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }

    /// Dispatch a call. Unknown tools are a hard error for the caller to turn
    /// into a trace event; argument-schema violations come back as error
    /// results so the episode continues.
    pub fn execute(
        &self,
        name: &str,
        args: &Map<String, Value>,
        ctx: &mut C,
    ) -> Result<ToolResult, KernelError> {
        let Some((descriptor, imp)) = self.tools.get(name) else {
            return Err(KernelError::UnknownTool(name.to_string()));
        };
        for param in &descriptor.params {
            if param.required && !args.contains_key(&param.name) {
                return Ok(ToolResult::error(
                    error_kind::BAD_ARGUMENT,
                    format!("missing required argument '{}'", param.name),
                ));
            }
        }
        Ok(imp(ctx, args))
    }
}

/// Canonical argument form: keys sorted (the map is ordered), numbers
/// re-rendered through serde_json's shortest form, handle ids verbatim.
pub fn canonicalize_args(args: &Map<String, Value>) -> Map<String, Value> {
    fn canon(v: &Value) -> Value {
        match v {
            Value::Array(a) => Value::Array(a.iter().map(canon).collect()),
            Value::Object(o) => Value::Object(o.iter().map(|(k, v)| (k.clone(), canon(v))).collect()),
            Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Value::from(i)
                } else {
                    Value::from(n.as_f64().unwrap_or(0.0))
                }
            }
            other => other.clone(),
        }
    }
    args.iter().map(|(k, v)| (k.clone(), canon(v))).collect()
}
