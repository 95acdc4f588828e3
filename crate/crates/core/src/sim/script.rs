//! A script instantiated in its own realm, plus the calls the frame loop makes on it.

use indexmap::IndexMap;
use rquickjs::{Context, Function, Object, Persistent, Value};
use serde::{Deserialize, Serialize};

use super::sandbox::{self, Fault, Sandbox};
use super::ButtonSpec;
use crate::grid::GRID_X;
use crate::model::{is_identifier, ScriptCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompilePhase {
    Parse,
    Instantiate,
    Entrypoint,
    TrialFrame,
}

impl std::fmt::Display for CompilePhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CompilePhase::Parse => "parse",
            CompilePhase::Instantiate => "instantiate",
            CompilePhase::Entrypoint => "entrypoint",
            CompilePhase::TrialFrame => "trial-frame",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{phase} error: {message}")]
pub struct CompileError {
    pub phase: CompilePhase,
    pub kind: sandbox::FaultKind,
    pub message: String,
}

impl CompileError {
    pub(crate) fn at(phase: CompilePhase, fault: Fault) -> Self {
        Self {
            phase,
            kind: fault.kind,
            message: fault.message,
        }
    }
}

/// `(initializer, main loop)` names per category.
pub fn entry_points(category: ScriptCategory) -> (&'static str, &'static str) {
    match category {
        ScriptCategory::Primitive => ("initializeParams", "dynamicScript"),
        ScriptCategory::Animation => ("initializeParams", "dynamicScript"),
        ScriptCategory::Interaction => ("initializeInteractionParameters", "dynamicInteraction"),
    }
}

pub(crate) struct LoadedScript {
    step: Persistent<Function<'static>>,
    /// The script's own parameter object (animation and interaction only).
    own_params: Option<Persistent<Object<'static>>>,
    pub category: ScriptCategory,
    /// Finite numeric initializer entries, in declaration order.
    pub initial: IndexMap<String, f64>,
    pub buttons: Vec<ButtonSpec>,
    ctx: Context,
}

impl LoadedScript {
    /// Runs the parse, instantiate and entrypoint phases.
    pub fn load(
        sandbox: &Sandbox,
        source: &str,
        category: ScriptCategory,
    ) -> Result<Self, CompileError> {
        let ctx = sandbox
            .realm()
            .map_err(|f| CompileError::at(CompilePhase::Instantiate, f))?;
        sandbox::parse_only(sandbox, &ctx, source)
            .map_err(|f| CompileError::at(CompilePhase::Parse, f))?;
        sandbox::instantiate(sandbox, &ctx, source)
            .map_err(|f| CompileError::at(CompilePhase::Instantiate, f))?;

        let entry = |f: Fault| CompileError::at(CompilePhase::Entrypoint, f);
        let (init_name, step_name) = entry_points(category);
        let (init, _) = sandbox::lookup_function(sandbox, &ctx, init_name)
            .map_err(entry)?
            .ok_or_else(|| entry(Fault::contract(format!("function `{init_name}` is not defined"))))?;
        let (step, arity) = sandbox::lookup_function(sandbox, &ctx, step_name)
            .map_err(entry)?
            .ok_or_else(|| entry(Fault::contract(format!("function `{step_name}` is not defined"))))?;
        if category == ScriptCategory::Animation && arity < 3 {
            return Err(entry(Fault::contract(format!(
                "`{step_name}` must accept (deltaTime, params, parentparams), found {arity} parameter(s)"
            ))));
        }

        let (initial, buttons, own_params) = sandbox
            .run(&ctx, |ctx| {
                let value = sandbox::call(ctx, &init, ())?;
                Ok(read_initializer(ctx, category, value))
            })
            .map_err(entry)?
            .map_err(entry)?;

        Ok(Self {
            step,
            own_params,
            category,
            initial,
            buttons,
            ctx,
        })
    }

    /// Calls the main loop. `parent` is read back only for animation and
    /// interaction scripts, and only if every value stays a finite number.
    pub fn step(
        &self,
        sandbox: &Sandbox,
        delta_time: f64,
        parent: &mut IndexMap<String, f64>,
    ) -> Result<(), Fault> {
        let category = self.category;
        let updated = sandbox.run(&self.ctx, |ctx| {
            let parent_obj = sandbox::params_object(ctx, parent)?;
            match category {
                ScriptCategory::Primitive => {
                    sandbox::call(ctx, &self.step, (delta_time, parent_obj))?;
                    Ok(Ok(None))
                }
                ScriptCategory::Animation | ScriptCategory::Interaction => {
                    let own = self
                        .own_params
                        .clone()
                        .expect("animation and interaction keep their params")
                        .restore(ctx)?;
                    sandbox::call(ctx, &self.step, (delta_time, own, parent_obj.clone()))?;
                    Ok(read_back(&parent_obj, parent).map(Some))
                }
            }
        })??;
        if let Some(values) = updated {
            *parent = values;
        }
        Ok(())
    }

    /// Current numeric entries of the script's own params.
    pub fn own_values(&self, sandbox: &Sandbox) -> IndexMap<String, f64> {
        let Some(own) = &self.own_params else {
            return self.initial.clone();
        };
        sandbox
            .run(&self.ctx, |ctx| {
                let obj = own.clone().restore(ctx)?;
                let mut out = IndexMap::new();
                for prop in obj.props::<String, Value>() {
                    let (k, v) = prop?;
                    if let Some(n) = v.as_number().filter(|n| n.is_finite()) {
                        out.insert(k, n);
                    }
                }
                Ok(out)
            })
            .unwrap_or_default()
    }
}

type Initialized = (IndexMap<String, f64>, Vec<ButtonSpec>, Option<Persistent<Object<'static>>>);

fn read_initializer<'js>(
    ctx: &rquickjs::Ctx<'js>,
    category: ScriptCategory,
    value: Value<'js>,
) -> Result<Initialized, Fault> {
    let (init_name, _) = entry_points(category);
    let obj = match value.into_object() {
        Some(obj) if !obj.is_array() && !obj.is_function() => obj,
        _ => return Err(Fault::contract(format!("`{init_name}` must return an object"))),
    };
    let mut initial = IndexMap::new();
    let mut buttons = Vec::new();
    for prop in obj.props::<String, Value>() {
        let (name, v) = prop.map_err(|e| Fault::contract(format!("cannot read `{init_name}` result: {e}")))?;
        if category == ScriptCategory::Interaction && (name == "buttons" || name == "button") {
            buttons = read_buttons(&v)?;
            continue;
        }
        match v.as_number() {
            Some(n) if n.is_finite() && is_identifier(&name) => {
                initial.insert(name, n);
            }
            _ if category == ScriptCategory::Primitive => {
                return Err(Fault::contract(format!(
                    "parameter `{name}` returned by `{init_name}` must be a finite number"
                )));
            }
            _ => {}
        }
    }
    let own = match category {
        ScriptCategory::Primitive => None,
        _ => Some(Persistent::save(ctx, obj)),
    };
    Ok((initial, buttons, own))
}

fn read_buttons(value: &Value<'_>) -> Result<Vec<ButtonSpec>, Fault> {
    let list = value
        .as_array()
        .ok_or_else(|| Fault::contract("`buttons` must be a list"))?;
    let mut out: Vec<ButtonSpec> = Vec::new();
    for (i, item) in list.iter::<Value>().enumerate() {
        let item = item.map_err(|e| Fault::contract(e.to_string()))?;
        let obj = item
            .as_object()
            .ok_or_else(|| Fault::contract(format!("button {i} must be an object")))?;
        let num = |key: &str| -> Option<f64> { obj.get::<_, Value>(key).ok().and_then(|v| v.as_number()) };
        let int = |v: Option<f64>, what: &str| -> Result<i64, Fault> {
            match v {
                Some(n) if n.is_finite() && n.fract() == 0.0 => Ok(n as i64),
                _ => Err(Fault::contract(format!("button {i}: `{what}` must be an integer"))),
            }
        };
        let id = int(num("id"), "id")?;
        let size = int(num("size"), "size")?;
        let position: Value = obj.get("position").map_err(|e| Fault::contract(e.to_string()))?;
        let (px, py) = if let Some(arr) = position.as_array() {
            let x = arr.get::<Value>(0).ok().and_then(|v| v.as_number());
            let y = arr.get::<Value>(1).ok().and_then(|v| v.as_number());
            (x, y)
        } else if let Some(p) = position.as_object() {
            let x = p.get::<_, Value>("x").ok().and_then(|v| v.as_number());
            let y = p.get::<_, Value>("y").ok().and_then(|v| v.as_number());
            (x, y)
        } else {
            (None, None)
        };
        let x = int(px, "position.x")?;
        let y = int(py, "position.y")?;
        let height = num("init_height")
            .or_else(|| num("initHeight"))
            .ok_or_else(|| Fault::contract(format!("button {i}: `init_height` must be a number")))?;
        if id < 0 || id > i64::from(u16::MAX) {
            return Err(Fault::contract(format!("button {i}: id {id} out of range")));
        }
        if x < 0 || y < 0 || x >= GRID_X as i64 || y >= GRID_X as i64 {
            return Err(Fault::contract(format!("button {i}: position ({x}, {y}) is outside the grid")));
        }
        let spec = ButtonSpec {
            id: id as u32,
            size: u8::try_from(size).unwrap_or(0),
            position: (x as usize, y as usize),
            init_height: height,
        };
        spec.validate().map_err(|e| Fault::contract(format!("button {i}: {e}")))?;
        if let Some(other) = out.iter().find(|b| b.id == spec.id || b.overlaps(&spec)) {
            return Err(Fault::contract(format!(
                "button {i}: conflicts with button id {} (ids must be unique and footprints disjoint)",
                other.id
            )));
        }
        out.push(spec);
    }
    Ok(out)
}

fn read_back(obj: &Object<'_>, parent: &IndexMap<String, f64>) -> Result<IndexMap<String, f64>, Fault> {
    let mut out = IndexMap::with_capacity(parent.len());
    for name in parent.keys() {
        let value: Value = obj
            .get(name.as_str())
            .map_err(|e| Fault::contract(format!("cannot read parentparams.{name}: {e}")))?;
        match value.as_number() {
            Some(n) if n.is_finite() => {
                out.insert(name.clone(), n);
            }
            _ => {
                return Err(Fault::contract(format!(
                    "parentparams.{name} must stay a finite number"
                )))
            }
        }
    }
    Ok(out)
}
