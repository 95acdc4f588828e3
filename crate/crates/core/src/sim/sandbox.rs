//! QuickJS runtime wrapper: one runtime per scene, one realm per script,
//! host pin state kept on the Rust side.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use rquickjs::context::intrinsic;
use rquickjs::{qjs, CaughtError, Context, Ctx, Function, Object, Persistent, Runtime, Value};
use serde::{Deserialize, Serialize};

use crate::grid::PIN_COUNT;

/// Interrupt handler granularity: QuickJS polls it every this many
/// function calls and loop back-edges.
pub const POLL_INTERVAL: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Limits {
    /// Interpreter operations allowed per script call, rounded down to
    /// whole [`POLL_INTERVAL`]s.
    pub instruction_budget: u64,
    pub memory_limit: usize,
    pub max_stack: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            instruction_budget: 5_000_000,
            memory_limit: 32 << 20,
            max_stack: 256 << 10,
        }
    }
}

/// Why a script call did not complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    Syntax,
    Exception,
    Budget,
    Memory,
    /// The script ran but broke a host contract (missing function, bad return value).
    Contract,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub kind: FaultKind,
    pub message: String,
}

impl Fault {
    pub(crate) fn contract(message: impl Into<String>) -> Self {
        Self {
            kind: FaultKind::Contract,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Fault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PinState {
    pub is_button: bool,
    pub is_pressing: bool,
    pub button_group_id: Option<u32>,
}

impl PinState {
    fn packed(self) -> i32 {
        let mut v = 0i32;
        if self.is_button {
            v |= 1;
        }
        if self.is_pressing {
            v |= 2;
        }
        if let Some(id) = self.button_group_id {
            v |= (id as i32) << 2;
        }
        v
    }
}

pub(crate) struct HostState {
    pub heights: [f64; PIN_COUNT],
    pub pins: [PinState; PIN_COUNT],
}

impl HostState {
    fn new() -> Self {
        Self {
            heights: [0.0; PIN_COUNT],
            pins: [PinState::default(); PIN_COUNT],
        }
    }
}

pub(crate) type SharedHost = Rc<RefCell<HostState>>;

struct Budget {
    polls_left: Cell<u64>,
    tripped: Cell<bool>,
}

const PRELUDE: &str = r#"(function (hostSetPos, hostPinState) {
  'use strict';
  const pins = [];
  for (let i = 0; i < 576; i++) {
    pins.push(Object.freeze({
      setPos(height) { hostSetPos(i, +height); },
      get isButton() { return (hostPinState(i) & 1) === 1; },
      get isPressing() { return (hostPinState(i) & 2) === 2; },
      get buttonGroup_id() { const s = hostPinState(i); return (s & 1) ? (s >> 2) : null; },
    }));
  }
  Object.freeze(pins);
  const define = (name, value) => Object.defineProperty(globalThis, name, {
    value, writable: false, enumerable: false, configurable: false,
  });
  define('ShapeDisplay', Object.freeze({
    grid_x: 24,
    grid_y: 24,
    Pins: pins,
    getPin(index) { return pins[index]; },
  }));
  define('initializeButtons', function initializeButtons(params) {});
  define('console', Object.freeze({ log() {}, info() {}, warn() {}, error() {}, debug() {} }));
  let seed = 0x2545f491;
  Math.random = function random() {
    seed ^= seed << 13;
    seed ^= seed >>> 17;
    seed ^= seed << 5;
    return (seed >>> 0) / 4294967296;
  };
})"#;

type Intrinsics = (
    intrinsic::Eval,
    intrinsic::RegExpCompiler,
    intrinsic::RegExp,
    intrinsic::Json,
    intrinsic::MapSet,
    intrinsic::TypedArrays,
);

pub(crate) struct Sandbox {
    host: SharedHost,
    budget: Rc<Budget>,
    limits: Limits,
    runtime: Runtime,
}

impl Sandbox {
    pub fn new(limits: Limits) -> Result<Self, Fault> {
        let runtime = Runtime::new().map_err(|e| Fault {
            kind: FaultKind::Memory,
            message: format!("cannot create script runtime: {e}"),
        })?;
        runtime.set_memory_limit(limits.memory_limit);
        runtime.set_max_stack_size(limits.max_stack);
        let budget = Rc::new(Budget {
            polls_left: Cell::new(u64::MAX),
            tripped: Cell::new(false),
        });
        let handler_budget = budget.clone();
        runtime.set_interrupt_handler(Some(Box::new(move || {
            let left = handler_budget.polls_left.get();
            if left == 0 {
                handler_budget.tripped.set(true);
                true
            } else {
                handler_budget.polls_left.set(left - 1);
                false
            }
        })));
        Ok(Self {
            host: Rc::new(RefCell::new(HostState::new())),
            budget,
            limits,
            runtime,
        })
    }

    pub fn host(&self) -> &SharedHost {
        &self.host
    }

    /// A fresh realm with the host surface installed.
    pub fn realm(&self) -> Result<Context, Fault> {
        let ctx = Context::custom::<Intrinsics>(&self.runtime).map_err(|e| Fault {
            kind: FaultKind::Memory,
            message: format!("cannot create script realm: {e}"),
        })?;
        let host = self.host.clone();
        let host2 = self.host.clone();
        ctx.with(|ctx| -> rquickjs::Result<()> {
            let set_pos = Function::new(ctx.clone(), move |index: u32, height: f64| {
                if let Some(slot) = host.borrow_mut().heights.get_mut(index as usize) {
                    *slot = height;
                }
            })?;
            let pin_state = Function::new(ctx.clone(), move |index: u32| -> i32 {
                host2
                    .borrow()
                    .pins
                    .get(index as usize)
                    .map(|p| p.packed())
                    .unwrap_or(0)
            })?;
            let install: Function = ctx.eval(PRELUDE)?;
            install.call::<_, ()>((set_pos, pin_state))
        })
        .map_err(|e| Fault {
            kind: FaultKind::Exception,
            message: format!("prelude failed: {e}"),
        })?;
        Ok(ctx)
    }

    /// Runs `f` inside `ctx` with a fresh instruction budget, mapping any
    /// JavaScript error to a [`Fault`].
    pub fn run<T>(
        &self,
        ctx: &Context,
        f: impl for<'js> FnOnce(&Ctx<'js>) -> rquickjs::Result<T>,
    ) -> Result<T, Fault> {
        self.budget
            .polls_left
            .set(self.limits.instruction_budget / POLL_INTERVAL);
        self.budget.tripped.set(false);
        ctx.with(|ctx| {
            // Stack limits are measured from the caller's frame, which may differ between calls.
            unsafe { qjs::JS_UpdateStackTop(qjs::JS_GetRuntime(ctx.as_raw().as_ptr())) };
            let result = f(&ctx);
            result.map_err(|err| self.fault(&ctx, err))
        })
    }

    fn fault<'js>(&self, ctx: &Ctx<'js>, err: rquickjs::Error) -> Fault {
        let caught = CaughtError::from_error(ctx, err);
        let message = match &caught {
            CaughtError::Exception(ex) => {
                let mut msg = ex.message().unwrap_or_default();
                let name: Option<String> = ex.get("name").ok();
                if let Some(name) = name.filter(|n| !n.is_empty()) {
                    msg = format!("{name}: {msg}");
                }
                if let Some(stack) = ex.stack().filter(|s| !s.trim().is_empty()) {
                    msg = format!("{msg}\n{}", stack.trim_end());
                }
                msg
            }
            other => other.to_string(),
        };
        let kind = if self.budget.tripped.get() {
            FaultKind::Budget
        } else if message.contains("out of memory") || message.contains("stack overflow")
            || message.contains("Maximum call stack")
        {
            FaultKind::Memory
        } else if message.starts_with("SyntaxError") {
            FaultKind::Syntax
        } else {
            FaultKind::Exception
        };
        self.budget.tripped.set(false);
        Fault { kind, message }
    }

    pub fn collect_garbage(&self) {
        self.runtime.run_gc();
    }
}

/// Compiles `source` without running it.
pub(crate) fn parse_only(sandbox: &Sandbox, ctx: &Context, source: &str) -> Result<(), Fault> {
    let src = std::ffi::CString::new(source).map_err(|_| Fault {
        kind: FaultKind::Syntax,
        message: "source contains a NUL byte".into(),
    })?;
    sandbox.run(ctx, |ctx| {
        let flags = (qjs::JS_EVAL_TYPE_GLOBAL | qjs::JS_EVAL_FLAG_COMPILE_ONLY) as i32;
        unsafe {
            let raw = ctx.as_raw().as_ptr();
            let val = qjs::JS_Eval(
                raw,
                src.as_ptr(),
                source.len() as _,
                c"script".as_ptr(),
                flags,
            );
            if qjs::JS_IsException(val) {
                return Err(rquickjs::Error::Exception);
            }
            qjs::JS_FreeValue(raw, val);
        }
        Ok(())
    })
}

/// Evaluates top-level script code in sloppy mode.
pub(crate) fn instantiate(sandbox: &Sandbox, ctx: &Context, source: &str) -> Result<(), Fault> {
    sandbox.run(ctx, |ctx| {
        let mut options = rquickjs::context::EvalOptions::default();
        options.strict = false;
        options.global = true;
        options.filename = Some("script".into());
        ctx.eval_with_options::<(), _>(source, options)
    })
}

/// Looks up a global binding (including top-level `let`/`const`) that must be a function.
pub(crate) fn lookup_function(
    sandbox: &Sandbox,
    ctx: &Context,
    name: &str,
) -> Result<Option<(Persistent<Function<'static>>, u32)>, Fault> {
    let probe = format!("(typeof {name} === 'function') ? {name} : undefined");
    sandbox.run(ctx, |ctx| {
        let value: Value = ctx.eval(probe.as_str())?;
        match value.into_function() {
            Some(func) => {
                let arity: u32 = func.get("length").unwrap_or(0);
                Ok(Some((Persistent::save(ctx, func), arity)))
            }
            None => Ok(None),
        }
    })
}

/// Copies a flat name → number map into a new JS object.
pub(crate) fn params_object<'js>(
    ctx: &Ctx<'js>,
    params: &indexmap::IndexMap<String, f64>,
) -> rquickjs::Result<Object<'js>> {
    let obj = Object::new(ctx.clone())?;
    for (name, value) in params {
        obj.set(name.as_str(), *value)?;
    }
    Ok(obj)
}

pub(crate) fn call<'js, A>(
    ctx: &Ctx<'js>,
    func: &Persistent<Function<'static>>,
    args: A,
) -> rquickjs::Result<Value<'js>>
where
    A: rquickjs::function::IntoArgs<'js>,
{
    let func = func.clone().restore(ctx)?;
    func.call(args)
}
