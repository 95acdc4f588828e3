//! A loaded set of scripts and the per-frame loop over them.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::sandbox::{Fault, Limits, PinState, Sandbox};
use super::script::{CompileError, CompilePhase, LoadedScript};
use super::ButtonSpec;
use crate::grid::{clamp_height, HeightField, PIN_COUNT};
use crate::model::{slider_bounds, ScriptArtifact, ScriptCategory, SliderSpec};

/// Pressed buttons render at this fraction of their init height.
pub const PRESS_DEPTH_RATIO: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SceneConfig {
    pub limits: Limits,
    pub press_depth_ratio: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            limits: Limits::default(),
            press_depth_ratio: PRESS_DEPTH_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("scene needs exactly one primitive script")]
    MissingPrimitive,
    #[error("scene already has a {0} script")]
    DuplicateCategory(ScriptCategory),
    #[error("{category} script failed to load: {error}")]
    Compile {
        category: ScriptCategory,
        error: CompileError,
    },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter values must be finite, got {0}")]
    NonFiniteValue(f64),
    #[error("unknown button group {0}")]
    UnknownButton(u32),
    #[error("invalid button: {0}")]
    InvalidButton(String),
    #[error("delta time must be a positive finite number of seconds, got {0}")]
    InvalidDeltaTime(f64),
    #[error("pin index {0} is out of range")]
    PinOutOfRange(usize),
    #[error("no {0} script in this scene")]
    MissingScript(ScriptCategory),
}

/// A script failure during one frame. The frame still completes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFault {
    pub category: ScriptCategory,
    pub fault: Fault,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub seq: u64,
    pub field: HeightField,
    pub faults: Vec<StepFault>,
}

struct Slot {
    script: LoadedScript,
    artifact: ScriptArtifact,
    enabled: bool,
}

/// Owns one script runtime. Not `Send`: a scene lives on the thread that stepped it first.
pub struct Scene {
    slots: [Option<Slot>; 3],
    parent_params: IndexMap<String, f64>,
    sliders: Vec<SliderSpec>,
    buttons: Vec<ButtonSpec>,
    field: HeightField,
    seq: u64,
    config: SceneConfig,
    sandbox: Sandbox,
}

impl std::fmt::Debug for Scene {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scene")
            .field("parent_params", &self.parent_params)
            .field("buttons", &self.buttons)
            .field("seq", &self.seq)
            .finish_non_exhaustive()
    }
}

fn slot_of(category: ScriptCategory) -> usize {
    match category {
        ScriptCategory::Primitive => 0,
        ScriptCategory::Animation => 1,
        ScriptCategory::Interaction => 2,
    }
}

impl Scene {
    pub fn load(artifacts: &[ScriptArtifact]) -> Result<Self, SceneError> {
        Self::load_with(SceneConfig::default(), artifacts)
    }

    pub fn load_with(config: SceneConfig, artifacts: &[ScriptArtifact]) -> Result<Self, SceneError> {
        let mut seen = [false; 3];
        for a in artifacts {
            let slot = slot_of(a.category);
            if seen[slot] {
                return Err(SceneError::DuplicateCategory(a.category));
            }
            seen[slot] = true;
        }
        if !seen[0] {
            return Err(SceneError::MissingPrimitive);
        }

        let sandbox = Sandbox::new(config.limits).map_err(|f| SceneError::Compile {
            category: ScriptCategory::Primitive,
            error: CompileError::at(CompilePhase::Instantiate, f),
        })?;
        let mut slots: [Option<Slot>; 3] = [None, None, None];
        for a in artifacts {
            let script = LoadedScript::load(&sandbox, &a.source, a.category).map_err(|error| {
                SceneError::Compile {
                    category: a.category,
                    error,
                }
            })?;
            slots[slot_of(a.category)] = Some(Slot {
                script,
                artifact: a.clone(),
                enabled: true,
            });
        }

        let parent_params = slots[0].as_ref().expect("primitive present").script.initial.clone();
        let sliders = parent_params
            .iter()
            .map(|(name, value)| slider_bounds(name, *value).expect("initial values are finite"))
            .collect();
        let buttons = slots[2]
            .as_ref()
            .map(|s| s.script.buttons.clone())
            .unwrap_or_default();

        let mut scene = Self {
            slots,
            parent_params,
            sliders,
            buttons,
            field: HeightField::zeros(),
            seq: 0,
            config,
            sandbox,
        };
        scene.sync_button_pins();
        Ok(scene)
    }

    pub fn artifact(&self, category: ScriptCategory) -> Option<&ScriptArtifact> {
        self.slots[slot_of(category)].as_ref().map(|s| &s.artifact)
    }

    pub fn parent_params(&self) -> &IndexMap<String, f64> {
        &self.parent_params
    }

    /// Current numeric values of a script's own params (animation or interaction).
    pub fn own_params(&self, category: ScriptCategory) -> Option<IndexMap<String, f64>> {
        self.slots[slot_of(category)]
            .as_ref()
            .map(|s| s.script.own_values(&self.sandbox))
    }

    pub fn sliders(&self) -> &[SliderSpec] {
        &self.sliders
    }

    pub fn buttons(&self) -> &[ButtonSpec] {
        &self.buttons
    }

    pub fn field(&self) -> &HeightField {
        &self.field
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn pin(&self, index: usize) -> Option<PinState> {
        self.sandbox.host().borrow().pins.get(index).copied()
    }

    pub fn pins(&self) -> Vec<PinState> {
        self.sandbox.host().borrow().pins.to_vec()
    }

    pub fn is_enabled(&self, category: ScriptCategory) -> bool {
        self.slots[slot_of(category)].as_ref().is_some_and(|s| s.enabled)
    }

    /// Enables or disables a script. Disabling the interaction script also
    /// removes its buttons from the surface.
    pub fn set_enabled(&mut self, category: ScriptCategory, enabled: bool) -> Result<(), SceneError> {
        let slot = self.slots[slot_of(category)]
            .as_mut()
            .ok_or(SceneError::MissingScript(category))?;
        slot.enabled = enabled;
        if category == ScriptCategory::Interaction {
            self.sync_button_pins();
        }
        Ok(())
    }

    /// Writes a parent parameter. Values are not clamped to slider bounds.
    pub fn set_parameter(&mut self, name: &str, value: f64) -> Result<(), SceneError> {
        if !value.is_finite() {
            return Err(SceneError::NonFiniteValue(value));
        }
        let slot = self
            .parent_params
            .get_mut(name)
            .ok_or_else(|| SceneError::UnknownParameter(name.to_string()))?;
        *slot = value;
        Ok(())
    }

    pub fn press_button(&mut self, group: u32, pressed: bool) -> Result<(), SceneError> {
        let button = self
            .active_buttons()
            .iter()
            .find(|b| b.id == group)
            .ok_or(SceneError::UnknownButton(group))?;
        let pins = button.footprint();
        let mut host = self.sandbox.host().borrow_mut();
        for i in pins {
            host.pins[i].is_pressing = pressed;
        }
        Ok(())
    }

    /// Press state for a single pin, as reported by hardware. Ignored for non-button pins.
    pub fn set_pin_pressing(&mut self, index: usize, pressed: bool) -> Result<(), SceneError> {
        let mut host = self.sandbox.host().borrow_mut();
        let pin = host.pins.get_mut(index).ok_or(SceneError::PinOutOfRange(index))?;
        if pin.is_button {
            pin.is_pressing = pressed;
        }
        Ok(())
    }

    /// Target height of each active button pin: `(pin index, init height)`.
    pub fn button_targets(&self) -> Vec<(usize, f64)> {
        self.active_buttons()
            .iter()
            .flat_map(|b| b.footprint().into_iter().map(move |i| (i, b.init_height)))
            .collect()
    }

    /// Replaces one button's footprint, size or height. Press state is cleared.
    pub fn configure_button(&mut self, spec: ButtonSpec) -> Result<(), SceneError> {
        spec.validate()
            .map_err(|e| SceneError::InvalidButton(e.to_string()))?;
        let idx = self
            .buttons
            .iter()
            .position(|b| b.id == spec.id)
            .ok_or(SceneError::UnknownButton(spec.id))?;
        if let Some(other) = self
            .buttons
            .iter()
            .find(|b| b.id != spec.id && b.overlaps(&spec))
        {
            return Err(SceneError::InvalidButton(format!(
                "footprint overlaps button {}",
                other.id
            )));
        }
        self.buttons[idx] = spec;
        self.sync_button_pins();
        Ok(())
    }

    fn active_buttons(&self) -> &[ButtonSpec] {
        if self.is_enabled(ScriptCategory::Interaction) {
            &self.buttons
        } else {
            &[]
        }
    }

    fn sync_button_pins(&mut self) {
        let targets: Vec<(u32, Vec<usize>)> = self
            .active_buttons()
            .iter()
            .map(|b| (b.id, b.footprint()))
            .collect();
        let mut host = self.sandbox.host().borrow_mut();
        host.pins = [PinState::default(); PIN_COUNT];
        for (id, pins) in targets {
            for i in pins {
                host.pins[i] = PinState {
                    is_button: true,
                    is_pressing: false,
                    button_group_id: Some(id),
                };
            }
        }
    }

    /// Advances one frame: clear non-button pins, run interaction, animation,
    /// then the primitive, render buttons and clamp.
    pub fn step(&mut self, delta_time: f64) -> Result<Frame, SceneError> {
        if !(delta_time.is_finite() && delta_time > 0.0) {
            return Err(SceneError::InvalidDeltaTime(delta_time));
        }
        {
            let mut host = self.sandbox.host().borrow_mut();
            let host = &mut *host;
            for (h, pin) in host.heights.iter_mut().zip(host.pins.iter()) {
                if !pin.is_button {
                    *h = 0.0;
                }
            }
        }

        let mut faults = Vec::new();
        for category in [ScriptCategory::Interaction, ScriptCategory::Animation] {
            if let Some(slot) = self.slots[slot_of(category)].as_ref().filter(|s| s.enabled) {
                if let Err(fault) = slot.script.step(&self.sandbox, delta_time, &mut self.parent_params) {
                    faults.push(StepFault { category, fault });
                }
            }
        }
        if let Some(slot) = self.slots[0].as_ref().filter(|s| s.enabled) {
            // The primitive renders from a copy; its own writes to params are not kept.
            let mut copy = self.parent_params.clone();
            if let Err(fault) = slot.script.step(&self.sandbox, delta_time, &mut copy) {
                faults.push(StepFault {
                    category: ScriptCategory::Primitive,
                    fault,
                });
            }
        }

        let ratio = self.config.press_depth_ratio;
        let buttons: Vec<(Vec<usize>, f64)> = self
            .active_buttons()
            .iter()
            .map(|b| (b.footprint(), b.init_height))
            .collect();
        let mut host = self.sandbox.host().borrow_mut();
        for (pins, init_height) in buttons {
            for i in pins {
                host.heights[i] = if host.pins[i].is_pressing {
                    init_height * ratio
                } else {
                    init_height
                };
            }
        }
        for h in host.heights.iter_mut() {
            *h = clamp_height(*h);
        }
        self.field = HeightField::clamped(&host.heights);
        drop(host);
        self.seq += 1;
        if !faults.is_empty() {
            tracing::debug!(seq = self.seq, count = faults.len(), "script faults during frame");
        }
        Ok(Frame {
            seq: self.seq,
            field: self.field.clone(),
            faults,
        })
    }

    /// Releases garbage left by scripts; call between sessions of heavy use.
    pub fn collect_garbage(&self) {
        self.sandbox.collect_garbage();
    }
}
