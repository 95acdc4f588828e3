//! Deterministic, sandboxed execution of generated scripts on the pin grid.

mod sandbox;
mod scene;
mod script;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::grid::{pin_index, GRID_X, GRID_Y, MAX_HEIGHT};
use crate::model::ScriptCategory;

pub use sandbox::{Fault, FaultKind, Limits, PinState, POLL_INTERVAL};
pub use scene::{Frame, Scene, SceneConfig, SceneError, StepFault, PRESS_DEPTH_RATIO};
pub use script::{entry_points, CompileError, CompilePhase};

use sandbox::Sandbox;
use script::LoadedScript;

/// Delta time used for the trial frame of a compile check.
pub const TRIAL_DELTA_TIME: f64 = 1.0 / 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ButtonSpec {
    pub id: u32,
    /// Footprint edge: 1 (1x1) or 2 (2x2).
    pub size: u8,
    /// Footprint anchor `(x, y)`; the footprint extends towards +x and +y.
    pub position: (usize, usize),
    pub init_height: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ButtonError {
    #[error("size must be 1 or 2, got {0}")]
    BadSize(u8),
    #[error("footprint at ({x}, {y}) with size {size} leaves the grid")]
    OutsideGrid { x: usize, y: usize, size: u8 },
    #[error("init height {0} must be within 0..={MAX_HEIGHT}")]
    BadHeight(f64),
}

impl ButtonSpec {
    pub fn validate(&self) -> Result<(), ButtonError> {
        if !matches!(self.size, 1 | 2) {
            return Err(ButtonError::BadSize(self.size));
        }
        let (x, y) = self.position;
        let size = usize::from(self.size);
        if x + size > GRID_X || y + size > GRID_Y {
            return Err(ButtonError::OutsideGrid { x, y, size: self.size });
        }
        if !(0.0..=MAX_HEIGHT).contains(&self.init_height) {
            return Err(ButtonError::BadHeight(self.init_height));
        }
        Ok(())
    }

    /// Pin indices covered by the footprint. Assumes a validated spec.
    pub fn footprint(&self) -> Vec<usize> {
        let (x0, y0) = self.position;
        let size = usize::from(self.size);
        let mut pins = Vec::with_capacity(size * size);
        for y in y0..y0 + size {
            for x in x0..x0 + size {
                if let Ok(i) = pin_index(x, y) {
                    pins.push(i);
                }
            }
        }
        pins
    }

    pub fn overlaps(&self, other: &ButtonSpec) -> bool {
        let a = self.footprint();
        other.footprint().iter().any(|p| a.contains(p))
    }
}

/// Headless compile check with an empty parent parameter map.
pub fn compile_check(source: &str, category: ScriptCategory) -> Result<(), CompileError> {
    compile_check_with_parent(source, category, &IndexMap::new())
}

/// Parses, instantiates, checks entry points and runs one trial frame.
/// Animation and interaction scripts see `parent` as their parentparams.
pub fn compile_check_with_parent(
    source: &str,
    category: ScriptCategory,
    parent: &IndexMap<String, f64>,
) -> Result<(), CompileError> {
    compile_check_with_limits(source, category, parent, Limits::default())
}

pub fn compile_check_with_limits(
    source: &str,
    category: ScriptCategory,
    parent: &IndexMap<String, f64>,
    limits: Limits,
) -> Result<(), CompileError> {
    let sandbox = Sandbox::new(limits).map_err(|f| CompileError::at(CompilePhase::Instantiate, f))?;
    let script = LoadedScript::load(&sandbox, source, category)?;
    let mut params = match category {
        ScriptCategory::Primitive => script.initial.clone(),
        _ => parent.clone(),
    };
    let result = script
        .step(&sandbox, TRIAL_DELTA_TIME, &mut params)
        .map_err(|f| CompileError::at(CompilePhase::TrialFrame, f));
    drop(script);
    result
}

/// Evaluates the script's initializer and returns its finite numeric entries.
pub fn extract_parameters(
    source: &str,
    category: ScriptCategory,
) -> Result<IndexMap<String, f64>, CompileError> {
    let sandbox =
        Sandbox::new(Limits::default()).map_err(|f| CompileError::at(CompilePhase::Instantiate, f))?;
    let script = LoadedScript::load(&sandbox, source, category)?;
    Ok(script.initial.clone())
}

#[cfg(test)]
mod tests;
