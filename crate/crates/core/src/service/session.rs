use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::log::{EventLog, LogEntry, LoggedCommand};
use super::{now_ms, Engine, PromptOutcome, ServiceError, SessionId, StepPhase};
use crate::history::{CardId, HistoryCard, Session};
use crate::hw::{detect_presses, WireFrame, PRESS_THRESHOLD};
use crate::model::{ScriptCategory, SliderSpec};
use crate::sim::{ButtonSpec, Frame, Scene, SceneConfig};

/// Everything the UI needs to redraw the history panel and controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HistorySnapshot {
    pub session_id: SessionId,
    pub active_card_id: Option<CardId>,
    pub cards: Vec<HistoryCard>,
    pub sliders: Vec<SliderSpec>,
    pub params: IndexMap<String, f64>,
    pub buttons: Vec<ButtonSpec>,
}

/// One session: its history, the live scene built from the active card and
/// an optional append-only command log. Not `Send` (the scene owns a JS runtime).
pub struct SessionState {
    id: SessionId,
    engine: Arc<Engine>,
    session: Session,
    scene: Option<Scene>,
    log: Option<EventLog>,
}

impl std::fmt::Debug for SessionState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionState")
            .field("id", &self.id)
            .field("cards", &self.session.cards().len())
            .field("scene", &self.scene.is_some())
            .finish()
    }
}

impl SessionState {
    pub fn new(id: SessionId, engine: Arc<Engine>) -> Self {
        Self {
            id,
            engine,
            session: Session::new(),
            scene: None,
            log: None,
        }
    }

    pub fn with_log(mut self, log: EventLog) -> Self {
        self.log = Some(log);
        self
    }

    pub fn id(&self) -> SessionId {
        self.id
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn scene(&self) -> Option<&Scene> {
        self.scene.as_ref()
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    /// Runs the pipeline synchronously and applies the result.
    pub fn submit_prompt(
        &mut self,
        text: &str,
        emit: &mut dyn FnMut(StepPhase, String),
    ) -> Result<&HistoryCard, ServiceError> {
        self.submit_prompt_at(text, now_ms(), emit)
    }

    pub fn submit_prompt_at(
        &mut self,
        text: &str,
        created_at_ms: u64,
        emit: &mut dyn FnMut(StepPhase, String),
    ) -> Result<&HistoryCard, ServiceError> {
        let outcome = self.engine.run_prompt(&self.session, text, created_at_ms, emit)?;
        self.apply(outcome, emit)
    }

    /// Loads the outcome's scene, then appends its card. On a load failure
    /// the session is left unchanged.
    pub fn apply(
        &mut self,
        outcome: PromptOutcome,
        emit: &mut dyn FnMut(StepPhase, String),
    ) -> Result<&HistoryCard, ServiceError> {
        let scene = match self.build_scene(&outcome.card.artifacts, &Default::default()) {
            Ok(scene) => scene,
            Err(e) => {
                emit(StepPhase::Error, e.to_string());
                return Err(e);
            }
        };
        let command = LoggedCommand::Prompt {
            text: outcome.card.user_input.clone(),
            created_at_ms: outcome.card.created_at_ms,
            fixture_keys: outcome.fixture_keys.clone(),
        };
        self.scene = Some(scene);
        let id = self.session.append(outcome.card).id;
        self.record(command)?;
        emit(StepPhase::Loaded, format!("card {id}"));
        Ok(self.session.active_card().expect("just appended"))
    }

    fn build_scene(
        &self,
        artifacts: &[crate::model::ScriptArtifact],
        enabled: &std::collections::BTreeMap<usize, bool>,
    ) -> Result<Scene, ServiceError> {
        let config = SceneConfig {
            limits: self.engine.config().limits,
            ..SceneConfig::default()
        };
        let mut scene = Scene::load_with(config, artifacts)?;
        for (index, artifact) in artifacts.iter().enumerate() {
            if !enabled.get(&index).copied().unwrap_or(true) {
                scene.set_enabled(artifact.category, false)?;
            }
        }
        Ok(scene)
    }

    fn record(&mut self, command: LoggedCommand) -> Result<(), ServiceError> {
        if let Some(log) = self.log.as_mut() {
            log.append(&LogEntry {
                session_id: self.id,
                at_ms: now_ms(),
                command,
            })?;
        }
        Ok(())
    }

    fn scene_mut(&mut self) -> Result<&mut Scene, ServiceError> {
        self.scene.as_mut().ok_or(ServiceError::NoScene)
    }

    pub fn set_parameter(&mut self, name: &str, value: f64) -> Result<(), ServiceError> {
        self.scene_mut()?.set_parameter(name, value)?;
        self.record(LoggedCommand::Param {
            name: name.to_string(),
            value,
        })
    }

    pub fn press_button(&mut self, group: u32, pressed: bool) -> Result<(), ServiceError> {
        self.scene_mut()?.press_button(group, pressed)?;
        self.record(LoggedCommand::Button { group, pressed })
    }

    /// Flips one artifact of the active card; returns its new enabled state.
    pub fn toggle_artifact(&mut self, index: usize) -> Result<bool, ServiceError> {
        let category = self
            .session
            .active_card()
            .and_then(|c| c.artifacts.get(index))
            .map(|a| a.category);
        let enabled = self.session.toggle_artifact(index)?;
        let category: ScriptCategory = category.expect("toggle succeeded so the artifact exists");
        if let Some(scene) = self.scene.as_mut() {
            scene.set_enabled(category, enabled)?;
        }
        self.record(LoggedCommand::Toggle { index })?;
        Ok(enabled)
    }

    /// Makes `card` active and reloads its scene from scratch.
    pub fn rollback(&mut self, card: CardId) -> Result<(), ServiceError> {
        let target = self
            .session
            .card(card)
            .ok_or(ServiceError::History(crate::history::HistoryError::CardNotFound(card)))?;
        let scene = self.build_scene(&target.artifacts, &target.enabled)?;
        self.session.rollback(card)?;
        self.scene = Some(scene);
        self.record(LoggedCommand::Rollback { card })
    }

    pub fn configure_button(&mut self, spec: ButtonSpec) -> Result<(), ServiceError> {
        self.scene_mut()?.configure_button(spec.clone())?;
        self.record(LoggedCommand::ButtonConfig { spec })
    }

    /// Derives press state for every button pin from hardware heights.
    /// Returns the number of pins now pressed.
    pub fn ingest_actual(&mut self, actual: &WireFrame) -> Result<usize, ServiceError> {
        let scene = self.scene_mut()?;
        let presses = detect_presses(&scene.button_targets(), actual, PRESS_THRESHOLD);
        let mut pressed = 0;
        for (index, is_pressed) in presses {
            scene.set_pin_pressing(index, is_pressed)?;
            pressed += usize::from(is_pressed);
        }
        Ok(pressed)
    }

    /// Advances the scene one frame; `None` when nothing is loaded yet.
    pub fn step(&mut self, delta_time: f64) -> Result<Option<Frame>, ServiceError> {
        match self.scene.as_mut() {
            Some(scene) => Ok(Some(scene.step(delta_time)?)),
            None => Ok(None),
        }
    }

    pub fn snapshot(&self) -> HistorySnapshot {
        let scene = self.scene.as_ref();
        HistorySnapshot {
            session_id: self.id,
            active_card_id: self.session.active_card_id(),
            cards: self.session.cards().to_vec(),
            sliders: scene.map(|s| s.sliders().to_vec()).unwrap_or_default(),
            params: scene.map(|s| s.parent_params().clone()).unwrap_or_default(),
            buttons: scene.map(|s| s.buttons().to_vec()).unwrap_or_default(),
        }
    }

    /// Rebuilds a session by re-running every logged command. Prompts go
    /// through the engine again, so its gateway should be in replay mode.
    pub fn replay(
        engine: Arc<Engine>,
        id: SessionId,
        entries: &[LogEntry],
    ) -> Result<Self, ServiceError> {
        let mut state = SessionState::new(id, engine);
        let mut ignore = |_: StepPhase, _: String| {};
        for entry in entries.iter().filter(|e| e.session_id == id) {
            match &entry.command {
                LoggedCommand::Prompt {
                    text, created_at_ms, ..
                } => {
                    state.submit_prompt_at(text, *created_at_ms, &mut ignore)?;
                }
                LoggedCommand::Param { name, value } => state.set_parameter(name, *value)?,
                LoggedCommand::Button { group, pressed } => state.press_button(*group, *pressed)?,
                LoggedCommand::Toggle { index } => {
                    state.toggle_artifact(*index)?;
                }
                LoggedCommand::Rollback { card } => state.rollback(*card)?,
                LoggedCommand::ButtonConfig { spec } => state.configure_button(spec.clone())?,
            }
        }
        Ok(state)
    }
}
