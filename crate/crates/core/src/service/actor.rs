//! Live sessions. Each session runs on its own thread (the scene is not
//! `Send`) and ticks at a fixed rate. Prompts run on a worker thread so the
//! display keeps animating; commands that arrive meanwhile wait their turn.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::mpsc::{self, RecvTimeoutError, TryRecvError};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, oneshot};

use super::log::EventLog;
use super::session::{HistorySnapshot, SessionState};
use super::{Engine, PromptOutcome, ServiceError, SessionId, StepFeedback, StepPhase};
use crate::history::{CardId, HistoryCard};
use crate::hw::{LatestSlot, WireFrame};
use crate::model::ScriptCategory;
use crate::sim::ButtonSpec;

pub const DEFAULT_TICK_HZ: f64 = 30.0;
const EVENT_CAPACITY: usize = 256;

type Reply<T> = oneshot::Sender<Result<T, ServiceError>>;

pub enum Command {
    Prompt { text: String, reply: Reply<HistoryCard> },
    SetParameter { name: String, value: f64, reply: Reply<()> },
    PressButton { group: u32, pressed: bool, reply: Reply<()> },
    Toggle { index: usize, reply: Reply<bool> },
    Rollback { card: CardId, reply: Reply<()> },
    ConfigureButton { spec: ButtonSpec, reply: Reply<()> },
    Snapshot { reply: oneshot::Sender<HistorySnapshot> },
    ActualHeights(WireFrame),
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FrameMessage {
    pub seq: u64,
    pub heights: Vec<f64>,
    pub params: IndexMap<String, f64>,
}

/// Everything pushed to subscribers of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Event {
    Feedback(StepFeedback),
    Frame(FrameMessage),
    Fault { category: ScriptCategory, message: String },
}

/// Which session drives the physical display, and its outgoing frame.
#[derive(Debug, Default)]
pub struct HardwareLink {
    active: Mutex<Option<SessionId>>,
    pub outbox: LatestSlot<WireFrame>,
}

impl HardwareLink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn active(&self) -> Option<SessionId> {
        *self.active.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn attach(&self, id: SessionId) {
        *self.active.lock().unwrap_or_else(|e| e.into_inner()) = Some(id);
    }

    fn is_active(&self, id: SessionId) -> bool {
        self.active() == Some(id)
    }
}

#[derive(Debug, Clone)]
pub struct HubConfig {
    pub tick_hz: f64,
    /// One `<session>.jsonl` per session when set.
    pub log_dir: Option<PathBuf>,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self {
            tick_hz: DEFAULT_TICK_HZ,
            log_dir: None,
        }
    }
}

pub struct SessionHandle {
    id: SessionId,
    commands: mpsc::Sender<Command>,
    events: broadcast::Sender<Event>,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl std::fmt::Debug for SessionHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionHandle").field("id", &self.id).finish()
    }
}

impl SessionHandle {
    pub fn id(&self) -> SessionId {
        self.id
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Event> {
        self.events.subscribe()
    }

    pub fn send(&self, command: Command) -> Result<(), ServiceError> {
        self.commands.send(command).map_err(|_| ServiceError::WorkerGone)
    }

    fn ask<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<oneshot::Receiver<Result<T, ServiceError>>, ServiceError> {
        let (tx, rx) = oneshot::channel();
        self.send(make(tx))?;
        Ok(rx)
    }

    pub async fn prompt(&self, text: impl Into<String>) -> Result<HistoryCard, ServiceError> {
        let text = text.into();
        flatten(self.ask(|reply| Command::Prompt { text, reply })?.await)
    }

    pub async fn set_parameter(&self, name: impl Into<String>, value: f64) -> Result<(), ServiceError> {
        let name = name.into();
        flatten(self.ask(|reply| Command::SetParameter { name, value, reply })?.await)
    }

    pub async fn press_button(&self, group: u32, pressed: bool) -> Result<(), ServiceError> {
        flatten(self.ask(|reply| Command::PressButton { group, pressed, reply })?.await)
    }

    pub async fn toggle(&self, index: usize) -> Result<bool, ServiceError> {
        flatten(self.ask(|reply| Command::Toggle { index, reply })?.await)
    }

    pub async fn rollback(&self, card: CardId) -> Result<(), ServiceError> {
        flatten(self.ask(|reply| Command::Rollback { card, reply })?.await)
    }

    pub async fn configure_button(&self, spec: ButtonSpec) -> Result<(), ServiceError> {
        flatten(self.ask(|reply| Command::ConfigureButton { spec, reply })?.await)
    }

    pub async fn snapshot(&self) -> Result<HistorySnapshot, ServiceError> {
        let (tx, rx) = oneshot::channel();
        self.send(Command::Snapshot { reply: tx })?;
        rx.await.map_err(|_| ServiceError::WorkerGone)
    }

    /// Blocking variants for callers outside an async runtime.
    pub fn prompt_blocking(&self, text: impl Into<String>) -> Result<HistoryCard, ServiceError> {
        let text = text.into();
        flatten(self.ask(|reply| Command::Prompt { text, reply })?.blocking_recv())
    }

    pub fn snapshot_blocking(&self) -> Result<HistorySnapshot, ServiceError> {
        let (tx, rx) = oneshot::channel();
        self.send(Command::Snapshot { reply: tx })?;
        rx.blocking_recv().map_err(|_| ServiceError::WorkerGone)
    }

    pub fn press_button_blocking(&self, group: u32, pressed: bool) -> Result<(), ServiceError> {
        flatten(self.ask(|reply| Command::PressButton { group, pressed, reply })?.blocking_recv())
    }

    fn stop(&self) {
        let _ = self.commands.send(Command::Shutdown);
        if let Some(handle) = self.thread.lock().unwrap_or_else(|e| e.into_inner()).take() {
            let _ = handle.join();
        }
    }
}

impl Drop for SessionHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn flatten<T>(r: Result<Result<T, ServiceError>, oneshot::error::RecvError>) -> Result<T, ServiceError> {
    r.map_err(|_| ServiceError::WorkerGone)?
}

/// All live sessions plus the hardware link.
pub struct Hub {
    engine: Arc<Engine>,
    config: HubConfig,
    sessions: RwLock<HashMap<SessionId, Arc<SessionHandle>>>,
    link: Arc<HardwareLink>,
}

impl std::fmt::Debug for Hub {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hub").field("config", &self.config).finish()
    }
}

impl Hub {
    pub fn new(engine: Arc<Engine>, config: HubConfig) -> Self {
        Self {
            engine,
            config,
            sessions: RwLock::new(HashMap::new()),
            link: Arc::new(HardwareLink::new()),
        }
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn hardware(&self) -> &Arc<HardwareLink> {
        &self.link
    }

    /// Starts a session. The newest session drives the hardware.
    pub fn create_session(&self) -> Result<Arc<SessionHandle>, ServiceError> {
        let id = uuid::Uuid::new_v4();
        let log = match &self.config.log_dir {
            Some(dir) => Some(EventLog::open(dir.join(format!("{id}.jsonl")))?),
            None => None,
        };
        let (commands, rx) = mpsc::channel();
        let (events, _) = broadcast::channel(EVENT_CAPACITY);
        let actor = Actor {
            id,
            engine: self.engine.clone(),
            events: events.clone(),
            link: self.link.clone(),
            tick: Duration::from_secs_f64(1.0 / self.config.tick_hz),
        };
        let thread = thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || actor.run(rx, log))
            .map_err(ServiceError::Log)?;
        let handle = Arc::new(SessionHandle {
            id,
            commands,
            events,
            thread: Mutex::new(Some(thread)),
        });
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, handle.clone());
        self.link.attach(id);
        Ok(handle)
    }

    pub fn session(&self, id: SessionId) -> Result<Arc<SessionHandle>, ServiceError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(&id)
            .cloned()
            .ok_or(ServiceError::SessionNotFound(id))
    }

    pub fn session_ids(&self) -> Vec<SessionId> {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).keys().copied().collect()
    }

    /// Routes a frame of measured heights to the hardware-attached session.
    pub fn route_actual(&self, frame: WireFrame) -> Result<(), ServiceError> {
        let id = self.link.active().ok_or(ServiceError::NoScene)?;
        self.session(id)?.send(Command::ActualHeights(frame))
    }

    pub fn close_session(&self, id: SessionId) -> Result<(), ServiceError> {
        let handle = self
            .sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .remove(&id)
            .ok_or(ServiceError::SessionNotFound(id))?;
        handle.stop();
        Ok(())
    }

    pub fn shutdown(&self) {
        let handles: Vec<_> = self
            .sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .drain()
            .map(|(_, h)| h)
            .collect();
        for h in handles {
            h.stop();
        }
        self.link.outbox.close();
    }
}

struct Actor {
    id: SessionId,
    engine: Arc<Engine>,
    events: broadcast::Sender<Event>,
    link: Arc<HardwareLink>,
    tick: Duration,
}

type PromptResult = (Result<PromptOutcome, ServiceError>, Reply<HistoryCard>);

impl Actor {
    fn run(self, commands: mpsc::Receiver<Command>, log: Option<EventLog>) {
        let mut state = SessionState::new(self.id, self.engine.clone());
        if let Some(log) = log {
            state = state.with_log(log);
        }
        let mut pending: Option<mpsc::Receiver<PromptResult>> = None;
        let mut last_faults: HashMap<ScriptCategory, String> = HashMap::new();
        let mut next_tick = Instant::now() + self.tick;

        loop {
            if let Some(rx) = &pending {
                match rx.try_recv() {
                    Ok((outcome, reply)) => {
                        pending = None;
                        let result = outcome.and_then(|o| {
                            let mut emit = self.emitter();
                            state.apply(o, &mut emit).cloned()
                        });
                        last_faults.clear();
                        let _ = reply.send(result);
                    }
                    Err(TryRecvError::Empty) => {}
                    Err(TryRecvError::Disconnected) => pending = None,
                }
            }

            let wait = next_tick.saturating_duration_since(Instant::now());
            if pending.is_some() {
                thread::sleep(wait.min(Duration::from_millis(2)));
            } else {
                match commands.recv_timeout(wait) {
                    Ok(Command::Shutdown) | Err(RecvTimeoutError::Disconnected) => break,
                    Ok(command) => {
                        if let Some(rx) = self.handle(&mut state, command) {
                            pending = Some(rx);
                        }
                    }
                    Err(RecvTimeoutError::Timeout) => {}
                }
            }

            let now = Instant::now();
            if now >= next_tick {
                self.tick(&mut state, &mut last_faults);
                next_tick += self.tick;
                if next_tick < now {
                    next_tick = now + self.tick;
                }
            }
        }
    }

    fn emitter(&self) -> impl FnMut(StepPhase, String) + Send + 'static {
        let events = self.events.clone();
        let session_id = self.id;
        move |phase, detail| {
            let _ = events.send(Event::Feedback(StepFeedback {
                session_id,
                phase,
                detail,
            }));
        }
    }

    fn handle(&self, state: &mut SessionState, command: Command) -> Option<mpsc::Receiver<PromptResult>> {
        match command {
            Command::Prompt { text, reply } => {
                let (tx, rx) = mpsc::channel();
                let engine = self.engine.clone();
                let session = state.session().clone();
                let mut emit = self.emitter();
                let spawned = thread::Builder::new().name("pipeline".into()).spawn(move || {
                    let outcome = engine.run_prompt(&session, &text, super::now_ms(), &mut emit);
                    let _ = tx.send((outcome, reply));
                });
                match spawned {
                    Ok(_) => return Some(rx),
                    Err(e) => tracing::error!("could not start pipeline worker: {e}"),
                }
            }
            Command::SetParameter { name, value, reply } => {
                let _ = reply.send(state.set_parameter(&name, value));
            }
            Command::PressButton { group, pressed, reply } => {
                let _ = reply.send(state.press_button(group, pressed));
            }
            Command::Toggle { index, reply } => {
                let _ = reply.send(state.toggle_artifact(index));
            }
            Command::Rollback { card, reply } => {
                let _ = reply.send(state.rollback(card));
            }
            Command::ConfigureButton { spec, reply } => {
                let _ = reply.send(state.configure_button(spec));
            }
            Command::Snapshot { reply } => {
                let _ = reply.send(state.snapshot());
            }
            Command::ActualHeights(frame) => {
                if let Err(e) = state.ingest_actual(&frame) {
                    tracing::debug!("ignoring hardware frame: {e}");
                }
            }
            Command::Shutdown => unreachable!("handled by the loop"),
        }
        None
    }

    fn tick(&self, state: &mut SessionState, last_faults: &mut HashMap<ScriptCategory, String>) {
        let frame = match state.step(self.tick.as_secs_f64()) {
            Ok(Some(frame)) => frame,
            Ok(None) => return,
            Err(e) => {
                tracing::warn!("frame failed: {e}");
                return;
            }
        };
        // Report a fault once, not thirty times a second.
        for f in &frame.faults {
            let message = f.fault.to_string();
            if last_faults.get(&f.category) != Some(&message) {
                last_faults.insert(f.category, message.clone());
                let _ = self.events.send(Event::Fault {
                    category: f.category,
                    message,
                });
            }
        }
        if frame.faults.is_empty() {
            last_faults.clear();
        }
        if self.link.is_active(self.id) {
            self.link.outbox.put(WireFrame::encode(&frame.field));
        }
        let params = state.scene().map(|s| s.parent_params().clone()).unwrap_or_default();
        let _ = self.events.send(Event::Frame(FrameMessage {
            seq: frame.seq,
            heights: frame.field.iter().collect(),
            params,
        }));
    }
}
