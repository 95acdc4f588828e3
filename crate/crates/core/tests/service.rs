mod support;

use std::sync::Arc;
use std::time::{Duration, Instant};

use pinshape_core::llm::{Match, ScriptedTransport};
use pinshape_core::service::{EventLog, LoggedCommand};
use pinshape_core::{
    CardId, Event, Gateway, Hub, HubConfig, ScriptCategory, ServiceError, SessionId, SessionState,
    StepPhase, WireFrame, PIN_COUNT,
};
use support::*;

fn state(t: &Arc<ScriptedTransport>) -> SessionState {
    SessionState::new(SessionId::new_v4(), live_engine(t))
}

fn phases(state: &mut SessionState, text: &str) -> (Result<CardId, ServiceError>, Vec<StepPhase>) {
    let mut seen = Vec::new();
    let result = state
        .submit_prompt(text, &mut |phase, _| seen.push(phase))
        .map(|c| c.id);
    (result, seen)
}

#[test]
fn heart_walkthrough() {
    let t = heart_transport();
    let mut s = state(&t);
    let (card, seen) = phases(&mut s, HEART_PROMPT);
    card.unwrap();
    assert_eq!(
        seen,
        [
            StepPhase::Segmented,
            StepPhase::Parameters,
            StepPhase::Validated,
            StepPhase::Instructed,
            StepPhase::Generated(ScriptCategory::Primitive),
            StepPhase::Generated(ScriptCategory::Animation),
            StepPhase::Generated(ScriptCategory::Interaction),
            StepPhase::Loaded,
        ]
    );

    let card = s.session().active_card().unwrap();
    assert_eq!(card.plan.primitive.as_deref(), Some(HEART_SEG_PRIMITIVE));
    assert_eq!(card.instructions.primitive.as_deref(), Some(HEART_INS_PRIMITIVE));
    assert_eq!(card.instructions.animation.as_deref(), Some(HEART_INS_ANIMATION));
    assert_eq!(card.instructions.interaction.as_deref(), Some(HEART_INS_INTERACTION));
    assert_eq!(card.artifacts.len(), 3);

    let scene = s.scene().unwrap();
    let names: Vec<_> = scene.sliders().iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, HEART_PARAMS);
    assert_eq!(scene.buttons().len(), 2);

    // Primitive request carries the four parameters; generators got three examples each.
    let requests = t.requests();
    let primitive = requests
        .iter()
        .find(|(_, m)| m[0].content.contains(PRIMITIVE_AGENT))
        .unwrap();
    assert_eq!(primitive.1.len(), 1 + 2 * 3 + 1);
    assert!(HEART_PARAMS.iter().all(|p| primitive.1.last().unwrap().content.contains(p)));
    assert!(!primitive.1.last().unwrap().content.contains("previousScript"));

    // Button 1 moves the heart left by moveSpeed per frame.
    s.press_button(1, true).unwrap();
    for _ in 0..5 {
        s.step(1.0 / 30.0).unwrap();
    }
    let x = s.scene().unwrap().parent_params()["heartPositionX"];
    assert!((x - 11.5).abs() < 1e-9, "{x}");
}

#[test]
fn follow_up_adds_rotation_and_keeps_pulse() {
    let t = heart_transport();
    let mut s = state(&t);
    phases(&mut s, HEART_PROMPT).0.unwrap();
    let first = s.session().active_card().unwrap().clone();
    let before = t.requests().len();

    let (card, seen) = phases(&mut s, ROTATE_PROMPT);
    let card = card.unwrap();
    assert!(StepPhase::in_canonical_order(&seen));
    assert!(!seen.contains(&StepPhase::Generated(ScriptCategory::Animation)));

    let second = s.session().card(card).unwrap();
    assert_eq!(second.parent_id, Some(first.id));
    assert!(second.plan.is_followup);
    let anim = second.artifact(ScriptCategory::Animation).unwrap();
    assert_eq!(anim, first.artifact(ScriptCategory::Animation).unwrap());
    assert!(second
        .artifact(ScriptCategory::Primitive)
        .unwrap()
        .parameters
        .contains_key("heartRotation"));

    // Follow-ups skip parameter generation and send the previous scripts back.
    let new: Vec<_> = t.requests().into_iter().skip(before).collect();
    assert!(new.iter().all(|(_, m)| !m[0].content.contains(GEN)));
    let prim = new.iter().find(|(_, m)| m[0].content.contains(PRIMITIVE_AGENT)).unwrap();
    assert!(prim.1.last().unwrap().content.contains("previousScript"));
    assert!(prim.1.last().unwrap().content.contains("heartScale <= 0"));
    assert_eq!(new.iter().filter(|(_, m)| m[0].content.contains(VAL)).count(), 2);

    // One click, one quarter turn.
    s.press_button(1, true).unwrap();
    for _ in 0..4 {
        s.step(1.0 / 30.0).unwrap();
    }
    let r = s.scene().unwrap().parent_params()["heartRotation"];
    assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-9, "{r}");

    s.rollback(first.id).unwrap();
    assert!(!s.scene().unwrap().parent_params().contains_key("heartRotation"));
    assert_eq!(s.session().active_card_id(), Some(first.id));
}

#[test]
fn broken_script_is_regenerated_with_the_error() {
    let t = Arc::new(ScriptedTransport::new());
    heart_helper(&t);
    t.on_seq(
        Match::system(PRIMITIVE_AGENT),
        [
            script_reply("primitive", "Created a heart", BROKEN_PRIMITIVE_JS),
            script_reply("primitive", "Created a heart", HEART_PRIMITIVE_JS),
        ],
    );
    heart_generators(&t);
    let mut s = state(&t);
    let mut seen = Vec::new();
    s.submit_prompt(HEART_PROMPT, &mut |p, d| seen.push((p, d))).unwrap();
    let err = seen.iter().position(|(p, _)| *p == StepPhase::Error).unwrap();
    assert_eq!(seen[err + 1].0, StepPhase::Generated(ScriptCategory::Primitive));
    assert!(seen[err].1.contains("dynamicScript"));

    let prim: Vec<_> = t
        .requests()
        .into_iter()
        .filter(|(_, m)| m[0].content.contains(PRIMITIVE_AGENT))
        .collect();
    assert_eq!(prim.len(), 2);
    let retry = &prim[1].1.last().unwrap().content;
    assert!(retry.contains("compileError") && retry.contains("drawHeart"));
}

#[test]
fn regeneration_gives_up_after_three_retries() {
    let t = Arc::new(ScriptedTransport::new());
    heart_helper(&t);
    t.on(Match::system(PRIMITIVE_AGENT), script_reply("primitive", "m", BROKEN_PRIMITIVE_JS));
    heart_generators(&t);
    let mut s = state(&t);
    let (result, seen) = phases(&mut s, HEART_PROMPT);
    match result {
        Err(ServiceError::GenerationFailed {
            category: ScriptCategory::Primitive,
            regenerations: 3,
            ..
        }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(seen.last(), Some(&StepPhase::Error));
    let calls = t
        .requests()
        .iter()
        .filter(|(_, m)| m[0].content.contains(PRIMITIVE_AGENT))
        .count();
    assert_eq!(calls, 4);
    assert!(s.session().cards().is_empty());
    assert!(s.scene().is_none());
}

#[test]
fn toggling_animation_freezes_its_parameter() {
    let t = heart_transport();
    let mut s = state(&t);
    phases(&mut s, HEART_PROMPT).0.unwrap();
    assert!(!s.toggle_artifact(1).unwrap());
    for _ in 0..10 {
        s.step(1.0 / 30.0).unwrap();
    }
    assert_eq!(s.scene().unwrap().parent_params()["heartScale"], 8.0);
    assert!(s.toggle_artifact(1).unwrap());
    s.step(1.0 / 30.0).unwrap();
    assert_ne!(s.scene().unwrap().parent_params()["heartScale"], 8.0);
    assert!(matches!(s.toggle_artifact(7), Err(ServiceError::History(_))));
}

#[test]
fn hardware_presses_drive_buttons() {
    let t = heart_transport();
    let mut s = state(&t);
    phases(&mut s, HEART_PROMPT).0.unwrap();
    let targets = s.scene().unwrap().button_targets();
    let group_one: Vec<usize> = targets
        .iter()
        .map(|(i, _)| *i)
        .filter(|i| s.scene().unwrap().pin(*i).unwrap().button_group_id == Some(1))
        .collect();
    assert_eq!(group_one.len(), 4);

    let frame = s.step(1.0 / 30.0).unwrap().unwrap();
    let mut actual = WireFrame::encode(&frame.field).as_bytes().to_vec();
    assert_eq!(s.ingest_actual(&WireFrame::from_bytes(&actual).unwrap()).unwrap(), 0);
    for &i in &group_one {
        actual[i] = 30;
    }
    assert_eq!(s.ingest_actual(&WireFrame::from_bytes(&actual).unwrap()).unwrap(), 4);
    let frame = s.step(1.0 / 30.0).unwrap().unwrap();
    assert_eq!(frame.field.get(group_one[0]), Some(25.0));
    assert!((s.scene().unwrap().parent_params()["heartPositionX"] - 11.9).abs() < 1e-9);
}

#[test]
fn event_log_replays_to_the_same_cards() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("fixtures");
    let log_path = dir.path().join("session.jsonl");
    let t = heart_transport();
    let id = SessionId::new_v4();

    let recorded = {
        let engine = engine(Gateway::record(t.clone(), &fixtures));
        let mut s = SessionState::new(id, engine).with_log(EventLog::open(&log_path).unwrap());
        s.submit_prompt(HEART_PROMPT, &mut |_, _| {}).unwrap();
        s.set_parameter("heartHeight", 60.0).unwrap();
        s.submit_prompt(ROTATE_PROMPT, &mut |_, _| {}).unwrap();
        s.toggle_artifact(1).unwrap();
        s.rollback(CardId(1)).unwrap();
        s.snapshot()
    };

    let entries = EventLog::read(&log_path).unwrap();
    assert_eq!(entries.len(), 5);
    match &entries[0].command {
        LoggedCommand::Prompt { fixture_keys, .. } => assert_eq!(fixture_keys.len(), 7),
        other => panic!("{other:?}"),
    }

    let replay = SessionState::replay(engine(Gateway::replay(&fixtures)), id, &entries).unwrap();
    assert_eq!(replay.snapshot(), recorded);
}

#[test]
fn actor_streams_feedback_frames_and_hardware() {
    let t = heart_transport();
    let hub = Hub::new(live_engine(&t), HubConfig::default());
    let session = hub.create_session().unwrap();
    assert_eq!(hub.hardware().active(), Some(session.id()));
    let mut events = session.subscribe();

    let card = session.prompt_blocking(HEART_PROMPT).unwrap();
    assert_eq!(card.artifacts.len(), 3);

    let deadline = Instant::now() + Duration::from_secs(5);
    let mut phases = Vec::new();
    let mut frames = 0;
    while frames < 3 && Instant::now() < deadline {
        match events.try_recv() {
            Ok(Event::Feedback(f)) => {
                assert_eq!(f.session_id, session.id());
                phases.push(f.phase);
            }
            Ok(Event::Frame(f)) => {
                assert_eq!(f.heights.len(), PIN_COUNT);
                assert!(f.params.contains_key("heartScale"));
                frames += 1;
            }
            Ok(Event::Fault { message, .. }) => panic!("{message}"),
            Err(_) => std::thread::sleep(Duration::from_millis(5)),
        }
    }
    assert!(frames >= 3);
    assert_eq!(phases.first(), Some(&StepPhase::Segmented));
    assert_eq!(phases.last(), Some(&StepPhase::Loaded));
    assert!(StepPhase::in_canonical_order(&phases));

    let out = hub.hardware().outbox.wait(Duration::from_secs(1)).unwrap();
    assert!(out.as_bytes().contains(&40));

    session.press_button_blocking(2, true).unwrap();
    std::thread::sleep(Duration::from_millis(200));
    let snap = session.snapshot_blocking().unwrap();
    assert!(snap.params["heartPositionX"] > 12.0);
    assert!(matches!(
        session.press_button_blocking(9, true),
        Err(ServiceError::Scene(_))
    ));
    hub.shutdown();
    assert!(hub.session(session.id()).is_err());
}
