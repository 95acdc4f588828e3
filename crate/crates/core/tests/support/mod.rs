//! Scripted model replies shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use pinshape_core::llm::{Match, ScriptedTransport, FALLBACK_EMBEDDING_MODEL};
use pinshape_core::{Engine, EngineConfig, Gateway, ModelConfig};
use serde_json::json;

pub const SEG: &str = "intelligently segment";
pub const GEN: &str = "analyze and generate parameters";
pub const VAL: &str = "You are a smart agent tasked with evaluating whether";
pub const INS: &str = "come up with code instructions";
pub const PRIMITIVE_AGENT: &str = "Generate functions that create primitives";
pub const ANIMATION_AGENT: &str = "AI Animation Script Generator";
pub const INTERACTION_AGENT: &str = "write interaction scripts";

pub const HEART_PROMPT: &str =
    "create a heart shape with a pulsing animation, and move the shape left and right with two buttons.";
pub const HEART_SEG_PRIMITIVE: &str = "Create a heart shape on the display";
pub const HEART_SEG_ANIMATION: &str = "Implement a pulsing animation to simulate the heart beating";
pub const HEART_SEG_INTERACTION: &str =
    "Create two buttons, one to move the heart shape to the left and another to move it to the right across the display";
pub const HEART_PARAMS: [&str; 4] = ["heartPositionX", "heartPositionY", "heartScale", "heartHeight"];
pub const HEART_INS_PRIMITIVE: &str = "Create a heart shape on the display by setting its initial position with [heartPositionX] and [heartPositionY], scaling it with [heartScale], and establishing its height with [heartHeight] for the 2.5D effect.";
pub const HEART_INS_ANIMATION: &str =
    "Implement a pulsing animation to simulate the heart beating by periodically changing [heartScale]";
pub const HEART_INS_INTERACTION: &str = "Create two buttons: one that decreases [heartPositionX] to move the heart shape to the left, and another that increases [heartPositionX] to move it to the right across the display.";

pub const ROTATE_PROMPT: &str = "instead of moving the position, I want it to rotate when I click the button";

pub const HEART_PRIMITIVE_JS: &str = include_str!("../fixtures/scripts/heart_primitive.js");
pub const HEART_PULSE_JS: &str = include_str!("../fixtures/scripts/heart_pulse.js");
pub const HEART_BUTTONS_JS: &str = include_str!("../fixtures/scripts/heart_buttons.js");
pub const HEART_ROTATING_JS: &str = include_str!("../fixtures/scripts/heart_rotating.js");
pub const HEART_ROTATE_BUTTONS_JS: &str = include_str!("../fixtures/scripts/heart_rotate_buttons.js");
pub const BROKEN_PRIMITIVE_JS: &str = include_str!("../fixtures/scripts/broken_primitive.js");

pub fn script_reply(category: &str, message: &str, source: &str) -> String {
    json!({ "type": category, "message": message, "content": source }).to_string()
}

fn segments(followup: bool, p: Option<&str>, a: Option<&str>, i: Option<&str>) -> String {
    json!({
        "is_followup": followup,
        "Authoring Primitive Shape/Motion": p.unwrap_or("None"),
        "Authoring Animation": a.unwrap_or("None"),
        "Authoring Interaction": i.unwrap_or("None"),
    })
    .to_string()
}

fn bundle(p: Option<&str>, a: Option<&str>, i: Option<&str>) -> String {
    segments(false, p, a, i)
}

/// Helper chains for the heart walkthrough, without the generators.
pub fn heart_helper(t: &ScriptedTransport) {
    t.on(
        Match::system(SEG).and_user(HEART_PROMPT),
        segments(false, Some(HEART_SEG_PRIMITIVE), Some(HEART_SEG_ANIMATION), Some(HEART_SEG_INTERACTION)),
    );
    t.on(Match::system(GEN), json!({ "parameters": HEART_PARAMS }).to_string());
    t.on(
        Match::system(VAL).and_user("heartPositionX"),
        json!({ "success": true, "message": "heartScale drives the pulse and heartPositionX the buttons" }).to_string(),
    );
    t.on(
        Match::system(INS).and_user("heart beating"),
        bundle(Some(HEART_INS_PRIMITIVE), Some(HEART_INS_ANIMATION), Some(HEART_INS_INTERACTION)),
    );
}

pub fn heart_generators(t: &ScriptedTransport) {
    t.on(Match::system(PRIMITIVE_AGENT), script_reply("primitive", "Created a heart shape", HEART_PRIMITIVE_JS));
    t.on(Match::system(ANIMATION_AGENT), script_reply("animation", "The heart now pulses", HEART_PULSE_JS));
    t.on(
        Match::system(INTERACTION_AGENT),
        script_reply("interaction", "Two buttons move the heart left and right", HEART_BUTTONS_JS),
    );
}

/// The follow-up turn that swaps movement for rotation.
pub fn rotate_followup(t: &ScriptedTransport) {
    t.on(
        Match::system(SEG).and_user(ROTATE_PROMPT),
        segments(
            true,
            Some("Modify the heart shape so that it can rotate"),
            None,
            Some("Change the buttons so that clicking them rotates the heart instead of moving it"),
        ),
    );
    t.on_seq(
        Match::system(VAL).and_user("rotates the heart"),
        [
            json!({
                "success": false,
                "message": "None of the parameters controls rotation",
                "updatedParams": ["heartRotation"],
            })
            .to_string(),
            json!({ "success": true, "message": "heartRotation covers the rotation" }).to_string(),
        ],
    );
    t.on(
        Match::system(INS).and_user("heartRotation"),
        bundle(
            Some("Modify the heart shape so it rotates about its centre by [heartRotation], keeping [heartPositionX], [heartPositionY], [heartScale] and [heartHeight]"),
            None,
            Some("Change the two buttons so each click changes [heartRotation] instead of [heartPositionX]"),
        ),
    );
    t.on(
        Match::system(PRIMITIVE_AGENT).and_user("rotates about its centre"),
        script_reply("primitive", "The heart can now rotate", HEART_ROTATING_JS),
    );
    t.on(
        Match::system(INTERACTION_AGENT).and_user("each click"),
        script_reply("interaction", "Clicking the buttons rotates the heart", HEART_ROTATE_BUTTONS_JS),
    );
}

pub fn heart_transport() -> Arc<ScriptedTransport> {
    let t = Arc::new(ScriptedTransport::new());
    rotate_followup(&t);
    heart_helper(&t);
    heart_generators(&t);
    t
}

pub fn config() -> EngineConfig {
    EngineConfig {
        embedding_model: FALLBACK_EMBEDDING_MODEL.into(),
        ..EngineConfig::from_models(&ModelConfig::default())
    }
}

pub fn engine(gateway: Gateway) -> Arc<Engine> {
    Arc::new(Engine::seeded(gateway, config()).expect("seed collections embed"))
}

pub fn live_engine(t: &Arc<ScriptedTransport>) -> Arc<Engine> {
    engine(Gateway::live(t.clone()))
}

pub const THROWING_ANIMATION_JS: &str = include_str!("../fixtures/scripts/throwing_animation.js");

/// Crafted corpus: four three-segment prompts and two primitive-only ones.
pub const EVAL_CORPUS: [(&str, bool); 6] = [
    ("a heart that beats and two buttons slide it sideways", true),
    ("pulsing heart, buttons move it left and right", true),
    ("make a heart throb and let me push it around with buttons", true),
    ("heart beating with left and right buttons", true),
    ("just a heart", false),
    ("a raised heart in the middle", false),
];

/// Scripted replies for the crafted corpus. With `broken_animation` every
/// animation script throws on its first frame.
pub fn eval_transport(broken_animation: bool) -> Arc<ScriptedTransport> {
    let t = Arc::new(ScriptedTransport::new());
    for (prompt, full) in EVAL_CORPUS {
        let reply = if full {
            segments(false, Some(HEART_SEG_PRIMITIVE), Some(HEART_SEG_ANIMATION), Some(HEART_SEG_INTERACTION))
        } else {
            segments(false, Some(HEART_SEG_PRIMITIVE), None, None)
        };
        t.on(Match::system(SEG).and_user(prompt), reply);
    }
    t.on(Match::system(GEN), json!({ "parameters": HEART_PARAMS }).to_string());
    t.on(Match::system(VAL), json!({ "success": true, "message": "ok" }).to_string());
    t.on(
        Match::system(INS),
        bundle(Some(HEART_INS_PRIMITIVE), Some(HEART_INS_ANIMATION), Some(HEART_INS_INTERACTION)),
    );
    if broken_animation {
        t.on(Match::system(ANIMATION_AGENT), script_reply("animation", "The heart pulses", THROWING_ANIMATION_JS));
    }
    heart_generators(&t);
    t
}

pub fn eval_prompts() -> Vec<String> {
    EVAL_CORPUS.iter().map(|(p, _)| p.to_string()).collect()
}
