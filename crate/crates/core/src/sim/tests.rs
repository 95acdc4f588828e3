use super::*;
use crate::grid::{pin_index, HeightField, PIN_COUNT};
use crate::model::ScriptArtifact;
use std::time::Instant;

const SQUARE: &str = include_str!("../../resources/scripts/square_primitive.js");
const BOUNCE: &str = include_str!("../../resources/scripts/bounce_animation.js");
const BUTTONS: &str = include_str!("../../resources/scripts/two_button_interaction.js");

fn artifact(category: ScriptCategory, source: &str) -> ScriptArtifact {
    ScriptArtifact {
        category,
        message: String::new(),
        source: source.to_string(),
        parameters: IndexMap::new(),
        explanation: None,
        origin_prompt: String::new(),
    }
}

fn square_oracle(scale: f64, pos_x: f64, pos_y: f64, rotation: f64, height: f64) -> Vec<f64> {
    let half = 24.0 * scale / 2.0;
    (0..PIN_COUNT)
        .map(|i| {
            let x = (i % 24) as f64 - pos_x;
            let y = (i / 24) as f64 - pos_y;
            let rx = x * (-rotation).cos() - y * (-rotation).sin();
            let ry = x * (-rotation).sin() + y * (-rotation).cos();
            if rx >= -half && rx <= half && ry >= -half && ry <= half {
                height
            } else {
                0.0
            }
        })
        .collect()
}

#[test]
fn square_example_compiles() {
    compile_check(SQUARE, ScriptCategory::Primitive).unwrap();
    compile_check(BOUNCE, ScriptCategory::Animation).unwrap();
    compile_check(BUTTONS, ScriptCategory::Interaction).unwrap();
}

#[test]
fn syntax_error_is_parse_phase() {
    let err = compile_check("function initializeParams( {", ScriptCategory::Primitive).unwrap_err();
    assert_eq!(err.phase, CompilePhase::Parse);
    assert_eq!(err.kind, FaultKind::Syntax);
}

#[test]
fn missing_main_loop_is_entrypoint_phase() {
    let src = "function initializeParams() { return { h: 1 }; }";
    let err = compile_check(src, ScriptCategory::Primitive).unwrap_err();
    assert_eq!(err.phase, CompilePhase::Entrypoint);
    assert!(err.message.contains("dynamicScript"));
}

#[test]
fn animation_needs_third_argument() {
    let src = "function initializeParams() { return {}; }\nfunction dynamicScript(dt, params) {}";
    let err = compile_check(src, ScriptCategory::Animation).unwrap_err();
    assert_eq!(err.phase, CompilePhase::Entrypoint);
}

#[test]
fn throwing_top_level_is_instantiate_phase() {
    let err = compile_check("throw new Error('boom');", ScriptCategory::Primitive).unwrap_err();
    assert_eq!(err.phase, CompilePhase::Instantiate);
    assert!(err.message.contains("boom"));
}

#[test]
fn runtime_error_in_frame_is_trial_phase() {
    let src = "function initializeParams() { return { h: 1 }; }\nfunction dynamicScript(dt, p) { undefinedThing.x = 1; }";
    let err = compile_check(src, ScriptCategory::Primitive).unwrap_err();
    assert_eq!(err.phase, CompilePhase::TrialFrame);
    assert!(err.message.contains("undefinedThing"), "{}", err.message);
}

#[test]
fn primitive_params_must_be_numbers() {
    let src = "function initializeParams() { return { h: 'tall' }; }\nfunction dynamicScript(dt, p) {}";
    let err = compile_check(src, ScriptCategory::Primitive).unwrap_err();
    assert_eq!(err.phase, CompilePhase::Entrypoint);
}

#[test]
fn extract_square_parameters() {
    let params = extract_parameters(SQUARE, ScriptCategory::Primitive).unwrap();
    let names: Vec<_> = params.keys().cloned().collect();
    assert_eq!(
        names,
        ["squareScale", "squarePosX", "squarePosY", "squareRotation", "squareHeight"]
    );
    assert_eq!(params["squarePosX"], 12.0);
    let inter = extract_parameters(BUTTONS, ScriptCategory::Interaction).unwrap();
    assert_eq!(inter.keys().collect::<Vec<_>>(), ["moveSpeed"]);
}

#[test]
fn square_scene_matches_oracle() {
    let mut scene = Scene::load(&[artifact(ScriptCategory::Primitive, SQUARE)]).unwrap();
    assert_eq!(scene.parent_params().len(), 5);
    assert_eq!(scene.parent_params()["squarePosX"], 12.0);
    let frame = scene.step(1.0 / 30.0).unwrap();
    assert!(frame.faults.is_empty());
    assert_eq!(frame.field.as_slice(), &square_oracle(0.5, 12.0, 12.0, 0.0, 25.0)[..]);
    assert_eq!(frame.field.iter().filter(|h| *h > 0.0).count(), 169);
}

#[test]
fn set_parameter_reaches_next_frame() {
    let mut scene = Scene::load(&[artifact(ScriptCategory::Primitive, SQUARE)]).unwrap();
    scene.set_parameter("squareHeight", 60.0).unwrap();
    let f = scene.step(0.1).unwrap();
    assert_eq!(f.field.as_slice(), &square_oracle(0.5, 12.0, 12.0, 0.0, 60.0)[..]);
    scene.set_parameter("squarePosX", 0.0).unwrap();
    let f = scene.step(0.1).unwrap();
    assert_eq!(f.field.as_slice(), &square_oracle(0.5, 0.0, 12.0, 0.0, 60.0)[..]);
    assert_eq!(f.field.at(0, 12).unwrap(), 60.0);
    assert_eq!(f.field.at(7, 12).unwrap(), 0.0);
    assert!(matches!(
        scene.set_parameter("nope", 1.0),
        Err(SceneError::UnknownParameter(_))
    ));
    // Slider bounds are advisory only.
    scene.set_parameter("squareHeight", 500.0).unwrap();
    assert_eq!(scene.step(0.1).unwrap().field.max(), 100.0);
}

#[test]
fn rotated_square_matches_oracle() {
    let mut scene = Scene::load(&[artifact(ScriptCategory::Primitive, SQUARE)]).unwrap();
    scene.set_parameter("squareRotation", 0.6).unwrap();
    let f = scene.step(0.1).unwrap();
    assert_eq!(f.field.as_slice(), &square_oracle(0.5, 12.0, 12.0, 0.6, 25.0)[..]);
}

#[test]
fn scene_shape_errors() {
    assert_eq!(Scene::load(&[]).unwrap_err(), SceneError::MissingPrimitive);
    let two = [
        artifact(ScriptCategory::Primitive, SQUARE),
        artifact(ScriptCategory::Primitive, SQUARE),
    ];
    assert_eq!(
        Scene::load(&two).unwrap_err(),
        SceneError::DuplicateCategory(ScriptCategory::Primitive)
    );
    let only_anim = [artifact(ScriptCategory::Animation, BOUNCE)];
    assert_eq!(Scene::load(&only_anim).unwrap_err(), SceneError::MissingPrimitive);
}

#[test]
fn buttons_are_flagged_and_rendered() {
    let mut scene = Scene::load(&[
        artifact(ScriptCategory::Primitive, SQUARE),
        artifact(ScriptCategory::Interaction, BUTTONS),
    ])
    .unwrap();
    let right = pin_index(16, 20).unwrap();
    let left = pin_index(8, 20).unwrap();
    let pins = scene.pins();
    assert_eq!(pins.iter().filter(|p| p.is_button).count(), 2);
    assert_eq!(pins[right].button_group_id, Some(1));
    assert_eq!(pins[left].button_group_id, Some(2));

    let f = scene.step(0.1).unwrap();
    assert_eq!(f.field.get(right), Some(50.0));
    scene.press_button(1, true).unwrap();
    assert!(scene.pin(right).unwrap().is_pressing);
    let f = scene.step(0.1).unwrap();
    assert_eq!(f.field.get(right), Some(25.0));
    assert!((scene.parent_params()["squarePosX"] - 12.1).abs() < 1e-12);
    scene.press_button(1, false).unwrap();
    assert!(!scene.pin(right).unwrap().is_pressing);
    assert_eq!(scene.press_button(9, true), Err(SceneError::UnknownButton(9)));
}

#[test]
fn two_by_two_button_footprint() {
    let mut scene = Scene::load(&[
        artifact(ScriptCategory::Primitive, SQUARE),
        artifact(ScriptCategory::Interaction, BUTTONS),
    ])
    .unwrap();
    scene
        .configure_button(ButtonSpec {
            id: 1,
            size: 2,
            position: (0, 0),
            init_height: 40.0,
        })
        .unwrap();
    let pins = scene.pins();
    assert_eq!(pins.iter().filter(|p| p.is_button).count(), 5);
    for (x, y) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
        assert_eq!(pins[pin_index(x, y).unwrap()].button_group_id, Some(1));
    }
    assert!(scene
        .configure_button(ButtonSpec {
            id: 2,
            size: 2,
            position: (23, 0),
            init_height: 40.0,
        })
        .is_err());
}

#[test]
fn disabled_animation_freezes_params() {
    let mut scene = Scene::load(&[
        artifact(ScriptCategory::Primitive, SQUARE),
        artifact(ScriptCategory::Animation, BOUNCE),
    ])
    .unwrap();
    scene.step(0.5).unwrap();
    assert_eq!(scene.parent_params()["squarePosX"], 13.0);
    scene.set_enabled(ScriptCategory::Animation, false).unwrap();
    let before = scene.parent_params().clone();
    let a = scene.step(0.5).unwrap();
    let b = scene.step(0.5).unwrap();
    assert_eq!(&before, scene.parent_params());
    assert_eq!(a.field, b.field);
}

#[test]
fn step_faults_name_the_category_and_do_not_poison() {
    let bad_anim = "function initializeParams() { return {}; }\n\
        var n = 0;\n\
        function dynamicScript(dt, p, parent) { n++; if (n == 1) throw new Error('first'); parent.squarePosX = 3; }";
    let mut scene = Scene::load(&[
        artifact(ScriptCategory::Primitive, SQUARE),
        artifact(ScriptCategory::Animation, bad_anim),
    ])
    .unwrap();
    let f = scene.step(0.1).unwrap();
    assert_eq!(f.faults.len(), 1);
    assert_eq!(f.faults[0].category, ScriptCategory::Animation);
    assert_eq!(f.field.iter().filter(|h| *h > 0.0).count(), 169);
    let f = scene.step(0.1).unwrap();
    assert!(f.faults.is_empty());
    assert_eq!(scene.parent_params()["squarePosX"], 3.0);
}

#[test]
fn nan_parent_writes_are_rejected() {
    let anim = "function initializeParams() { return {}; }\n\
        function dynamicScript(dt, p, parent) { parent.squarePosX = 'left'; }";
    let mut scene = Scene::load(&[
        artifact(ScriptCategory::Primitive, SQUARE),
        artifact(ScriptCategory::Animation, anim),
    ])
    .unwrap();
    let f = scene.step(0.1).unwrap();
    assert_eq!(f.faults[0].fault.kind, FaultKind::Contract);
    assert_eq!(scene.parent_params()["squarePosX"], 12.0);
}

#[test]
fn hostile_heights_are_clamped() {
    let src = "function initializeParams() { return { h: 1 }; }\n\
        function dynamicScript(dt, p) { ShapeDisplay.Pins.forEach((pin, i) => pin.setPos([1e9, -5, NaN, 'x', Infinity][i % 5])); }";
    let mut scene = Scene::load(&[artifact(ScriptCategory::Primitive, src)]).unwrap();
    let f = scene.step(0.1).unwrap();
    assert!(f.faults.is_empty());
    assert_eq!(f.field.get(0), Some(100.0));
    assert_eq!(f.field.get(1), Some(0.0));
    assert_eq!(f.field.get(2), Some(0.0));
    assert_eq!(f.field.get(3), Some(0.0));
    assert_eq!(f.field.get(4), Some(100.0));
}

#[test]
fn invalid_delta_time() {
    let mut scene = Scene::load(&[artifact(ScriptCategory::Primitive, SQUARE)]).unwrap();
    assert!(matches!(scene.step(0.0), Err(SceneError::InvalidDeltaTime(_))));
    assert!(matches!(scene.step(f64::NAN), Err(SceneError::InvalidDeltaTime(_))));
}

fn hostile(body: &str) -> String {
    format!("function initializeParams() {{ return {{ h: 1 }}; }}\nfunction dynamicScript(dt, p) {{ {body} }}")
}

#[test]
fn infinite_loop_hits_budget_quickly() {
    let start = Instant::now();
    let err = compile_check(&hostile("while (true) {}"), ScriptCategory::Primitive).unwrap_err();
    assert_eq!(err.kind, FaultKind::Budget);
    assert!(start.elapsed().as_millis() < 100, "{:?}", start.elapsed());
}

#[test]
fn allocation_hits_memory_limit() {
    let err = compile_check(
        &hostile("let a = []; while (true) { a.push(new Array(100000).fill(1)); }"),
        ScriptCategory::Primitive,
    )
    .unwrap_err();
    assert!(matches!(err.kind, FaultKind::Memory | FaultKind::Budget), "{err:?}");
}

#[test]
fn host_globals_are_absent() {
    let probe = "const names = ['require', 'process', 'fetch', 'Date', 'setTimeout', 'Deno', 'performance', 'XMLHttpRequest', 'Promise', 'Proxy', 'WebAssembly'];\n\
        for (const n of names) { if (typeof globalThis[n] !== 'undefined') { throw new Error('visible: ' + n); } }";
    compile_check(&hostile(probe), ScriptCategory::Primitive).unwrap();
    let err = compile_check(&hostile("require('fs');"), ScriptCategory::Primitive).unwrap_err();
    assert_eq!(err.kind, FaultKind::Exception);
    assert!(err.message.contains("require"));
}

#[test]
fn host_surface_is_read_only() {
    let src = hostile("ShapeDisplay.grid_x = 3; ShapeDisplay.Pins[0] = null; if (ShapeDisplay.grid_x !== 24 || ShapeDisplay.Pins[0] === null) throw new Error('mutated');");
    compile_check(&src, ScriptCategory::Primitive).unwrap();
}

#[test]
fn math_random_is_deterministic() {
    let src = "function initializeParams() { return { h: 1 }; }\n\
        function dynamicScript(dt, p) { ShapeDisplay.Pins.forEach(pin => pin.setPos(Math.random() * 100)); }";
    let run = || {
        let mut scene = Scene::load(&[artifact(ScriptCategory::Primitive, src)]).unwrap();
        (0..3).map(|_| scene.step(0.1).unwrap().field).collect::<Vec<HeightField>>()
    };
    assert_eq!(run(), run());
}
