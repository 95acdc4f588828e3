//! Lenient extraction of the JSON objects that chains and generators reply with.
//!
//! Model output is often wrapped in code fences, preceded by prose, or uses
//! Python-style `"""` blocks for multi-line strings. All of those are accepted;
//! anything else is a [`StructuredError`] that keeps the raw text.

use serde_json::{Map, Value};

use crate::model::{InstructionBundle, ParameterSet, ScriptCategory, SegmentPlan, ValidationVerdict};

pub const KEY_IS_FOLLOWUP: &str = "is_followup";
pub const KEY_PRIMITIVE: &str = "Authoring Primitive Shape/Motion";
pub const KEY_ANIMATION: &str = "Authoring Animation";
pub const KEY_INTERACTION: &str = "Authoring Interaction";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaProblem {
    #[error("no JSON object found")]
    NoJson,
    #[error("invalid JSON: {0}")]
    InvalidJson(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{field}` must be {expected}")]
    WrongType { field: String, expected: &'static str },
    #[error("unknown script type `{0}`")]
    UnknownCategory(String),
    #[error("{0}")]
    Invalid(String),
}

/// A reply that could not be turned into the expected value.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{problem}")]
pub struct StructuredError {
    pub problem: SchemaProblem,
    pub raw: String,
}

impl StructuredError {
    fn new(problem: SchemaProblem, raw: &str) -> Self {
        Self {
            problem,
            raw: raw.to_string(),
        }
    }
}

/// Finds and parses the first JSON object in `raw`.
pub fn extract_json(raw: &str) -> Result<Map<String, Value>, StructuredError> {
    let mut candidates = Vec::new();
    if let Some(inner) = fenced_block(raw) {
        candidates.push(inner);
    }
    candidates.push(raw);

    let mut last_err = SchemaProblem::NoJson;
    for text in candidates {
        let text = normalize_triple_quotes(text);
        for start in text.match_indices('{').map(|(i, _)| i) {
            let Some(end) = matching_brace(&text, start) else {
                continue;
            };
            match serde_json::from_str::<Value>(&text[start..=end]) {
                Ok(Value::Object(map)) => return Ok(map),
                Ok(_) => {}
                Err(e) => {
                    if matches!(last_err, SchemaProblem::NoJson) {
                        last_err = SchemaProblem::InvalidJson(e.to_string());
                    }
                }
            }
        }
    }
    Err(StructuredError::new(last_err, raw))
}

/// Contents of the first ```` ``` ```` fenced block, minus the language tag.
fn fenced_block(raw: &str) -> Option<&str> {
    let open = raw.find("```")?;
    let after = &raw[open + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let body = &after[body_start..];
    let close = body.find("```").unwrap_or(body.len());
    Some(&body[..close])
}

/// Index of the `}` closing the object opened at `start`, skipping string contents.
fn matching_brace(text: &str, start: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Rewrites `"""…"""` blocks (also written `\"\"\"`) as dedented JSON strings.
fn normalize_triple_quotes(text: &str) -> String {
    let text = text.replace(r#"\"\"\""#, r#"""""#);
    if !text.contains(r#"""""#) {
        return text;
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text.as_str();
    let mut in_string = false;
    let mut escaped = false;
    while let Some(c) = rest.chars().next() {
        if !in_string && rest.starts_with(r#"""""#) {
            let body = &rest[3..];
            let Some(end) = body.find(r#"""""#) else {
                out.push_str(rest);
                break;
            };
            let value = dedent(&body[..end]);
            out.push_str(&serde_json::to_string(&value).expect("strings serialize"));
            rest = &body[end + 3..];
            continue;
        }
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
        } else if c == '"' {
            in_string = true;
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

fn dedent(block: &str) -> String {
    let block = block.strip_prefix('\n').unwrap_or(block);
    let block = block.strip_prefix("\r\n").unwrap_or(block);
    let indent = block
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    let lines: Vec<&str> = block
        .lines()
        .map(|l| if l.len() >= indent { &l[indent..] } else { l.trim_start() })
        .collect();
    lines.join("\n").trim_end().to_string()
}

/// A generator reply mapped onto the artifact fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptOutput {
    pub category: ScriptCategory,
    pub message: String,
    pub source: String,
    pub explanation: Option<String>,
    /// Parameter names the model claims to use. Informational only.
    pub parameters: Option<Vec<String>>,
    pub user_input: Option<String>,
}

fn text_field<'a>(map: &'a Map<String, Value>, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| map.get(*k).and_then(Value::as_str))
}

fn require_text(map: &Map<String, Value>, keys: &[&str], raw: &str) -> Result<String, StructuredError> {
    match keys.iter().find_map(|k| map.get(*k)) {
        None => Err(StructuredError::new(SchemaProblem::MissingField(keys[0].to_string()), raw)),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(StructuredError::new(
            SchemaProblem::WrongType {
                field: keys[0].to_string(),
                expected: "a string",
            },
            raw,
        )),
    }
}

/// Parses `{type, message, content}`; `category`, `code`, `explanation`,
/// `parameters` and `user input` are accepted as well.
pub fn parse_script_output(raw: &str) -> Result<ScriptOutput, StructuredError> {
    let map = extract_json(raw)?;
    let label = require_text(&map, &["type", "category"], raw)?;
    let category = label
        .trim()
        .parse::<ScriptCategory>()
        .map_err(|_| StructuredError::new(SchemaProblem::UnknownCategory(label.clone()), raw))?;
    let source = require_text(&map, &["content", "code"], raw)?;
    if source.trim().is_empty() {
        return Err(StructuredError::new(
            SchemaProblem::Invalid("`content` is empty".into()),
            raw,
        ));
    }
    let explanation = text_field(&map, &["explanation"]).map(str::to_string);
    let message = match text_field(&map, &["message"]) {
        Some(m) => m.to_string(),
        None => explanation
            .clone()
            .ok_or_else(|| StructuredError::new(SchemaProblem::MissingField("message".into()), raw))?,
    };
    let parameters = map.get("parameters").and_then(Value::as_array).map(|items| {
        items
            .iter()
            .filter_map(|v| v.as_str().map(str::to_string))
            .collect()
    });
    let user_input = text_field(&map, &["user input", "userInput", "user_input"]).map(str::to_string);
    Ok(ScriptOutput {
        category,
        message,
        source,
        explanation,
        parameters,
        user_input,
    })
}

/// `None`, `null`, empty and "None"-like strings all mean an absent segment.
fn segment_text(map: &Map<String, Value>, key: &str, raw: &str) -> Result<Option<String>, StructuredError> {
    match map.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(non_none(s)),
        Some(_) => Err(StructuredError::new(
            SchemaProblem::WrongType {
                field: key.to_string(),
                expected: "a string or null",
            },
            raw,
        )),
    }
}

pub fn non_none(text: &str) -> Option<String> {
    let t = text.trim();
    let bare = t.trim_end_matches('.').trim_matches('"');
    if bare.is_empty() || bare.eq_ignore_ascii_case("none") || bare.eq_ignore_ascii_case("null") || bare.eq_ignore_ascii_case("n/a") {
        None
    } else {
        Some(t.to_string())
    }
}

fn boolean(map: &Map<String, Value>, key: &str, raw: &str) -> Result<bool, StructuredError> {
    match map.get(key) {
        None => Err(StructuredError::new(SchemaProblem::MissingField(key.to_string()), raw)),
        Some(Value::Bool(b)) => Ok(*b),
        Some(Value::String(s)) if s.trim().eq_ignore_ascii_case("true") => Ok(true),
        Some(Value::String(s)) if s.trim().eq_ignore_ascii_case("false") => Ok(false),
        Some(_) => Err(StructuredError::new(
            SchemaProblem::WrongType {
                field: key.to_string(),
                expected: "a boolean",
            },
            raw,
        )),
    }
}

pub fn parse_segment_plan(raw: &str) -> Result<SegmentPlan, StructuredError> {
    let map = extract_json(raw)?;
    let is_followup = boolean(&map, KEY_IS_FOLLOWUP, raw)?;
    if !map.contains_key(KEY_PRIMITIVE) && !is_followup {
        return Err(StructuredError::new(SchemaProblem::MissingField(KEY_PRIMITIVE.into()), raw));
    }
    let plan = SegmentPlan {
        is_followup,
        primitive: segment_text(&map, KEY_PRIMITIVE, raw)?,
        animation: segment_text(&map, KEY_ANIMATION, raw)?,
        interaction: segment_text(&map, KEY_INTERACTION, raw)?,
    };
    plan.validate()
        .map_err(|e| StructuredError::new(SchemaProblem::Invalid(e.to_string()), raw))?;
    Ok(plan)
}

fn names(value: &Value, field: &str, raw: &str) -> Result<ParameterSet, StructuredError> {
    let items = value.as_array().ok_or_else(|| {
        StructuredError::new(
            SchemaProblem::WrongType {
                field: field.to_string(),
                expected: "a list of names",
            },
            raw,
        )
    })?;
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let name = match item {
            Value::String(s) => s.trim().to_string(),
            Value::Object(o) => match o.get("name").and_then(Value::as_str) {
                Some(s) => s.trim().to_string(),
                None => {
                    return Err(StructuredError::new(
                        SchemaProblem::WrongType {
                            field: field.to_string(),
                            expected: "a list of names",
                        },
                        raw,
                    ))
                }
            },
            _ => {
                return Err(StructuredError::new(
                    SchemaProblem::WrongType {
                        field: field.to_string(),
                        expected: "a list of names",
                    },
                    raw,
                ))
            }
        };
        out.push(name);
    }
    ParameterSet::dedup(out).map_err(|e| StructuredError::new(SchemaProblem::Invalid(e.to_string()), raw))
}

pub fn parse_parameters(raw: &str) -> Result<ParameterSet, StructuredError> {
    let map = extract_json(raw)?;
    let value = map
        .get("parameters")
        .ok_or_else(|| StructuredError::new(SchemaProblem::MissingField("parameters".into()), raw))?;
    names(value, "parameters", raw)
}

/// `updatedParams` is kept only on failure, where it is required.
pub fn parse_verdict(raw: &str) -> Result<ValidationVerdict, StructuredError> {
    let map = extract_json(raw)?;
    let success = boolean(&map, "success", raw)?;
    let message = text_field(&map, &["message"]).unwrap_or_default().to_string();
    if success {
        return Ok(ValidationVerdict::passed(message));
    }
    let updated = map
        .get("updatedParams")
        .or_else(|| map.get("updated_params"))
        .ok_or_else(|| StructuredError::new(SchemaProblem::MissingField("updatedParams".into()), raw))?;
    Ok(ValidationVerdict::failed(message, names(updated, "updatedParams", raw)?))
}

pub fn parse_instructions(raw: &str) -> Result<InstructionBundle, StructuredError> {
    let map = extract_json(raw)?;
    if !map.contains_key(KEY_PRIMITIVE) {
        return Err(StructuredError::new(SchemaProblem::MissingField(KEY_PRIMITIVE.into()), raw));
    }
    Ok(InstructionBundle {
        primitive: segment_text(&map, KEY_PRIMITIVE, raw)?,
        animation: segment_text(&map, KEY_ANIMATION, raw)?,
        interaction: segment_text(&map, KEY_INTERACTION, raw)?,
    })
}
