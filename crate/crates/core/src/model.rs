//! Domain values shared by the helper chains, the generators and the runtime.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("`{0}` is not a valid parameter identifier")]
    InvalidIdentifier(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("parameter `{name}` has non-finite value {value}")]
    NonFiniteParameter { name: String, value: f64 },
    #[error("slider initial value must be finite, got {0}")]
    NonFiniteInitial(f64),
    #[error("unknown script category `{0}`")]
    UnknownCategory(String),
    #[error("a new (non-follow-up) plan must have a primitive segment")]
    MissingPrimitive,
    #[error("verdict must carry updated parameters exactly when it reports failure")]
    InconsistentVerdict,
}

/// The three generative elements a prompt is decomposed into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptCategory {
    Primitive,
    Animation,
    Interaction,
}

impl ScriptCategory {
    pub const ALL: [ScriptCategory; 3] = [
        ScriptCategory::Primitive,
        ScriptCategory::Animation,
        ScriptCategory::Interaction,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ScriptCategory::Primitive => "primitive",
            ScriptCategory::Animation => "animation",
            ScriptCategory::Interaction => "interaction",
        }
    }
}

impl fmt::Display for ScriptCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ScriptCategory {
    type Err = ModelError;

    /// Case-insensitive match on the three labels.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        ScriptCategory::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(trimmed))
            .ok_or_else(|| ModelError::UnknownCategory(trimmed.to_string()))
    }
}

/// Returns true for `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Ordered list of unique numeric parameter names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ParameterSet(Vec<String>);

impl ParameterSet {
    /// Strict constructor: every name must be a valid identifier and unique.
    pub fn new<I, S>(names: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out: Vec<String> = Vec::new();
        for name in names {
            let name = name.into();
            if !is_identifier(&name) {
                return Err(ModelError::InvalidIdentifier(name));
            }
            if out.contains(&name) {
                return Err(ModelError::DuplicateParameter(name));
            }
            out.push(name);
        }
        Ok(Self(out))
    }

    /// Like [`ParameterSet::new`] but drops repeated names instead of failing.
    pub fn dedup<I, S>(names: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out: Vec<String> = Vec::new();
        for name in names {
            let name = name.into();
            if !is_identifier(&name) {
                return Err(ModelError::InvalidIdentifier(name));
            }
            if !out.contains(&name) {
                out.push(name);
            }
        }
        Ok(Self(out))
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.iter().any(|n| n == name)
    }

    /// `self` followed by every name of `other` not already present.
    pub fn union(&self, other: &ParameterSet) -> ParameterSet {
        let mut out = self.0.clone();
        for name in &other.0 {
            if !out.contains(name) {
                out.push(name.clone());
            }
        }
        ParameterSet(out)
    }

    pub fn has_height_like(&self) -> bool {
        self.0.iter().any(|n| n.to_ascii_lowercase().contains("height"))
    }
}

impl TryFrom<Vec<String>> for ParameterSet {
    type Error = ModelError;

    fn try_from(value: Vec<String>) -> Result<Self, Self::Error> {
        ParameterSet::new(value)
    }
}

impl From<ParameterSet> for Vec<String> {
    fn from(value: ParameterSet) -> Self {
        value.0
    }
}

/// Segmentation of a prompt into primitive / animation / interaction text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SegmentPlan {
    pub is_followup: bool,
    pub primitive: Option<String>,
    pub animation: Option<String>,
    pub interaction: Option<String>,
}

impl SegmentPlan {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.is_followup && self.primitive.is_none() {
            return Err(ModelError::MissingPrimitive);
        }
        Ok(())
    }

    pub fn segment(&self, category: ScriptCategory) -> Option<&str> {
        match category {
            ScriptCategory::Primitive => self.primitive.as_deref(),
            ScriptCategory::Animation => self.animation.as_deref(),
            ScriptCategory::Interaction => self.interaction.as_deref(),
        }
    }

    pub fn segment_count(&self) -> usize {
        ScriptCategory::ALL
            .iter()
            .filter(|c| self.segment(**c).is_some())
            .count()
    }
}

/// Outcome of the parameter-inference chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidationVerdict {
    pub success: bool,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub updated_params: Option<ParameterSet>,
}

impl ValidationVerdict {
    pub fn passed(message: impl Into<String>) -> Self {
        Self {
            success: true,
            message: message.into(),
            updated_params: None,
        }
    }

    pub fn failed(message: impl Into<String>, updated: ParameterSet) -> Self {
        Self {
            success: false,
            message: message.into(),
            updated_params: Some(updated),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.success == self.updated_params.is_some() {
            return Err(ModelError::InconsistentVerdict);
        }
        Ok(())
    }
}

/// Per-category code instructions produced by the helper.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionBundle {
    pub primitive: Option<String>,
    pub animation: Option<String>,
    pub interaction: Option<String>,
}

impl InstructionBundle {
    pub fn get(&self, category: ScriptCategory) -> Option<&str> {
        match category {
            ScriptCategory::Primitive => self.primitive.as_deref(),
            ScriptCategory::Animation => self.animation.as_deref(),
            ScriptCategory::Interaction => self.interaction.as_deref(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ScriptCategory, &str)> {
        ScriptCategory::ALL
            .into_iter()
            .filter_map(|c| self.get(c).map(|text| (c, text)))
    }

    /// Names written as `[name]` anywhere in the bundle, in order of appearance.
    pub fn bracketed_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (_, text) in self.iter() {
            for name in bracketed_names(text) {
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        names
    }
}

/// Extracts identifiers enclosed in square brackets, e.g. `[heartScale]`.
pub fn bracketed_names(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        match after.find(']') {
            Some(close) => {
                let inner = after[..close].trim();
                if is_identifier(inner) {
                    out.push(inner.to_string());
                }
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    out
}

/// One generated script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScriptArtifact {
    pub category: ScriptCategory,
    pub message: String,
    pub source: String,
    /// Initializer values, in declaration order.
    pub parameters: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    pub origin_prompt: String,
}

impl ScriptArtifact {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in &self.parameters {
            if !is_identifier(name) {
                return Err(ModelError::InvalidIdentifier(name.clone()));
            }
            if !value.is_finite() {
                return Err(ModelError::NonFiniteParameter {
                    name: name.clone(),
                    value: *value,
                });
            }
        }
        Ok(())
    }
}

/// Range presented for one parameter slider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliderSpec {
    pub name: String,
    pub initial: f64,
    pub min: f64,
    pub max: f64,
}

/// Half-width of the slider range used when the initial value is zero.
pub const ZERO_SLIDER_SPAN: f64 = 10.0;

/// Slider range: one third to three times the initial value, ordered so that
/// `min <= initial <= max` also holds for negative values.
pub fn slider_bounds(name: &str, initial: f64) -> Result<SliderSpec, ModelError> {
    if !initial.is_finite() {
        return Err(ModelError::NonFiniteInitial(initial));
    }
    let (min, max) = if initial > 0.0 {
        (initial / 3.0, initial * 3.0)
    } else if initial < 0.0 {
        (initial * 3.0, initial / 3.0)
    } else {
        (-ZERO_SLIDER_SPAN, ZERO_SLIDER_SPAN)
    };
    Ok(SliderSpec {
        name: name.to_string(),
        initial,
        min,
        max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn slider_examples() {
        let s = slider_bounds("a", 30.0).unwrap();
        assert_eq!((s.min, s.max), (10.0, 90.0));
        let s = slider_bounds("a", 0.0).unwrap();
        assert_eq!((s.min, s.max), (-10.0, 10.0));
        let s = slider_bounds("a", -6.0).unwrap();
        assert_eq!((s.min, s.max), (-18.0, -2.0));
        assert!(slider_bounds("a", f64::NAN).is_err());
        assert!(slider_bounds("a", f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn slider_brackets_initial(initial in -1e12..1e12f64) {
            let s = slider_bounds("p", initial).unwrap();
            prop_assert!(s.min <= s.initial && s.initial <= s.max);
        }
    }

    #[test]
    fn category_parsing() {
        assert_eq!("Primitive".parse::<ScriptCategory>(), Ok(ScriptCategory::Primitive));
        assert_eq!(" animation ".parse::<ScriptCategory>(), Ok(ScriptCategory::Animation));
        assert!("colorize".parse::<ScriptCategory>().is_err());
    }

    #[test]
    fn parameter_set_rules() {
        assert!(ParameterSet::new(["a", "b_2", "_c"]).is_ok());
        assert_eq!(
            ParameterSet::new(["a", "a"]),
            Err(ModelError::DuplicateParameter("a".into()))
        );
        assert!(matches!(
            ParameterSet::new(["2x"]),
            Err(ModelError::InvalidIdentifier(_))
        ));
        assert!(ParameterSet::new([""]).is_err());
        assert_eq!(ParameterSet::dedup(["a", "b", "a"]).unwrap().names(), ["a", "b"]);
        let a = ParameterSet::new(["x", "y"]).unwrap();
        let b = ParameterSet::new(["y", "z"]).unwrap();
        assert_eq!(a.union(&b).names(), ["x", "y", "z"]);
    }

    #[test]
    fn bracket_extraction() {
        let text = "set [heartPositionX] and [heartPositionY], scale [ heartScale ] [not valid] [3x]";
        assert_eq!(
            bracketed_names(text),
            vec!["heartPositionX", "heartPositionY", "heartScale"]
        );
    }

    #[test]
    fn plan_and_verdict_invariants() {
        let plan = SegmentPlan {
            is_followup: false,
            primitive: None,
            animation: Some("spin".into()),
            interaction: None,
        };
        assert_eq!(plan.validate(), Err(ModelError::MissingPrimitive));
        assert!(SegmentPlan { is_followup: true, ..plan }.validate().is_ok());

        let bad = ValidationVerdict {
            success: true,
            message: String::new(),
            updated_params: Some(ParameterSet::default()),
        };
        assert!(bad.validate().is_err());
        assert!(ValidationVerdict::passed("ok").validate().is_ok());
    }
}
