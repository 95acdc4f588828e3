//! Authoring timeline: append-only cards, branching rollback and the two
//! memories (per-generator last script, helper archive) derived from it.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{InstructionBundle, ScriptArtifact, ScriptCategory, SegmentPlan};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("history card {0} not found")]
    CardNotFound(CardId),
    #[error("artifact index {index} not found on card {card}")]
    ArtifactNotFound { card: CardId, index: usize },
    #[error("session has no cards yet")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CardId(pub u64);

impl fmt::Display for CardId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HistoryCard {
    pub id: CardId,
    pub parent_id: Option<CardId>,
    pub user_input: String,
    pub plan: SegmentPlan,
    pub instructions: InstructionBundle,
    pub artifacts: Vec<ScriptArtifact>,
    pub enabled: BTreeMap<usize, bool>,
    pub created_at_ms: u64,
}

impl HistoryCard {
    pub fn artifact(&self, category: ScriptCategory) -> Option<&ScriptArtifact> {
        self.artifacts.iter().find(|a| a.category == category)
    }

    pub fn is_enabled(&self, index: usize) -> bool {
        self.enabled.get(&index).copied().unwrap_or(false)
    }
}

/// Single-slot memory per generator: the last script it produced.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorMemory {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub animation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction: Option<String>,
}

impl GeneratorMemory {
    pub fn get(&self, category: ScriptCategory) -> Option<&str> {
        self.slot(category).as_deref()
    }

    pub fn set(&mut self, category: ScriptCategory, source: impl Into<String>) {
        *self.slot_mut(category) = Some(source.into());
    }

    fn slot(&self, category: ScriptCategory) -> &Option<String> {
        match category {
            ScriptCategory::Primitive => &self.primitive,
            ScriptCategory::Animation => &self.animation,
            ScriptCategory::Interaction => &self.interaction,
        }
    }

    fn slot_mut(&mut self, category: ScriptCategory) -> &mut Option<String> {
        match category {
            ScriptCategory::Primitive => &mut self.primitive,
            ScriptCategory::Animation => &mut self.animation,
            ScriptCategory::Interaction => &mut self.interaction,
        }
    }
}

/// One archived helper turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HelperTurn {
    pub user_input: String,
    pub instructions: InstructionBundle,
}

/// Contents of a new card; id and parent are assigned by [`Session::append`].
#[derive(Debug, Clone)]
pub struct NewCard {
    pub user_input: String,
    pub plan: SegmentPlan,
    pub instructions: InstructionBundle,
    pub artifacts: Vec<ScriptArtifact>,
    pub created_at_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Session {
    cards: Vec<HistoryCard>,
    active_card_id: Option<CardId>,
    generator_memory: GeneratorMemory,
    helper_memory: Vec<HelperTurn>,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cards(&self) -> &[HistoryCard] {
        &self.cards
    }

    pub fn active_card_id(&self) -> Option<CardId> {
        self.active_card_id
    }

    pub fn active_card(&self) -> Option<&HistoryCard> {
        self.active_card_id.and_then(|id| self.card(id))
    }

    pub fn card(&self, id: CardId) -> Option<&HistoryCard> {
        // Ids are assigned densely from 1.
        let idx = usize::try_from(id.0).ok()?.checked_sub(1)?;
        self.cards.get(idx).filter(|c| c.id == id)
    }

    pub fn generator_memory(&self) -> &GeneratorMemory {
        &self.generator_memory
    }

    pub fn generator_memory_mut(&mut self) -> &mut GeneratorMemory {
        &mut self.generator_memory
    }

    pub fn helper_memory(&self) -> &[HelperTurn] {
        &self.helper_memory
    }

    /// Appends a card as a child of the active card and makes it active.
    pub fn append(&mut self, new: NewCard) -> &HistoryCard {
        let id = CardId(self.cards.len() as u64 + 1);
        let enabled = (0..new.artifacts.len()).map(|i| (i, true)).collect();
        self.cards.push(HistoryCard {
            id,
            parent_id: self.active_card_id,
            user_input: new.user_input,
            plan: new.plan,
            instructions: new.instructions,
            artifacts: new.artifacts,
            enabled,
            created_at_ms: new.created_at_ms,
        });
        self.active_card_id = Some(id);
        self.rebuild_memory();
        self.cards.last().expect("just pushed")
    }

    /// Makes `id` active and rebuilds both memories from its ancestry.
    /// The card list is never truncated.
    pub fn rollback(&mut self, id: CardId) -> Result<(), HistoryError> {
        if self.card(id).is_none() {
            return Err(HistoryError::CardNotFound(id));
        }
        self.active_card_id = Some(id);
        self.rebuild_memory();
        Ok(())
    }

    /// Flips the enabled flag of one artifact on the active card, returning the new value.
    pub fn toggle_artifact(&mut self, index: usize) -> Result<bool, HistoryError> {
        let id = self.active_card_id.ok_or(HistoryError::Empty)?;
        let card = &mut self.cards[id.0 as usize - 1];
        let flag = card
            .enabled
            .get_mut(&index)
            .ok_or(HistoryError::ArtifactNotFound { card: id, index })?;
        *flag = !*flag;
        Ok(*flag)
    }

    /// Cards from the root down to `id`, following parent links.
    pub fn lineage(&self, id: CardId) -> Result<Vec<&HistoryCard>, HistoryError> {
        let mut chain = Vec::new();
        let mut cursor = Some(id);
        while let Some(cid) = cursor {
            let card = self.card(cid).ok_or(HistoryError::CardNotFound(cid))?;
            chain.push(card);
            cursor = card.parent_id;
        }
        chain.reverse();
        Ok(chain)
    }

    fn rebuild_memory(&mut self) {
        let mut generator = GeneratorMemory::default();
        let mut helper = Vec::new();
        if let Some(active) = self.active_card_id {
            let chain = self.lineage(active).expect("active card exists");
            for card in chain {
                helper.push(HelperTurn {
                    user_input: card.user_input.clone(),
                    instructions: card.instructions.clone(),
                });
                for artifact in &card.artifacts {
                    generator.set(artifact.category, artifact.source.clone());
                }
            }
        }
        self.generator_memory = generator;
        self.helper_memory = helper;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use indexmap::IndexMap;

    fn card(input: &str, source: &str) -> NewCard {
        NewCard {
            user_input: input.into(),
            plan: SegmentPlan {
                is_followup: false,
                primitive: Some(input.into()),
                animation: None,
                interaction: None,
            },
            instructions: InstructionBundle {
                primitive: Some(format!("{input} [h]")),
                ..Default::default()
            },
            artifacts: vec![ScriptArtifact {
                category: ScriptCategory::Primitive,
                message: String::new(),
                source: source.into(),
                parameters: IndexMap::new(),
                explanation: None,
                origin_prompt: input.into(),
            }],
            created_at_ms: 0,
        }
    }

    #[test]
    fn rollback_to_only_card_is_identity() {
        let mut s = Session::new();
        s.append(card("a", "src-a"));
        let before = s.clone();
        s.rollback(CardId(1)).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn rollback_replays_parent_chain() {
        let mut s = Session::new();
        s.append(card("a", "src-a"));
        s.append(card("b", "src-b"));
        s.append(card("c", "src-c"));
        assert_eq!(s.helper_memory().len(), 3);
        s.rollback(CardId(1)).unwrap();
        assert_eq!(s.helper_memory().len(), 1);
        assert_eq!(s.generator_memory().get(ScriptCategory::Primitive), Some("src-a"));
        assert_eq!(s.cards().len(), 3);
    }

    #[test]
    fn prompt_after_rollback_branches() {
        let mut s = Session::new();
        s.append(card("a", "src-a"));
        s.append(card("b", "src-b"));
        s.append(card("c", "src-c"));
        s.rollback(CardId(1)).unwrap();
        let d = s.append(card("d", "src-d")).clone();
        assert_eq!(d.id, CardId(4));
        assert_eq!(d.parent_id, Some(CardId(1)));
        assert_eq!(s.helper_memory().len(), 2);
        let lineage: Vec<_> = s.lineage(d.id).unwrap().iter().map(|c| c.id).collect();
        assert_eq!(lineage, vec![CardId(1), CardId(4)]);
    }

    #[test]
    fn rollback_is_idempotent_and_errors_on_unknown() {
        let mut s = Session::new();
        s.append(card("a", "src-a"));
        s.append(card("b", "src-b"));
        s.rollback(CardId(1)).unwrap();
        let once = s.clone();
        s.rollback(CardId(1)).unwrap();
        assert_eq!(s, once);
        assert_eq!(s.rollback(CardId(9)), Err(HistoryError::CardNotFound(CardId(9))));
    }

    #[test]
    fn toggle_requires_cards() {
        let mut s = Session::new();
        assert_eq!(s.toggle_artifact(0), Err(HistoryError::Empty));
        s.append(card("a", "src-a"));
        assert_eq!(s.toggle_artifact(0), Ok(false));
        assert_eq!(s.toggle_artifact(0), Ok(true));
        assert!(matches!(
            s.toggle_artifact(3),
            Err(HistoryError::ArtifactNotFound { index: 3, .. })
        ));
    }
}
