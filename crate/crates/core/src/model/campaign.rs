use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{AnnotatorId, CampaignId, GroupId, IdentityRegistry, ItemId, SubjectMatterLabel};
use crate::Timestamp;

/// One textual instance under annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: ItemId,
    pub text: String,
    /// Provenance tag: platform, sampling strategy, or both.
    #[serde(default)]
    pub source: String,
    pub collected_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ItemError {
    #[error("item `{0}` has empty text")]
    EmptyText(ItemId),
    #[error("item id `{0}` appears more than once")]
    DuplicateId(ItemId),
}

impl Item {
    pub fn validate(&self) -> Result<(), ItemError> {
        if self.text.trim().is_empty() {
            return Err(ItemError::EmptyText(self.item_id.clone()));
        }
        Ok(())
    }
}

/// Validates every item and checks ids are unique.
pub fn validate_items(items: &[Item]) -> Result<(), ItemError> {
    let mut seen = BTreeSet::new();
    for item in items {
        item.validate()?;
        if !seen.insert(&item.item_id) {
            return Err(ItemError::DuplicateId(item.item_id.clone()));
        }
    }
    Ok(())
}

/// One annotator's subject-matter answer for one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemLabeling {
    pub item_id: ItemId,
    pub labels: BTreeSet<SubjectMatterLabel>,
    pub annotator_id: AnnotatorId,
    pub labeled_at: Timestamp,
}

/// Annotator pool: the general pool or the pool of one identity group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Pool {
    General,
    Group(GroupId),
}

impl Pool {
    pub const GENERAL: &'static str = "general";
}

impl From<String> for Pool {
    fn from(s: String) -> Self {
        if s == Pool::GENERAL {
            Pool::General
        } else {
            Pool::Group(GroupId(s))
        }
    }
}

impl From<Pool> for String {
    fn from(p: Pool) -> Self {
        p.to_string()
    }
}

impl fmt::Display for Pool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pool::General => f.write_str(Pool::GENERAL),
            Pool::Group(g) => f.write_str(g.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub annotator_id: AnnotatorId,
    pub pools: BTreeSet<Pool>,
    /// Seconds of exposure per UTC day.
    #[serde(default)]
    pub exposure_seconds: BTreeMap<NaiveDate, u64>,
    #[serde(default)]
    pub consented_at: Option<Timestamp>,
}

impl AnnotatorProfile {
    pub fn new(annotator_id: AnnotatorId, pools: impl IntoIterator<Item = Pool>) -> Self {
        Self {
            annotator_id,
            pools: pools.into_iter().collect(),
            exposure_seconds: BTreeMap::new(),
            consented_at: None,
        }
    }

    /// Tasks may only be handed out after consent.
    pub fn may_receive_tasks(&self) -> bool {
        self.consented_at.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    SubjectMatter,
    Severity,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignPolicy {
    /// Items per best-worst tuple.
    pub tuple_size: usize,
    /// Tuples generated per item.
    pub tuple_multiplier: f64,
    pub annotators_per_tuple: usize,
    pub max_session_minutes: u32,
    pub max_daily_minutes: u32,
    /// Subject-matter labelings collected per item.
    pub labelers_per_item: usize,
    pub rng_seed: u64,
    pub lease_minutes: u32,
    /// Gap without an open lease after which a new session starts.
    pub session_break_minutes: u32,
    pub instructions: String,
}

impl Default for CampaignPolicy {
    fn default() -> Self {
        Self {
            tuple_size: 4,
            tuple_multiplier: 2.0,
            annotators_per_tuple: 3,
            max_session_minutes: 30,
            max_daily_minutes: 120,
            labelers_per_item: 3,
            rng_seed: 0,
            lease_minutes: 10,
            session_break_minutes: 15,
            instructions: "Read every text in full. Content may be offensive; you may skip any \
                task and stop at any time."
                .to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("tuple size must be at least 2, got {0}")]
    TupleSize(usize),
    #[error("tuple multiplier must be within [1.0, 4.0], got {0}")]
    Multiplier(String),
    #[error("`{0}` must be at least 1")]
    ZeroCount(&'static str),
}

impl CampaignPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.tuple_size < 2 {
            return Err(PolicyError::TupleSize(self.tuple_size));
        }
        if !(1.0..=4.0).contains(&self.tuple_multiplier) {
            return Err(PolicyError::Multiplier(self.tuple_multiplier.to_string()));
        }
        for (name, value) in [
            ("annotators_per_tuple", self.annotators_per_tuple),
            ("labelers_per_item", self.labelers_per_item),
            ("lease_minutes", self.lease_minutes as usize),
            ("max_session_minutes", self.max_session_minutes as usize),
            ("max_daily_minutes", self.max_daily_minutes as usize),
        ] {
            if value == 0 {
                return Err(PolicyError::ZeroCount(name));
            }
        }
        Ok(())
    }
}

/// Static description of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub campaign_id: CampaignId,
    /// `None` until the first phase is opened.
    pub phase: Option<Phase>,
    pub items: Vec<Item>,
    pub registry: IdentityRegistry,
    pub policy: CampaignPolicy,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, text: &str) -> Item {
        Item {
            item_id: id.into(),
            text: text.into(),
            source: "test".into(),
            collected_at: Timestamp::default(),
        }
    }

    #[test]
    fn item_text_must_be_non_blank() {
        assert!(item("a", "hello").validate().is_ok());
        assert_eq!(item("a", " \n\t").validate(), Err(ItemError::EmptyText("a".into())));
        assert_eq!(
            validate_items(&[item("a", "x"), item("a", "y")]),
            Err(ItemError::DuplicateId("a".into()))
        );
    }

    #[test]
    fn default_policy_follows_bws_practice() {
        let p = CampaignPolicy::default();
        p.validate().unwrap();
        assert!(matches!(p.tuple_size, 4 | 5));
        assert!((1.5..=2.0).contains(&p.tuple_multiplier));
        assert_eq!(p.lease_minutes, 10);
        assert_eq!(
            CampaignPolicy { tuple_size: 1, ..p.clone() }.validate(),
            Err(PolicyError::TupleSize(1))
        );
        assert!(CampaignPolicy { tuple_multiplier: 4.5, ..p }.validate().is_err());
    }

    #[test]
    fn pool_serializes_as_plain_string() {
        let pools = vec![Pool::General, Pool::Group("women".into())];
        let json = serde_json::to_string(&pools).unwrap();
        assert_eq!(json, r#"["general","women"]"#);
        let back: Vec<Pool> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, pools);
    }

    #[test]
    fn consent_gates_tasks() {
        let mut profile = AnnotatorProfile::new("ann".into(), [Pool::General]);
        assert!(!profile.may_receive_tasks());
        profile.consented_at = Some(Timestamp::default());
        assert!(profile.may_receive_tasks());
    }
}
