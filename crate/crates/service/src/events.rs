//! Campaign events. The event log is the only persistent state; everything
//! else is rebuilt by replaying it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sevscale::model::{AnnotatorProfile, Phase, Pool};
use sevscale::{
    AnnotatorId, BwsDesign, CampaignId, CampaignPolicy, GroupId, IdentityRegistry, Item, ItemId, ItemLabeling,
    Judgment, SubjectMatterLabel, Timestamp, TupleId,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub at: Timestamp,
    #[serde(flatten)]
    pub event: Event,
}

/// What an assignment asks the annotator to answer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Unit {
    Item { item_id: ItemId },
    Tuple { pool: Pool, tuple_id: TupleId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingReason {
    /// Labels reference exactly one identity group.
    SingleGroup,
    /// Several groups; the one with the fewest pending judgments won.
    FewestPending,
    NoGroup,
    /// The group pool had fewer items than a tuple holds.
    PoolTooSmall,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub item_id: ItemId,
    pub pool: Pool,
    pub candidates: Vec<GroupId>,
    pub reason: RoutingReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDesign {
    pub pool: Pool,
    pub routing: Vec<RoutingDecision>,
    pub design: BwsDesign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    CampaignCreated {
        campaign_id: CampaignId,
        policy: CampaignPolicy,
    },
    ItemsAdded {
        items: Vec<Item>,
    },
    RegistrySet {
        registry: IdentityRegistry,
    },
    AnnotatorEnrolled {
        profile: AnnotatorProfile,
        invite_digest: String,
    },
    ConsentRecorded {
        annotator_id: AnnotatorId,
        token_digest: String,
    },
    PhaseOpened {
        phase: Phase,
        #[serde(default)]
        pools: Vec<PoolDesign>,
        /// Labeled items left out of severity routing for lack of a majority label.
        #[serde(default)]
        excluded: Vec<ItemId>,
    },
    Adjudicated {
        item_id: ItemId,
        labels: BTreeSet<SubjectMatterLabel>,
    },
    TaskIssued {
        assignment_id: String,
        annotator_id: AnnotatorId,
        unit: Unit,
        expires_at: Timestamp,
    },
    TaskReleased {
        assignment_id: String,
    },
    LabelingRecorded {
        assignment_id: String,
        labeling: ItemLabeling,
    },
    JudgmentRecorded {
        assignment_id: String,
        pool: Pool,
        judgment: Judgment,
    },
}
