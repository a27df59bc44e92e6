//! Domain types shared across the crate: items, taxonomy labels, identity
//! registry, annotators and campaigns.

mod aggregate;
mod campaign;
mod ids;
mod label;
mod registry;

pub use aggregate::{aggregate_labelings, AggregatedLabel, LabelingError};
pub use campaign::{
    validate_items, AnnotatorProfile, Campaign, CampaignPolicy, Item, ItemError, ItemLabeling,
    Phase, PolicyError, Pool,
};
pub use ids::{AnnotatorId, CampaignId, GroupId, ItemId, JudgmentId, TupleId};
pub use label::{validate_label, Basis, LabelVerdict, LabelViolation, Reference, SubjectMatterLabel, Top};
pub use registry::{IdentityGroup, IdentityRegistry, RegistryError, RESERVED_GROUP_IDS};

#[cfg(test)]
pub(crate) use registry::tests as registry_fixtures;
