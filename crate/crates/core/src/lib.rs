//! Building blocks for severity-of-abuse datasets.
//!
//! Annotation runs in two steps. Items are first labeled with one or more
//! subject-matter categories ([`model::SubjectMatterLabel`]), then compared in
//! best-worst tuples ([`design`]) whose judgments are counted into real-valued
//! severity scores ([`scoring`]). The remaining modules measure how reliable
//! those scores are ([`reliability`]), how the data is balanced across identity
//! groups ([`audit`]), where the items came from ([`sampler`]), and provide a
//! synthetic annotator population for end-to-end checks ([`sim`]).

pub mod audit;
pub mod design;
pub mod io;
pub mod model;
pub mod reliability;
pub mod sampler;
pub mod scoring;
pub mod sim;
pub mod stats;

pub use audit::{balance_report, disparity_report, export_datasheet, DisparityReport, GroupBalanceReport};
pub use design::{generate_design, verify_design, BwsDesign, BwsTuple, DesignError, DesignVerdict};
pub use model::{
    aggregate_labelings, validate_label, AggregatedLabel, AnnotatorId, CampaignId, CampaignPolicy,
    GroupId, IdentityRegistry, Item, ItemId, ItemLabeling, LabelVerdict, SubjectMatterLabel,
    TupleId,
};
pub use reliability::{split_half_reliability, ReliabilityReport};
pub use sampler::{sample_corpus, SamplingPlan};
pub use scoring::{compute_scores, rank_items, Judgment, SeverityScore};

/// Timestamps are UTC throughout.
pub type Timestamp = chrono::DateTime<chrono::Utc>;
