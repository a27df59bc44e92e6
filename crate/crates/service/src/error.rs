use serde::{Deserialize, Serialize};
use sevscale::audit::AuditError;
use sevscale::model::{ItemError, LabelViolation, PolicyError, Pool};
use sevscale::reliability::ReliabilityError;
use sevscale::scoring::JudgmentError;
use sevscale::{AnnotatorId, CampaignId, DesignError, ItemId, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExposureScope {
    Session,
    Daily,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServiceError {
    #[error("campaign `{0}` not found")]
    CampaignNotFound(CampaignId),
    #[error("campaign `{0}` already exists")]
    CampaignExists(CampaignId),
    #[error("campaign id `{0}` must be 1-64 characters of [A-Za-z0-9_-]")]
    InvalidCampaignId(String),
    #[error("annotator `{0}` not found")]
    AnnotatorNotFound(AnnotatorId),
    #[error("annotator `{0}` is already enrolled")]
    AnnotatorExists(AnnotatorId),
    #[error("pool `{0}` has no identity group in the registry")]
    UnknownPool(Pool),
    #[error("assignment `{0}` not found")]
    AssignmentNotFound(String),
    #[error("missing or unknown bearer token")]
    Unauthorized,
    #[error("assignment `{0}` belongs to another annotator")]
    NotOwner(String),
    #[error("invite code does not match")]
    InvalidInvite,
    #[error("consent has not been recorded")]
    ConsentRequired,
    #[error("{scope:?} exposure limit reached; tasks resume at {resume_at}")]
    ExposureLimitReached { scope: ExposureScope, resume_at: Timestamp },
    #[error("no task available")]
    NoTaskAvailable,
    #[error("assignment `{0}` is no longer live")]
    AssignmentExpired(String),
    #[error("assignment `{0}` was already submitted")]
    AlreadySubmitted(String),
    #[error("phase order violation: {0}")]
    PhaseOrderViolation(String),
    #[error("answer does not match the assignment payload")]
    WrongAnswerKind,
    #[error("a subject-matter answer needs at least one label")]
    EmptyLabeling,
    #[error("label `{label}` is invalid: {violation}")]
    InvalidLabel { label: String, violation: LabelViolation },
    #[error(transparent)]
    Judgment(#[from] JudgmentError),
    #[error(transparent)]
    Item(#[from] ItemError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("registry rejected: {0}")]
    Registry(String),
    #[error("pool `{pool}`: {source}")]
    Design { pool: Pool, source: DesignError },
    #[error("item `{0}` does not need adjudication")]
    NotAdjudicable(ItemId),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Reliability(#[from] ReliabilityError),
    #[error("storage: {0}")]
    Storage(String),
}

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::CampaignNotFound(_) => "campaign-not-found",
            ServiceError::CampaignExists(_) => "campaign-exists",
            ServiceError::InvalidCampaignId(_) => "invalid-campaign-id",
            ServiceError::AnnotatorNotFound(_) => "annotator-not-found",
            ServiceError::AnnotatorExists(_) => "annotator-exists",
            ServiceError::UnknownPool(_) => "unknown-pool",
            ServiceError::AssignmentNotFound(_) => "assignment-not-found",
            ServiceError::Unauthorized => "unauthorized",
            ServiceError::NotOwner(_) => "not-owner",
            ServiceError::InvalidInvite => "invalid-invite",
            ServiceError::ConsentRequired => "consent-required",
            ServiceError::ExposureLimitReached { .. } => "exposure-limit-reached",
            ServiceError::NoTaskAvailable => "no-task-available",
            ServiceError::AssignmentExpired(_) => "assignment-expired",
            ServiceError::AlreadySubmitted(_) => "already-submitted",
            ServiceError::PhaseOrderViolation(_) => "phase-order-violation",
            ServiceError::WrongAnswerKind => "wrong-answer-kind",
            ServiceError::EmptyLabeling => "empty-labeling",
            ServiceError::InvalidLabel { .. } => "invalid-label",
            ServiceError::Judgment(_) => "invalid-judgment",
            ServiceError::Item(_) => "invalid-item",
            ServiceError::Policy(_) => "invalid-policy",
            ServiceError::Registry(_) => "invalid-registry",
            ServiceError::Design { .. } => "design-infeasible",
            ServiceError::NotAdjudicable(_) => "not-adjudicable",
            ServiceError::Audit(_) => "audit-failed",
            ServiceError::Reliability(_) => "reliability-failed",
            ServiceError::Storage(_) => "storage",
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Storage(e.to_string())
    }
}
