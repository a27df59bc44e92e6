use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{GroupId, IdentityRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Top {
    People,
    Entities,
    Other,
}

/// How a person or group is referred to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Reference {
    Personal,
    IdentityGroupRelated,
}

/// Characteristic an identity group is defined by. `Other` is the escape hatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    Race,
    Religion,
    Gender,
    SexualOrientation,
    Disability,
    Occupation,
    PoliticalAffiliation,
    Appearance,
    Other,
}

impl Basis {
    pub const ALL: [Basis; 9] = [
        Basis::Race,
        Basis::Religion,
        Basis::Gender,
        Basis::SexualOrientation,
        Basis::Disability,
        Basis::Occupation,
        Basis::PoliticalAffiliation,
        Basis::Appearance,
        Basis::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Basis::Race => "race",
            Basis::Religion => "religion",
            Basis::Gender => "gender",
            Basis::SexualOrientation => "sexual-orientation",
            Basis::Disability => "disability",
            Basis::Occupation => "occupation",
            Basis::PoliticalAffiliation => "political-affiliation",
            Basis::Appearance => "appearance",
            Basis::Other => "other",
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Basis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Basis::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| format!("unknown basis tag `{s}`"))
    }
}

/// One path in the subject-matter taxonomy.
///
/// ```text
/// People ── Personal
///        └─ Identity-group related ── basis ── identity
/// Entities ── (related to identity group)
/// Other
/// ```
///
/// Every field is only meaningful when its parent field is set; see
/// [`validate_label`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubjectMatterLabel {
    pub top: Top,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Basis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<GroupId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub related_group: Option<GroupId>,
}

impl SubjectMatterLabel {
    fn bare(top: Top) -> Self {
        Self {
            top,
            reference: None,
            basis: None,
            identity: None,
            related_group: None,
        }
    }

    pub fn other() -> Self {
        Self::bare(Top::Other)
    }

    pub fn personal() -> Self {
        Self {
            reference: Some(Reference::Personal),
            ..Self::bare(Top::People)
        }
    }

    pub fn identity_group(basis: Option<Basis>, identity: Option<GroupId>) -> Self {
        Self {
            reference: Some(Reference::IdentityGroupRelated),
            basis,
            identity,
            ..Self::bare(Top::People)
        }
    }

    pub fn entity(related_group: Option<GroupId>) -> Self {
        Self {
            related_group,
            ..Self::bare(Top::Entities)
        }
    }

    /// Identity groups this label points at, either as the target identity
    /// or as the group an entity is related to.
    pub fn groups(&self) -> impl Iterator<Item = &GroupId> {
        self.identity.iter().chain(self.related_group.iter())
    }
}

/// Canonical path form, e.g. `people/identity-group/gender/transgender`,
/// `entities/related/muslims` or `other`.
impl fmt::Display for SubjectMatterLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let top = match self.top {
            Top::People => "people",
            Top::Entities => "entities",
            Top::Other => "other",
        };
        f.write_str(top)?;
        match self.reference {
            Some(Reference::Personal) => f.write_str("/personal")?,
            Some(Reference::IdentityGroupRelated) => f.write_str("/identity-group")?,
            None => {}
        }
        if let Some(basis) = self.basis {
            write!(f, "/{basis}")?;
        }
        if let Some(identity) = &self.identity {
            write!(f, "/{identity}")?;
        }
        if let Some(group) = &self.related_group {
            write!(f, "/related/{group}")?;
        }
        Ok(())
    }
}

impl FromStr for SubjectMatterLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split('/').collect();
        match parts.as_slice() {
            ["other"] => Ok(Self::other()),
            ["people"] => Ok(Self::bare(Top::People)),
            ["people", "personal"] => Ok(Self::personal()),
            ["people", "identity-group"] => Ok(Self::identity_group(None, None)),
            ["people", "identity-group", basis] => Ok(Self::identity_group(Some(basis.parse()?), None)),
            ["people", "identity-group", basis, identity] => Ok(Self::identity_group(
                Some(basis.parse()?),
                Some(GroupId::from(*identity)),
            )),
            ["entities"] => Ok(Self::entity(None)),
            ["entities", "related", group] => Ok(Self::entity(Some(GroupId::from(*group)))),
            _ => Err(format!("`{s}` is not a subject-matter label path")),
        }
    }
}

/// Structural rule a label breaks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum LabelViolation {
    #[error("people labels need a personal or identity-group reference")]
    MissingReference,
    #[error("`{field}` is set without its parent in the taxonomy")]
    OrphanRefinement { field: String },
    #[error("identity group `{group}` is not in the registry")]
    UnknownIdentity { group: GroupId },
    #[error("identity group `{group}` is defined by {registered}, not {labeled}")]
    BasisMismatch {
        group: GroupId,
        registered: Basis,
        labeled: Basis,
    },
}

impl LabelViolation {
    pub fn rule(&self) -> &'static str {
        match self {
            LabelViolation::MissingReference => "missing-reference",
            LabelViolation::OrphanRefinement { .. } => "orphan-refinement",
            LabelViolation::UnknownIdentity { .. } => "unknown-identity",
            LabelViolation::BasisMismatch { .. } => "basis-mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum LabelVerdict {
    Valid,
    Invalid(LabelViolation),
}

impl LabelVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, LabelVerdict::Valid)
    }
}

/// Checks that `label` is a root-to-node path of the taxonomy, walking from
/// the root and reporting the first rule that breaks.
pub fn validate_label(label: &SubjectMatterLabel, registry: &IdentityRegistry) -> LabelVerdict {
    match check_label(label, registry) {
        Ok(()) => LabelVerdict::Valid,
        Err(v) => LabelVerdict::Invalid(v),
    }
}

fn orphan(field: &str) -> LabelViolation {
    LabelViolation::OrphanRefinement {
        field: field.to_owned(),
    }
}

fn check_label(label: &SubjectMatterLabel, registry: &IdentityRegistry) -> Result<(), LabelViolation> {
    match (label.top, label.reference) {
        (Top::People, None) => return Err(LabelViolation::MissingReference),
        (Top::People, Some(_)) | (_, None) => {}
        (_, Some(_)) => return Err(orphan("reference")),
    }
    if label.basis.is_some() && label.reference != Some(Reference::IdentityGroupRelated) {
        return Err(orphan("basis"));
    }
    if label.identity.is_some() && label.basis.is_none() {
        return Err(orphan("identity"));
    }
    if label.related_group.is_some() && label.top != Top::Entities {
        return Err(orphan("related_group"));
    }

    if let (Some(basis), Some(identity)) = (label.basis, &label.identity) {
        let group = registry
            .group(identity)
            .ok_or_else(|| LabelViolation::UnknownIdentity {
                group: identity.clone(),
            })?;
        if group.basis != basis {
            return Err(LabelViolation::BasisMismatch {
                group: identity.clone(),
                registered: group.basis,
                labeled: basis,
            });
        }
    }
    if let Some(related) = &label.related_group {
        if registry.group(related).is_none() {
            return Err(LabelViolation::UnknownIdentity {
                group: related.clone(),
            });
        }
    }
    Ok(())
}
