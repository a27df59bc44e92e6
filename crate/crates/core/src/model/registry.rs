use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Basis, GroupId};

/// Group ids that are taken by routing pools and report rows.
pub const RESERVED_GROUP_IDS: [&str; 2] = ["general", "other"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityGroup {
    pub group_id: GroupId,
    pub display_name: String,
    pub basis: Basis,
    /// Query terms that tend to surface abusive mentions of the group.
    #[serde(default)]
    pub abusive_terms: Vec<String>,
    /// Neutral or positive query terms for the group and related entities.
    #[serde(default)]
    pub benign_terms: Vec<String>,
}

impl IdentityGroup {
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.abusive_terms
            .iter()
            .chain(self.benign_terms.iter())
            .map(String::as_str)
    }
}

/// Campaign-scoped list of identity groups.
///
/// Exploratory rounds add groups by producing a new version with
/// [`IdentityRegistry::evolve`]; existing groups are never dropped, so labels
/// valid under an older version stay valid.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IdentityRegistry {
    #[serde(default = "first_version")]
    pub version: u32,
    #[serde(default)]
    pub groups: Vec<IdentityGroup>,
}

fn first_version() -> u32 {
    1
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("identity group `{0}` is declared twice")]
    DuplicateGroup(GroupId),
    #[error("identity group id `{0}` is reserved")]
    ReservedGroupId(GroupId),
    #[error("identity group `{0}` has an empty term lexicon")]
    EmptyLexicon(GroupId),
    #[error("term `{term}` of group `{group}` is listed as both abusive and benign")]
    OverlappingTerms { group: GroupId, term: String },
    #[error("registry version {new} does not keep group `{missing}` from version {old}")]
    DroppedGroup { old: u32, new: u32, missing: GroupId },
    #[error("reading registry: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing registry: {0}")]
    Parse(String),
}

fn fold(term: &str) -> String {
    term.trim().to_lowercase()
}

impl IdentityRegistry {
    pub fn new(groups: Vec<IdentityGroup>) -> Result<Self, RegistryError> {
        let registry = Self { version: 1, groups };
        registry.validate()?;
        Ok(registry)
    }

    /// Loads a registry from a `.toml` or JSON document.
    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path)?;
        let registry: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml_from_str(&text)?
        } else {
            serde_json::from_str(&text).map_err(|e| RegistryError::Parse(e.to_string()))?
        };
        registry.validate()?;
        Ok(registry)
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        let mut seen = BTreeSet::new();
        for group in &self.groups {
            if RESERVED_GROUP_IDS.contains(&group.group_id.as_str()) {
                return Err(RegistryError::ReservedGroupId(group.group_id.clone()));
            }
            if !seen.insert(&group.group_id) {
                return Err(RegistryError::DuplicateGroup(group.group_id.clone()));
            }
            if group.terms().all(|t| t.trim().is_empty()) {
                return Err(RegistryError::EmptyLexicon(group.group_id.clone()));
            }
            let abusive: BTreeSet<String> = group.abusive_terms.iter().map(|t| fold(t)).collect();
            if let Some(term) = group.benign_terms.iter().find(|t| abusive.contains(&fold(t))) {
                return Err(RegistryError::OverlappingTerms {
                    group: group.group_id.clone(),
                    term: term.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn group(&self, id: &GroupId) -> Option<&IdentityGroup> {
        self.groups.iter().find(|g| &g.group_id == id)
    }

    pub fn group_ids(&self) -> impl Iterator<Item = &GroupId> {
        self.groups.iter().map(|g| &g.group_id)
    }

    /// Next registry version with `additions` merged in. A group that already
    /// exists keeps its basis and gains any new terms.
    pub fn evolve(&self, additions: Vec<IdentityGroup>) -> Result<Self, RegistryError> {
        let mut next = self.clone();
        next.version = self.version + 1;
        for add in additions {
            match next.groups.iter_mut().find(|g| g.group_id == add.group_id) {
                Some(existing) => {
                    for t in add.abusive_terms {
                        if !existing.abusive_terms.contains(&t) {
                            existing.abusive_terms.push(t);
                        }
                    }
                    for t in add.benign_terms {
                        if !existing.benign_terms.contains(&t) {
                            existing.benign_terms.push(t);
                        }
                    }
                }
                None => next.groups.push(add),
            }
        }
        next.validate()?;
        Ok(next)
    }

    /// Checks that `self` can replace `older` without invalidating labels.
    pub fn check_supersedes(&self, older: &IdentityRegistry) -> Result<(), RegistryError> {
        for group in &older.groups {
            match self.group(&group.group_id) {
                Some(g) if g.basis == group.basis => {}
                _ => {
                    return Err(RegistryError::DroppedGroup {
                        old: older.version,
                        new: self.version,
                        missing: group.group_id.clone(),
                    })
                }
            }
        }
        Ok(())
    }
}

fn toml_from_str(text: &str) -> Result<IdentityRegistry, RegistryError> {
    crate::io::from_toml(text).map_err(RegistryError::Parse)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn group(id: &str, basis: Basis, abusive: &[&str], benign: &[&str]) -> IdentityGroup {
        IdentityGroup {
            group_id: id.into(),
            display_name: id.to_owned(),
            basis,
            abusive_terms: abusive.iter().map(|s| s.to_string()).collect(),
            benign_terms: benign.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub(crate) fn small_registry() -> IdentityRegistry {
        IdentityRegistry::new(vec![
            group("transgender", Basis::Gender, &["tranny"], &["transgender", "pride parade"]),
            group("muslims", Basis::Religion, &["raghead"], &["muslim", "islam", "mosque"]),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_duplicates_overlap_and_reserved_ids() {
        let dup = IdentityRegistry::new(vec![
            group("a", Basis::Race, &["x"], &[]),
            group("a", Basis::Race, &["y"], &[]),
        ]);
        assert!(matches!(dup, Err(RegistryError::DuplicateGroup(_))));

        let overlap = IdentityRegistry::new(vec![group("a", Basis::Race, &["X "], &["x"])]);
        assert!(matches!(overlap, Err(RegistryError::OverlappingTerms { .. })));

        let empty = IdentityRegistry::new(vec![group("a", Basis::Race, &[], &[" "])]);
        assert!(matches!(empty, Err(RegistryError::EmptyLexicon(_))));

        let reserved = IdentityRegistry::new(vec![group("general", Basis::Race, &["x"], &[])]);
        assert!(matches!(reserved, Err(RegistryError::ReservedGroupId(_))));
    }

    #[test]
    fn evolve_keeps_old_groups() {
        let v1 = small_registry();
        let v2 = v1
            .evolve(vec![
                group("immigrants", Basis::Other, &[], &["immigrant"]),
                group("muslims", Basis::Religion, &[], &["ramadan"]),
            ])
            .unwrap();
        assert_eq!(v2.version, 2);
        assert_eq!(v2.groups.len(), 3);
        assert!(v2.group(&"muslims".into()).unwrap().benign_terms.contains(&"ramadan".to_owned()));
        v2.check_supersedes(&v1).unwrap();
        assert!(v1.check_supersedes(&v2).is_err());
    }

    #[test]
    fn loads_toml_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("registry.toml");
        std::fs::write(
            &toml_path,
            r#"
version = 3
[[groups]]
group_id = "women"
display_name = "Women"
basis = "gender"
abusive_terms = ["slur"]
benign_terms = ["women", "woman"]
"#,
        )
        .unwrap();
        let registry = IdentityRegistry::load(&toml_path).unwrap();
        assert_eq!(registry.version, 3);
        assert_eq!(registry.groups[0].basis, Basis::Gender);

        let json_path = dir.path().join("registry.json");
        std::fs::write(&json_path, serde_json::to_string(&registry).unwrap()).unwrap();
        assert_eq!(IdentityRegistry::load(&json_path).unwrap(), registry);
    }
}
