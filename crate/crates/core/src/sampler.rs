//! Candidate pool assembly from raw corpora.
//!
//! Records are matched against group lexicons and an optional profanity
//! lexicon by case-folded word tokens. Group quotas fill in corpus order.
//! The random quota is a seeded reservoir over records that match no term.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{GroupId, IdentityRegistry, Item, ItemId};
use crate::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    #[serde(default)]
    pub id: Option<String>,
    pub text: String,
    pub timestamp: Timestamp,
    /// Origin tag, e.g. a platform name or a pre-filtered user-monitoring dump.
    #[serde(default)]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupQuota {
    pub group_id: GroupId,
    pub target: usize,
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconQuota {
    pub target: usize,
    pub terms: Vec<String>,
}

/// `start` is inclusive, `end` exclusive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    #[serde(default)]
    pub start: Option<Timestamp>,
    #[serde(default)]
    pub end: Option<Timestamp>,
}

impl TimeWindow {
    pub fn contains(&self, t: &Timestamp) -> bool {
        self.start.is_none_or(|s| *t >= s) && self.end.is_none_or(|e| *t < e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingPlan {
    pub group_quotas: Vec<GroupQuota>,
    pub profanity: Option<LexiconQuota>,
    pub random_quota: usize,
    pub window: TimeWindow,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("plan has no active strategy")]
    NoStrategy,
    #[error("group `{0}` has a quota but no usable terms")]
    NoTerms(GroupId),
    #[error("profanity quota has no usable terms")]
    NoProfanityTerms,
    #[error("group `{0}` appears twice in the plan")]
    DuplicateGroup(GroupId),
    #[error("time window ends before it starts")]
    EmptyWindow,
}

impl SamplingPlan {
    /// One quota per registry group with all of its query terms.
    pub fn from_registry(registry: &IdentityRegistry, per_group: usize) -> Self {
        Self {
            group_quotas: registry
                .groups
                .iter()
                .map(|g| GroupQuota {
                    group_id: g.group_id.clone(),
                    target: per_group,
                    terms: g.terms().map(str::to_owned).collect(),
                })
                .collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let mut seen = HashSet::new();
        for q in &self.group_quotas {
            if !seen.insert(&q.group_id) {
                return Err(PlanError::DuplicateGroup(q.group_id.clone()));
            }
            if q.target > 0 && !q.terms.iter().any(|t| !tokenize(t).is_empty()) {
                return Err(PlanError::NoTerms(q.group_id.clone()));
            }
        }
        if let Some(p) = &self.profanity {
            if p.target > 0 && !p.terms.iter().any(|t| !tokenize(t).is_empty()) {
                return Err(PlanError::NoProfanityTerms);
            }
        }
        if let (Some(s), Some(e)) = (self.window.start, self.window.end) {
            if e < s {
                return Err(PlanError::EmptyWindow);
            }
        }
        let active = self.group_quotas.iter().any(|q| q.target > 0)
            || self.profanity.as_ref().is_some_and(|p| p.target > 0)
            || self.random_quota > 0;
        if !active {
            return Err(PlanError::NoStrategy);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Strategy {
    GroupTerms { group_id: GroupId },
    ProfanityLexicon,
    Random,
}

impl Strategy {
    pub fn tag(&self) -> String {
        match self {
            Strategy::GroupTerms { group_id } => format!("group-terms:{group_id}"),
            Strategy::ProfanityLexicon => "profanity-lexicon".to_owned(),
            Strategy::Random => "random".to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: Strategy,
    /// Plan terms found in the text, group and profanity lexicons alike.
    pub matched_terms: Vec<String>,
    /// Every planned group with at least one matching term.
    pub group_hits: Vec<GroupId>,
    pub record_id: Option<String>,
    pub record_source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledItem {
    pub item: Item,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Quota {
    Group { group_id: GroupId },
    Profanity,
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotaShortfall {
    pub quota: Quota,
    pub achieved: usize,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SampleOutcome {
    /// In corpus order.
    pub items: Vec<SampledItem>,
    pub shortfalls: Vec<QuotaShortfall>,
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

struct Lexicon {
    terms: Vec<(String, Vec<String>)>,
}

impl Lexicon {
    fn new(terms: &[String]) -> Self {
        Self {
            terms: terms
                .iter()
                .map(|t| (t.clone(), tokenize(t)))
                .filter(|(_, toks)| !toks.is_empty())
                .collect(),
        }
    }

    fn matches(&self, tokens: &[String]) -> Vec<String> {
        self.terms
            .iter()
            .filter(|(_, needle)| tokens.windows(needle.len()).any(|w| w == needle.as_slice()))
            .map(|(term, _)| term.clone())
            .collect()
    }
}

fn item_id(record: &CorpusRecord) -> ItemId {
    match &record.id {
        Some(id) => ItemId::new(id.clone()),
        None => {
            let digest = Sha256::digest(record.text.as_bytes());
            ItemId::new(format!("s-{}", hex::encode(&digest[..8])))
        }
    }
}

/// Assemble a candidate pool. Unfillable quotas produce shortfall warnings.
pub fn sample_corpus(
    corpus: impl IntoIterator<Item = CorpusRecord>,
    plan: &SamplingPlan,
) -> Result<SampleOutcome, PlanError> {
    plan.validate()?;
    let groups: Vec<(&GroupQuota, Lexicon)> = plan.group_quotas.iter().map(|q| (q, Lexicon::new(&q.terms))).collect();
    let profanity = plan.profanity.as_ref().map(|p| (p.target, Lexicon::new(&p.terms)));
    let mut group_filled = vec![0usize; groups.len()];
    let mut profanity_filled = 0usize;

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut reservoir: Vec<(usize, CorpusRecord)> = Vec::with_capacity(plan.random_quota);
    let mut eligible = 0u64;

    let mut chosen: Vec<(usize, SampledItem)> = Vec::new();
    let mut seen_texts: HashSet<String> = HashSet::new();
    let mut seen_ids: HashSet<ItemId> = HashSet::new();

    for (index, record) in corpus.into_iter().enumerate() {
        if !plan.window.contains(&record.timestamp) || record.text.trim().is_empty() {
            continue;
        }
        if !seen_texts.insert(record.text.clone()) {
            continue;
        }
        let id = item_id(&record);
        if !seen_ids.insert(id.clone()) {
            tracing::warn!(item = %id, "record id repeats with different text; skipped");
            continue;
        }
        let tokens = tokenize(&record.text);
        let mut matched_terms = Vec::new();
        let mut group_hits = Vec::new();
        let mut assigned = None;
        for (g, (quota, lexicon)) in groups.iter().enumerate() {
            let hits = lexicon.matches(&tokens);
            if hits.is_empty() {
                continue;
            }
            matched_terms.extend(hits);
            group_hits.push(quota.group_id.clone());
            if assigned.is_none() && group_filled[g] < quota.target {
                assigned = Some(g);
            }
        }
        let profanity_hits = profanity.as_ref().map(|(_, lex)| lex.matches(&tokens)).unwrap_or_default();
        let profane = !profanity_hits.is_empty();
        for term in profanity_hits {
            if !matched_terms.contains(&term) {
                matched_terms.push(term);
            }
        }

        let strategy = if let Some(g) = assigned {
            group_filled[g] += 1;
            Some(Strategy::GroupTerms {
                group_id: groups[g].0.group_id.clone(),
            })
        } else if profane && profanity.as_ref().is_some_and(|(target, _)| profanity_filled < *target) {
            profanity_filled += 1;
            Some(Strategy::ProfanityLexicon)
        } else {
            None
        };

        match strategy {
            Some(strategy) => {
                let item = to_item(id, &record, &strategy);
                chosen.push((
                    index,
                    SampledItem {
                        item,
                        provenance: Provenance {
                            strategy,
                            matched_terms,
                            group_hits,
                            record_id: record.id,
                            record_source: record.source,
                        },
                    },
                ));
            }
            None if matched_terms.is_empty() && plan.random_quota > 0 => {
                // Algorithm R.
                if reservoir.len() < plan.random_quota {
                    reservoir.push((index, record));
                } else {
                    let j = rng.random_range(0..=eligible) as usize;
                    if j < plan.random_quota {
                        reservoir[j] = (index, record);
                    }
                }
                eligible += 1;
            }
            None => {}
        }
    }

    let random_filled = reservoir.len();
    for (index, record) in reservoir {
        let strategy = Strategy::Random;
        let item = to_item(item_id(&record), &record, &strategy);
        chosen.push((
            index,
            SampledItem {
                item,
                provenance: Provenance {
                    strategy,
                    matched_terms: Vec::new(),
                    group_hits: Vec::new(),
                    record_id: record.id,
                    record_source: record.source,
                },
            },
        ));
    }
    chosen.sort_by_key(|(index, _)| *index);

    let mut shortfalls = Vec::new();
    for ((quota, _), filled) in groups.iter().zip(&group_filled) {
        if *filled < quota.target {
            shortfalls.push(QuotaShortfall {
                quota: Quota::Group {
                    group_id: quota.group_id.clone(),
                },
                achieved: *filled,
                target: quota.target,
            });
        }
    }
    if let Some((target, _)) = &profanity {
        if profanity_filled < *target {
            shortfalls.push(QuotaShortfall {
                quota: Quota::Profanity,
                achieved: profanity_filled,
                target: *target,
            });
        }
    }
    if random_filled < plan.random_quota {
        shortfalls.push(QuotaShortfall {
            quota: Quota::Random,
            achieved: random_filled,
            target: plan.random_quota,
        });
    }
    for s in &shortfalls {
        tracing::warn!(quota = ?s.quota, achieved = s.achieved, target = s.target, "quota shortfall");
    }
    Ok(SampleOutcome {
        items: chosen.into_iter().map(|(_, item)| item).collect(),
        shortfalls,
    })
}

fn to_item(item_id: ItemId, record: &CorpusRecord, strategy: &Strategy) -> Item {
    let source = match &record.source {
        Some(s) => format!("{}; {s}", strategy.tag()),
        None => strategy.tag(),
    };
    Item {
        item_id,
        text: record.text.clone(),
        source,
        collected_at: record.timestamp,
    }
}
