use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AnnotatorId, CampaignPolicy, GroupId, ItemId, ItemLabeling, SubjectMatterLabel};

/// Majority outcome of the subject-matter step for one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub item_id: ItemId,
    /// Labels chosen by a strict majority of labelers. Empty when the item
    /// needs adjudication.
    pub labels: BTreeSet<SubjectMatterLabel>,
    pub labelers: usize,
    pub needs_adjudication: bool,
}

impl AggregatedLabel {
    pub fn adjudicated(item_id: ItemId, labels: BTreeSet<SubjectMatterLabel>) -> Self {
        Self {
            item_id,
            needs_adjudication: labels.is_empty(),
            labels,
            labelers: 0,
        }
    }

    /// Identity groups referenced by any aggregated label, in id order.
    pub fn groups(&self) -> BTreeSet<&GroupId> {
        self.labels.iter().flat_map(SubjectMatterLabel::groups).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelingError {
    #[error("item `{item}` has {got} labelings, {required} required")]
    UnderLabeled {
        item: ItemId,
        got: usize,
        required: usize,
    },
    #[error("annotator `{annotator}` labeled item `{item}` twice")]
    DuplicateLabeling { item: ItemId, annotator: AnnotatorId },
    #[error("labeling of item `{0}` has no labels")]
    EmptyLabeling(ItemId),
}

/// Per-label strict majority over each item's labelings.
///
/// A label survives when more than half of the item's labelers chose it. Items
/// where nothing survives are flagged for adjudication.
pub fn aggregate_labelings(
    labelings: &[ItemLabeling],
    policy: &CampaignPolicy,
) -> Result<BTreeMap<ItemId, AggregatedLabel>, LabelingError> {
    let mut by_item: BTreeMap<&ItemId, Vec<&ItemLabeling>> = BTreeMap::new();
    for labeling in labelings {
        if labeling.labels.is_empty() {
            return Err(LabelingError::EmptyLabeling(labeling.item_id.clone()));
        }
        by_item.entry(&labeling.item_id).or_default().push(labeling);
    }

    let mut out = BTreeMap::new();
    for (item_id, group) in by_item {
        let mut annotators = BTreeSet::new();
        for l in &group {
            if !annotators.insert(&l.annotator_id) {
                return Err(LabelingError::DuplicateLabeling {
                    item: item_id.clone(),
                    annotator: l.annotator_id.clone(),
                });
            }
        }
        if group.len() < policy.labelers_per_item {
            return Err(LabelingError::UnderLabeled {
                item: item_id.clone(),
                got: group.len(),
                required: policy.labelers_per_item,
            });
        }
        out.insert(item_id.clone(), majority(item_id, &group));
    }
    Ok(out)
}

pub(crate) fn majority(item_id: &ItemId, group: &[&ItemLabeling]) -> AggregatedLabel {
    let mut votes: BTreeMap<&SubjectMatterLabel, usize> = BTreeMap::new();
    for l in group {
        for label in &l.labels {
            *votes.entry(label).or_default() += 1;
        }
    }
    let labels: BTreeSet<SubjectMatterLabel> = votes
        .into_iter()
        .filter(|(_, count)| 2 * count > group.len())
        .map(|(label, _)| label.clone())
        .collect();
    AggregatedLabel {
        item_id: item_id.clone(),
        needs_adjudication: labels.is_empty(),
        labels,
        labelers: group.len(),
    }
}
