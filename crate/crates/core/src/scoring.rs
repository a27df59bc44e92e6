//! Best-worst judgments and counting scores.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{BwsDesign, BwsTuple};
use crate::io::{read_jsonl, IoError};
use crate::model::{AggregatedLabel, AnnotatorId, Item, ItemId, JudgmentId, TupleId};
use crate::Timestamp;

/// One annotator's pick of the most and the least abusive item of a tuple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub judgment_id: JudgmentId,
    pub tuple_id: TupleId,
    pub annotator_id: AnnotatorId,
    /// Most abusive.
    pub best: ItemId,
    /// Least abusive.
    pub worst: ItemId,
    pub submitted_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "error", rename_all = "kebab-case")]
pub enum JudgmentError {
    #[error("best and worst must be different items")]
    InvalidChoice,
    #[error("item `{item}` is not part of tuple `{tuple}`")]
    ChoiceOutsideTuple { tuple: TupleId, item: ItemId },
    #[error("annotator `{annotator}` already judged tuple `{tuple}`")]
    DuplicateJudgment { tuple: TupleId, annotator: AnnotatorId },
    #[error("tuple `{0}` is not in the design")]
    UnknownTuple(TupleId),
}

/// Checks the forced-choice rules of one judgment against its tuple.
pub fn check_choice(tuple: &BwsTuple, best: &ItemId, worst: &ItemId) -> Result<(), JudgmentError> {
    if best == worst {
        return Err(JudgmentError::InvalidChoice);
    }
    for item in [best, worst] {
        if !tuple.item_ids.contains(item) {
            return Err(JudgmentError::ChoiceOutsideTuple {
                tuple: tuple.tuple_id.clone(),
                item: item.clone(),
            });
        }
    }
    Ok(())
}

/// Append-only judgment store. The first judgment for a
/// `(tuple, annotator)` pair wins; later ones are rejected.
///
/// When opened on a file every accepted judgment is written and synced
/// before `record` returns.
#[derive(Debug, Default)]
pub struct JudgmentLog {
    judgments: Vec<Judgment>,
    seen: BTreeSet<(TupleId, AnnotatorId)>,
    file: Option<File>,
}

impl JudgmentLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a line-delimited log and loads what it holds.
    pub fn open(path: &Path) -> Result<Self, IoError> {
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
        let mut text = String::new();
        file.read_to_string(&mut text)?;
        // A torn final line from an interrupted write is dropped.
        let complete = match text.rfind('\n') {
            Some(end) => &text[..=end],
            None => "",
        };
        if complete.len() != text.len() {
            file.set_len(complete.len() as u64)?;
        }
        let judgments: Vec<Judgment> = read_jsonl(BufReader::new(complete.as_bytes()))?;
        let seen = judgments
            .iter()
            .map(|j| (j.tuple_id.clone(), j.annotator_id.clone()))
            .collect();
        Ok(Self {
            judgments,
            seen,
            file: Some(file),
        })
    }

    pub fn record(&mut self, judgment: Judgment, design: &BwsDesign) -> Result<(), RecordError> {
        let tuple = design
            .tuple(&judgment.tuple_id)
            .ok_or_else(|| JudgmentError::UnknownTuple(judgment.tuple_id.clone()))?;
        check_choice(tuple, &judgment.best, &judgment.worst)?;
        let key = (judgment.tuple_id.clone(), judgment.annotator_id.clone());
        if self.seen.contains(&key) {
            return Err(JudgmentError::DuplicateJudgment {
                tuple: key.0,
                annotator: key.1,
            }
            .into());
        }
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_vec(&judgment).map_err(IoError::from)?;
            line.push(b'\n');
            file.write_all(&line).map_err(IoError::from)?;
            file.sync_data().map_err(IoError::from)?;
        }
        self.seen.insert(key);
        self.judgments.push(judgment);
        Ok(())
    }

    pub fn judgments(&self) -> &[Judgment] {
        &self.judgments
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error(transparent)]
    Judgment(#[from] JudgmentError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Aggregated severity of one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityScore {
    pub item_id: ItemId,
    /// `(best_count - worst_count) / judged_appearances`, in `[-1, 1]`.
    pub raw: f64,
    /// `(raw + 1) / 2`, 0 least and 1 most abusive.
    pub normalized: f64,
    pub best_count: u32,
    pub worst_count: u32,
    pub judged_appearances: u32,
}

impl SeverityScore {
    pub fn from_counts(item_id: ItemId, best_count: u32, worst_count: u32, judged_appearances: u32) -> Self {
        let raw = (best_count as f64 - worst_count as f64) / judged_appearances as f64;
        Self {
            item_id,
            raw,
            normalized: (raw + 1.0) / 2.0,
            best_count,
            worst_count,
            judged_appearances,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoringError {
    #[error(transparent)]
    Judgment(#[from] JudgmentError),
    #[error("item `{0}` has no judged appearances")]
    UnscoredItem(ItemId),
}

#[derive(Default, Clone, Copy)]
struct Tally {
    best: u32,
    worst: u32,
    seen: u32,
}

fn tally(judgments: &[Judgment], design: &BwsDesign) -> Result<BTreeMap<ItemId, Tally>, JudgmentError> {
    let tuples = design.tuple_index();
    let mut tallies: BTreeMap<ItemId, Tally> = design.items.iter().map(|i| (i.clone(), Tally::default())).collect();
    let mut seen = BTreeSet::new();
    for j in judgments {
        let tuple = tuples
            .get(&j.tuple_id)
            .ok_or_else(|| JudgmentError::UnknownTuple(j.tuple_id.clone()))?;
        check_choice(tuple, &j.best, &j.worst)?;
        if !seen.insert((&j.tuple_id, &j.annotator_id)) {
            return Err(JudgmentError::DuplicateJudgment {
                tuple: j.tuple_id.clone(),
                annotator: j.annotator_id.clone(),
            });
        }
        for item in &tuple.item_ids {
            tallies.entry(item.clone()).or_default().seen += 1;
        }
        tallies.get_mut(&j.best).expect("tuple item").best += 1;
        tallies.get_mut(&j.worst).expect("tuple item").worst += 1;
    }
    Ok(tallies)
}

/// Counting scores for every item of the design, in design item order.
///
/// Fails with [`ScoringError::UnscoredItem`] while some item has not been
/// judged yet; use [`compute_partial_scores`] for progress snapshots.
pub fn compute_scores(judgments: &[Judgment], design: &BwsDesign) -> Result<Vec<SeverityScore>, ScoringError> {
    let tallies = tally(judgments, design)?;
    design
        .items
        .iter()
        .map(|id| {
            let t = tallies[id];
            if t.seen == 0 {
                return Err(ScoringError::UnscoredItem(id.clone()));
            }
            Ok(SeverityScore::from_counts(id.clone(), t.best, t.worst, t.seen))
        })
        .collect()
}

/// Like [`compute_scores`] but skips items without judged appearances.
pub fn compute_partial_scores(judgments: &[Judgment], design: &BwsDesign) -> Result<Vec<SeverityScore>, JudgmentError> {
    let tallies = tally(judgments, design)?;
    Ok(design
        .items
        .iter()
        .filter_map(|id| {
            let t = tallies[id];
            (t.seen > 0).then(|| SeverityScore::from_counts(id.clone(), t.best, t.worst, t.seen))
        })
        .collect())
}

/// Most to least abusive. Ties go to the item with more judged appearances,
/// then to the smaller item id.
pub fn rank_items(scores: &[SeverityScore]) -> Vec<SeverityScore> {
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| {
        b.normalized
            .total_cmp(&a.normalized)
            .then(b.judged_appearances.cmp(&a.judged_appearances))
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    ranked
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    item_id: ItemId,
    text: String,
    labels: String,
    raw: f64,
    normalized: f64,
    best_count: u32,
    worst_count: u32,
    judged_appearances: u32,
}

/// Writes scores as CSV with item text and aggregated labels (`;`-joined
/// label paths) looked up by id.
pub fn write_scores_csv(
    writer: impl Write,
    scores: &[SeverityScore],
    items: &BTreeMap<ItemId, Item>,
    labels: &BTreeMap<ItemId, AggregatedLabel>,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for s in scores {
        w.serialize(ScoreRow {
            item_id: s.item_id.clone(),
            text: items.get(&s.item_id).map(|i| i.text.clone()).unwrap_or_default(),
            labels: labels
                .get(&s.item_id)
                .map(|l| l.labels.iter().map(ToString::to_string).collect::<Vec<_>>().join(";"))
                .unwrap_or_default(),
            raw: s.raw,
            normalized: s.normalized,
            best_count: s.best_count,
            worst_count: s.worst_count,
            judged_appearances: s.judged_appearances,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads scores back from [`write_scores_csv`] output. Scores are rebuilt
/// from the counts, so they are bit-identical to the originals.
pub fn read_scores_csv(reader: impl Read) -> Result<Vec<SeverityScore>, csv::Error> {
    csv::Reader::from_reader(reader)
        .deserialize::<ScoreRow>()
        .map(|row| {
            let row = row?;
            Ok(SeverityScore::from_counts(
                row.item_id,
                row.best_count,
                row.worst_count,
                row.judged_appearances,
            ))
        })
        .collect()
}
