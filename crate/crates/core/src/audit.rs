//! Group balance, error-rate disparity and datasheets.
//!
//! Reports work on aggregated subject-matter labels. An item counts toward
//! every identity group its labels reference, so an item labeled with two
//! groups shows up in two rows. Items without any identity group fall into
//! the synthetic [`OTHER_ROW`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::model::{AggregatedLabel, Campaign, GroupId, ItemId};
use crate::reliability::ReliabilityReport;
use crate::scoring::SeverityScore;

pub const OTHER_ROW: &str = "other";

pub const MULTI_LABEL_NOTE: &str = "items labeled with several identity groups are counted once in \
every matching row, so row counts can sum to more than the number of distinct items";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuditError {
    #[error("item `{0}` has no aggregated subject-matter labels")]
    MissingLabels(ItemId),
    #[error("threshold must lie in [0, 1], got {0}")]
    Threshold(String),
    #[error("item `{0}` is missing from one of the gold and prediction sets")]
    ItemSetMismatch(ItemId),
}

fn row_keys(item: &ItemId, labels: &BTreeMap<ItemId, AggregatedLabel>) -> Result<Vec<GroupId>, AuditError> {
    let agg = labels
        .get(item)
        .filter(|a| !a.needs_adjudication && !a.labels.is_empty())
        .ok_or_else(|| AuditError::MissingLabels(item.clone()))?;
    let groups: Vec<GroupId> = agg.groups().into_iter().cloned().collect();
    Ok(if groups.is_empty() {
        vec![GroupId::from(OTHER_ROW)]
    } else {
        groups
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub group_id: GroupId,
    pub item_count: u64,
    pub abusive_count: u64,
    pub benign_count: u64,
    pub abusive_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceTotals {
    pub distinct_items: u64,
    pub abusive_items: u64,
    pub benign_items: u64,
    /// Sum of `item_count` over all rows.
    pub row_memberships: u64,
    pub multi_group_items: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBalanceReport {
    /// Items with normalized severity `>= tau` count as abusive.
    pub tau: f64,
    pub note: String,
    pub rows: Vec<BalanceRow>,
    pub totals: BalanceTotals,
}

/// Abusive/benign counts per identity group at threshold `tau`.
///
/// `declared_groups` always get a row, even when empty. Rows are sorted by
/// group id.
pub fn balance_report(
    scores: &[SeverityScore],
    labels: &BTreeMap<ItemId, AggregatedLabel>,
    tau: f64,
    declared_groups: &[GroupId],
) -> Result<GroupBalanceReport, AuditError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(AuditError::Threshold(tau.to_string()));
    }
    let mut rows: BTreeMap<GroupId, (u64, u64)> = declared_groups.iter().map(|g| (g.clone(), (0, 0))).collect();
    let mut totals = BalanceTotals {
        distinct_items: 0,
        abusive_items: 0,
        benign_items: 0,
        row_memberships: 0,
        multi_group_items: 0,
    };
    for score in scores {
        let keys = row_keys(&score.item_id, labels)?;
        let abusive = score.normalized >= tau;
        totals.distinct_items += 1;
        if abusive {
            totals.abusive_items += 1;
        } else {
            totals.benign_items += 1;
        }
        if keys.len() > 1 {
            totals.multi_group_items += 1;
        }
        for key in keys {
            totals.row_memberships += 1;
            let row = rows.entry(key).or_default();
            if abusive {
                row.0 += 1;
            } else {
                row.1 += 1;
            }
        }
    }
    let rows = rows
        .into_iter()
        .map(|(group_id, (abusive_count, benign_count))| {
            let item_count = abusive_count + benign_count;
            BalanceRow {
                group_id,
                item_count,
                abusive_count,
                benign_count,
                abusive_ratio: if item_count == 0 {
                    0.0
                } else {
                    abusive_count as f64 / item_count as f64
                },
            }
        })
        .collect();
    Ok(GroupBalanceReport {
        tau,
        note: MULTI_LABEL_NOTE.to_owned(),
        rows,
        totals,
    })
}

impl BalanceRow {
    /// Fixed-width table line, shared by the text report and the datasheet.
    pub fn table_line(&self) -> String {
        format!(
            "| {:<24} | {:>8} | {:>8} | {:>8} | {:>8.4} |",
            self.group_id, self.item_count, self.abusive_count, self.benign_count, self.abusive_ratio
        )
    }
}

const BALANCE_HEADER: &str = "| group                    |    items |  abusive |   benign |    ratio |\n\
|--------------------------|----------|----------|----------|----------|";

impl fmt::Display for GroupBalanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "threshold tau = {}", self.tau)?;
        writeln!(f, "note: {}", self.note)?;
        writeln!(f, "{BALANCE_HEADER}")?;
        for row in &self.rows {
            writeln!(f, "{}", row.table_line())?;
        }
        let t = &self.totals;
        writeln!(
            f,
            "distinct items: {} (abusive {}, benign {}); row memberships: {}; multi-group items: {}",
            t.distinct_items, t.abusive_items, t.benign_items, t.row_memberships, t.multi_group_items
        )
    }
}

/// Binary abusive flag for one item, as read from gold or prediction files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryFlag {
    pub item_id: ItemId,
    pub abusive: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: u64,
    pub false_positive: u64,
    pub true_negative: u64,
    pub false_negative: u64,
}

impl Confusion {
    fn add(&mut self, gold: bool, predicted: bool) {
        match (gold, predicted) {
            (true, true) => self.true_positive += 1,
            (false, true) => self.false_positive += 1,
            (false, false) => self.true_negative += 1,
            (true, false) => self.false_negative += 1,
        }
    }

    pub fn support(&self) -> u64 {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }

    /// FP / (FP + TN); `None` without gold negatives.
    pub fn false_positive_rate(&self) -> Option<Ratio<u64>> {
        let den = self.false_positive + self.true_negative;
        (den > 0).then(|| Ratio::new(self.false_positive, den))
    }

    /// FN / (FN + TP); `None` without gold positives.
    pub fn false_negative_rate(&self) -> Option<Ratio<u64>> {
        let den = self.false_negative + self.true_positive;
        (den > 0).then(|| Ratio::new(self.false_negative, den))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityRow {
    pub group_id: GroupId,
    /// `None` is reported as n/a.
    pub false_positive_rate: Option<Ratio<u64>>,
    pub false_negative_rate: Option<Ratio<u64>>,
    pub support: u64,
    pub confusion: Confusion,
}

impl DisparityRow {
    fn new(group_id: GroupId, confusion: Confusion) -> Self {
        Self {
            group_id,
            false_positive_rate: confusion.false_positive_rate(),
            false_negative_rate: confusion.false_negative_rate(),
            support: confusion.support(),
            confusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityReport {
    pub rows: Vec<DisparityRow>,
    pub overall: DisparityRow,
    /// Largest pairwise |FPR_i - FPR_j| over groups with a defined rate.
    pub fpr_gap: Ratio<u64>,
    pub fnr_gap: Ratio<u64>,
}

fn max_gap(rates: impl Iterator<Item = Option<Ratio<u64>>>) -> Ratio<u64> {
    let defined: Vec<Ratio<u64>> = rates.flatten().collect();
    match (defined.iter().min(), defined.iter().max()) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => Ratio::from_integer(0),
    }
}

/// Per-group false positive and false negative rates of an external model
/// against gold flags. Rates are exact fractions.
pub fn disparity_report(
    gold: &BTreeMap<ItemId, bool>,
    predictions: &BTreeMap<ItemId, bool>,
    labels: &BTreeMap<ItemId, AggregatedLabel>,
) -> Result<DisparityReport, AuditError> {
    if let Some(item) = predictions.keys().find(|k| !gold.contains_key(*k)) {
        return Err(AuditError::ItemSetMismatch(item.clone()));
    }
    if let Some(item) = gold.keys().find(|k| !predictions.contains_key(*k)) {
        return Err(AuditError::ItemSetMismatch(item.clone()));
    }
    let mut groups: BTreeMap<GroupId, Confusion> = BTreeMap::new();
    let mut overall = Confusion::default();
    for (item, &truth) in gold {
        let predicted = predictions[item];
        overall.add(truth, predicted);
        for key in row_keys(item, labels)? {
            groups.entry(key).or_default().add(truth, predicted);
        }
    }
    let rows: Vec<DisparityRow> = groups.into_iter().map(|(g, c)| DisparityRow::new(g, c)).collect();
    Ok(DisparityReport {
        fpr_gap: max_gap(rows.iter().map(|r| r.false_positive_rate)),
        fnr_gap: max_gap(rows.iter().map(|r| r.false_negative_rate)),
        overall: DisparityRow::new(GroupId::from("overall"), overall),
        rows,
    })
}

fn show_rate(rate: Option<Ratio<u64>>) -> String {
    match rate {
        Some(r) => format!("{} ({:.4})", r, *r.numer() as f64 / *r.denom() as f64),
        None => "n/a".to_owned(),
    }
}

impl fmt::Display for DisparityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "| {:<24} | {:>16} | {:>16} | {:>8} |", "group", "FPR", "FNR", "support")?;
        writeln!(f, "|{:-<26}|{:-<18}|{:-<18}|{:-<10}|", "", "", "", "")?;
        for row in self.rows.iter().chain(std::iter::once(&self.overall)) {
            writeln!(
                f,
                "| {:<24} | {:>16} | {:>16} | {:>8} |",
                row.group_id,
                show_rate(row.false_positive_rate),
                show_rate(row.false_negative_rate),
                row.support
            )?;
        }
        writeln!(f, "max FPR gap: {}", show_rate(Some(self.fpr_gap)))?;
        writeln!(f, "max FNR gap: {}", show_rate(Some(self.fnr_gap)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasheetConfig {
    /// Mean split-half reliability below this adds a warning.
    pub low_reliability_threshold: f64,
}

impl Default for DatasheetConfig {
    fn default() -> Self {
        Self {
            low_reliability_threshold: 0.6,
        }
    }
}

/// Strategy part of an item source tag: `group-terms:women; forum` gives
/// `group-terms`.
fn strategy_of(source: &str) -> &str {
    let head = source.split(';').next().unwrap_or("").trim();
    head.split(':').next().unwrap_or("").trim()
}

/// Markdown datasheet for a campaign. Output depends only on the inputs.
pub fn export_datasheet(
    campaign: &Campaign,
    balance: &GroupBalanceReport,
    reliability: Option<&ReliabilityReport>,
    config: &DatasheetConfig,
) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "# Datasheet: {}\n", campaign.campaign_id);

    let mut sources: BTreeMap<&str, usize> = BTreeMap::new();
    let mut strategies: BTreeSet<&str> = BTreeSet::new();
    for item in &campaign.items {
        let source = if item.source.trim().is_empty() { "unspecified" } else { item.source.as_str() };
        *sources.entry(source).or_default() += 1;
        strategies.insert(strategy_of(source));
    }
    let _ = writeln!(w, "## Collection sources\n");
    let _ = writeln!(w, "{} items.\n", campaign.items.len());
    if sources.is_empty() {
        let _ = writeln!(w, "- none\n");
    }
    for (source, count) in &sources {
        let _ = writeln!(w, "- {source}: {count}");
    }
    let _ = writeln!(w, "\n## Sampling strategies\n");
    if strategies.is_empty() {
        let _ = writeln!(w, "- none");
    }
    for s in &strategies {
        let _ = writeln!(w, "- {s}");
    }

    let registry = &campaign.registry;
    let _ = writeln!(w, "\n## Identity registry\n");
    let _ = writeln!(w, "Version {} with {} groups.\n", registry.version, registry.groups.len());
    for g in &registry.groups {
        let _ = writeln!(
            w,
            "- {} ({}, basis {}): {} abusive-leaning and {} benign query terms",
            g.group_id,
            g.display_name,
            g.basis,
            g.abusive_terms.len(),
            g.benign_terms.len()
        );
    }

    let _ = writeln!(w, "\n## Composition by identity group\n");
    let _ = writeln!(w, "Abusive means normalized severity >= {}. Note: {}.\n", balance.tau, balance.note);
    let _ = writeln!(w, "{BALANCE_HEADER}");
    for row in &balance.rows {
        let _ = writeln!(w, "{}", row.table_line());
    }
    let t = &balance.totals;
    let _ = writeln!(
        w,
        "\nDistinct scored items: {} (abusive {}, benign {}).",
        t.distinct_items, t.abusive_items, t.benign_items
    );

    let _ = writeln!(w, "\n## Reliability\n");
    match reliability {
        Some(r) => {
            let _ = writeln!(
                w,
                "Mean split-half reliability (Spearman) {:.4} over {} trials, seed {}.",
                r.mean_shr, r.trials, r.seed
            );
        }
        None => {
            let _ = writeln!(w, "Not computed.");
        }
    }

    let p = &campaign.policy;
    let _ = writeln!(w, "\n## Annotation policy\n");
    let _ = writeln!(w, "- tuple size: {}", p.tuple_size);
    let _ = writeln!(w, "- tuples per item: {}", p.tuple_multiplier);
    let _ = writeln!(w, "- annotators per tuple: {}", p.annotators_per_tuple);
    let _ = writeln!(w, "- subject-matter labelers per item: {}", p.labelers_per_item);
    let _ = writeln!(w, "- exposure limits: {} min per session, {} min per day", p.max_session_minutes, p.max_daily_minutes);
    let _ = writeln!(w, "- task lease: {} min", p.lease_minutes);
    let _ = writeln!(w, "- design seed: {}", p.rng_seed);
    let _ = writeln!(
        w,
        "- annotator welfare: tasks require recorded consent and stop at the exposure limits; \
         compensation and support arrangements are managed outside this tool"
    );

    let _ = writeln!(w, "\n## Known limitations\n");
    if campaign.items.is_empty() || balance.totals.distinct_items == 0 {
        let _ = writeln!(w, "- no data: the campaign has no scored items yet");
    }
    if let Some(r) = reliability {
        if r.mean_shr < config.low_reliability_threshold {
            let _ = writeln!(
                w,
                "- WARNING: low reliability, mean split-half correlation {:.4} is below {}",
                r.mean_shr, config.low_reliability_threshold
            );
        }
    }
    if balance.totals.multi_group_items > 0 {
        let _ = writeln!(w, "- {} items reference several identity groups and are counted in each", balance.totals.multi_group_items);
    }
    let _ = writeln!(w, "- items without an identity-group label are reported under `{OTHER_ROW}`");
    let _ = writeln!(w, "- severity scores are relative within the campaign; the abusive threshold is a reporting choice");
    out
}
