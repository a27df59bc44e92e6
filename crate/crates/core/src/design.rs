//! Best-worst tuple designs.
//!
//! A design arranges `N` items into `m = ceil(multiplier * N)` tuples of `n`
//! distinct items so that every item appears `floor(m*n/N)` or `ceil(m*n/N)`
//! times and co-occurs with as many different partners as possible.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{ItemId, TupleId};

/// Multipliers inside this range follow the usual best-worst practice.
pub const RECOMMENDED_MULTIPLIER: (f64, f64) = (1.5, 2.0);
pub const MULTIPLIER_LIMITS: (f64, f64) = (1.0, 4.0);

const MAX_OPTIMIZE_ROUNDS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BwsTuple {
    pub tuple_id: TupleId,
    /// Presentation order.
    pub item_ids: Vec<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCount {
    pub a: ItemId,
    pub b: ItemId,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BwsDesign {
    pub design_id: String,
    /// Tuple size.
    pub n: usize,
    pub item_count: usize,
    pub tuple_count: usize,
    pub multiplier: f64,
    pub seed: u64,
    pub items: Vec<ItemId>,
    pub appearance_counts: BTreeMap<ItemId, u32>,
    /// Non-zero co-occurrence counts, `a < b`.
    pub pair_counts: Vec<PairCount>,
    /// Items that received the extra appearance when `m*n` is not a multiple of `N`.
    pub extra_appearance_items: Vec<ItemId>,
    /// Lower bound on the largest pair count any design with these
    /// appearance counts can reach.
    pub pair_bound: u32,
    pub max_pair_count: u32,
    /// Whether `max_pair_count <= pair_bound + 1` was reached.
    pub pair_target_met: bool,
    pub tuples: Vec<BwsTuple>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DesignError {
    #[error("cannot build tuples of {n} from {items} items")]
    DesignInfeasible { items: usize, n: usize },
    #[error("item `{0}` is listed more than once")]
    DuplicateItems(ItemId),
    #[error("tuple size must be at least 2, got {0}")]
    TupleSize(usize),
    #[error("multiplier {0} outside [1.0, 4.0]")]
    Multiplier(String),
}

/// `ceil(multiplier * n_items)`, computed on a fixed 1e-6 grid so that
/// decimal multipliers such as 1.1 do not round up through float error.
pub fn tuple_count(n_items: usize, multiplier: f64) -> usize {
    const SCALE: u128 = 1_000_000;
    let scaled = (multiplier * SCALE as f64).round() as u128;
    (scaled * n_items as u128).div_ceil(SCALE) as usize
}

/// Lower bound on the maximum pair count: the pigeonhole bound over all
/// pairs and, per item, over its `N - 1` possible partners.
pub fn pair_count_lower_bound(
    n_items: usize,
    n: usize,
    tuple_count: usize,
    appearances: impl IntoIterator<Item = u32>,
) -> u32 {
    if n_items < 2 || n < 2 {
        return 0;
    }
    let total = (tuple_count * n * (n - 1) / 2) as u64;
    let slots = (n_items * (n_items - 1) / 2) as u64;
    let mut bound = total.div_ceil(slots);
    for r in appearances {
        bound = bound.max((r as u64 * (n as u64 - 1)).div_ceil(n_items as u64 - 1));
    }
    bound as u32
}

/// Generates a design from seeded shuffles of `items`.
///
/// Identical arguments always produce an identical design.
pub fn generate_design(
    items: &[ItemId],
    n: usize,
    multiplier: f64,
    seed: u64,
) -> Result<BwsDesign, DesignError> {
    if n < 2 {
        return Err(DesignError::TupleSize(n));
    }
    if !(MULTIPLIER_LIMITS.0..=MULTIPLIER_LIMITS.1).contains(&multiplier) {
        return Err(DesignError::Multiplier(multiplier.to_string()));
    }
    let mut seen = BTreeSet::new();
    for id in items {
        if !seen.insert(id) {
            return Err(DesignError::DuplicateItems(id.clone()));
        }
    }
    if items.len() < n {
        return Err(DesignError::DesignInfeasible { items: items.len(), n });
    }
    if !(RECOMMENDED_MULTIPLIER.0..=RECOMMENDED_MULTIPLIER.1).contains(&multiplier) {
        tracing::warn!(multiplier, "tuple multiplier outside the usual 1.5..=2.0 range");
    }

    let big_n = items.len();
    let m = tuple_count(big_n, multiplier);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let slots = m * n;
    let mut order: Vec<usize> = (0..big_n).collect();
    let mut sequence = Vec::with_capacity(slots);
    let mut extra = Vec::new();
    while sequence.len() < slots {
        order.shuffle(&mut rng);
        let take = big_n.min(slots - sequence.len());
        if take < big_n {
            extra = order[..take].to_vec();
        }
        sequence.extend_from_slice(&order[..take]);
    }
    let mut tuples: Vec<Vec<usize>> = sequence.chunks(n).map(<[usize]>::to_vec).collect();

    repair_duplicates(&mut tuples, &mut rng);

    let mut pairs = PairMatrix::from_tuples(big_n, &tuples);
    let mut appearances = vec![0u32; big_n];
    for &i in &sequence {
        appearances[i] += 1;
    }
    let bound = pair_count_lower_bound(big_n, n, m, appearances.iter().copied());
    reduce_pair_counts(&mut tuples, &mut pairs, bound, &mut rng);

    for tuple in &mut tuples {
        tuple.shuffle(&mut rng);
    }

    let design_id = design_id(items, n, multiplier, seed);
    let named: Vec<Vec<ItemId>> = tuples
        .iter()
        .map(|t| t.iter().map(|&i| items[i].clone()).collect())
        .collect();
    let mut extra_items: Vec<ItemId> = extra.iter().map(|&i| items[i].clone()).collect();
    extra_items.sort();
    let mut design = BwsDesign::from_tuples(design_id, items.to_vec(), n, multiplier, seed, named);
    design.extra_appearance_items = extra_items;
    Ok(design)
}

fn design_id(items: &[ItemId], n: usize, multiplier: f64, seed: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"bws-design\0");
    hasher.update((n as u64).to_le_bytes());
    hasher.update(multiplier.to_bits().to_le_bytes());
    hasher.update(seed.to_le_bytes());
    for id in items {
        hasher.update(id.as_str().as_bytes());
        hasher.update([0]);
    }
    hex::encode(&hasher.finalize()[..6])
}

impl BwsDesign {
    /// Builds a design around explicit tuples, deriving every count. The
    /// tuples are taken as given; run [`verify_design`] to check them.
    pub fn from_tuples(
        design_id: String,
        items: Vec<ItemId>,
        n: usize,
        multiplier: f64,
        seed: u64,
        tuples: Vec<Vec<ItemId>>,
    ) -> Self {
        let tuples: Vec<BwsTuple> = tuples
            .into_iter()
            .enumerate()
            .map(|(i, item_ids)| BwsTuple {
                tuple_id: TupleId(format!("{design_id}:{i:04}")),
                item_ids,
            })
            .collect();
        let (appearance_counts, pair_map) = count_tuples(&items, &tuples);
        let pair_bound = pair_count_lower_bound(
            items.len(),
            n,
            tuples.len(),
            appearance_counts.values().copied(),
        );
        let max_pair_count = pair_map.values().copied().max().unwrap_or(0);
        Self {
            design_id,
            n,
            item_count: items.len(),
            tuple_count: tuples.len(),
            multiplier,
            seed,
            items,
            appearance_counts,
            pair_counts: pair_map
                .into_iter()
                .map(|((a, b), count)| PairCount { a, b, count })
                .collect(),
            extra_appearance_items: Vec::new(),
            pair_bound,
            max_pair_count,
            pair_target_met: max_pair_count <= pair_bound + 1,
            tuples,
        }
    }

    pub fn tuple(&self, id: &TupleId) -> Option<&BwsTuple> {
        self.tuples.iter().find(|t| &t.tuple_id == id)
    }

    /// Tuple lookup table, for repeated access.
    pub fn tuple_index(&self) -> BTreeMap<&TupleId, &BwsTuple> {
        self.tuples.iter().map(|t| (&t.tuple_id, t)).collect()
    }
}

type PairMap = BTreeMap<(ItemId, ItemId), u32>;

fn ordered(a: &ItemId, b: &ItemId) -> (ItemId, ItemId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// Appearance and pair counts straight from the tuple list. Items that never
/// appear are present with a zero count.
fn count_tuples(items: &[ItemId], tuples: &[BwsTuple]) -> (BTreeMap<ItemId, u32>, PairMap) {
    let mut appearances: BTreeMap<ItemId, u32> = items.iter().map(|i| (i.clone(), 0)).collect();
    let mut pairs = PairMap::new();
    for tuple in tuples {
        for (k, a) in tuple.item_ids.iter().enumerate() {
            *appearances.entry(a.clone()).or_default() += 1;
            for b in &tuple.item_ids[k + 1..] {
                if a != b {
                    *pairs.entry(ordered(a, b)).or_default() += 1;
                }
            }
        }
    }
    (appearances, pairs)
}

/// Swaps items across tuples until no tuple holds an item twice. Swaps keep
/// every appearance count unchanged.
fn repair_duplicates(tuples: &mut [Vec<usize>], rng: &mut ChaCha8Rng) {
    let m = tuples.len();
    for t in 0..m {
        while let Some(p) = first_duplicate(&tuples[t]) {
            let x = tuples[t][p];
            let start = rng.random_range(0..m);
            let found = (0..m)
                .map(|k| (start + k) % m)
                .filter(|&u| u != t && !tuples[u].contains(&x))
                .find_map(|u| {
                    tuples[u]
                        .iter()
                        .position(|y| !tuples[t].contains(y))
                        .map(|q| (u, q))
                });
            // Every item appears at least n times and the tuple misses at
            // least one item, so a partner tuple always exists.
            let (u, q) = found.expect("no swap partner for duplicate item");
            let y = tuples[u][q];
            tuples[u][q] = x;
            tuples[t][p] = y;
        }
    }
}

fn first_duplicate(tuple: &[usize]) -> Option<usize> {
    (1..tuple.len()).find(|&p| tuple[..p].contains(&tuple[p]))
}

struct PairMatrix {
    n_items: usize,
    counts: Vec<u32>,
}

impl PairMatrix {
    fn from_tuples(n_items: usize, tuples: &[Vec<usize>]) -> Self {
        let mut m = Self {
            n_items,
            counts: vec![0; n_items * n_items],
        };
        for t in tuples {
            for (k, &a) in t.iter().enumerate() {
                for &b in &t[k + 1..] {
                    m.add(a, b, 1);
                }
            }
        }
        m
    }

    fn get(&self, a: usize, b: usize) -> u32 {
        self.counts[a * self.n_items + b]
    }

    fn add(&mut self, a: usize, b: usize, delta: i32) {
        for idx in [a * self.n_items + b, b * self.n_items + a] {
            self.counts[idx] = (self.counts[idx] as i32 + delta) as u32;
        }
    }

    fn pairs_above(&self, level: u32) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n_items {
            for b in a + 1..self.n_items {
                if self.get(a, b) > level {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// Lexicographic cost of a pair-count change: squared excess over
/// `bound + 1`, squared excess over `bound`, then the plain square.
type Cost = (i64, i64, i64);

fn pair_cost(count: i64, bound: i64) -> Cost {
    let over_hi = (count - bound - 1).max(0);
    let over = (count - bound).max(0);
    (over_hi * over_hi, over * over, count * count)
}

fn cost_delta(before: i64, after: i64, bound: i64) -> Cost {
    let (a0, a1, a2) = pair_cost(before, bound);
    let (b0, b1, b2) = pair_cost(after, bound);
    (b0 - a0, b1 - a1, b2 - a2)
}

/// Calls `f(a, b, delta)` for every pair count changed by swapping
/// `tuples[t][p]` with `tuples[u][q]`. Items shared by both tuples keep their
/// pairs, so only the non-shared partners move; the reported pairs are
/// distinct.
fn for_each_swap_change(tuples: &[Vec<usize>], t: usize, p: usize, u: usize, q: usize, mut f: impl FnMut(usize, usize, i32)) {
    let x = tuples[t][p];
    let y = tuples[u][q];
    for &z in &tuples[t] {
        if z != x && !tuples[u].contains(&z) {
            f(x, z, -1);
            f(y, z, 1);
        }
    }
    for &w in &tuples[u] {
        if w != y && !tuples[t].contains(&w) {
            f(y, w, -1);
            f(x, w, 1);
        }
    }
}

fn swap_cost(tuples: &[Vec<usize>], t: usize, p: usize, u: usize, q: usize, pairs: &PairMatrix, bound: i64) -> Cost {
    let mut acc = (0, 0, 0);
    for_each_swap_change(tuples, t, p, u, q, |a, b, d| {
        let before = pairs.get(a, b) as i64;
        let (c0, c1, c2) = cost_delta(before, before + d as i64, bound);
        acc = (acc.0 + c0, acc.1 + c1, acc.2 + c2);
    });
    acc
}

/// Greedy local search over cross-tuple swaps. Each round visits every pair
/// above the current level and applies the first strictly improving swap
/// that moves one of its two items out of a shared tuple. The first stage targets
/// `bound + 1`, the second tries to reach `bound` itself.
fn reduce_pair_counts(tuples: &mut [Vec<usize>], pairs: &mut PairMatrix, bound: u32, rng: &mut ChaCha8Rng) {
    let m = tuples.len();
    let bound_i = bound as i64;
    for level in [bound + 1, bound] {
        for _ in 0..MAX_OPTIMIZE_ROUNDS {
            let mut hot = pairs.pairs_above(level);
            if hot.is_empty() {
                break;
            }
            hot.shuffle(rng);
            let mut improved = false;
            for (a, b) in hot {
                if pairs.get(a, b) <= level {
                    continue;
                }
                let offset = rng.random_range(0..m);
                let mut found = None;
                'search: for t in 0..m {
                    let (Some(pa), Some(pb)) = (
                        tuples[t].iter().position(|&i| i == a),
                        tuples[t].iter().position(|&i| i == b),
                    ) else {
                        continue;
                    };
                    for p in [pa, pb] {
                        let x = tuples[t][p];
                        for u in (0..m).map(|k| (k + offset) % m) {
                            if u == t || tuples[u].contains(&x) {
                                continue;
                            }
                            for q in 0..tuples[u].len() {
                                if tuples[t].contains(&tuples[u][q]) {
                                    continue;
                                }
                                if swap_cost(tuples, t, p, u, q, pairs, bound_i) < (0, 0, 0) {
                                    found = Some((t, p, u, q));
                                    break 'search;
                                }
                            }
                        }
                    }
                }
                if let Some((t, p, u, q)) = found {
                    for_each_swap_change(tuples, t, p, u, q, |i, j, d| pairs.add(i, j, d));
                    let x = tuples[t][p];
                    tuples[t][p] = tuples[u][q];
                    tuples[u][q] = x;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
    }
}

/// One broken design constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum DesignViolation {
    WrongTupleSize { tuple_id: TupleId, size: usize },
    DuplicateInTuple { tuple_id: TupleId, item_id: ItemId },
    UnknownItem { tuple_id: TupleId, item_id: ItemId },
    DuplicateTupleId { tuple_id: TupleId },
    DuplicateItemList { item_id: ItemId },
    ItemCount { declared: usize, actual: usize },
    TupleCount { declared: usize, actual: usize },
    TupleCountRule { declared: usize, expected: usize },
    AppearanceCount { item_id: ItemId, count: u32, low: u32, high: u32 },
    AppearanceTotal { total: u64, expected: u64 },
    RecordedAppearance { item_id: ItemId, recorded: u32, actual: u32 },
    RecordedPairCount { a: ItemId, b: ItemId, recorded: u32, actual: u32 },
    RecordedMaxPair { recorded: u32, actual: u32 },
    PairDiversity { max_pair_count: u32, bound: u32 },
}

impl DesignViolation {
    pub fn rule(&self) -> &'static str {
        match self {
            DesignViolation::WrongTupleSize { .. } => "wrong-tuple-size",
            DesignViolation::DuplicateInTuple { .. } => "duplicate-in-tuple",
            DesignViolation::UnknownItem { .. } => "unknown-item",
            DesignViolation::DuplicateTupleId { .. } => "duplicate-tuple-id",
            DesignViolation::DuplicateItemList { .. } => "duplicate-item-list",
            DesignViolation::ItemCount { .. } => "item-count",
            DesignViolation::TupleCount { .. } => "tuple-count",
            DesignViolation::TupleCountRule { .. } => "tuple-count-rule",
            DesignViolation::AppearanceCount { .. } => "appearance-count",
            DesignViolation::AppearanceTotal { .. } => "appearance-total",
            DesignViolation::RecordedAppearance { .. } => "recorded-appearance",
            DesignViolation::RecordedPairCount { .. } => "recorded-pair-count",
            DesignViolation::RecordedMaxPair { .. } => "recorded-max-pair",
            DesignViolation::PairDiversity { .. } => "pair-diversity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DesignVerdict {
    pub violations: Vec<DesignViolation>,
}

impl DesignVerdict {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn rules(&self) -> BTreeSet<&'static str> {
        self.violations.iter().map(DesignViolation::rule).collect()
    }
}

/// Recomputes every count from the tuples and checks all design constraints
/// against the declared metadata.
pub fn verify_design(design: &BwsDesign) -> DesignVerdict {
    let mut v = Vec::new();
    let known: BTreeSet<&ItemId> = design.items.iter().collect();
    if known.len() != design.items.len() {
        let mut seen = BTreeSet::new();
        for id in &design.items {
            if !seen.insert(id) {
                v.push(DesignViolation::DuplicateItemList { item_id: id.clone() });
            }
        }
    }
    if design.item_count != design.items.len() {
        v.push(DesignViolation::ItemCount {
            declared: design.item_count,
            actual: design.items.len(),
        });
    }
    if design.tuple_count != design.tuples.len() {
        v.push(DesignViolation::TupleCount {
            declared: design.tuple_count,
            actual: design.tuples.len(),
        });
    }
    let expected_m = tuple_count(design.item_count, design.multiplier);
    if design.tuple_count != expected_m {
        v.push(DesignViolation::TupleCountRule {
            declared: design.tuple_count,
            expected: expected_m,
        });
    }

    let mut tuple_ids = BTreeSet::new();
    for tuple in &design.tuples {
        if !tuple_ids.insert(&tuple.tuple_id) {
            v.push(DesignViolation::DuplicateTupleId {
                tuple_id: tuple.tuple_id.clone(),
            });
        }
        if tuple.item_ids.len() != design.n {
            v.push(DesignViolation::WrongTupleSize {
                tuple_id: tuple.tuple_id.clone(),
                size: tuple.item_ids.len(),
            });
        }
        let mut in_tuple = BTreeSet::new();
        for id in &tuple.item_ids {
            if !known.contains(id) {
                v.push(DesignViolation::UnknownItem {
                    tuple_id: tuple.tuple_id.clone(),
                    item_id: id.clone(),
                });
            }
            if !in_tuple.insert(id) {
                v.push(DesignViolation::DuplicateInTuple {
                    tuple_id: tuple.tuple_id.clone(),
                    item_id: id.clone(),
                });
            }
        }
    }

    let (appearances, pair_map) = count_tuples(&design.items, &design.tuples);
    if design.item_count > 0 {
        let slots = (design.tuple_count * design.n) as u64;
        let n_items = design.item_count as u64;
        let low = (slots / n_items) as u32;
        let high = slots.div_ceil(n_items) as u32;
        for id in &design.items {
            let count = appearances[id];
            if count < low || count > high {
                v.push(DesignViolation::AppearanceCount {
                    item_id: id.clone(),
                    count,
                    low,
                    high,
                });
            }
        }
        let total: u64 = appearances.values().map(|&c| c as u64).sum();
        if total != slots {
            v.push(DesignViolation::AppearanceTotal { total, expected: slots });
        }
    }
    for (id, &actual) in &appearances {
        let recorded = design.appearance_counts.get(id).copied().unwrap_or(0);
        if recorded != actual {
            v.push(DesignViolation::RecordedAppearance {
                item_id: id.clone(),
                recorded,
                actual,
            });
        }
    }
    let recorded_pairs: PairMap = design
        .pair_counts
        .iter()
        .map(|p| (ordered(&p.a, &p.b), p.count))
        .collect();
    for key in recorded_pairs.keys().chain(pair_map.keys()).collect::<BTreeSet<_>>() {
        let recorded = recorded_pairs.get(key).copied().unwrap_or(0);
        let actual = pair_map.get(key).copied().unwrap_or(0);
        if recorded != actual {
            v.push(DesignViolation::RecordedPairCount {
                a: key.0.clone(),
                b: key.1.clone(),
                recorded,
                actual,
            });
        }
    }

    let max_pair = pair_map.values().copied().max().unwrap_or(0);
    if max_pair != design.max_pair_count {
        v.push(DesignViolation::RecordedMaxPair {
            recorded: design.max_pair_count,
            actual: max_pair,
        });
    }
    let bound = pair_count_lower_bound(
        design.item_count,
        design.n,
        design.tuple_count,
        appearances.values().copied(),
    );
    if design.pair_target_met && max_pair > bound + 1 {
        v.push(DesignViolation::PairDiversity {
            max_pair_count: max_pair,
            bound,
        });
    }

    DesignVerdict { violations: v }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<ItemId> {
        (0..n).map(|i| ItemId(format!("item-{i:03}"))).collect()
    }

    #[test]
    fn tuple_count_rounds_up_exactly() {
        assert_eq!(tuple_count(10, 2.0), 20);
        assert_eq!(tuple_count(10, 1.5), 15);
        assert_eq!(tuple_count(7, 1.5), 11);
        assert_eq!(tuple_count(10, 1.1), 11);
        assert_eq!(tuple_count(3, 1.75), 6);
    }

    #[test]
    fn divisible_cases_have_equal_appearances() {
        let d = generate_design(&ids(10), 4, 2.0, 7).unwrap();
        assert_eq!(d.tuple_count, 20);
        assert!(d.appearance_counts.values().all(|&c| c == 8));
        assert!(d.extra_appearance_items.is_empty());

        let d = generate_design(&ids(10), 4, 1.5, 7).unwrap();
        assert_eq!(d.tuple_count, 15);
        assert!(d.appearance_counts.values().all(|&c| c == 6));
    }

    #[test]
    fn uneven_case_splits_floor_and_ceil() {
        let d = generate_design(&ids(7), 4, 1.5, 3).unwrap();
        assert_eq!(d.tuple_count, 11);
        let sevens: Vec<&ItemId> = d.appearance_counts.iter().filter(|(_, &c)| c == 7).map(|(i, _)| i).collect();
        let sixes = d.appearance_counts.values().filter(|&&c| c == 6).count();
        assert_eq!(sevens.len(), 2);
        assert_eq!(sixes, 5);
        assert_eq!(d.extra_appearance_items, sevens.into_iter().cloned().collect::<Vec<_>>());
        assert!(verify_design(&d).is_valid());
    }

    #[test]
    fn errors() {
        assert_eq!(
            generate_design(&ids(3), 4, 2.0, 0),
            Err(DesignError::DesignInfeasible { items: 3, n: 4 })
        );
        let mut dup = ids(5);
        dup.push(dup[0].clone());
        assert_eq!(generate_design(&dup, 4, 2.0, 0), Err(DesignError::DuplicateItems(dup[0].clone())));
        assert!(matches!(generate_design(&ids(5), 1, 2.0, 0), Err(DesignError::TupleSize(1))));
        assert!(matches!(generate_design(&ids(5), 2, 0.5, 0), Err(DesignError::Multiplier(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_design(&ids(37), 5, 1.75, 99).unwrap();
        let b = generate_design(&ids(37), 5, 1.75, 99).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = generate_design(&ids(37), 5, 1.75, 100).unwrap();
        assert_ne!(a.tuples, c.tuples);
    }

    #[test]
    fn tuple_size_equal_to_item_count() {
        let d = generate_design(&ids(4), 4, 2.0, 1).unwrap();
        assert_eq!(d.tuple_count, 8);
        assert_eq!(d.max_pair_count, 8);
        assert!(verify_design(&d).is_valid());
    }

    #[test]
    fn duplicate_in_tuple_is_flagged() {
        let mut d = generate_design(&ids(10), 4, 2.0, 5).unwrap();
        d.tuples[3].item_ids[1] = d.tuples[3].item_ids[0].clone();
        let verdict = verify_design(&d);
        assert!(verdict.rules().contains("duplicate-in-tuple"));
    }

    #[test]
    fn deleting_a_tuple_breaks_appearances_of_its_items() {
        let mut d = generate_design(&ids(10), 4, 2.0, 5).unwrap();
        let removed = d.tuples.remove(0);
        let verdict = verify_design(&d);
        let mut flagged: Vec<&ItemId> = verdict
            .violations
            .iter()
            .filter_map(|v| match v {
                DesignViolation::AppearanceCount { item_id, count: 7, low: 8, high: 8 } => Some(item_id),
                _ => None,
            })
            .collect();
        flagged.sort();
        let mut expected: Vec<&ItemId> = removed.item_ids.iter().collect();
        expected.sort();
        assert_eq!(flagged, expected);
        assert!(verdict.rules().contains("tuple-count"));
    }

    #[test]
    fn lower_bound_examples() {
        // 20 tuples of 4 over 10 items: 120 pairs over 45 slots, 8 appearances x 3 partners over 9.
        assert_eq!(pair_count_lower_bound(10, 4, 20, [8; 10]), 3);
        assert_eq!(pair_count_lower_bound(4, 4, 8, [8; 4]), 8);
        assert_eq!(pair_count_lower_bound(1, 2, 0, [0]), 0);
    }
}
