//! Synthetic annotators with known latent severities.
//!
//! Each simulated annotator perceives `latent + noise` for every item of a
//! tuple, picks the maximum as most abusive and the minimum as least abusive,
//! and flips a seeded coin between exactly tied items.

use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::BwsDesign;
use crate::model::{AnnotatorId, Item, ItemId, JudgmentId};
use crate::scoring::Judgment;
use crate::Timestamp;

/// Noise draws beyond this many standard deviations are redrawn.
const NOISE_TRUNCATION: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentItem {
    pub item_id: ItemId,
    pub severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentWorld {
    pub items: Vec<LatentItem>,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("design item `{0}` has no latent severity")]
    UnknownItem(ItemId),
    #[error("noise level must be finite and non-negative")]
    Sigma,
}

fn sim_epoch() -> Timestamp {
    Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap()
}

impl LatentWorld {
    /// `n_items` items with severities drawn uniformly from `[0, 1)`.
    pub fn uniform(n_items: usize, sigma: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items = (0..n_items)
            .map(|i| LatentItem {
                item_id: ItemId(format!("item-{i:04}")),
                severity: rng.random::<f64>(),
            })
            .collect();
        Self { items, sigma, seed }
    }

    pub fn with_severities(severities: &[(ItemId, f64)], sigma: f64, seed: u64) -> Self {
        Self {
            items: severities
                .iter()
                .map(|(item_id, severity)| LatentItem {
                    item_id: item_id.clone(),
                    severity: *severity,
                })
                .collect(),
            sigma,
            seed,
        }
    }

    pub fn item_ids(&self) -> Vec<ItemId> {
        self.items.iter().map(|i| i.item_id.clone()).collect()
    }

    pub fn severity_map(&self) -> BTreeMap<ItemId, f64> {
        self.items.iter().map(|i| (i.item_id.clone(), i.severity)).collect()
    }

    /// Placeholder texts so simulated campaigns can flow through the same
    /// exports as real ones.
    pub fn as_items(&self) -> Vec<Item> {
        self.items
            .iter()
            .map(|i| Item {
                item_id: i.item_id.clone(),
                text: format!("synthetic text {}", i.item_id),
                source: "simulation".to_owned(),
                collected_at: sim_epoch(),
            })
            .collect()
    }
}

/// `annotators_per_tuple` judgments for every tuple of `design`.
///
/// Tuple `i` draws from its own ChaCha stream `i + 1` of the world seed, so
/// the output does not depend on evaluation order.
pub fn simulate_judgments(
    world: &LatentWorld,
    design: &BwsDesign,
    annotators_per_tuple: usize,
) -> Result<Vec<Judgment>, SimError> {
    if !world.sigma.is_finite() || world.sigma < 0.0 {
        return Err(SimError::Sigma);
    }
    let latent = world.severity_map();
    let noise = Normal::new(0.0, world.sigma).map_err(|_| SimError::Sigma)?;

    let per_tuple: Vec<Result<Vec<Judgment>, SimError>> = design
        .tuples
        .par_iter()
        .enumerate()
        .map(|(index, tuple)| {
            let severities: Vec<f64> = tuple
                .item_ids
                .iter()
                .map(|id| latent.get(id).copied().ok_or_else(|| SimError::UnknownItem(id.clone())))
                .collect::<Result<_, _>>()?;
            let mut rng = ChaCha8Rng::seed_from_u64(world.seed);
            rng.set_stream(index as u64 + 1);
            Ok((0..annotators_per_tuple)
                .map(|k| {
                    let perceived: Vec<f64> = severities.iter().map(|s| s + draw(&noise, world.sigma, &mut rng)).collect();
                    let (best, worst) = pick_extremes(&perceived, &mut rng);
                    let annotator = AnnotatorId(format!("sim-{k:02}"));
                    Judgment {
                        judgment_id: JudgmentId(format!("{}/{}", tuple.tuple_id, annotator)),
                        tuple_id: tuple.tuple_id.clone(),
                        annotator_id: annotator,
                        best: tuple.item_ids[best].clone(),
                        worst: tuple.item_ids[worst].clone(),
                        submitted_at: sim_epoch()
                            + chrono::Duration::seconds((index * annotators_per_tuple + k) as i64),
                    }
                })
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(design.tuples.len() * annotators_per_tuple);
    for chunk in per_tuple {
        out.extend(chunk?);
    }
    Ok(out)
}

fn draw(noise: &Normal<f64>, sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    loop {
        let e = noise.sample(rng);
        if e.abs() <= NOISE_TRUNCATION * sigma {
            return e;
        }
    }
}

/// Index of the perceived maximum and of the minimum among the rest; exact
/// ties are broken uniformly at random.
fn pick_extremes(perceived: &[f64], rng: &mut ChaCha8Rng) -> (usize, usize) {
    let max = perceived.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let top: Vec<usize> = (0..perceived.len()).filter(|&i| perceived[i] == max).collect();
    let best = *top.choose(rng).expect("non-empty tuple");
    let rest: Vec<usize> = (0..perceived.len()).filter(|&i| i != best).collect();
    let min = rest.iter().map(|&i| perceived[i]).fold(f64::INFINITY, f64::min);
    let bottom: Vec<usize> = rest.into_iter().filter(|&i| perceived[i] == min).collect();
    let worst = *bottom.choose(rng).expect("tuple of at least two");
    (best, worst)
}

/// Everything a simulation run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub world: LatentWorld,
    pub design: BwsDesign,
    pub judgments: Vec<Judgment>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::generate_design;
    use crate::scoring::{compute_scores, rank_items};

    #[test]
    fn noiseless_annotators_pick_true_extremes() {
        let world = LatentWorld::uniform(20, 0.0, 11);
        let design = generate_design(&world.item_ids(), 4, 2.0, 11).unwrap();
        let latent = world.severity_map();
        let judgments = simulate_judgments(&world, &design, 3).unwrap();
        assert_eq!(judgments.len(), design.tuple_count * 3);
        for j in &judgments {
            let tuple = design.tuple(&j.tuple_id).unwrap();
            let max = tuple.item_ids.iter().max_by(|a, b| latent[*a].total_cmp(&latent[*b])).unwrap();
            let min = tuple.item_ids.iter().min_by(|a, b| latent[*a].total_cmp(&latent[*b])).unwrap();
            assert_eq!((&j.best, &j.worst), (max, min));
        }
    }

    #[test]
    fn noiseless_extremes_score_at_the_bounds() {
        let world = LatentWorld::uniform(30, 0.0, 5);
        let design = generate_design(&world.item_ids(), 4, 2.0, 5).unwrap();
        let judgments = simulate_judgments(&world, &design, 1).unwrap();
        let scores = compute_scores(&judgments, &design).unwrap();
        let ranked = rank_items(&scores);
        let latent = world.severity_map();
        let top = world.items.iter().max_by(|a, b| a.severity.total_cmp(&b.severity)).unwrap();
        let bottom = world.items.iter().min_by(|a, b| a.severity.total_cmp(&b.severity)).unwrap();
        let score = |id: &ItemId| scores.iter().find(|s| &s.item_id == id).unwrap().raw;
        assert_eq!(score(&top.item_id), 1.0);
        assert_eq!(score(&bottom.item_id), -1.0);
        assert_eq!(ranked[0].raw, 1.0);
        assert!(latent[&ranked[0].item_id] > 0.5);
    }

    #[test]
    fn exact_ties_split_evenly() {
        let ids: Vec<ItemId> = ["a", "b", "c", "d"].map(ItemId::from).to_vec();
        let world = LatentWorld::with_severities(
            &[(ids[0].clone(), 0.9), (ids[1].clone(), 0.9), (ids[2].clone(), 0.1), (ids[3].clone(), 0.0)],
            0.0,
            3,
        );
        let design = BwsDesign::from_tuples("tie".into(), ids.clone(), 4, 1.0, 0, vec![ids.clone()]);
        let judgments = simulate_judgments(&world, &design, 4000).unwrap();
        let a_best = judgments.iter().filter(|j| j.best == ids[0]).count();
        let b_best = judgments.iter().filter(|j| j.best == ids[1]).count();
        assert_eq!(a_best + b_best, 4000);
        assert!((a_best as f64 / 4000.0 - 0.5).abs() < 0.03, "a chosen {a_best} times");
        assert!(judgments.iter().all(|j| j.worst == ids[3]));
    }

    #[test]
    fn deterministic_and_rejects_unknown_items() {
        let world = LatentWorld::uniform(12, 0.1, 9);
        let design = generate_design(&world.item_ids(), 3, 1.5, 9).unwrap();
        assert_eq!(
            simulate_judgments(&world, &design, 2).unwrap(),
            simulate_judgments(&world, &design, 2).unwrap()
        );
        let other = LatentWorld::uniform(3, 0.1, 9);
        assert!(matches!(simulate_judgments(&other, &design, 2), Err(SimError::UnknownItem(_))));
        let bad = LatentWorld { sigma: -1.0, ..world };
        assert_eq!(simulate_judgments(&bad, &design, 2), Err(SimError::Sigma));
    }
}
