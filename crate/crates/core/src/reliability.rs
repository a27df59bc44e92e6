//! Split-half reliability of best-worst scores.
//!
//! Each trial splits the judgments of every tuple into two random halves,
//! scores each half on its own and rank-correlates the two score lists.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::BwsDesign;
use crate::model::{CampaignId, ItemId, TupleId};
use crate::scoring::{compute_partial_scores, Judgment, JudgmentError};
use crate::stats::spearman;

pub const DEFAULT_TRIALS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    #[serde(default)]
    pub campaign_id: Option<CampaignId>,
    pub trials: usize,
    pub correlations: Vec<f64>,
    pub mean_shr: f64,
    pub seed: u64,
    /// Trials where one half had constant scores; they count as 0.
    #[serde(default)]
    pub undefined_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReliabilityError {
    #[error("tuple `{0}` has a single judgment and cannot be split")]
    InsufficientRedundancy(TupleId),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Judgment(#[from] JudgmentError),
}

/// Runs `trials` random splits. Trial `t` uses ChaCha stream `t` of `seed`,
/// so the report depends only on the inputs.
pub fn split_half_reliability(
    judgments: &[Judgment],
    design: &BwsDesign,
    trials: usize,
    seed: u64,
) -> Result<ReliabilityReport, ReliabilityError> {
    if trials == 0 {
        return Err(ReliabilityError::NoTrials);
    }
    compute_partial_scores(judgments, design)?;

    let mut by_tuple: BTreeMap<&TupleId, Vec<&Judgment>> = BTreeMap::new();
    for j in judgments {
        by_tuple.entry(&j.tuple_id).or_default().push(j);
    }
    for (tuple, group) in &mut by_tuple {
        if group.len() < 2 {
            return Err(ReliabilityError::InsufficientRedundancy((*tuple).clone()));
        }
        group.sort_by(|a, b| a.judgment_id.cmp(&b.judgment_id));
    }
    let groups: Vec<Vec<&Judgment>> = by_tuple.into_values().collect();

    let outcomes: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let (first, second) = split(&groups, &mut rng);
            half_correlation(&first, &second, design)
        })
        .collect();

    let undefined_trials = outcomes.iter().filter(|c| c.is_none()).count();
    let correlations: Vec<f64> = outcomes.into_iter().map(|c| c.unwrap_or(0.0)).collect();
    let mean_shr = correlations.iter().sum::<f64>() / trials as f64;
    Ok(ReliabilityReport {
        campaign_id: None,
        trials,
        correlations,
        mean_shr,
        seed,
        undefined_trials,
    })
}

fn split(groups: &[Vec<&Judgment>], rng: &mut ChaCha8Rng) -> (Vec<Judgment>, Vec<Judgment>) {
    let mut first = Vec::new();
    let mut second = Vec::new();
    for group in groups {
        let mut shuffled = group.clone();
        shuffled.shuffle(rng);
        let half = shuffled.len() / 2;
        first.extend(shuffled[..half].iter().map(|j| (*j).clone()));
        second.extend(shuffled[half..2 * half].iter().map(|j| (*j).clone()));
        if shuffled.len() % 2 == 1 {
            let extra = (*shuffled[2 * half]).clone();
            if rng.random_bool(0.5) {
                first.push(extra);
            } else {
                second.push(extra);
            }
        }
    }
    (first, second)
}

fn half_correlation(first: &[Judgment], second: &[Judgment], design: &BwsDesign) -> Option<f64> {
    let a = compute_partial_scores(first, design).expect("validated judgments");
    let b = compute_partial_scores(second, design).expect("validated judgments");
    let b: BTreeMap<&ItemId, f64> = b.iter().map(|s| (&s.item_id, s.normalized)).collect();
    let (x, y): (Vec<f64>, Vec<f64>) = a
        .iter()
        .filter_map(|s| b.get(&s.item_id).map(|&other| (s.normalized, other)))
        .unzip();
    spearman(&x, &y)
}
