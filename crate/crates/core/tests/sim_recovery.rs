use sevscale::sim::{simulate_judgments, LatentWorld};
use sevscale::stats::spearman;
use sevscale::{compute_scores, generate_design};

fn recovery(annotators: usize, sigma: f64, seed: u64) -> f64 {
    let world = LatentWorld::uniform(40, sigma, seed);
    let design = generate_design(&world.item_ids(), 4, 2.0, seed).unwrap();
    let judgments = simulate_judgments(&world, &design, annotators).unwrap();
    let latent = world.severity_map();
    let scores = compute_scores(&judgments, &design).unwrap();
    let recovered: Vec<f64> = scores.iter().map(|s| s.normalized).collect();
    let truth: Vec<f64> = scores.iter().map(|s| latent[&s.item_id]).collect();
    spearman(&recovered, &truth).unwrap()
}

#[test]
fn recovery_improves_with_redundancy() {
    for seed in 0..8 {
        let by_annotators: Vec<f64> = [1, 2, 4, 8].iter().map(|&a| recovery(a, 0.15, seed)).collect();
        for pair in by_annotators.windows(2) {
            assert!(pair[1] >= pair[0] - 0.02, "seed {seed}: {by_annotators:?}");
        }
    }
}

#[test]
fn same_seed_same_judgments() {
    let world = LatentWorld::uniform(30, 0.1, 9);
    let design = generate_design(&world.item_ids(), 5, 1.5, 9).unwrap();
    assert_eq!(simulate_judgments(&world, &design, 3).unwrap(), simulate_judgments(&world, &design, 3).unwrap());
}
