// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use culvert_core::inspect::{DefectClass, Pose};
use culvert_core::orchestrator::{run_pipeline, RunConfig};
use culvert_core::sim::{
    field_65ft, generate_scenario, greedy_match, lab_60ft, preset_by_name, replay, score_run, Difficulty, Scenario,
    CLASS_FREQUENCIES,
};

#[test]
fn mean_planted_count_over_seeds() {
    let total: usize = (0..1000u64).map(|s| generate_scenario(s, 18.3, 2.0, Difficulty::Easy).defects.len()).sum();
    let mean = total as f64 / 1000.0;
    assert!((mean - 3.66).abs() <= 0.2, "mean {mean}");
}

#[test]
fn class_mix_follows_frequencies() {
    let mut counts = [0f64; 8];
    for s in 0..3000u64 {
        for d in generate_scenario(s, 30.0, 3.0, Difficulty::Moderate).defects {
            counts[d.class.index().unwrap()] += 1.0;
        }
    }
    let n: f64 = counts.iter().sum();
    let total: f64 = CLASS_FREQUENCIES.iter().map(|f| *f as f64).sum();
    let chi2: f64 = counts
        .iter()
        .zip(CLASS_FREQUENCIES)
        .map(|(o, f)| {
            let e = n * f as f64 / total;
            (o - e).powi(2) / e
        })
        .sum();
    // 99.9th percentile of chi-square with 7 degrees of freedom
    assert!(chi2 < 24.32, "chi2 {chi2} over {n} defects");
}

#[test]
fn scenario_files_round_trip() {
    for s in [lab_60ft(), field_65ft(), generate_scenario(9, 25.0, 4.0, Difficulty::Hard)] {
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }
    assert_eq!(preset_by_name("lab-60ft").unwrap(), lab_60ft());
    assert!(preset_by_name("nope").is_err());
}

fn max_matching(pred: &[(DefectClass, Pose)], truth: &[(DefectClass, Pose)], radius: f64) -> usize {
    fn go(i: usize, used: &mut Vec<bool>, pred: &[(DefectClass, Pose)], truth: &[(DefectClass, Pose)], radius: f64) -> usize {
        if i == pred.len() {
            return 0;
        }
        let mut best = go(i + 1, used, pred, truth, radius);
        for j in 0..truth.len() {
            let (p, t) = (&pred[i], &truth[j]);
            let d = ((p.1.chainage - t.1.chainage).powi(2)
                + (p.1.lateral - t.1.lateral).powi(2)
                + (p.1.vertical - t.1.vertical).powi(2))
            .sqrt();
            if !used[j] && p.0 == t.0 && d <= radius {
                used[j] = true;
                best = best.max(1 + go(i + 1, used, pred, truth, radius));
                used[j] = false;
            }
        }
        best
    }
    go(0, &mut vec![false; truth.len()], pred, truth, radius)
}

#[test]
fn greedy_matching_is_maximal_for_separated_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let radius = 0.4;
    for _ in 0..500 {
        let nt = rng.random_range(0..=8);
        let truth: Vec<(DefectClass, Pose)> = (0..nt)
            .map(|i| {
                let class = DefectClass::from_index(rng.random_range(1..=3)).unwrap();
                (class, Pose::at(i as f64 + rng.random_range(0.0..0.1), 0.0, 0.4))
            })
            .collect();
        let np = rng.random_range(0..=8);
        let pred: Vec<(DefectClass, Pose)> = (0..np)
            .map(|_| {
                let class = DefectClass::from_index(rng.random_range(1..=3)).unwrap();
                let c = rng.random_range(0.0..nt.max(1) as f64);
                (class, Pose::at(c, rng.random_range(-0.1..0.1), 0.4))
            })
            .collect();
        let greedy = greedy_match(&pred, &truth, radius);
        assert_eq!(greedy.len(), max_matching(&pred, &truth, radius));
        let mut ts: Vec<usize> = greedy.iter().map(|p| p.1).collect();
        ts.sort();
        ts.dedup();
        assert_eq!(ts.len(), greedy.len());
    }
}

#[test]
fn noiseless_runs_recover_every_defect() {
    for seed in 0..5u64 {
        let s = generate_scenario(seed, 20.0, 3.0, Difficulty::Moderate);
        let out = run_pipeline(&s, &RunConfig::default(), false).unwrap();
        let score = score_run(&out.report, &s, 0.5);
        assert_eq!(score.recall, 1.0, "seed {seed}");
        assert_eq!(score.precision, 1.0, "seed {seed}");
        assert_eq!(score.record_count_error, 0, "seed {seed}");
    }
}

#[test]
fn replay_is_deterministic() {
    let s = generate_scenario(4, 6.0, 5.0, Difficulty::Easy);
    let a: Vec<_> = replay(&s, false).map(|f| (f.frame, f.truth)).collect();
    let b: Vec<_> = replay(&s, false).map(|f| (f.frame, f.truth)).collect();
    assert_eq!(a, b);
}
