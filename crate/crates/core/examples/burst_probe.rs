use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skillseries::data::{synth_dataset, synth_trial, KinematicSeries, ScoreTarget, Task};
use skillseries::features::dct_features;
use skillseries::highlights::impact_curve;
use skillseries::pipeline::{FamilyParams, PipelineHyper, TrainedPipeline};

fn run(l: usize, q: usize, k_pca: usize, collapse: f64, noise: f64) -> (usize, f64) {
    let mut hits = 0;
    let mut min_margin = f64::INFINITY;
    for seed in 0..20u64 {
        let ds = synth_dataset(8, 3, Task::Suturing, 4, l, 900 + seed).unwrap();
        let rows: Vec<Vec<f64>> = ds.trials().iter()
            .map(|t| dct_features(&t.series, q).unwrap().values).collect();
        let scores: Vec<f64> = ds.trials().iter().map(|t| t.labels.grs as f64).collect();
        let pipeline = TrainedPipeline::fit(&rows, &scores, ScoreTarget::Grs,
            FamilyParams::Dct { q },
            PipelineHyper { k_pca, c: 1.0, epsilon: 0.1 }).unwrap();
        let clean = synth_trial(1.0, Task::Suturing, 4, l, 7777 + seed).unwrap();
        let b0 = l / 2;
        let b1 = b0 + 100;
        let mut trial = clean.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let channels: Vec<Vec<f64>> = trial.series.channels().iter().map(|ch| {
            ch.iter().enumerate().map(|(t, v)| {
                if (b0..b1).contains(&t) { v * collapse + rng.gen_range(-noise..noise) } else { *v }
            }).collect()
        }).collect();
        trial.series = KinematicSeries::new(channels, 30.0).unwrap();
        let curve = impact_curve(&trial, &pipeline, ScoreTarget::Grs, 100, 25).unwrap();
        let overlap = |p: usize| p < b1 && p + 100 > b0;
        let (argmax, _) = curve.positions.iter().zip(&curve.impacts)
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap()).unwrap();
        if overlap(*argmax) { hits += 1; }
        let best_in: f64 = curve.positions.iter().zip(&curve.impacts)
            .filter(|(p, _)| overlap(**p)).map(|(_, i)| i.abs()).fold(0.0, f64::max);
        let best_out: f64 = curve.positions.iter().zip(&curve.impacts)
            .filter(|(p, _)| !overlap(**p)).map(|(_, i)| i.abs()).fold(0.0, f64::max);
        min_margin = min_margin.min(best_in / best_out);
    }
    (hits, min_margin)
}

fn main() {
    for (l, q, k_pca, collapse, noise) in [
        (1000usize, 20, 6, 0.4, 1.0), (1000, 30, 6, 0.4, 1.0), (1000, 20, 6, 0.3, 1.2), (1200, 20, 6, 0.4, 1.0), (1000, 20, 8, 0.4, 1.0),
    ] {
        let (hits, margin) = run(l, q, k_pca, collapse, noise);
        println!("L={l} q={q} k={k_pca} collapse={collapse} noise={noise}: {hits}/20, worst in/out {margin:.2}");
    }
}
