//! Rescores noisy proposals with the second stage and compares scorers.

use centertrack::grid::GridSpec;
use centertrack::refine::{refine_detections, OracleScorer, RandomProjectionScorer, SURFACE_POINTS};
use centertrack::sim::{
    generate_scenario, perturb_detections, sample_points_and_encode, NoiseModel, ScenarioConfig,
    OCCUPANCY_CHANNELS,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::default_scenario(3);
    cfg.num_frames = 1;
    cfg.random_objects = 8;
    let frames = generate_scenario(&cfg)?;
    let noise = NoiseModel {
        center_sigma: 0.3,
        false_positive_rate: 4.0,
        tp_score: [0.3, 0.9],
        ..NoiseModel::default()
    };
    let dets = perturb_detections(&frames, &noise, &cfg.classes, cfg.extent, 11)?;
    let spec = GridSpec::square(cfg.extent, 0.8)?;
    let encoded = sample_points_and_encode(&frames[0].objects, 200, 500, &spec, 5);

    let truth = frames[0].objects.iter().map(|o| o.bbox).collect();
    let oracle = refine_detections(&dets[0].detections, &encoded.features, &OracleScorer::new(truth))?;
    println!("oracle scorer:");
    for r in &oracle {
        println!(
            "  first {:.3} second {:.3} fused {:.3}",
            r.base.score, r.stage2_score, r.fused_score
        );
    }

    let learned = RandomProjectionScorer::new(9, SURFACE_POINTS * OCCUPANCY_CHANNELS);
    let random = refine_detections(&dets[0].detections, &encoded.features, &learned)?;
    let mean = random.iter().map(|r| r.stage2_score).sum::<f64>() / random.len().max(1) as f64;
    println!("random projection scorer: mean second-stage score {mean:.3}");
    Ok(())
}
