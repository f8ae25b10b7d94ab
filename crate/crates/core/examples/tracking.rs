//! Tracks noisy detections with greedy velocity-compensated matching.

use std::collections::{HashMap, HashSet};

use centertrack::sim::{generate_scenario, perturb_detections, NoiseModel, ScenarioConfig};
use centertrack::tracker::{Tracker, TrackerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::default_scenario(21);
    cfg.num_frames = 40;
    cfg.random_objects = 10;
    let frames = generate_scenario(&cfg)?;
    let noise = NoiseModel {
        center_sigma: 0.1,
        miss_probability: 0.1,
        ..NoiseModel::default()
    };
    let dets = perturb_detections(&frames, &noise, &cfg.classes, cfg.extent, 1)?;

    let mut tracker = Tracker::new(TrackerConfig::new(vec![4.0, 6.0, 1.0], 3)?)?;
    let mut lifetimes: HashMap<u64, usize> = HashMap::new();
    for frame in &dets {
        for t in tracker.step(&frame.detections).iter().filter(|t| t.is_active()) {
            *lifetimes.entry(t.id).or_default() += 1;
        }
    }
    let objects: HashSet<u64> = frames
        .iter()
        .flat_map(|f| f.objects.iter().map(|o| o.object_id))
        .collect();
    let longest = lifetimes.values().max().copied().unwrap_or(0);
    println!(
        "{} objects, {} track ids, longest track {} frames",
        objects.len(),
        lifetimes.len(),
        longest
    );
    Ok(())
}
