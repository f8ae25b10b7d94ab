//! Distance-threshold AP and CLEAR-MOT on simulated detections and tracks.

use centertrack::metrics::{clear_mot, evaluate_detections, MotObject, AP_THRESHOLDS};
use centertrack::sim::{generate_scenario, perturb_detections, NoiseModel, ScenarioConfig};
use centertrack::tracker::{Tracker, TrackerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::default_scenario(0);
    let frames = generate_scenario(&cfg)?;
    let gts: Vec<_> = frames.iter().map(|f| f.objects.clone()).collect();

    for sigma in [0.0, 0.2, 0.5] {
        let noise = NoiseModel {
            center_sigma: sigma,
            ..NoiseModel::default()
        };
        let dets = perturb_detections(&frames, &noise, &cfg.classes, cfg.extent, 1)?;
        let dets: Vec<_> = dets.into_iter().map(|f| f.detections).collect();
        let ap = evaluate_detections(&dets, &gts, cfg.classes.len(), &AP_THRESHOLDS);

        let mut tracker = Tracker::new(TrackerConfig::new(vec![4.0, 6.0, 1.0], 3)?)?;
        let preds: Vec<Vec<MotObject>> = dets
            .iter()
            .map(|d| tracker.step(d).iter().filter(|t| t.is_active()).map(MotObject::from).collect())
            .collect();
        let truth: Vec<Vec<MotObject>> = gts.iter().map(|g| g.iter().map(MotObject::from).collect()).collect();
        let mot = clear_mot(&preds, &truth, 2.0);
        println!(
            "sigma {sigma:.1}: mAP {:.3} MOTA {:.3} ids {}",
            ap.map.unwrap_or(f64::NAN),
            mot.mota.unwrap_or(f64::NAN),
            mot.counts.ids
        );
    }
    Ok(())
}
