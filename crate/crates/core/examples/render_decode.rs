//! Renders training targets for a simulated frame and decodes them back.

use centertrack::decode::{decode_detections, select_top};
use centertrack::grid::GridSpec;
use centertrack::sim::{generate_scenario, ScenarioConfig};
use centertrack::targets::render_targets;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::default_scenario(7);
    cfg.num_frames = 2;
    cfg.random_objects = 12;
    let frames = generate_scenario(&cfg)?;
    let spec = GridSpec::square(cfg.extent, 0.4)?;
    let frame = &frames[1];

    let render = render_targets(&frame.objects, &spec, cfg.classes.len(), 0.1)?;
    let peaks = render.maps.heatmap.values().iter().filter(|v| **v > 0.0).count();
    println!(
        "{} objects, {} heatmap cells set, {} out of range, {} collisions",
        frame.objects.len(),
        peaks,
        render.skipped_out_of_range,
        render.collisions.len()
    );

    let out = decode_detections(&render.maps, 500, 0.1);
    let dets = select_top(out.detections, 0.2, 500);
    let mut worst: f64 = 0.0;
    for o in &frame.objects {
        let d = dets
            .iter()
            .map(|d| (d.bbox.cx - o.bbox.cx).hypot(d.bbox.cy - o.bbox.cy))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
    }
    println!("decoded {} boxes, worst center error {:.2e} m", dets.len(), worst);
    Ok(())
}
