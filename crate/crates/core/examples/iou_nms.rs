//! Rotated-box IoU and class-wise NMS on a handful of overlapping boxes.

use std::f64::consts::FRAC_PI_4;

use centertrack::decode::Detection;
use centertrack::geometry::{bev_iou, iou_3d, rotated_nms, Box3D};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = Box3D::new(0.0, 0.0, 1.0, 2.0, 2.0, 2.0, 0.0)?;
    let b = Box3D::new(0.0, 0.0, 1.0, 2.0, 2.0, 2.0, FRAC_PI_4)?;
    let c = Box3D::new(1.0, 0.0, 1.5, 2.0, 2.0, 2.0, 0.0)?;
    println!("bev iou(square, rotated square) = {:.6}", bev_iou(&a, &b));
    println!("3d iou(a, c) = {:.6}", iou_3d(&a, &c));

    let det = |bbox: Box3D, class_id, score| Detection {
        bbox,
        class_id,
        score,
        velocity: [0.0, 0.0],
    };
    let dets = vec![
        det(a, 0, 0.9),
        det(b, 0, 0.8),
        det(c, 0, 0.7),
        // same box, other class: survives
        det(a, 1, 0.6),
        det(Box3D::new(10.0, 10.0, 1.0, 2.0, 4.0, 1.5, 0.3)?, 0, 0.5),
    ];
    for d in rotated_nms(dets, 0.2) {
        println!(
            "kept class {} score {:.1} at ({:.1}, {:.1})",
            d.class_id, d.score, d.bbox.cx, d.bbox.cy
        );
    }
    Ok(())
}
