//! Evaluates the first-stage losses and checks their gradients numerically.

use centertrack::losses::{focal_loss, masked_l1, score_bce};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pred = [0.9, 0.2, 0.6, 0.05];
    let target = [1.0, 0.3, 0.8, 0.0];
    let focal = focal_loss(&pred, &target, 2.0, 4.0)?;
    println!("focal = {:.6}", focal.value);

    let h = 1e-6;
    for i in 0..pred.len() {
        let mut up = pred;
        let mut down = pred;
        up[i] += h;
        down[i] -= h;
        let numeric = (focal_loss(&up, &target, 2.0, 4.0)?.value
            - focal_loss(&down, &target, 2.0, 4.0)?.value)
            / (2.0 * h);
        println!(
            "  d/dp[{i}]: analytic {:+.6} numeric {:+.6}",
            focal.gradient[i], numeric
        );
    }

    let l1 = masked_l1(&[1.0, 2.0, 3.0, 4.0], &[1.5, 2.0, 0.0, 0.0], &[true, false], 2)?;
    println!("masked l1 = {:.3} (only the first cell counts)", l1.value);

    let bce = score_bce(0.7, 1.0);
    println!("bce(0.7, 1) = {:.6}, gradient {:+.6}", bce.value, bce.gradient[0]);
    Ok(())
}
