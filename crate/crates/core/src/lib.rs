//! Center-based 3D detection and tracking on a bird's-eye-view grid.
//!
//! The pipeline runs in stages: simulate ground truth and noisy detections
//! ([`sim`]), render training targets on a grid ([`targets`]), decode peaks
//! back into boxes ([`decode`]), rescore them with a second stage
//! ([`refine`]), associate them over time ([`tracker`]) and score the result
//! ([`metrics`]). The `centertrack` binary drives each stage from a JSON run
//! config ([`config`], [`cli`]).
//!
//! Runnable examples live in `examples/`: `iou_nms`, `render_decode`,
//! `loss_gradients`, `second_stage`, `tracking`, `evaluation` and `pipeline`.

pub mod cli;
pub mod config;
pub mod decode;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod refine;
pub mod sim;
pub mod targets;
pub mod tracker;
