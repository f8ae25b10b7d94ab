//! Runs every CLI stage in a temporary directory from a small config.

use std::process::ExitCode;

use centertrack::cli;

fn main() -> ExitCode {
    let dir = std::env::temp_dir().join(format!("centertrack-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    let config = dir.join("run.json");
    let doc = serde_json::json!({
        "grid": {"x_min": -30.0, "x_max": 30.0, "y_min": -30.0, "y_max": 30.0, "cell": 0.5},
        "classes": [
            {"name": "car", "match_threshold": 4.0, "size_mean": [1.9, 4.5, 1.6]},
            {"name": "pedestrian", "match_threshold": 1.0, "size_mean": [0.7, 0.7, 1.75]}
        ],
        "scenario": {"num_frames": 20, "random_objects": 8, "noise": {"center_sigma": 0.2}},
        "paths": {"dir": dir.join("out")}
    });
    std::fs::write(&config, doc.to_string()).expect("write config");

    for stage in ["simulate", "encode", "decode", "refine", "track", "eval"] {
        let args = ["centertrack", stage, "--config", config.to_str().unwrap()];
        let code = cli::run(args.iter().map(std::ffi::OsString::from));
        if code != 0 {
            eprintln!("{stage} exited with {code}");
            return ExitCode::from(code as u8);
        }
    }
    let report = std::fs::read_to_string(dir.join("out/report.json")).expect("report");
    println!("{report}");
    std::fs::remove_dir_all(&dir).ok();
    ExitCode::SUCCESS
}
