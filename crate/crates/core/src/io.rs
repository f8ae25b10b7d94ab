//! On-disk formats.
//!
//! Frame streams are JSON Lines, one frame per line, in ascending
//! `frame_index`. Dense maps use a binary container: each record is one
//! JSON header line followed by the raw little-endian values it declares,
//! laid out row-major as `x`, then `y`, then channel.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Box3D;
use crate::grid::{FeatureMap, GridError, GridSpec};
use crate::refine::{RefineError, RefinedDetection};
use crate::targets::TargetMaps;
use crate::tracker::Track;

pub use crate::sim::{DetectionFrame, GtFrame};

pub const MAP_LAYOUT: &str = "row_major_x_y_c";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{source_name}: {source}")]
    Io {
        source_name: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
}

impl FormatError {
    fn io(source_name: &str, source: std::io::Error) -> Self {
        FormatError::Io {
            source_name: source_name.to_string(),
            source,
        }
    }

    fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}

/// Reads one JSON value per non-blank line. Errors name the 1-based line.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead, source_name: &str) -> Result<Vec<T>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(source_name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| FormatError::parse(source_name, i + 1, e.to_string()))?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(mut writer: impl Write, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackFrame {
    pub frame_index: usize,
    pub tracks: Vec<Track>,
}

/// Detection record carrying the second-stage scores. `score` holds the
/// fused score so downstream stages rank by it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedRecord {
    #[serde(rename = "box")]
    pub bbox: Box3D,
    pub class_id: usize,
    pub score: f64,
    pub velocity: [f64; 2],
    pub stage2_score: f64,
    pub fused_score: f64,
}

impl RefinedRecord {
    pub fn from_refined(r: &RefinedDetection) -> Result<Self, RefineError> {
        let det = r.to_detection()?;
        Ok(Self {
            bbox: det.bbox,
            class_id: det.class_id,
            score: r.fused_score,
            velocity: det.velocity,
            stage2_score: r.stage2_score,
            fused_score: r.fused_score,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedFrame {
    pub frame_index: usize,
    pub detections: Vec<RefinedRecord>,
}

/// Frame indices must strictly increase.
pub fn check_ascending(indices: impl IntoIterator<Item = usize>) -> Result<(), (usize, usize)> {
    let mut prev: Option<usize> = None;
    for idx in indices {
        if let Some(p) = prev {
            if idx <= p {
                return Err((p, idx));
            }
        }
        prev = Some(idx);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapHeader {
    pub frame_index: usize,
    pub spec: GridSpec,
    pub channels: usize,
    pub layout: String,
    pub channel_names: Vec<String>,
    pub dtype: Dtype,
}

/// One frame of a map stream.
#[derive(Debug, Clone, PartialEq)]
pub struct MapRecord {
    pub frame_index: usize,
    pub channel_names: Vec<String>,
    pub map: FeatureMap,
}

pub fn write_map_record(mut writer: impl Write, record: &MapRecord, dtype: Dtype) -> std::io::Result<()> {
    let header = MapHeader {
        frame_index: record.frame_index,
        spec: *record.map.spec(),
        channels: record.map.channels(),
        layout: MAP_LAYOUT.to_string(),
        channel_names: record.channel_names.clone(),
        dtype,
    };
    serde_json::to_writer(&mut writer, &header)?;
    writer.write_all(b"\n")?;
    let values = record.map.values();
    let mut buf = Vec::with_capacity(values.len() * dtype.size());
    for &v in values {
        match dtype {
            Dtype::F32 => buf.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => buf.extend_from_slice(&v.to_le_bytes()),
        }
    }
    writer.write_all(&buf)
}

/// Reads every record of a map stream. Errors name the record (1-based).
pub fn read_map_records(mut reader: impl BufRead, source_name: &str) -> Result<Vec<MapRecord>, FormatError> {
    let mut out = Vec::new();
    loop {
        let record_no = out.len() + 1;
        let mut line = Vec::new();
        let n = reader
            .read_until(b'\n', &mut line)
            .map_err(|e| FormatError::io(source_name, e))?;
        if n == 0 {
            return Ok(out);
        }
        let bad = |m: String| FormatError::parse(source_name, record_no, m);
        let header: MapHeader = serde_json::from_slice(&line).map_err(|e| bad(format!("bad header: {e}")))?;
        if header.layout != MAP_LAYOUT {
            return Err(bad(format!("unsupported layout {:?}", header.layout)));
        }
        if header.channel_names.len() != header.channels {
            return Err(bad(format!(
                "{} channel names for {} channels",
                header.channel_names.len(),
                header.channels
            )));
        }
        let count = header.spec.num_cells() * header.channels;
        let mut bytes = vec![0u8; count * header.dtype.size()];
        reader
            .read_exact(&mut bytes)
            .map_err(|e| bad(format!("truncated payload: {e}")))?;
        let values: Vec<f64> = match header.dtype {
            Dtype::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        let map = FeatureMap::from_values(header.spec, header.channels, values).map_err(|e| bad(e.to_string()))?;
        out.push(MapRecord {
            frame_index: header.frame_index,
            channel_names: header.channel_names,
            map,
        });
    }
}

const REGRESSION_NAMES: [&str; 10] = [
    "offset_x", "offset_y", "height", "log_w", "log_l", "log_h", "sin_yaw", "cos_yaw", "vel_x", "vel_y",
];

/// Channel names of a packed target map with `num_classes` heatmap channels.
pub fn target_channel_names(num_classes: usize) -> Vec<String> {
    (0..num_classes)
        .map(|k| format!("heatmap_{k}"))
        .chain(REGRESSION_NAMES.iter().map(|s| s.to_string()))
        .chain(std::iter::once("valid".to_string()))
        .collect()
}

/// Stacks heatmap, regression heads and the valid mask into one map.
pub fn pack_target_maps(maps: &TargetMaps) -> FeatureMap {
    let k = maps.num_classes();
    let parts = maps.regression_maps();
    FeatureMap::from_fn(maps.spec, k + REGRESSION_NAMES.len() + 1, |ix, iy, c| {
        if c < k {
            return maps.heatmap.get(ix, iy, c);
        }
        let mut r = c - k;
        for p in parts {
            if r < p.channels() {
                return p.get(ix, iy, r);
            }
            r -= p.channels();
        }
        if maps.is_valid(ix, iy) {
            1.0
        } else {
            0.0
        }
    })
}

pub fn unpack_target_maps(packed: &FeatureMap) -> Result<TargetMaps, GridError> {
    let extra = REGRESSION_NAMES.len() + 1;
    if packed.channels() <= extra {
        return Err(GridError::InvalidSpec(format!(
            "packed target map needs more than {extra} channels, got {}",
            packed.channels()
        )));
    }
    let k = packed.channels() - extra;
    let spec = *packed.spec();
    let mut maps = TargetMaps::zeros(spec, k);
    for ix in 0..spec.num_cells_x {
        for iy in 0..spec.num_cells_y {
            let cell = packed.cell(ix, iy);
            maps.heatmap.cell_mut(ix, iy).copy_from_slice(&cell[..k]);
            let mut at = k;
            for p in maps.regression_maps_mut() {
                let n = p.channels();
                p.cell_mut(ix, iy).copy_from_slice(&cell[at..at + n]);
                at += n;
            }
            maps.valid_mask[spec.flat(ix, iy)] = cell[at] != 0.0;
        }
    }
    Ok(maps)
}
