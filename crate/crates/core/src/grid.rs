//! Map-view discretization and dense `W x L x F` feature maps.
//!
//! Cell `(i, j)` has its sample point at continuous grid coordinate
//! `(i, j)`, i.e. world `(x_min + i * cell, y_min + j * cell)`. A continuous
//! coordinate `g` belongs to cell `floor(g)`. Rendering, decoding and
//! interpolation all use this single convention.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidSpec(String),
    #[error("feature map has {got} values, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("feature map contains a non-finite value at index {0}")]
    NonFiniteValue(usize),
    #[error("non-finite sample coordinate ({0}, {1})")]
    NonFiniteCoordinate(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridSpec")]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cell: f64,
    pub num_cells_x: usize,
    pub num_cells_y: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGridSpec {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    cell: f64,
    #[serde(default)]
    num_cells_x: Option<usize>,
    #[serde(default)]
    num_cells_y: Option<usize>,
}

impl TryFrom<RawGridSpec> for GridSpec {
    type Error = GridError;

    fn try_from(r: RawGridSpec) -> Result<Self, Self::Error> {
        let spec = GridSpec::new(r.x_min, r.x_max, r.y_min, r.y_max, r.cell)?;
        if r.num_cells_x.is_some_and(|n| n != spec.num_cells_x)
            || r.num_cells_y.is_some_and(|n| n != spec.num_cells_y)
        {
            return Err(GridError::InvalidSpec(format!(
                "declared cell counts do not match range/cell ({} x {})",
                spec.num_cells_x, spec.num_cells_y
            )));
        }
        Ok(spec)
    }
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, cell: f64) -> Result<Self, GridError> {
        let all_finite = [x_min, x_max, y_min, y_max, cell].iter().all(|v| v.is_finite());
        if !all_finite || cell <= 0.0 || x_max <= x_min || y_max <= y_min {
            return Err(GridError::InvalidSpec(format!(
                "x=[{x_min}, {x_max}] y=[{y_min}, {y_max}] cell={cell}"
            )));
        }
        let nx = ((x_max - x_min) / cell).round();
        let ny = ((y_max - y_min) / cell).round();
        if nx < 1.0 || ny < 1.0 {
            return Err(GridError::InvalidSpec("range smaller than one cell".into()));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
            cell,
            num_cells_x: nx as usize,
            num_cells_y: ny as usize,
        })
    }

    /// Square range `[-half, half]^2`.
    pub fn square(half_extent: f64, cell: f64) -> Result<Self, GridError> {
        Self::new(-half_extent, half_extent, -half_extent, half_extent, cell)
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells_x * self.num_cells_y
    }

    pub fn world_to_grid(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x_min) / self.cell, (y - self.y_min) / self.cell)
    }

    pub fn grid_to_world(&self, gx: f64, gy: f64) -> (f64, f64) {
        (self.x_min + gx * self.cell, self.y_min + gy * self.cell)
    }

    pub fn in_bounds(&self, gx: f64, gy: f64) -> bool {
        gx >= 0.0 && gy >= 0.0 && gx < self.num_cells_x as f64 && gy < self.num_cells_y as f64
    }

    /// Integer cell holding a continuous grid coordinate, if in range.
    pub fn cell_of(&self, gx: f64, gy: f64) -> Option<(usize, usize)> {
        self.in_bounds(gx, gy)
            .then(|| (gx.floor() as usize, gy.floor() as usize))
    }

    /// Flat index of cell `(ix, iy)` in an `L`-major layout.
    pub fn flat(&self, ix: usize, iy: usize) -> usize {
        ix * self.num_cells_y + iy
    }
}

pub fn world_to_grid(spec: &GridSpec, x: f64, y: f64) -> (f64, f64) {
    spec.world_to_grid(x, y)
}

pub fn grid_to_world(spec: &GridSpec, gx: f64, gy: f64) -> (f64, f64) {
    spec.grid_to_world(gx, gy)
}

pub fn in_bounds(spec: &GridSpec, gx: f64, gy: f64) -> bool {
    spec.in_bounds(gx, gy)
}

/// Dense `W x L x F` grid, stored row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    spec: GridSpec,
    channels: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(spec: GridSpec, channels: usize) -> Self {
        assert!(channels > 0, "feature map needs at least one channel");
        Self {
            spec,
            channels,
            values: vec![0.0; spec.num_cells() * channels],
        }
    }

    pub fn from_values(spec: GridSpec, channels: usize, values: Vec<f64>) -> Result<Self, GridError> {
        let expected = spec.num_cells() * channels;
        if channels == 0 || values.len() != expected {
            return Err(GridError::ShapeMismatch {
                expected,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFiniteValue(i));
        }
        Ok(Self {
            spec,
            channels,
            values,
        })
    }

    /// Builds a map by evaluating `f(ix, iy, channel)` at every entry.
    pub fn from_fn(spec: GridSpec, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut map = Self::zeros(spec, channels);
        for ix in 0..spec.num_cells_x {
            for iy in 0..spec.num_cells_y {
                for c in 0..channels {
                    map.set(ix, iy, c, f(ix, iy, c));
                }
            }
        }
        map
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn index(&self, ix: usize, iy: usize, c: usize) -> usize {
        debug_assert!(ix < self.spec.num_cells_x && iy < self.spec.num_cells_y && c < self.channels);
        self.spec.flat(ix, iy) * self.channels + c
    }

    pub fn get(&self, ix: usize, iy: usize, c: usize) -> f64 {
        self.values[self.index(ix, iy, c)]
    }

    pub fn set(&mut self, ix: usize, iy: usize, c: usize, v: f64) {
        let i = self.index(ix, iy, c);
        self.values[i] = v;
    }

    pub fn cell(&self, ix: usize, iy: usize) -> &[f64] {
        let start = self.index(ix, iy, 0);
        &self.values[start..start + self.channels]
    }

    pub fn cell_mut(&mut self, ix: usize, iy: usize) -> &mut [f64] {
        let start = self.index(ix, iy, 0);
        &mut self.values[start..start + self.channels]
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(GridError::NonFiniteValue(i)),
            None => Ok(()),
        }
    }

    /// Bilinear sample of every channel. Coordinates are clamped to
    /// `[0, W-1] x [0, L-1]`.
    pub fn bilinear(&self, gx: f64, gy: f64) -> Result<Vec<f64>, GridError> {
        if !gx.is_finite() || !gy.is_finite() {
            return Err(GridError::NonFiniteCoordinate(gx, gy));
        }
        let (ix0, tx) = axis_weights(gx, self.spec.num_cells_x);
        let (iy0, ty) = axis_weights(gy, self.spec.num_cells_y);
        let ix1 = (ix0 + 1).min(self.spec.num_cells_x - 1);
        let iy1 = (iy0 + 1).min(self.spec.num_cells_y - 1);
        let (v00, v01, v10, v11) = (
            self.cell(ix0, iy0),
            self.cell(ix0, iy1),
            self.cell(ix1, iy0),
            self.cell(ix1, iy1),
        );
        Ok((0..self.channels)
            .map(|c| {
                let lo = v00[c] * (1.0 - ty) + v01[c] * ty;
                let hi = v10[c] * (1.0 - ty) + v11[c] * ty;
                lo * (1.0 - tx) + hi * tx
            })
            .collect())
    }
}

/// Lower cell index and fractional weight along one axis of `n` cells.
fn axis_weights(g: f64, n: usize) -> (usize, f64) {
    let max = (n - 1) as f64;
    let g = g.clamp(0.0, max);
    if n == 1 {
        return (0, 0.0);
    }
    let i0 = (g.floor() as usize).min(n - 2);
    (i0, g - i0 as f64)
}

pub fn bilinear(map: &FeatureMap, gx: f64, gy: f64) -> Result<Vec<f64>, GridError> {
    map.bilinear(gx, gy)
}
