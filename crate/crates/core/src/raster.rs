//! Gridded environmental predictors.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::floor;
use crate::types::Location;

/// A regular grid anchored at its lower-left corner.
///
/// `values` is row-major with row 0 at the top (north), the same order as an
/// ESRI ASCII grid body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterGrid {
    pub name: String,
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub cell: f64,
    pub nodata: f64,
    pub values: Vec<f64>,
}

impl RasterGrid {
    pub fn new(
        name: impl Into<String>,
        nx: usize,
        ny: usize,
        x0: f64,
        y0: f64,
        cell: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let grid = Self { name: name.into(), nx, ny, x0, y0, cell, nodata, values };
        grid.validate()?;
        Ok(grid)
    }

    /// Builds a grid by evaluating `f(x, y)` at every cell centre.
    pub fn from_fn(
        name: impl Into<String>,
        nx: usize,
        ny: usize,
        x0: f64,
        y0: f64,
        cell: f64,
        nodata: f64,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(nx * ny);
        for r in 0..ny {
            for c in 0..nx {
                let (x, y) = Self::center_of(x0, y0, cell, ny, c, r);
                values.push(f(x, y));
            }
        }
        Self::new(name, nx, ny, x0, y0, cell, nodata, values)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::MalformedRaster { name: self.name.clone(), reason };
        if self.nx == 0 || self.ny == 0 {
            return Err(bad(format!("empty shape {}x{}", self.nx, self.ny)));
        }
        if !(self.cell > 0.0) || !self.cell.is_finite() {
            return Err(bad(format!("cell size {} must be positive", self.cell)));
        }
        if self.values.len() != self.nx * self.ny {
            return Err(bad(format!(
                "{} values for a {}x{} grid",
                self.values.len(),
                self.nx,
                self.ny
            )));
        }
        if !self.x0.is_finite() || !self.y0.is_finite() {
            return Err(bad("non-finite corner".into()));
        }
        Ok(())
    }

    fn center_of(x0: f64, y0: f64, cell: f64, ny: usize, col: usize, row: usize) -> (f64, f64) {
        (
            x0 + (col as f64 + 0.5) * cell,
            y0 + ((ny - 1 - row) as f64 + 0.5) * cell,
        )
    }

    /// Centre of cell `(col, row)`, row 0 at the top.
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        Self::center_of(self.x0, self.y0, self.cell, self.ny, col, row)
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.cell
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.cell
    }

    /// `(col, row)` of the cell containing the point, if inside the extent.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let cx = floor((x - self.x0) / self.cell);
        let cy = floor((y - self.y0) / self.cell);
        if !(cx >= 0.0 && cy >= 0.0 && cx < self.nx as f64 && cy < self.ny as f64) {
            return None;
        }
        let col = cx as usize;
        let row = self.ny - 1 - cy as usize;
        Some((col, row))
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.nx + col]
    }

    pub fn is_valid_value(&self, v: f64) -> bool {
        v.is_finite() && v != self.nodata
    }

    /// Nearest-cell value at `loc`; `None` out of extent or on nodata.
    pub fn sample(&self, loc: &Location) -> Option<f64> {
        let (col, row) = self.cell_of(loc.x, loc.y)?;
        let v = self.get(col, row);
        self.is_valid_value(v).then_some(v)
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(move |&v| self.is_valid_value(v))
    }

    /// True when both grids cover the same cells.
    pub fn same_geometry(&self, other: &Self) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.x0 == other.x0
            && self.y0 == other.y0
            && self.cell == other.cell
    }
}

/// Free-function form of [`RasterGrid::sample`].
pub fn sample_point(grid: &RasterGrid, loc: &Location) -> Option<f64> {
    grid.sample(loc)
}
