//! Cell-averaged densities on a rectangular grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn square(half_width: f64) -> Self {
        Self {
            x_min: -half_width,
            x_max: half_width,
            y_min: -half_width,
            y_max: half_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min && self.y_max > self.y_min) || !self.x_min.is_finite() || !self.y_min.is_finite() {
            return Err(Error::InvalidParameter(format!("degenerate bounds {self:?}")));
        }
        Ok(())
    }
}

/// Row-major cell values (`values[j * nx + i]`, `i` along x) plus a time stamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub bounds: Bounds,
    pub nx: usize,
    pub ny: usize,
    pub t: f64,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn zeros(bounds: Bounds, nx: usize, ny: usize) -> Result<Self> {
        bounds.validate()?;
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter("grid needs at least one cell per axis".into()));
        }
        Ok(Self {
            bounds,
            nx,
            ny,
            t: 0.0,
            values: vec![0.0; nx * ny],
        })
    }

    /// Samples `f` at cell centres.
    pub fn from_fn(bounds: Bounds, nx: usize, ny: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut g = Self::zeros(bounds, nx, ny)?;
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = g.center(i, j);
                g.values[j * nx + i] = f(x, y);
            }
        }
        Ok(g)
    }

    pub fn dx(&self) -> f64 {
        (self.bounds.x_max - self.bounds.x_min) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.bounds.y_max - self.bounds.y_min) / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.bounds.x_min + (i as f64 + 0.5) * self.dx(),
            self.bounds.y_min + (j as f64 + 0.5) * self.dy(),
        )
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// Cell containing `(x, y)`, if inside.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = (x - self.bounds.x_min) / self.dx();
        let fj = (y - self.bounds.y_min) / self.dy();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area()
    }

    /// Scales to unit mass; fails on an empty grid.
    pub fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::InvalidParameter("cannot normalize a grid with zero mass".into()));
        }
        self.values.iter_mut().for_each(|v| *v /= m);
        Ok(())
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.bounds == other.bounds
    }

    /// `∫|a − b|` over the grid.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        if !self.same_layout(other) {
            return Err(Error::InvalidParameter("grids differ in layout".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.cell_area())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}
