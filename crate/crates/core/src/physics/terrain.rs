//! One-dimensional height field along the base-frame x axis.

use serde::{Deserialize, Serialize};

use super::PhysicsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainField {
    pub x_origin: f64,
    pub cell_size: f64,
    pub heights: Vec<f64>,
}

impl TerrainField {
    pub fn flat(x_min: f64, x_max: f64, cell_size: f64, z: f64) -> Self {
        assert!(x_max > x_min && cell_size > 0.0);
        let n = ((x_max - x_min) / cell_size).round() as usize + 1;
        Self {
            x_origin: x_min,
            cell_size,
            heights: vec![z; n],
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_origin
    }

    pub fn x_max(&self) -> f64 {
        self.x_origin + self.cell_size * (self.heights.len() - 1) as f64
    }

    pub fn contains_x(&self, x: f64) -> bool {
        x >= self.x_min() && x <= self.x_max()
    }

    #[inline]
    pub fn node_x(&self, i: usize) -> f64 {
        self.x_origin + self.cell_size * i as f64
    }

    /// Piecewise-linear height; clamps to the end nodes outside the span.
    pub fn height_at(&self, x: f64) -> f64 {
        let (i, t) = self.locate(x);
        self.heights[i] * (1.0 - t) + self.heights[i + 1] * t
    }

    /// Surface slope dz/dx of the segment containing `x`.
    pub fn slope_at(&self, x: f64) -> f64 {
        let (i, _) = self.locate(x);
        (self.heights[i + 1] - self.heights[i]) / self.cell_size
    }

    pub fn checked_height(&self, x: f64) -> Result<f64, PhysicsError> {
        if !x.is_finite() || !self.contains_x(x) {
            return Err(PhysicsError::OutsideTerrain {
                x,
                min: self.x_min(),
                max: self.x_max(),
            });
        }
        Ok(self.height_at(x))
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let last = self.heights.len() - 2;
        let s = ((x - self.x_origin) / self.cell_size).max(0.0);
        let i = (s.floor() as usize).min(last);
        let t = (s - i as f64).clamp(0.0, 1.0);
        (i, t)
    }

    /// Node indices whose x lies in `[x0, x1]`.
    pub fn nodes_between(&self, x0: f64, x1: f64) -> std::ops::Range<usize> {
        let n = self.heights.len();
        let lo = ((x0 - self.x_origin) / self.cell_size).ceil().max(0.0) as usize;
        let hi = (((x1 - self.x_origin) / self.cell_size).floor() + 1.0).max(0.0) as usize;
        lo.min(n)..hi.min(n)
    }

    /// Soil cross-section area above `z_ref` (m², per unit width).
    pub fn area_above(&self, z_ref: f64) -> f64 {
        self.heights.iter().map(|h| (h - z_ref) * self.cell_size).sum()
    }

    /// Spreads `area` (m² per unit width) evenly over the nodes within
    /// `half_width` of `x`.
    pub fn deposit(&mut self, x: f64, half_width: f64, area: f64) {
        if area <= 0.0 {
            return;
        }
        let range = self.nodes_between(x - half_width, x + half_width);
        let range = if range.is_empty() {
            let (i, _) = self.locate(x);
            i..i + 1
        } else {
            range
        };
        let dh = area / (range.len() as f64 * self.cell_size);
        for h in &mut self.heights[range] {
            *h += dh;
        }
    }

    /// Moves soil between neighbouring nodes until no slope exceeds
    /// `max_slope`. Soil volume is conserved exactly for interior transfers.
    pub fn relax(&mut self, max_slope: f64, passes: usize) -> bool {
        self.relax_around(max_slope, passes, 0..0)
    }

    /// Like [`relax`](Self::relax) but leaves the nodes in `frozen` (e.g.
    /// those under a resting body) untouched.
    pub fn relax_around(&mut self, max_slope: f64, passes: usize, frozen: std::ops::Range<usize>) -> bool {
        let limit = max_slope * self.cell_size;
        let mut any = false;
        for _ in 0..passes {
            let mut moved = false;
            for i in 0..self.heights.len() - 1 {
                if frozen.contains(&i) || frozen.contains(&(i + 1)) {
                    continue;
                }
                let diff = self.heights[i] - self.heights[i + 1];
                if diff.abs() > limit {
                    let transfer = 0.5 * (diff.abs() - limit) * diff.signum();
                    self.heights[i] -= transfer;
                    self.heights[i + 1] += transfer;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
            any = true;
        }
        any
    }
}
