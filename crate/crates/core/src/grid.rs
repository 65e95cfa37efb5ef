//! Regular 2D grids over a world-frame rectangle. All map rasterizations,
//! masks and evaluation grids share this frame definition; operations that
//! combine grids require their frames to match exactly.

use crate::geom::Vec2;
use serde::{Deserialize, Serialize};

/// Placement of a regular grid: origin is the minimum corner (not a cell
/// center), cells are `cell_size` squares, `width` columns by `height` rows.
/// Row 0 is the minimum-y row; data layout is row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn new(origin_x: f64, origin_y: f64, cell_size: f64, width: usize, height: usize) -> Self {
        assert!(cell_size > 0.0, "cell_size must be positive");
        Self {
            origin_x,
            origin_y,
            cell_size,
            width,
            height,
        }
    }

    /// Smallest grid of `cell_size` cells covering [min, max], with the
    /// origin snapped down to a multiple of `cell_size`.
    pub fn covering(min: Vec2, max: Vec2, cell_size: f64) -> Self {
        assert!(cell_size > 0.0 && max.x >= min.x && max.y >= min.y);
        let ox = (min.x / cell_size).floor() * cell_size;
        let oy = (min.y / cell_size).floor() * cell_size;
        let width = ((max.x - ox) / cell_size).ceil().max(1.0) as usize;
        let height = ((max.y - oy) / cell_size).ceil().max(1.0) as usize;
        Self::new(ox, oy, cell_size, width, height)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        debug_assert!(col < self.width && row < self.height);
        row * self.width + col
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Vec2 {
        Vec2::new(
            self.origin_x + (col as f64 + 0.5) * self.cell_size,
            self.origin_y + (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Cell containing point `p`, or None when outside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let cx = ((p.x - self.origin_x) / self.cell_size).floor();
        let cy = ((p.y - self.origin_y) / self.cell_size).floor();
        if cx >= 0.0 && cy >= 0.0 && (cx as usize) < self.width && (cy as usize) < self.height {
            Some((cx as usize, cy as usize))
        } else {
            None
        }
    }

    /// Iterate (col, row, center) in row-major order.
    pub fn iter_cells(&self) -> impl Iterator<Item = (usize, usize, Vec2)> + '_ {
        let w = self.width;
        (0..self.len()).map(move |i| {
            let (col, row) = (i % w, i / w);
            (col, row, self.cell_center(col, row))
        })
    }

    pub fn same_frame(&self, other: &GridSpec) -> bool {
        self == other
    }
}

/// Dense row-major storage of one value per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub spec: GridSpec,
    pub data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(spec: GridSpec, value: T) -> Self {
        let n = spec.len();
        Self {
            spec,
            data: vec![value; n],
        }
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(usize, usize, Vec2) -> T) -> Self {
        let data = spec.iter_cells().map(|(c, r, p)| f(c, r, p)).collect();
        Self { spec, data }
    }

    pub fn get(&self, col: usize, row: usize) -> &T {
        &self.data[self.spec.index(col, row)]
    }

    pub fn set(&mut self, col: usize, row: usize, value: T) {
        let i = self.spec.index(col, row);
        self.data[i] = value;
    }
}
