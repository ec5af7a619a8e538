//! Area-density binning and detection of the gathered swarm region.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{SwarmError, SwarmScene};
use crate::{Rect, Vec2};

/// kg → µg.
pub const KG_TO_UG: f64 = 1e9;
/// m² → mm².
pub const M2_TO_MM2: f64 = 1e6;

/// Area density on a regular grid covering the tank, µg/mm².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub origin: Vec2,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `values[iy * nx + ix]`.
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn zeros(bounds: &Rect, cell_size: f64) -> Result<Self, SwarmError> {
        if !(cell_size > 0.0) {
            return Err(SwarmError::InvalidParameter {
                name: "cell_size",
                reason: "must be > 0".into(),
            });
        }
        if cell_size > bounds.width() || cell_size > bounds.height() {
            return Err(SwarmError::InvalidParameter {
                name: "cell_size",
                reason: format!("{cell_size} m exceeds the tank"),
            });
        }
        let nx = (bounds.width() / cell_size).ceil() as usize;
        let ny = (bounds.height() / cell_size).ceil() as usize;
        Ok(Self {
            origin: bounds.min,
            cell_size,
            nx,
            ny,
            values: vec![0.0; nx * ny],
        })
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    /// Cell area, mm².
    pub fn cell_area_mm2(&self) -> f64 {
        self.cell_size * self.cell_size * M2_TO_MM2
    }

    pub fn cell_of(&self, p: &Vec2) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.cell_size).floor();
        let fy = ((p.y - self.origin.y) / self.cell_size).floor();
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        (ix < self.nx && iy < self.ny).then_some((ix, iy))
    }

    pub fn cell_rect(&self, ix0: usize, iy0: usize, ix1: usize, iy1: usize) -> Rect {
        Rect::new(
            self.origin + Vec2::new(ix0 as f64, iy0 as f64) * self.cell_size,
            self.origin + Vec2::new(ix1 as f64, iy1 as f64) * self.cell_size,
        )
    }

    /// Integrated mass, µg.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area_mm2()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Spreads every cell's mass evenly over the `(2r+1)²` window around it,
    /// clipped to the grid. Total mass is unchanged.
    pub fn box_smoothed(&self, radius: usize) -> DensityGrid {
        if radius == 0 {
            return self.clone();
        }
        let (nx, ny) = (self.nx, self.ny);
        let mut out = vec![0.0; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let v = self.values[iy * nx + ix];
                if v == 0.0 {
                    continue;
                }
                let (x0, x1) = (ix.saturating_sub(radius), (ix + radius).min(nx - 1));
                let (y0, y1) = (iy.saturating_sub(radius), (iy + radius).min(ny - 1));
                let share = v / ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        out[y * nx + x] += share;
                    }
                }
            }
        }
        DensityGrid { values: out, ..self.clone() }
    }
}

/// Bins each agent's mass at its centre.
pub fn density_grid(scene: &SwarmScene, cell_size: f64) -> Result<DensityGrid, SwarmError> {
    let mut grid = DensityGrid::zeros(&scene.tank, cell_size)?;
    let per_particle = scene.simulated_particle_mass_ug();
    let area = grid.cell_area_mm2();
    let mut deposit = |p: &Vec2, n: u32| {
        // positions are kept inside the tank; the far edge belongs to the last cell
        let ix = (((p.x - grid.origin.x) / grid.cell_size).floor().max(0.0) as usize).min(grid.nx - 1);
        let iy = (((p.y - grid.origin.y) / grid.cell_size).floor().max(0.0) as usize).min(grid.ny - 1);
        grid.values[iy * grid.nx + ix] += n as f64 * per_particle / area;
    };
    for chain in &scene.chains {
        deposit(&chain.center, chain.n_particles);
    }
    for p in &scene.free_particles {
        deposit(p, 1);
    }
    Ok(grid)
}

/// A 4-connected set of above-threshold cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub nx: usize,
    pub ny: usize,
    pub mask: Vec<bool>,
    pub cell_count: usize,
}

impl Component {
    pub fn contains(&self, ix: usize, iy: usize) -> bool {
        self.mask[iy * self.nx + ix]
    }

    /// Member cell with at least one 4-neighbour outside the component.
    pub fn is_boundary(&self, ix: usize, iy: usize) -> bool {
        if !self.contains(ix, iy) {
            return false;
        }
        let outside = |x: isize, y: isize| {
            x < 0
                || y < 0
                || x >= self.nx as isize
                || y >= self.ny as isize
                || !self.mask[y as usize * self.nx + x as usize]
        };
        let (x, y) = (ix as isize, iy as isize);
        outside(x - 1, y) || outside(x + 1, y) || outside(x, y - 1) || outside(x, y + 1)
    }
}

/// Largest 4-connected component of cells with density ≥ `threshold`.
///
/// Ties go to the component found first in row-major order.
pub fn largest_component(grid: &DensityGrid, threshold: f64) -> Option<Component> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut label = vec![usize::MAX; nx * ny];
    let mut best: Option<(usize, usize)> = None; // (label, size)
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..nx * ny {
        if label[start] != usize::MAX || grid.values[start] < threshold {
            continue;
        }
        let mut size = 0;
        label[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % nx, i / nx);
            let mut visit = |j: usize| {
                if label[j] == usize::MAX && grid.values[j] >= threshold {
                    label[j] = next;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < nx {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - nx);
            }
            if y + 1 < ny {
                visit(i + nx);
            }
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((next, size));
        }
        next += 1;
    }
    best.map(|(l, size)| Component {
        nx,
        ny,
        mask: label.iter().map(|&x| x == l).collect(),
        cell_count: size,
    })
}

/// Largest axis-aligned rectangle of set cells, as `(ix0, iy0, ix1, iy1)`
/// with exclusive upper bounds.
///
/// Row-by-row histogram sweep; ties keep the first rectangle found.
pub fn max_inscribed_rectangle(mask: &[bool], nx: usize, ny: usize) -> Option<(usize, usize, usize, usize)> {
    let mut heights = vec![0usize; nx];
    let mut best: Option<(usize, (usize, usize, usize, usize))> = None;
    let mut stack: Vec<usize> = Vec::with_capacity(nx + 1);
    for y in 0..ny {
        for x in 0..nx {
            heights[x] = if mask[y * nx + x] { heights[x] + 1 } else { 0 };
        }
        stack.clear();
        for x in 0..=nx {
            let h = if x < nx { heights[x] } else { 0 };
            while let Some(&top) = stack.last() {
                if heights[top] <= h {
                    break;
                }
                stack.pop();
                let height = heights[top];
                let left = stack.last().map_or(0, |&s| s + 1);
                let area = height * (x - left);
                if area > 0 && best.is_none_or(|(a, _)| area > a) {
                    best = Some((area, (left, y + 1 - height, x, y + 1)));
                }
            }
            stack.push(x);
        }
    }
    best.map(|(_, r)| r)
}

/// The gathered swarm: inscribed rectangle of the largest dense component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwarmRegion {
    pub rect: Rect,
    /// Mean density inside `rect`, µg/mm².
    pub mean_density: f64,
    /// Cell bounds `(ix0, iy0, ix1, iy1)`, upper bounds exclusive.
    pub cells: (usize, usize, usize, usize),
}

/// Components smaller than this are not called a swarm.
pub const MIN_REGION_CELLS: usize = 4;

pub fn swarm_region(grid: &DensityGrid, threshold: f64) -> Option<SwarmRegion> {
    swarm_region_with_min(grid, threshold, MIN_REGION_CELLS)
}

pub fn swarm_region_with_min(grid: &DensityGrid, threshold: f64, min_cells: usize) -> Option<SwarmRegion> {
    let component = largest_component(grid, threshold)?;
    region_of_component(grid, &component, min_cells)
}

pub fn region_of_component(grid: &DensityGrid, component: &Component, min_cells: usize) -> Option<SwarmRegion> {
    if component.cell_count < min_cells.max(1) {
        return None;
    }
    let (ix0, iy0, ix1, iy1) = max_inscribed_rectangle(&component.mask, grid.nx, grid.ny)?;
    let mut sum = 0.0;
    for iy in iy0..iy1 {
        for ix in ix0..ix1 {
            sum += grid.get(ix, iy);
        }
    }
    let count = ((ix1 - ix0) * (iy1 - iy0)) as f64;
    Some(SwarmRegion {
        rect: grid.cell_rect(ix0, iy0, ix1, iy1),
        mean_density: sum / count,
        cells: (ix0, iy0, ix1, iy1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_from(rows: &[&str], value: f64) -> DensityGrid {
        let ny = rows.len();
        let nx = rows[0].len();
        let mut values = vec![0.0; nx * ny];
        for (iy, row) in rows.iter().enumerate() {
            for (ix, c) in row.chars().enumerate() {
                if c == '#' {
                    values[iy * nx + ix] = value;
                }
            }
        }
        DensityGrid {
            origin: Vec2::zeros(),
            cell_size: 1e-4,
            nx,
            ny,
            values,
        }
    }

    // Exhaustive search over every rectangle.
    fn brute_force_rectangle(mask: &[bool], nx: usize, ny: usize) -> usize {
        let mut best = 0;
        for y0 in 0..ny {
            for y1 in y0 + 1..=ny {
                for x0 in 0..nx {
                    for x1 in x0 + 1..=nx {
                        let full = (y0..y1).all(|y| (x0..x1).all(|x| mask[y * nx + x]));
                        if full {
                            best = best.max((y1 - y0) * (x1 - x0));
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn empty_grid_has_no_region() {
        let g = grid_from(&["....", "....", "...."], 5.0);
        assert!(swarm_region(&g, 1.0).is_none());
    }

    #[test]
    fn block_is_its_own_rectangle() {
        let g = grid_from(&[".....", ".###.", ".###.", "....."], 5.0);
        let region = swarm_region(&g, 1.0).unwrap();
        assert_eq!(region.cells, (1, 1, 4, 3));
        assert_eq!(region.mean_density, 5.0);
    }

    #[test]
    fn l_shape_picks_larger_leg() {
        let rows = [
            "#.........",
            "#.........",
            "##........",
            "##........",
            "##........",
            "##........",
            "##########",
            "##########",
        ];
        let g = grid_from(&rows, 5.0);
        let region = swarm_region(&g, 1.0).unwrap();
        let (x0, y0, x1, y1) = region.cells;
        let comp = largest_component(&g, 1.0).unwrap();
        assert_eq!((x1 - x0) * (y1 - y0), brute_force_rectangle(&comp.mask, g.nx, g.ny));
        assert_eq!(region.cells, (0, 6, 10, 8));
    }

    #[test]
    fn random_masks_match_exhaustive_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let nx = rng.random_range(1..=20);
            let ny = rng.random_range(1..=20);
            let p: f64 = rng.random_range(0.3..0.95);
            let mask: Vec<bool> = (0..nx * ny).map(|_| rng.random_bool(p)).collect();
            let got = max_inscribed_rectangle(&mask, nx, ny)
                .map_or(0, |(x0, y0, x1, y1)| (x1 - x0) * (y1 - y0));
            assert_eq!(got, brute_force_rectangle(&mask, nx, ny));
        }
    }

    #[test]
    fn largest_component_and_boundary() {
        let g = grid_from(&["##...", "##...", ".....", "..###", "..###", "..###"], 5.0);
        let c = largest_component(&g, 1.0).unwrap();
        assert_eq!(c.cell_count, 9);
        assert!(c.contains(3, 4));
        assert!(!c.is_boundary(3, 4));
        assert!(c.is_boundary(2, 3));
        assert!(!c.contains(0, 0));
    }

    #[test]
    fn small_components_are_ignored() {
        let g = grid_from(&["#....", ".....", "....#"], 5.0);
        assert!(swarm_region(&g, 1.0).is_none());
        assert!(swarm_region_with_min(&g, 1.0, 1).is_some());
    }
}
