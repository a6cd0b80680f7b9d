//! Dyadic cubes of the unit torus, truncated to levels `0..=J`.
//!
//! A level-`k` cube holds `(N / 2^k)^d` grid points; the cube containing grid
//! coordinate `i` along an axis has offset `i >> (J - k)`.

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    pub level: usize,
    pub offset: [usize; 2],
}

impl DyadicCube {
    pub fn side(&self) -> f64 {
        2f64.powi(-(self.level as i32))
    }

    pub fn measure(&self, grid: &Grid) -> f64 {
        self.side().powi(grid.dim() as i32)
    }

    /// Grid points per axis inside the cube.
    pub fn points_per_axis(&self, grid: &Grid) -> usize {
        grid.n() >> self.level
    }

    pub fn point_count(&self, grid: &Grid) -> usize {
        self.points_per_axis(grid).pow(grid.dim() as u32)
    }

    /// Flat cube id within its level, row-major over offsets.
    pub fn id(&self, grid: &Grid) -> usize {
        let per = 1usize << self.level;
        self.offset[..grid.dim()].iter().fold(0, |acc, &o| acc * per + o)
    }

    pub fn from_id(grid: &Grid, level: usize, id: usize) -> Self {
        let per = 1usize << level;
        let offset = if grid.dim() == 1 { [id, 0] } else { [id / per, id % per] };
        Self { level, offset }
    }

    pub fn contains(&self, grid: &Grid, idx: usize) -> bool {
        containing_cube(grid, idx, self.level) == *self
    }

    /// Flat indices of the grid points inside the cube, in row-major order.
    pub fn points(&self, grid: &Grid) -> Vec<usize> {
        let m = self.points_per_axis(grid);
        let base = [self.offset[0] * m, self.offset[1] * m];
        if grid.dim() == 1 {
            (0..m).map(|i| base[0] + i).collect()
        } else {
            let mut out = Vec::with_capacity(m * m);
            for i in 0..m {
                for j in 0..m {
                    out.push(grid.flat_index(&[base[0] + i, base[1] + j]));
                }
            }
            out
        }
    }

    /// Points of the closed cube: the half-open points plus the far face on
    /// every axis, wrapped periodically.
    pub fn closure_points(&self, grid: &Grid) -> Vec<usize> {
        let n = grid.n();
        let m = self.points_per_axis(grid);
        let base = [self.offset[0] * m, self.offset[1] * m];
        if grid.dim() == 1 {
            (0..=m).map(|i| (base[0] + i) % n).collect()
        } else {
            let mut out = Vec::with_capacity((m + 1) * (m + 1));
            for i in 0..=m {
                for j in 0..=m {
                    out.push(grid.flat_index(&[(base[0] + i) % n, (base[1] + j) % n]));
                }
            }
            out
        }
    }

    pub fn parent(&self) -> Option<Self> {
        (self.level > 0).then(|| Self { level: self.level - 1, offset: [self.offset[0] / 2, self.offset[1] / 2] })
    }
}

fn check_level(grid: &Grid, k: usize) -> Result<()> {
    if k > grid.depth() as usize {
        return Err(Error::Parameter(format!("level {k} finer than the grid depth {}", grid.depth())));
    }
    Ok(())
}

/// All `2^{kd}` cubes of level `k`, ordered by id.
pub fn cubes_at_level(grid: &Grid, k: usize) -> Result<Vec<DyadicCube>> {
    check_level(grid, k)?;
    let count = 1usize << (k * grid.dim());
    Ok((0..count).map(|id| DyadicCube::from_id(grid, k, id)).collect())
}

pub fn containing_cube(grid: &Grid, idx: usize, k: usize) -> DyadicCube {
    let shift = grid.depth() as usize - k;
    let c = grid.coords(idx);
    DyadicCube { level: k, offset: [c[0] >> shift, c[1] >> shift] }
}

/// Id of the level-`k` cube containing each grid point.
pub fn level_ids(grid: &Grid, k: usize) -> Vec<usize> {
    let shift = grid.depth() as usize - k;
    let per = 1usize << k;
    (0..grid.len())
        .map(|i| {
            let c = grid.coords(i);
            if grid.dim() == 1 {
                c[0] >> shift
            } else {
                (c[0] >> shift) * per + (c[1] >> shift)
            }
        })
        .collect()
}

pub fn cube_count(grid: &Grid, k: usize) -> usize {
    1usize << (k * grid.dim())
}

/// Reduces a field over every level-`k` cube with `op`, starting from `init`.
pub fn reduce_level(grid: &Grid, values: &[f64], k: usize, init: f64, op: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let ids = level_ids(grid, k);
    let mut out = vec![init; cube_count(grid, k)];
    for (v, id) in values.iter().zip(&ids) {
        out[*id] = op(out[*id], *v);
    }
    out
}

/// Per-cube minima at level `k`.
pub fn level_min(grid: &Grid, values: &[f64], k: usize) -> Vec<f64> {
    reduce_level(grid, values, k, f64::INFINITY, f64::min)
}

pub fn level_max(grid: &Grid, values: &[f64], k: usize) -> Vec<f64> {
    reduce_level(grid, values, k, f64::NEG_INFINITY, f64::max)
}

/// Per-cube sums at level `k`, accumulated through the cube tree from the
/// finest level so the summation order is fixed.
pub fn level_sums(grid: &Grid, values: &[f64], k: usize) -> Vec<f64> {
    let depth = grid.depth() as usize;
    let ids = level_ids(grid, depth);
    let mut sums = vec![0.0; cube_count(grid, depth)];
    for (v, id) in values.iter().zip(&ids) {
        sums[*id] = *v;
    }
    for level in (k..depth).rev() {
        sums = children_to_parents(grid, &sums, level + 1);
    }
    sums
}

/// Sums child-level entries into their parents (child level `k` to `k - 1`).
pub fn children_to_parents(grid: &Grid, child: &[f64], k: usize) -> Vec<f64> {
    let per_child = 1usize << k;
    let per_parent = per_child / 2;
    let mut out = vec![0.0; cube_count(grid, k - 1)];
    if grid.dim() == 1 {
        for (p, o) in out.iter_mut().enumerate() {
            *o = child[2 * p] + child[2 * p + 1];
        }
    } else {
        for a in 0..per_parent {
            for b in 0..per_parent {
                let c = |i: usize, j: usize| child[(2 * a + i) * per_child + 2 * b + j];
                out[a * per_parent + b] = (c(0, 0) + c(0, 1)) + (c(1, 0) + c(1, 1));
            }
        }
    }
    out
}

pub fn cube_min(grid: &Grid, values: &[f64], q: &DyadicCube) -> f64 {
    q.points(grid).iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min)
}

pub fn cube_max(grid: &Grid, values: &[f64], q: &DyadicCube) -> f64 {
    q.points(grid).iter().map(|&i| values[i]).fold(f64::NEG_INFINITY, f64::max)
}

/// Boolean mask over a cube's grid points, in the order of `DyadicCube::points`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsetMask {
    pub cube: DyadicCube,
    pub mask: Vec<bool>,
}

impl SubsetMask {
    pub fn selected(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    /// `|S_Q| / |Q|` in counting measure.
    pub fn fraction(&self) -> f64 {
        self.selected() as f64 / self.mask.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_counts() {
        let g = Grid::new(1, 5).unwrap();
        assert_eq!(cubes_at_level(&g, 0).unwrap().len(), 1);
        let eight = cubes_at_level(&g, 3).unwrap();
        assert_eq!(eight.len(), 8);
        assert!(eight.iter().all(|c| c.side() == 0.125 && c.point_count(&g) == 4));
        assert!(cubes_at_level(&g, 6).is_err());
    }

    #[test]
    fn two_dimensional_tiling() {
        let g = Grid::new(2, 4).unwrap();
        let cubes = cubes_at_level(&g, 2).unwrap();
        assert_eq!(cubes.len(), 16);
        let mut seen = vec![0; g.len()];
        for c in &cubes {
            for p in c.points(&g) {
                seen[p] += 1;
                assert!(c.contains(&g, p));
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
        let total: f64 = cubes.iter().map(|c| c.measure(&g)).sum();
        assert_eq!(total, 1.0);
    }

    #[test]
    fn containing_cube_examples() {
        let g = Grid::new(1, 6).unwrap();
        for k in 0..=6 {
            assert_eq!(containing_cube(&g, 0, k).offset, [0, 0]);
        }
        assert_eq!(containing_cube(&g, 32, 1).offset[0], 1);
        for i in 0..g.len() {
            for k in 0..6 {
                let fine = containing_cube(&g, i, k + 1);
                assert_eq!(fine.parent().unwrap(), containing_cube(&g, i, k));
            }
        }
    }

    #[test]
    fn level_sums_match_direct_sums() {
        let g = Grid::new(2, 4).unwrap();
        let values: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.7).sin().abs()).collect();
        for k in 0..=4 {
            let sums = level_sums(&g, &values, k);
            for c in cubes_at_level(&g, k).unwrap() {
                let direct: f64 = c.points(&g).iter().map(|&i| values[i]).sum();
                assert!((sums[c.id(&g)] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn min_and_max_ignore_or_catch_spike() {
        let g = Grid::new(1, 4).unwrap();
        let mut values = vec![1.0; 16];
        values[3] = 10.0;
        let q = containing_cube(&g, 3, 2);
        assert_eq!(cube_min(&g, &values, &q), 1.0);
        assert_eq!(cube_max(&g, &values, &q), 10.0);
        assert_eq!(level_min(&g, &values, 2)[q.id(&g)], 1.0);
        assert_eq!(level_max(&g, &values, 2)[q.id(&g)], 10.0);
    }
}
