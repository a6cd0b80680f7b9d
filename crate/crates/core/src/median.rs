//! Nonincreasing rearrangements, dyadic gamma-medians and the median-based
//! subset selection that controls the Carleson supremum of a ladder.
//!
//! For a ladder of nonnegative fields `F_k` write `m_k(x)` for the minimum of
//! `F_k` over the level-`k` cube containing `x`. Then for a cube `P` of level
//! `v`, `G_P(x) = (sum_{k >= v} m_k(x)^q)^{1/q}` depends on `P` only through
//! `v`, which is what makes every per-level quantity a single grid field.

use rayon::prelude::*;

use crate::dyadic::{cube_count, level_ids, level_min, DyadicCube, SubsetMask};
use crate::error::{Error, Result};
use crate::grid::{Grid, Ladder, ScaleFields};
use crate::maximal::peetre_maximal_field;
use crate::spaces::carleson_sup;

/// Largest count `c` with `c * cell <= measure`, evaluated in floating point
/// exactly as the threshold test of the scan oracle.
fn fitting_count(n: usize, cell: f64, measure: f64) -> usize {
    let mut c = ((measure / cell).floor().max(0.0) as usize).min(n);
    while c > 0 && (c as f64) * cell > measure {
        c -= 1;
    }
    while c < n && ((c + 1) as f64) * cell <= measure {
        c += 1;
    }
    c
}

fn check_nonnegative(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("rearrangement needs nonnegative values".into()));
    }
    Ok(())
}

/// Nonincreasing rearrangement of a nonnegative step function.
#[derive(Clone, Debug, PartialEq)]
pub struct Rearrangement {
    descending: Vec<f64>,
    cell: f64,
}

impl Rearrangement {
    pub fn new(values: &[f64], cell: f64) -> Result<Self> {
        check_nonnegative(values)?;
        if !(cell > 0.0) {
            return Err(Error::Parameter(format!("cell measure {cell} must be positive")));
        }
        let mut descending = values.to_vec();
        descending.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { descending, cell })
    }

    /// `inf { lambda > 0 : |{f > lambda}| <= measure }`.
    pub fn at(&self, measure: f64) -> f64 {
        let c = fitting_count(self.descending.len(), self.cell, measure);
        self.descending.get(c).copied().unwrap_or(0.0).max(0.0)
    }

    pub fn total_measure(&self) -> f64 {
        self.cell * self.descending.len() as f64
    }
}

/// Gamma-median of the values of a cube, in counting measure: the order
/// statistic `v_{floor(gamma n) + 1}` of the descending sort.
pub fn gamma_median(values: &[f64], gamma: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Parameter("median of an empty cube".into()));
    }
    check_gamma(gamma)?;
    check_nonnegative(values)?;
    Ok(median_unchecked(&mut values.to_vec(), gamma))
}

fn median_unchecked(scratch: &mut [f64], gamma: f64) -> f64 {
    let n = scratch.len();
    let c = fitting_count(n, 1.0, gamma * n as f64);
    if c >= n {
        return 0.0;
    }
    let (_, v, _) = scratch.select_nth_unstable_by(c, |a, b| b.total_cmp(a));
    v.max(0.0)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Parameter(format!("gamma = {gamma} not in (0,1)")));
    }
    Ok(())
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0) {
        return Err(Error::Parameter(format!("q = {q} must be positive")));
    }
    Ok(())
}

/// Per-level fields shared by the G function, the envelope and the selection.
struct Levels {
    grid: Grid,
    /// `m_k(x)` indexed by `k - k_min`.
    cube_min: Vec<Vec<f64>>,
    k_min: usize,
    /// `G_v(x)` for `v = 0..=J`.
    g: Vec<Vec<f64>>,
}

impl Levels {
    fn new(fields: &ScaleFields, q: f64) -> Self {
        let grid = *fields.grid();
        let depth = grid.depth() as usize;
        let cube_min: Vec<Vec<f64>> = fields
            .iter()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|(k, f)| {
                let mins = level_min(&grid, f, *k);
                level_ids(&grid, *k).into_iter().map(|id| mins[id]).collect()
            })
            .collect();
        let mut g = vec![Vec::new(); depth + 1];
        let mut tail = vec![0.0_f64; grid.len()];
        for v in (0..=depth).rev() {
            if let Some(m) = v.checked_sub(fields.k_min()).and_then(|i| cube_min.get(i)) {
                for (t, x) in tail.iter_mut().zip(m) {
                    if q.is_infinite() {
                        *t = t.max(*x);
                    } else {
                        *t += x.powf(q);
                    }
                }
            }
            g[v] = if q.is_infinite() { tail.clone() } else { tail.iter().map(|t| t.powf(1.0 / q)).collect() };
        }
        Self { grid, cube_min, k_min: fields.k_min(), g }
    }

    fn depth(&self) -> usize {
        self.grid.depth() as usize
    }

    /// Median of `G_v` over each level-`v` cube, broadcast to its points.
    fn medians(&self, gamma: f64) -> Vec<Vec<f64>> {
        (0..=self.depth())
            .into_par_iter()
            .map(|v| {
                let ids = level_ids(&self.grid, v);
                let mut buckets = vec![Vec::new(); cube_count(&self.grid, v)];
                for (x, id) in ids.iter().enumerate() {
                    buckets[*id].push(self.g[v][x]);
                }
                let per_cube: Vec<f64> = buckets.iter_mut().map(|b| median_unchecked(b, gamma)).collect();
                ids.iter().map(|id| per_cube[*id]).collect()
            })
            .collect()
    }

    /// `env_v(x) = max_{w >= v} med_w(x)` for every `v`.
    fn envelopes(&self, gamma: f64) -> Vec<Vec<f64>> {
        let med = self.medians(gamma);
        let depth = self.depth();
        let mut env = vec![Vec::new(); depth + 1];
        env[depth] = med[depth].clone();
        for v in (0..depth).rev() {
            env[v] = med[v].iter().zip(&env[v + 1]).map(|(a, b)| a.max(*b)).collect();
        }
        env
    }
}

/// `G_P` on the points of `P`, in `DyadicCube::points` order.
pub fn g_function(fields: &ScaleFields, cube: &DyadicCube, q: f64) -> Result<Vec<f64>> {
    check_q(q)?;
    let grid = fields.grid();
    if cube.level > grid.depth() as usize {
        return Err(Error::Parameter(format!("cube level {} beyond depth", cube.level)));
    }
    let levels = Levels::new(fields, q);
    Ok(cube.points(grid).into_iter().map(|x| levels.g[cube.level][x]).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MedianField {
    pub grid: Grid,
    pub mu: usize,
    pub values: Vec<f64>,
}

impl MedianField {
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Pointwise sup of the gamma-medians of `G_P` over ancestors `P` of level `>= mu`.
pub fn median_envelope(fields: &ScaleFields, gamma: f64, q: f64, mu: usize) -> Result<MedianField> {
    check_gamma(gamma)?;
    check_q(q)?;
    let grid = *fields.grid();
    if mu > grid.depth() as usize {
        return Err(Error::Parameter(format!("minimum level {mu} exceeds depth")));
    }
    let env = Levels::new(fields, q).envelopes(gamma);
    Ok(MedianField { grid, mu, values: env[mu].clone() })
}

/// Selected subsets `S_P` for every dyadic cube, stored per level as one
/// boolean field over all grid points.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub gamma: f64,
    pub q: f64,
    grid: Grid,
    masks: Vec<Vec<bool>>,
}

impl Selection {
    pub fn level_mask(&self, level: usize) -> Option<&[bool]> {
        self.masks.get(level).map(Vec::as_slice)
    }

    pub fn mask(&self, cube: &DyadicCube) -> SubsetMask {
        let field = &self.masks[cube.level];
        SubsetMask { cube: *cube, mask: cube.points(&self.grid).into_iter().map(|x| field[x]).collect() }
    }

    pub fn levels(&self) -> usize {
        self.masks.len()
    }

    /// Smallest `|S_P| / |P|` over all cubes.
    pub fn min_fraction(&self) -> f64 {
        let mut worst: f64 = 1.0;
        for (level, field) in self.masks.iter().enumerate() {
            let ids = level_ids(&self.grid, level);
            let mut hits = vec![0usize; cube_count(&self.grid, level)];
            for (x, id) in ids.iter().enumerate() {
                hits[*id] += field[x] as usize;
            }
            let size = (self.grid.n() >> level).pow(self.grid.dim() as u32) as f64;
            for h in hits {
                worst = worst.min(h as f64 / size);
            }
        }
        worst
    }

    /// Number of cubes with `|S_P| < (1 - gamma)|P|`.
    pub fn violations(&self) -> usize {
        let mut bad = 0;
        for (level, field) in self.masks.iter().enumerate() {
            let ids = level_ids(&self.grid, level);
            let mut misses = vec![0usize; cube_count(&self.grid, level)];
            for (x, id) in ids.iter().enumerate() {
                misses[*id] += (!field[x]) as usize;
            }
            let size = (self.grid.n() >> level).pow(self.grid.dim() as u32) as f64;
            bad += misses.iter().filter(|&&m| m as f64 > self.gamma * size).count();
        }
        bad
    }
}

fn build_selection(levels: &Levels, gamma: f64, q: f64) -> Result<Selection> {
    let env = levels.envelopes(gamma);
    let masks = (0..=levels.depth())
        .map(|v| levels.g[v].iter().zip(&env[v]).map(|(g, e)| g <= e).collect())
        .collect();
    let sel = Selection { gamma, q, grid: levels.grid, masks };
    let bad = sel.violations();
    if bad > 0 {
        return Err(Error::Invariant(format!("{bad} selected subsets fall below the (1-gamma) measure bound")));
    }
    Ok(sel)
}

/// `S_P = {x in P : G_P(x) <= envelope at level(P)}`; the `(1 - gamma)`
/// measure bound is checked for every cube.
pub fn select_subsets(fields: &ScaleFields, gamma: f64, q: f64) -> Result<Selection> {
    check_gamma(gamma)?;
    check_q(q)?;
    build_selection(&Levels::new(fields, q), gamma, q)
}

/// `max_x (sum_{k >= mu} (m_k(x) 1[x in S_{Q_k(x)}])^q)^{1/q}`.
pub fn masked_linfty_lq(fields: &ScaleFields, sel: &Selection, mu: usize, q: f64) -> Result<f64> {
    check_q(q)?;
    let levels = Levels::new(fields, q);
    masked_from_levels(&levels, sel, mu, q)
}

fn masked_from_levels(levels: &Levels, sel: &Selection, mu: usize, q: f64) -> Result<f64> {
    let depth = levels.depth();
    if mu > depth || sel.levels() <= depth {
        return Err(Error::Parameter(format!("selection does not cover levels {mu}..={depth}")));
    }
    let mut acc = vec![0.0_f64; levels.grid.len()];
    for (i, m) in levels.cube_min.iter().enumerate() {
        let k = levels.k_min + i;
        if k < mu {
            continue;
        }
        let mask = &sel.masks[k];
        for ((a, v), keep) in acc.iter_mut().zip(m).zip(mask) {
            let v = if *keep { *v } else { 0.0 };
            if q.is_infinite() {
                *a = a.max(v);
            } else {
                *a += v.powf(q);
            }
        }
    }
    let top = acc.iter().copied().fold(0.0, f64::max);
    Ok(if q.is_infinite() { top } else { top.powf(1.0 / q) })
}

/// Parameters of the two-sided comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquivalenceParams {
    pub gamma: f64,
    pub q: f64,
    pub sigma: f64,
    pub t: f64,
    pub mu: usize,
}

impl EquivalenceParams {
    pub fn validate(&self, dim: usize) -> Result<()> {
        check_gamma(self.gamma)?;
        let d = dim as f64;
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::Parameter(format!("q = {} must be finite and positive", self.q)));
        }
        if !(self.t > 0.0 && self.sigma > d / self.t && d / self.t > d / self.q) {
            return Err(Error::Parameter(format!(
                "need sigma > d/t > d/q, got sigma={} t={} q={} d={dim}",
                self.sigma, self.t, self.q
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, NaN when both sides are negligible.
    pub ratio: f64,
    /// Max of the median envelope of the Peetre ladder at level `mu`.
    pub envelope_max: f64,
    /// Smallest `|S_P| / |P|` of the selection.
    pub min_fraction: f64,
}

/// Both sides below this count as a degenerate (zero) ladder.
pub const DEGENERATE: f64 = 1e-13;

/// Peetre maximal ladder `{M^t_{sigma,2^k} f_k}`.
pub fn peetre_ladder(ladder: &Ladder, sigma: f64, t: f64) -> Result<ScaleFields> {
    let grid = *ladder.grid();
    let fields = ladder
        .iter()
        .map(|(k, f)| peetre_maximal_field(&grid, &f.magnitudes(), sigma, k, t))
        .collect::<Result<Vec<_>>>()?;
    ScaleFields::new(grid, ladder.k_min(), fields)
}

/// Carleson supremum of the ladder against the masked `L^inf(l^q)` norm of
/// its Peetre ladder over the median selection.
pub fn equivalence_report(ladder: &Ladder, params: &EquivalenceParams) -> Result<EquivalenceReport> {
    params.validate(ladder.grid().dim())?;
    let EquivalenceParams { gamma, q, sigma, t, mu } = *params;
    let lhs = carleson_sup(ladder, q, mu)?;
    let peetre = peetre_ladder(ladder, sigma, t)?;
    let levels = Levels::new(&peetre, q);
    let sel = build_selection(&levels, gamma, q)?;
    let rhs = masked_from_levels(&levels, &sel, mu, q)?;
    let envelope_max = levels.envelopes(gamma)[mu].iter().copied().fold(0.0, f64::max);
    if rhs > envelope_max * (1.0 + 1e-12) {
        return Err(Error::Invariant(format!("masked norm {rhs} exceeds envelope maximum {envelope_max}")));
    }
    let ratio = if lhs < DEGENERATE && rhs < DEGENERATE { f64::NAN } else { lhs / rhs };
    Ok(EquivalenceReport { lhs, rhs, ratio, envelope_max, min_fraction: sel.min_fraction() })
}
