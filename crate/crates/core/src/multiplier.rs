//! n-linear Fourier multipliers on the torus.
//!
//! A symbol is stored on the product frequency grid with slot-major flat
//! index `((i_1 L + i_2) L + ...) ` where `L = N^d` and `i_j` is the flat
//! spectral index of slot `j`. `T_m` is realized by accumulating
//! `m(xi) prod f_j^(xi_j)` into the output coefficient at `sum xi_j` (mod N),
//! so `m = 1` reproduces the pointwise product exactly.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::grid::{random_band_limited_real, sub_seed, Grid, SampledFunction};
use crate::littlewood_paley::{transition, Partition};
use crate::reduce::pairwise_sum;
use crate::spaces::{bmo_norm, hardy_norm};

/// Largest product grid a symbol may occupy.
pub const SYMBOL_BUDGET: usize = 1 << 22;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolGrid {
    n: usize,
    grid: Grid,
    values: Vec<Complex64>,
}

fn check_arity(grid: &Grid, n: usize) -> Result<usize> {
    if !(1..=3).contains(&n) {
        return Err(Error::Config(format!("linearity n={n} not in 1..=3")));
    }
    if n * grid.dim() > 4 {
        return Err(Error::Config(format!("n*d = {} exceeds 4", n * grid.dim())));
    }
    let total = grid.len().checked_pow(n as u32).unwrap_or(usize::MAX);
    if total > SYMBOL_BUDGET {
        return Err(Error::Budget(format!("product grid of {total} points exceeds {SYMBOL_BUDGET}")));
    }
    Ok(total)
}

/// Slot indices of a product index.
pub fn slot_indices(len: usize, n: usize, t: usize) -> [usize; 3] {
    let mut out = [0; 3];
    let mut rest = t;
    for j in (0..n).rev() {
        out[j] = rest % len;
        rest /= len;
    }
    out
}

pub fn product_index(len: usize, slots: &[usize]) -> usize {
    slots.iter().fold(0, |acc, &i| acc * len + i)
}

/// Flattened frequency tuple `(xi_1, ..., xi_n)` of a product index, `n d` entries.
pub fn frequency_tuple(grid: &Grid, n: usize, t: usize) -> Vec<f64> {
    let slots = slot_indices(grid.len(), n, t);
    let mut out = Vec::with_capacity(n * grid.dim());
    for &s in &slots[..n] {
        let xi = grid.frequency(s);
        out.extend(xi[..grid.dim()].iter().map(|&v| v as f64));
    }
    out
}

impl SymbolGrid {
    pub fn from_values(grid: Grid, n: usize, values: Vec<Complex64>) -> Result<Self> {
        let total = check_arity(&grid, n)?;
        if values.len() != total {
            return Err(Error::GridMismatch(format!("{} symbol values for {total} product points", values.len())));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Domain("symbol values must be finite".into()));
        }
        Ok(Self { n, grid, values })
    }

    /// Samples `m` at every frequency tuple (flattened, `n d` reals).
    pub fn from_fn(grid: Grid, n: usize, m: impl Fn(&[f64]) -> Complex64 + Sync) -> Result<Self> {
        let total = check_arity(&grid, n)?;
        let values = (0..total).into_par_iter().map(|t| m(&frequency_tuple(&grid, n, t))).collect();
        Self::from_values(grid, n, values)
    }

    pub fn constant(grid: Grid, n: usize, c: Complex64) -> Result<Self> {
        let total = check_arity(&grid, n)?;
        Self::from_values(grid, n, vec![c; total])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn at(&self, slots: &[usize]) -> Complex64 {
        self.values[product_index(self.grid.len(), slots)]
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { n: self.n, grid: self.grid, values: self.values.iter().map(|v| v * c).collect() }
    }

    /// Pointwise product with a real mask over the product grid.
    pub fn masked(&self, mask: &[f64]) -> Self {
        Self { n: self.n, grid: self.grid, values: self.values.iter().zip(mask).map(|(v, w)| v * w).collect() }
    }
}

/// Number of independent accumulation chunks; fixed so results do not
/// depend on the thread count.
const CHUNKS: usize = 16;

fn nonzero_support(f: &SampledFunction) -> Vec<(usize, Complex64)> {
    f.spectrum().iter().copied().enumerate().filter(|(_, c)| c.re != 0.0 || c.im != 0.0).collect()
}

fn check_inputs(grid: &Grid, n: usize, fs: &[&SampledFunction]) -> Result<()> {
    if fs.len() != n {
        return Err(Error::Parameter(format!("{} inputs for an {n}-linear operator", fs.len())));
    }
    for f in fs {
        grid.check_same(f.grid())?;
    }
    Ok(())
}

/// Direct summation of `T_m(f_1, ..., f_n)`.
pub fn apply_multiplier(m: &SymbolGrid, fs: &[&SampledFunction]) -> Result<SampledFunction> {
    let grid = *m.grid();
    check_inputs(&grid, m.n, fs)?;
    let len = grid.len();
    let supports: Vec<Vec<(usize, Complex64)>> = fs.iter().map(|f| nonzero_support(f)).collect();
    let first = &supports[0];
    let chunk = first.len().div_ceil(CHUNKS).max(1);
    let partials: Vec<Vec<Complex64>> = first
        .par_chunks(chunk)
        .map(|part| {
            let mut acc = vec![zero(); len];
            let mut slots = [0usize; 3];
            for &(i0, c0) in part {
                slots[0] = i0;
                accumulate(&grid, m, &supports, 1, &mut slots, c0, &mut acc);
            }
            acc
        })
        .collect();
    let mut spec = vec![zero(); len];
    for p in &partials {
        for (s, v) in spec.iter_mut().zip(p) {
            *s += v;
        }
    }
    SampledFunction::from_spectrum(grid, spec, None)
}

fn sum_index(grid: &Grid, slots: &[usize]) -> usize {
    let n = grid.n();
    let mut coords = [0usize; 2];
    for &s in slots {
        let c = grid.coords(s);
        for a in 0..grid.dim() {
            coords[a] = (coords[a] + c[a]) % n;
        }
    }
    grid.flat_index(&coords)
}

fn accumulate(
    grid: &Grid,
    m: &SymbolGrid,
    supports: &[Vec<(usize, Complex64)>],
    slot: usize,
    slots: &mut [usize; 3],
    weight: Complex64,
    acc: &mut [Complex64],
) {
    if slot == m.n {
        let t = product_index(grid.len(), &slots[..m.n]);
        acc[sum_index(grid, &slots[..m.n])] += m.values[t] * weight;
        return;
    }
    for &(i, c) in &supports[slot] {
        slots[slot] = i;
        accumulate(grid, m, supports, slot + 1, slots, weight * c, acc);
    }
}

/// Symbol of the form `sum_r prod_j m_{r,j}(xi_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableSymbol {
    grid: Grid,
    n: usize,
    terms: Vec<Vec<Vec<Complex64>>>,
}

impl SeparableSymbol {
    pub fn new(grid: Grid, n: usize, terms: Vec<Vec<Vec<Complex64>>>) -> Result<Self> {
        check_arity(&grid, n)?;
        for term in &terms {
            if term.len() != n || term.iter().any(|f| f.len() != grid.len()) {
                return Err(Error::GridMismatch("separable factor shape does not match".into()));
            }
        }
        Ok(Self { grid, n, terms })
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn to_grid(&self) -> Result<SymbolGrid> {
        let len = self.grid.len();
        let total = len.pow(self.n as u32);
        let values = (0..total)
            .map(|t| {
                let slots = slot_indices(len, self.n, t);
                self.terms.iter().map(|term| (0..self.n).map(|j| term[j][slots[j]]).product::<Complex64>()).sum()
            })
            .collect();
        SymbolGrid::from_values(self.grid, self.n, values)
    }
}

/// Accelerated `T_m` for separable symbols: per-slot spectral multiplies
/// followed by pointwise products.
pub fn apply_separable(m: &SeparableSymbol, fs: &[&SampledFunction]) -> Result<SampledFunction> {
    check_inputs(&m.grid, m.n, fs)?;
    let mut acc = vec![zero(); m.grid.len()];
    for term in &m.terms {
        let mut prod = vec![Complex64::new(1.0, 0.0); m.grid.len()];
        for (factor, f) in term.iter().zip(fs) {
            let g = f.map_spectrum(|i| factor[i]);
            for (p, v) in prod.iter_mut().zip(g.values()) {
                *p *= v;
            }
        }
        for (a, p) in acc.iter_mut().zip(&prod) {
            *a += p;
        }
    }
    SampledFunction::from_values(m.grid, acc)
}

/// `m^{*j}(xi) = m(xi with xi_j replaced by -(xi_1 + ... + xi_n))`, mod N.
pub fn transpose_symbol(m: &SymbolGrid, slot: usize) -> Result<SymbolGrid> {
    if slot >= m.n {
        return Err(Error::Parameter(format!("slot {slot} out of range for n={}", m.n)));
    }
    let grid = m.grid;
    let len = grid.len();
    let values = (0..m.values.len())
        .map(|t| {
            let mut slots = slot_indices(len, m.n, t);
            let s = sum_index(&grid, &slots[..m.n]);
            let xi = grid.frequency(s);
            slots[slot] = grid.spectral_index(&[-xi[0], -xi[1]]);
            m.values[product_index(len, &slots[..m.n])]
        })
        .collect();
    SymbolGrid::from_values(grid, m.n, values)
}

/// Bilinear pairing `sum u v * cell`.
pub fn pairing(u: &SampledFunction, v: &SampledFunction) -> Complex64 {
    let terms: Vec<Complex64> = u.values().iter().zip(v.values()).map(|(a, b)| a * b).collect();
    crate::reduce::pairwise_sum_complex(&terms) * u.grid().cell_volume()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ThetaKind {
    /// 1 on `1/2 <= |xi| <= 2`, supported in `[1/4, 4]`.
    Standard,
    /// 1 on `[1/(4 sqrt n), 2 sqrt n]`, supported in `[1/(8 sqrt n), 4 sqrt n]`.
    Widened,
}

/// Radial annular cutoff on the product space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffTheta {
    pub n: usize,
    pub dim: usize,
    pub kind: ThetaKind,
}

impl CutoffTheta {
    pub fn new(n: usize, dim: usize, kind: ThetaKind) -> Self {
        Self { n, dim, kind }
    }

    pub fn radial(&self, rho: f64) -> f64 {
        match self.kind {
            ThetaKind::Standard => transition(rho / 4.0) - transition(2.0 * rho),
            ThetaKind::Widened => {
                let w = (self.n as f64).sqrt();
                transition(rho / (4.0 * w)) - transition(4.0 * w * rho)
            }
        }
    }

    pub fn outer_radius(&self) -> f64 {
        match self.kind {
            ThetaKind::Standard => 4.0,
            ThetaKind::Widened => 4.0 * (self.n as f64).sqrt(),
        }
    }

    /// Half-width of the sampling box: the smallest power of two covering the support.
    pub fn box_half_width(&self) -> usize {
        (self.outer_radius().ceil() as usize).next_power_of_two()
    }

    /// Values at the integer frequency tuples of the product grid.
    pub fn on_product_grid(&self, grid: &Grid) -> Result<Vec<f64>> {
        let total = check_arity(grid, self.n)?;
        Ok((0..total)
            .map(|t| {
                let xi = frequency_tuple(grid, self.n, t);
                self.radial(xi.iter().map(|v| v * v).sum::<f64>().sqrt())
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolNorm {
    pub value: f64,
    /// `(l, norm at l)` for every dilation evaluated.
    pub per_scale: Vec<(i32, f64)>,
    /// Sample spacing exponent: the box grid has step `2^{-h}`.
    pub h: i32,
    /// Set when the Bessel-potential step saw energy near the box Nyquist
    /// frequency or an overflowing weight.
    pub nyquist: bool,
    /// Largest fraction of box energy in the outer half of the box spectrum.
    pub nyquist_fraction: f64,
}

/// Outer-spectrum energy fraction above which the sampling is flagged.
pub const NYQUIST_FRACTION: f64 = 1e-2;

/// Box sizes at most this many samples.
const BOX_BUDGET: usize = 1 << 22;

fn signed(i: usize, m: usize) -> i64 {
    if i < m / 2 {
        i as i64
    } else {
        i as i64 - m as i64
    }
}

/// `sup_l ||m(2^l .) theta||_{L^r_s}` over the dilations that keep the
/// cutoff's support on the frequency grid. The box of half-width `H` is
/// sampled with step `2^{-h}`; `m(2^l eta)` is read at the integer
/// frequency `2^{l-h} i`, which needs `h <= l`.
pub fn symbol_sobolev_norm(m: &SymbolGrid, s: f64, r: f64, theta: &CutoffTheta) -> Result<SymbolNorm> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Parameter(format!("integrability r = {r} must be finite and positive")));
    }
    let grid = m.grid;
    let nd = m.n * grid.dim();
    if theta.n != m.n || theta.dim != grid.dim() {
        return Err(Error::Parameter("cutoff arity does not match the symbol".into()));
    }
    let half = theta.box_half_width();
    let log_half = half.trailing_zeros() as i32;
    let l_max = grid.depth() as i32 - 1 - log_half;
    let mut h: i32 = if nd <= 2 { 3 } else { 2 };
    h = h.min(l_max);
    while h > 0 && (2 * half << h).pow(nd as u32) > BOX_BUDGET {
        h -= 1;
    }
    if h < 0 {
        return Err(Error::Config(format!("grid depth {} too small for a cutoff of radius {half}", grid.depth())));
    }
    let side = 2 * half << h;
    let shape = vec![side; nd];
    let total = side.pow(nd as u32);
    let step = 2f64.powi(-h);
    let theta_vals: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|b| {
            let mut rest = b;
            let mut rho2 = 0.0;
            for _ in 0..nd {
                let e = signed(rest % side, side) as f64 * step;
                rho2 += e * e;
                rest /= side;
            }
            theta.radial(rho2.sqrt())
        })
        .collect();
    let weights: Vec<f64> = (0..total)
        .map(|b| {
            let mut rest = b;
            let mut v2 = 0.0;
            for _ in 0..nd {
                let v = signed(rest % side, side) as f64 / (2 * half) as f64;
                v2 += v * v;
                rest /= side;
            }
            (1.0 + v2).powf(s / 2.0)
        })
        .collect();
    let overflow = weights.iter().any(|w| !w.is_finite());
    let weights: Vec<f64> = weights.into_iter().map(|w| w.min(f64::MAX)).collect();
    let mut nyquist = overflow;
    let mut nyquist_fraction: f64 = 0.0;
    let mut per_scale = Vec::new();
    let len = grid.len();
    for l in h..=l_max {
        let mult = 1i64 << (l - h);
        let mut u: Vec<Complex64> = (0..total)
            .into_par_iter()
            .map(|b| {
                if theta_vals[b] == 0.0 {
                    return zero();
                }
                let mut rest = b;
                let mut coords = [0i64; 4];
                for c in coords.iter_mut().take(nd).rev() {
                    *c = signed(rest % side, side) * mult;
                    rest /= side;
                }
                let mut slots = [0usize; 3];
                for (j, slot) in slots.iter_mut().enumerate().take(m.n) {
                    let d = grid.dim();
                    *slot = grid.spectral_index(&[coords[j * d], if d == 2 { coords[j * d + 1] } else { 0 }]);
                }
                m.values[product_index(len, &slots[..m.n])] * theta_vals[b]
            })
            .collect();
        fft_nd(&mut u, &shape, true);
        let energy: Vec<f64> = u.iter().map(|c| c.norm_sqr()).collect();
        let total_energy = pairwise_sum(&energy);
        let outer: Vec<f64> = energy
            .iter()
            .enumerate()
            .filter(|(b, _)| {
                let mut rest = *b;
                (0..nd).any(|_| {
                    let k = signed(rest % side, side).unsigned_abs() as usize;
                    rest /= side;
                    4 * k >= side
                })
            })
            .map(|(_, e)| *e)
            .collect();
        if total_energy > 0.0 {
            let frac = pairwise_sum(&outer) / total_energy;
            nyquist_fraction = nyquist_fraction.max(frac);
            nyquist |= frac > NYQUIST_FRACTION;
        }
        for (c, w) in u.iter_mut().zip(&weights) {
            *c *= *w / total as f64;
        }
        fft_nd(&mut u, &shape, false);
        let powered: Vec<f64> = u.iter().map(|c| c.norm().powf(r)).collect();
        let value = (pairwise_sum(&powered) * step.powi(nd as i32)).powf(1.0 / r);
        per_scale.push((l, value));
    }
    let value = per_scale.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    Ok(SymbolNorm { value, per_scale, h, nyquist, nyquist_fraction })
}

/// Per-slot cumulative sums `P_{<=k} = sum_{j<=k} phi_j` for `k` in the
/// partition's range, evaluated on one slot's frequency grid.
struct SlotMasks {
    k_min: i64,
    pieces: Vec<Vec<f64>>,
    cumulative: Vec<Vec<f64>>,
}

impl SlotMasks {
    fn new(part: &Partition) -> Self {
        let len = part.grid().len();
        let pieces: Vec<Vec<f64>> = (part.k_min()..=part.k_max()).map(|k| part.piece(k).unwrap().to_vec()).collect();
        let mut cumulative = Vec::with_capacity(pieces.len());
        let mut run = vec![0.0; len];
        for p in &pieces {
            for (r, v) in run.iter_mut().zip(p) {
                *r += v;
            }
            cumulative.push(run.clone());
        }
        Self { k_min: part.k_min() as i64, pieces, cumulative }
    }

    fn cum(&self, k: i64, i: usize) -> f64 {
        if k < self.k_min {
            0.0
        } else {
            let idx = ((k - self.k_min) as usize).min(self.cumulative.len() - 1);
            self.cumulative[idx][i]
        }
    }

    fn ks(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.pieces.len()).map(move |i| self.k_min + i as i64)
    }

    fn piece(&self, k: i64, i: usize) -> f64 {
        self.pieces[(k - self.k_min) as usize][i]
    }
}

fn product_masks(part: &Partition, n: usize, f: impl Fn(&SlotMasks, &[usize]) -> f64 + Sync) -> Result<Vec<f64>> {
    let grid = *part.grid();
    let total = check_arity(&grid, n)?;
    let masks = SlotMasks::new(part);
    Ok((0..total).into_par_iter().map(|t| f(&masks, &slot_indices(grid.len(), n, t)[..n])).collect())
}

/// Masks `w_i` with `m^{(i)} = m w_i`: slot `i` carries the largest scale,
/// ties going to the lowest slot.
pub fn decompose_symbol(part: &Partition, n: usize) -> Result<Vec<Vec<f64>>> {
    (0..n)
        .map(|i| {
            product_masks(part, n, |sm, slots| {
                sm.ks()
                    .map(|k| {
                        let mut w = sm.piece(k, slots[i]);
                        for (j, &s) in slots.iter().enumerate() {
                            if j < i {
                                w *= sm.cum(k - 1, s);
                            } else if j > i {
                                w *= sm.cum(k, s);
                            }
                        }
                        w
                    })
                    .sum()
            })
        })
        .collect()
}

/// Scale gap `4 + floor(log2 n)` separating the high part of `m^{(1)}`.
pub fn high_gap(n: usize) -> i64 {
    4 + (usize::BITS - 1 - n.leading_zeros()) as i64
}

/// Splits the mask of `m^{(1)}` into `(low, high)`; the high part keeps the
/// other slots at scales at most `k - high_gap(n)`.
pub fn split_low_high(part: &Partition, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let gap = high_gap(n);
    let high = product_masks(part, n, |sm, slots| {
        sm.ks().map(|k| sm.piece(k, slots[0]) * slots[1..].iter().map(|&s| sm.cum(k - gap, s)).product::<f64>()).sum()
    })?;
    let low = product_masks(part, n, |sm, slots| {
        sm.ks()
            .map(|k| {
                let full: f64 = slots[1..].iter().map(|&s| sm.cum(k, s)).product();
                let cut: f64 = slots[1..].iter().map(|&s| sm.cum(k - gap, s)).product();
                sm.piece(k, slots[0]) * (full - cut)
            })
            .sum()
    })?;
    Ok((low, high))
}

/// Slice `k` of the high mask.
pub fn high_slice(part: &Partition, n: usize, k: usize) -> Result<Vec<f64>> {
    let gap = high_gap(n);
    let k = k as i64;
    product_masks(part, n, |sm, slots| {
        if k < sm.k_min || k >= sm.k_min + sm.pieces.len() as i64 {
            return 0.0;
        }
        sm.piece(k, slots[0]) * slots[1..].iter().map(|&s| sm.cum(k - gap, s)).product::<f64>()
    })
}

/// Range of unwrapped `|xi_1 + ... + xi_n|` over the support of a product mask.
pub fn sum_frequency_range(grid: &Grid, n: usize, mask: &[f64]) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (t, w) in mask.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let xi = frequency_tuple(grid, n, t);
        let d = grid.dim();
        let mut s2 = 0.0;
        for a in 0..d {
            let s: f64 = (0..n).map(|j| xi[j * d + a]).sum();
            s2 += s * s;
        }
        lo = lo.min(s2.sqrt());
        hi = hi.max(s2.sqrt());
    }
    (lo <= hi).then_some((lo, hi))
}

/// Which norms the non-dominant slots are measured in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OtherSlots {
    Lebesgue,
    Hardy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub p: f64,
    /// Row `i` lists `p_{i,1}, ..., p_{i,n}`.
    pub exponents: Vec<Vec<f64>>,
    pub s: f64,
    pub r: f64,
    pub others: OtherSlots,
    pub band: f64,
}

impl ProbeConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.exponents.len() != n || self.exponents.iter().any(|row| row.len() != n) {
            return Err(Error::Config(format!("exponent matrix must be {n}x{n}")));
        }
        for (i, row) in self.exponents.iter().enumerate() {
            let sum: f64 = row.iter().map(|p| 1.0 / p).sum();
            if row.iter().any(|p| !(*p > 0.0)) || (sum - 1.0 / self.p).abs() > 1e-12 {
                return Err(Error::Config(format!("row {i}: 1/p != sum_j 1/p_ij (p={}, row={row:?})", self.p)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow {
    pub trial: u64,
    pub seed: u64,
    pub lhs: f64,
    pub symbol_norm: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeTable {
    pub rows: Vec<ProbeRow>,
    pub symbol_norm: SymbolNorm,
}

impl ProbeTable {
    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).filter(|r| r.is_finite()).fold(0.0, f64::max)
    }

    pub fn median_ratio(&self) -> f64 {
        let mut v: Vec<f64> = self.rows.iter().map(|r| r.ratio).filter(|r| r.is_finite()).collect();
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }
}

/// Norm of the dominant slot: `H^p`, or BMO at `p = inf`.
pub fn x_norm(f: &SampledFunction, p: f64) -> Result<f64> {
    if p.is_infinite() {
        Ok(bmo_norm(f))
    } else {
        hardy_norm(f, p, false)
    }
}

/// Mean-zero real band-limited test input.
pub fn probe_input(seed: u64, band: f64, grid: Grid) -> Result<SampledFunction> {
    Ok(random_band_limited_real(seed, band, grid)?.without_mean())
}

/// Per-trial ratio `||T_m f||_p / (L[m] sum_i ||f_i||_X prod_{j != i} ||f_j||)`.
pub fn boundedness_probe(
    m: &SymbolGrid,
    theta: &CutoffTheta,
    cfg: &ProbeConfig,
    trials: u64,
    seed: u64,
) -> Result<ProbeTable> {
    cfg.validate(m.n)?;
    let grid = m.grid;
    let norm = symbol_sobolev_norm(m, cfg.s, cfg.r, theta)?;
    let rows = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = seed ^ trial;
            let fs = (0..m.n)
                .map(|j| probe_input(sub_seed(trial_seed, j as u64), cfg.band, grid))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&SampledFunction> = fs.iter().collect();
            let lhs = apply_multiplier(m, &refs)?.lp_norm(cfg.p);
            let mut sum = 0.0;
            for i in 0..m.n {
                let mut term = x_norm(&fs[i], cfg.exponents[i][i])?;
                for j in (0..m.n).filter(|&j| j != i) {
                    let pij = cfg.exponents[i][j];
                    term *= match cfg.others {
                        OtherSlots::Lebesgue => fs[j].lp_norm(pij),
                        OtherSlots::Hardy => hardy_norm(&fs[j], pij, false)?,
                    };
                }
                sum += term;
            }
            let rhs = norm.value * sum;
            let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
            Ok(ProbeRow { trial, seed: trial_seed, lhs, symbol_norm: norm.value, rhs, ratio })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeTable { rows, symbol_norm: norm })
}

/// Symbol families addressable by name. A builder receives the grid and
/// the linearity.
pub type SymbolBuilder = Arc<dyn Fn(Grid, usize) -> Result<SymbolGrid> + Send + Sync>;

pub struct MultiplierCatalog {
    entries: BTreeMap<String, SymbolBuilder>,
}

impl MultiplierCatalog {
    pub fn builtin() -> Self {
        let mut cat = Self { entries: BTreeMap::new() };
        cat.register("identity", Arc::new(|g, n| SymbolGrid::constant(g, n, Complex64::new(1.0, 0.0))));
        cat.register(
            "angular",
            Arc::new(|g, n| {
                SymbolGrid::from_fn(g, n, |xi| {
                    let r2: f64 = xi.iter().map(|v| v * v).sum();
                    if r2 == 0.0 {
                        return zero();
                    }
                    // First coordinate of slot 1 times last coordinate of slot n, over |xi|^2.
                    Complex64::new(xi[0] * xi[xi.len() - 1] / r2, 0.0)
                })
            }),
        );
        cat.register(
            "paraproduct",
            Arc::new(|g, n| {
                let part = Partition::new(g, crate::littlewood_paley::Mode::Inhomogeneous);
                let (_, high) = split_low_high(&part, n)?;
                SymbolGrid::from_values(g, n, high.into_iter().map(|w| Complex64::new(w, 0.0)).collect())
            }),
        );
        cat
    }

    pub fn register(&mut self, name: &str, builder: SymbolBuilder) {
        self.entries.insert(name.to_string(), builder);
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn build(&self, name: &str, grid: Grid, n: usize) -> Result<SymbolGrid> {
        let b = self.entries.get(name).ok_or_else(|| Error::Config(format!("unknown multiplier symbol '{name}'")))?;
        b(grid, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::random_band_limited;
    use crate::littlewood_paley::Mode;

    fn max_diff(a: &SampledFunction, b: &SampledFunction) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    /// `T_m f(x) = sum_xi m(xi) prod f_j^(xi_j) e^{2 pi i x . sum xi}` per point.
    fn literal(m: &SymbolGrid, fs: &[&SampledFunction]) -> Vec<Complex64> {
        let g = *m.grid();
        let total = g.len().pow(m.n() as u32);
        (0..g.len())
            .map(|x| {
                let p = g.point(x);
                let mut acc = zero();
                for t in 0..total {
                    let slots = slot_indices(g.len(), m.n(), t);
                    let mut w = m.values()[t];
                    let mut phase = 0.0;
                    for j in 0..m.n() {
                        w *= fs[j].spectrum()[slots[j]];
                        let xi = g.frequency(slots[j]);
                        phase += xi[0] as f64 * p[0] + xi[1] as f64 * p[1];
                    }
                    acc += w * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * phase);
                }
                acc
            })
            .collect()
    }

    #[test]
    fn identity_symbol_gives_pointwise_product() {
        let g = Grid::new(1, 6).unwrap();
        let f = random_band_limited(1, 31.0, g).unwrap();
        let h = random_band_limited(2, 31.0, g).unwrap();
        let one = SymbolGrid::constant(g, 2, Complex64::new(1.0, 0.0)).unwrap();
        let out = apply_multiplier(&one, &[&f, &h]).unwrap();
        assert!(max_diff(&out, &f.mul(&h).unwrap()) < 1e-10);
    }

    #[test]
    fn direct_sum_matches_literal_formula() {
        let g = Grid::new(1, 4).unwrap();
        let m = SymbolGrid::from_fn(g, 2, |xi| Complex64::new(1.0 + xi[0] * 0.1, xi[1] * 0.05)).unwrap();
        let f = random_band_limited(3, 7.0, g).unwrap();
        let h = random_band_limited(4, 7.0, g).unwrap();
        let fast = apply_multiplier(&m, &[&f, &h]).unwrap();
        for (a, b) in fast.values().iter().zip(literal(&m, &[&f, &h])) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_modes() {
        let g = Grid::new(1, 5).unwrap();
        let m = SymbolGrid::from_fn(g, 2, |xi| Complex64::new(xi[0] - 2.0 * xi[1], 1.0)).unwrap();
        let a = SampledFunction::mode(g, &[3], Complex64::new(1.0, 0.0));
        let b = SampledFunction::mode(g, &[-5], Complex64::new(1.0, 0.0));
        let out = apply_multiplier(&m, &[&a, &b]).unwrap();
        let expect = SampledFunction::mode(g, &[-2], Complex64::new(13.0, 1.0));
        assert!(max_diff(&out, &expect) < 1e-12);
    }

    #[test]
    fn linear_case_is_a_spectral_multiplier() {
        let g = Grid::new(2, 4).unwrap();
        let m = SymbolGrid::from_fn(g, 1, |xi| Complex64::new((1.0 + xi[0] * xi[0] + xi[1] * xi[1]).powf(0.3), 0.0)).unwrap();
        let f = random_band_limited(5, 7.0, g).unwrap();
        let direct = apply_multiplier(&m, &[&f]).unwrap();
        let spectral = crate::spaces::fractional_laplacian(&f, 0.6, crate::spaces::Fractional::Bessel).unwrap();
        assert!(max_diff(&direct, &spectral) < 1e-12);
    }

    #[test]
    fn separable_path_matches_direct() {
        let g = Grid::new(1, 5).unwrap();
        let radii = g.frequency_radii();
        let f1: Vec<Complex64> = radii.iter().map(|r| Complex64::new((-r / 4.0).exp(), 0.0)).collect();
        let f2: Vec<Complex64> = radii.iter().map(|r| Complex64::new(0.0, 1.0 / (1.0 + r))).collect();
        let sep = SeparableSymbol::new(g, 2, vec![vec![f1.clone(), f2.clone()], vec![f2, f1]]).unwrap();
        let f = random_band_limited(6, 15.0, g).unwrap();
        let h = random_band_limited(7, 15.0, g).unwrap();
        let fast = apply_separable(&sep, &[&f, &h]).unwrap();
        let direct = apply_multiplier(&sep.to_grid().unwrap(), &[&f, &h]).unwrap();
        assert!(max_diff(&fast, &direct) < 1e-10);
    }

    #[test]
    fn transpose_involution_and_adjoint() {
        let g = Grid::new(1, 5).unwrap();
        let m = SymbolGrid::from_fn(g, 2, |xi| Complex64::new((xi[0] * 0.3).cos(), (xi[1] * 0.2).sin())).unwrap();
        let t = transpose_symbol(&m, 0).unwrap();
        assert_eq!(transpose_symbol(&t, 0).unwrap(), m);
        let one = SymbolGrid::constant(g, 2, Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(transpose_symbol(&one, 1).unwrap(), one);
        let f1 = random_band_limited(1, 15.0, g).unwrap();
        let f2 = random_band_limited(2, 15.0, g).unwrap();
        let h = random_band_limited(3, 15.0, g).unwrap();
        let lhs = pairing(&apply_multiplier(&m, &[&f1, &f2]).unwrap(), &h);
        let rhs = pairing(&apply_multiplier(&t, &[&h, &f2]).unwrap(), &f1);
        assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn multilinearity() {
        let g = Grid::new(1, 5).unwrap();
        let m = SymbolGrid::from_fn(g, 2, |xi| Complex64::new(1.0 / (1.0 + xi[0].abs() + xi[1].abs()), 0.0)).unwrap();
        let (a, b) = (Complex64::new(0.5, 1.0), Complex64::new(-2.0, 0.25));
        let f = random_band_limited(1, 9.0, g).unwrap();
        let k = random_band_limited(2, 9.0, g).unwrap();
        let h = random_band_limited(3, 9.0, g).unwrap();
        let combo = f.scale(a).add(&k.scale(b)).unwrap();
        let lhs = apply_multiplier(&m, &[&combo, &h]).unwrap();
        let rhs = apply_multiplier(&m, &[&f, &h]).unwrap().scale(a).add(&apply_multiplier(&m, &[&k, &h]).unwrap().scale(b)).unwrap();
        assert!(max_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn cutoff_shapes() {
        for n in 1..=3 {
            for kind in [ThetaKind::Standard, ThetaKind::Widened] {
                let th = CutoffTheta::new(n, 1, kind);
                let w = if kind == ThetaKind::Standard { 1.0 } else { (n as f64).sqrt() };
                let (one_lo, one_hi) = if kind == ThetaKind::Standard { (0.5, 2.0) } else { (0.25 / w, 2.0 * w) };
                let (sup_lo, sup_hi) = if kind == ThetaKind::Standard { (0.25, 4.0) } else { (0.125 / w, 4.0 * w) };
                for i in 0..2000 {
                    let rho = i as f64 * 0.005;
                    let v = th.radial(rho);
                    assert!((0.0..=1.0).contains(&v));
                    if rho >= one_lo && rho <= one_hi {
                        assert_eq!(v, 1.0);
                    }
                    if rho <= sup_lo || rho >= sup_hi {
                        assert_eq!(v, 0.0);
                    }
                }
            }
        }
        assert_eq!(CutoffTheta::new(2, 1, ThetaKind::Widened).box_half_width(), 8);
        assert_eq!(CutoffTheta::new(2, 1, ThetaKind::Standard).box_half_width(), 4);
    }

    #[test]
    fn sobolev_norm_constants_and_zero() {
        let g = Grid::new(1, 8).unwrap();
        let th = CutoffTheta::new(2, 1, ThetaKind::Standard);
        let one = SymbolGrid::constant(g, 2, Complex64::new(1.0, 0.0)).unwrap();
        let norm = symbol_sobolev_norm(&one, 1.5, 2.0, &th).unwrap();
        assert!(norm.per_scale.len() >= 2);
        let first = norm.per_scale[0].1;
        assert!(norm.per_scale.iter().all(|(_, v)| (v - first).abs() < 1e-12 * first));
        let zero_sym = SymbolGrid::constant(g, 2, zero()).unwrap();
        assert_eq!(symbol_sobolev_norm(&zero_sym, 1.5, 2.0, &th).unwrap().value, 0.0);
        // s = 0, r = 2: Parseval makes the norm the plain L^2 norm of theta.
        let plain = symbol_sobolev_norm(&one, 0.0, 2.0, &th).unwrap();
        let step = 2f64.powi(-plain.h);
        let mut acc = 0.0;
        let side = 8 << plain.h;
        for a in 0..side {
            for b in 0..side {
                let e0 = signed(a, side) as f64 * step;
                let e1 = signed(b, side) as f64 * step;
                acc += th.radial((e0 * e0 + e1 * e1).sqrt()).powi(2) * step * step;
            }
        }
        assert!((plain.value - acc.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_symbol_is_dilation_stable() {
        let g = Grid::new(1, 9).unwrap();
        let th = CutoffTheta::new(2, 1, ThetaKind::Standard);
        let m = MultiplierCatalog::builtin().build("angular", g, 2).unwrap();
        let norm = symbol_sobolev_norm(&m, 1.2, 2.0, &th).unwrap();
        let vals: Vec<f64> = norm.per_scale.iter().map(|(_, v)| *v).collect();
        assert!(vals.len() >= 2);
        let spread = vals.iter().copied().fold(0.0, f64::max) / vals.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(spread < 1.0 + 1e-9, "spread {spread}");
    }

    #[test]
    fn decomposition_reconstructs() {
        for (n, depth) in [(1usize, 6u32), (2, 6), (3, 4)] {
            let g = Grid::new(1, depth).unwrap();
            let part = Partition::new(g, Mode::Inhomogeneous);
            let masks = decompose_symbol(&part, n).unwrap();
            let total = g.len().pow(n as u32);
            for t in 0..total {
                let sum: f64 = masks.iter().map(|m| m[t]).sum();
                assert!((sum - 1.0).abs() < 1e-12, "n={n} t={t} sum={sum}");
            }
            let (low, high) = split_low_high(&part, n).unwrap();
            for t in 0..total {
                assert!((low[t] + high[t] - masks[0][t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn first_slot_dominant_symbol_has_empty_second_piece() {
        let g = Grid::new(1, 7).unwrap();
        let part = Partition::new(g, Mode::Inhomogeneous);
        let masks = decompose_symbol(&part, 2).unwrap();
        for t in 0..g.len() * g.len() {
            let xi = frequency_tuple(&g, 2, t);
            if xi[0].abs() >= 8.0 * (xi[1].abs() + 1.0) {
                assert_eq!(masks[1][t], 0.0);
            }
        }
    }

    #[test]
    fn split_membership() {
        let g = Grid::new(1, 7).unwrap();
        let part = Partition::new(g, Mode::Inhomogeneous);
        let (low, high) = split_low_high(&part, 2).unwrap();
        let len = g.len();
        let at = |a: i64, b: i64| product_index(len, &[g.index_of_freq(a), g.index_of_freq(b)]);
        // Second slot at the first slot's scale: all low.
        assert_eq!(high[at(16, 16)], 0.0);
        assert!(low[at(16, 16)] > 0.0);
        // Second slot far below: all high.
        assert_eq!(low[at(32, 1)], 0.0);
        assert_eq!(high[at(32, 1)], 1.0);
    }

    #[test]
    fn high_slices_land_in_their_annulus() {
        let g = Grid::new(1, 8).unwrap();
        let part = Partition::new(g, Mode::Inhomogeneous);
        for k in 5..=7 {
            let slice = high_slice(&part, 2, k).unwrap();
            let (lo, hi) = sum_frequency_range(&g, 2, &slice).unwrap();
            assert!(lo >= 2f64.powi(k as i32 - 3) && hi <= 2f64.powi(k as i32 + 2));
            let sym = SymbolGrid::from_values(g, 2, slice.iter().map(|w| Complex64::new(*w, 0.0)).collect()).unwrap();
            let f = random_band_limited(1, 63.0, g).unwrap();
            let h = random_band_limited(2, 63.0, g).unwrap();
            let out = apply_multiplier(&sym, &[&f, &h]).unwrap();
            let r = out.spectral_radius();
            let scale = out.spectrum().iter().map(|c| c.norm()).fold(0.0, f64::max);
            for (i, c) in out.spectrum().iter().enumerate() {
                let rad = g.freq_radius(i);
                if rad < 2f64.powi(k as i32 - 3) || rad > 2f64.powi(k as i32 + 2) {
                    assert!(c.norm() <= 1e-13 * scale, "k={k} r={r}");
                }
            }
        }
    }

    #[test]
    fn probe_contract() {
        let g = Grid::new(1, 6).unwrap();
        let th = CutoffTheta::new(2, 1, ThetaKind::Standard);
        let cfg = ProbeConfig {
            p: 2.0,
            exponents: vec![vec![f64::INFINITY, 2.0], vec![2.0, f64::INFINITY]],
            s: 1.5,
            r: 2.0,
            others: OtherSlots::Lebesgue,
            band: 8.0,
        };
        let zero_sym = SymbolGrid::constant(g, 2, zero()).unwrap();
        assert!(boundedness_probe(&zero_sym, &th, &cfg, 4, 1).unwrap().rows.iter().all(|r| r.lhs == 0.0 && r.ratio == 0.0));
        let one = SymbolGrid::constant(g, 2, Complex64::new(1.0, 0.0)).unwrap();
        let t1 = boundedness_probe(&one, &th, &cfg, 6, 3).unwrap();
        assert!(t1.rows.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0));
        let t2 = boundedness_probe(&one.scale(Complex64::new(2.0, 0.0)), &th, &cfg, 6, 3).unwrap();
        for (a, b) in t1.rows.iter().zip(&t2.rows) {
            assert!((a.ratio - b.ratio).abs() <= 1e-12 * a.ratio);
        }
        let bad = ProbeConfig { exponents: vec![vec![2.0, 2.0], vec![2.0, f64::INFINITY]], ..cfg };
        assert!(matches!(boundedness_probe(&one, &th, &bad, 1, 1), Err(Error::Config(_))));
    }
}
