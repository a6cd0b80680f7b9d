//! x-dependent multilinear symbols of type (1,1): seminorms, direct
//! application, and the dyadic Fourier-series decomposition
//! `a_k = sum_l sum_u c_{k,u}^l(x) phi_k^{l_1}(xi_1) prod_j theta_k^{l_j}(xi_j)`.
//!
//! Coefficient boxes are aligned with the integer frequency lattice: scale
//! `k` uses side `M = 4 2^k` per axis, so `eta = xi / 2^k` runs over
//! `[-2, 2)` with step `2^{-k}` and the window phase is `e^{2 pi i <l, xi> / M}`.
//! The full-length truncation `L = M/2` therefore reconstructs `a_k` exactly.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::grid::{random_band_limited_real, sub_seed, Grid, SampledFunction};
use crate::littlewood_paley::{low_pass_profile, piece_profile, tilde_profile, Mode, Partition};
use crate::multiplier::{apply_multiplier, SymbolGrid};
use crate::spaces::{bmo_local_norm, fractional_laplacian, hardy_norm, triebel_norm, Fractional};

/// Highest derivative order available from finite differences.
pub const FD_MAX_ORDER: usize = 4;
/// Samples per coefficient box.
pub const BOX_BUDGET: usize = 1 << 20;
/// Coefficient-table entries (l-tuples times grid points).
pub const TABLE_BUDGET: usize = 1 << 24;
/// Summands `grid points x product support` for direct application.
pub const APPLY_BUDGET: usize = 1 << 28;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

pub trait PseudoSymbol: Send + Sync {
    fn arity(&self) -> usize;
    fn dim(&self) -> usize;
    /// Order `m` of the symbol class.
    fn order(&self) -> f64;
    /// `a(x, xi)` with `x` in `[0,1)^d` and `xi` the flattened `n d` frequency tuple.
    fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64;
    /// Exact `d_xi^alpha d_x^beta a`, when known.
    fn derivative(&self, _alpha: &[usize], _beta: &[usize], _x: &[f64], _xi: &[f64]) -> Option<Complex64> {
        None
    }
    fn x_independent(&self) -> bool {
        false
    }
}

pub type SharedSymbol = Arc<dyn PseudoSymbol>;

type SymbolFn = dyn Fn(&[f64], &[f64]) -> Complex64 + Send + Sync;

/// Closure-backed symbol, the plugin route for user symbols.
pub struct FnSymbol {
    n: usize,
    dim: usize,
    order: f64,
    x_independent: bool,
    f: Arc<SymbolFn>,
}

impl FnSymbol {
    pub fn new(n: usize, dim: usize, order: f64, f: impl Fn(&[f64], &[f64]) -> Complex64 + Send + Sync + 'static) -> Self {
        Self { n, dim, order, x_independent: false, f: Arc::new(f) }
    }

    pub fn x_independent(mut self) -> Self {
        self.x_independent = true;
        self
    }
}

impl PseudoSymbol for FnSymbol {
    fn arity(&self) -> usize {
        self.n
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn order(&self) -> f64 {
        self.order
    }
    fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        (self.f)(x, xi)
    }
    fn x_independent(&self) -> bool {
        self.x_independent
    }
}

/// `a = 1`.
pub struct Identity {
    pub n: usize,
    pub dim: usize,
}

impl PseudoSymbol for Identity {
    fn arity(&self) -> usize {
        self.n
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn order(&self) -> f64 {
        0.0
    }
    fn eval(&self, _x: &[f64], _xi: &[f64]) -> Complex64 {
        Complex64::new(1.0, 0.0)
    }
    fn derivative(&self, alpha: &[usize], beta: &[usize], _x: &[f64], _xi: &[f64]) -> Option<Complex64> {
        let flat = alpha.iter().chain(beta).all(|&a| a == 0);
        Some(if flat { Complex64::new(1.0, 0.0) } else { zero() })
    }
    fn x_independent(&self) -> bool {
        true
    }
}

/// `a(x, xi) = b(x) = 1 + cos(2 pi x_1) / 2`.
pub struct SpatialFactor {
    pub n: usize,
    pub dim: usize,
}

pub fn spatial_factor(x: &[f64]) -> f64 {
    1.0 + 0.5 * (2.0 * PI * x[0]).cos()
}

impl PseudoSymbol for SpatialFactor {
    fn arity(&self) -> usize {
        self.n
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn order(&self) -> f64 {
        0.0
    }
    fn eval(&self, x: &[f64], _xi: &[f64]) -> Complex64 {
        Complex64::new(spatial_factor(x), 0.0)
    }
    fn derivative(&self, alpha: &[usize], beta: &[usize], x: &[f64], _xi: &[f64]) -> Option<Complex64> {
        if alpha.iter().chain(&beta[1..]).any(|&a| a > 0) {
            return Some(zero());
        }
        let b = beta[0];
        if b == 0 {
            return Some(Complex64::new(spatial_factor(x), 0.0));
        }
        let w = 2.0 * PI;
        Some(Complex64::new(0.5 * w.powi(b as i32) * (w * x[0] + b as f64 * PI / 2.0).cos(), 0.0))
    }
}

/// `a(xi) = (1 + |xi|^2)^{m/2}` over the whole frequency tuple.
pub struct Bessel {
    n: usize,
    dim: usize,
    order: f64,
    cache: Mutex<HashMap<Vec<usize>, Vec<BesselTerm>>>,
}

/// `coeff * v^exps * (1 + |v|^2)^{m/2 - drop}`.
#[derive(Clone, Debug)]
struct BesselTerm {
    coeff: f64,
    exps: Vec<u32>,
    drop: u32,
}

impl Bessel {
    pub fn new(n: usize, dim: usize, order: f64) -> Self {
        Self { n, dim, order, cache: Mutex::new(HashMap::new()) }
    }

    fn terms(&self, alpha: &[usize]) -> Vec<BesselTerm> {
        if let Some(t) = self.cache.lock().unwrap().get(alpha) {
            return t.clone();
        }
        let half = self.order / 2.0;
        let mut terms = vec![BesselTerm { coeff: 1.0, exps: vec![0; alpha.len()], drop: 0 }];
        for (i, &a) in alpha.iter().enumerate() {
            for _ in 0..a {
                let mut next: BTreeMap<(Vec<u32>, u32), f64> = BTreeMap::new();
                for t in &terms {
                    if t.exps[i] > 0 {
                        let mut e = t.exps.clone();
                        e[i] -= 1;
                        *next.entry((e, t.drop)).or_default() += t.coeff * t.exps[i] as f64;
                    }
                    let mut e = t.exps.clone();
                    e[i] += 1;
                    *next.entry((e, t.drop + 1)).or_default() += 2.0 * (half - t.drop as f64) * t.coeff;
                }
                terms = next
                    .into_iter()
                    .filter(|(_, c)| *c != 0.0)
                    .map(|((exps, drop), coeff)| BesselTerm { coeff, exps, drop })
                    .collect();
            }
        }
        self.cache.lock().unwrap().insert(alpha.to_vec(), terms.clone());
        terms
    }
}

impl PseudoSymbol for Bessel {
    fn arity(&self) -> usize {
        self.n
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn order(&self) -> f64 {
        self.order
    }
    fn eval(&self, _x: &[f64], xi: &[f64]) -> Complex64 {
        let r2: f64 = xi.iter().map(|v| v * v).sum();
        Complex64::new((1.0 + r2).powf(self.order / 2.0), 0.0)
    }
    fn derivative(&self, alpha: &[usize], beta: &[usize], _x: &[f64], xi: &[f64]) -> Option<Complex64> {
        if beta.iter().any(|&b| b > 0) {
            return Some(zero());
        }
        let base = 1.0 + xi.iter().map(|v| v * v).sum::<f64>();
        let v: f64 = self
            .terms(alpha)
            .iter()
            .map(|t| t.coeff * t.exps.iter().zip(xi).map(|(&e, x)| x.powi(e as i32)).product::<f64>() * base.powf(self.order / 2.0 - t.drop as f64))
            .sum();
        Some(Complex64::new(v, 0.0))
    }
    fn x_independent(&self) -> bool {
        true
    }
}

/// `a(x, xi) = sum_{j=1}^{top} e^{-2 pi i 2^j x_1} psi(2^{-j} |xi|)` with
/// `psi` the annular partition profile: the standard symbol of order 0 and
/// type (1,1) whose operator is unbounded on `L^2`.
pub struct Oscillating {
    pub n: usize,
    pub dim: usize,
    pub top: i32,
}

impl PseudoSymbol for Oscillating {
    fn arity(&self) -> usize {
        self.n
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn order(&self) -> f64 {
        0.0
    }
    fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        (1..=self.top)
            .map(|j| {
                let w = piece_profile(Mode::Homogeneous, j, r);
                if w == 0.0 {
                    zero()
                } else {
                    Complex64::from_polar(w, -2.0 * PI * 2f64.powi(j) * x[0])
                }
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymbolParams {
    pub n: usize,
    pub dim: usize,
    /// Order for the Bessel symbol.
    pub order: f64,
    /// Top scale for the oscillating symbol.
    pub top: i32,
}

pub type PseudoBuilder = Arc<dyn Fn(&SymbolParams) -> SharedSymbol + Send + Sync>;

/// Symbols addressable by name, extensible through `register`.
pub struct PseudoCatalog {
    entries: BTreeMap<String, (PseudoBuilder, bool)>,
}

impl PseudoCatalog {
    pub fn builtin() -> Self {
        let mut c = Self { entries: BTreeMap::new() };
        c.register("identity", true, Arc::new(|p: &SymbolParams| Arc::new(Identity { n: p.n, dim: p.dim }) as SharedSymbol));
        c.register("bx", true, Arc::new(|p: &SymbolParams| Arc::new(SpatialFactor { n: p.n, dim: p.dim }) as SharedSymbol));
        c.register("bessel", true, Arc::new(|p: &SymbolParams| Arc::new(Bessel::new(p.n, p.dim, p.order)) as SharedSymbol));
        c.register(
            "oscillating",
            false,
            Arc::new(|p: &SymbolParams| Arc::new(Oscillating { n: p.n, dim: p.dim, top: p.top }) as SharedSymbol),
        );
        c
    }

    /// `smooth` marks entries whose coefficients should decay faster than any power.
    pub fn register(&mut self, name: &str, smooth: bool, builder: PseudoBuilder) {
        self.entries.insert(name.to_string(), (builder, smooth));
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn is_smooth(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|e| e.1)
    }

    pub fn build(&self, name: &str, params: &SymbolParams) -> Result<SharedSymbol> {
        let (b, _) = self.entries.get(name).ok_or_else(|| Error::Config(format!("unknown pseudo symbol '{name}'")))?;
        Ok(b(params))
    }
}

fn slot_radius(xi: &[f64], dim: usize, j: usize) -> f64 {
    xi[j * dim..(j + 1) * dim].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Inhomogeneous `Phi_k`, zero for `k < 0`.
fn low_pass_or_zero(k: i32, r: f64) -> f64 {
    if k < 0 {
        0.0
    } else {
        low_pass_profile(k, r)
    }
}

/// Weight selecting the part of the product frequency space where slot
/// `slot` carries scale `k` and dominates: lower slots strictly below,
/// higher slots at or below.
pub fn slot_weight(xi: &[f64], n: usize, dim: usize, slot: usize, k: i32) -> f64 {
    let mut w = piece_profile(Mode::Inhomogeneous, k, slot_radius(xi, dim, slot));
    for j in 0..n {
        if w == 0.0 {
            break;
        }
        if j < slot {
            w *= low_pass_or_zero(k - 1, slot_radius(xi, dim, j));
        } else if j > slot {
            w *= low_pass_or_zero(k, slot_radius(xi, dim, j));
        }
    }
    w
}

/// `a` restricted to slot `slot` dominating, at the scales in `k_lo..=k_hi`.
pub struct SlicedSymbol {
    base: SharedSymbol,
    slot: usize,
    k_lo: i32,
    k_hi: i32,
}

impl SlicedSymbol {
    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn scales(&self) -> (i32, i32) {
        (self.k_lo, self.k_hi)
    }

    pub fn weight(&self, xi: &[f64]) -> f64 {
        (self.k_lo..=self.k_hi).map(|k| slot_weight(xi, self.base.arity(), self.base.dim(), self.slot, k)).sum()
    }
}

impl PseudoSymbol for SlicedSymbol {
    fn arity(&self) -> usize {
        self.base.arity()
    }
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn order(&self) -> f64 {
        self.base.order()
    }
    fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        let w = self.weight(xi);
        if w == 0.0 {
            zero()
        } else {
            self.base.eval(x, xi) * w
        }
    }
    fn x_independent(&self) -> bool {
        self.base.x_independent()
    }
}

/// `a_k = a phi_k(xi_1) prod_{j >= 2} Phi_k(xi_j)`.
pub fn annulus_slice(a: &SharedSymbol, k: u32) -> SlicedSymbol {
    SlicedSymbol { base: a.clone(), slot: 0, k_lo: k as i32, k_hi: k as i32 }
}

/// `a^{(i)}` over scales `0..=k_max`; the parts for `i = 0..n` sum to `a`
/// wherever the partition covers every slot.
pub fn slot_part(a: &SharedSymbol, slot: usize, k_max: u32) -> SlicedSymbol {
    SlicedSymbol { base: a.clone(), slot, k_lo: 0, k_hi: k_max as i32 }
}

fn check_symbol(a: &dyn PseudoSymbol, grid: &Grid) -> Result<()> {
    let (n, d) = (a.arity(), a.dim());
    if d != grid.dim() {
        return Err(Error::GridMismatch(format!("symbol dimension {d} on a {}-dimensional grid", grid.dim())));
    }
    if !(1..=3).contains(&n) || n * d > 4 || (d == 2 && n > 2) {
        return Err(Error::Config(format!("pseudo-differential symbols need n <= 3 at d = 1 and n <= 2 at d = 2 (n={n}, d={d})")));
    }
    Ok(())
}

fn point_vec(grid: &Grid, idx: usize) -> Vec<f64> {
    grid.point(idx)[..grid.dim()].to_vec()
}

/// Direct `T_[a](f_1, ..., f_n)(x) = sum a(x, xi) prod f_j^(xi_j) e^{2 pi i <x, sum xi_j>}`.
pub fn apply_pseudo(a: &dyn PseudoSymbol, fs: &[&SampledFunction]) -> Result<SampledFunction> {
    let grid = *fs.first().ok_or_else(|| Error::Parameter("no inputs".into()))?.grid();
    check_symbol(a, &grid)?;
    if fs.len() != a.arity() {
        return Err(Error::Parameter(format!("{} inputs for an {}-linear symbol", fs.len(), a.arity())));
    }
    for f in fs {
        grid.check_same(f.grid())?;
    }
    let supports: Vec<Vec<(usize, Complex64)>> = fs
        .iter()
        .map(|f| f.spectrum().iter().copied().enumerate().filter(|(_, c)| c.re != 0.0 || c.im != 0.0).collect())
        .collect();
    let tuples: usize = supports.iter().map(Vec::len).product();
    if tuples.saturating_mul(grid.len()) > APPLY_BUDGET {
        return Err(Error::Budget(format!("{tuples} frequency tuples on {} points", grid.len())));
    }
    let n = grid.n();
    let d = grid.dim();
    let table: Vec<Complex64> = (0..n).map(|m| Complex64::from_polar(1.0, 2.0 * PI * m as f64 / n as f64)).collect();
    // Flattened tuples with their summed frequency coordinates (mod N).
    let mut flat: Vec<(Vec<f64>, [usize; 2], Complex64)> = vec![(Vec::new(), [0, 0], Complex64::new(1.0, 0.0))];
    for sup in &supports {
        let mut next = Vec::with_capacity(flat.len() * sup.len());
        for (xi, s, w) in &flat {
            for &(i, c) in sup {
                let f = grid.frequency(i);
                let mut xi2 = xi.clone();
                xi2.extend(f[..d].iter().map(|&v| v as f64));
                let c2 = grid.coords(i);
                next.push((xi2, [(s[0] + c2[0]) % n, (s[1] + c2[1]) % n], w * c));
            }
        }
        flat = next;
    }
    let values = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let x = point_vec(&grid, idx);
            let xc = grid.coords(idx);
            let mut acc = zero();
            for (xi, s, w) in &flat {
                let phase = (xc[0] * s[0] + xc[1] * s[1]) % n;
                acc += a.eval(&x, xi) * w * table[phase];
            }
            acc
        })
        .collect();
    SampledFunction::from_values(grid, values)
}

/// Samples the x-independent symbol onto the product grid.
pub fn to_symbol_grid(a: &dyn PseudoSymbol, grid: Grid) -> Result<SymbolGrid> {
    if !a.x_independent() {
        return Err(Error::Parameter("symbol depends on x".into()));
    }
    check_symbol(a, &grid)?;
    let origin = vec![0.0; grid.dim()];
    SymbolGrid::from_fn(grid, a.arity(), |xi| a.eval(&origin, xi))
}

/// Cross-check of the direct sum against the multiplier engine.
pub fn multiplier_path(a: &dyn PseudoSymbol, fs: &[&SampledFunction]) -> Result<SampledFunction> {
    let grid = *fs.first().ok_or_else(|| Error::Parameter("no inputs".into()))?.grid();
    apply_multiplier(&to_symbol_grid(a, grid)?, fs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Seminorm {
    pub value: f64,
    pub order: usize,
    /// Derivative orders attaining the maximum.
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    /// Set when some derivative came from finite differences.
    pub fd_estimated: bool,
}

fn multi_indices(len: usize, max_total: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|v: Vec<usize>| {
                let used: usize = v.iter().sum();
                (0..=max_total - used).map(move |a| {
                    let mut w = v.clone();
                    w.push(a);
                    w
                })
            })
            .collect();
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Centered finite difference of mixed order over the coordinates of `(x, xi)`.
fn finite_difference(a: &dyn PseudoSymbol, alpha: &[usize], beta: &[usize], x: &[f64], xi: &[f64], hx: f64) -> Complex64 {
    let orders: Vec<(usize, usize, f64)> = beta
        .iter()
        .enumerate()
        .map(|(i, &o)| (i, o, hx))
        .chain(alpha.iter().enumerate().map(|(i, &o)| (x.len() + i, o, 1.0)))
        .filter(|(_, o, _)| *o > 0)
        .collect();
    let mut point: Vec<f64> = x.iter().chain(xi).copied().collect();
    fn rec(a: &dyn PseudoSymbol, orders: &[(usize, usize, f64)], point: &mut Vec<f64>, dx: usize) -> Complex64 {
        let Some(&(coord, k, h)) = orders.first() else {
            return a.eval(&point[..dx], &point[dx..]);
        };
        let centre = point[coord];
        let mut acc = zero();
        for i in 0..=k {
            point[coord] = centre + (k as f64 / 2.0 - i as f64) * h;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            acc += rec(a, &orders[1..], point, dx) * (sign * binomial(k, i));
        }
        point[coord] = centre;
        acc / h.powi(k as i32)
    }
    rec(a, &orders, &mut point, x.len())
}

/// Sample points in x: every grid point when there are at most 16, else 16 strided ones.
pub fn seminorm_x_samples(grid: &Grid) -> Vec<Vec<f64>> {
    if grid.len() <= 16 {
        return (0..grid.len()).map(|i| point_vec(grid, i)).collect();
    }
    let n = grid.n();
    match grid.dim() {
        1 => (0..16).map(|i| vec![(i * n / 16) as f64 / n as f64]).collect(),
        _ => (0..16).map(|i| vec![((i / 4) * n / 4) as f64 / n as f64, ((i % 4) * n / 4) as f64 / n as f64]).collect(),
    }
}

/// Per-axis frequency samples: every integer with `|v| <= 16`, then eight
/// log-spaced values per octave up to the grid Nyquist frequency.
pub fn seminorm_axis_samples(grid: &Grid) -> Vec<f64> {
    let nyq = (grid.n() / 2) as i64;
    let mut v: Vec<i64> = (-nyq.min(16)..=nyq.min(16)).collect();
    let mut i = 1;
    loop {
        let x = (16.0 * 2f64.powf(i as f64 / 8.0)).round() as i64;
        if x > nyq {
            break;
        }
        if x > *v.last().unwrap() {
            v.push(x);
            v.insert(0, -x);
        }
        i += 1;
    }
    v.into_iter().map(|x| x as f64).collect()
}

/// Grid maximum of `(1 + sum |xi_j|)^{-m + |alpha| - |beta|} |d_xi^alpha d_x^beta a|`
/// over `|alpha_j|, |beta| <= order`.
pub fn seminorm(a: &dyn PseudoSymbol, grid: &Grid, order: usize) -> Result<Seminorm> {
    check_symbol(a, grid)?;
    let (n, d) = (a.arity(), a.dim());
    let probe = vec![0usize; n * d];
    let xprobe = vec![0usize; d];
    let origin = vec![0.0; d];
    let has_analytic = a.derivative(&probe, &xprobe, &origin, &vec![0.0; n * d]).is_some();
    if !has_analytic && order > FD_MAX_ORDER {
        return Err(Error::Parameter(format!("derivative order {order} exceeds the finite-difference limit {FD_MAX_ORDER}")));
    }
    let slot_indices = multi_indices(d, order);
    let mut alphas: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..n {
        alphas = alphas.into_iter().flat_map(|v| slot_indices.iter().map(move |s| [v.clone(), s.clone()].concat())).collect();
    }
    let betas = if a.x_independent() { vec![vec![0; d]] } else { multi_indices(d, order) };
    let xs = if a.x_independent() { vec![origin.clone()] } else { seminorm_x_samples(grid) };
    let axis = seminorm_axis_samples(grid);
    let nd = n * d;
    let total = axis.len().pow(nd as u32);
    let hx = 1.0 / grid.n() as f64;
    let m = a.order();
    let mut best = Seminorm { value: 0.0, order, alpha: vec![0; n * d], beta: vec![0; d], fd_estimated: !has_analytic };
    for alpha in &alphas {
        for beta in &betas {
            let weight_exp = -m + alpha.iter().sum::<usize>() as f64 - beta.iter().sum::<usize>() as f64;
            let v = (0..total)
                .into_par_iter()
                .map(|t| {
                    let mut rest = t;
                    let mut xi = vec![0.0; nd];
                    for v in xi.iter_mut().rev() {
                        *v = axis[rest % axis.len()];
                        rest /= axis.len();
                    }
                    let size: f64 = (0..n).map(|j| slot_radius(&xi, d, j)).sum();
                    let w = (1.0 + size).powf(weight_exp);
                    xs.iter()
                        .map(|x| {
                            let der = a
                                .derivative(alpha, beta, x, &xi)
                                .unwrap_or_else(|| finite_difference(a, alpha, beta, x, &xi, hx));
                            w * der.norm()
                        })
                        .fold(0.0, f64::max)
                })
                .reduce(|| 0.0, f64::max);
            if v > best.value {
                best.value = v;
                best.alpha = alpha.clone();
                best.beta = beta.clone();
            }
        }
    }
    Ok(best)
}

/// Fourier coefficients `c_k^l(x)` of one annular slice, `|l_j| <= L` per axis.
#[derive(Clone, Debug)]
pub struct CoefficientTable {
    pub k: u32,
    pub n: usize,
    pub dim: usize,
    pub l_max: usize,
    /// Box side `M = 4 2^k` per axis.
    pub side: usize,
    grid: Grid,
    ls: Vec<Vec<i64>>,
    coeffs: Vec<Vec<Complex64>>,
}

fn signed(i: usize, m: usize) -> i64 {
    if i < m / 2 {
        i as i64
    } else {
        i as i64 - m as i64
    }
}

impl CoefficientTable {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Truncation indices, each a flattened `n d` integer vector.
    pub fn indices(&self) -> &[Vec<i64>] {
        &self.ls
    }

    pub fn coefficients(&self) -> &[Vec<Complex64>] {
        &self.coeffs
    }

    pub fn get(&self, l: &[i64]) -> Option<&[Complex64]> {
        self.ls.iter().position(|v| v == l).map(|i| self.coeffs[i].as_slice())
    }

    /// `(ell, max_x max_{max_j |l_j| = ell} |c^l(x)|)` for `ell = 0..=L`.
    pub fn decay_profile(&self) -> Vec<(usize, f64)> {
        let mut prof = vec![0.0_f64; self.l_max + 1];
        for (l, c) in self.ls.iter().zip(&self.coeffs) {
            let ell = l.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0);
            let m = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
            prof[ell] = prof[ell].max(m);
        }
        prof.into_iter().enumerate().collect()
    }

    /// Nonincreasing majorant `sup_{ell' >= ell} c(ell')` of the decay profile.
    pub fn decay_envelope(&self) -> Vec<(usize, f64)> {
        let mut prof = self.decay_profile();
        let mut run = 0.0_f64;
        for p in prof.iter_mut().rev() {
            run = run.max(p.1);
            p.1 = run;
        }
        prof
    }

    /// Least-squares slope of the log envelope against `log(1 + ell)` over
    /// `ell >= 1` with values above `floor * c(0)`.
    pub fn decay_slope(&self, floor: f64) -> Option<f64> {
        let env = self.decay_envelope();
        let top = env.first()?.1;
        let pts: Vec<(f64, f64)> = env
            .iter()
            .skip(1)
            .filter(|(_, v)| *v > floor * top)
            .map(|(ell, v)| ((1.0 + *ell as f64).ln(), v.ln()))
            .collect();
        least_squares_slope(&pts)
    }
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn box_side(k: u32) -> usize {
    4 << k
}

/// Coefficients of `a_k` by a discrete transform over the box `[-2^{k+1}, 2^{k+1})^{nd}`
/// of integer frequencies. `L = M/2` keeps the full transform.
pub fn fourier_coeffs(a_k: &SlicedSymbol, grid: &Grid, l_max: usize) -> Result<CoefficientTable> {
    check_symbol(a_k, grid)?;
    let (k_lo, k_hi) = a_k.scales();
    if a_k.slot() != 0 || k_lo != k_hi || k_lo < 0 {
        return Err(Error::Parameter("coefficients need a single-scale slice of the first slot".into()));
    }
    let k = k_lo as u32;
    let (n, d) = (a_k.arity(), a_k.dim());
    let nd = n * d;
    let side = box_side(k);
    if l_max > side / 2 {
        return Err(Error::Parameter(format!("truncation {l_max} beyond the box Nyquist index {}", side / 2)));
    }
    let total = side.checked_pow(nd as u32).unwrap_or(usize::MAX);
    if total > BOX_BUDGET {
        return Err(Error::Budget(format!("coefficient box of {total} samples at scale {k}")));
    }
    let per_axis: Vec<i64> = (-(l_max as i64)..=(l_max as i64).min(side as i64 / 2 - 1)).collect();
    let mut ls: Vec<Vec<i64>> = vec![vec![]];
    for _ in 0..nd {
        ls = ls.into_iter().flat_map(|v| per_axis.iter().map(move |&l| [v.clone(), vec![l]].concat())).collect();
    }
    let xs: Vec<usize> = if a_k.x_independent() { vec![0] } else { (0..grid.len()).collect() };
    if ls.len().saturating_mul(grid.len()) > TABLE_BUDGET {
        return Err(Error::Budget(format!("{} coefficients on {} points", ls.len(), grid.len())));
    }
    let shape = vec![side; nd];
    let freqs: Vec<Vec<f64>> = (0..total)
        .map(|b| {
            let mut rest = b;
            let mut v = vec![0.0; nd];
            for c in v.iter_mut().rev() {
                *c = signed(rest % side, side) as f64;
                rest /= side;
            }
            v
        })
        .collect();
    let weights: Vec<f64> = freqs.iter().map(|xi| a_k.weight(xi)).collect();
    let flat_of = |l: &[i64]| l.iter().fold(0usize, |acc, &v| acc * side + v.rem_euclid(side as i64) as usize);
    let picks: Vec<usize> = ls.iter().map(|l| flat_of(l)).collect();
    let scale = 1.0 / total as f64;
    let per_x: Vec<Vec<Complex64>> = xs
        .par_iter()
        .map(|&idx| {
            let x = point_vec(grid, idx);
            let mut buf: Vec<Complex64> = freqs
                .iter()
                .zip(&weights)
                .map(|(xi, &w)| if w == 0.0 { zero() } else { a_k.base.eval(&x, xi) * w })
                .collect();
            fft_nd(&mut buf, &shape, true);
            picks.iter().map(|&p| buf[p] * scale).collect()
        })
        .collect();
    let coeffs = (0..ls.len())
        .map(|li| {
            if a_k.x_independent() {
                vec![per_x[0][li]; grid.len()]
            } else {
                per_x.iter().map(|row| row[li]).collect()
            }
        })
        .collect();
    Ok(CoefficientTable { k, n, dim: d, l_max, side, grid: *grid, ls, coeffs })
}

/// Last `u` in the frequency split: the low-pass `Phi_{k+u}` must equal 1 on
/// every grid frequency.
pub fn split_depth(grid: &Grid, k: u32) -> u32 {
    let top = grid.depth() + if grid.dim() == 2 { 1 } else { 0 };
    top.saturating_sub(k)
}

/// `c_{k,0} = Phi_k * c` and `c_{k,u} = phi_{k+u} * c`, indexed `[u][l][x]`.
pub fn frequency_split(table: &CoefficientTable) -> Result<Vec<Vec<Vec<Complex64>>>> {
    let grid = table.grid;
    let k = table.k as i32;
    let radii = grid.frequency_radii();
    let depth = split_depth(&grid, table.k) as i32;
    let masks: Vec<Vec<f64>> = (0..=depth)
        .map(|u| {
            radii
                .iter()
                .map(|&r| if u == 0 { low_pass_profile(k, r) } else { piece_profile(Mode::Inhomogeneous, k + u, r) })
                .collect()
        })
        .collect();
    let spectra: Vec<SampledFunction> = table
        .coeffs
        .iter()
        .map(|c| SampledFunction::from_values(grid, c.clone()))
        .collect::<Result<_>>()?;
    Ok(masks.iter().map(|mask| spectra.iter().map(|c| c.apply_mask(mask).values().to_vec()).collect()).collect())
}

/// `sup_x |c_{k,u}^l(x)|` maximized over `l`, per `u`.
pub fn u_profile(split: &[Vec<Vec<Complex64>>]) -> Vec<f64> {
    split.iter().map(|per_l| per_l.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)).collect()
}

#[derive(Clone, Debug)]
pub struct DecomposedApplication {
    pub output: SampledFunction,
    /// Pieces whose spectral support was verified.
    pub support_checks: usize,
}

/// `sum_k sum_{|l| <= L} sum_u c_{k,u}^l(x) (phi_k^{l_1}(D) f_1)(x) prod_j (theta_k^{l_j}(D) f_j)(x)`
/// over `k = 0..=J`; the truncation is clipped to each scale's box.
pub fn apply_decomposed(a: &SharedSymbol, fs: &[&SampledFunction], l_max: usize) -> Result<DecomposedApplication> {
    let grid = *fs.first().ok_or_else(|| Error::Parameter("no inputs".into()))?.grid();
    check_symbol(a.as_ref(), &grid)?;
    let n = a.arity();
    if fs.len() != n {
        return Err(Error::Parameter(format!("{} inputs for an {n}-linear symbol", fs.len())));
    }
    let d = grid.dim();
    let mut acc = vec![zero(); grid.len()];
    let mut checks = 0;
    for k in 0..=grid.depth() {
        let slice = annulus_slice(a, k);
        let side = box_side(k);
        let table = fourier_coeffs(&slice, &grid, l_max.min(side / 2))?;
        let split = frequency_split(&table)?;
        let ki = k as i32;
        let pieces: Vec<(Vec<Complex64>, usize)> = table
            .ls
            .par_iter()
            .enumerate()
            .map(|(li, l)| {
                let mut prod = vec![Complex64::new(1.0, 0.0); grid.len()];
                for (j, f) in fs.iter().enumerate() {
                    let lj = &l[j * d..(j + 1) * d];
                    let w = f.map_spectrum(|i| {
                        let xi = grid.frequency(i);
                        let r = grid.freq_radius(i);
                        let amp = if j == 0 { tilde_profile(Mode::Inhomogeneous, ki, r) } else { low_pass_profile(ki + 1, r) };
                        if amp == 0.0 {
                            return zero();
                        }
                        let dot: i64 = lj.iter().zip(&xi[..d]).map(|(a, b)| a * b).sum();
                        Complex64::from_polar(amp, 2.0 * PI * dot.rem_euclid(side as i64) as f64 / side as f64)
                    });
                    for (p, v) in prod.iter_mut().zip(w.values()) {
                        *p *= v;
                    }
                }
                let mut sum = vec![zero(); grid.len()];
                let mut checked = 0;
                for (u, per_l) in split.iter().enumerate() {
                    let term: Vec<Complex64> = per_l[li].iter().zip(&prod).map(|(c, p)| c * p).collect();
                    let bound = 2f64.powi(ki + u as i32) + n as f64 * 2f64.powi(ki + 1);
                    if bound < (grid.n() / 2) as f64 {
                        let f = SampledFunction::from_values(grid, term.clone())?;
                        let peak = f.spectrum().iter().map(|c| c.norm()).fold(0.0, f64::max);
                        for (i, c) in f.spectrum().iter().enumerate() {
                            if grid.freq_radius(i) > bound && c.norm() > 1e-10 * peak.max(1e-300) {
                                return Err(Error::Invariant(format!(
                                    "piece (k={k}, u={u}, l={l:?}) has spectrum at radius {} beyond {bound}",
                                    grid.freq_radius(i)
                                )));
                            }
                        }
                        checked += 1;
                    }
                    for (s, t) in sum.iter_mut().zip(&term) {
                        *s += t;
                    }
                }
                Ok((sum, checked))
            })
            .collect::<Result<_>>()?;
        for (sum, checked) in pieces {
            checks += checked;
            for (a, s) in acc.iter_mut().zip(&sum) {
                *a += s;
            }
        }
    }
    Ok(DecomposedApplication { output: SampledFunction::from_values(grid, acc)?, support_checks: checks })
}

/// Relative sup-norm error of the truncated reassembly against the direct
/// application of `a^{(1)}`, per truncation.
pub fn truncation_sweep(a: &SharedSymbol, fs: &[&SampledFunction], ls: &[usize]) -> Result<Vec<(usize, f64)>> {
    let grid = *fs.first().ok_or_else(|| Error::Parameter("no inputs".into()))?.grid();
    let target = apply_pseudo(&slot_part(a, 0, grid.depth()), fs)?;
    let scale = target.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
    ls.iter()
        .map(|&l| {
            let out = apply_decomposed(a, fs, l)?.output;
            let err = out.values().iter().zip(target.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            Ok((l, if scale > 0.0 { err / scale } else { err }))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioRow {
    pub trial: u64,
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioTable {
    pub rows: Vec<RatioRow>,
}

impl RatioTable {
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

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn holder(p: f64, parts: &[f64]) -> bool {
    let s: f64 = parts.iter().map(|q| 1.0 / q).sum();
    parts.iter().all(|q| *q > 0.0) && (s - 1.0 / p).abs() <= 1e-12
}

/// `tau_p = d / min(1, p) - d`.
pub fn tau_p(d: usize, p: f64) -> f64 {
    d as f64 / p.min(1.0) - d as f64
}

/// `tau_{p,q} = d / min(1, p, q) - d`.
pub fn tau_pq(d: usize, p: f64, q: f64) -> f64 {
    d as f64 / p.min(q).min(1.0) - d as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KatoPonceExponents {
    pub p: f64,
    pub p1: f64,
    pub p2: f64,
    pub pt1: f64,
    pub pt2: f64,
}

/// `h^p`, or `bmo` at `p = inf`.
pub fn y_norm(f: &SampledFunction, p: f64) -> Result<f64> {
    if p.is_infinite() {
        Ok(bmo_local_norm(f))
    } else {
        hardy_norm(f, p, true)
    }
}

/// `||J^s(fg)||_{Y^p} / (||J^s f||_{Y^{p1}} ||g||_{h^{p2}} + ||f||_{h^{pt1}} ||J^s g||_{Y^{pt2}})`.
pub fn kato_ponce_ratio(f: &SampledFunction, g: &SampledFunction, s: f64, e: &KatoPonceExponents) -> Result<RatioRow> {
    let js = |h: &SampledFunction| fractional_laplacian(h, s, Fractional::Bessel);
    let lhs = y_norm(&js(&f.mul(g)?)?, e.p)?;
    let rhs = y_norm(&js(f)?, e.p1)? * hardy_norm(g, e.p2, true)? + hardy_norm(f, e.pt1, true)? * y_norm(&js(g)?, e.pt2)?;
    Ok(RatioRow { trial: 0, seed: 0, lhs, rhs, ratio: ratio(lhs, rhs) })
}

pub fn kato_ponce_probe(grid: Grid, s: f64, e: &KatoPonceExponents, band: f64, trials: u64, seed: u64) -> Result<RatioTable> {
    if !holder(e.p, &[e.p1, e.p2]) || !holder(e.p, &[e.pt1, e.pt2]) {
        return Err(Error::Config(format!("exponents {e:?} violate 1/p = 1/p1 + 1/p2 = 1/pt1 + 1/pt2")));
    }
    let tau = tau_p(grid.dim(), e.p);
    if s < 0.0 || (s <= tau && tau > 0.0) {
        return Err(Error::Config(format!("smoothness s={s} must exceed tau_p = {tau}")));
    }
    let rows = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let ts = seed ^ trial;
            let f = random_band_limited_real(sub_seed(ts, 0), band, grid)?;
            let g = random_band_limited_real(sub_seed(ts, 1), band, grid)?;
            let row = kato_ponce_ratio(&f, &g, s, e)?;
            Ok(RatioRow { trial, seed: ts, ..row })
        })
        .collect::<Result<_>>()?;
    Ok(RatioTable { rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoProbeConfig {
    pub p: f64,
    pub q: f64,
    pub s: f64,
    /// Row `i` lists `p_{i,1}, ..., p_{i,n}`.
    pub exponents: Vec<Vec<f64>>,
    /// Seminorm order `N`.
    pub order: usize,
    pub band: f64,
}

/// Ratio `||T_[a] f||_{F_p^{s,q}} / (A_N sum_i ||f_i||_{F^{s+m,q}_{p_ii}} prod_{j != i} ||f_j||_{h^{p_ij}})`.
pub fn pseudo_bound_probe(
    a: &dyn PseudoSymbol,
    grid: Grid,
    cfg: &PseudoProbeConfig,
    trials: u64,
    seed: u64,
) -> Result<(RatioTable, Seminorm)> {
    let n = a.arity();
    if cfg.exponents.len() != n || cfg.exponents.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("exponent matrix must be {n}x{n}")));
    }
    if cfg.exponents.iter().any(|row| !holder(cfg.p, row)) {
        return Err(Error::Config("some row violates 1/p = sum_j 1/p_ij".into()));
    }
    let tau = tau_pq(grid.dim(), cfg.p, cfg.q);
    if cfg.s <= tau {
        return Err(Error::Config(format!("smoothness s={} must exceed tau_(p,q) = {tau}", cfg.s)));
    }
    let norm = seminorm(a, &grid, cfg.order)?;
    let part = Partition::new(grid, Mode::Inhomogeneous);
    let m = a.order();
    let rows = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let ts = seed ^ trial;
            let fs = (0..n).map(|j| random_band_limited_real(sub_seed(ts, j as u64), cfg.band, grid)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&SampledFunction> = fs.iter().collect();
            let lhs = triebel_norm(&apply_pseudo(a, &refs)?, &part, cfg.p, cfg.q, cfg.s)?;
            let mut sum = 0.0;
            for i in 0..n {
                let mut term = triebel_norm(&fs[i], &part, cfg.exponents[i][i], cfg.q, cfg.s + m)?;
                for j in (0..n).filter(|&j| j != i) {
                    term *= hardy_norm(&fs[j], cfg.exponents[i][j], true)?;
                }
                sum += term;
            }
            let rhs = norm.value * sum;
            Ok(RatioRow { trial, seed: ts, lhs, rhs, ratio: ratio(lhs, rhs) })
        })
        .collect::<Result<_>>()?;
    Ok((RatioTable { rows }, norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::random_band_limited;

    fn max_diff(a: &SampledFunction, b: &SampledFunction) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn params(n: usize, dim: usize) -> SymbolParams {
        SymbolParams { n, dim, order: 1.0, top: 6 }
    }

    #[test]
    fn trivial_seminorms() {
        let g = Grid::new(1, 5).unwrap();
        let one = Identity { n: 2, dim: 1 };
        assert_eq!(seminorm(&one, &g, 3).unwrap().value, 1.0);
        let zero_sym = FnSymbol::new(2, 1, 0.0, |_, _| zero()).x_independent();
        let s = seminorm(&zero_sym, &g, 2).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(s.fd_estimated);
        assert!(matches!(seminorm(&zero_sym, &g, 5), Err(Error::Parameter(_))));
    }

    #[test]
    fn bessel_derivatives_match_finite_differences() {
        let b = Bessel::new(2, 1, 0.7);
        let x = [0.0];
        for xi in [[3.0, -5.0], [0.5, 0.25], [-12.0, 7.0]] {
            for alpha in multi_indices(2, 2) {
                let exact = b.derivative(&alpha, &[0], &x, &xi).unwrap();
                // Step 1e-3 keeps the centered-difference error near 1e-6.
                let orders: Vec<(usize, usize, f64)> =
                    alpha.iter().enumerate().filter(|(_, o)| **o > 0).map(|(i, &o)| (1 + i, o, 1e-3)).collect();
                let mut pt = vec![0.0, xi[0], xi[1]];
                fn rec(b: &Bessel, o: &[(usize, usize, f64)], pt: &mut Vec<f64>) -> f64 {
                    let Some(&(c, k, h)) = o.first() else { return b.eval(&pt[..1], &pt[1..]).re };
                    let centre = pt[c];
                    let mut acc = 0.0;
                    for i in 0..=k {
                        pt[c] = centre + (k as f64 / 2.0 - i as f64) * h;
                        acc += if i % 2 == 0 { 1.0 } else { -1.0 } * binomial(k, i) * rec(b, &o[1..], pt);
                    }
                    pt[c] = centre;
                    acc / h.powi(k as i32)
                }
                let fd = rec(&b, &orders, &mut pt);
                assert!((exact.re - fd).abs() < 1e-4 * (1.0 + fd.abs()), "alpha={alpha:?} xi={xi:?} {} vs {fd}", exact.re);
            }
        }
    }

    #[test]
    fn bessel_seminorm_consistent_between_oracles() {
        let g = Grid::new(1, 5).unwrap();
        let b = Bessel::new(1, 1, 1.0);
        let analytic = seminorm(&b, &g, 2).unwrap();
        assert!(!analytic.fd_estimated && analytic.value.is_finite());
        let fd = FnSymbol::new(1, 1, 1.0, |_, xi| Complex64::new((1.0 + xi[0] * xi[0]).sqrt(), 0.0)).x_independent();
        let est = seminorm(&fd, &g, 2).unwrap();
        assert!(est.fd_estimated);
        assert!((est.value - analytic.value).abs() < 0.1 * analytic.value, "{} vs {}", est.value, analytic.value);
    }

    #[test]
    fn identity_and_spatial_factor_apply() {
        let g = Grid::new(1, 5).unwrap();
        let f = random_band_limited(1, 7.0, g).unwrap();
        let h = random_band_limited(2, 7.0, g).unwrap();
        let prod = f.mul(&h).unwrap();
        assert!(max_diff(&apply_pseudo(&Identity { n: 2, dim: 1 }, &[&f, &h]).unwrap(), &prod) < 1e-12);
        let b = SampledFunction::from_fn(g, |x| Complex64::new(spatial_factor(x), 0.0));
        let out = apply_pseudo(&SpatialFactor { n: 2, dim: 1 }, &[&f, &h]).unwrap();
        assert!(max_diff(&out, &b.mul(&prod).unwrap()) < 1e-12);
    }

    #[test]
    fn x_independent_matches_multiplier() {
        let g = Grid::new(1, 5).unwrap();
        let f = random_band_limited(3, 9.0, g).unwrap();
        let h = random_band_limited(4, 9.0, g).unwrap();
        let b: SharedSymbol = Arc::new(Bessel::new(2, 1, 1.0));
        let direct = apply_pseudo(b.as_ref(), &[&f, &h]).unwrap();
        assert!(max_diff(&direct, &multiplier_path(b.as_ref(), &[&f, &h]).unwrap()) < 1e-10);
    }

    #[test]
    fn slot_parts_telescope() {
        let g = Grid::new(1, 5).unwrap();
        let a: SharedSymbol = Arc::new(Oscillating { n: 2, dim: 1, top: 5 });
        let parts: Vec<SlicedSymbol> = (0..2).map(|i| slot_part(&a, i, g.depth())).collect();
        let x = [0.3];
        for i in -15..=15 {
            for j in -15..=15 {
                let xi = [i as f64, j as f64];
                let sum: Complex64 = parts.iter().map(|p| p.eval(&x, &xi)).sum();
                assert!((sum - a.eval(&x, &xi)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn slices_sum_to_first_part_and_respect_support() {
        let a: SharedSymbol = Arc::new(Identity { n: 2, dim: 1 });
        let first = slot_part(&a, 0, 6);
        for i in -40..=40 {
            for j in -40..=40 {
                let xi = [i as f64, j as f64];
                let sum: f64 = (0..=6).map(|k| annulus_slice(&a, k).eval(&[0.0], &xi).re).sum();
                assert!((sum - first.eval(&[0.0], &xi).re).abs() < 1e-12);
                for k in 0..=6u32 {
                    if (i as f64).abs() > 2f64.powi(k as i32) {
                        assert_eq!(annulus_slice(&a, k).eval(&[0.0], &xi), zero());
                    }
                }
            }
        }
    }

    #[test]
    fn coefficients_of_identity_are_window_transforms() {
        let g = Grid::new(1, 5).unwrap();
        let a: SharedSymbol = Arc::new(Identity { n: 2, dim: 1 });
        let table = fourier_coeffs(&annulus_slice(&a, 2), &g, 3).unwrap();
        let m = box_side(2) as i64;
        for l in table.indices() {
            let mut expect = zero();
            for i in -m / 2..m / 2 {
                for j in -m / 2..m / 2 {
                    let w = slot_weight(&[i as f64, j as f64], 2, 1, 0, 2);
                    expect += Complex64::from_polar(w, -2.0 * PI * (l[0] * i + l[1] * j) as f64 / m as f64);
                }
            }
            expect /= (m * m) as f64;
            for c in table.get(l).unwrap() {
                assert!((c - expect).norm() < 1e-14);
            }
        }
        assert!(matches!(fourier_coeffs(&annulus_slice(&a, 2), &g, 9), Err(Error::Parameter(_))));
    }

    #[test]
    fn split_reconstructs_and_kills_constants() {
        let g = Grid::new(1, 6).unwrap();
        let cat = PseudoCatalog::builtin();
        for name in ["identity", "bx", "oscillating"] {
            let a = cat.build(name, &params(2, 1)).unwrap();
            let table = fourier_coeffs(&annulus_slice(&a, 2), &g, 2).unwrap();
            let split = frequency_split(&table).unwrap();
            for (li, c) in table.coefficients().iter().enumerate() {
                for (x, v) in c.iter().enumerate() {
                    let s: Complex64 = split.iter().map(|per_l| per_l[li][x]).sum();
                    assert!((s - v).norm() < 1e-10);
                }
            }
            if name == "identity" {
                assert!(split[1..].iter().flatten().flatten().all(|z| z.norm() < 1e-15));
            }
        }
    }

    #[test]
    fn decomposition_converges_to_direct_application() {
        let g = Grid::new(1, 5).unwrap();
        let f = random_band_limited(5, 15.0, g).unwrap();
        let h = random_band_limited(6, 15.0, g).unwrap();
        let a: SharedSymbol = Arc::new(Identity { n: 2, dim: 1 });
        let full = box_side(g.depth()) / 2;
        let sweep = truncation_sweep(&a, &[&f, &h], &[0, 2, 4, full]).unwrap();
        assert!(sweep[3].1 < 1e-8, "{sweep:?}");
        assert!(sweep[0].1 > sweep[1].1 && sweep[1].1 > sweep[2].1, "{sweep:?}");
        let z: SharedSymbol = Arc::new(FnSymbol::new(2, 1, 0.0, |_, _| zero()));
        let out = apply_decomposed(&z, &[&f, &h], 2).unwrap();
        assert!(out.output.values().iter().all(|v| v.norm() == 0.0));
        assert!(out.support_checks > 0);
    }

    #[test]
    fn kato_ponce_closed_forms() {
        let g = Grid::new(1, 6).unwrap();
        let e = KatoPonceExponents { p: 2.0, p1: 4.0, p2: 4.0, pt1: 4.0, pt2: 4.0 };
        let c = SampledFunction::constant(g, Complex64::new(1.5, 0.0));
        let r = kato_ponce_ratio(&c, &c, 1.0, &e).unwrap();
        assert!((r.ratio - 0.5).abs() < 1e-12, "{}", r.ratio);
        let f = random_band_limited_real(1, 8.0, g).unwrap();
        let z = SampledFunction::zeros(g);
        assert_eq!(kato_ponce_ratio(&f, &z, 1.0, &e).unwrap().ratio, 0.0);
        let bad = KatoPonceExponents { p1: 3.0, ..e };
        assert!(matches!(kato_ponce_probe(g, 1.0, &bad, 8.0, 2, 1), Err(Error::Config(_))));
        let holder_case = KatoPonceExponents { p: 2.0, p1: f64::INFINITY, p2: 2.0, pt1: 2.0, pt2: f64::INFINITY };
        let t = kato_ponce_probe(g, 0.0, &holder_case, 8.0, 8, 3).unwrap();
        assert!(t.rows.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0));
    }
}
