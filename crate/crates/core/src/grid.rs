//! The sampled periodic torus, spectral transforms and test-function generation.
//!
//! Convention: `f(x) = sum_xi F[xi] e^{2 pi i <x, xi>}` with `x` on the grid
//! `{0, 1/N, ..., (N-1)/N}^d` and `xi` in the box `[-N/2, N/2)^d`.

use std::io::{self, Write};
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::reduce::pairwise_sum;

pub const MIN_DEPTH: u32 = 4;
pub const MAX_DEPTH: u32 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    dim: usize,
    depth: u32,
}

impl Grid {
    pub fn new(dim: usize, depth: u32) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Config(format!("dimension d={dim} not in {{1,2}}")));
        }
        if !(MIN_DEPTH..=MAX_DEPTH).contains(&depth) {
            return Err(Error::Config(format!("depth J={depth} not in [{MIN_DEPTH},{MAX_DEPTH}]")));
        }
        Ok(Self { dim, depth })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Samples per axis.
    pub fn n(&self) -> usize {
        1 << self.depth
    }

    /// Total number of grid points, `N^d`.
    pub fn len(&self) -> usize {
        self.n().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.n(); self.dim]
    }

    /// Signed frequency of a per-axis array index.
    pub fn freq_of_index(&self, i: usize) -> i64 {
        let n = self.n();
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// Per-axis array index of a (possibly out-of-box) frequency, wrapped mod N.
    pub fn index_of_freq(&self, xi: i64) -> usize {
        xi.rem_euclid(self.n() as i64) as usize
    }

    pub fn coords(&self, idx: usize) -> [usize; 2] {
        let n = self.n();
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / n, idx % n]
        }
    }

    pub fn flat_index(&self, coords: &[usize]) -> usize {
        let n = self.n();
        coords[..self.dim].iter().fold(0, |acc, &c| acc * n + (c % n))
    }

    /// Signed frequency vector of a flat spectral index (unused axes are 0).
    pub fn frequency(&self, idx: usize) -> [i64; 2] {
        let c = self.coords(idx);
        let mut out = [0; 2];
        for a in 0..self.dim {
            out[a] = self.freq_of_index(c[a]);
        }
        out
    }

    /// Flat spectral index of a frequency vector, wrapped mod N per axis.
    pub fn spectral_index(&self, xi: &[i64]) -> usize {
        let n = self.n();
        xi[..self.dim].iter().fold(0, |acc, &f| acc * n + self.index_of_freq(f))
    }

    /// Euclidean norm `|xi|` of the frequency at a flat spectral index.
    pub fn freq_radius(&self, idx: usize) -> f64 {
        let xi = self.frequency(idx);
        let s: i64 = xi[..self.dim].iter().map(|v| v * v).sum();
        (s as f64).sqrt()
    }

    pub fn frequency_radii(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.freq_radius(i)).collect()
    }

    /// Spatial coordinates of a grid point.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let c = self.coords(idx);
        let n = self.n() as f64;
        [c[0] as f64 / n, c[1] as f64 / n]
    }

    /// Periodic distance `|y|_T` from the origin to grid point `idx`.
    pub fn torus_norm(&self, idx: usize) -> f64 {
        let c = self.coords(idx);
        let n = self.n();
        let mut s = 0.0;
        for &ci in &c[..self.dim] {
            let m = ci.min(n - ci) as f64 / n as f64;
            s += m * m;
        }
        s.sqrt()
    }

    /// Flat index of `x - y` on the torus.
    pub fn sub_index(&self, x: usize, y: usize) -> usize {
        let n = self.n();
        let cx = self.coords(x);
        let cy = self.coords(y);
        let mut out = 0;
        for a in 0..self.dim {
            out = out * n + (cx[a] + n - cy[a]) % n;
        }
        out
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "d={} J={} vs d={} J={}",
                self.dim, self.depth, other.dim, other.depth
            )));
        }
        Ok(())
    }
}

/// Forward transform normalized so that `values = sum spectrum * e^{+}`.
pub fn forward_spectrum(grid: &Grid, values: &[Complex64]) -> Vec<Complex64> {
    let mut data = values.to_vec();
    fft_nd(&mut data, &grid.shape(), true);
    let scale = grid.cell_volume();
    for v in &mut data {
        *v *= scale;
    }
    data
}

pub fn inverse_spectrum(grid: &Grid, spectrum: &[Complex64]) -> Vec<Complex64> {
    let mut data = spectrum.to_vec();
    fft_nd(&mut data, &grid.shape(), false);
    data
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DumpKind {
    Values,
    Spectrum,
}

/// Complex function on a grid with a lazily cached spectrum.
#[derive(Clone, Debug)]
pub struct SampledFunction {
    grid: Grid,
    values: Vec<Complex64>,
    spectrum: OnceLock<Vec<Complex64>>,
    band: Option<f64>,
}

impl SampledFunction {
    pub fn from_values(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values, spectrum: OnceLock::new(), band: None })
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        Self::from_values(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Builds from spectral coefficients. A declared band is enforced by
    /// zeroing coefficients outside it.
    pub fn from_spectrum(grid: Grid, mut spectrum: Vec<Complex64>, band: Option<f64>) -> Result<Self> {
        if spectrum.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} coefficients for a grid of {} points",
                spectrum.len(),
                grid.len()
            )));
        }
        if let Some(b) = band {
            for (i, c) in spectrum.iter_mut().enumerate() {
                if grid.freq_radius(i) > b {
                    *c = Complex64::new(0.0, 0.0);
                }
            }
        }
        let values = inverse_spectrum(&grid, &spectrum);
        let cell = OnceLock::new();
        let _ = cell.set(spectrum);
        Ok(Self { grid, values, spectrum: cell, band })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::from_spectrum(grid, vec![Complex64::new(0.0, 0.0); grid.len()], Some(0.0))
            .expect("length matches")
    }

    pub fn constant(grid: Grid, c: Complex64) -> Self {
        let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
        spec[0] = c;
        Self::from_spectrum(grid, spec, Some(0.0)).expect("length matches")
    }

    /// `e^{2 pi i <a, x>}` with amplitude `amp`.
    pub fn mode(grid: Grid, a: &[i64], amp: Complex64) -> Self {
        let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
        let idx = grid.spectral_index(a);
        spec[idx] = amp;
        let band = grid.freq_radius(idx);
        Self::from_spectrum(grid, spec, Some(band)).expect("length matches")
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..grid.dim()])).collect();
        Self::from_values(grid, values).expect("length matches")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| forward_spectrum(&self.grid, &self.values))
    }

    pub fn to_spectrum(&self) -> Vec<Complex64> {
        self.spectrum().to_vec()
    }

    pub fn band(&self) -> Option<f64> {
        self.band
    }

    /// Largest `|xi|` carrying a nonzero coefficient (0 for the zero function).
    pub fn spectral_radius(&self) -> f64 {
        self.spectrum()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
            .map(|(i, _)| self.grid.freq_radius(i))
            .fold(0.0, f64::max)
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.re).collect()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm()).collect()
    }

    pub fn mean(&self) -> Complex64 {
        self.spectrum()[0]
    }

    /// Riemann-sum `L^p` norm; `p = inf` gives the grid max.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm_of(&self.grid, &self.magnitudes(), p)
    }

    pub fn l2_norm(&self) -> f64 {
        self.lp_norm(2.0)
    }

    /// Sharp projection onto `|xi| <= b`.
    pub fn band_project(&self, b: f64) -> Self {
        let spec = self.to_spectrum();
        let band = Some(self.band.map_or(b, |old| old.min(b)));
        let mut out = Self::from_spectrum(self.grid, spec, Some(b)).expect("length matches");
        out.band = band;
        out
    }

    /// Multiplies the spectrum by `weight(flat spectral index)`. The band is
    /// kept, since a multiplier cannot enlarge the support.
    pub fn map_spectrum(&self, weight: impl Fn(usize) -> Complex64) -> Self {
        let spec: Vec<Complex64> = self.spectrum().iter().enumerate().map(|(i, c)| c * weight(i)).collect();
        let mut out = Self::from_spectrum(self.grid, spec, None).expect("length matches");
        out.band = self.band;
        out
    }

    /// Multiplies the spectrum by a real mask, e.g. a partition piece.
    pub fn apply_mask(&self, mask: &[f64]) -> Self {
        self.map_spectrum(|i| Complex64::new(mask[i], 0.0))
    }

    /// Sets the band after verifying the spectrum vanishes outside it.
    pub fn with_band(mut self, b: f64) -> Result<Self> {
        let r = self.spectral_radius();
        if r > b {
            return Err(Error::Domain(format!("spectrum reaches |xi|={r} beyond band {b}")));
        }
        self.band = Some(b);
        Ok(self)
    }

    pub fn scale(&self, a: Complex64) -> Self {
        let values = self.values.iter().map(|v| v * a).collect();
        let mut out = Self::from_values(self.grid, values).expect("length matches");
        out.band = self.band;
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        let mut out = Self::from_values(self.grid, values)?;
        out.band = match (self.band, other.band) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Self::from_values(self.grid, values)
    }

    /// Translation by whole cells: `g(x) = f(x - shift/N)`.
    pub fn shift(&self, cells: &[usize]) -> Self {
        let g = self.grid;
        let n = g.n();
        let values = (0..g.len())
            .map(|i| {
                let c = g.coords(i);
                let mut src = [0usize; 2];
                for a in 0..g.dim() {
                    src[a] = (c[a] + n - cells[a] % n) % n;
                }
                self.values[g.flat_index(&src)]
            })
            .collect();
        Self::from_values(g, values).expect("length matches")
    }

    /// Mean-zero projection.
    pub fn without_mean(&self) -> Self {
        self.map_spectrum(|i| if i == 0 { Complex64::new(0.0, 0.0) } else { Complex64::new(1.0, 0.0) })
    }

    /// Max relative deviation between `values` and the inverse of `spectrum`.
    pub fn roundtrip_error(&self) -> f64 {
        let back = inverse_spectrum(&self.grid, self.spectrum());
        let scale = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        back.iter().zip(&self.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale
    }

    /// CSV dump: a `# d=..,J=..,kind=..` header then `re,im` rows in flat order.
    pub fn write_csv<W: Write>(&self, mut w: W, kind: DumpKind) -> io::Result<()> {
        let (label, data) = match kind {
            DumpKind::Values => ("values", self.values()),
            DumpKind::Spectrum => ("spectrum", self.spectrum()),
        };
        writeln!(w, "# d={},J={},kind={}", self.grid.dim(), self.grid.depth(), label)?;
        writeln!(w, "re,im")?;
        for c in data {
            writeln!(w, "{:e},{:e}", c.re, c.im)?;
        }
        Ok(())
    }
}

/// Riemann-sum `L^p` norm of a nonnegative field.
pub fn lp_norm_of(grid: &Grid, magnitudes: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return magnitudes.iter().copied().fold(0.0, f64::max);
    }
    let powered: Vec<f64> = magnitudes.iter().map(|m| m.powf(p)).collect();
    (pairwise_sum(&powered) * grid.cell_volume()).powf(1.0 / p)
}

fn gaussian_coefficients(seed: u64, b: f64, dim: usize) -> Vec<([i64; 2], Complex64)> {
    // Frequencies are visited in a fixed order that does not depend on N,
    // so one seed describes the same trigonometric polynomial at every depth.
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let r = b.floor() as i64;
    let mut out = Vec::new();
    let second: Vec<i64> = if dim == 2 { (-r..=r).collect() } else { vec![0] };
    for x0 in -r..=r {
        for &x1 in &second {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            if ((x0 * x0 + x1 * x1) as f64).sqrt() <= b {
                out.push(([x0, x1], Complex64::new(re, im)));
            }
        }
    }
    out
}

fn check_band(b: f64, grid: &Grid) -> Result<()> {
    let limit = (grid.n() / 2) as f64 - 1.0;
    if !(0.0..=limit).contains(&b) {
        return Err(Error::Config(format!("band {b} outside [0, N/2-1 = {limit}]")));
    }
    Ok(())
}

fn normalized(grid: Grid, mut spec: Vec<Complex64>, b: f64) -> SampledFunction {
    let energy = pairwise_sum(&spec.iter().map(|c| c.norm_sqr()).collect::<Vec<_>>());
    let scale = 1.0 / energy.sqrt();
    for c in &mut spec {
        *c *= scale;
    }
    SampledFunction::from_spectrum(grid, spec, Some(b)).expect("length matches")
}

/// Independent stream seed derived from `seed` (splitmix64 finalizer).
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Complex Gaussian random trigonometric polynomial with `|xi| <= b` and
/// unit `L^2` norm.
pub fn random_band_limited(seed: u64, b: f64, grid: Grid) -> Result<SampledFunction> {
    check_band(b, &grid)?;
    let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (xi, c) in gaussian_coefficients(seed, b, grid.dim()) {
        spec[grid.spectral_index(&xi)] = c;
    }
    Ok(normalized(grid, spec, b))
}

/// Real-valued variant: coefficients symmetrized as `(G(xi) + conj G(-xi)) / 2`.
pub fn random_band_limited_real(seed: u64, b: f64, grid: Grid) -> Result<SampledFunction> {
    check_band(b, &grid)?;
    let coeffs = gaussian_coefficients(seed, b, grid.dim());
    let mut raw = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (xi, c) in &coeffs {
        raw[grid.spectral_index(xi)] = *c;
    }
    let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (xi, _) in &coeffs {
        let i = grid.spectral_index(xi);
        let j = grid.spectral_index(&[-xi[0], -xi[1]]);
        spec[i] = (raw[i] + raw[j].conj()) * 0.5;
    }
    let mut f = normalized(grid, spec, b);
    for v in &mut f.values {
        v.im = 0.0;
    }
    Ok(f)
}

/// A family `{f_k}` for `k` in a contiguous range, each `f_k` with band at
/// most `A 2^k`.
#[derive(Clone, Debug)]
pub struct Ladder {
    grid: Grid,
    band_const: f64,
    k_min: usize,
    entries: Vec<SampledFunction>,
}

impl Ladder {
    /// Entries without a declared band are scanned and accepted when their
    /// spectrum already fits.
    pub fn new(grid: Grid, band_const: f64, k_min: usize, entries: Vec<SampledFunction>) -> Result<Self> {
        if band_const <= 0.0 {
            return Err(Error::Parameter(format!("band constant {band_const} must be positive")));
        }
        if entries.is_empty() {
            return Err(Error::Parameter("empty ladder".into()));
        }
        let k_max = k_min + entries.len() - 1;
        if k_max > grid.depth() as usize {
            return Err(Error::Parameter(format!("ladder top {k_max} exceeds depth {}", grid.depth())));
        }
        let mut checked = Vec::with_capacity(entries.len());
        for (offset, e) in entries.into_iter().enumerate() {
            grid.check_same(e.grid())?;
            let limit = band_const * (1u64 << (k_min + offset)) as f64;
            let e = match e.band() {
                Some(b) if b <= limit => e,
                _ => e.with_band(limit)?,
            };
            checked.push(e);
        }
        Ok(Self { grid, band_const, k_min, entries: checked })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn band_const(&self) -> f64 {
        self.band_const
    }

    pub fn k_min(&self) -> usize {
        self.k_min
    }

    pub fn k_max(&self) -> usize {
        self.k_min + self.entries.len() - 1
    }

    pub fn get(&self, k: usize) -> Option<&SampledFunction> {
        k.checked_sub(self.k_min).and_then(|i| self.entries.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &SampledFunction)> {
        self.entries.iter().enumerate().map(move |(i, e)| (self.k_min + i, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn magnitudes(&self) -> ScaleFields {
        ScaleFields {
            grid: self.grid,
            k_min: self.k_min,
            fields: self.entries.iter().map(|e| e.magnitudes()).collect(),
        }
    }
}

/// Nonnegative real fields indexed by scale `k` in a contiguous range.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleFields {
    grid: Grid,
    k_min: usize,
    fields: Vec<Vec<f64>>,
}

impl ScaleFields {
    pub fn new(grid: Grid, k_min: usize, fields: Vec<Vec<f64>>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::Parameter("empty scale family".into()));
        }
        if k_min + fields.len() - 1 > grid.depth() as usize {
            return Err(Error::Parameter("scale family extends beyond the grid depth".into()));
        }
        for f in &fields {
            if f.len() != grid.len() {
                return Err(Error::GridMismatch("field length differs from grid".into()));
            }
            if f.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Domain("scale fields must be nonnegative".into()));
            }
        }
        Ok(Self { grid, k_min, fields })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn k_min(&self) -> usize {
        self.k_min
    }

    pub fn k_max(&self) -> usize {
        self.k_min + self.fields.len() - 1
    }

    pub fn get(&self, k: usize) -> Option<&[f64]> {
        k.checked_sub(self.k_min).and_then(|i| self.fields.get(i)).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.fields.iter().enumerate().map(move |(i, f)| (self.k_min + i, f.as_slice()))
    }

    pub fn map(&self, mut op: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<Self> {
        let fields = self.iter().map(|(k, f)| op(k, f)).collect();
        Self::new(self.grid, self.k_min, fields)
    }

    pub fn max_value(&self) -> f64 {
        self.fields.iter().flatten().copied().fold(0.0, f64::max)
    }
}
