//! Function-space (quasi-)norms on the torus: mixed `L^p(l^q)`, Triebel-Lizorkin,
//! BMO/bmo, Hardy, the dyadic Carleson-type supremum, and the Bessel/Riesz
//! fractional powers.
//!
//! Exponents are `f64` with `f64::INFINITY` for `p = inf` or `q = inf`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::dyadic::{level_ids, level_sums};
use crate::error::{Error, Result};
use crate::grid::{lp_norm_of, Grid, Ladder, SampledFunction, ScaleFields};
use crate::littlewood_paley::{low_pass_profile, Mode, Partition};

fn check_exponent(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) {
        return Err(Error::Parameter(format!("exponent {name} = {v} must lie in (0, inf]")));
    }
    Ok(())
}

/// Pointwise `l^q` over the fields, then the Riemann-sum `L^p` norm.
pub fn lp_lq_fields<'a>(grid: &Grid, fields: impl Iterator<Item = &'a [f64]>, p: f64, q: f64) -> f64 {
    let mut acc = vec![0.0_f64; grid.len()];
    for field in fields {
        for (a, v) in acc.iter_mut().zip(field) {
            if q.is_infinite() {
                *a = a.max(*v);
            } else {
                *a += v.powf(q);
            }
        }
    }
    if q.is_finite() {
        for a in &mut acc {
            *a = a.powf(1.0 / q);
        }
    }
    lp_norm_of(grid, &acc, p)
}

pub fn lp_lq_norm(ladder: &Ladder, p: f64, q: f64) -> Result<f64> {
    check_exponent("p", p)?;
    check_exponent("q", q)?;
    let fields = ladder.magnitudes();
    Ok(lp_lq_fields(ladder.grid(), fields.iter().map(|(_, f)| f), p, q))
}

/// `max over dyadic P with level >= mu of (avg_P sum_{k >= level(P)} F_k^q)^{1/q}`.
/// Scales outside the family's range contribute nothing.
pub fn carleson_sup_fields(fields: &ScaleFields, q: f64, mu: usize) -> Result<f64> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::Parameter(format!("Carleson supremum needs 0 < q < inf, got {q}")));
    }
    let grid = fields.grid();
    let depth = grid.depth() as usize;
    if mu > depth {
        return Err(Error::Parameter(format!("minimum level {mu} exceeds depth {depth}")));
    }
    let mut tail = vec![0.0; grid.len()];
    let mut best: f64 = 0.0;
    for level in (mu..=depth).rev() {
        if let Some(f) = fields.get(level) {
            for (t, v) in tail.iter_mut().zip(f) {
                *t += v.powf(q);
            }
        }
        let count = (grid.n() >> level).pow(grid.dim() as u32) as f64;
        for s in level_sums(grid, &tail, level) {
            best = best.max(s / count);
        }
    }
    Ok(best.powf(1.0 / q))
}

pub fn carleson_sup(ladder: &Ladder, q: f64, mu: usize) -> Result<f64> {
    carleson_sup_fields(&ladder.magnitudes(), q, mu)
}

fn weighted_fields(part: &Partition, f: &SampledFunction, s: f64) -> Result<ScaleFields> {
    let ladder = part.decompose(f)?;
    ladder.magnitudes().map(|k, field| {
        let w = 2f64.powf(s * k as f64);
        field.iter().map(|v| v * w).collect()
    })
}

/// Triebel-Lizorkin norm. The partition's mode picks the inhomogeneous form
/// `||Phi_0 * f||_p + ||{2^{sk} phi_k * f}_{k>=1}||_{L^p(l^q)}` or the
/// homogeneous ladder norm; `p = inf, q < inf` uses the Carleson form.
pub fn triebel_norm(f: &SampledFunction, part: &Partition, p: f64, q: f64, s: f64) -> Result<f64> {
    check_exponent("p", p)?;
    check_exponent("q", q)?;
    part.grid().check_same(f.grid())?;
    let grid = *f.grid();
    let all = weighted_fields(part, f, s)?;
    match part.mode() {
        Mode::Inhomogeneous => {
            let low = lp_norm_of(&grid, all.get(0).expect("scale 0 present"), p);
            let high = ScaleFields::new(grid, 1, all.iter().skip(1).map(|(_, v)| v.to_vec()).collect())?;
            let rest = if p.is_infinite() && q.is_finite() {
                carleson_sup_fields(&high, q, 1)?
            } else {
                lp_lq_fields(&grid, high.iter().map(|(_, v)| v), p, q)
            };
            Ok(low + rest)
        }
        Mode::Homogeneous => {
            if p.is_infinite() && q.is_finite() {
                carleson_sup_fields(&all, q, 0)
            } else {
                Ok(lp_lq_fields(&grid, all.iter().map(|(_, v)| v), p, q))
            }
        }
    }
}

/// Max over dyadic cubes of `avg_Q |f - f_Q|`.
pub fn bmo_norm(f: &SampledFunction) -> f64 {
    let grid = *f.grid();
    let values = f.values();
    let re: Vec<f64> = values.iter().map(|v| v.re).collect();
    let im: Vec<f64> = values.iter().map(|v| v.im).collect();
    let mut best: f64 = 0.0;
    for level in 0..grid.depth() as usize {
        let ids = level_ids(&grid, level);
        let count = (grid.n() >> level).pow(grid.dim() as u32) as f64;
        let sum_re = level_sums(&grid, &re, level);
        let sum_im = level_sums(&grid, &im, level);
        let dev: Vec<f64> = values
            .iter()
            .zip(&ids)
            .map(|(v, &id)| (v - Complex64::new(sum_re[id], sum_im[id]) / count).norm())
            .collect();
        for s in level_sums(&grid, &dev, level) {
            best = best.max(s / count);
        }
    }
    best
}

/// BMO oscillation plus the whole-torus average of `|f|`.
pub fn bmo_local_norm(f: &SampledFunction) -> f64 {
    let mags = f.magnitudes();
    bmo_norm(f) + lp_norm_of(f.grid(), &mags, 1.0)
}

/// `||max_{0<=k<=J} |Phi_k * f|||_{L^p}`; the homogeneous variant first
/// removes the mean.
pub fn hardy_norm(f: &SampledFunction, p: f64, local: bool) -> Result<f64> {
    check_exponent("p", p)?;
    let grid = *f.grid();
    let source = if local { f.clone() } else { f.without_mean() };
    let mut envelope = vec![0.0_f64; grid.len()];
    for k in 0..=grid.depth() as i32 {
        let smoothed = source.map_spectrum(|i| Complex64::new(low_pass_profile(k, grid.freq_radius(i)), 0.0));
        for (e, v) in envelope.iter_mut().zip(smoothed.values()) {
            *e = e.max(v.norm());
        }
    }
    Ok(lp_norm_of(&grid, &envelope, p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fractional {
    /// `(1 + |xi|^2)^{s/2}`.
    Bessel,
    /// `|xi|^s`.
    Riesz,
}

pub fn fractional_laplacian(f: &SampledFunction, s: f64, kind: Fractional) -> Result<SampledFunction> {
    let grid = *f.grid();
    match kind {
        Fractional::Bessel => {
            Ok(f.map_spectrum(|i| Complex64::new((1.0 + grid.freq_radius(i).powi(2)).powf(s / 2.0), 0.0)))
        }
        Fractional::Riesz => {
            if s < 0.0 {
                let scale = f.spectrum().iter().map(|c| c.norm()).fold(0.0, f64::max);
                if f.mean().norm() > 1e-12 * scale {
                    return Err(Error::Domain("negative Riesz power of a function with nonzero mean".into()));
                }
            }
            Ok(f.map_spectrum(|i| {
                if i == 0 && s != 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(grid.freq_radius(i).powf(s), 0.0)
                }
            }))
        }
    }
}

/// Norm families selectable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Flavor {
    LplQ,
    TriebelInhom,
    TriebelHomog,
    Bmo,
    BmoLocal,
    HardyH,
    HardyLocal,
    CarlesonSup,
}

impl Flavor {
    pub const ALL: [Flavor; 8] = [
        Flavor::LplQ,
        Flavor::TriebelInhom,
        Flavor::TriebelHomog,
        Flavor::Bmo,
        Flavor::BmoLocal,
        Flavor::HardyH,
        Flavor::HardyLocal,
        Flavor::CarlesonSup,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Flavor::LplQ => "LplQ",
            Flavor::TriebelInhom => "TriebelInhom",
            Flavor::TriebelHomog => "TriebelHomog",
            Flavor::Bmo => "BMO",
            Flavor::BmoLocal => "bmoLocal",
            Flavor::HardyH => "HardyH",
            Flavor::HardyLocal => "HardyLocal",
            Flavor::CarlesonSup => "CarlesonSup",
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Flavor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Flavor::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown norm flavor '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormRequest {
    pub flavor: Flavor,
    pub p: f64,
    pub q: f64,
    pub s: f64,
    pub mu: usize,
}

impl NormRequest {
    pub fn new(flavor: Flavor) -> Self {
        Self { flavor, p: 2.0, q: 2.0, s: 0.0, mu: 0 }
    }
}

/// What a norm is evaluated on.
#[derive(Clone, Copy, Debug)]
pub enum NormTarget<'a> {
    Function(&'a SampledFunction),
    Ladder(&'a Ladder),
}

pub trait NormFlavor: Send + Sync {
    fn flavor(&self) -> Flavor;
    fn evaluate(&self, target: NormTarget<'_>, req: &NormRequest) -> Result<f64>;
}

fn want_function<'a>(target: NormTarget<'a>, flavor: Flavor) -> Result<&'a SampledFunction> {
    match target {
        NormTarget::Function(f) => Ok(f),
        NormTarget::Ladder(_) => Err(Error::Config(format!("{flavor} takes a function, not a ladder"))),
    }
}

fn want_ladder<'a>(target: NormTarget<'a>, flavor: Flavor) -> Result<&'a Ladder> {
    match target {
        NormTarget::Ladder(l) => Ok(l),
        NormTarget::Function(_) => Err(Error::Config(format!("{flavor} takes a ladder, not a function"))),
    }
}

struct Builtin(Flavor);

impl NormFlavor for Builtin {
    fn flavor(&self) -> Flavor {
        self.0
    }

    fn evaluate(&self, target: NormTarget<'_>, req: &NormRequest) -> Result<f64> {
        let fl = self.0;
        match fl {
            Flavor::LplQ => lp_lq_norm(want_ladder(target, fl)?, req.p, req.q),
            Flavor::CarlesonSup => carleson_sup(want_ladder(target, fl)?, req.q, req.mu),
            Flavor::TriebelInhom | Flavor::TriebelHomog => {
                let f = want_function(target, fl)?;
                let mode = if fl == Flavor::TriebelInhom { Mode::Inhomogeneous } else { Mode::Homogeneous };
                triebel_norm(f, &Partition::new(*f.grid(), mode), req.p, req.q, req.s)
            }
            Flavor::Bmo => Ok(bmo_norm(want_function(target, fl)?)),
            Flavor::BmoLocal => Ok(bmo_local_norm(want_function(target, fl)?)),
            Flavor::HardyH => hardy_norm(want_function(target, fl)?, req.p, false),
            Flavor::HardyLocal => hardy_norm(want_function(target, fl)?, req.p, true),
        }
    }
}

/// Norm implementations keyed by flavor name.
pub struct NormRegistry {
    entries: BTreeMap<&'static str, Box<dyn NormFlavor>>,
}

impl NormRegistry {
    pub fn builtin() -> Self {
        let mut reg = Self { entries: BTreeMap::new() };
        for fl in Flavor::ALL {
            reg.register(Box::new(Builtin(fl)));
        }
        reg
    }

    /// Replaces any implementation registered under the same flavor.
    pub fn register(&mut self, norm: Box<dyn NormFlavor>) {
        self.entries.insert(norm.flavor().name(), norm);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn evaluate(&self, name: &str, target: NormTarget<'_>, req: &NormRequest) -> Result<f64> {
        let norm = self
            .entries
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown norm flavor '{name}'")))?;
        norm.evaluate(target, req)
    }
}
