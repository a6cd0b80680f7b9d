//! Named experiment suites behind one trait object interface.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use rayon::prelude::*;

use harmonia_core::grid::sub_seed;
use harmonia_core::{random_band_limited, Grid, Ladder};

use crate::config::ExperimentConfig;
use crate::output::{Column, SuiteOutput};

mod analysis;
mod operators;

pub use analysis::{
    BmoEquivalence, Duality, Equivalence, MaximalLemmas, Marshall, PartitionExactness, EQUIVALENCE_TOP_SCALE,
    MAXIMAL_RATIOS,
};
pub use operators::{KatoPonce, MultiplierBound, MultiplierDecomposition, PseudoBound, PseudoDecomposition};

pub trait Suite: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn schema(&self) -> Vec<Column>;
    /// Suite-specific constraints beyond `ExperimentConfig::validate`.
    fn check(&self, _cfg: &ExperimentConfig) -> Result<()> {
        Ok(())
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<SuiteOutput>;
}

pub struct SuiteRegistry {
    suites: BTreeMap<&'static str, Box<dyn Suite>>,
    order: Vec<&'static str>,
}

impl SuiteRegistry {
    pub fn empty() -> Self {
        Self { suites: BTreeMap::new(), order: Vec::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(PartitionExactness));
        r.register(Box::new(MaximalLemmas));
        r.register(Box::new(Equivalence));
        r.register(Box::new(BmoEquivalence));
        r.register(Box::new(Duality));
        r.register(Box::new(Marshall));
        r.register(Box::new(MultiplierBound));
        r.register(Box::new(MultiplierDecomposition));
        r.register(Box::new(PseudoDecomposition));
        r.register(Box::new(PseudoBound));
        r.register(Box::new(KatoPonce));
        r
    }

    pub fn register(&mut self, suite: Box<dyn Suite>) {
        let name = suite.name();
        if self.suites.insert(name, suite).is_none() {
            self.order.push(name);
        }
    }

    /// Names in registration order.
    pub fn names(&self) -> Vec<&'static str> {
        self.order.clone()
    }

    pub fn get(&self, name: &str) -> Option<&dyn Suite> {
        self.suites.get(name).map(|b| b.as_ref())
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Suite> {
        self.order.iter().map(|n| self.suites[n].as_ref())
    }

    /// Validates and runs the suite named in `cfg`.
    pub fn run(&self, cfg: &ExperimentConfig) -> Result<SuiteOutput> {
        let Some(suite) = self.get(&cfg.suite) else {
            bail!(UnknownSuite { name: cfg.suite.clone(), valid: self.names().join(", ") });
        };
        cfg.validate()?;
        // Anything a suite rejects up front is a configuration problem.
        suite.check(cfg).map_err(|e| harmonia_core::Error::Config(format!("{e:#}")))?;
        suite.run(cfg)
    }
}

#[derive(Debug)]
pub struct UnknownSuite {
    pub name: String,
    pub valid: String,
}

impl std::fmt::Display for UnknownSuite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "unknown suite '{}'; valid suites: {}", self.name, self.valid)
    }
}

impl std::error::Error for UnknownSuite {}

pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    seed ^ trial
}

/// Runs `f` for every trial in parallel and concatenates the rows in trial order.
pub fn per_trial<T: Send>(trials: u64, seed: u64, f: impl Fn(u64, u64) -> Result<Vec<T>> + Sync) -> Result<Vec<T>> {
    let chunks: Vec<Vec<T>> =
        (0..trials).into_par_iter().map(|t| f(t, trial_seed(seed, t))).collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Amplitude `2^a`, `a` uniform on a 1/256 lattice in `[-2, 2)`.
pub fn random_amplitude(seed: u64) -> f64 {
    2f64.powf((seed % 1024) as f64 / 256.0 - 2.0)
}

/// Ladder `k = 0..=top` of complex Gaussian band-limited entries with band
/// `min(2^k, N/2 - 1)` and random amplitudes.
pub fn random_ladder(grid: Grid, seed: u64, top: usize) -> Result<Ladder> {
    let cap = (grid.n() / 2 - 1) as f64;
    let entries = (0..=top)
        .map(|k| {
            let f = random_band_limited(sub_seed(seed, k as u64), 2f64.powi(k as i32).min(cap), grid)?;
            Ok(f.scale(random_amplitude(sub_seed(seed, 1000 + k as u64)).into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ladder::new(grid, 1.0, 0, entries)?)
}

pub fn max_finite(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().filter(|x| x.is_finite()).fold(0.0, f64::max)
}

pub fn median(v: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = v.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}
