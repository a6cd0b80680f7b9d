use anyhow::{bail, Result};

use harmonia_core::dyadic::{cubes_at_level, DyadicCube};
use harmonia_core::grid::sub_seed;
use harmonia_core::littlewood_paley::{marshall_ratio, reconstruct, Mode, Partition};
use harmonia_core::maximal::{max_ratio, peetre_maximal_field, variant_maximal_field, RATIO_FLOOR};
use harmonia_core::median::{equivalence_report, EquivalenceParams};
use harmonia_core::spaces::{bmo_norm, hardy_norm};
use harmonia_core::{random_band_limited, random_band_limited_real, Grid};

use super::{max_finite, per_trial, random_ladder, Suite};
use crate::config::ExperimentConfig;
use crate::output::{float, fmt_f64, int, text, Column, SuiteOutput, Table};

fn grid_of(cfg: &ExperimentConfig) -> Result<Grid> {
    Ok(Grid::new(cfg.dim, cfg.depth)?)
}

pub struct PartitionExactness;

impl Suite for PartitionExactness {
    fn name(&self) -> &'static str {
        "partition-exactness"
    }
    fn description(&self) -> &'static str {
        "sum of partition masks, support zeros, reconstruct after decompose"
    }
    fn schema(&self) -> Vec<Column> {
        vec![int("trial"), int("seed"), text("mode"), float("recon_error")]
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<SuiteOutput> {
        let grid = grid_of(cfg)?;
        let inhom = Partition::new(grid, Mode::Inhomogeneous);
        let homog = Partition::new(grid, Mode::Homogeneous);
        let band = (grid.n() / 2 - 1) as f64;
        let rows = per_trial(cfg.trials, cfg.seed, |trial, ts| {
            let f = random_band_limited(ts, band, grid)?;
            let mut out = Vec::new();
            for (label, part, g) in [("inhomogeneous", &inhom, f.clone()), ("homogeneous", &homog, f.without_mean())] {
                let back = reconstruct(&part.decompose(&g)?);
                let err = back.sub(&g)?.l2_norm() / g.l2_norm();
                out.push(vec![trial.to_string(), ts.to_string(), label.to_string(), fmt_f64(err)]);
            }
            Ok(out)
        })?;
        let mut table = Table::new(&self.schema());
        rows.into_iter().for_each(|r| table.push(r));
        let mut out = SuiteOutput::new(table);
        let deviation = inhom.sum_deviation(grid.n() as f64 / 4.0).max(homog.sum_deviation(grid.n() as f64 / 4.0));
        let mut violations = 0usize;
        for part in [&inhom, &homog] {
            for k in part.k_min()..=part.k_max() {
                let piece = part.piece(k).expect("k in range");
                let (lo, hi) = if k == 0 { (0.0, 1.0) } else { (2f64.powi(k as i32 - 2), 2f64.powi(k as i32)) };
                violations += (0..grid.len())
                    .filter(|&i| {
                        let r = grid.freq_radius(i);
                        (r < lo || r > hi) && piece[i] != 0.0
                    })
                    .count();
            }
        }
        let recon = max_finite(out.results.column("recon_error"));
        out.note_f64("max_sum_deviation", deviation);
        out.note_f64("max_recon_error", recon);
        out.note("support_violations", violations);
        if deviation > 1e-12 {
            out.fail(format!("partition sum deviates by {deviation:e}"));
        }
        if recon > 1e-10 {
            out.fail(format!("reconstruction error {recon:e}"));
        }
        if violations > 0 {
            out.fail(format!("{violations} mask values outside their annuli"));
        }
        Ok(out)
    }
}

pub struct MaximalLemmas;

/// Band of the scale-`k` test function relative to `2^k`.
pub const MAXIMAL_BAND_FRACTION: f64 = 0.5;
/// Ratios are maximized over the level-`k` cubes inside the level
/// `k - MAXIMAL_WINDOW_LEVELS` cube at the origin, so every scale sees
/// `2^{d MAXIMAL_WINDOW_LEVELS}` cubes.
pub const MAXIMAL_WINDOW_LEVELS: usize = 3;
/// Variant penalty `eps` as a fraction of the admissible range `(0, sigma - d/t)`.
pub const MAXIMAL_EPS_FRACTION: f64 = 0.25;

fn closed_cube_max(grid: &Grid, v: &[f64], q: &DyadicCube) -> f64 {
    q.closure_points(grid).iter().map(|&i| v[i]).fold(f64::NEG_INFINITY, f64::max)
}

fn closed_cube_min(grid: &Grid, v: &[f64], q: &DyadicCube) -> f64 {
    q.closure_points(grid).iter().map(|&i| v[i]).fold(f64::INFINITY, f64::min)
}

fn window_max_ratio(num: &[f64], den: &[f64], window: &[usize]) -> f64 {
    let a: Vec<f64> = window.iter().map(|&i| num[i]).collect();
    let b: Vec<f64> = window.iter().map(|&i| den[i]).collect();
    max_ratio(&a, &b, RATIO_FLOOR)
}

impl Suite for MaximalLemmas {
    fn name(&self) -> &'static str {
        "maximal-lemmas"
    }
    fn description(&self) -> &'static str {
        "pointwise domination ratios between Peetre, variant and cube-wise maximal quantities"
    }
    fn schema(&self) -> Vec<Column> {
        vec![
            int("trial"),
            int("seed"),
            int("k"),
            float("compare"),
            float("composition"),
            float("variant"),
            float("infmax"),
            float("infmax2"),
        ]
    }
    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        if !(cfg.t.is_finite() && cfg.sigma > cfg.dim as f64 / cfg.t) {
            bail!("maximal-lemmas needs finite t and sigma > d/t");
        }
        if cfg.depth < 5 {
            bail!("maximal-lemmas needs J >= 5");
        }
        Ok(())
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<SuiteOutput> {
        let grid = grid_of(cfg)?;
        let (sigma, t) = (cfg.sigma, cfg.t);
        let eps = MAXIMAL_EPS_FRACTION * (sigma - cfg.dim as f64 / t);
        let ks: Vec<usize> = (3..cfg.depth as usize).collect();
        let windows: Vec<(Vec<usize>, Vec<DyadicCube>)> = ks
            .iter()
            .map(|&k| {
                let outer = DyadicCube { level: k.saturating_sub(MAXIMAL_WINDOW_LEVELS), offset: [0, 0] };
                let cubes: Vec<DyadicCube> = cubes_at_level(&grid, k)?
                    .into_iter()
                    .filter(|q| q.offset.iter().all(|&o| o >> (k - outer.level) == 0))
                    .collect();
                Ok((outer.points(&grid), cubes))
            })
            .collect::<Result<_>>()?;
        let rows = per_trial(cfg.trials, cfg.seed, |trial, ts| {
            ks.iter()
                .zip(&windows)
                .map(|(&k, (window, cubes))| {
                    let band = MAXIMAL_BAND_FRACTION * 2f64.powi(k as i32);
                    let f = random_band_limited(sub_seed(ts, k as u64), band, grid)?;
                    let mags = f.magnitudes();
                    let m_t = peetre_maximal_field(&grid, &mags, sigma, k, t)?;
                    let m_inf = peetre_maximal_field(&grid, &mags, sigma, k, f64::INFINITY)?;
                    let compare = window_max_ratio(&m_inf, &m_t, window);
                    let outer = peetre_maximal_field(&grid, &m_t, sigma, k, f64::INFINITY)?;
                    let composition = window_max_ratio(&outer, &m_t, window);
                    let var = variant_maximal_field(&grid, &mags, t, k, eps)?;
                    let variant = window_max_ratio(&m_t, &var, window);
                    let infmax = cubes
                        .iter()
                        .map(|q| closed_cube_max(&grid, &mags, q) / closed_cube_min(&grid, &m_inf, q))
                        .fold(0.0, f64::max);
                    let infmax2 = cubes
                        .iter()
                        .map(|q| closed_cube_max(&grid, &m_t, q) / closed_cube_min(&grid, &m_t, q))
                        .fold(0.0, f64::max);
                    Ok(vec![
                        trial.to_string(),
                        ts.to_string(),
                        k.to_string(),
                        fmt_f64(compare),
                        fmt_f64(composition),
                        fmt_f64(variant),
                        fmt_f64(infmax),
                        fmt_f64(infmax2),
                    ])
                })
                .collect()
        })?;
        let mut table = Table::new(&self.schema());
        rows.into_iter().for_each(|r| table.push(r));
        let mut out = SuiteOutput::new(table);
        let kcol = out.results.column("k");
        for name in MAXIMAL_RATIOS {
            let col = out.results.column(name);
            if col.iter().any(|v| !v.is_finite()) {
                out.fail(format!("{name}: non-finite ratio"));
            }
            for &k in &ks {
                let m = max_finite(col.iter().zip(&kcol).filter(|(_, kk)| **kk as usize == k).map(|(v, _)| *v));
                out.note_f64(format!("{name}_max_k{k}"), m);
            }
        }
        Ok(out)
    }
}

/// Ratio columns of the maximal-lemmas table.
pub const MAXIMAL_RATIOS: [&str; 5] = ["compare", "composition", "variant", "infmax", "infmax2"];

/// Highest ladder scale used by the equivalence and marshall suites; fixed so
/// the test family does not change with the grid.
pub const EQUIVALENCE_TOP_SCALE: usize = 5;

fn equivalence_schema(extra: &[Column]) -> Vec<Column> {
    let mut v = vec![
        int("trial"),
        int("seed"),
        int("mu"),
        float("lhs"),
        float("rhs"),
        float("ratio"),
        float("min_fraction"),
    ];
    v.extend_from_slice(extra);
    v
}

fn equivalence_check(cfg: &ExperimentConfig) -> Result<()> {
    let p = EquivalenceParams { gamma: cfg.gamma, q: cfg.q, sigma: cfg.sigma, t: cfg.t, mu: 0 };
    p.validate(cfg.dim)?;
    Ok(())
}

fn summarize_equivalence(out: &mut SuiteOutput, gamma: f64) {
    let ratios = out.results.column("ratio");
    let c = max_finite(ratios.iter().map(|r| r.max(1.0 / r)));
    let frac = out.results.column("min_fraction").into_iter().fold(f64::INFINITY, f64::min);
    let degenerate = ratios.iter().filter(|r| r.is_nan()).count();
    out.note_f64("C", c);
    out.note_f64("min_fraction", frac);
    out.note("degenerate", degenerate);
    if frac < 1.0 - gamma {
        out.fail(format!("selection fraction {frac} below 1 - gamma"));
    }
    if ratios.iter().any(|r| r.is_infinite() || *r == 0.0) {
        out.fail("one side vanished while the other did not");
    }
}

pub struct Equivalence;

impl Suite for Equivalence {
    fn name(&self) -> &'static str {
        "equivalence"
    }
    fn description(&self) -> &'static str {
        "Carleson supremum against the median-selected L^inf(l^q) norm on random ladders"
    }
    fn schema(&self) -> Vec<Column> {
        equivalence_schema(&[])
    }
    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        equivalence_check(cfg)
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<SuiteOutput> {
        let grid = grid_of(cfg)?;
        let top = EQUIVALENCE_TOP_SCALE.min(cfg.depth as usize);
        let rows = per_trial(cfg.trials, cfg.seed, |trial, ts| {
            let ladder = random_ladder(grid, ts, top)?;
            cfg.mu
                .iter()
                .map(|&mu| {
                    let p = EquivalenceParams { gamma: cfg.gamma, q: cfg.q, sigma: cfg.sigma, t: cfg.t, mu };
                    let r = equivalence_report(&ladder, &p)?;
                    Ok(vec![
                        trial.to_string(),
                        ts.to_string(),
                        mu.to_string(),
                        fmt_f64(r.lhs),
                        fmt_f64(r.rhs),
                        fmt_f64(r.ratio),
                        fmt_f64(r.min_fraction),
                    ])
                })
                .collect()
        })?;
        let mut table = Table::new(&self.schema());
        rows.into_iter().for_each(|r| table.push(r));
        let mut out = SuiteOutput::new(table);
        summarize_equivalence(&mut out, cfg.gamma);
        Ok(out)
    }
}

pub struct BmoEquivalence;

/// Band of the test functions of the BMO suite.
pub const BMO_BAND: f64 = 16.0;

impl Suite for BmoEquivalence {
    fn name(&self) -> &'static str {
        "bmo-equivalence"
    }
    fn description(&self) -> &'static str {
        "the equivalence on Littlewood-Paley ladders of single functions, q = 2"
    }
    fn schema(&self) -> Vec<Column> {
        equivalence_schema(&[float("bmo")])
    }
    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        if cfg.q != 2.0 {
            bail!("bmo-equivalence is defined for q = 2");
        }
        equivalence_check(cfg)
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<SuiteOutput> {
        let grid = grid_of(cfg)?;
        let part = Partition::new(grid, Mode::Homogeneous);
        let band = BMO_BAND.min((grid.n() / 2 - 1) as f64);
        let rows = per_trial(cfg.trials, cfg.seed, |trial, ts| {
            let f = random_band_limited_real(ts, band, grid)?.without_mean();
            let ladder = part.decompose(&f)?;
            let bmo = bmo_norm(&f);
            cfg.mu
                .iter()
                .map(|&mu| {
                    let p = EquivalenceParams { gamma: cfg.gamma, q: 2.0, sigma: cfg.sigma, t: cfg.t, mu };
                    let r = equivalence_report(&ladder, &p)?;
                    Ok(vec![
                        trial.to_string(),
                        ts.to_string(),
                        mu.to_string(),
                        fmt_f64(r.lhs),
                        fmt_f64(r.rhs),
                        fmt_f64(r.ratio),
                        fmt_f64(r.min_fraction),
                        fmt_f64(bmo),
                    ])
                })
                .collect()
        })?;
        let mut table = Table::new(&self.schema());
        rows.into_iter().for_each(|r| table.push(r));
        let mut out = SuiteOutput::new(table);
        summarize_equivalence(&mut out, cfg.gamma);
        Ok(out)
    }
}

pub struct Duality;

/// Band of both factors in the duality pairing.
pub const DUALITY_BAND: f64 = 8.0;

impl Suite for Duality {
    fn name(&self) -> &'static str {
        "duality"
    }
    fn description(&self) -> &'static str {
        "|<f, g>| / (||f||_BMO ||g||_H1) on random pairs"
    }
    fn schema(&self) -> Vec<Column> {
        vec![int("trial"), int("seed"), float("pairing"), float("bmo"), float("hardy1"), float("ratio")]
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<SuiteOutput> {
        let grid = grid_of(cfg)?;
        let band = DUALITY_BAND.min((grid.n() / 2 - 1) as f64);
        let rows = per_trial(cfg.trials, cfg.seed, |trial, ts| {
            let f = random_band_limited_real(sub_seed(ts, 0), band, grid)?;
            let g = random_band_limited_real(sub_seed(ts, 1), band, grid)?.without_mean();
            let terms: Vec<f64> = f.values().iter().zip(g.values()).map(|(a, b)| a.re * b.re).collect();
            let pairing = harmonia_core::reduce::pairwise_sum(&terms).abs() * grid.cell_volume();
            let bmo = bmo_norm(&f);
            let h1 = hardy_norm(&g, 1.0, false)?;
            let ratio = if bmo * h1 > 0.0 { pairing / (bmo * h1) } else { f64::NAN };
            Ok(vec![vec![trial.to_string(), ts.to_string(), fmt_f64(pairing), fmt_f64(bmo), fmt_f64(h1), fmt_f64(ratio)]])
        })?;
        let mut table = Table::new(&self.schema());
        rows.into_iter().for_each(|r| table.push(r));
        let mut out = SuiteOutput::new(table);
        let ratios = out.results.column("ratio");
        out.note_f64("C", max_finite(ratios.iter().copied()));
        out.note_f64("median", super::median(ratios.iter().copied()));
        if ratios.iter().any(|r| !r.is_finite()) {
            out.fail("non-finite duality ratio");
        }
        Ok(out)
    }
}

pub struct Marshall;

impl Suite for Marshall {
    fn name(&self) -> &'static str {
        "marshall"
    }
    fn description(&self) -> &'static str {
        "L^p(l^q) norm of re-projected ladder neighbourhoods against the ladder"
    }
    fn schema(&self) -> Vec<Column> {
        vec![int("trial"), int("seed"), int("h"), float("ratio")]
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<SuiteOutput> {
        let grid = grid_of(cfg)?;
        let part = Partition::new(grid, Mode::Inhomogeneous);
        let top = EQUIVALENCE_TOP_SCALE.min(cfg.depth as usize);
        let q = cfg.q;
        let rows = per_trial(cfg.trials, cfg.seed, |trial, ts| {
            let ladder = random_ladder(grid, ts, top)?;
            [1usize, 2]
                .iter()
                .map(|&h| {
                    let r = marshall_ratio(&part, &ladder, h, 2.0, q)?;
                    Ok(vec![trial.to_string(), ts.to_string(), h.to_string(), fmt_f64(r)])
                })
                .collect()
        })?;
        let mut table = Table::new(&self.schema());
        rows.into_iter().for_each(|r| table.push(r));
        let mut out = SuiteOutput::new(table);
        let ratios = out.results.column("ratio");
        out.note_f64("max_ratio", max_finite(ratios.iter().copied()));
        if ratios.iter().any(|r| !r.is_finite()) {
            out.fail("non-finite marshall ratio");
        }
        Ok(out)
    }
}
