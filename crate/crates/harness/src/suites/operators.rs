use anyhow::{bail, Result};

use harmonia_core::grid::sub_seed;
use harmonia_core::littlewood_paley::{Mode, Partition};
use harmonia_core::multiplier::{
    apply_multiplier, boundedness_probe, decompose_symbol, high_gap, high_slice, probe_input, split_low_high,
    sum_frequency_range, CutoffTheta, MultiplierCatalog, OtherSlots, ProbeConfig, SymbolGrid, ThetaKind,
};
use harmonia_core::pseudodiff::{
    annulus_slice, apply_decomposed, fourier_coeffs, frequency_split, kato_ponce_probe, pseudo_bound_probe,
    truncation_sweep, KatoPonceExponents, PseudoCatalog, PseudoProbeConfig, SharedSymbol, SymbolParams,
};
use harmonia_core::{Complex64, Grid, SampledFunction};

use super::{max_finite, per_trial, Suite};
use crate::config::{ExperimentConfig, ExponentSet};
use crate::output::{float, fmt_f64, int, text, Column, SuiteOutput, Table};

/// Band of every random input fed to the operator suites.
pub const OPERATOR_BAND: f64 = 8.0;

fn band_for(grid: &Grid) -> f64 {
    OPERATOR_BAND.min((grid.n() / 2 - 1) as f64)
}

fn exponent_sets(cfg: &ExperimentConfig, defaults: &[&str]) -> Result<Vec<ExponentSet>> {
    if cfg.exponents.is_empty() {
        defaults.iter().map(|s| s.parse()).collect()
    } else {
        Ok(cfg.exponents.clone())
    }
}

fn max_abs_diff(a: &SampledFunction, b: &SampledFunction) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn sup(f: &SampledFunction) -> f64 {
    f.values().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub struct MultiplierBound;

/// Built-in exponent sets: Lebesgue targets first, then Hardy ones at `p = 1`.
const MULTIPLIER_SETS: [&str; 4] = ["2:4,4;4,4", "2:inf,2;2,inf", "1:2,2;2,2", "1:inf,1;1,inf"];
/// Symbol smoothness for targets with `p > 1` and `p <= 1`.
const MULTIPLIER_S_LEBESGUE: f64 = 1.5;
const MULTIPLIER_S_HARDY: f64 = 2.5;
/// Input band of the multiplier bound: wide enough that the paraproduct's
/// high part (second slot at scale `k - 5`) is reached from `J = 6`.
pub const MULTIPLIER_BAND: f64 = 24.0;

fn multiplier_band(grid: &Grid) -> f64 {
    MULTIPLIER_BAND.min((grid.n() / 2 - 1) as f64)
}

impl Suite for MultiplierBound {
    fn name(&self) -> &'static str {
        "multiplier-bound"
    }
    fn description(&self) -> &'static str {
        "bilinear multiplier output norm against the symbol Sobolev norm times input norms"
    }
    fn schema(&self) -> Vec<Column> {
        vec![
            text("symbol"),
            text("exponents"),
            int("trial"),
            int("seed"),
            float("lhs"),
            float("symbol_norm"),
            float("rhs"),
            float("ratio"),
        ]
    }
    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        if cfg.dim == 2 && cfg.depth > 5 {
            bail!("multiplier-bound at d = 2 needs J <= 5 (product grid budget)");
        }
        for e in exponent_sets(cfg, &MULTIPLIER_SETS)? {
            if e.rows.len() != 2 {
                bail!("multiplier-bound is bilinear; exponent set {e} is not 2x2");
            }
        }
        Ok(())
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<SuiteOutput> {
        let grid = Grid::new(cfg.dim, cfg.depth)?;
        let n = 2;
        let theta = CutoffTheta::new(n, cfg.dim, ThetaKind::Standard);
        let catalog = MultiplierCatalog::builtin();
        let sets = exponent_sets(cfg, &MULTIPLIER_SETS)?;
        let mut table = Table::new(&self.schema());
        let mut out_notes = Vec::new();
        let mut nyquist = Vec::new();
        let mut nyquist_fraction: f64 = 0.0;
        for name in catalog.names() {
            let m = catalog.build(&name, grid, n)?;
            for set in &sets {
                let hardy = set.p <= 1.0;
                let pc = ProbeConfig {
                    p: set.p,
                    exponents: set.rows.clone(),
                    s: if hardy { MULTIPLIER_S_HARDY } else { MULTIPLIER_S_LEBESGUE },
                    r: 2.0,
                    others: if hardy { OtherSlots::Hardy } else { OtherSlots::Lebesgue },
                    band: multiplier_band(&grid),
                };
                let probe = boundedness_probe(&m, &theta, &pc, cfg.trials, cfg.seed)?;
                nyquist_fraction = nyquist_fraction.max(probe.symbol_norm.nyquist_fraction);
                if probe.symbol_norm.nyquist {
                    nyquist.push(format!("{name}@{set}"));
                }
                for r in &probe.rows {
                    table.push(vec![
                        name.clone(),
                        set.to_string(),
                        r.trial.to_string(),
                        r.seed.to_string(),
                        fmt_f64(r.lhs),
                        fmt_f64(r.symbol_norm),
                        fmt_f64(r.rhs),
                        fmt_f64(r.ratio),
                    ]);
                }
                out_notes.push((format!("max_ratio[{name}@{set}]"), probe.max_ratio()));
                out_notes.push((format!("median_ratio[{name}@{set}]"), probe.median_ratio()));
            }
        }
        let mut out = SuiteOutput::new(table);
        for (k, v) in out_notes {
            out.note_f64(k, v);
        }
        out.note_f64("nyquist_fraction", nyquist_fraction);
        out.note("nyquist_flags", if nyquist.is_empty() { "none".to_string() } else { nyquist.join(" ") });
        if out.results.column("ratio").iter().any(|r| !r.is_finite()) {
            out.fail("non-finite multiplier ratio");
        }
        Ok(out)
    }
}

pub struct MultiplierDecomposition;

/// Depth of the product grids used for the `n = 3` mask checks.
const MASK_CHECK_DEPTH: u32 = 5;

impl Suite for MultiplierDecomposition {
    fn name(&self) -> &'static str {
        "multiplier-decomposition"
    }
    fn description(&self) -> &'static str {
        "paraproduct masks and low/high split reassemble the bilinear operator"
    }
    fn schema(&self) -> Vec<Column> {
        vec![int("trial"), int("seed"), float("decompose_error"), float("split_error")]
    }
    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        if cfg.dim == 2 && cfg.depth > 5 {
            bail!("multiplier-decomposition at d = 2 needs J <= 5 (product grid budget)");
        }
        Ok(())
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<SuiteOutput> {
        let grid = Grid::new(cfg.dim, cfg.depth)?;
        let n = 2;
        let part = Partition::new(grid, Mode::Inhomogeneous);
        let m = MultiplierCatalog::builtin().build("angular", grid, n)?;
        let masks = decompose_symbol(&part, n)?;
        let (low, high) = split_low_high(&part, n)?;
        let pieces: Vec<SymbolGrid> = masks.iter().map(|w| m.masked(w)).collect();
        let (m_low, m_high) = (m.masked(&low), m.masked(&high));
        let band = band_for(&grid);
        let rows = per_trial(cfg.trials, cfg.seed, |trial, ts| {
            let fs = (0..n).map(|j| probe_input(sub_seed(ts, j as u64), band, grid)).collect::<harmonia_core::Result<Vec<_>>>()?;
            let refs: Vec<&SampledFunction> = fs.iter().collect();
            let whole = apply_multiplier(&m, &refs)?;
            let scale = sup(&whole).max(f64::MIN_POSITIVE);
            let mut acc = SampledFunction::zeros(grid);
            for p in &pieces {
                acc = acc.add(&apply_multiplier(p, &refs)?)?;
            }
            let decompose_error = max_abs_diff(&acc, &whole) / scale;
            let one = apply_multiplier(&pieces[0], &refs)?;
            let parts = apply_multiplier(&m_low, &refs)?.add(&apply_multiplier(&m_high, &refs)?)?;
            let split_error = max_abs_diff(&parts, &one) / sup(&one).max(f64::MIN_POSITIVE);
            Ok(vec![vec![trial.to_string(), ts.to_string(), fmt_f64(decompose_error), fmt_f64(split_error)]])
        })?;
        let mut table = Table::new(&self.schema());
        rows.into_iter().for_each(|r| table.push(r));
        let mut out = SuiteOutput::new(table);

        // Mask identities on small product grids, independent of the inputs.
        let small = Grid::new(1, MASK_CHECK_DEPTH.min(cfg.depth))?;
        let small_part = Partition::new(small, Mode::Inhomogeneous);
        let mut worst_mask: f64 = 0.0;
        let mut slice_violations = 0usize;
        for k in 1..=3usize {
            let w = decompose_symbol(&small_part, k)?;
            let len = w[0].len();
            let err = (0..len).map(|t| (w.iter().map(|m| m[t]).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
            let (lo, hi) = split_low_high(&small_part, k)?;
            let serr = (0..len).map(|t| (lo[t] + hi[t] - w[0][t]).abs()).fold(0.0, f64::max);
            out.note_f64(format!("mask_error_n{k}"), err);
            out.note_f64(format!("split_mask_error_n{k}"), serr);
            worst_mask = worst_mask.max(err).max(serr);
            for j in (high_gap(k) as usize)..=small.depth() as usize {
                let sl = high_slice(&small_part, k, j)?;
                if let Some((a, b)) = sum_frequency_range(&small, k, &sl) {
                    let (lo_b, hi_b) = (2f64.powi(j as i32 - 3), 2f64.powi(j as i32 + 2));
                    if a < lo_b || b > hi_b {
                        slice_violations += 1;
                    }
                }
            }
        }
        let dec = max_finite(out.results.column("decompose_error"));
        let spl = max_finite(out.results.column("split_error"));
        out.note_f64("max_decompose_error", dec);
        out.note_f64("max_split_error", spl);
        out.note("high_slice_violations", slice_violations);
        if dec > 1e-10 || spl > 1e-10 {
            out.fail(format!("operator reassembly errors {dec:e} / {spl:e}"));
        }
        if worst_mask > 1e-12 {
            out.fail(format!("mask identities off by {worst_mask:e}"));
        }
        if slice_violations > 0 {
            out.fail(format!("{slice_violations} high slices outside their output annulus"));
        }
        Ok(out)
    }
}

/// Grid depth above which the pseudo-differential decomposition is run at
/// this depth instead (the coefficient boxes grow like `4^{J}`).
pub const PSEUDO_DECOMPOSITION_MAX_DEPTH: u32 = 6;
/// Truncations swept by the decomposition suite.
pub const SWEEP: [usize; 4] = [0, 2, 4, 8];
/// Relative floor for the decay fit.
const DECAY_FLOOR: f64 = 1e-13;

fn pseudo_params(n: usize, grid: &Grid) -> SymbolParams {
    SymbolParams { n, dim: grid.dim(), order: 1.0, top: grid.depth() as i32 }
}

pub struct PseudoDecomposition;

impl Suite for PseudoDecomposition {
    fn name(&self) -> &'static str {
        "pseudo-decomposition"
    }
    fn description(&self) -> &'static str {
        "frequency split, truncated reassembly and coefficient decay of bilinear symbols"
    }
    fn schema(&self) -> Vec<Column> {
        vec![text("symbol"), int("trial"), int("seed"), int("L"), float("rel_error")]
    }
    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        if cfg.dim != 1 {
            bail!("pseudo-decomposition runs in d = 1");
        }
        Ok(())
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<SuiteOutput> {
        let depth = cfg.depth.min(PSEUDO_DECOMPOSITION_MAX_DEPTH);
        let grid = Grid::new(1, depth)?;
        let n = 2;
        let catalog = PseudoCatalog::builtin();
        let band = band_for(&grid);
        let names = catalog.names();
        let symbols: Vec<SharedSymbol> =
            names.iter().map(|nm| catalog.build(nm, &pseudo_params(n, &grid))).collect::<harmonia_core::Result<_>>()?;
        let rows = per_trial(cfg.trials, cfg.seed, |trial, ts| {
            let fs = (0..n).map(|j| probe_input(sub_seed(ts, j as u64), band, grid)).collect::<harmonia_core::Result<Vec<_>>>()?;
            let refs: Vec<&SampledFunction> = fs.iter().collect();
            let mut rows = Vec::new();
            for (nm, a) in names.iter().zip(&symbols) {
                for (l, err) in truncation_sweep(a, &refs, &SWEEP)? {
                    rows.push(vec![nm.clone(), trial.to_string(), ts.to_string(), l.to_string(), fmt_f64(err)]);
                }
            }
            Ok(rows)
        })?;
        let mut table = Table::new(&self.schema());
        rows.into_iter().for_each(|r| table.push(r));
        let mut out = SuiteOutput::new(table);
        out.note("depth_used", depth);

        // The criterion applies to the trial-mean error per symbol; single
        // inputs can ring under sharp truncation, so their count is reported only.
        let mut non_monotone = Vec::new();
        for nm in &names {
            let rows: Vec<&Vec<String>> = out.results.rows.iter().filter(|r| &r[0] == nm).collect();
            let errs: Vec<f64> = rows.iter().map(|r| r[4].parse::<f64>().unwrap_or(f64::NAN)).collect();
            let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
            let monotone_trials = errs.chunks(SWEEP.len()).filter(|c| decreasing(c)).count();
            let means: Vec<f64> = (0..SWEEP.len())
                .map(|j| {
                    let col: Vec<f64> = errs.iter().skip(j).step_by(SWEEP.len()).copied().collect();
                    col.iter().sum::<f64>() / col.len() as f64
                })
                .collect();
            for (l, m) in SWEEP.iter().zip(&means) {
                out.note_f64(format!("mean_error[{nm},L={l}]"), *m);
            }
            out.note(format!("monotone_trials[{nm}]"), monotone_trials);
            if !decreasing(&means) {
                non_monotone.push(nm.clone());
            }
        }
        if !non_monotone.is_empty() {
            out.fail(format!("mean truncation error not decreasing in L for {}", non_monotone.join(", ")));
        }

        // Coefficient tables over the full box at the top two scales.
        let mut envelopes = Table::new(&[text("symbol"), int("k"), int("ell"), float("envelope")]);
        let mut worst_split: f64 = 0.0;
        for (nm, a) in names.iter().zip(&symbols) {
            for k in depth - 1..=depth {
                let slice = annulus_slice(a, k);
                let side = harmonia_core::pseudodiff::box_side(k);
                let table = fourier_coeffs(&slice, &grid, side / 2)?;
                let split = frequency_split(&table)?;
                let peak =
                    table.coefficients().iter().flatten().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
                let mut err: f64 = 0.0;
                for (li, c) in table.coefficients().iter().enumerate() {
                    for (x, cx) in c.iter().enumerate() {
                        let s: Complex64 = split.iter().map(|per_l| per_l[li][x]).sum();
                        err = err.max((s - cx).norm() / peak);
                    }
                }
                worst_split = worst_split.max(err);
                let slope = table.decay_slope(DECAY_FLOOR).unwrap_or(f64::NAN);
                out.note_f64(format!("decay_slope[{nm},k={k}]"), slope);
                for (ell, v) in table.decay_envelope() {
                    envelopes.push(vec![nm.clone(), k.to_string(), ell.to_string(), fmt_f64(v)]);
                }
            }
        }
        out.note_f64("max_split_error", worst_split);
        if worst_split > 1e-10 {
            out.fail(format!("frequency split reassembles to {worst_split:e}"));
        }
        // One full-box reassembly per symbol certifies the spectral support checks.
        let f0 = probe_input(sub_seed(cfg.seed, 0), band, grid)?;
        let f1 = probe_input(sub_seed(cfg.seed, 1), band, grid)?;
        let mut checks = 0;
        for a in &symbols {
            checks += apply_decomposed(a, &[&f0, &f1], SWEEP[SWEEP.len() - 1])?.support_checks;
        }
        out.note("support_checks", checks);
        out.series.push(("decay_envelopes".into(), envelopes));
        Ok(out)
    }
}

pub struct PseudoBound;

const PSEUDO_SETS: [&str; 2] = ["2:4,4;4,4", "inf:inf,inf;inf,inf"];
/// Seminorm order used for the bound.
pub const PSEUDO_SEMINORM_ORDER: usize = 2;

impl Suite for PseudoBound {
    fn name(&self) -> &'static str {
        "pseudo-bound"
    }
    fn description(&self) -> &'static str {
        "bilinear pseudo-differential output in F_p^{s,q} against the seminorm times input norms"
    }
    fn schema(&self) -> Vec<Column> {
        vec![
            text("symbol"),
            text("exponents"),
            int("trial"),
            int("seed"),
            float("lhs"),
            float("rhs"),
            float("ratio"),
        ]
    }
    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        for e in exponent_sets(cfg, &PSEUDO_SETS)? {
            if e.rows.len() != 2 {
                bail!("pseudo-bound is bilinear; exponent set {e} is not 2x2");
            }
        }
        Ok(())
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<SuiteOutput> {
        let grid = Grid::new(cfg.dim, cfg.depth)?;
        let n = 2;
        let catalog = PseudoCatalog::builtin();
        let sets = exponent_sets(cfg, &PSEUDO_SETS)?;
        let mut table = Table::new(&self.schema());
        let mut notes = Vec::new();
        for nm in catalog.names().into_iter().filter(|nm| catalog.is_smooth(nm)) {
            let a = catalog.build(&nm, &pseudo_params(n, &grid))?;
            for set in &sets {
                let pc = PseudoProbeConfig {
                    p: set.p,
                    q: cfg.q,
                    s: cfg.s,
                    exponents: set.rows.clone(),
                    order: PSEUDO_SEMINORM_ORDER,
                    band: band_for(&grid),
                };
                let (probe, semi) = pseudo_bound_probe(a.as_ref(), grid, &pc, cfg.trials, cfg.seed)?;
                for r in &probe.rows {
                    table.push(vec![
                        nm.clone(),
                        set.to_string(),
                        r.trial.to_string(),
                        r.seed.to_string(),
                        fmt_f64(r.lhs),
                        fmt_f64(r.rhs),
                        fmt_f64(r.ratio),
                    ]);
                }
                notes.push((format!("max_ratio[{nm}@{set}]"), probe.max_ratio()));
                notes.push((format!("seminorm[{nm}]"), semi.value));
            }
        }
        let mut out = SuiteOutput::new(table);
        for (k, v) in notes {
            out.note_f64(k, v);
        }
        if out.results.column("ratio").iter().any(|r| !r.is_finite()) {
            out.fail("non-finite pseudo-differential ratio");
        }
        Ok(out)
    }
}

pub struct KatoPonce;

/// Rows are `[p1, p2]` and `[pt1, pt2]`.
const KATO_PONCE_SETS: [&str; 3] = ["2:4,4;4,4", "2:inf,2;2,inf", "inf:inf,inf;inf,inf"];

fn kato_ponce_exponents(e: &ExponentSet) -> Result<KatoPonceExponents> {
    if e.rows.len() != 2 {
        bail!("kato-ponce exponent set {e} must be 2x2");
    }
    Ok(KatoPonceExponents { p: e.p, p1: e.rows[0][0], p2: e.rows[0][1], pt1: e.rows[1][0], pt2: e.rows[1][1] })
}

impl Suite for KatoPonce {
    fn name(&self) -> &'static str {
        "kato-ponce"
    }
    fn description(&self) -> &'static str {
        "fractional Leibniz ratio in local Hardy and bmo norms"
    }
    fn schema(&self) -> Vec<Column> {
        vec![text("exponents"), int("trial"), int("seed"), float("lhs"), float("rhs"), float("ratio")]
    }
    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        for e in exponent_sets(cfg, &KATO_PONCE_SETS)? {
            kato_ponce_exponents(&e)?;
        }
        Ok(())
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<SuiteOutput> {
        let grid = Grid::new(cfg.dim, cfg.depth)?;
        let mut table = Table::new(&self.schema());
        let mut notes = Vec::new();
        for set in exponent_sets(cfg, &KATO_PONCE_SETS)? {
            let e = kato_ponce_exponents(&set)?;
            let probe = kato_ponce_probe(grid, cfg.s, &e, band_for(&grid), cfg.trials, cfg.seed)?;
            for r in &probe.rows {
                table.push(vec![
                    set.to_string(),
                    r.trial.to_string(),
                    r.seed.to_string(),
                    fmt_f64(r.lhs),
                    fmt_f64(r.rhs),
                    fmt_f64(r.ratio),
                ]);
            }
            notes.push((format!("max_ratio[{set}]"), probe.max_ratio()));
        }
        let mut out = SuiteOutput::new(table);
        for (k, v) in notes {
            out.note_f64(k, v);
        }
        if out.results.column("ratio").iter().any(|r| !r.is_finite()) {
            out.fail("non-finite Kato-Ponce ratio");
        }
        Ok(out)
    }
}
