//! Hardy-Littlewood maximal operators over dyadic-length cubes and the
//! Peetre-type maximal operator `M^t_{sigma,2^k}`.
//!
//! The cube family for the Hardy-Littlewood operators is every axis-aligned
//! cube of side `N / 2^m` cells (`0 <= m <= J`) at every periodic start
//! position. Window sums are built by doubling and the max over windows
//! containing a point by a doubling sliding max, `O(N^d J^2)` in total.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::grid::{Grid, SampledFunction};
use crate::reduce::pairwise_sum;
use num_complex::Complex64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaximalKind {
    HardyLittlewood { r: f64 },
    Variant { r: f64, k: usize, eps: f64 },
    Peetre { sigma: f64, k: usize, t: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaximalField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub kind: MaximalKind,
    /// Set when the input carried no band; the domination bounds assume one.
    pub unbanded_input: bool,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) {
        return Err(Error::Parameter(format!("{name} = {v} must be positive")));
    }
    Ok(())
}

/// `S_{2L}(s) = S_L(s) + S_L(s + L)` along every axis.
fn double_window(grid: &Grid, sums: &[f64], len: usize) -> Vec<f64> {
    let n = grid.n();
    if grid.dim() == 1 {
        (0..n).map(|s| sums[s] + sums[(s + len) % n]).collect()
    } else {
        let at = |a: usize, b: usize| sums[(a % n) * n + (b % n)];
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                out[a * n + b] = (at(a, b) + at(a, b + len)) + (at(a + len, b) + at(a + len, b + len));
            }
        }
        out
    }
}

/// `out(x) = max over starts s in [x - w + 1, x]` per axis, for a power-of-two `w`.
fn sliding_max(grid: &Grid, values: &[f64], w: usize) -> Vec<f64> {
    let n = grid.n();
    let mut cur = values.to_vec();
    for axis in 0..grid.dim() {
        let mut span = 1;
        while span < w {
            let prev = cur.clone();
            for (i, c) in cur.iter_mut().enumerate() {
                let coords = grid.coords(i);
                let mut src = coords;
                src[axis] = (coords[axis] + n - span) % n;
                *c = c.max(prev[grid.flat_index(&src)]);
            }
            span *= 2;
        }
    }
    cur
}

/// Per side length `N / 2^m`, the max average of `powered` over windows
/// containing each point. Entry `m` of the result is that field.
fn window_maxima(grid: &Grid, powered: &[f64]) -> Vec<Vec<f64>> {
    let depth = grid.depth() as usize;
    let mut by_m = vec![Vec::new(); depth + 1];
    let mut sums = powered.to_vec();
    let mut len = 1;
    for m in (0..=depth).rev() {
        if len > 1 {
            sums = double_window(grid, &sums, len / 2);
        }
        let volume = (len as f64).powi(grid.dim() as i32);
        let avg: Vec<f64> = sums.iter().map(|s| s / volume).collect();
        by_m[m] = sliding_max(grid, &avg, len);
        len *= 2;
    }
    by_m
}

/// `M_r` of a nonnegative field.
pub fn hl_maximal_field(grid: &Grid, magnitudes: &[f64], r: f64) -> Result<Vec<f64>> {
    check_positive("r", r)?;
    let powered: Vec<f64> = magnitudes.iter().map(|v| v.powf(r)).collect();
    let by_m = window_maxima(grid, &powered);
    let mut out = vec![0.0_f64; grid.len()];
    for field in &by_m {
        for (o, v) in out.iter_mut().zip(field) {
            *o = o.max(*v);
        }
    }
    Ok(out.into_iter().map(|v| v.powf(1.0 / r)).collect())
}

pub fn hl_maximal(f: &SampledFunction, r: f64) -> Result<MaximalField> {
    Ok(MaximalField {
        grid: *f.grid(),
        values: hl_maximal_field(f.grid(), &f.magnitudes(), r)?,
        kind: MaximalKind::HardyLittlewood { r },
        unbanded_input: f.band().is_none(),
    })
}

/// `M_r^{k,eps}`: the larger of the small-cube branch (side at most
/// `2^{-k}`) and the penalized large-cube branch.
pub fn variant_maximal_field(grid: &Grid, magnitudes: &[f64], r: f64, k: usize, eps: f64) -> Result<Vec<f64>> {
    check_positive("r", r)?;
    if !(eps >= 0.0) {
        return Err(Error::Parameter(format!("eps = {eps} must be nonnegative")));
    }
    if k > grid.depth() as usize {
        return Err(Error::Parameter(format!("scale {k} exceeds depth {}", grid.depth())));
    }
    let powered: Vec<f64> = magnitudes.iter().map(|v| v.powf(r)).collect();
    let by_m = window_maxima(grid, &powered);
    let mut out = vec![0.0_f64; grid.len()];
    for (m, field) in by_m.iter().enumerate() {
        let penalty = if m >= k { 1.0 } else { 2f64.powf(-eps * (k - m) as f64) };
        for (o, v) in out.iter_mut().zip(field) {
            *o = o.max(penalty * v.powf(1.0 / r));
        }
    }
    Ok(out)
}

pub fn variant_maximal(f: &SampledFunction, r: f64, k: usize, eps: f64) -> Result<MaximalField> {
    Ok(MaximalField {
        grid: *f.grid(),
        values: variant_maximal_field(f.grid(), &f.magnitudes(), r, k, eps)?,
        kind: MaximalKind::Variant { r, k, eps },
        unbanded_input: f.band().is_none(),
    })
}

/// Above this many point pairs the finite-`t` Peetre sum switches to FFT
/// convolution.
pub const PEETRE_DIRECT_LIMIT: usize = 1 << 24;

/// `(1 + 2^k |y|_T)^{-sigma}` on the grid.
pub fn peetre_weight(grid: &Grid, sigma: f64, k: usize) -> Vec<f64> {
    let scale = 2f64.powi(k as i32);
    (0..grid.len()).map(|y| (1.0 + scale * grid.torus_norm(y)).powf(-sigma)).collect()
}

/// `M^t_{sigma,2^k}` of a nonnegative field.
pub fn peetre_maximal_field(grid: &Grid, magnitudes: &[f64], sigma: f64, k: usize, t: f64) -> Result<Vec<f64>> {
    check_positive("sigma", sigma)?;
    check_positive("t", t)?;
    let len = grid.len();
    if t.is_infinite() {
        let w = peetre_weight(grid, sigma, k);
        return Ok((0..len)
            .into_par_iter()
            .map(|x| (0..len).map(|y| magnitudes[grid.sub_index(x, y)] * w[y]).fold(0.0, f64::max))
            .collect());
    }
    let w = peetre_weight(grid, sigma * t, k);
    let powered: Vec<f64> = magnitudes.iter().map(|v| v.powf(t)).collect();
    let sums: Vec<f64> = if len * len <= PEETRE_DIRECT_LIMIT {
        (0..len)
            .into_par_iter()
            .map(|x| {
                let terms: Vec<f64> = (0..len).map(|y| powered[grid.sub_index(x, y)] * w[y]).collect();
                pairwise_sum(&terms)
            })
            .collect()
    } else {
        let shape = grid.shape();
        let mut a: Vec<Complex64> = powered.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut b: Vec<Complex64> = w.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut a, &shape, true);
        fft_nd(&mut b, &shape, true);
        for (x, y) in a.iter_mut().zip(&b) {
            *x *= y;
        }
        fft_nd(&mut a, &shape, false);
        a.iter().map(|c| (c.re / len as f64).max(0.0)).collect()
    };
    let scale = 2f64.powf(k as f64 * grid.dim() as f64 / t);
    Ok(sums.into_iter().map(|s| scale * (s * grid.cell_volume()).powf(1.0 / t)).collect())
}

pub fn peetre_maximal(f: &SampledFunction, sigma: f64, k: usize, t: f64) -> Result<MaximalField> {
    Ok(MaximalField {
        grid: *f.grid(),
        values: peetre_maximal_field(f.grid(), &f.magnitudes(), sigma, k, t)?,
        kind: MaximalKind::Peetre { sigma, k, t },
        unbanded_input: f.band().is_none(),
    })
}

/// Max of `num / den` over points where `den >= floor * max(den)`.
pub fn max_ratio(num: &[f64], den: &[f64], floor: f64) -> f64 {
    let top = den.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return f64::NAN;
    }
    num.iter()
        .zip(den)
        .filter(|(_, d)| **d >= floor * top)
        .map(|(a, b)| a / b)
        .fold(0.0, f64::max)
}

/// Denominator floor used by the pointwise domination tests.
pub const RATIO_FLOOR: f64 = 1e-13;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::random_band_limited;

    /// Same cube family, every start scanned explicitly.
    fn brute_family(grid: &Grid, mags: &[f64], r: f64) -> Vec<f64> {
        let n = grid.n();
        (0..grid.len())
            .map(|x| {
                let cx = grid.coords(x);
                let mut best: f64 = 0.0;
                let mut len = 1;
                while len <= n {
                    let starts: Vec<usize> = (0..len).map(|o| (cx[0] + n - o) % n).collect();
                    let starts1: Vec<usize> = if grid.dim() == 2 {
                        (0..len).map(|o| (cx[1] + n - o) % n).collect()
                    } else {
                        vec![0]
                    };
                    for &s0 in &starts {
                        for &s1 in &starts1 {
                            let mut acc = 0.0;
                            for i in 0..len {
                                if grid.dim() == 1 {
                                    acc += mags[(s0 + i) % n].powf(r);
                                } else {
                                    for j in 0..len {
                                        acc += mags[grid.flat_index(&[(s0 + i) % n, (s1 + j) % n])].powf(r);
                                    }
                                }
                            }
                            best = best.max(acc / (len as f64).powi(grid.dim() as i32));
                        }
                    }
                    len *= 2;
                }
                best.powf(1.0 / r)
            })
            .collect()
    }

    /// Every side length 1..=N, every start.
    fn brute_all_sides_1d(mags: &[f64]) -> Vec<f64> {
        let n = mags.len();
        (0..n)
            .map(|x| {
                let mut best: f64 = 0.0;
                for len in 1..=n {
                    for o in 0..len {
                        let s = (x + n - o) % n;
                        let acc: f64 = (0..len).map(|i| mags[(s + i) % n]).sum();
                        best = best.max(acc / len as f64);
                    }
                }
                best
            })
            .collect()
    }

    #[test]
    fn constant_field() {
        let g = Grid::new(2, 4).unwrap();
        let v = hl_maximal_field(&g, &vec![2.5; g.len()], 1.5).unwrap();
        assert!(v.iter().all(|x| (x - 2.5).abs() < 1e-13));
        let v = variant_maximal_field(&g, &vec![2.5; g.len()], 1.0, 3, 0.7).unwrap();
        assert!(v.iter().all(|x| (x - 2.5).abs() < 1e-13));
    }

    #[test]
    fn spike_matches_brute_force_family() {
        let g = Grid::new(1, 4).unwrap();
        let mut mags = vec![0.0; 16];
        mags[5] = 1.0;
        let fast = hl_maximal_field(&g, &mags, 1.0).unwrap();
        let slow = brute_family(&g, &mags, 1.0);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-14);
        }
        // At distance 3 from the spike the best dyadic window has length 4.
        assert!((fast[8] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn random_fields_match_brute_force() {
        for d in 1..=2 {
            let g = Grid::new(d, 4).unwrap();
            let mags = random_band_limited(d as u64, 5.0, g).unwrap().magnitudes();
            for r in [0.5, 1.0, 2.0] {
                let fast = hl_maximal_field(&g, &mags, r).unwrap();
                let slow = brute_family(&g, &mags, r);
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() <= 1e-12 * b.max(1.0));
                }
            }
        }
    }

    #[test]
    fn dyadic_family_within_factor_two_of_all_sides() {
        let g = Grid::new(1, 5).unwrap();
        let mags = random_band_limited(17, 9.0, g).unwrap().magnitudes();
        let fast = hl_maximal_field(&g, &mags, 1.0).unwrap();
        let full = brute_all_sides_1d(&mags);
        for (a, b) in fast.iter().zip(&full) {
            let ratio = b / a;
            assert!((1.0 - 1e-12..=2.0 + 1e-12).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn variant_with_zero_eps_is_hl_and_decreases_in_eps() {
        let g = Grid::new(1, 6).unwrap();
        let mags = random_band_limited(3, 12.0, g).unwrap().magnitudes();
        let hl = hl_maximal_field(&g, &mags, 1.0).unwrap();
        let v0 = variant_maximal_field(&g, &mags, 1.0, 3, 0.0).unwrap();
        for (a, b) in hl.iter().zip(&v0) {
            assert!((a - b).abs() < 1e-14);
        }
        let mut prev = v0;
        for eps in [0.25, 0.5, 1.0, 2.0] {
            let cur = variant_maximal_field(&g, &mags, 1.0, 3, eps).unwrap();
            assert!(cur.iter().zip(&prev).all(|(c, p)| *c <= *p));
            prev = cur;
        }
    }

    #[test]
    fn peetre_single_mode() {
        let g = Grid::new(1, 6).unwrap();
        let f = SampledFunction::mode(g, &[3], Complex64::new(1.0, 0.0));
        let inf = peetre_maximal(&f, 2.0, 3, f64::INFINITY).unwrap();
        assert!(inf.values.iter().all(|v| (v - 1.0).abs() < 1e-13));
        let (sigma, k, t) = (2.0, 3usize, 1.5);
        let quad: f64 = (0..g.len())
            .map(|y| (1.0 + 8.0 * g.torus_norm(y)).powf(-sigma * t) * g.cell_volume())
            .sum();
        let expect = 2f64.powf(k as f64 / t) * quad.powf(1.0 / t);
        let fin = peetre_maximal(&f, sigma, k, t).unwrap();
        assert!(fin.values.iter().all(|v| (v - expect).abs() < 1e-12 * expect));
        let zero = peetre_maximal(&SampledFunction::zeros(g), 2.0, 2, 1.0).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        assert!(peetre_maximal(&f, 0.0, 1, 1.0).is_err());
    }

    #[test]
    fn peetre_fft_path_matches_direct_sum() {
        let g = Grid::new(1, 8).unwrap();
        let mags = random_band_limited(2, 20.0, g).unwrap().magnitudes();
        let direct = peetre_maximal_field(&g, &mags, 2.0, 4, 1.0).unwrap();
        let w = peetre_weight(&g, 2.0, 4);
        let mut a: Vec<Complex64> = mags.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut b: Vec<Complex64> = w.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut a, &[256], true);
        fft_nd(&mut b, &[256], true);
        for (x, y) in a.iter_mut().zip(&b) {
            *x *= y;
        }
        fft_nd(&mut a, &[256], false);
        for (i, c) in a.iter().enumerate() {
            let v = 16.0 * (c.re / 256.0 / 256.0);
            assert!((v - direct[i]).abs() < 1e-12 * direct[i]);
        }
    }

    #[test]
    fn maximal_dominates_modulus() {
        let g = Grid::new(2, 5).unwrap();
        let f = random_band_limited(8, 7.0, g).unwrap();
        let m = hl_maximal(&f, 1.0).unwrap();
        assert!(m.values.iter().zip(f.magnitudes()).all(|(a, b)| *a >= b * (1.0 - 1e-14)));
    }
}
