//! Smooth dyadic partitions of unity on the frequency grid.
//!
//! Every mask is a radial profile built from one transition function `T`:
//! the low-pass `Phi_k(r) = T(r / 2^k)` and the annular piece
//! `phi_k = Phi_k - Phi_{k-1}`, supported in `[2^{k-2}, 2^k]`.

use std::io::{self, Write};

use crate::error::Result;
use crate::grid::{Grid, Ladder, SampledFunction};
use crate::spaces::lp_lq_fields;

fn bump(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth nonincreasing transition: 1 on `[0, 1/2]`, 0 on `[1, inf)`.
pub fn transition(r: f64) -> f64 {
    if r <= 0.5 {
        1.0
    } else if r >= 1.0 {
        0.0
    } else {
        let a = bump(2.0 * (1.0 - r));
        let b = bump(2.0 * r - 1.0);
        a / (a + b)
    }
}

fn dyadic(k: i32) -> f64 {
    2f64.powi(k)
}

/// Low-pass profile `T(r / 2^k)`.
pub fn low_pass_profile(k: i32, r: f64) -> f64 {
    transition(r / dyadic(k))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Pieces `k >= 1` only; constants are invisible.
    Homogeneous,
    /// Scale 0 carries the low-pass block `Phi_0`.
    Inhomogeneous,
}

/// Partition piece `k` as a radial profile, defined for every integer `k`.
pub fn piece_profile(mode: Mode, k: i32, r: f64) -> f64 {
    match (mode, k) {
        (Mode::Inhomogeneous, k) if k < 0 => 0.0,
        (Mode::Inhomogeneous, 0) => transition(r),
        _ => low_pass_profile(k, r) - low_pass_profile(k - 1, r),
    }
}

/// `phi_{k-1} + phi_k + phi_{k+1}`: equals 1 on the support of `phi_k`.
pub fn tilde_profile(mode: Mode, k: i32, r: f64) -> f64 {
    (k - 1..=k + 1).map(|j| piece_profile(mode, j, r)).sum()
}

/// `sum_{|j-k| <= 2} phi_j`: supported in `[2^{k-4}, 2^{k+2}]`, equal to 1 on
/// `[2^{k-3}, 2^{k+1}]`.
pub fn star_profile(mode: Mode, k: i32, r: f64) -> f64 {
    (k - 2..=k + 2).map(|j| piece_profile(mode, j, r)).sum()
}

#[derive(Clone, Debug)]
pub struct Partition {
    grid: Grid,
    mode: Mode,
    phi0: Vec<f64>,
    pieces: Vec<Vec<f64>>,
}

impl Partition {
    pub fn new(grid: Grid, mode: Mode) -> Self {
        let radii = grid.frequency_radii();
        let phi0 = radii.iter().map(|&r| transition(r)).collect();
        let k_min = match mode {
            Mode::Homogeneous => 1,
            Mode::Inhomogeneous => 0,
        };
        let pieces = (k_min..=grid.depth() as i32)
            .map(|k| radii.iter().map(|&r| piece_profile(mode, k, r)).collect())
            .collect();
        Self { grid, mode, phi0, pieces }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn k_min(&self) -> usize {
        match self.mode {
            Mode::Homogeneous => 1,
            Mode::Inhomogeneous => 0,
        }
    }

    pub fn k_max(&self) -> usize {
        self.grid.depth() as usize
    }

    /// The mother profile sampled on the grid.
    pub fn phi0_hat(&self) -> &[f64] {
        &self.phi0
    }

    /// Piece `k`; in inhomogeneous mode piece 0 is `Phi_0`.
    pub fn piece(&self, k: usize) -> Option<&[f64]> {
        k.checked_sub(self.k_min()).and_then(|i| self.pieces.get(i)).map(Vec::as_slice)
    }

    /// `Phi_k` sampled on the grid.
    pub fn low_pass(&self, k: i32) -> Vec<f64> {
        (0..self.grid.len()).map(|i| low_pass_profile(k, self.grid.freq_radius(i))).collect()
    }

    /// Pointwise sum of all pieces.
    pub fn total(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.grid.len()];
        for p in &self.pieces {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        total
    }

    /// Max `|sum - 1|` over frequencies with `|xi| <= radius` (the origin is
    /// skipped in homogeneous mode).
    pub fn sum_deviation(&self, radius: f64) -> f64 {
        let total = self.total();
        (0..self.grid.len())
            .filter(|&i| {
                let r = self.grid.freq_radius(i);
                r <= radius && !(self.mode == Mode::Homogeneous && i == 0)
            })
            .map(|i| (total[i] - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Ladder `{phi_k * f}` with band constant 1.
    pub fn decompose(&self, f: &SampledFunction) -> Result<Ladder> {
        self.grid.check_same(f.grid())?;
        let spec = f.spectrum();
        let entries = self
            .pieces
            .iter()
            .enumerate()
            .map(|(i, mask)| {
                let k = self.k_min() + i;
                let s = spec.iter().zip(mask).map(|(c, m)| c * m).collect();
                SampledFunction::from_spectrum(self.grid, s, Some(dyadic(k as i32)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ladder::new(self.grid, 1.0, self.k_min(), entries)
    }

    pub fn companions(&self) -> CompanionMasks {
        let radii = self.grid.frequency_radii();
        let depth = self.grid.depth() as i32;
        let ks: Vec<i32> = (self.k_min() as i32..=depth).collect();
        let sample = |f: &dyn Fn(f64) -> f64| radii.iter().map(|&r| f(r)).collect::<Vec<f64>>();
        CompanionMasks {
            k_min: self.k_min(),
            tilde: ks.iter().map(|&k| sample(&|r| tilde_profile(self.mode, k, r))).collect(),
            star: ks.iter().map(|&k| sample(&|r| star_profile(self.mode, k, r))).collect(),
            low_pass: (0..=depth + 1).map(|k| sample(&|r| low_pass_profile(k, r))).collect(),
            tilde_clipped: ks.iter().map(|&k| k + 1 > depth).collect(),
            star_clipped: ks.iter().map(|&k| k + 2 > depth).collect(),
        }
    }

    /// CSV of `(flat index, frequency..., value)` for piece `k`.
    pub fn write_piece_csv<W: Write>(&self, k: usize, mut w: W) -> io::Result<()> {
        let Some(mask) = self.piece(k) else {
            return Ok(());
        };
        let header = if self.grid.dim() == 1 { "index,xi,value" } else { "index,xi0,xi1,value" };
        writeln!(w, "{header}")?;
        for (i, v) in mask.iter().enumerate() {
            let xi = self.grid.frequency(i);
            if self.grid.dim() == 1 {
                writeln!(w, "{i},{},{v:e}", xi[0])?;
            } else {
                writeln!(w, "{i},{},{},{v:e}", xi[0], xi[1])?;
            }
        }
        Ok(())
    }
}

/// Widened masks derived from a partition. Masks whose nominal support
/// extends beyond the grid depth are flagged as clipped.
#[derive(Clone, Debug)]
pub struct CompanionMasks {
    k_min: usize,
    tilde: Vec<Vec<f64>>,
    star: Vec<Vec<f64>>,
    low_pass: Vec<Vec<f64>>,
    tilde_clipped: Vec<bool>,
    star_clipped: Vec<bool>,
}

impl CompanionMasks {
    pub fn tilde(&self, k: usize) -> Option<&[f64]> {
        k.checked_sub(self.k_min).and_then(|i| self.tilde.get(i)).map(Vec::as_slice)
    }

    pub fn star(&self, k: usize) -> Option<&[f64]> {
        k.checked_sub(self.k_min).and_then(|i| self.star.get(i)).map(Vec::as_slice)
    }

    /// `Phi_k` for `0 <= k <= J + 1`.
    pub fn low_pass(&self, k: usize) -> Option<&[f64]> {
        self.low_pass.get(k).map(Vec::as_slice)
    }

    pub fn tilde_clipped(&self, k: usize) -> bool {
        k.checked_sub(self.k_min).and_then(|i| self.tilde_clipped.get(i)).copied().unwrap_or(true)
    }

    pub fn star_clipped(&self, k: usize) -> bool {
        k.checked_sub(self.k_min).and_then(|i| self.star_clipped.get(i)).copied().unwrap_or(true)
    }
}

/// Sum of the entries of a ladder.
pub fn reconstruct(ladder: &Ladder) -> SampledFunction {
    let grid = *ladder.grid();
    let mut acc = vec![num_complex::Complex64::new(0.0, 0.0); grid.len()];
    for (_, e) in ladder.iter() {
        for (a, v) in acc.iter_mut().zip(e.values()) {
            *a += v;
        }
    }
    SampledFunction::from_values(grid, acc).expect("length matches")
}

/// Ratio `||{phi_k * sum_{|l-k|<=h} g_l}||_{L^p(l^q)} / ||{g_k}||_{L^p(l^q)}`.
pub fn marshall_ratio(part: &Partition, g: &Ladder, h: usize, p: f64, q: f64) -> Result<f64> {
    part.grid().check_same(g.grid())?;
    let grid = *g.grid();
    let mut out = Vec::new();
    for k in part.k_min()..=part.k_max() {
        let mut spec = vec![num_complex::Complex64::new(0.0, 0.0); grid.len()];
        for l in k.saturating_sub(h)..=k + h {
            if let Some(e) = g.get(l) {
                for (s, c) in spec.iter_mut().zip(e.spectrum()) {
                    *s += c;
                }
            }
        }
        let mask = part.piece(k).expect("k in range");
        let masked: Vec<_> = spec.iter().zip(mask).map(|(c, m)| c * m).collect();
        let f = SampledFunction::from_spectrum(grid, masked, None)?;
        out.push(f.magnitudes());
    }
    let lhs = lp_lq_fields(&grid, out.iter().map(Vec::as_slice), p, q);
    let rhs = lp_lq_fields(&grid, g.magnitudes().iter().map(|(_, f)| f), p, q);
    Ok(if rhs > 0.0 { lhs / rhs } else { f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::random_band_limited;
    use num_complex::Complex64;

    #[test]
    fn transition_endpoints() {
        assert_eq!(transition(0.0), 1.0);
        assert_eq!(transition(0.5), 1.0);
        assert_eq!(transition(1.0), 0.0);
        assert_eq!(transition(7.0), 0.0);
        assert!((transition(0.75) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=1000 {
            let v = transition(0.5 + i as f64 / 2000.0);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn piece_equals_one_at_its_centre() {
        for k in 1..10 {
            let r = 2f64.powi(k - 1);
            assert_eq!(piece_profile(Mode::Homogeneous, k, r), 1.0);
            for j in (1..10).filter(|&j| j != k) {
                assert_eq!(piece_profile(Mode::Homogeneous, j, r), 0.0);
            }
        }
    }

    #[test]
    fn pieces_vanish_at_origin_and_outside_annulus() {
        let g = Grid::new(2, 6).unwrap();
        let part = Partition::new(g, Mode::Inhomogeneous);
        for k in 1..=6 {
            let mask = part.piece(k).unwrap();
            assert_eq!(mask[0], 0.0);
            for (i, v) in mask.iter().enumerate() {
                let r = g.freq_radius(i);
                if r < 2f64.powi(k as i32 - 2) || r > 2f64.powi(k as i32) {
                    assert_eq!(*v, 0.0);
                }
                assert!(*v >= 0.0);
            }
        }
    }

    #[test]
    fn partition_sums_to_one() {
        for d in 1..=2 {
            let g = Grid::new(d, 7).unwrap();
            for mode in [Mode::Homogeneous, Mode::Inhomogeneous] {
                let part = Partition::new(g, mode);
                assert!(part.sum_deviation(g.n() as f64 / 2.0) <= 1e-12);
            }
        }
    }

    #[test]
    fn decompose_single_mode_and_constant() {
        let g = Grid::new(1, 7).unwrap();
        let part = Partition::new(g, Mode::Inhomogeneous);
        let f = SampledFunction::mode(g, &[8], Complex64::new(1.0, 0.0));
        let lad = part.decompose(&f).unwrap();
        for (k, e) in lad.iter() {
            let expect = if k == 4 { 1.0 } else { 0.0 };
            assert!(e.values().iter().zip(f.values()).all(|(a, b)| (a - b * expect).norm() < 1e-14));
        }
        let c = SampledFunction::constant(g, Complex64::new(3.0, 0.0));
        let lad = part.decompose(&c).unwrap();
        for (k, e) in lad.iter() {
            let expect = if k == 0 { 3.0 } else { 0.0 };
            assert!(e.values().iter().all(|v| (v - expect).norm() < 1e-14));
        }
    }

    #[test]
    fn roundtrip_reconstruction() {
        let g = Grid::new(2, 6).unwrap();
        let part = Partition::new(g, Mode::Inhomogeneous);
        let f = random_band_limited(4, 16.0, g).unwrap();
        let back = reconstruct(&part.decompose(&f).unwrap());
        let err = back.sub(&f).unwrap().lp_norm(f64::INFINITY) / f.lp_norm(f64::INFINITY);
        assert!(err <= 1e-10);
    }

    #[test]
    fn companion_identities() {
        let g = Grid::new(1, 8).unwrap();
        let part = Partition::new(g, Mode::Inhomogeneous);
        let comp = part.companions();
        for k in 0..=8 {
            let phi = part.piece(k).unwrap();
            let tilde = comp.tilde(k).unwrap();
            let star = comp.star(k).unwrap();
            for i in 0..g.len() {
                assert_eq!(tilde[i] * phi[i], phi[i]);
                if tilde[i] != 0.0 {
                    assert_eq!(star[i], 1.0);
                }
            }
            let low = comp.low_pass(k).unwrap();
            let next = comp.low_pass(k + 1).unwrap();
            for i in 0..g.len() {
                if low[i] != 0.0 {
                    assert_eq!(next[i], 1.0);
                }
            }
        }
        assert!(comp.star_clipped(7) && !comp.star_clipped(6));
    }

    #[test]
    fn tilde_matches_sum_of_neighbours() {
        let g = Grid::new(1, 8).unwrap();
        let part = Partition::new(g, Mode::Inhomogeneous);
        let comp = part.companions();
        for k in 1..8 {
            let tilde = comp.tilde(k).unwrap();
            for i in 0..g.len() {
                let direct: f64 = (k - 1..=k + 1).map(|j| part.piece(j).unwrap()[i]).sum();
                assert!((tilde[i] - direct).abs() < 1e-15);
            }
        }
        let tilde0 = comp.tilde(0).unwrap();
        let low1 = comp.low_pass(1).unwrap();
        for i in 0..g.len() {
            assert!((tilde0[i] - low1[i]).abs() < 1e-15);
        }
    }
}
