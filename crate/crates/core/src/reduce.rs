//! Reductions with a fixed summation tree, so results do not depend on
//! how work was scheduled.

use num_complex::Complex64;

const LEAF: usize = 32;

/// Pairwise (cascade) summation with a fixed split point.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_sum_complex(xs: &[Complex64]) -> Complex64 {
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_complex(&xs[..mid]) + pairwise_sum_complex(&xs[mid..])
}

/// Maximum of a slice; NaN entries are ignored, empty slices give 0.
pub fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(0.0_f64, |a, b| if b > a { b } else { a })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_exact_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn pairwise_is_more_accurate_than_naive_on_tiny_tail() {
        let mut xs = vec![1.0];
        xs.extend(std::iter::repeat(1e-16).take(1 << 16));
        let exact = 1.0 + (1 << 16) as f64 * 1e-16;
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - exact).abs() < 1e-13);
        assert!((naive - exact).abs() > 1e-12);
    }
}
