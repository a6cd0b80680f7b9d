//! Multi-dimensional FFT over row-major arrays (last axis contiguous).

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized in-place transform along every axis of `shape`.
/// `forward` uses the kernel e^{-2 pi i jk/n}.
pub fn fft_nd(data: &mut [Complex64], shape: &[usize], forward: bool) {
    let total: usize = shape.iter().product();
    assert_eq!(data.len(), total, "fft_nd: data length does not match shape");
    let direction = if forward { FftDirection::Forward } else { FftDirection::Inverse };
    let mut stride = 1;
    for axis in (0..shape.len()).rev() {
        let len = shape[axis];
        if len > 1 {
            let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction));
            if stride == 1 {
                fft.process(data);
            } else {
                let mut line = vec![Complex64::new(0.0, 0.0); len];
                let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
                let block = len * stride;
                for base in (0..total).step_by(block) {
                    for offset in 0..stride {
                        let start = base + offset;
                        for (i, slot) in line.iter_mut().enumerate() {
                            *slot = data[start + i * stride];
                        }
                        fft.process_with_scratch(&mut line, &mut scratch);
                        for (i, v) in line.iter().enumerate() {
                            data[start + i * stride] = *v;
                        }
                    }
                }
            }
        }
        stride *= len;
    }
}
