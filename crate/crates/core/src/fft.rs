//! Multi-dimensional FFT over row-major arrays with a per-thread plan cache.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// Unnormalized in-place transform of every axis of an `m^dim` array, last axis fastest.
pub(crate) fn fft_nd(values: &mut [Complex64], dim: usize, m: usize, direction: FftDirection) {
    debug_assert_eq!(values.len(), m.pow(dim as u32));
    let fft = plan(m, direction);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    // last axis: contiguous lines
    fft.process_with_scratch(values, &mut scratch);
    if dim == 1 {
        return;
    }
    let mut block = Vec::new();
    for axis in 0..dim - 1 {
        let stride = m.pow((dim - 1 - axis) as u32);
        let span = m * stride;
        block.resize(span, Complex64::default());
        for chunk in values.chunks_exact_mut(span) {
            // transpose (m x stride) -> (stride x m) so each line is contiguous
            for i in 0..m {
                let row = &chunk[i * stride..(i + 1) * stride];
                for (s, v) in row.iter().enumerate() {
                    block[s * m + i] = *v;
                }
            }
            fft.process_with_scratch(&mut block, &mut scratch);
            for i in 0..m {
                let row = &mut chunk[i * stride..(i + 1) * stride];
                for (s, v) in row.iter_mut().enumerate() {
                    *v = block[s * m + i];
                }
            }
        }
    }
}

/// Multiplies by `(-1)^(j_1 + ... + j_dim)` and a constant scale.
pub(crate) fn checkerboard_scale(values: &mut [Complex64], dim: usize, m: usize, scale: f64) {
    let rows = values.len() / m;
    for r in 0..rows {
        // parity of the leading digits of the row index in base m
        let mut rest = r;
        let mut parity = 0usize;
        for _ in 0..dim - 1 {
            parity += rest % m;
            rest /= m;
        }
        let lead = if parity.is_multiple_of(2) { scale } else { -scale };
        let row = &mut values[r * m..(r + 1) * m];
        for (j, v) in row.iter_mut().enumerate() {
            *v *= if j % 2 == 0 { lead } else { -lead };
        }
    }
}
