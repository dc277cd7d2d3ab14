//! Multi-dimensional complex FFTs on row-major buffers.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Smallest integer `>= n` whose prime factors are all in {2, 3, 5, 7}.
pub fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

// Lines gathered per pass along a strided axis.
const BLOCK: usize = 32;

/// In-place unnormalized transform of a row-major array of the given shape.
pub fn fft_nd(buf: &mut [Complex64], shape: &[usize], inverse: bool) {
    assert_eq!(buf.len(), shape.iter().product::<usize>());
    let mut planner = FftPlanner::<f64>::new();
    for axis in 0..shape.len() {
        let n = shape[axis];
        if n == 1 {
            continue;
        }
        let plan = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        let stride: usize = shape[axis + 1..].iter().product();
        if stride == 1 {
            transform_rows(buf, n, &plan);
        } else {
            transform_strided(buf, n, stride, &plan);
        }
    }
}

fn transform_rows(buf: &mut [Complex64], n: usize, plan: &Arc<dyn Fft<f64>>) {
    let rows_per_task = (1 << 16) / n + 1;
    buf.par_chunks_mut(n * rows_per_task).for_each(|chunk| {
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(chunk, &mut scratch);
    });
}

fn transform_strided(buf: &mut [Complex64], n: usize, stride: usize, plan: &Arc<dyn Fft<f64>>) {
    let plane = n * stride;
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    let mut lines = vec![Complex64::default(); n * BLOCK];
    for outer in buf.chunks_mut(plane) {
        let mut s0 = 0;
        while s0 < stride {
            let width = BLOCK.min(stride - s0);
            for t in 0..n {
                let row = &outer[t * stride + s0..t * stride + s0 + width];
                for (b, v) in row.iter().enumerate() {
                    lines[b * n + t] = *v;
                }
            }
            plan.process_with_scratch(&mut lines[..width * n], &mut scratch);
            for t in 0..n {
                let row = &mut outer[t * stride + s0..t * stride + s0 + width];
                for (b, v) in row.iter_mut().enumerate() {
                    *v = lines[b * n + t];
                }
            }
            s0 += width;
        }
    }
}

/// Row-major offset of the index `-k mod shape`.
pub(crate) fn negated_offset(offset: usize, shape: &[usize]) -> usize {
    let mut rem = offset;
    let mut out = 0;
    let mut mul = 1;
    for &n in shape.iter().rev() {
        let k = rem % n;
        rem /= n;
        let nk = if k == 0 { 0 } else { n - k };
        out += nk * mul;
        mul *= n;
    }
    out
}
