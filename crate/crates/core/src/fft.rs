//! Multidimensional FFTs on cubic grids, built from `rustfft` line transforms.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Transform direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// In-place unnormalized transform of a `side^dims` array stored row-major.
pub fn fft_nd(data: &mut [Complex64], side: usize, dims: usize, dir: Direction) {
    debug_assert_eq!(data.len(), side.pow(dims as u32));
    let mut planner = FftPlanner::<f64>::new();
    let plan: Arc<dyn Fft<f64>> = match dir {
        Direction::Forward => planner.plan_fft_forward(side),
        Direction::Inverse => planner.plan_fft_inverse(side),
    };
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    for axis in 0..dims {
        transform_axis(data, side, dims, axis, plan.as_ref(), &mut scratch);
    }
}

fn transform_axis(
    data: &mut [Complex64],
    side: usize,
    dims: usize,
    axis: usize,
    plan: &dyn Fft<f64>,
    scratch: &mut [Complex64],
) {
    let stride = side.pow((dims - 1 - axis) as u32);
    if stride == 1 {
        plan.process_with_scratch(data, scratch);
        return;
    }
    // Gather a block of `stride` interleaved lines at a time.
    let block = side * stride;
    let mut buf = vec![Complex64::new(0.0, 0.0); block];
    for chunk in data.chunks_mut(block) {
        for j in 0..side {
            for s in 0..stride {
                buf[s * side + j] = chunk[j * stride + s];
            }
        }
        plan.process_with_scratch(&mut buf, scratch);
        for j in 0..side {
            for s in 0..stride {
                chunk[j * stride + s] = buf[s * side + j];
            }
        }
    }
}

/// Forward transform, pointwise multiplication by `multiplier(k)` where `k`
/// holds the per-axis frequency indices, then normalized inverse transform.
pub fn apply_multiplier<F>(data: &mut [Complex64], side: usize, dims: usize, mut multiplier: F)
where
    F: FnMut(&[usize]) -> Complex64,
{
    fft_nd(data, side, dims, Direction::Forward);
    let norm = 1.0 / data.len() as f64;
    let mut k = vec![0usize; dims];
    for (flat, v) in data.iter_mut().enumerate() {
        let mut f = flat;
        for slot in k.iter_mut().rev() {
            *slot = f % side;
            f /= side;
        }
        *v *= multiplier(&k) * norm;
    }
    fft_nd(data, side, dims, Direction::Inverse);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft2(data: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for k0 in 0..n {
            for k1 in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for j0 in 0..n {
                    for j1 in 0..n {
                        let ph =
                            -2.0 * std::f64::consts::PI * ((k0 * j0 + k1 * j1) as f64) / n as f64;
                        acc += data[j0 * n + j1] * Complex64::from_polar(1.0, ph);
                    }
                }
                out[k0 * n + k1] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_naive_2d() {
        let n = 8;
        let data: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut fast = data.clone();
        fft_nd(&mut fast, n, 2, Direction::Forward);
        let slow = naive_dft2(&data, n);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn roundtrip_4d() {
        let n: usize = 4;
        let data: Vec<Complex64> = (0..n.pow(4))
            .map(|i| Complex64::new(i as f64, -(i as f64)))
            .collect();
        let mut x = data.clone();
        apply_multiplier(&mut x, n, 4, |_| Complex64::new(1.0, 0.0));
        for (a, b) in x.iter().zip(&data) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}
