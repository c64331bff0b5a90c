//! Smooth sample fields: compactly supported bumps and random currents.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::currents::Current;
use crate::grid::ComplexGrid;

/// `exp(1 - 1/(1 - |x-c|^2/r^2))` inside the ball, zero outside; peak value 1.
pub fn smooth_bump(x: &[f64], center: &[f64], radius: f64) -> f64 {
    let s2: f64 = x
        .iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / (radius * radius);
    if s2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s2)).exp()
    }
}

/// Smooth step: 0 for `t <= 0`, 1 for `t >= 1`, `C^inf` in between.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// Sum of `bumps` random complex bumps per component, supported in `|x| < radius`.
pub fn random_smooth_current(
    grid: &ComplexGrid,
    p: usize,
    q: usize,
    radius: f64,
    bumps: usize,
    seed: u64,
) -> Current {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = Current::zero(grid, p, q).expect("valid bidegree");
    let m = grid.real_dim();
    let indices: Vec<_> = current.components().iter().map(|(i, _)| *i).collect();
    for idx in indices {
        let specs: Vec<(Vec<f64>, f64, Complex64)> = (0..bumps)
            .map(|_| {
                let width = radius * rng.gen_range(0.25..0.5);
                let reach = radius - width;
                let center: Vec<f64> = (0..m)
                    .map(|_| rng.gen_range(-1.0..1.0) * reach / (m as f64).sqrt())
                    .collect();
                let amp = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                (center, width, amp)
            })
            .collect();
        let field = grid.sample(|x| {
            specs
                .iter()
                .map(|(c, w, a)| a * smooth_bump(x, c, *w))
                .sum::<Complex64>()
        });
        current.set_component(idx, field).expect("grid-sized field");
    }
    current
}
