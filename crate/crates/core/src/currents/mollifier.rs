use std::f64::consts::PI;

use num_complex::Complex64;

use super::{Current, ZERO};
use crate::calculus::spectral_partial;
use crate::error::{Error, Result};
use crate::fft::{apply_multiplier, fft_nd, Direction};
use crate::grid::ComplexGrid;

/// Smallest admissible kernel radius in grid cells.
pub const MIN_EPSILON_CELLS: f64 = 4.0;

/// Radial bump `rho_eps(x) = eps^{-m} c_m exp(-1/(1-|x/eps|^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    real_dim: usize,
    epsilon: f64,
    constant: f64,
}

impl Mollifier {
    pub fn new(real_dim: usize, epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "mollifier scale {epsilon} must be positive"
            )));
        }
        Ok(Self {
            real_dim,
            epsilon,
            constant: normalizing_constant(real_dim),
        })
    }

    /// Checks `eps >= 4h` before building.
    pub fn for_grid(grid: &ComplexGrid, epsilon: f64) -> Result<Self> {
        let min = MIN_EPSILON_CELLS * grid.h();
        if epsilon < min * (1.0 - 1e-12) {
            return Err(Error::UnresolvedKernel { epsilon, min });
        }
        Self::new(grid.real_dim(), epsilon)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `c_m` such that the unit-scale profile has unit mass.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum::<f64>() / (self.epsilon * self.epsilon);
        if r2 >= 1.0 {
            0.0
        } else {
            self.constant * (-1.0 / (1.0 - r2)).exp() / self.epsilon.powi(self.real_dim as i32)
        }
    }

    /// Kernel sampled around `center`, rescaled to unit discrete mass.
    pub fn sample_at(&self, grid: &ComplexGrid, center: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; grid.real_dim()];
        let mut out: Vec<f64> = (0..grid.len())
            .map(|i| {
                grid.point(i, &mut x);
                x.iter_mut().zip(center).for_each(|(a, c)| *a -= c);
                self.eval(&x)
            })
            .collect();
        normalize_mass(&mut out, grid.cell_volume());
        out
    }

    /// Kernel sampled at periodic offsets from index 0, rescaled to unit discrete mass.
    fn sample_periodic(&self, grid: &ComplexGrid) -> Vec<Complex64> {
        let n = grid.resolution();
        let h = grid.h();
        let m = grid.real_dim();
        let mut idx = vec![0usize; m];
        let mut x = vec![0.0; m];
        let mut out: Vec<f64> = (0..grid.len())
            .map(|i| {
                grid.unravel(i, &mut idx);
                for (xa, &k) in x.iter_mut().zip(&idx) {
                    let s = if k < n / 2 {
                        k as f64
                    } else {
                        k as f64 - n as f64
                    };
                    *xa = s * h;
                }
                self.eval(&x)
            })
            .collect();
        normalize_mass(&mut out, grid.cell_volume());
        out.into_iter().map(|v| Complex64::new(v, 0.0)).collect()
    }

    /// Periodic convolution of a field with the kernel.
    pub fn convolve(&self, grid: &ComplexGrid, field: &mut [Complex64]) {
        let side = grid.resolution();
        let dims = grid.real_dim();
        let mut kernel = self.sample_periodic(grid);
        fft_nd(&mut kernel, side, dims, Direction::Forward);
        let vol = grid.cell_volume();
        let strides: Vec<usize> = (0..dims).map(|a| grid.stride(a)).collect();
        apply_multiplier(field, side, dims, |k| {
            let flat: usize = k.iter().zip(&strides).map(|(a, s)| a * s).sum();
            kernel[flat] * vol
        });
    }
}

fn normalize_mass(values: &mut [f64], cell_volume: f64) {
    let mass: f64 = values.iter().sum::<f64>() * cell_volume;
    if mass > 0.0 {
        values.iter_mut().for_each(|v| *v /= mass);
    }
}

/// `1 / (|S^{m-1}| int_0^1 exp(-1/(1-r^2)) r^{m-1} dr)` by composite Simpson.
fn normalizing_constant(m: usize) -> f64 {
    let steps = 20_000;
    let dr = 1.0 / steps as f64;
    let f = |r: f64| {
        if r >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - r * r)).exp() * r.powi(m as i32 - 1)
        }
    };
    let mut acc = f(0.0) + f(1.0);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * dr);
    }
    let radial = acc * dr / 3.0;
    1.0 / (sphere_area(m) * radial)
}

/// `|S^{m-1}| = 2 pi^{m/2} / Gamma(m/2)`.
fn sphere_area(m: usize) -> f64 {
    let half = m as f64 / 2.0;
    2.0 * PI.powf(half) / gamma_half_integer(m)
}

/// `Gamma(m/2)` for integer `m >= 1`.
fn gamma_half_integer(m: usize) -> f64 {
    let (mut g, mut x) = if m.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (PI.sqrt(), 0.5)
    };
    while x < m as f64 / 2.0 - 0.25 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Convolves the smooth part with `rho_eps` and replaces every atom
/// `c D^alpha delta_{z0}` by the sampled field `c (D^alpha rho_eps)(z - z0)`.
pub fn mollify(current: &Current, epsilon: f64) -> Result<Current> {
    let grid = current.grid().clone();
    let moll = Mollifier::for_grid(&grid, epsilon)?;
    let mut out = current.clone();
    let atoms = out.take_atoms();
    let order = current.declared_order();
    for (_, field) in out.components_mut() {
        if field.iter().any(|v| *v != ZERO) {
            moll.convolve(&grid, field);
        }
    }
    for atom in atoms {
        let mut kernel: Vec<Complex64> = moll
            .sample_at(&grid, &atom.location)
            .into_iter()
            .map(|v| Complex64::new(v, 0.0))
            .collect();
        if atom.order() > 0 {
            spectral_partial(&grid, &mut kernel, &atom.derivative);
        }
        let target = out
            .component_mut(atom.component)
            .expect("atom component validated on insertion");
        for (t, k) in target.iter_mut().zip(&kernel) {
            *t += atom.coefficient * k;
        }
    }
    out.set_order(order);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{FormIndex, SingularAtom};
    use super::*;

    #[test]
    fn profile_has_unit_mass() {
        // Independent check: 2-D tensor midpoint rule on [-1,1]^2.
        let m = Mollifier::new(2, 1.0).unwrap();
        let n = 2000;
        let h = 2.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h];
                acc += m.eval(&x);
            }
        }
        assert!((acc * h * h - 1.0).abs() < 1e-6, "mass {}", acc * h * h);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-12);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-12);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn sampled_kernel_symmetric_and_unit_mass() {
        let g = ComplexGrid::cube(1, -1.0, 1.0, 64).unwrap();
        let m = Mollifier::for_grid(&g, 8.0 * g.h()).unwrap();
        let k = m.sample_at(&g, &[0.0, 0.0]);
        let mass: f64 = k.iter().sum::<f64>() * g.cell_volume();
        assert!((mass - 1.0).abs() < 1e-12);
        let n = g.resolution();
        for i in 1..n {
            for j in 1..n {
                assert_eq!(k[g.ravel(&[i, j])], k[g.ravel(&[n - i, n - j])]);
            }
        }
    }

    #[test]
    fn rejects_unresolved_scale() {
        let g = ComplexGrid::cube(1, -1.0, 1.0, 64).unwrap();
        assert!(matches!(
            Mollifier::for_grid(&g, 3.0 * g.h()),
            Err(Error::UnresolvedKernel { .. })
        ));
        assert!(Mollifier::for_grid(&g, 4.0 * g.h()).is_ok());
    }

    #[test]
    fn dirac_atoms() {
        let g = ComplexGrid::cube(1, -1.0, 1.0, 128).unwrap();
        let eps = 8.0 * g.h();
        let mut c = Current::zero(&g, 0, 0).unwrap();
        c.add_atom(SingularAtom::dirac(vec![0.0, 0.0], FormIndex::SCALAR))
            .unwrap();
        let f = mollify(&c, eps).unwrap();
        assert!(!f.has_atoms());
        let field = f.component(FormIndex::SCALAR).unwrap();
        let mass: Complex64 = field.iter().sum::<Complex64>() * g.cell_volume();
        assert!((mass.re - 1.0).abs() < 1e-3 && mass.im.abs() < 1e-12);
        let reference = Mollifier::new(2, eps).unwrap();
        let centre = field[g.ravel(&[64, 64])].re;
        assert!((centre - reference.eval(&[0.0, 0.0])).abs() / centre < 1e-2);

        let mut d = Current::zero(&g, 0, 0).unwrap();
        let mut a = SingularAtom::dirac(vec![0.0, 0.0], FormIndex::SCALAR);
        a.derivative = vec![1, 0];
        d.add_atom(a).unwrap();
        let f = mollify(&d, eps).unwrap();
        let field = f.component(FormIndex::SCALAR).unwrap();
        let integral: Complex64 = field.iter().sum::<Complex64>() * g.cell_volume();
        assert!(integral.norm() < 1e-6);
        assert_eq!(f.declared_order(), 1);
    }

    #[test]
    fn convolution_matches_dense_oracle() {
        let g = ComplexGrid::cube(1, -1.0, 1.0, 64).unwrap();
        let eps = 4.0 * g.h();
        let gauss = g.sample(|x| {
            let r2 = (x[0] - 0.1).powi(2) + (x[1] + 0.05).powi(2);
            Complex64::new((-r2 / (2.0 * 0.15f64.powi(2))).exp(), 0.0)
        });
        let c = Current::scalar(&g, gauss.clone()).unwrap();
        let out = mollify(&c, eps).unwrap();
        let field = out.component(FormIndex::SCALAR).unwrap();

        // Dense direct convolution with the renormalized sampled kernel.
        let m = Mollifier::new(2, eps).unwrap();
        let n = g.resolution() as i64;
        let h = g.h();
        let r = 5i64;
        let mut weights = Vec::new();
        for a in -r..=r {
            for b in -r..=r {
                weights.push((a, b, m.eval(&[a as f64 * h, b as f64 * h])));
            }
        }
        let total: f64 = weights.iter().map(|w| w.2).sum();
        let mut max_err: f64 = 0.0;
        let (mut arg_in, mut arg_out, mut best_in, mut best_out) = (0, 0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for &(a, b, w) in &weights {
                    let (ii, jj) = ((i - a).rem_euclid(n), (j - b).rem_euclid(n));
                    acc += w * gauss[(ii * n + jj) as usize].re;
                }
                acc /= total;
                let flat = (i * n + j) as usize;
                max_err = max_err.max((acc - field[flat].re).abs());
                if gauss[flat].re > best_in {
                    best_in = gauss[flat].re;
                    arg_in = flat;
                }
                if field[flat].re > best_out {
                    best_out = field[flat].re;
                    arg_out = flat;
                }
            }
        }
        assert!(max_err < 1e-12, "dense mismatch {max_err}");
        let (mut p, mut q) = ([0.0; 2], [0.0; 2]);
        g.point(arg_in, &mut p);
        g.point(arg_out, &mut q);
        let shift = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        assert!(shift < eps);
    }
}
