//! Discrete dbar, its formal adjoint, Laplacians, the free-space Newton
//! potential and the planar Cauchy transform.
//!
//! Derivatives are spectral by default; the centered fourth-order scheme is
//! local and is what the weighted solver and the residual audits use on
//! fields that are not compactly supported.

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::currents::{insertion_sign, Current, FormIndex};
use crate::error::{Error, Result};
use crate::fft::{apply_multiplier, fft_nd, Direction};
use crate::grid::ComplexGrid;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeScheme {
    #[default]
    Spectral,
    CenteredFourth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub derivative_scheme: DerivativeScheme,
    /// Cells next to the bbox excluded from residual evaluation.
    pub boundary_margin: usize,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            derivative_scheme: DerivativeScheme::Spectral,
            boundary_margin: 8,
        }
    }
}

impl OperatorConfig {
    pub fn fourth_order() -> Self {
        Self {
            derivative_scheme: DerivativeScheme::CenteredFourth,
            ..Self::default()
        }
    }
}

/// In-place spectral `D^alpha` over the real coordinates.
pub fn spectral_partial(grid: &ComplexGrid, field: &mut [Complex64], alpha: &[u32]) {
    let freqs = grid.frequencies().to_vec();
    apply_multiplier(field, grid.resolution(), grid.real_dim(), |k| {
        let mut m = Complex64::new(1.0, 0.0);
        for (axis, &a) in alpha.iter().enumerate() {
            if a > 0 {
                m *= (I * freqs[k[axis]]).powu(a);
            }
        }
        m
    });
}

/// Periodic centered stencil along one axis: `sum_s w_s f(x + s h)`.
fn stencil(
    grid: &ComplexGrid,
    field: &[Complex64],
    axis: usize,
    weights: &[(i64, f64)],
) -> Vec<Complex64> {
    let n = grid.resolution() as i64;
    let stride = grid.stride(axis);
    let mut out = vec![ZERO; field.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        let j = ((flat / stride) % n as usize) as i64;
        let base = flat as i64 - j * stride as i64;
        let mut acc = ZERO;
        for &(s, w) in weights {
            let jj = (j + s).rem_euclid(n);
            acc += field[(base + jj * stride as i64) as usize] * w;
        }
        *o = acc;
    }
    out
}

/// `d/dx_axis` of a field.
pub fn partial(
    grid: &ComplexGrid,
    field: &[Complex64],
    axis: usize,
    scheme: DerivativeScheme,
) -> Vec<Complex64> {
    match scheme {
        DerivativeScheme::Spectral => {
            let mut alpha = vec![0; grid.real_dim()];
            alpha[axis] = 1;
            let mut out = field.to_vec();
            spectral_partial(grid, &mut out, &alpha);
            out
        }
        DerivativeScheme::CenteredFourth => {
            let c = 1.0 / (12.0 * grid.h());
            stencil(
                grid,
                field,
                axis,
                &[(-2, c), (-1, -8.0 * c), (1, 8.0 * c), (2, -c)],
            )
        }
    }
}

/// `d^2/dx_axis^2` of a field, as a direct second-derivative operator.
pub fn second_partial(
    grid: &ComplexGrid,
    field: &[Complex64],
    axis: usize,
    scheme: DerivativeScheme,
) -> Vec<Complex64> {
    match scheme {
        DerivativeScheme::Spectral => {
            let mut alpha = vec![0; grid.real_dim()];
            alpha[axis] = 2;
            let mut out = field.to_vec();
            spectral_partial(grid, &mut out, &alpha);
            out
        }
        DerivativeScheme::CenteredFourth => {
            let c = 1.0 / (12.0 * grid.h() * grid.h());
            stencil(
                grid,
                field,
                axis,
                &[
                    (-2, -c),
                    (-1, 16.0 * c),
                    (0, -30.0 * c),
                    (1, 16.0 * c),
                    (2, -c),
                ],
            )
        }
    }
}

/// `d/dzbar_j = (d/dx_j + i d/dy_j) / 2`, `j` 1-based.
pub fn d_zbar(
    grid: &ComplexGrid,
    field: &[Complex64],
    j: usize,
    scheme: DerivativeScheme,
) -> Vec<Complex64> {
    dz_combination(grid, field, j, scheme, 1.0)
}

/// `d/dz_j = (d/dx_j - i d/dy_j) / 2`, `j` 1-based.
pub fn d_z(
    grid: &ComplexGrid,
    field: &[Complex64],
    j: usize,
    scheme: DerivativeScheme,
) -> Vec<Complex64> {
    dz_combination(grid, field, j, scheme, -1.0)
}

fn dz_combination(
    grid: &ComplexGrid,
    field: &[Complex64],
    j: usize,
    scheme: DerivativeScheme,
    sign: f64,
) -> Vec<Complex64> {
    match scheme {
        DerivativeScheme::Spectral => {
            let freqs = grid.frequencies().to_vec();
            let (ax, ay) = (2 * (j - 1), 2 * (j - 1) + 1);
            let mut out = field.to_vec();
            apply_multiplier(&mut out, grid.resolution(), grid.real_dim(), |k| {
                0.5 * (I * freqs[k[ax]] + sign * I * I * freqs[k[ay]])
            });
            out
        }
        DerivativeScheme::CenteredFourth => {
            let dx = partial(grid, field, 2 * (j - 1), scheme);
            let dy = partial(grid, field, 2 * (j - 1) + 1, scheme);
            dx.iter()
                .zip(&dy)
                .map(|(a, b)| 0.5 * (a + sign * I * b))
                .collect()
        }
    }
}

/// `(dbar f)_{I,J'} = (-1)^p sum_{j in J'} sign(j, J' \ j) df_{I,J'\j}/dzbar_j`.
pub fn dbar(current: &Current, cfg: &OperatorConfig) -> Result<Current> {
    let grid = current.grid();
    let n = grid.n_complex();
    let (p, q) = current.bidegree();
    if current.has_atoms() {
        return Err(Error::InvalidCurrent(
            "dbar needs a mollified current".into(),
        ));
    }
    if q == n {
        warn!("dbar of a top-degree ({p},{q}) current vanishes identically");
        return Err(Error::InvalidArgument(format!(
            "dbar of a ({p},{q}) current in C^{n} is zero (top degree)"
        )));
    }
    let mut out = Current::zero(grid, p, q + 1)?.with_order(current.declared_order() + 1);
    let sp = if p % 2 == 0 { 1.0 } else { -1.0 };
    for (idx, f) in current.components() {
        if f.iter().all(|v| *v == ZERO) {
            continue;
        }
        for j in 1..=n {
            let bit = 1u8 << (j - 1);
            if idx.dzbar & bit != 0 {
                continue;
            }
            let target = FormIndex {
                dz: idx.dz,
                dzbar: idx.dzbar | bit,
            };
            let s = sp * insertion_sign(j, idx.dzbar);
            let d = d_zbar(grid, f, j, cfg.derivative_scheme);
            let slot = out.component_mut(target).expect("target bidegree");
            for (o, v) in slot.iter_mut().zip(&d) {
                *o += s * v;
            }
        }
    }
    Ok(out)
}

/// `(dbar* f)_{I,K} = (-1)^{p-1} sum_{j not in K} sign(j, K) df_{I,K+j}/dz_j`;
/// for (0,1) forms this is `-sum_j df_j/dz_j`.
pub fn dbar_star(current: &Current, cfg: &OperatorConfig) -> Result<Current> {
    let grid = current.grid();
    let n = grid.n_complex();
    let (p, q) = current.bidegree();
    if current.has_atoms() {
        return Err(Error::InvalidCurrent(
            "dbar* needs a mollified current".into(),
        ));
    }
    if q == 0 {
        return Err(Error::InvalidArgument(format!(
            "dbar* of a ({p},0) current is undefined"
        )));
    }
    let mut out = Current::zero(grid, p, q - 1)?.with_order(current.declared_order() + 1);
    let sp = if p % 2 == 1 { 1.0 } else { -1.0 };
    for (idx, f) in current.components() {
        if f.iter().all(|v| *v == ZERO) {
            continue;
        }
        for j in 1..=n {
            let bit = 1u8 << (j - 1);
            if idx.dzbar & bit == 0 {
                continue;
            }
            let rest = idx.dzbar & !bit;
            let target = FormIndex {
                dz: idx.dz,
                dzbar: rest,
            };
            let s = sp * insertion_sign(j, rest);
            let d = d_z(grid, f, j, cfg.derivative_scheme);
            let slot = out.component_mut(target).expect("target bidegree");
            for (o, v) in slot.iter_mut().zip(&d) {
                *o += s * v;
            }
        }
    }
    Ok(out)
}

/// Componentwise flat Laplacian `sum_i d^2/dx_i^2`.
pub fn laplacian(current: &Current, cfg: &OperatorConfig) -> Current {
    let mut out = current.zeros_like();
    let grid = current.grid().clone();
    for ((_, src), (_, dst)) in current.components().iter().zip(out.components_mut()) {
        *dst = field_laplacian(&grid, src, cfg.derivative_scheme);
    }
    out
}

pub fn field_laplacian(
    grid: &ComplexGrid,
    field: &[Complex64],
    scheme: DerivativeScheme,
) -> Vec<Complex64> {
    match scheme {
        DerivativeScheme::Spectral => {
            let freqs = grid.frequencies().to_vec();
            let mut out = field.to_vec();
            apply_multiplier(&mut out, grid.resolution(), grid.real_dim(), |k| {
                Complex64::new(-k.iter().map(|&i| freqs[i] * freqs[i]).sum::<f64>(), 0.0)
            });
            out
        }
        DerivativeScheme::CenteredFourth => {
            let mut acc = vec![ZERO; field.len()];
            for axis in 0..grid.real_dim() {
                for (a, v) in acc
                    .iter_mut()
                    .zip(second_partial(grid, field, axis, scheme))
                {
                    *a += v;
                }
            }
            acc
        }
    }
}

/// Second-order five-point (per axis) Laplacian, used to audit the Newton potential.
pub fn laplacian_fd2(grid: &ComplexGrid, field: &[Complex64]) -> Vec<Complex64> {
    let c = 1.0 / (grid.h() * grid.h());
    let mut acc = vec![ZERO; field.len()];
    for axis in 0..grid.real_dim() {
        for (a, v) in acc.iter_mut().zip(stencil(
            grid,
            field,
            axis,
            &[(-1, c), (0, -2.0 * c), (1, c)],
        )) {
            *a += v;
        }
    }
    acc
}

/// `dbar dbar* + dbar* dbar`, composed from first-derivative operators.
pub fn box_operator(current: &Current, cfg: &OperatorConfig) -> Result<Current> {
    let n = current.grid().n_complex();
    let (_, q) = current.bidegree();
    let mut out = current.zeros_like();
    if q > 0 {
        let t = dbar(&dbar_star(current, cfg)?, cfg)?;
        out.axpy(Complex64::new(1.0, 0.0), &t)?;
    }
    if q < n {
        let t = dbar_star(&dbar(current, cfg)?, cfg)?;
        out.axpy(Complex64::new(1.0, 0.0), &t)?;
    }
    Ok(out.with_order(current.declared_order() + 2))
}

/// Flat indices at least `margin` cells from every bbox face.
pub fn interior_indices(grid: &ComplexGrid, margin: usize) -> Vec<usize> {
    let n = grid.resolution();
    let mut idx = vec![0usize; grid.real_dim()];
    (0..grid.len())
        .filter(|&flat| {
            grid.unravel(flat, &mut idx);
            idx.iter().all(|&i| i >= margin && i + margin < n)
        })
        .collect()
}

/// `||a - b||_{l2(S)} / ||b||_{l2(S)}` over component-wise fields; `0` when both vanish.
pub fn relative_residual(a: &Current, b: &Current, indices: &[usize]) -> Result<f64> {
    let diff = a.sub(b)?;
    let num = diff.l2_norm_on(Some(indices));
    let den = b.l2_norm_on(Some(indices));
    Ok(if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    })
}

/// Elementary solution of the flat Laplacian: `log|x| / 2 pi` in R^2,
/// `-C_n |x|^{2-2n}` with `C_n = 1/((2n-2) |S^{2n-1}|)` for `n >= 2`.
pub fn elementary_solution(n_complex: usize, r: f64) -> f64 {
    match n_complex {
        1 => r.ln() / (2.0 * PI),
        _ => -elementary_constant(n_complex) * r.powi(2 - 2 * n_complex as i32),
    }
}

/// `C_n = 1/((2n-2) |S^{2n-1}|)`; `1/(4 pi^2)` for `n = 2`.
pub fn elementary_constant(n_complex: usize) -> f64 {
    let m = 2 * n_complex;
    // |S^{2n-1}| = 2 pi^n / (n-1)!
    let fact: f64 = (1..n_complex).map(|k| k as f64).product();
    let area = 2.0 * PI.powi(n_complex as i32) / fact;
    1.0 / ((m as f64 - 2.0) * area)
}

/// Average of the elementary solution over the cell `[-h/2, h/2]^{2n}`.
pub fn elementary_cell_average(n_complex: usize, h: f64) -> f64 {
    let a = 0.5 * h;
    match n_complex {
        // mean of log|x| over [-a, a]^2 = log a + log(2)/2 - 3/2 + pi/4
        1 => (a.ln() + 0.5 * 2f64.ln() - 1.5 + PI / 4.0) / (2.0 * PI),
        _ => {
            let m = 2 * n_complex;
            let p = m - 2;
            // Pyramid decomposition: mean |x|^{-p} over [-1,1]^m
            //   = 2m / ((m - p) 2^m) * int_{[-1,1]^{m-1}} (1 + |u|^2)^{-p/2} du.
            let face = gauss_cube_integral(m - 1, |u| {
                (1.0 + u.iter().map(|v| v * v).sum::<f64>()).powf(-(p as f64) / 2.0)
            });
            let mean = 2.0 * m as f64 / ((m - p) as f64 * 2f64.powi(m as i32)) * face;
            -elementary_constant(n_complex) * mean * a.powi(-(p as i32))
        }
    }
}

/// Tensor Gauss-Legendre quadrature over `[-1,1]^d` (20 nodes per axis).
fn gauss_cube_integral<F: Fn(&[f64]) -> f64>(d: usize, f: F) -> f64 {
    let (nodes, weights) = gauss_legendre(20);
    let k = nodes.len();
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    for flat in 0..k.pow(d as u32) {
        let mut rem = flat;
        let mut w = 1.0;
        for a in (0..d).rev() {
            idx[a] = rem % k;
            rem /= k;
            x[a] = nodes[idx[a]];
            w *= weights[idx[a]];
        }
        acc += w * f(&x);
    }
    acc
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for i in 0..k {
        let mut x = (PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=k {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Checks that a field vanishes on the outer `cells`-wide frame of the grid.
fn check_padding(grid: &ComplexGrid, field: &[Complex64], cells: usize) -> Result<()> {
    let n = grid.resolution();
    let scale = field.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(());
    }
    let mut idx = vec![0usize; grid.real_dim()];
    for (flat, v) in field.iter().enumerate() {
        grid.unravel(flat, &mut idx);
        let near = idx.iter().any(|&i| i < cells || i + cells >= n);
        if near && v.norm() > 1e-6 * scale {
            return Err(Error::InsufficientPadding(format!(
                "field is nonzero within {cells} cells of the bbox"
            )));
        }
    }
    Ok(())
}

/// Free-space convolution `K * field` on the doubled grid; `kernel(offset)`
/// receives the physical offset and returns the sampled kernel times `h^m`.
fn free_space_convolution<K>(grid: &ComplexGrid, field: &[Complex64], kernel: K) -> Vec<Complex64>
where
    K: Fn(&[f64]) -> Complex64,
{
    let n = grid.resolution();
    let m = grid.real_dim();
    let big = 2 * n;
    let total = big.pow(m as u32);
    let h = grid.h();
    let mut idx = vec![0usize; m];
    let mut x = vec![0.0; m];

    let mut ker = vec![ZERO; total];
    for (flat, k) in ker.iter_mut().enumerate() {
        unravel(flat, big, &mut idx);
        for (xa, &i) in x.iter_mut().zip(&idx) {
            let s = if i < n {
                i as f64
            } else {
                i as f64 - big as f64
            };
            *xa = s * h;
        }
        *k = kernel(&x);
    }
    fft_nd(&mut ker, big, m, Direction::Forward);

    let mut data = vec![ZERO; total];
    for (flat, v) in field.iter().enumerate() {
        grid.unravel(flat, &mut idx);
        data[ravel(&idx, big)] = *v;
    }
    let strides: Vec<usize> = (0..m).map(|a| big.pow((m - 1 - a) as u32)).collect();
    apply_multiplier(&mut data, big, m, |k| {
        let flat: usize = k.iter().zip(&strides).map(|(a, s)| a * s).sum();
        ker[flat]
    });
    drop(ker);
    let mut out = vec![ZERO; field.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        grid.unravel(flat, &mut idx);
        *o = data[ravel(&idx, big)];
    }
    out
}

fn unravel(mut flat: usize, side: usize, out: &mut [usize]) {
    for a in (0..out.len()).rev() {
        out[a] = flat % side;
        flat /= side;
    }
}

fn ravel(idx: &[usize], side: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * side + i)
}

/// `v = E * field` with `E` the elementary solution, so `Delta v = field`.
pub fn newton_potential(field: &[Complex64], grid: &ComplexGrid) -> Result<Vec<Complex64>> {
    if field.len() != grid.len() {
        return Err(Error::InvalidGrid("field does not match grid".into()));
    }
    check_padding(grid, field, 2)?;
    let n = grid.n_complex();
    let h = grid.h();
    let vol = grid.cell_volume();
    let centre = elementary_cell_average(n, h);
    Ok(free_space_convolution(grid, field, |x| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let e = if r == 0.0 {
            centre
        } else {
            elementary_solution(n, r)
        };
        Complex64::new(e * vol, 0.0)
    }))
}

/// Solution of `u_zbar = field` in C: `u = (1/pi) int f(w) / (z - w)`.
pub fn cauchy_transform(field: &[Complex64], grid: &ComplexGrid) -> Result<Vec<Complex64>> {
    if grid.n_complex() != 1 {
        return Err(Error::UnsupportedDimension(grid.n_complex()));
    }
    if field.len() != grid.len() {
        return Err(Error::InvalidGrid("field does not match grid".into()));
    }
    check_padding(grid, field, 2)?;
    let vol = grid.cell_volume();
    // The cell average of 1/z over a centred square vanishes by symmetry.
    Ok(free_space_convolution(grid, field, |x| {
        let z = Complex64::new(x[0], x[1]);
        if z == ZERO {
            ZERO
        } else {
            vol / (PI * z)
        }
    }))
}

/// Result of the free-space Laplace pre-solve.
#[derive(Debug, Clone)]
pub struct Presolve {
    pub v: Current,
    /// `dbar* f` that was inverted.
    pub rhs: Current,
    /// `||box v - dbar* f|| / ||dbar* f||` on the interior, with `box = -Delta/4`
    /// evaluated by the second-order stencil.
    pub residual: f64,
}

/// Solves `(dbar dbar* + dbar* dbar) v = dbar* f` in free space:
/// `v = -4 E * dbar* f` componentwise.
pub fn laplace_presolve(f: &Current, cfg: &OperatorConfig) -> Result<Presolve> {
    let grid = f.grid().clone();
    let rhs = dbar_star(f, cfg)?;
    let mut v = rhs.zeros_like();
    for ((_, src), (_, dst)) in rhs.components().iter().zip(v.components_mut()) {
        if src.iter().all(|x| *x == ZERO) {
            continue;
        }
        let mut pot = newton_potential(src, &grid)?;
        pot.iter_mut().for_each(|x| *x *= -4.0);
        *dst = pot;
    }
    let v = v.with_order(f.declared_order());
    let mut boxed = v.zeros_like();
    for ((_, src), (_, dst)) in v.components().iter().zip(boxed.components_mut()) {
        *dst = laplacian_fd2(&grid, src)
            .into_iter()
            .map(|x| -0.25 * x)
            .collect();
    }
    let interior = interior_indices(&grid, cfg.boundary_margin.max(1));
    let residual = relative_residual(&boxed, &rhs, &interior)?;
    Ok(Presolve { v, rhs, residual })
}

/// Relative interior discrepancy between `-Delta/4 (dbar v)` with a direct
/// Laplacian and `dbar((dbar dbar* + dbar* dbar) v)` composed from first derivatives.
pub fn commutation_check(v: &Current, cfg: &OperatorConfig) -> Result<f64> {
    let dv = dbar(v, cfg)?;
    let mut direct = laplacian(&dv, cfg);
    direct.scale(Complex64::new(-0.25, 0.0));
    let composed = dbar(&box_operator(v, cfg)?, cfg)?;
    let interior = interior_indices(v.grid(), cfg.boundary_margin);
    relative_residual(&composed, &direct, &interior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{random_smooth_current, smooth_bump};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_err_on(a: &[Complex64], b: &[Complex64], idx: &[usize]) -> f64 {
        idx.iter()
            .map(|&i| (a[i] - b[i]).norm())
            .fold(0.0, f64::max)
    }

    fn gauss(x: &[f64], sigma: f64) -> f64 {
        (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma * sigma)).exp()
    }

    const S: f64 = 0.22;

    #[test]
    fn dbar_of_polynomials() {
        // Polynomials times a Gaussian envelope G; with dG/dzbar = -z G / (2 s^2):
        //   dbar(zbar G) = G (1 - |z|^2 / 2s^2), dbar(z^2 G) = -z^3 G / 2s^2,
        //   dbar*(z G dzbar) = -G (1 - |z|^2 / 2s^2).
        let g = ComplexGrid::cube(1, -2.0, 2.0, 256).unwrap();
        let cfg = OperatorConfig::default();
        let all: Vec<usize> = (0..g.len()).collect();
        let s2 = 2.0 * S * S;
        let u = Current::scalar(&g, g.sample(|x| c(x[0], -x[1]) * gauss(x, S))).unwrap();
        let du = dbar(&u, &cfg).unwrap();
        let want = g.sample(|x| c(gauss(x, S) * (1.0 - (x[0] * x[0] + x[1] * x[1]) / s2), 0.0));
        let e = max_err_on(du.component(FormIndex::dzbar(1)).unwrap(), &want, &all);
        assert!(e < 1e-8, "{e}");

        let z2 = Current::scalar(&g, g.sample(|x| c(x[0], x[1]).powu(2) * gauss(x, S))).unwrap();
        let dz2 = dbar(&z2, &cfg).unwrap();
        let want = g.sample(|x| -c(x[0], x[1]).powu(3) * gauss(x, S) / s2);
        assert!(max_err_on(dz2.component(FormIndex::dzbar(1)).unwrap(), &want, &all) < 1e-8);

        let f = Current::form01(&g, vec![g.sample(|x| c(x[0], x[1]) * gauss(x, S))]).unwrap();
        let st = dbar_star(&f, &cfg).unwrap();
        let want = g.sample(|x| c(-gauss(x, S) * (1.0 - (x[0] * x[0] + x[1] * x[1]) / s2), 0.0));
        assert!(max_err_on(st.component(FormIndex::SCALAR).unwrap(), &want, &all) < 1e-8);

        let constant = Current::form01(&g, vec![vec![c(2.0, 1.0); g.len()]]).unwrap();
        assert!(dbar_star(&constant, &cfg).unwrap().l2_norm() < 1e-12);
    }

    #[test]
    fn dbar_in_two_variables() {
        let g = ComplexGrid::cube(2, -2.0, 2.0, 32).unwrap();
        let cfg = OperatorConfig::default();
        let u = Current::scalar(&g, g.sample(|x| c(x[0], -x[1]) * c(x[2], -x[3]))).unwrap();
        // Polynomials are not periodic; compare only the algebra of dbar on the exact derivative.
        let du = dbar(&u, &OperatorConfig::fourth_order()).unwrap();
        let inner = interior_indices(&g, 3);
        let e1 = g.sample(|x| c(x[2], -x[3]));
        let e2 = g.sample(|x| c(x[0], -x[1]));
        assert!(max_err_on(du.component(FormIndex::dzbar(1)).unwrap(), &e1, &inner) < 1e-10);
        assert!(max_err_on(du.component(FormIndex::dzbar(2)).unwrap(), &e2, &inner) < 1e-10);
        let v = random_smooth_current(&g, 0, 0, 0.6, 3, 11);
        let ddv = dbar(&dbar(&v, &cfg).unwrap(), &cfg).unwrap();
        assert!(ddv.l2_norm() < 1e-10 * v.l2_norm());
    }

    #[test]
    fn top_and_bottom_degree_rejected() {
        let g = ComplexGrid::cube(1, -1.0, 1.0, 16).unwrap();
        let cfg = OperatorConfig::default();
        assert!(dbar(&Current::zero(&g, 0, 1).unwrap(), &cfg).is_err());
        assert!(dbar_star(&Current::zero(&g, 0, 0).unwrap(), &cfg).is_err());
    }

    #[test]
    fn adjointness_and_box_identity() {
        for (n, res) in [(1usize, 64usize), (2, 16)] {
            let g = ComplexGrid::cube(n, -2.0, 2.0, res).unwrap();
            let cfg = OperatorConfig::default();
            for q in 0..n {
                let u = random_smooth_current(&g, 0, q, 0.9, 3, 1 + q as u64);
                let f = random_smooth_current(&g, 0, q + 1, 0.9, 3, 7 + q as u64);
                let lhs = dbar(&u, &cfg).unwrap().inner(&f).unwrap();
                let rhs = u.inner(&dbar_star(&f, &cfg).unwrap()).unwrap();
                assert!(
                    (lhs - rhs).norm() < 1e-10 * lhs.norm().max(1e-300),
                    "n={n} q={q}"
                );
            }
            for q in 0..=n {
                let f = random_smooth_current(&g, 0, q, 0.9, 3, 3);
                let b = box_operator(&f, &cfg).unwrap();
                let mut l = laplacian(&f, &cfg);
                l.scale(c(-0.25, 0.0));
                let all: Vec<usize> = (0..g.len()).collect();
                assert!(
                    relative_residual(&b, &l, &all).unwrap() < 1e-10,
                    "n={n} q={q}"
                );
            }
        }
    }

    #[test]
    fn laplacian_of_polynomials() {
        // For harmonic h of degree 2: Delta(h G) = h G (r^2/s^4 - 6/s^2);
        // Delta(r^2 G) = G (4 - 6 r^2/s^2 + r^4/s^4).
        let g = ComplexGrid::cube(1, -2.0, 2.0, 256).unwrap();
        let cfg = OperatorConfig::default();
        let all: Vec<usize> = (0..g.len()).collect();
        let s2 = S * S;
        let h = |x: &[f64]| x[0] * x[0] - x[1] * x[1];
        let r2 = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
        let rez2 = Current::scalar(&g, g.sample(|x| c(h(x) * gauss(x, S), 0.0))).unwrap();
        let l = laplacian(&rez2, &cfg);
        let want = g.sample(|x| c(h(x) * gauss(x, S) * (r2(x) / (s2 * s2) - 6.0 / s2), 0.0));
        let e = max_err_on(l.component(FormIndex::SCALAR).unwrap(), &want, &all);
        assert!(e < 1e-8, "{e}");
        let rr = Current::scalar(&g, g.sample(|x| c(r2(x) * gauss(x, S), 0.0))).unwrap();
        let l = laplacian(&rr, &cfg);
        let want = g.sample(|x| {
            c(
                gauss(x, S) * (4.0 - 6.0 * r2(x) / s2 + r2(x).powi(2) / (s2 * s2)),
                0.0,
            )
        });
        let e = max_err_on(l.component(FormIndex::SCALAR).unwrap(), &want, &all);
        assert!(e < 1e-8, "{e}");
    }

    #[test]
    fn elementary_constants() {
        assert!((elementary_constant(2) - 1.0 / (4.0 * PI * PI)).abs() < 1e-15);
        // Cell averages against brute-force midpoint quadrature.
        let h = 0.1;
        let k = 400;
        let mut acc = 0.0;
        for i in 0..k {
            for j in 0..k {
                let x = -h / 2.0 + (i as f64 + 0.5) * h / k as f64;
                let y = -h / 2.0 + (j as f64 + 0.5) * h / k as f64;
                acc += elementary_solution(1, (x * x + y * y).sqrt());
            }
        }
        let brute = acc / (k * k) as f64;
        assert!((elementary_cell_average(1, h) - brute).abs() < 1e-5);
        let k = 40;
        let mut acc = 0.0;
        for a in 0..k {
            for b in 0..k {
                for cc in 0..k {
                    for d in 0..k {
                        let p = |i: usize| -h / 2.0 + (i as f64 + 0.5) * h / k as f64;
                        let r = (p(a).powi(2) + p(b).powi(2) + p(cc).powi(2) + p(d).powi(2)).sqrt();
                        acc += elementary_solution(2, r);
                    }
                }
            }
        }
        let brute = acc / (k as f64).powi(4);
        let exact = elementary_cell_average(2, h);
        assert!(
            (exact - brute).abs() / exact.abs() < 1e-2,
            "{exact} {brute}"
        );
    }

    #[test]
    fn newton_potential_of_mollified_dirac() {
        let g = ComplexGrid::cube(1, -1.0, 1.0, 256).unwrap();
        let eps = 8.0 * g.h();
        let rho = crate::currents::Mollifier::for_grid(&g, eps)
            .unwrap()
            .sample_at(&g, &[0.0, 0.0]);
        let field: Vec<Complex64> = rho.iter().map(|&v| c(v, 0.0)).collect();
        let v = newton_potential(&field, &g).unwrap();
        let mut x = [0.0; 2];
        let mut worst: f64 = 0.0;
        for (i, val) in v.iter().enumerate() {
            g.point(i, &mut x);
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if r > 2.0 * eps {
                let e = elementary_solution(1, r);
                worst = worst.max((val.re - e).abs() / e.abs().max(1e-3));
            }
        }
        assert!(worst < 0.01, "{worst}");
        assert!(newton_potential(&vec![ZERO; g.len()], &g)
            .unwrap()
            .iter()
            .all(|v| *v == ZERO));
    }

    #[test]
    fn newton_potential_inverts_laplacian() {
        let mut prev = None;
        for res in [128usize, 256] {
            let g = ComplexGrid::cube(1, -1.0, 1.0, res).unwrap();
            let f = g.sample(|x| {
                c(
                    smooth_bump(x, &[0.1, -0.05], 0.5),
                    0.3 * smooth_bump(x, &[-0.2, 0.1], 0.3),
                )
            });
            let v = newton_potential(&f, &g).unwrap();
            let lv = laplacian_fd2(&g, &v);
            let inner = interior_indices(&g, 4);
            let num: f64 = inner
                .iter()
                .map(|&i| (lv[i] - f[i]).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let den: f64 = inner.iter().map(|&i| f[i].norm_sqr()).sum::<f64>().sqrt();
            let r = num / den;
            if let Some(p) = prev {
                let ratio: f64 = p / r;
                assert!(ratio > 3.2 && ratio < 4.8, "ratio {ratio}");
            }
            if res == 256 {
                assert!(r < 1e-3, "{r}");
            }
            prev = Some(r);
        }
    }

    #[test]
    fn padding_is_enforced() {
        let g = ComplexGrid::cube(1, -1.0, 1.0, 64).unwrap();
        let f = vec![c(1.0, 0.0); g.len()];
        assert!(matches!(
            newton_potential(&f, &g),
            Err(Error::InsufficientPadding(_))
        ));
    }

    #[test]
    fn cauchy_transform_solves_dbar() {
        let g = ComplexGrid::cube(1, -1.0, 1.0, 256).unwrap();
        assert!(cauchy_transform(&[], &ComplexGrid::cube(2, -1.0, 1.0, 16).unwrap()).is_err());
        let f = g.sample(|x| c(smooth_bump(x, &[0.0, 0.0], 0.5), 0.0));
        let u = cauchy_transform(&f, &g).unwrap();
        let du = d_zbar(&g, &u, 1, DerivativeScheme::CenteredFourth);
        let inner = interior_indices(&g, 8);
        let num: f64 = inner
            .iter()
            .map(|&i| (du[i] - f[i]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = inner.iter().map(|&i| f[i].norm_sqr()).sum::<f64>().sqrt();
        assert!(num / den < 1e-3, "{}", num / den);

        let eps = 8.0 * g.h();
        let rho = crate::currents::Mollifier::for_grid(&g, eps)
            .unwrap()
            .sample_at(&g, &[0.0, 0.0]);
        let field: Vec<Complex64> = rho.iter().map(|&v| c(v, 0.0)).collect();
        let u = cauchy_transform(&field, &g).unwrap();
        let mut x = [0.0; 2];
        for (i, val) in u.iter().enumerate() {
            g.point(i, &mut x);
            let z = c(x[0], x[1]);
            if z.norm() > 2.0 * eps {
                let e = 1.0 / (PI * z);
                assert!((val - e).norm() / e.norm() < 0.01);
            }
        }
    }

    #[test]
    fn presolve_makes_remainder_harmonic() {
        let g = ComplexGrid::cube(1, -1.0, 1.0, 256).unwrap();
        let cfg = OperatorConfig::default();
        let phi =
            Current::scalar(&g, g.sample(|x| c(gauss(&[x[0] - 0.05, x[1]], 0.15), 0.0))).unwrap();
        let f = dbar(&phi, &cfg).unwrap();
        let pre = laplace_presolve(&f, &cfg).unwrap();
        assert!(pre.residual < 1e-3, "{}", pre.residual);
        let dv = dbar(&pre.v, &OperatorConfig::fourth_order()).unwrap();
        let rem = f.sub(&dv).unwrap();
        let lap = laplacian(&rem, &OperatorConfig::fourth_order());
        let lf = laplacian(&f, &cfg);
        let inner = interior_indices(&g, 8);
        assert!(lap.l2_norm_on(Some(&inner)) / lf.l2_norm_on(Some(&inner)) < 1e-3);
        let z = laplace_presolve(&f.zeros_like(), &cfg).unwrap();
        assert_eq!(z.v.l2_norm(), 0.0);
    }

    #[test]
    fn commutation() {
        let mut prev = None;
        for res in [64usize, 128, 256] {
            let g = ComplexGrid::cube(1, -1.0, 1.0, res).unwrap();
            let v = Current::scalar(
                &g,
                g.sample(|x| c((-(x[0] * x[0] + x[1] * x[1]) / 0.045).exp(), 0.0)),
            )
            .unwrap();
            let spectral = commutation_check(&v, &OperatorConfig::default()).unwrap();
            assert!(spectral < 1e-10);
            let cfg4 = OperatorConfig {
                boundary_margin: 4,
                ..OperatorConfig::fourth_order()
            };
            let r = commutation_check(&v, &cfg4).unwrap();
            if let Some(p) = prev {
                let ratio: f64 = p / r;
                if res == 256 {
                    assert!((ratio - 16.0).abs() < 3.2, "ratio {ratio}");
                }
            }
            prev = Some(r);
        }
        let g = ComplexGrid::cube(1, -1.0, 1.0, 32).unwrap();
        let zero = Current::zero(&g, 0, 0).unwrap();
        assert_eq!(
            commutation_check(&zero, &OperatorConfig::default()).unwrap(),
            0.0
        );
    }
}
