//! Growth of harmonic fields toward the boundary, the mean-value property,
//! and Taylor bounds for test functions vanishing to a given order on the
//! boundary.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{elementary_constant, partial, second_partial, DerivativeScheme};
use crate::currents::{multi_indices, Mollifier};
use crate::error::{Error, Result};
use crate::fields::smooth_step;
use crate::geometry::{Domain, ShellDecomposition, ShellSample};
use crate::grid::ComplexGrid;

/// Default slack on the fitted exponent.
pub const DEFAULT_SLACK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthShell {
    pub j: i32,
    /// `2^{-j}`.
    pub scale: f64,
    pub sup: f64,
    pub measure: f64,
    /// False when the shell was empty or the field vanished on it.
    pub used: bool,
}

/// Least-squares fit of `log sup_{V_j} |w|` against `log 2^{-j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub shells: Vec<GrowthShell>,
    /// Decay rate `a` with `sup_{V_j} |w| ~ (2^{-j})^{-a}`; positive means blow-up.
    pub fitted_exponent: f64,
    pub intercept: f64,
    pub fit_r2: f64,
    pub bound_exponent: f64,
    pub slack: f64,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl GrowthReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Two columns `log2(1/d_shell), log(sup)` over the shells used in the fit.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("log2_inv_d,log_sup\n");
        for s in self.shells.iter().filter(|s| s.used) {
            out.push_str(&format!("{},{}\n", -s.scale.log2(), s.sup.ln()));
        }
        out
    }

    pub fn shells_used(&self) -> usize {
        self.shells.iter().filter(|s| s.used).count()
    }
}

/// Fits shell suprema of `magnitude` (pointwise `|w|`) over a materialized decomposition.
pub fn growth_exponent(
    magnitude: &[f64],
    shells: &ShellDecomposition,
    bound_exponent: f64,
    slack: f64,
) -> Result<GrowthReport> {
    let samples: Vec<ShellSample> = shells
        .shells
        .iter()
        .map(|s| ShellSample {
            j: s.j,
            scale: s.lower,
            sup: s.indices.iter().map(|&i| magnitude[i]).fold(0.0, f64::max),
            measure: s.measure,
        })
        .collect();
    let mut report = growth_exponent_from_samples(&samples, bound_exponent, slack)?;
    if let Some(t) = &shells.truncation {
        report.notes.push(t.clone());
    }
    Ok(report)
}

/// Same fit from streamed shell suprema.
pub fn growth_exponent_from_samples(
    samples: &[ShellSample],
    bound_exponent: f64,
    slack: f64,
) -> Result<GrowthReport> {
    let mut notes = Vec::new();
    let shells: Vec<GrowthShell> = samples
        .iter()
        .map(|s| {
            let used = s.measure > 0.0 && s.sup > 0.0 && s.sup.is_finite();
            if !used {
                notes.push(format!(
                    "shell j={} dropped (sup {}, measure {})",
                    s.j, s.sup, s.measure
                ));
            }
            GrowthShell {
                j: s.j,
                scale: s.scale,
                sup: s.sup,
                measure: s.measure,
                used,
            }
        })
        .collect();
    let pts: Vec<(f64, f64)> = shells
        .iter()
        .filter(|s| s.used)
        .map(|s| (s.scale.ln(), s.sup.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Growth(format!(
            "{} usable shells; the fit needs at least 3",
            pts.len()
        )));
    }
    let (slope, intercept, r2) = least_squares(&pts);
    let fitted_exponent = -slope;
    Ok(GrowthReport {
        shells,
        fitted_exponent,
        intercept,
        fit_r2: r2,
        bound_exponent,
        slack,
        pass: fitted_exponent <= bound_exponent + slack,
        notes,
    })
}

/// Returns `(slope, intercept, r^2)`; `r^2 = 1` for an exact (or flat) fit.
fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r2 = if syy <= 1e-24 {
        1.0
    } else {
        1.0 - ss_res / syy
    };
    (slope, intercept, r2)
}

/// `(w * rho_eps)(z) - w(z)` at one grid point, by direct summation over the kernel support.
pub fn mean_value_deviation_at(
    grid: &ComplexGrid,
    field: &[Complex64],
    moll: &Mollifier,
    flat: usize,
) -> Complex64 {
    let (avg, _) = local_average(grid, field, moll, flat);
    avg - field[flat]
}

/// Kernel-weighted average at `flat` and the local sup of `|w|` over the kernel support.
fn local_average(
    grid: &ComplexGrid,
    field: &[Complex64],
    moll: &Mollifier,
    flat: usize,
) -> (Complex64, f64) {
    let m = grid.real_dim();
    let n = grid.resolution() as i64;
    let h = grid.h();
    let r = (moll.epsilon() / h).ceil() as i64;
    let mut centre = vec![0usize; m];
    grid.unravel(flat, &mut centre);
    let mut offset = vec![-r; m];
    let mut x = vec![0.0; m];
    let mut idx = vec![0usize; m];
    let (mut acc, mut mass, mut local) = (Complex64::new(0.0, 0.0), 0.0, 0.0f64);
    'outer: loop {
        for a in 0..m {
            x[a] = offset[a] as f64 * h;
        }
        let w = moll.eval(&x);
        if w > 0.0 {
            let mut inside = true;
            for a in 0..m {
                let j = centre[a] as i64 + offset[a];
                if j < 0 || j >= n {
                    inside = false;
                    break;
                }
                idx[a] = j as usize;
            }
            if inside {
                let v = field[grid.ravel(&idx)];
                acc += v * w;
                mass += w;
                local = local.max(v.norm());
            }
        }
        for a in (0..m).rev() {
            if offset[a] < r {
                offset[a] += 1;
                continue 'outer;
            }
            offset[a] = -r;
        }
        break;
    }
    (acc / mass, local)
}

/// Max over random sample points in `{d > 2 eps}` of `|w - w * rho_eps| / sup_{B(z, eps)} |w|`.
pub fn mean_value_check(
    field: &[Complex64],
    domain: &Domain,
    epsilon: f64,
    sample_count: usize,
    seed: u64,
) -> Result<f64> {
    let grid = domain.grid();
    let moll = Mollifier::for_grid(grid, epsilon)?;
    let candidates = domain.interior(2.0 * epsilon);
    if candidates.is_empty() {
        return Err(Error::InvalidDomain(format!(
            "no grid points with d > 2 eps = {:.3e}",
            2.0 * epsilon
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..sample_count {
        let flat = candidates[rng.gen_range(0..candidates.len())];
        let (avg, local) = local_average(grid, field, &moll, flat);
        if local > 0.0 {
            worst = worst.max((avg - field[flat]).norm() / local);
        }
    }
    Ok(worst)
}

/// Fourth-order Laplacian of a field.
fn laplacian4(grid: &ComplexGrid, field: &[Complex64]) -> Vec<Complex64> {
    let mut acc = vec![Complex64::new(0.0, 0.0); field.len()];
    for axis in 0..grid.real_dim() {
        for (a, v) in acc.iter_mut().zip(second_partial(
            grid,
            field,
            axis,
            DerivativeScheme::CenteredFourth,
        )) {
            *a += v;
        }
    }
    acc
}

/// `sup_{d > margin} |Delta w| d^2 / sup_{d > margin} |w|` with the fourth-order
/// stencil; the margin is raised to `2h` so stencils stay inside the domain.
pub fn harmonic_residual(field: &[Complex64], domain: &Domain, margin: f64) -> Result<f64> {
    let grid = domain.grid();
    let margin = margin.max(2.0 * grid.h());
    let pts = domain.interior(margin);
    if pts.is_empty() {
        return Err(Error::InvalidDomain(format!(
            "no grid points with d > {margin:.3e}"
        )));
    }
    let lap = laplacian4(grid, field);
    let d = domain.d_field();
    let scale = pts.iter().map(|&i| field[i].norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let worst = pts
        .iter()
        .map(|&i| lap[i].norm() * d[i] * d[i])
        .fold(0.0, f64::max);
    Ok(worst / scale)
}

/// `d^m/dx_1^m` of the elementary solution at `x`, for `m <= 3`.
pub fn kernel_derivative_x1(n_complex: usize, m: u32, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let x1 = x[0];
    if n_complex == 1 {
        let c = 1.0 / (2.0 * std::f64::consts::PI);
        c * match m {
            0 => 0.5 * r2.ln(),
            1 => x1 / r2,
            2 => 1.0 / r2 - 2.0 * x1 * x1 / (r2 * r2),
            3 => -6.0 * x1 / (r2 * r2) + 8.0 * x1.powi(3) / r2.powi(3),
            _ => panic!("kernel derivative order {m} > 3"),
        }
    } else {
        // E = -C |x|^{-p}, p = 2n - 2.
        let p = (2 * n_complex - 2) as f64;
        let r = r2.sqrt();
        let c = -elementary_constant(n_complex);
        c * match m {
            0 => r.powf(-p),
            1 => -p * x1 * r.powf(-p - 2.0),
            2 => -p * r.powf(-p - 2.0) + p * (p + 2.0) * x1 * x1 * r.powf(-p - 4.0),
            3 => {
                3.0 * p * (p + 2.0) * x1 * r.powf(-p - 4.0)
                    - p * (p + 2.0) * (p + 4.0) * x1.powi(3) * r.powf(-p - 6.0)
            }
            _ => panic!("kernel derivative order {m} > 3"),
        }
    }
}

/// Test functions `S(d)^l * trig` vanishing to order `l-1` on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct VanishingFamily {
    pub order: u32,
    pub members: Vec<Vec<Complex64>>,
    /// Largest `sup_collar |D^b phi| / sup_Omega |D^b phi|` over members and `|b| < l`.
    pub collar_ratio: f64,
    /// Worst ratio of `collar_ratio` to its Taylor threshold.
    pub collar_margin: f64,
}

/// Highest supported vanishing order.
pub const MAX_VANISHING_ORDER: u32 = 6;

/// Taylor-scaled collar threshold `3 (8h / d_max)^{l - |b|}`: the collar `d < 2h`
/// against the linear range `d <= d_max/4` of the saturating profile.
pub fn collar_threshold(h: f64, d_max: f64, l: u32, b: u32) -> f64 {
    3.0 * (8.0 * h / d_max).powi((l - b) as i32)
}

/// Saturating profile: `S(t) = t` for `t <= d_max/4`, constant for `t >= d_max/2`, smooth.
struct Saturation {
    step: f64,
    values: Vec<f64>,
}

impl Saturation {
    fn new(d_max: f64) -> Self {
        let (t1, t2) = (0.25 * d_max, 0.5 * d_max);
        let steps = 100_000;
        let step = t2 / steps as f64;
        let slope = |t: f64| 1.0 - smooth_step((t - t1) / (t2 - t1));
        let mut values = vec![0.0; steps + 1];
        for i in 1..=steps {
            let (a, b) = ((i - 1) as f64 * step, i as f64 * step);
            values[i] =
                values[i - 1] + step / 6.0 * (slope(a) + 4.0 * slope(0.5 * (a + b)) + slope(b));
        }
        Self { step, values }
    }

    fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let u = t / self.step;
        let i = u.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let f = u - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}

/// Repeated fourth-order `D^alpha`.
pub(crate) fn fd_derivative(
    grid: &ComplexGrid,
    field: &[Complex64],
    alpha: &[u32],
) -> Vec<Complex64> {
    let mut out = field.to_vec();
    for (axis, &a) in alpha.iter().enumerate() {
        for _ in 0..a {
            out = partial(grid, &out, axis, DerivativeScheme::CenteredFourth);
        }
    }
    out
}

pub fn build_vanishing_family(
    domain: &Domain,
    l: u32,
    count: usize,
    seed: u64,
) -> Result<VanishingFamily> {
    if l > MAX_VANISHING_ORDER {
        return Err(Error::InvalidArgument(format!(
            "vanishing order {l} exceeds {MAX_VANISHING_ORDER}"
        )));
    }
    let grid = domain.grid();
    let h = grid.h();
    let d_max = domain.max_distance();
    if l > 0 && 2.0 * h / d_max > 0.25 {
        let need = (8.0 * grid.bbox()[0].len() / d_max).log2().ceil().exp2();
        return Err(Error::TooCoarse(format!(
            "collar 2h = {:.3e} is more than a quarter of max d = {d_max:.3e}; use resolution >= {need}",
            2.0 * h
        )));
    }
    let sat = Saturation::new(d_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = grid.real_dim();
    let mut members = Vec::with_capacity(count);
    for _ in 0..count {
        let terms: Vec<(Vec<f64>, f64, f64)> = (0..3)
            .map(|_| {
                let w = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
                (
                    w,
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(-0.5..0.5),
                )
            })
            .collect();
        let member: Vec<Complex64> = domain
            .d_field()
            .iter()
            .zip(domain.indicator())
            .enumerate()
            .map(|(i, (&d, &inside))| {
                if !inside {
                    return Complex64::new(0.0, 0.0);
                }
                let mut x = vec![0.0; m];
                grid.point(i, &mut x);
                let trig: f64 = 1.0
                    + terms
                        .iter()
                        .map(|(w, ph, a)| {
                            a * (w.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() + ph).cos()
                        })
                        .sum::<f64>();
                Complex64::new(sat.eval(d).powi(l as i32) * trig, 0.0)
            })
            .collect();
        members.push(member);
    }

    let collar: Vec<usize> = (0..grid.len())
        .filter(|&i| domain.indicator()[i] && domain.d_field()[i] < 2.0 * h)
        .collect();
    let inside: Vec<usize> = (0..grid.len()).filter(|&i| domain.indicator()[i]).collect();
    let (mut collar_ratio, mut collar_margin) = (0.0f64, 0.0f64);
    if l > 0 {
        for phi in &members {
            for alpha in multi_indices(m, l - 1) {
                let b: u32 = alpha.iter().sum();
                let d = fd_derivative(grid, phi, &alpha);
                let top = inside.iter().map(|&i| d[i].norm()).fold(0.0, f64::max);
                if top == 0.0 {
                    continue;
                }
                let edge = collar.iter().map(|&i| d[i].norm()).fold(0.0, f64::max);
                let ratio = edge / top;
                collar_ratio = collar_ratio.max(ratio);
                collar_margin = collar_margin.max(ratio / collar_threshold(h, d_max, l, b));
            }
        }
        if collar_margin > 1.0 {
            return Err(Error::TooCoarse(format!(
                "collar vanishing not certified: worst ratio to threshold {collar_margin:.3}"
            )));
        }
    }
    Ok(VanishingFamily {
        order: l,
        members,
        collar_ratio,
        collar_margin,
    })
}

/// Max over members and domain points of `|phi(z)| / (max(d, h/2)^l max_Omega sum_{|a|=l} |D^a phi|)`.
pub fn taylor_bound_check(family: &VanishingFamily, domain: &Domain, l: u32) -> Result<f64> {
    let grid = domain.grid();
    let m = grid.real_dim();
    let floor = 0.5 * grid.h();
    let inside: Vec<usize> = (0..grid.len()).filter(|&i| domain.indicator()[i]).collect();
    let top: Vec<Vec<u32>> = multi_indices(m, l)
        .into_iter()
        .filter(|a| a.iter().sum::<u32>() == l)
        .collect();
    let mut worst: f64 = 0.0;
    for phi in &family.members {
        let mut total = vec![0.0; grid.len()];
        for alpha in &top {
            let d = fd_derivative(grid, phi, alpha);
            for &i in &inside {
                total[i] += d[i].norm();
            }
        }
        let denom = inside.iter().map(|&i| total[i]).fold(0.0, f64::max);
        if denom == 0.0 {
            continue;
        }
        for &i in &inside {
            let dl = domain.d_field()[i].max(floor).powi(l as i32);
            worst = worst.max(phi[i].norm() / (dl * denom));
        }
    }
    Ok(worst)
}
