//! Minimum weighted-norm solutions of dbar u = g on a domain.
//!
//! The constraint operator `A` is the fourth-order dbar restricted to grid
//! points with `d > 2h`, acting on unknowns supported on the domain. The
//! solution minimizes `sum |u|^2 W` with `W = max(d, h/2)^{2k}` and is
//! computed from the dual normal equations `(A W^-1 A^H) lambda = g` by
//! Jacobi-preconditioned conjugate gradients, `u = W^-1 A^H lambda`.

use log::debug;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calculus::{d_zbar, dbar, dbar_star, DerivativeScheme, OperatorConfig};
use crate::currents::Current;
use crate::error::{Error, Result};
use crate::geometry::Domain;

/// Row threshold in cells: constraints only where `d > ROW_CELLS * h`.
pub const ROW_CELLS: f64 = 2.0;

/// Allowance on the constant in the estimate.
pub const ESTIMATE_ALLOWANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// `||A u - g|| / ||g||` over the constraint rows.
    pub residual: f64,
    /// Same with the spectral dbar on rows with `d > 8h`; informational only,
    /// because `u` jumps across the boundary.
    pub spectral_residual: f64,
    pub weighted_ratio: f64,
    pub c_omega: f64,
    pub iterations: usize,
    pub converged: bool,
    pub closedness_residual: f64,
    pub k: f64,
    pub tol: f64,
    pub rows: usize,
    pub unknowns: usize,
    pub weight_floor: f64,
    /// Recurrence residual every [`HISTORY_STRIDE`] iterations, plus the last one.
    pub residual_history: Vec<(usize, f64)>,
}

pub const HISTORY_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateCheck {
    pub weighted_ratio: f64,
    pub c_omega: f64,
    pub pass: bool,
}

/// `C(Omega) = (1 + max |z|^2)^2 / 2`.
pub fn c_omega(domain: &Domain) -> f64 {
    0.5 * (1.0 + domain.max_modulus_sq()).powi(2)
}

fn fd4() -> OperatorConfig {
    OperatorConfig {
        derivative_scheme: DerivativeScheme::CenteredFourth,
        boundary_margin: 2,
    }
}

fn norm_on(current: &Current, mask: &[bool]) -> f64 {
    current
        .components()
        .iter()
        .map(|(_, f)| {
            f.iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(v, _)| v.norm_sqr())
                .sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

/// `||dbar g|| / ||(d g_J / dzbar_j)_{j,J}||` on `{d > max(margin, 2h)}` with the
/// solver's fourth-order stencil; `0` at top degree.
pub fn closedness_residual(g: &Current, domain: &Domain, margin: f64) -> Result<f64> {
    let grid = g.grid();
    let n = grid.n_complex();
    let (_, q) = g.bidegree();
    if q == n {
        return Ok(0.0);
    }
    let margin = margin.max(ROW_CELLS * grid.h());
    let mask: Vec<bool> = domain.d_field().iter().map(|&d| d > margin).collect();
    let dg = dbar(g, &fd4())?;
    let num = norm_on(&dg, &mask);
    let mut den = 0.0;
    for (_, f) in g.components() {
        for j in 1..=n {
            let d = d_zbar(grid, f, j, DerivativeScheme::CenteredFourth);
            den += d
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(v, _)| v.norm_sqr())
                .sum::<f64>();
        }
    }
    let den = den.sqrt();
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

struct System {
    rows: Vec<bool>,
    winv: Vec<f64>,
    precond: Vec<(crate::currents::FormIndex, Vec<f64>)>,
    template_u: Current,
    cfg: OperatorConfig,
}

impl System {
    fn new(g: &Current, domain: &Domain, k: f64) -> Result<Self> {
        let grid = g.grid();
        let h = grid.h();
        let floor = 0.5 * h;
        let rows: Vec<bool> = domain
            .d_field()
            .iter()
            .map(|&d| d > ROW_CELLS * h)
            .collect();
        let winv: Vec<f64> = domain
            .d_field()
            .iter()
            .zip(domain.indicator())
            .map(|(&d, &inside)| {
                if inside {
                    d.max(floor).powf(-2.0 * k)
                } else {
                    0.0
                }
            })
            .collect();
        let (p, q) = g.bidegree();
        let template_u = Current::zero(grid, p, q - 1)?;

        // diag(A W^-1 A^H): each dzbar_j stencil contributes sum_s |c_s|^2 / W over its points.
        let c1 = 8.0 / (12.0 * h);
        let c2 = 1.0 / (12.0 * h);
        let taps = [(1i64, c1), (-1, c1), (2, c2), (-2, c2)];
        let n = grid.resolution() as i64;
        let m = grid.real_dim();
        let mut idx = vec![0usize; m];
        let mut precond = Vec::new();
        for (target, _) in g.components() {
            let js: Vec<usize> = target.dzbar_list();
            let mut diag = vec![0.0; grid.len()];
            for (flat, dv) in diag.iter_mut().enumerate() {
                if !rows[flat] {
                    continue;
                }
                grid.unravel(flat, &mut idx);
                let mut acc = 0.0;
                for &j in &js {
                    for axis in [2 * (j - 1), 2 * (j - 1) + 1] {
                        for &(s, c) in &taps {
                            let mut nb = idx.clone();
                            nb[axis] = (idx[axis] as i64 + s).rem_euclid(n) as usize;
                            acc += 0.25 * c * c * winv[grid.ravel(&nb)];
                        }
                    }
                }
                *dv = if acc > 0.0 { 1.0 / acc } else { 0.0 };
            }
            precond.push((*target, diag));
        }
        Ok(Self {
            rows,
            winv,
            precond,
            template_u,
            cfg: fd4(),
        })
    }

    /// `u = W^-1 A^H lambda`.
    fn primal(&self, lambda: &Current) -> Result<Current> {
        let mut u = dbar_star(lambda, &self.cfg)?;
        u.multiply_by(&self.winv);
        Ok(u)
    }

    fn apply_a(&self, u: &Current) -> Result<Current> {
        let mut r = dbar(u, &self.cfg)?;
        r.restrict(&self.rows);
        Ok(r)
    }

    fn apply_dual(&self, lambda: &Current) -> Result<Current> {
        self.apply_a(&self.primal(lambda)?)
    }

    fn precondition(&self, r: &Current) -> Current {
        let mut z = r.clone();
        for ((_, f), (_, d)) in z.components_mut().zip(&self.precond) {
            for (v, s) in f.iter_mut().zip(d) {
                *v *= s;
            }
        }
        z
    }
}

fn dot(a: &Current, b: &Current) -> Complex64 {
    a.components()
        .iter()
        .zip(b.components())
        .map(|((_, x), (_, y))| {
            x.iter()
                .zip(y)
                .map(|(p, q)| p.conj() * q)
                .sum::<Complex64>()
        })
        .sum()
}

/// Minimum weighted-norm solution of `dbar u = g` on the domain.
pub fn solve_weighted_dbar(
    g: &Current,
    domain: &Domain,
    k: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Current, SolveReport)> {
    let grid = g.grid();
    if grid != domain.grid() {
        return Err(Error::InvalidCurrent(
            "data and domain live on different grids".into(),
        ));
    }
    if g.has_atoms() {
        return Err(Error::InvalidCurrent(
            "data has unresolved atoms; mollify first".into(),
        ));
    }
    let (_, q1) = g.bidegree();
    if q1 == 0 {
        return Err(Error::InvalidArgument(
            "data must have dzbar degree >= 1".into(),
        ));
    }
    let closed = closedness_residual(g, domain, 0.0)?;
    if closed > 10.0 * tol {
        return Err(Error::NotClosed {
            residual: closed,
            limit: 10.0 * tol,
        });
    }
    let sys = System::new(g, domain, k)?;
    let mut rhs = g.clone();
    rhs.restrict(&sys.rows);
    let g_norm = rhs.l2_norm();
    let c = c_omega(domain);
    let mut report = SolveReport {
        residual: 0.0,
        spectral_residual: 0.0,
        weighted_ratio: 0.0,
        c_omega: c,
        iterations: 0,
        converged: true,
        closedness_residual: closed,
        k,
        tol,
        rows: sys.rows.iter().filter(|&&r| r).count(),
        unknowns: domain.point_count(),
        weight_floor: 0.5 * grid.h(),
        residual_history: Vec::new(),
    };
    if g_norm == 0.0 {
        return Ok((sys.template_u.clone(), report));
    }

    let mut lambda = rhs.zeros_like();
    let mut r = rhs.clone();
    let mut z = sys.precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z).re;
    let mut iterations = 0;
    let mut converged = false;
    let mut history = vec![(0, 1.0)];
    while iterations < max_iter {
        let ap = sys.apply_dual(&p)?;
        let pap = dot(&p, &ap).re;
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        lambda.axpy(Complex64::new(alpha, 0.0), &p)?;
        r.axpy(Complex64::new(-alpha, 0.0), &ap)?;
        iterations += 1;
        let rel = r.l2_norm() / g_norm;
        if iterations % HISTORY_STRIDE == 0 {
            history.push((iterations, rel));
        }
        if iterations % 500 == 0 {
            debug!("cg iteration {iterations}: residual {rel:.3e}");
        }
        if rel <= tol {
            // Confirm against the true residual; restart from it if the recurrence drifted.
            let true_r = rhs.sub(&sys.apply_dual(&lambda)?)?;
            if true_r.l2_norm() / g_norm <= tol {
                converged = true;
                break;
            }
            r = true_r;
            z = sys.precondition(&r);
            p = z.clone();
            rz = dot(&r, &z).re;
            continue;
        }
        z = sys.precondition(&r);
        let rz_new = dot(&r, &z).re;
        let beta = rz_new / rz;
        rz = rz_new;
        let mut next = z.clone();
        next.axpy(Complex64::new(beta, 0.0), &p)?;
        p = next;
    }

    let u = sys.primal(&lambda)?.with_order(g.declared_order());
    let au = sys.apply_a(&u)?;
    report.residual = au.sub(&rhs)?.l2_norm() / g_norm;
    report.iterations = iterations;
    if history.last().map(|h| h.0) != Some(iterations) {
        history.push((iterations, report.residual));
    }
    report.residual_history = history;
    report.converged = converged && report.residual <= tol * (1.0 + 1e-9);
    report.spectral_residual = spectral_residual(&u, g, domain)?;
    report.weighted_ratio = verify_estimate(&u, g, domain, k)?.weighted_ratio;
    Ok((u, report))
}

fn spectral_residual(u: &Current, g: &Current, domain: &Domain) -> Result<f64> {
    let mask: Vec<bool> = domain
        .d_field()
        .iter()
        .map(|&d| d > 8.0 * domain.grid().h())
        .collect();
    let du = dbar(u, &OperatorConfig::default())?;
    let num = norm_on(&du.sub(g)?, &mask);
    let den = norm_on(g, &mask);
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

/// `int_Omega |u|^2 d^{2k} / int_Omega |g|^2 d^{2k}` against `C(Omega) (1 + 10%)`.
pub fn verify_estimate(u: &Current, g: &Current, domain: &Domain, k: f64) -> Result<EstimateCheck> {
    let nu = crate::currents::weighted_l2_norm(u, domain, k)?;
    let ng = crate::currents::weighted_l2_norm(g, domain, k)?;
    let c = c_omega(domain);
    let weighted_ratio = if ng == 0.0 {
        if nu == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (nu / ng).powi(2)
    };
    Ok(EstimateCheck {
        weighted_ratio,
        c_omega: c,
        pass: weighted_ratio <= c * (1.0 + ESTIMATE_ALLOWANCE),
    })
}

/// Zero-extension of a field outside the domain.
pub fn restrict_to_domain(current: &Current, domain: &Domain) -> Current {
    let mut out = current.clone();
    out.restrict(domain.indicator());
    out
}
