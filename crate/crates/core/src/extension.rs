//! Extension of weighted-L² data past the boundary: zero extension, dual
//! Sobolev norm series of its mollified representatives, and pairing bounds
//! against test functions vanishing to a prescribed order on the boundary.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::currents::{multi_indices, sobolev_norm, weighted_l2_norm, Current, Mollifier};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::grid::{ComplexGrid, Interval};
use crate::growth::{build_vanishing_family, fd_derivative, VanishingFamily};

/// Mollification scales (in cells) of the default norm series, coarse to fine.
pub const SERIES_EPSILON_CELLS: [f64; 3] = [16.0, 8.0, 4.0];
/// Largest admissible ratio between successive series entries.
pub const SERIES_RATIO_LIMIT: f64 = 1.25;
/// Largest admissible growth of a pairing constant per refinement.
pub const STABILITY_LIMIT: f64 = 2.0;
/// Smallest boundary-layer mass exponent accepted as an integrable tail.
pub const L1_MIN_SLOPE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub resolution: usize,
    pub epsilon: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionReport {
    /// Weight exponent of the data.
    pub l: u32,
    /// Sobolev offset, strictly greater than `l`.
    pub r: f64,
    /// Index of the negative Sobolev norm used for the series.
    pub sobolev_index: f64,
    /// `I_l(w)^{1/2}`.
    pub i_l: f64,
    /// `max |<w, phi>| / ||phi||_{H^{r + m/2}}` over the family, when one was available.
    pub pairing_constant: Option<f64>,
    pub sobolev_minus_norm_series: Vec<SeriesPoint>,
    pub series_ratios: Vec<f64>,
    pub bounded: bool,
    pub notes: Vec<String>,
}

impl ExtensionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Norm series as `resolution,epsilon,norm` rows.
    pub fn series_csv(&self) -> String {
        series_csv(&self.sobolev_minus_norm_series)
    }
}

pub fn series_csv(series: &[SeriesPoint]) -> String {
    let mut out = String::from("resolution,epsilon,norm\n");
    for p in series {
        out.push_str(&format!(
            "{},{:.12e},{:.12e}\n",
            p.resolution, p.epsilon, p.norm
        ));
    }
    out
}

/// `w` on domain points, zero elsewhere.
pub fn extend_by_zero(w: &Current, domain: &Domain) -> Result<Current> {
    if w.grid() != domain.grid() {
        return Err(Error::InvalidCurrent(
            "current and domain live on different grids".into(),
        ));
    }
    if w.has_atoms() {
        return Err(Error::InvalidCurrent(
            "current has unresolved atoms; mollify first".into(),
        ));
    }
    let mut out = w.clone();
    out.restrict(domain.indicator());
    Ok(out)
}

/// The grid doubled about its center, same spacing.
fn doubled_grid(grid: &ComplexGrid) -> Result<ComplexGrid> {
    let bbox: Vec<Interval> = grid
        .bbox()
        .iter()
        .map(|b| Interval::new(b.lo - 0.5 * b.len(), b.hi + 0.5 * b.len()))
        .collect();
    ComplexGrid::new(grid.n_complex(), &bbox, 2 * grid.resolution())
}

/// `(sum_J ||rho_eps * w_J||^2_{H^index})^{1/2}`, evaluated on the doubled
/// grid so the periodic transform does not wrap the support onto itself.
pub fn mollified_sobolev_norm(w: &Current, epsilon: f64, index: f64) -> Result<f64> {
    let grid = w.grid();
    let big = doubled_grid(grid)?;
    let moll = Mollifier::for_grid(&big, epsilon)?;
    let shift = grid.resolution() / 2;
    let mut idx = vec![0usize; grid.real_dim()];
    let mut acc = 0.0;
    for (_, f) in w.components() {
        let mut field = vec![Complex64::new(0.0, 0.0); big.len()];
        for (flat, v) in f.iter().enumerate() {
            grid.unravel(flat, &mut idx);
            idx.iter_mut().for_each(|i| *i += shift);
            field[big.ravel(&idx)] = *v;
        }
        moll.convolve(&big, &mut field);
        acc += sobolev_norm(&field, index, &big)?.powi(2);
    }
    Ok(acc.sqrt())
}

/// Norm series at fixed grid over mollification scales `eps_cells * h`.
pub fn epsilon_series(w: &Current, index: f64, eps_cells: &[f64]) -> Result<Vec<SeriesPoint>> {
    let grid = w.grid();
    eps_cells
        .iter()
        .map(|&c| {
            let epsilon = c * grid.h();
            Ok(SeriesPoint {
                resolution: grid.resolution(),
                epsilon,
                norm: mollified_sobolev_norm(w, epsilon, index)?,
            })
        })
        .collect()
}

/// Successive ratios and whether each stays below [`SERIES_RATIO_LIMIT`]
/// over at least three entries. A zero series is bounded.
pub fn series_bounded(series: &[SeriesPoint]) -> (Vec<f64>, bool) {
    let ratios: Vec<f64> = series
        .windows(2)
        .map(|w| {
            if w[0].norm == 0.0 && w[1].norm == 0.0 {
                1.0
            } else {
                w[1].norm / w[0].norm
            }
        })
        .collect();
    let ok = series.len() >= 3 && ratios.iter().all(|&r| r < SERIES_RATIO_LIMIT);
    (ratios, ok)
}

/// True when no successive value grows by [`STABILITY_LIMIT`] or more.
pub fn refinement_stable(values: &[f64]) -> bool {
    values
        .windows(2)
        .all(|w| w[1] < STABILITY_LIMIT * w[0] || (w[0] == 0.0 && w[1] == 0.0))
}

/// Empirical Sobolev-dual pairing bound plus the zero-extension norm series
/// at index `-r - m/2`.
pub fn extension_pairing_bound(
    w: &Current,
    domain: &Domain,
    l: u32,
    r: f64,
    family: &VanishingFamily,
) -> Result<ExtensionReport> {
    if family.order < l {
        return Err(Error::Extension(format!(
            "family vanishes to order {} < l = {l}",
            family.order
        )));
    }
    let mut report = extension_series_report(w, domain, l, r, &SERIES_EPSILON_CELLS)?;
    let grid = domain.grid();
    let test_index = r + 0.5 * grid.real_dim() as f64;
    let wt = extend_by_zero(w, domain)?;
    let mut best: f64 = 0.0;
    for phi in &family.members {
        let den = sobolev_norm(phi, test_index, grid)?;
        if den == 0.0 {
            continue;
        }
        for (_, f) in wt.components() {
            best = best.max(bilinear(f, phi, grid.cell_volume()).norm() / den);
        }
    }
    report.pairing_constant = Some(best);
    Ok(report)
}

/// Report with `i_l` and the norm series only.
pub fn extension_series_report(
    w: &Current,
    domain: &Domain,
    l: u32,
    r: f64,
    eps_cells: &[f64],
) -> Result<ExtensionReport> {
    if r.is_nan() || r <= l as f64 {
        return Err(Error::InvalidArgument(format!(
            "Sobolev offset r = {r} must exceed l = {l}"
        )));
    }
    let wt = extend_by_zero(w, domain)?;
    let i_l = weighted_l2_norm(&wt, domain, l as f64)?;
    let index = -r - 0.5 * domain.grid().real_dim() as f64;
    let series = epsilon_series(&wt, index, eps_cells)?;
    let (series_ratios, bounded) = series_bounded(&series);
    let mut notes = Vec::new();
    if series.len() < 3 {
        notes.push(format!(
            "series has {} entries; a certificate needs 3",
            series.len()
        ));
    }
    Ok(ExtensionReport {
        l,
        r,
        sobolev_index: index,
        i_l,
        pairing_constant: None,
        sobolev_minus_norm_series: series,
        series_ratios,
        bounded,
        notes,
    })
}

fn bilinear(f: &[Complex64], phi: &[Complex64], dv: f64) -> Complex64 {
    f.iter().zip(phi).map(|(a, b)| a * b).sum::<Complex64>() * dv
}

/// Slope of `log M_i` against `log delta_i`, where `M_i` is the mass of
/// `d^l |w|` on the boundary annulus `{delta_i < d <= 2 delta_i}`,
/// `delta_i = 2h 2^i`. `None` when fewer than three annuli carry mass.
pub fn l1_boundary_slope(w: &Current, domain: &Domain, l: u32) -> Result<Option<f64>> {
    let grid = domain.grid();
    let h = grid.h();
    let d_max = domain.max_distance();
    let mut deltas = Vec::new();
    let mut delta = 2.0 * h;
    while 2.0 * delta <= 0.5 * d_max && deltas.len() < 5 {
        deltas.push(delta);
        delta *= 2.0;
    }
    let mut mass = vec![0.0; deltas.len()];
    let dfield = domain.d_field();
    for (i, &inside) in domain.indicator().iter().enumerate() {
        if !inside {
            continue;
        }
        let d = dfield[i];
        let Some(a) = deltas.iter().position(|&dl| d > dl && d <= 2.0 * dl) else {
            continue;
        };
        let amp: f64 = w
            .components()
            .iter()
            .map(|(_, f)| f[i].norm_sqr())
            .sum::<f64>()
            .sqrt();
        mass[a] += d.powi(l as i32) * amp;
    }
    let pts: Vec<(f64, f64)> = deltas
        .iter()
        .zip(&mass)
        .filter(|(_, &m)| m > 0.0)
        .map(|(&dl, &m)| (dl.ln(), m.ln()))
        .collect();
    if pts.len() < 3 || pts[0].0 != deltas[0].ln() {
        return Ok(None);
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |a, p| {
        (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2))
    });
    Ok(Some(num / den))
}

/// `max |<w~, phi>| / sup_Omega sum_{|a| <= l} |D^a phi|` over a vanishing
/// family of order `l`, after certifying `int d^l |w| < infinity`.
pub fn order_of_extension_check(
    w: &Current,
    domain: &Domain,
    l: u32,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if let Some(slope) = l1_boundary_slope(w, domain, l)? {
        if slope < L1_MIN_SLOPE {
            return Err(Error::Extension(format!(
                "d^{l} |w| is not integrable up to the boundary: annulus mass exponent {slope:.3}"
            )));
        }
    }
    let wt = extend_by_zero(w, domain)?;
    let family = build_vanishing_family(domain, l, trials, seed)?;
    let grid = domain.grid();
    let inside: Vec<usize> = (0..grid.len()).filter(|&i| domain.indicator()[i]).collect();
    let alphas = multi_indices(grid.real_dim(), l);
    let mut worst: f64 = 0.0;
    for phi in &family.members {
        let mut total = vec![0.0; grid.len()];
        for alpha in &alphas {
            let d = fd_derivative(grid, phi, alpha);
            for &i in &inside {
                total[i] += d[i].norm();
            }
        }
        let den = inside.iter().map(|&i| total[i]).fold(0.0, f64::max);
        if den == 0.0 {
            continue;
        }
        for (_, f) in wt.components() {
            worst = worst.max(bilinear(f, phi, grid.cell_volume()).norm() / den);
        }
    }
    Ok(worst)
}
