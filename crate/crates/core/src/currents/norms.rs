use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Current, ZERO};
use crate::calculus::spectral_partial;
use crate::error::{Error, Result};
use crate::fft::{fft_nd, Direction};
use crate::geometry::Domain;
use crate::grid::ComplexGrid;

/// The weight `max(d, d_floor)^{2k}` sampled on a domain's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub exponent: f64,
    pub d_floor: f64,
    pub weight_field: Vec<f64>,
}

impl WeightSpec {
    /// Default clamp `d_floor = h/2`.
    pub fn new(domain: &Domain, exponent: f64) -> Result<Self> {
        Self::with_floor(domain, exponent, 0.5 * domain.grid().h())
    }

    pub fn with_floor(domain: &Domain, exponent: f64, d_floor: f64) -> Result<Self> {
        if !exponent.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "weight exponent {exponent}"
            )));
        }
        if exponent < 0.0 && d_floor <= 0.0 {
            return Err(Error::DivergentWeight(format!(
                "exponent {exponent} < 0 without a positive distance floor"
            )));
        }
        let weight_field = domain
            .d_field()
            .iter()
            .zip(domain.indicator())
            .map(|(&d, &inside)| {
                if inside {
                    d.max(d_floor).powf(2.0 * exponent)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            exponent,
            d_floor,
            weight_field,
        })
    }
}

fn require_resolved(current: &Current) -> Result<()> {
    if current.has_atoms() {
        return Err(Error::InvalidCurrent(
            "current has unresolved atoms; mollify first".into(),
        ));
    }
    Ok(())
}

/// `(sum_{I,J} sum_{z in Omega} |f_{IJ}|^2 max(d, h/2)^{2k} h^{2n})^{1/2}`.
pub fn weighted_l2_norm(current: &Current, domain: &Domain, k: f64) -> Result<f64> {
    let weight = WeightSpec::new(domain, k)?;
    weighted_l2_norm_with(current, domain, &weight)
}

pub fn weighted_l2_norm_with(
    current: &Current,
    domain: &Domain,
    weight: &WeightSpec,
) -> Result<f64> {
    require_resolved(current)?;
    if current.grid() != domain.grid() {
        return Err(Error::InvalidCurrent(
            "current and domain live on different grids".into(),
        ));
    }
    let mut acc = 0.0;
    for (_, f) in current.components() {
        acc += f
            .iter()
            .zip(&weight.weight_field)
            .map(|(v, w)| v.norm_sqr() * w)
            .sum::<f64>();
    }
    Ok((acc * current.grid().cell_volume()).sqrt())
}

/// `||phi||_{H^s}` with the unitary transform convention, so `s = 0` is the plain L^2 norm.
pub fn sobolev_norm(field: &[Complex64], s: f64, grid: &ComplexGrid) -> Result<f64> {
    if field.len() != grid.len() {
        return Err(Error::InvalidGrid(format!(
            "field has {} samples, grid has {}",
            field.len(),
            grid.len()
        )));
    }
    let side = grid.resolution();
    let dims = grid.real_dim();
    let mut spec = field.to_vec();
    fft_nd(&mut spec, side, dims, Direction::Forward);
    let freqs = grid.frequencies();
    let mut idx = vec![0usize; dims];
    let mut acc = 0.0;
    for (flat, v) in spec.iter().enumerate() {
        grid.unravel(flat, &mut idx);
        let xi2: f64 = idx.iter().map(|&k| freqs[k] * freqs[k]).sum();
        acc += (1.0 + xi2).powf(s) * v.norm_sqr();
    }
    // sum |phi_hat|^2 (d xi)^m = h^m / N^m * sum |DFT|^2
    let scale = grid.cell_volume() / grid.len() as f64;
    Ok((acc * scale).sqrt())
}

/// Bilinear pairing `<T, phi>`: smooth part integrated against `phi` in every
/// component; atoms evaluate `c (-1)^{|alpha|} D^alpha phi` at the nearest grid point.
pub fn pairing(current: &Current, phi: &[Complex64]) -> Result<Complex64> {
    let grid = current.grid();
    if phi.len() != grid.len() {
        return Err(Error::InvalidCurrent(
            "test function has the wrong length".into(),
        ));
    }
    let mut acc = ZERO;
    for (_, f) in current.components() {
        acc += f.iter().zip(phi).map(|(a, b)| a * b).sum::<Complex64>() * grid.cell_volume();
    }
    for atom in current.atoms() {
        let mut d = phi.to_vec();
        if atom.order() > 0 {
            spectral_partial(grid, &mut d, &atom.derivative);
        }
        let flat = nearest_flat(grid, &atom.location)?;
        let sign = if atom.order() % 2 == 0 { 1.0 } else { -1.0 };
        acc += atom.coefficient * sign * d[flat];
    }
    Ok(acc)
}

fn nearest_flat(grid: &ComplexGrid, x: &[f64]) -> Result<usize> {
    let idx: Option<Vec<usize>> = x
        .iter()
        .enumerate()
        .map(|(a, &v)| grid.nearest_index(a, v))
        .collect();
    let idx = idx.ok_or_else(|| Error::InvalidCurrent(format!("point {x:?} outside bbox")))?;
    Ok(grid.ravel(&idx))
}

/// All real multi-indices over `m` coordinates with total order `<= k`.
pub fn multi_indices(m: usize, k: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..m {
        let mut next = Vec::new();
        for prefix in &out {
            let used: u32 = prefix.iter().sum();
            for a in 0..=(k - used) {
                let mut p = prefix.clone();
                p.push(a);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// `sup_z sum_{|alpha| <= k} |D^alpha phi(z)|`, derivatives taken spectrally.
pub fn order_seminorm(grid: &ComplexGrid, phi: &[Complex64], k: u32) -> f64 {
    let mut total = vec![0.0; grid.len()];
    for alpha in multi_indices(grid.real_dim(), k) {
        let mut d = phi.to_vec();
        if alpha.iter().any(|&a| a > 0) {
            spectral_partial(grid, &mut d, &alpha);
        }
        for (t, v) in total.iter_mut().zip(&d) {
            *t += v.norm();
        }
    }
    total.into_iter().fold(0.0, f64::max)
}

/// `|<T, phi>| / sup sum_{|alpha| <= k} |D^alpha phi|`.
pub fn pairing_ratio(current: &Current, phi: &[Complex64], k: u32) -> Result<f64> {
    let num = pairing(current, phi)?.norm();
    let den = order_seminorm(current.grid(), phi, k);
    if den == 0.0 {
        return Err(Error::InvalidArgument(
            "test function vanishes identically".into(),
        ));
    }
    Ok(num / den)
}

/// Random trial family: `cutoff * sum_t a_t exp(i <omega_t, x>)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    /// Largest physical frequency component `|omega_t|_inf`.
    pub max_frequency: f64,
    pub terms: usize,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            max_frequency: 6.0,
            terms: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub k: u32,
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
}

/// Smooth tensor bump supported in the domain's bounding box.
pub fn cutoff_field(domain: &Domain) -> Result<Vec<f64>> {
    let grid = domain.grid();
    let bounds = domain.shape().bounds(grid.real_dim())?;
    Ok(grid.sample(|x| {
        bounds
            .iter()
            .zip(x)
            .map(|(b, &v)| {
                let c = 0.5 * (b.lo + b.hi);
                let r = 0.5 * (b.hi - b.lo);
                let t = (v - c) / r;
                if t.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - t * t)).exp()
                }
            })
            .product()
    }))
}

pub fn order_pairing_bound(
    current: &Current,
    domain: &Domain,
    k: u32,
    trial_count: usize,
    seed: u64,
) -> Result<PairingReport> {
    order_pairing_bound_with(current, domain, k, trial_count, seed, TrialSpec::default())
}

pub fn order_pairing_bound_with(
    current: &Current,
    domain: &Domain,
    k: u32,
    trial_count: usize,
    seed: u64,
    spec: TrialSpec,
) -> Result<PairingReport> {
    let grid = domain.grid();
    let limit = PI / (4.0 * grid.h());
    if spec.max_frequency > limit {
        return Err(Error::InvalidArgument(format!(
            "trial frequency {} exceeds the resolved band {limit:.3}",
            spec.max_frequency
        )));
    }
    let cutoff = cutoff_field(domain)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = grid.real_dim();
    let mut ratios = Vec::with_capacity(trial_count);
    for _ in 0..trial_count {
        let terms: Vec<(Vec<f64>, Complex64)> = (0..spec.terms.max(1))
            .map(|_| {
                let omega = (0..m)
                    .map(|_| rng.gen_range(-spec.max_frequency..=spec.max_frequency))
                    .collect();
                let a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                (omega, a)
            })
            .collect();
        let phi: Vec<Complex64> = grid
            .sample(|x| {
                terms
                    .iter()
                    .map(|(w, a)| {
                        let phase: f64 = w.iter().zip(x).map(|(p, q)| p * q).sum();
                        a * Complex64::from_polar(1.0, phase)
                    })
                    .sum::<Complex64>()
            })
            .into_iter()
            .zip(&cutoff)
            .map(|(v, c)| v * c)
            .collect();
        ratios.push(pairing_ratio(current, &phi, k)?);
    }
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(PairingReport {
        k,
        max_ratio,
        ratios,
    })
}
