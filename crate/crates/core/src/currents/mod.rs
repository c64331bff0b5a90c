//! Bidegree-(p,q) currents on a grid: coefficient fields plus singular
//! Dirac-derivative atoms.

mod container;
mod mollifier;
mod norms;

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, Interval};

pub use container::{grid_id, read_atom_json, read_current, write_atom_json, write_current, Dtype};
pub use mollifier::{mollify, Mollifier, MIN_EPSILON_CELLS};
pub use norms::{
    cutoff_field, multi_indices, order_pairing_bound, order_pairing_bound_with, order_seminorm,
    pairing, pairing_ratio, sobolev_norm, weighted_l2_norm, weighted_l2_norm_with, PairingReport,
    TrialSpec, WeightSpec,
};

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Strictly increasing multi-index pair `(I, J)` stored as bitmasks over
/// `1..=n`; bit `j-1` set means `dz_j` (resp. `dzbar_j`) occurs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FormIndex {
    pub dz: u8,
    pub dzbar: u8,
}

impl FormIndex {
    pub const SCALAR: FormIndex = FormIndex { dz: 0, dzbar: 0 };

    pub fn new(dz: &[usize], dzbar: &[usize]) -> Result<Self> {
        Ok(Self {
            dz: mask_of(dz)?,
            dzbar: mask_of(dzbar)?,
        })
    }

    /// `dzbar_j` alone (1-based `j`).
    pub fn dzbar(j: usize) -> Self {
        Self {
            dz: 0,
            dzbar: 1 << (j - 1),
        }
    }

    pub fn p(&self) -> usize {
        self.dz.count_ones() as usize
    }

    pub fn q(&self) -> usize {
        self.dzbar.count_ones() as usize
    }

    pub fn dz_list(&self) -> Vec<usize> {
        bits(self.dz)
    }

    pub fn dzbar_list(&self) -> Vec<usize> {
        bits(self.dzbar)
    }

    /// All strictly increasing pairs of bidegree `(p, q)` in dimension `n`.
    pub fn all(n: usize, p: usize, q: usize) -> Vec<FormIndex> {
        let masks = |k: usize| (0u8..(1 << n)).filter(move |m| m.count_ones() as usize == k);
        let mut out = Vec::new();
        for dz in masks(p) {
            for dzbar in masks(q) {
                out.push(FormIndex { dz, dzbar });
            }
        }
        out.sort();
        out
    }
}

impl fmt::Display for FormIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.dz_list().iter().map(|j| format!("dz{j}")).collect();
        parts.extend(self.dzbar_list().iter().map(|j| format!("dzbar{j}")));
        if parts.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", parts.join("^"))
        }
    }
}

fn mask_of(list: &[usize]) -> Result<u8> {
    let mut mask = 0u8;
    let mut prev = 0;
    for &j in list {
        if j == 0 || j > 2 || j <= prev {
            return Err(Error::InvalidCurrent(format!(
                "multi-index {list:?} is not strictly increasing within 1..=2"
            )));
        }
        mask |= 1 << (j - 1);
        prev = j;
    }
    Ok(mask)
}

fn bits(mask: u8) -> Vec<usize> {
    (0..8)
        .filter(|b| mask & (1 << b) != 0)
        .map(|b| b + 1)
        .collect()
}

/// Sign of moving `dzbar_j` in front of the sorted set `rest`:
/// `dzbar_j ^ dzbar_rest = sign * dzbar_{sorted(j, rest)}`.
pub fn insertion_sign(j: usize, rest: u8) -> f64 {
    let below = (rest & ((1u8 << (j - 1)) - 1)).count_ones();
    if below.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `c * D^alpha delta_{location}` placed in one form component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularAtom {
    pub location: Vec<f64>,
    /// Derivative orders over the 2n real coordinates `(x1, y1, x2, y2)`.
    pub derivative: Vec<u32>,
    pub coefficient: Complex64,
    pub component: FormIndex,
}

impl SingularAtom {
    pub fn dirac(location: Vec<f64>, component: FormIndex) -> Self {
        let m = location.len();
        Self {
            location,
            derivative: vec![0; m],
            coefficient: Complex64::new(1.0, 0.0),
            component,
        }
    }

    pub fn order(&self) -> u32 {
        self.derivative.iter().sum()
    }
}

/// A current of bidegree `(p, q)`: one complex field per strictly increasing
/// multi-index pair plus unresolved atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Current {
    grid: ComplexGrid,
    p: usize,
    q: usize,
    components: Vec<(FormIndex, Vec<Complex64>)>,
    atoms: Vec<SingularAtom>,
    declared_order: u32,
    support_bound: Vec<Interval>,
}

impl Current {
    pub fn zero(grid: &ComplexGrid, p: usize, q: usize) -> Result<Self> {
        let n = grid.n_complex();
        if p > n || q > n {
            return Err(Error::InvalidCurrent(format!(
                "bidegree ({p},{q}) exceeds n = {n}"
            )));
        }
        let components = FormIndex::all(n, p, q)
            .into_iter()
            .map(|idx| (idx, vec![ZERO; grid.len()]))
            .collect();
        Ok(Self {
            grid: grid.clone(),
            p,
            q,
            components,
            atoms: Vec::new(),
            declared_order: 0,
            support_bound: grid.bbox().to_vec(),
        })
    }

    /// A (0,0) current from a field.
    pub fn scalar(grid: &ComplexGrid, field: Vec<Complex64>) -> Result<Self> {
        let mut c = Self::zero(grid, 0, 0)?;
        c.set_component(FormIndex::SCALAR, field)?;
        Ok(c)
    }

    /// A (0,1) current `sum_j f_j dzbar_j`.
    pub fn form01(grid: &ComplexGrid, fields: Vec<Vec<Complex64>>) -> Result<Self> {
        let mut c = Self::zero(grid, 0, 1)?;
        if fields.len() != grid.n_complex() {
            return Err(Error::InvalidCurrent(format!(
                "expected {} coefficient fields, got {}",
                grid.n_complex(),
                fields.len()
            )));
        }
        for (j, f) in fields.into_iter().enumerate() {
            c.set_component(FormIndex::dzbar(j + 1), f)?;
        }
        Ok(c)
    }

    pub fn grid(&self) -> &ComplexGrid {
        &self.grid
    }

    pub fn bidegree(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn components(&self) -> &[(FormIndex, Vec<Complex64>)] {
        &self.components
    }

    pub fn components_mut(&mut self) -> impl Iterator<Item = (FormIndex, &mut Vec<Complex64>)> {
        self.components.iter_mut().map(|(i, f)| (*i, f))
    }

    pub fn component(&self, idx: FormIndex) -> Option<&[Complex64]> {
        self.components
            .iter()
            .find(|(i, _)| *i == idx)
            .map(|(_, f)| f.as_slice())
    }

    pub fn component_mut(&mut self, idx: FormIndex) -> Option<&mut Vec<Complex64>> {
        self.components
            .iter_mut()
            .find(|(i, _)| *i == idx)
            .map(|(_, f)| f)
    }

    pub fn set_component(&mut self, idx: FormIndex, field: Vec<Complex64>) -> Result<()> {
        if field.len() != self.grid.len() {
            return Err(Error::InvalidCurrent(format!(
                "field has {} samples, grid has {}",
                field.len(),
                self.grid.len()
            )));
        }
        let slot = self.component_mut(idx).ok_or_else(|| {
            Error::InvalidCurrent(format!("{idx} is not a component of this bidegree"))
        })?;
        *slot = field;
        Ok(())
    }

    pub fn atoms(&self) -> &[SingularAtom] {
        &self.atoms
    }

    pub fn has_atoms(&self) -> bool {
        !self.atoms.is_empty()
    }

    pub fn add_atom(&mut self, atom: SingularAtom) -> Result<()> {
        let m = self.grid.real_dim();
        if atom.location.len() != m || atom.derivative.len() != m {
            return Err(Error::InvalidCurrent(format!("atom must live in R^{m}")));
        }
        if self.component(atom.component).is_none() {
            return Err(Error::InvalidCurrent(format!(
                "atom component {} does not match bidegree ({},{})",
                atom.component, self.p, self.q
            )));
        }
        if self.grid.distance_to_faces(&atom.location)
            < crate::geometry::PADDING_CELLS * self.grid.h()
        {
            return Err(Error::InvalidCurrent(
                "atom lies within 8h of the bbox".into(),
            ));
        }
        self.declared_order = self.declared_order.max(atom.order());
        self.atoms.push(atom);
        Ok(())
    }

    pub(crate) fn take_atoms(&mut self) -> Vec<SingularAtom> {
        std::mem::take(&mut self.atoms)
    }

    pub fn declared_order(&self) -> u32 {
        self.declared_order
    }

    pub fn with_order(mut self, k: u32) -> Self {
        self.declared_order = self.declared_order.max(k);
        self
    }

    pub(crate) fn set_order(&mut self, k: u32) {
        self.declared_order = k;
    }

    pub fn support_bound(&self) -> &[Interval] {
        &self.support_bound
    }

    pub fn with_support_bound(mut self, bound: Vec<Interval>) -> Self {
        self.support_bound = bound;
        self
    }

    /// Same shape, all fields zero, no atoms.
    pub fn zeros_like(&self) -> Self {
        let mut c = self.clone();
        c.atoms.clear();
        for (_, f) in &mut c.components {
            f.iter_mut().for_each(|v| *v = ZERO);
        }
        c
    }

    fn check_compatible(&self, other: &Current) -> Result<()> {
        if self.grid != other.grid || (self.p, self.q) != (other.p, other.q) {
            return Err(Error::InvalidCurrent(
                "currents live on different grids or bidegrees".into(),
            ));
        }
        Ok(())
    }

    /// `self + a * other` on the smooth parts; atoms are concatenated with scaled coefficients.
    pub fn axpy(&mut self, a: Complex64, other: &Current) -> Result<()> {
        self.check_compatible(other)?;
        for ((_, f), (_, g)) in self.components.iter_mut().zip(&other.components) {
            for (x, y) in f.iter_mut().zip(g) {
                *x += a * y;
            }
        }
        for atom in &other.atoms {
            let mut at = atom.clone();
            at.coefficient *= a;
            self.atoms.push(at);
        }
        self.declared_order = self.declared_order.max(other.declared_order);
        Ok(())
    }

    pub fn sub(&self, other: &Current) -> Result<Current> {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other)?;
        Ok(out)
    }

    pub fn add(&self, other: &Current) -> Result<Current> {
        let mut out = self.clone();
        out.axpy(Complex64::new(1.0, 0.0), other)?;
        Ok(out)
    }

    pub fn scale(&mut self, a: Complex64) {
        for (_, f) in &mut self.components {
            f.iter_mut().for_each(|v| *v *= a);
        }
        for atom in &mut self.atoms {
            atom.coefficient *= a;
        }
    }

    /// Multiplies every coefficient by a real field.
    pub fn multiply_by(&mut self, w: &[f64]) {
        for (_, f) in &mut self.components {
            for (v, &s) in f.iter_mut().zip(w) {
                *v *= s;
            }
        }
    }

    /// Zero outside the mask.
    pub fn restrict(&mut self, mask: &[bool]) {
        for (_, f) in &mut self.components {
            for (v, &inside) in f.iter_mut().zip(mask) {
                if !inside {
                    *v = ZERO;
                }
            }
        }
    }

    /// Hermitian pairing `sum_{I,J} int f_{IJ} conj(g_{IJ})` of the smooth parts.
    pub fn inner(&self, other: &Current) -> Result<Complex64> {
        self.check_compatible(other)?;
        let vol = self.grid.cell_volume();
        let mut acc = ZERO;
        for ((_, f), (_, g)) in self.components.iter().zip(&other.components) {
            acc += f
                .iter()
                .zip(g)
                .map(|(a, b)| a * b.conj())
                .sum::<Complex64>();
        }
        Ok(acc * vol)
    }

    /// Plain L^2 norm of the smooth part over the whole grid.
    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_on(None)
    }

    /// L^2 norm restricted to the given flat indices.
    pub fn l2_norm_on(&self, indices: Option<&[usize]>) -> f64 {
        let mut acc = 0.0;
        for (_, f) in &self.components {
            acc += match indices {
                None => f.iter().map(|v| v.norm_sqr()).sum::<f64>(),
                Some(ix) => ix.iter().map(|&i| f[i].norm_sqr()).sum::<f64>(),
            };
        }
        (acc * self.grid.cell_volume()).sqrt()
    }

    /// Pointwise `(sum_{I,J} |f_{IJ}|^2)^{1/2}`.
    pub fn pointwise_norm(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (_, f) in &self.components {
            for (o, v) in out.iter_mut().zip(f) {
                *o += v.norm_sqr();
            }
        }
        out.iter_mut().for_each(|v| *v = v.sqrt());
        out
    }
}
