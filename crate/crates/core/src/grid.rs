//! Uniform sampling of a box in C^n identified with R^{2n}.
//!
//! Real coordinates are ordered `(x1, y1, x2, y2)`; fields are stored
//! row-major with axis 0 slowest. Grid points sit at `a_i + j h` for
//! `j = 0..resolution`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` along one real axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

/// Serialized form of a grid: `{"n": 1, "bbox": [[lo, hi], ...], "resolution": 256}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub bbox: Vec<[f64; 2]>,
    pub resolution: usize,
}

impl GridSpec {
    /// Cube `[lo, hi]^{2n}`.
    pub fn cube(n: usize, lo: f64, hi: f64, resolution: usize) -> Self {
        Self {
            n,
            bbox: vec![[lo, hi]; 2 * n],
            resolution,
        }
    }

    pub fn build(&self) -> Result<ComplexGrid> {
        let bbox: Vec<Interval> = self
            .bbox
            .iter()
            .map(|b| Interval::new(b[0], b[1]))
            .collect();
        ComplexGrid::new(self.n, &bbox, self.resolution)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    n_complex: usize,
    bbox: Vec<Interval>,
    resolution: usize,
    h: f64,
    /// Angular frequencies `2 pi k / (N h)` in FFT order, shared by all axes.
    freqs: Vec<f64>,
}

impl ComplexGrid {
    pub fn new(n_complex: usize, bbox: &[Interval], resolution: usize) -> Result<Self> {
        if n_complex != 1 && n_complex != 2 {
            return Err(Error::UnsupportedDimension(n_complex));
        }
        if bbox.len() != 2 * n_complex {
            return Err(Error::InvalidGrid(format!(
                "bbox has {} axes, expected {}",
                bbox.len(),
                2 * n_complex
            )));
        }
        if resolution < 16 || !resolution.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "resolution {resolution} must be a power of two >= 16"
            )));
        }
        let len = bbox[0].len();
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::InvalidGrid("empty bbox axis".into()));
        }
        for (i, iv) in bbox.iter().enumerate() {
            if (iv.len() - len).abs() > 1e-12 * len {
                return Err(Error::InvalidGrid(format!(
                    "non-square bbox: axis {i} has length {} but axis 0 has {len}",
                    iv.len()
                )));
            }
        }
        let h = len / resolution as f64;
        let freqs = fft_frequencies(resolution, h);
        Ok(Self {
            n_complex,
            bbox: bbox.to_vec(),
            resolution,
            h,
            freqs,
        })
    }

    /// Cube `[lo, hi]^{2n}`.
    pub fn cube(n_complex: usize, lo: f64, hi: f64, resolution: usize) -> Result<Self> {
        GridSpec::cube(n_complex, lo, hi, resolution).build()
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            n: self.n_complex,
            bbox: self.bbox.iter().map(|b| [b.lo, b.hi]).collect(),
            resolution: self.resolution,
        }
    }

    pub fn n_complex(&self) -> usize {
        self.n_complex
    }

    pub fn real_dim(&self) -> usize {
        2 * self.n_complex
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bbox(&self) -> &[Interval] {
        &self.bbox
    }

    /// Volume element `h^{2n}`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.real_dim() as i32)
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(self.real_dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.resolution; self.real_dim()]
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.freqs
    }

    /// Stride of `axis` in the flat layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.resolution.pow((self.real_dim() - 1 - axis) as u32)
    }

    /// Multi-index of a flat index.
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        let n = self.resolution;
        for slot in out.iter_mut().rev() {
            *slot = flat % n;
            flat /= n;
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.resolution + i)
    }

    /// Coordinates of the flat index `flat` written into `out` (length 2n).
    pub fn point(&self, flat: usize, out: &mut [f64]) {
        let n = self.resolution;
        let mut f = flat;
        for axis in (0..self.real_dim()).rev() {
            out[axis] = self.bbox[axis].lo + (f % n) as f64 * self.h;
            f /= n;
        }
    }

    pub fn coordinate(&self, axis: usize, index: usize) -> f64 {
        self.bbox[axis].lo + index as f64 * self.h
    }

    /// Nearest grid index along `axis`, if inside the box.
    pub fn nearest_index(&self, axis: usize, x: f64) -> Option<usize> {
        let t = ((x - self.bbox[axis].lo) / self.h).round();
        if t < 0.0 || t >= self.resolution as f64 {
            None
        } else {
            Some(t as usize)
        }
    }

    /// Samples a function of the real coordinates on every grid point.
    pub fn sample<T, F>(&self, mut f: F) -> Vec<T>
    where
        F: FnMut(&[f64]) -> T,
    {
        let mut x = vec![0.0; self.real_dim()];
        (0..self.len())
            .map(|i| {
                self.point(i, &mut x);
                f(&x)
            })
            .collect()
    }

    /// Same grid geometry at a different resolution.
    pub fn with_resolution(&self, resolution: usize) -> Result<Self> {
        Self::new(self.n_complex, &self.bbox, resolution)
    }

    /// Smallest distance from a point to the box faces.
    pub fn distance_to_faces(&self, x: &[f64]) -> f64 {
        self.bbox
            .iter()
            .zip(x)
            .map(|(iv, &xi)| (xi - iv.lo).min(iv.hi - xi))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Angular frequencies in FFT order; index `N/2` maps to `-pi/h`.
pub fn fft_frequencies(n: usize, h: f64) -> Vec<f64> {
    let scale = 2.0 * std::f64::consts::PI / (n as f64 * h);
    (0..n)
        .map(|j| {
            let k = if j < n / 2 {
                j as i64
            } else {
                j as i64 - n as i64
            };
            k as f64 * scale
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_counts() {
        let g = ComplexGrid::cube(1, -2.0, 2.0, 256).unwrap();
        assert_eq!(g.h(), 0.015625);
        let g2 = ComplexGrid::cube(2, -2.0, 2.0, 32).unwrap();
        assert_eq!(g2.len(), 1_048_576);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            ComplexGrid::cube(3, -1.0, 1.0, 16),
            Err(Error::UnsupportedDimension(3))
        ));
        assert!(ComplexGrid::cube(1, -1.0, 1.0, 100).is_err());
        assert!(ComplexGrid::cube(1, -1.0, 1.0, 8).is_err());
        let bbox = [Interval::new(-1.0, 1.0), Interval::new(-1.0, 2.0)];
        let err = ComplexGrid::new(1, &bbox, 32).unwrap_err();
        assert!(err.to_string().contains("non-square"));
    }

    #[test]
    fn ravel_roundtrip() {
        let g = ComplexGrid::cube(2, 0.0, 1.0, 16).unwrap();
        let mut idx = [0usize; 4];
        for flat in [0, 1, 17, 4095, 65535] {
            g.unravel(flat, &mut idx);
            assert_eq!(g.ravel(&idx), flat);
        }
        assert_eq!(g.stride(0), 4096);
        assert_eq!(g.stride(3), 1);
    }

    #[test]
    fn frequencies_layout() {
        let f = fft_frequencies(8, 0.5);
        let s = 2.0 * std::f64::consts::PI / 4.0;
        assert_eq!(f[1], s);
        assert_eq!(f[4], -4.0 * s);
        assert_eq!(f[7], -s);
    }
}
