//! Domain shapes, exact distance-to-boundary fields and dyadic shells.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, GridSpec, Interval};

/// Minimum gap between a domain and the bbox faces, in grid cells.
pub const PADDING_CELLS: f64 = 8.0;

/// Shape descriptors. All primitives have closed-form distances.
///
/// Pseudoconvexity: every open set in C^1 is pseudoconvex; in C^2 the convex
/// primitives (ball, box) and the complement of a complex hyperplane in a
/// ball are, while general set differences are not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// Disc in C^1.
    Disc { center: [f64; 2], radius: f64 },
    /// Annulus `inner < |z - c| < outer` in C^1.
    Annulus {
        center: [f64; 2],
        inner: f64,
        outer: f64,
    },
    /// Axis-aligned box in R^{2n}.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Euclidean ball; `center` lists the 2n real coordinates.
    Ball { center: Vec<f64>, radius: f64 },
    /// Ball centered at 0 minus the complex hyperplane `sum_j a_j z_j + b = 0`.
    /// `coefficients` holds `[re, im]` of each `a_j`.
    BallMinusHyperplane {
        radius: f64,
        coefficients: Vec<[f64; 2]>,
        #[serde(default)]
        offset: [f64; 2],
    },
    /// Complex hyperplane; only meaningful as a removed set.
    Hyperplane {
        coefficients: Vec<[f64; 2]>,
        #[serde(default)]
        offset: [f64; 2],
    },
    /// `base` minus the closure of every shape in `removed`.
    SetDifference {
        base: Box<Shape>,
        removed: Vec<Shape>,
    },
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn hyperplane_distance(coefficients: &[[f64; 2]], offset: [f64; 2], x: &[f64]) -> f64 {
    let (mut re, mut im) = (offset[0], offset[1]);
    let mut a2 = 0.0;
    for (j, a) in coefficients.iter().enumerate() {
        let (zr, zi) = (x[2 * j], x[2 * j + 1]);
        re += a[0] * zr - a[1] * zi;
        im += a[0] * zi + a[1] * zr;
        a2 += a[0] * a[0] + a[1] * a[1];
    }
    (re * re + im * im).sqrt() / a2.sqrt()
}

impl Shape {
    /// Unit disc centered at the origin.
    pub fn unit_disc() -> Self {
        Shape::Disc {
            center: [0.0, 0.0],
            radius: 1.0,
        }
    }

    /// Ball of the given radius in C^2 minus `{z1 = 0}`.
    pub fn ball_minus_axis(radius: f64) -> Self {
        Shape::BallMinusHyperplane {
            radius,
            coefficients: vec![[1.0, 0.0], [0.0, 0.0]],
            offset: [0.0, 0.0],
        }
    }

    /// Signed distance: `d(x, boundary)` inside, minus the distance to the set outside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self {
            Shape::Disc { center, radius } => {
                radius - ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt()
            }
            Shape::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt();
                (r - inner).min(outer - r)
            }
            Shape::Box { lo, hi } => {
                let mut inside = f64::INFINITY;
                let mut outside2 = 0.0;
                for ((&l, &u), &xi) in lo.iter().zip(hi).zip(x) {
                    inside = inside.min((xi - l).min(u - xi));
                    let gap = (l - xi).max(xi - u).max(0.0);
                    outside2 += gap * gap;
                }
                if outside2 > 0.0 {
                    -outside2.sqrt()
                } else {
                    inside
                }
            }
            Shape::Ball { center, radius } => {
                let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
                radius - norm(&d)
            }
            Shape::BallMinusHyperplane {
                radius,
                coefficients,
                offset,
            } => {
                let ball = radius - norm(x);
                ball.min(hyperplane_distance(coefficients, *offset, x))
            }
            Shape::Hyperplane {
                coefficients,
                offset,
            } => -hyperplane_distance(coefficients, *offset, x),
            Shape::SetDifference { base, removed } => {
                removed.iter().fold(base.signed_distance(x), |acc, s| {
                    acc.min(-s.signed_distance(x))
                })
            }
        }
    }

    /// Distance to the boundary for points inside, 0 elsewhere.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.signed_distance(x).max(0.0)
    }

    /// Axis-aligned bounds of the shape in R^{2n}.
    pub fn bounds(&self, real_dim: usize) -> Result<Vec<Interval>> {
        Ok(match self {
            Shape::Disc { center, radius } => center
                .iter()
                .map(|c| Interval::new(c - radius, c + radius))
                .collect(),
            Shape::Annulus { center, outer, .. } => center
                .iter()
                .map(|c| Interval::new(c - outer, c + outer))
                .collect(),
            Shape::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(&l, &u)| Interval::new(l, u))
                .collect(),
            Shape::Ball { center, radius } => center
                .iter()
                .map(|c| Interval::new(c - radius, c + radius))
                .collect(),
            Shape::BallMinusHyperplane { radius, .. } => {
                vec![Interval::new(-radius, *radius); real_dim]
            }
            Shape::Hyperplane { .. } => {
                return Err(Error::InvalidDomain(
                    "a hyperplane is unbounded; use it inside a set difference".into(),
                ))
            }
            Shape::SetDifference { base, .. } => base.bounds(real_dim)?,
        })
    }

    /// Real dimension the descriptor is written for, if it fixes one.
    fn real_dim_hint(&self) -> Option<usize> {
        match self {
            Shape::Disc { .. } | Shape::Annulus { .. } => Some(2),
            Shape::Box { lo, .. } => Some(lo.len()),
            Shape::Ball { center, .. } => Some(center.len()),
            Shape::BallMinusHyperplane { coefficients, .. }
            | Shape::Hyperplane { coefficients, .. } => Some(2 * coefficients.len()),
            Shape::SetDifference { base, .. } => base.real_dim_hint(),
        }
    }

    pub fn diameter(&self, real_dim: usize) -> Result<f64> {
        Ok(match self {
            Shape::Disc { radius, .. } | Shape::Ball { radius, .. } => 2.0 * radius,
            Shape::BallMinusHyperplane { radius, .. } => 2.0 * radius,
            Shape::Annulus { outer, .. } => 2.0 * outer,
            _ => {
                let b = self.bounds(real_dim)?;
                b.iter().map(|iv| iv.len() * iv.len()).sum::<f64>().sqrt()
            }
        })
    }

    pub fn is_pseudoconvex(&self, n_complex: usize) -> bool {
        if n_complex == 1 {
            return true;
        }
        match self {
            Shape::Box { .. } | Shape::Ball { .. } | Shape::BallMinusHyperplane { .. } => true,
            Shape::SetDifference { base, removed } => {
                base.is_pseudoconvex(n_complex)
                    && removed
                        .iter()
                        .all(|s| matches!(s, Shape::Hyperplane { .. }))
            }
            _ => false,
        }
    }

    /// The same shape scaled by `s` about the origin.
    pub fn scaled(&self, s: f64) -> Shape {
        let sc = |v: &[f64]| v.iter().map(|x| x * s).collect::<Vec<f64>>();
        match self {
            Shape::Disc { center, radius } => Shape::Disc {
                center: [center[0] * s, center[1] * s],
                radius: radius * s,
            },
            Shape::Annulus {
                center,
                inner,
                outer,
            } => Shape::Annulus {
                center: [center[0] * s, center[1] * s],
                inner: inner * s,
                outer: outer * s,
            },
            Shape::Box { lo, hi } => Shape::Box {
                lo: sc(lo),
                hi: sc(hi),
            },
            Shape::Ball { center, radius } => Shape::Ball {
                center: sc(center),
                radius: radius * s,
            },
            Shape::BallMinusHyperplane {
                radius,
                coefficients,
                offset,
            } => Shape::BallMinusHyperplane {
                radius: radius * s,
                coefficients: coefficients.clone(),
                offset: [offset[0] * s, offset[1] * s],
            },
            Shape::Hyperplane {
                coefficients,
                offset,
            } => Shape::Hyperplane {
                coefficients: coefficients.clone(),
                offset: [offset[0] * s, offset[1] * s],
            },
            Shape::SetDifference { base, removed } => Shape::SetDifference {
                base: Box::new(base.scaled(s)),
                removed: removed.iter().map(|r| r.scaled(s)).collect(),
            },
        }
    }
}

/// A shape sampled on a grid.
#[derive(Debug, Clone)]
pub struct Domain {
    shape: Shape,
    grid: ComplexGrid,
    indicator: Vec<bool>,
    d_field: Vec<f64>,
    diam_bound: f64,
    pseudoconvex: bool,
}

/// Samples the exact distance field of `shape` on `grid`.
pub fn distance_field(shape: &Shape, grid: &ComplexGrid) -> Result<Domain> {
    let m = grid.real_dim();
    if let Some(dim) = shape.real_dim_hint() {
        if dim != m {
            return Err(Error::InvalidDomain(format!(
                "shape is {dim}-dimensional but the grid has real dimension {m}"
            )));
        }
    }
    let bounds = shape.bounds(m)?;
    let margin = PADDING_CELLS * grid.h();
    for (axis, (b, bb)) in bounds.iter().zip(grid.bbox()).enumerate() {
        if b.lo - bb.lo < margin - 1e-12 || bb.hi - b.hi < margin - 1e-12 {
            return Err(Error::InvalidDomain(format!(
                "shape reaches within {:.4} of the bbox on axis {axis}; at least {margin:.4} (8h) is required",
                (b.lo - bb.lo).min(bb.hi - b.hi)
            )));
        }
    }
    let d_field = grid.sample(|x| shape.distance(x));
    let indicator = d_field.iter().map(|&d| d > 0.0).collect();
    Ok(Domain {
        shape: shape.clone(),
        grid: grid.clone(),
        indicator,
        d_field,
        diam_bound: shape.diameter(m)?,
        pseudoconvex: shape.is_pseudoconvex(grid.n_complex()),
    })
}

/// Rescales the shape and grid together so that the diameter drops below 1.
///
/// Returns the scale factor `s` (lengths are multiplied by `s`).
pub fn normalize_domain(domain: &Domain) -> Result<(Domain, f64)> {
    if domain.point_count() == 0 {
        return Err(Error::InvalidDomain(
            "domain contains no grid points".into(),
        ));
    }
    if domain.diam_bound < 1.0 {
        return Ok((domain.clone(), 1.0));
    }
    let s = 0.98 / domain.diam_bound;
    let shape = domain.shape.scaled(s);
    let bbox: Vec<Interval> = domain
        .grid
        .bbox()
        .iter()
        .map(|b| Interval::new(b.lo * s, b.hi * s))
        .collect();
    let grid = ComplexGrid::new(domain.grid.n_complex(), &bbox, domain.grid.resolution())?;
    Ok((distance_field(&shape, &grid)?, s))
}

impl Domain {
    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn grid(&self) -> &ComplexGrid {
        &self.grid
    }

    pub fn indicator(&self) -> &[bool] {
        &self.indicator
    }

    pub fn d_field(&self) -> &[f64] {
        &self.d_field
    }

    pub fn diam_bound(&self) -> f64 {
        self.diam_bound
    }

    pub fn is_pseudoconvex(&self) -> bool {
        self.pseudoconvex
    }

    pub fn point_count(&self) -> usize {
        self.indicator.iter().filter(|&&b| b).count()
    }

    pub fn max_distance(&self) -> f64 {
        self.d_field.iter().cloned().fold(0.0, f64::max)
    }

    /// `max_{z in Omega} |z|^2` over grid points.
    pub fn max_modulus_sq(&self) -> f64 {
        let mut x = vec![0.0; self.grid.real_dim()];
        let mut best: f64 = 0.0;
        for (i, &inside) in self.indicator.iter().enumerate() {
            if inside {
                self.grid.point(i, &mut x);
                best = best.max(x.iter().map(|v| v * v).sum());
            }
        }
        best
    }

    /// Flat indices of the grid points with `d > margin`.
    pub fn interior(&self, margin: f64) -> Vec<usize> {
        self.d_field
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > margin)
            .map(|(i, _)| i)
            .collect()
    }
}

/// One dyadic shell `2^{-j} < d <= 2^{-j+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub j: i32,
    pub lower: f64,
    pub upper: f64,
    pub indices: Vec<usize>,
    pub measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellDecomposition {
    pub j_range: (i32, i32),
    pub shells: Vec<Shell>,
    /// Set when the requested depth was cut back to the grid resolution.
    pub truncation: Option<String>,
}

/// Shells must be at least this many cells thick unless a caller opts out.
pub const DEFAULT_SHELL_MIN_CELLS: f64 = 2.0;

/// First shell index whose upper edge reaches `d_max`.
pub fn first_shell(d_max: f64) -> i32 {
    (-d_max.log2()).floor() as i32 + 1
}

fn truncate_depth(j0: i32, j_max: i32, h: f64, min_cells: f64) -> (i32, Option<String>) {
    let mut j1 = j_max;
    while j1 >= j0 && 2f64.powi(-j1) < min_cells * h {
        j1 -= 1;
    }
    let note = (j1 < j_max).then(|| {
        let msg = format!(
            "shell depth truncated from j={j_max} to j={j1}: 2^-j must stay >= {min_cells}h = {:.3e}",
            min_cells * h
        );
        warn!("{msg}");
        msg
    });
    (j1, note)
}

/// Dyadic shells with the default thickness floor of 2h.
pub fn shell_partition(domain: &Domain, j_max: i32) -> Result<ShellDecomposition> {
    shell_partition_with(domain, j_max, DEFAULT_SHELL_MIN_CELLS)
}

/// Dyadic shells of `domain` down to `j_max`, never thinner than `min_cells * h`.
pub fn shell_partition_with(
    domain: &Domain,
    j_max: i32,
    min_cells: f64,
) -> Result<ShellDecomposition> {
    let d_max = domain.max_distance();
    if d_max <= 0.0 {
        return Err(Error::InvalidDomain(
            "domain contains no grid points".into(),
        ));
    }
    let j0 = first_shell(d_max);
    let (j1, truncation) = truncate_depth(j0, j_max, domain.grid.h(), min_cells);
    let vol = domain.grid.cell_volume();
    let mut shells: Vec<Shell> = (j0..=j1)
        .map(|j| Shell {
            j,
            lower: 2f64.powi(-j),
            upper: 2f64.powi(-j + 1),
            indices: Vec::new(),
            measure: 0.0,
        })
        .collect();
    for (i, &d) in domain.d_field.iter().enumerate() {
        if d <= 0.0 {
            continue;
        }
        let j = (-d.log2()).ceil() as i32;
        // Exact powers of two belong to the shell below them.
        let j = if 2f64.powi(-j) >= d { j + 1 } else { j };
        if j >= j0 && j <= j1 {
            let shell = &mut shells[(j - j0) as usize];
            shell.indices.push(i);
        }
    }
    for s in &mut shells {
        s.measure = s.indices.len() as f64 * vol;
    }
    Ok(ShellDecomposition {
        j_range: (j0, j1),
        shells,
        truncation,
    })
}

/// Per-shell supremum and measure of a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellSample {
    pub j: i32,
    /// Shell scale `2^{-j}`.
    pub scale: f64,
    pub sup: f64,
    pub measure: f64,
}

/// Streams over the grid points of `shape` without materializing the grid,
/// recording per-shell suprema of `f`. Used for fine 4-d grids.
pub fn stream_shell_suprema<F>(
    shape: &Shape,
    grid: &GridSpec,
    j_max: i32,
    min_cells: f64,
    mut f: F,
) -> Result<(Vec<ShellSample>, Option<String>)>
where
    F: FnMut(&[f64]) -> f64,
{
    let grid = grid.build()?;
    let m = grid.real_dim();
    let bounds = shape.bounds(m)?;
    let ranges: Vec<(usize, usize)> = bounds
        .iter()
        .enumerate()
        .map(|(axis, b)| {
            let lo = ((b.lo - grid.bbox()[axis].lo) / grid.h()).floor().max(0.0) as usize;
            let hi = (((b.hi - grid.bbox()[axis].lo) / grid.h()).ceil() as usize)
                .min(grid.resolution() - 1);
            (lo, hi)
        })
        .collect();
    // First pass over the shape's box: maximum distance.
    let mut d_max: f64 = 0.0;
    for_each_in_box(&grid, &ranges, |x| d_max = d_max.max(shape.distance(x)));
    if d_max <= 0.0 {
        return Err(Error::InvalidDomain(
            "domain contains no grid points".into(),
        ));
    }
    let j0 = first_shell(d_max);
    let (j1, truncation) = truncate_depth(j0, j_max, grid.h(), min_cells);
    let vol = grid.cell_volume();
    let mut out: Vec<ShellSample> = (j0..=j1)
        .map(|j| ShellSample {
            j,
            scale: 2f64.powi(-j),
            sup: 0.0,
            measure: 0.0,
        })
        .collect();
    for_each_in_box(&grid, &ranges, |x| {
        let d = shape.distance(x);
        if d <= 0.0 {
            return;
        }
        let j = (-d.log2()).ceil() as i32;
        let j = if 2f64.powi(-j) >= d { j + 1 } else { j };
        if j >= j0 && j <= j1 {
            let s = &mut out[(j - j0) as usize];
            s.sup = s.sup.max(f(x).abs());
            s.measure += vol;
        }
    });
    Ok((out, truncation))
}

fn for_each_in_box<F: FnMut(&[f64])>(grid: &ComplexGrid, ranges: &[(usize, usize)], mut f: F) {
    let m = ranges.len();
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    let mut x: Vec<f64> = (0..m).map(|a| grid.coordinate(a, idx[a])).collect();
    loop {
        f(&x);
        let mut axis = m;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            if idx[axis] < ranges[axis].1 {
                idx[axis] += 1;
                x[axis] = grid.coordinate(axis, idx[axis]);
                break;
            }
            idx[axis] = ranges[axis].0;
            x[axis] = grid.coordinate(axis, idx[axis]);
        }
    }
}
