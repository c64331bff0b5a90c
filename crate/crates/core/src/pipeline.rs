//! End-to-end solve of `dbar w = f` on a pseudoconvex domain: free-space
//! pre-solve, harmonic remainder with growth certificate, minimum
//! weighted-norm solve, and extension certificate for the result.

use log::info;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calculus::{
    box_operator, commutation_check, dbar, field_laplacian, interior_indices, laplace_presolve,
    relative_residual, DerivativeScheme, OperatorConfig, Presolve,
};
use crate::currents::{mollify, Current, Mollifier};
use crate::error::{Error, Result};
use crate::extension::{extension_series_report, ExtensionReport, SERIES_EPSILON_CELLS};
use crate::geometry::{distance_field, normalize_domain, shell_partition_with, Domain};
use crate::growth::{growth_exponent, GrowthReport, DEFAULT_SLACK};
use crate::hormander::{closedness_residual, solve_weighted_dbar, SolveReport};

/// Regularity class of the input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    /// Input of distribution order at most `k`.
    Order { k: u32 },
    /// Input in `H^{-s}`.
    Sobolev { s: f64 },
}

/// Index ledger of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub mode: Mode,
    pub n_complex: usize,
    /// Input order `k`, or the integer with `s <= k < s + 1`.
    pub k: u32,
    /// Order bound of the pre-solve `v`.
    pub v_order: u32,
    /// Order bound of the remainder `g = f - dbar v`.
    pub g_order: u32,
    /// Growth exponent, used as the solver weight.
    pub growth_exponent: u32,
    /// Order bound of the solution (order mode).
    pub output_order: Option<u32>,
    /// Sobolev offset `r > k` (Sobolev mode).
    pub r: Option<u32>,
    /// Sobolev index `-r - 2n` of the solution (Sobolev mode).
    pub output_sobolev_index: Option<f64>,
}

/// Order mode: `k -> k + 2n + 1`. Sobolev mode: `s -> k` with `s <= k < s + 1`,
/// `r = k + 1`, output index `-r - 2n`.
pub fn sobolev_budget(mode: Mode, n_complex: usize) -> Result<Budget> {
    if !(1..=2).contains(&n_complex) {
        return Err(Error::UnsupportedDimension(n_complex));
    }
    let n = n_complex as u32;
    match mode {
        Mode::Order { k } => Ok(Budget {
            mode,
            n_complex,
            k,
            v_order: k,
            g_order: k + 1,
            growth_exponent: 2 * n + k + 1,
            output_order: Some(k + 2 * n + 1),
            r: None,
            output_sobolev_index: None,
        }),
        Mode::Sobolev { s } => {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "Sobolev index s = {s} must be finite and >= 0"
                )));
            }
            let k = s.ceil() as u32;
            let r = k + 1;
            Ok(Budget {
                mode,
                n_complex,
                k,
                v_order: k,
                g_order: k + 1,
                growth_exponent: k + n,
                output_order: None,
                r: Some(r),
                output_sobolev_index: Some(-(r as f64) - 2.0 * n as f64),
            })
        }
    }
}

/// `-Delta/4 (dbar v)` against `dbar (box v)` for the pre-solve output.
pub fn presolve_commutation_audit(v: &Current, cfg: &OperatorConfig) -> Result<f64> {
    commutation_check(v, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub presolve: f64,
    pub harmonic: f64,
    pub solver: f64,
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            presolve: 0.1,
            harmonic: 0.1,
            solver: 1e-6,
            residual: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tolerances: Tolerances,
    pub max_iterations: usize,
    /// Scale of the mollifier applied to atoms, in cells.
    pub mollify_cells: f64,
    /// Dilation of the bounding box used by the input cutoff, in cells.
    pub cutoff_cells: f64,
    /// Residual region `{d > margin_cells h}`.
    pub margin_cells: f64,
    pub growth_slack: f64,
    pub shell_min_cells: f64,
    pub shell_depth: i32,
    pub extension_eps_cells: Vec<f64>,
    pub derivative_scheme: DerivativeScheme,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            max_iterations: 20_000,
            mollify_cells: 8.0,
            cutoff_cells: 4.0,
            margin_cells: 2.0,
            growth_slack: DEFAULT_SLACK,
            shell_min_cells: 0.5,
            shell_depth: 30,
            extension_eps_cells: SERIES_EPSILON_CELLS.to_vec(),
            derivative_scheme: DerivativeScheme::CenteredFourth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCertificate {
    pub stage: String,
    pub pass: bool,
    /// Advisory stages are reported but do not gate the run.
    pub advisory: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub budget: Budget,
    /// Length scale applied to the domain before solving (1 when untouched).
    pub normalization: f64,
    pub presolve_residual: f64,
    pub commutation_residual: f64,
    pub g_harmonic_residual: f64,
    pub g_growth: Option<GrowthReport>,
    pub solve: SolveReport,
    pub extension: ExtensionReport,
    /// `||dbar (u + v) - f|| / ||f||` on `{d > margin}`.
    pub final_residual: f64,
    pub stages: Vec<StageCertificate>,
    pub failed_stage: Option<String>,
    pub overall_pass: bool,
}

impl PipelineReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text summary, one line per stage.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let b = &self.budget;
        out.push_str(&format!(
            "n = {}, mode = {:?}, weight exponent l = {}\n",
            b.n_complex, b.mode, b.growth_exponent
        ));
        for s in &self.stages {
            let tag = match (s.pass, s.advisory) {
                (true, _) => "PASS",
                (false, true) => "WARN",
                (false, false) => "FAIL",
            };
            out.push_str(&format!("{tag} {:<10} {}\n", s.stage, s.detail));
        }
        out.push_str(&format!("final residual {:.3e}\n", self.final_residual));
        out.push_str(&format!(
            "overall {}\n",
            if self.overall_pass { "PASS" } else { "FAIL" }
        ));
        out
    }
}

/// `||box v - dbar* f|| / ||dbar* f||` away from the bbox, with `box = -Delta/4`
/// applied by the configured scheme's direct Laplacian.
pub fn presolve_defect(presolve: &Presolve, cfg: &OperatorConfig) -> Result<f64> {
    let grid = presolve.v.grid();
    let mut boxed = presolve.v.zeros_like();
    for ((_, src), (_, dst)) in presolve.v.components().iter().zip(boxed.components_mut()) {
        *dst = field_laplacian(grid, src, cfg.derivative_scheme)
            .into_iter()
            .map(|x| -0.25 * x)
            .collect();
    }
    relative_residual(
        &boxed,
        &presolve.rhs,
        &interior_indices(grid, cfg.boundary_margin.max(1)),
    )
}

/// `||box g|| / ||box f||` on `{d > margin}` with `box` composed from the
/// configured first derivatives: how far the remainder is from harmonic,
/// measured against the data it came from.
pub fn remainder_harmonic_residual(
    g: &Current,
    f: &Current,
    domain: &Domain,
    margin: f64,
    cfg: &OperatorConfig,
) -> Result<f64> {
    let pts = domain.interior(margin.max(2.0 * domain.grid().h()));
    let num = box_operator(g, cfg)?.l2_norm_on(Some(&pts));
    let den = box_operator(f, cfg)?.l2_norm_on(Some(&pts));
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

/// Smooth cutoff equal to 1 on the shape's bounding box: the indicator of
/// the box dilated by `cells * h`, mollified at the same scale.
pub fn input_cutoff(domain: &Domain, cells: f64) -> Result<Vec<f64>> {
    let grid = domain.grid();
    let pad = cells * grid.h();
    let bounds = domain.shape().bounds(grid.real_dim())?;
    let mut field: Vec<Complex64> = grid.sample(|x| {
        let inside = bounds
            .iter()
            .zip(x)
            .all(|(b, &v)| v >= b.lo - pad && v <= b.hi + pad);
        Complex64::new(if inside { 1.0 } else { 0.0 }, 0.0)
    });
    Mollifier::for_grid(grid, pad)?.convolve(grid, &mut field);
    Ok(field.into_iter().map(|v| v.re).collect())
}

/// Carries a current's samples to a rescaled grid of the same resolution,
/// pulling back the form coefficients by `z -> z / s`.
fn rescale_current(f: &Current, grid: &crate::grid::ComplexGrid, s: f64) -> Result<Current> {
    let (p, q) = f.bidegree();
    let factor = s.powi(-((p + q) as i32));
    let mut out = Current::zero(grid, p, q)?.with_order(f.declared_order());
    for (idx, field) in f.components() {
        out.set_component(*idx, field.iter().map(|v| v * factor).collect())?;
    }
    Ok(out)
}

fn norm_on(c: &Current, idx: &[usize]) -> f64 {
    c.l2_norm_on(Some(idx))
}

/// Every field a run produces, on the (possibly normalized) working grid.
#[derive(Debug, Clone)]
pub struct PipelineSolution {
    /// `u + v`.
    pub w: Current,
    pub u: Current,
    pub v: Current,
    /// Remainder `f - dbar v` on the domain.
    pub g: Current,
    /// Input after mollification and cutoff.
    pub f: Current,
    pub domain: Domain,
}

/// Solves `dbar w = f` on the domain with `w = u + v` and a certificate per stage.
pub fn run_theorem1(
    f: &Current,
    domain: &Domain,
    mode: Mode,
    config: &PipelineConfig,
) -> Result<(Current, PipelineReport)> {
    let (sol, report) = run_theorem1_detailed(f, domain, mode, config)?;
    Ok((sol.w, report))
}

pub fn run_theorem1_detailed(
    f: &Current,
    domain: &Domain,
    mode: Mode,
    config: &PipelineConfig,
) -> Result<(PipelineSolution, PipelineReport)> {
    let n = domain.grid().n_complex();
    let budget = sobolev_budget(mode, n)?;
    if f.grid() != domain.grid() {
        return Err(Error::InvalidCurrent(
            "input and domain live on different grids".into(),
        ));
    }
    let (_, q1) = f.bidegree();
    if q1 == 0 {
        return Err(Error::InvalidArgument(
            "input must have dzbar degree >= 1".into(),
        ));
    }
    let tol = config.tolerances;

    let (domain, s) = if domain.max_distance() > 1.0 {
        normalize_domain(domain)?
    } else {
        (domain.clone(), 1.0)
    };
    let grid = domain.grid().clone();
    let h = grid.h();
    let mut f = if s == 1.0 {
        f.clone()
    } else {
        rescale_current(f, &grid, s)?
    };
    if f.has_atoms() {
        f = mollify(&f, config.mollify_cells * h)?;
    }
    f.multiply_by(&input_cutoff(&domain, config.cutoff_cells)?);

    let cfg = OperatorConfig {
        derivative_scheme: config.derivative_scheme,
        ..OperatorConfig::default()
    };
    let margin = config.margin_cells * h;
    if q1 < n {
        let closed = closedness_residual(&f, &domain, margin)?;
        if closed > 10.0 * tol.solver {
            return Err(Error::NotClosed {
                residual: closed,
                limit: 10.0 * tol.solver,
            });
        }
    }

    info!("pre-solve on {} points", grid.len());
    let presolve = laplace_presolve(&f, &cfg)?;
    let presolve_residual = presolve_defect(&presolve, &cfg)?;
    let v = presolve.v;
    let commutation_residual = presolve_commutation_audit(&v, &cfg)?;
    let mut g = f.sub(&dbar(&v, &cfg)?)?;
    g.restrict(domain.indicator());

    let l = budget.growth_exponent;
    let g_mag = g.pointwise_norm();
    let g_zero = g_mag.iter().all(|&x| x == 0.0);
    let g_harmonic_residual = remainder_harmonic_residual(&g, &f, &domain, margin, &cfg)?;
    let (g_growth, growth_note) = if g_zero {
        (None, "remainder vanishes".to_string())
    } else {
        let shells = shell_partition_with(&domain, config.shell_depth, config.shell_min_cells)?;
        match growth_exponent(&g_mag, &shells, l as f64, config.growth_slack) {
            Ok(r) => {
                let note = format!(
                    "fitted exponent {:.3} vs bound {l} + {} over {} shells",
                    r.fitted_exponent,
                    r.slack,
                    r.shells_used()
                );
                (Some(r), note)
            }
            Err(e) => (None, e.to_string()),
        }
    };

    info!("weighted solve with exponent {l}");
    let (u, solve) = solve_weighted_dbar(&g, &domain, l as f64, tol.solver, config.max_iterations)?;
    let r = l as f64 + n as f64 + 1.0;
    let extension = extension_series_report(&u, &domain, l, r, &config.extension_eps_cells)?;

    let w = u.add(&v)?;
    let interior = domain.interior(margin);
    let dw = dbar(&w, &cfg)?;
    let f_norm = norm_on(&f, &interior);
    let final_residual = if f_norm == 0.0 {
        norm_on(&dw, &interior)
    } else {
        norm_on(&dw.sub(&f)?, &interior) / f_norm
    };

    let growth_pass = g_zero || g_growth.as_ref().is_some_and(|r| r.pass);
    let stages = vec![
        StageCertificate {
            stage: "presolve".into(),
            pass: presolve_residual <= tol.presolve,
            advisory: false,
            detail: format!("residual {presolve_residual:.3e} (limit {:.1e}); commutation {commutation_residual:.3e}", tol.presolve),
        },
        StageCertificate {
            stage: "harmonic".into(),
            pass: g_harmonic_residual <= tol.harmonic && growth_pass,
            advisory: n == 1,
            detail: format!("harmonic residual {g_harmonic_residual:.3e} (limit {:.1e}); {growth_note}", tol.harmonic),
        },
        StageCertificate {
            stage: "solve".into(),
            pass: solve.converged && solve.weighted_ratio <= solve.c_omega * (1.0 + crate::hormander::ESTIMATE_ALLOWANCE),
            advisory: false,
            detail: format!(
                "{} iterations, residual {:.3e}, weighted ratio {:.4} vs C = {:.4}",
                solve.iterations, solve.residual, solve.weighted_ratio, solve.c_omega
            ),
        },
        StageCertificate {
            stage: "extension".into(),
            pass: extension.bounded && extension.i_l.is_finite(),
            advisory: false,
            detail: format!(
                "I_l^1/2 {:.3e}, H^{} series ratios {:?}",
                extension.i_l, extension.sobolev_index, extension.series_ratios
            ),
        },
        StageCertificate {
            stage: "residual".into(),
            pass: final_residual <= tol.residual,
            advisory: false,
            detail: format!("{final_residual:.3e} (limit {:.1e})", tol.residual),
        },
    ];
    let failed_stage = stages
        .iter()
        .find(|s| !s.pass && !s.advisory)
        .map(|s| s.stage.clone());
    let report = PipelineReport {
        budget,
        normalization: s,
        presolve_residual,
        commutation_residual,
        g_harmonic_residual,
        g_growth,
        solve,
        extension,
        final_residual,
        overall_pass: failed_stage.is_none(),
        failed_stage,
        stages,
    };
    Ok((
        PipelineSolution {
            w,
            u,
            v,
            g,
            f,
            domain,
        },
        report,
    ))
}

/// Re-samples the domain's shape on another resolution of its grid.
pub fn refine_domain(domain: &Domain, resolution: usize) -> Result<Domain> {
    distance_field(domain.shape(), &domain.grid().with_resolution(resolution)?)
}
