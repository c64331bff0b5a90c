//! Config-driven scenario runs: JSON scenario files, dotted overrides, the
//! input catalog, and report artifacts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::calculus::{cauchy_transform, dbar, OperatorConfig};
use crate::currents::{mollify, Current, FormIndex, Mollifier, SingularAtom};
use crate::error::{Error, Result};
use crate::extension::series_csv;
use crate::fields::{random_smooth_current, smooth_bump};
use crate::geometry::{distance_field, Shape};
use crate::grid::{ComplexGrid, GridSpec};
use crate::pipeline::{run_theorem1, Mode, PipelineConfig, PipelineReport};

/// Published schema for scenario files.
pub const SCENARIO_SCHEMA: &str = include_str!("../schema/scenario.schema.json");

const SHIPPED: [(&str, &str); 7] = [
    ("disc_k0_n1", include_str!("../scenarios/disc_k0_n1.json")),
    (
        "disc_zbar_n1",
        include_str!("../scenarios/disc_zbar_n1.json"),
    ),
    (
        "disc_modulus_n1",
        include_str!("../scenarios/disc_modulus_n1.json"),
    ),
    (
        "disc_random_n1",
        include_str!("../scenarios/disc_random_n1.json"),
    ),
    (
        "disc_boundary_pole_n1",
        include_str!("../scenarios/disc_boundary_pole_n1.json"),
    ),
    (
        "disc_dirac_n1",
        include_str!("../scenarios/disc_dirac_n1.json"),
    ),
    (
        "ball_minus_hyperplane_n2",
        include_str!("../scenarios/ball_minus_hyperplane_n2.json"),
    ),
];

/// Names and JSON text of the scenarios shipped with the crate.
pub fn shipped_scenarios() -> &'static [(&'static str, &'static str)] {
    &SHIPPED
}

pub fn shipped_scenario(name: &str) -> Option<&'static str> {
    SHIPPED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub grid: GridSpec,
    pub domain: Shape,
    pub input: InputSpec,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub items: Vec<InputItem>,
    /// Mollification scale for atoms and catalog functions, in cells.
    #[serde(default = "default_mollify_cells")]
    pub mollify_cells: f64,
}

fn default_mollify_cells() -> f64 {
    8.0
}

fn unit() -> [f64; 2] {
    [1.0, 0.0]
}

fn one() -> usize {
    1
}

fn default_radius() -> f64 {
    0.9
}

/// Catalog of input pieces; the input current is their sum, a `(0,1)` form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputItem {
    /// `c chi(z) (rho_eps * 1/(z - a)) dzbar` in C^1, `chi` a bump of radius `cutoff_radius` at 0.
    CauchyPole {
        pole: [f64; 2],
        #[serde(default = "unit")]
        coefficient: [f64; 2],
        #[serde(default = "default_radius")]
        cutoff_radius: f64,
    },
    /// `c D^alpha delta_x dzbar_j`, mollified.
    DiracDerivative {
        location: Vec<f64>,
        #[serde(default)]
        derivative: Vec<u32>,
        #[serde(default = "unit")]
        coefficient: [f64; 2],
        #[serde(default = "one")]
        component: usize,
    },
    /// `dbar(rho_eps * (c chi F))` with `chi` a bump and `F` from [`CatalogFunction`].
    DbarOfCatalogFunction {
        function: CatalogFunction,
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "unit")]
        coefficient: [f64; 2],
    },
    /// Random smooth bumps, seeded from the scenario seed plus the item position.
    /// In C^2 the bumps form a scalar `phi` and the item is `dbar phi`, so it is closed.
    RandomBump {
        bumps: usize,
        #[serde(default = "default_radius")]
        radius: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogFunction {
    One,
    Zbar,
    ModulusSquared,
    /// `zbar_1 / z_1`, set to 0 on `z_1 = 0`; C^2 only.
    ZbarOverZ1,
}

impl CatalogFunction {
    pub fn eval(self, x: &[f64]) -> Complex64 {
        match self {
            CatalogFunction::One => Complex64::new(1.0, 0.0),
            CatalogFunction::Zbar => Complex64::new(x[0], -x[1]),
            CatalogFunction::ModulusSquared => Complex64::new(x.iter().map(|v| v * v).sum(), 0.0),
            CatalogFunction::ZbarOverZ1 => {
                if x[0] == 0.0 && x[1] == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(x[0], -x[1]) / Complex64::new(x[0], x[1])
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Defaults to `out/<name>`.
    #[serde(default)]
    pub directory: Option<String>,
}

fn config_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Sets `path = value` in a JSON document, creating intermediate objects.
/// The value is parsed as JSON when possible and kept as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(assignment, "override must have the form key.path=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(config_err(path, "empty path segment"));
    }
    let mut node = doc;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| config_err(path, format!("`{key}` is not an array index")))?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    config_err(path, format!("index {idx} out of range (length {len})"))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(config_err(path, format!("`{key}` descends into a scalar"))),
        };
    }
    unreachable!("non-empty path always returns inside the loop")
}

impl ScenarioConfig {
    /// Parses and validates a scenario document after applying overrides.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: Value =
            serde_json::from_str(text).map_err(|e| config_err("", e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let config: ScenarioConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
            let path = e.path().to_string();
            config_err(path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a scenario from a file, or from the shipped catalog when `source`
    /// names a shipped scenario and no such file exists.
    pub fn load(source: &str, overrides: &[String]) -> Result<Self> {
        let path = Path::new(source);
        let text = if path.exists() {
            fs::read_to_string(path)?
        } else if let Some(t) = shipped_scenario(source) {
            t.to_string()
        } else {
            return Err(config_err(
                "",
                format!("no scenario file or shipped scenario named `{source}`"),
            ));
        };
        Self::from_json(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(config_err("name", "must be a non-empty plain file name"));
        }
        let n = self.grid.n;
        if !(1..=2).contains(&n) {
            return Err(config_err(
                "grid.n",
                format!("n_complex must be 1 or 2, got {n}"),
            ));
        }
        let r = self.grid.resolution;
        if r < 16 || !r.is_power_of_two() {
            return Err(config_err(
                "grid.resolution",
                format!("must be a power of two >= 16, got {r}"),
            ));
        }
        self.grid
            .build()
            .map_err(|e| config_err("grid", e.to_string()))?;
        if self.input.mollify_cells < crate::currents::MIN_EPSILON_CELLS {
            return Err(config_err(
                "input.mollify_cells",
                format!("must be >= {}", crate::currents::MIN_EPSILON_CELLS),
            ));
        }
        for (i, item) in self.input.items.iter().enumerate() {
            let at = |field: &str| format!("input.items[{i}].{field}");
            match item {
                InputItem::CauchyPole { cutoff_radius, .. } => {
                    if n != 1 {
                        return Err(config_err(at("kind"), "cauchy_pole is defined in C^1 only"));
                    }
                    if *cutoff_radius <= 0.0 {
                        return Err(config_err(at("cutoff_radius"), "must be positive"));
                    }
                }
                InputItem::DiracDerivative {
                    location,
                    derivative,
                    component,
                    ..
                } => {
                    if location.len() != 2 * n {
                        return Err(config_err(
                            at("location"),
                            format!("needs {} coordinates", 2 * n),
                        ));
                    }
                    if !derivative.is_empty() && derivative.len() != 2 * n {
                        return Err(config_err(
                            at("derivative"),
                            format!("needs {} entries", 2 * n),
                        ));
                    }
                    if *component == 0 || *component > n {
                        return Err(config_err(at("component"), format!("must be in 1..={n}")));
                    }
                }
                InputItem::DbarOfCatalogFunction {
                    function,
                    center,
                    radius,
                    ..
                } => {
                    if *function == CatalogFunction::ZbarOverZ1 && n != 2 {
                        return Err(config_err(
                            at("function"),
                            "zbar_over_z1 is defined in C^2 only",
                        ));
                    }
                    if !center.is_empty() && center.len() != 2 * n {
                        return Err(config_err(
                            at("center"),
                            format!("needs {} coordinates", 2 * n),
                        ));
                    }
                    if *radius <= 0.0 {
                        return Err(config_err(at("radius"), "must be positive"));
                    }
                }
                InputItem::RandomBump { bumps, radius } => {
                    if *bumps == 0 {
                        return Err(config_err(at("bumps"), "must be positive"));
                    }
                    if *radius <= 0.0 {
                        return Err(config_err(at("radius"), "must be positive"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        match &self.output.directory {
            Some(d) => PathBuf::from(d),
            None => Path::new("out").join(&self.name),
        }
    }
}

/// Assembles the input current of a scenario on `grid`.
pub fn build_input(config: &ScenarioConfig, grid: &ComplexGrid) -> Result<Current> {
    let n = grid.n_complex();
    let eps = config.input.mollify_cells * grid.h();
    let cfg = OperatorConfig {
        derivative_scheme: config.pipeline.derivative_scheme,
        ..OperatorConfig::default()
    };
    let origin = vec![0.0; 2 * n];
    let mut total = Current::zero(grid, 0, 1)?;
    for (i, item) in config.input.items.iter().enumerate() {
        let piece = match item {
            InputItem::CauchyPole {
                pole,
                coefficient,
                cutoff_radius,
            } => {
                let c = Complex64::new(coefficient[0], coefficient[1]);
                let rho: Vec<Complex64> = Mollifier::for_grid(grid, eps)?
                    .sample_at(grid, pole)
                    .into_iter()
                    .map(|v| Complex64::new(v, 0.0))
                    .collect();
                let kernel = cauchy_transform(&rho, grid)?;
                let mut x = vec![0.0; 2];
                let field = kernel
                    .into_iter()
                    .enumerate()
                    .map(|(flat, k)| {
                        grid.point(flat, &mut x);
                        k * std::f64::consts::PI * c * smooth_bump(&x, &origin, *cutoff_radius)
                    })
                    .collect();
                Current::form01(grid, vec![field])?
            }
            InputItem::DiracDerivative {
                location,
                derivative,
                coefficient,
                component,
            } => {
                let mut atom = SingularAtom::dirac(location.clone(), FormIndex::dzbar(*component));
                if !derivative.is_empty() {
                    atom.derivative = derivative.clone();
                }
                atom.coefficient = Complex64::new(coefficient[0], coefficient[1]);
                let mut c = Current::zero(grid, 0, 1)?;
                c.add_atom(atom)?;
                mollify(&c, eps)?
            }
            InputItem::DbarOfCatalogFunction {
                function,
                center,
                radius,
                coefficient,
            } => {
                let c = Complex64::new(coefficient[0], coefficient[1]);
                let center = if center.is_empty() { &origin } else { center };
                let phi = grid.sample(|x| c * function.eval(x) * smooth_bump(x, center, *radius));
                let phi = mollify(&Current::scalar(grid, phi)?, eps)?;
                dbar(&phi, &cfg)?
            }
            InputItem::RandomBump { bumps, radius } => {
                let seed = config.seed.wrapping_add(i as u64);
                if n == 1 {
                    random_smooth_current(grid, 0, 1, *radius, *bumps, seed)
                } else {
                    dbar(
                        &random_smooth_current(grid, 0, 0, *radius, *bumps, seed),
                        &cfg,
                    )?
                }
            }
        };
        let order = piece.declared_order().max(total.declared_order());
        total.axpy(Complex64::new(1.0, 0.0), &piece)?;
        total = total.with_order(order);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "text" => Ok(Self::Text),
            other => Err(Error::InvalidArgument(format!(
                "unknown report format `{other}` (json, csv, text)"
            ))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Json => "json",
            Self::Csv => "csv",
            Self::Text => "text",
        })
    }
}

/// Growth shells as CSV; a header only when the run has no growth fit.
pub fn growth_csv(report: &PipelineReport) -> String {
    match &report.g_growth {
        Some(g) => g.to_csv(),
        None => "log2_inv_d,log_sup\n".to_string(),
    }
}

pub fn cg_csv(report: &PipelineReport) -> String {
    let mut out = String::from("iteration,residual\n");
    for (it, r) in &report.solve.residual_history {
        out.push_str(&format!("{it},{r:.12e}\n"));
    }
    out
}

/// Writes one rendering of a report. The CSV rendering is the growth-shell table.
pub fn emit_report(report: &PipelineReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report.to_json()? + "\n",
        ReportFormat::Csv => growth_csv(report),
        ReportFormat::Text => report.summary(),
    };
    fs::write(path, text)?;
    Ok(())
}

/// Result of one scenario run.
#[derive(Debug)]
pub struct ScenarioOutcome {
    pub name: String,
    /// 0 when every stage passes, 1 on a stage or solver failure, 2 on a config error.
    pub exit_code: i32,
    pub report: Option<PipelineReport>,
    pub output_dir: Option<PathBuf>,
    pub message: String,
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config { .. }
            | Error::InvalidGrid(_)
            | Error::InvalidDomain(_)
            | Error::UnsupportedDimension(_)
    )
}

/// Runs a loaded scenario and writes its artifacts under `out_dir`.
pub fn run_config(config: &ScenarioConfig, out_dir: &Path) -> ScenarioOutcome {
    let fail = |code: i32, message: String| ScenarioOutcome {
        name: config.name.clone(),
        exit_code: code,
        report: None,
        output_dir: None,
        message,
    };
    let setup = (|| {
        let grid = config.grid.build()?;
        let domain = distance_field(&config.domain, &grid)?;
        Ok::<_, Error>((grid, domain))
    })();
    let (grid, domain) = match setup {
        Ok(v) => v,
        Err(e) => return fail(2, e.to_string()),
    };
    let run = build_input(config, &grid)
        .and_then(|f| run_theorem1(&f, &domain, config.mode, &config.pipeline));
    let report = match run {
        Ok((_, report)) => report,
        Err(e) => {
            let code = if is_config_error(&e) { 2 } else { 1 };
            if fs::create_dir_all(out_dir).is_ok() {
                let _ = fs::write(out_dir.join("error.txt"), format!("{e}\n"));
            }
            return fail(code, e.to_string());
        }
    };
    let written = (|| {
        fs::create_dir_all(out_dir)?;
        emit_report(&report, ReportFormat::Json, &out_dir.join("report.json"))?;
        emit_report(&report, ReportFormat::Text, &out_dir.join("summary.txt"))?;
        emit_report(
            &report,
            ReportFormat::Csv,
            &out_dir.join("growth_shells.csv"),
        )?;
        fs::write(
            out_dir.join("norm_series.csv"),
            series_csv(&report.extension.sobolev_minus_norm_series),
        )?;
        fs::write(out_dir.join("cg_convergence.csv"), cg_csv(&report))?;
        Ok::<_, Error>(())
    })();
    if let Err(e) = written {
        return fail(1, e.to_string());
    }
    let exit_code = if report.overall_pass { 0 } else { 1 };
    let message = match &report.failed_stage {
        Some(s) => format!("stage `{s}` failed"),
        None => "all stages passed".into(),
    };
    ScenarioOutcome {
        name: config.name.clone(),
        exit_code,
        report: Some(report),
        output_dir: Some(out_dir.to_path_buf()),
        message,
    }
}

/// Loads `source` (a path or a shipped scenario name), applies overrides and runs it.
/// `out_root`, when given, replaces the configured directory with `out_root/<name>`.
pub fn run_scenario(
    source: &str,
    overrides: &[String],
    out_root: Option<&Path>,
) -> ScenarioOutcome {
    let config = match ScenarioConfig::load(source, overrides) {
        Ok(c) => c,
        Err(e) => {
            let code = if is_config_error(&e) || matches!(e, Error::Json(_)) {
                2
            } else {
                1
            };
            return ScenarioOutcome {
                name: source.to_string(),
                exit_code: code,
                report: None,
                output_dir: None,
                message: e.to_string(),
            };
        }
    };
    let dir = match out_root {
        Some(root) => root.join(&config.name),
        None => config.output_dir(),
    };
    run_config(&config, &dir)
}
