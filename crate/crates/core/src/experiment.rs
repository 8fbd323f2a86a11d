//! Declarative experiments: a TOML config names one experiment and the
//! blocks it needs; running it writes JSON and CSV artifacts.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bounds::{self, FitConfig};
use crate::error::{Error, Result};
use crate::grid::{self, Grid, GridSpec, ScalarField};
use crate::io;
use crate::kato::{self, ClassifyConfig, RealizedPotential};
use crate::kernels::{self, FreeKernel, KernelConfig};
use crate::nse::{self, FlowFamily, QSeries};
use crate::positivity::{self, SpectralConfig, Window};
use crate::potentials::{self, PotentialSpec, TruncationLadder};
use crate::solver::{self, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Solve,
    Kernel,
    Bounds,
    Kato,
    Positivity,
    Nse,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Kernel => "kernel",
            Self::Bounds => "bounds",
            Self::Kato => "kato",
            Self::Positivity => "positivity",
            Self::Nse => "nse",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeBlock {
    #[serde(flatten)]
    pub solver: SolverConfig,
    #[serde(alias = "T")]
    pub horizon: f64,
}

/// Either `start` and `levels` (octaves) or explicit `upper` and optional `lower` lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderBlock {
    pub start: Option<f64>,
    pub levels: Option<usize>,
    pub upper: Option<Vec<f64>>,
    pub lower: Option<Vec<f64>>,
}

impl LadderBlock {
    pub fn build(&self) -> Result<TruncationLadder> {
        match (self.start, self.levels, &self.upper) {
            (Some(s), Some(n), None) => TruncationLadder::octaves(s, n),
            (None, None, Some(up)) => {
                let lower = self.lower.clone().unwrap_or_else(|| up.clone());
                TruncationLadder::new(up.clone(), lower)
            }
            _ => Err(Error::Config("ladder needs either start and levels, or an upper list".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `exp(−|x − center|²/width²)`.
    Gaussian {
        width: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    Ones,
    Delta { source: Vec<f64> },
}

impl Default for InitialData {
    fn default() -> Self {
        Self::Gaussian { width: 1.0, center: None }
    }
}

impl InitialData {
    pub fn sample(&self, grid: &Grid) -> Result<ScalarField> {
        match self {
            Self::Gaussian { width, center } => {
                if !(*width > 0.0) {
                    return Err(Error::Config(format!("gaussian width {width} must be positive")));
                }
                let c = center.clone().unwrap_or_else(|| vec![0.0; grid.dim()]);
                if c.len() != grid.dim() {
                    return Err(Error::Dimension { expected: grid.dim(), found: c.len() });
                }
                let w2 = width * width;
                Ok(grid.sample(|p| {
                    let r2: f64 = c.iter().enumerate().map(|(a, ca)| (p[a] - ca).powi(2)).sum();
                    (-r2 / w2).exp()
                }))
            }
            Self::Ones => Ok(ScalarField::constant(*grid, 1.0)),
            Self::Delta { source } => grid::discrete_delta(grid, source),
        }
    }
}

fn default_floor() -> f64 {
    1e3
}
fn default_cauchy() -> f64 {
    0.02
}
fn default_growth() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    pub source: Vec<f64>,
    #[serde(default)]
    pub source_time: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default = "default_cauchy")]
    pub cauchy_tol: f64,
    #[serde(default = "default_growth")]
    pub divergence_growth: f64,
    /// Fail with a numerical error unless the ladder converged.
    #[serde(default)]
    pub require_converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitSides {
    Upper,
    Lower,
    #[default]
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct BoundsBlock {
    #[serde(default)]
    pub sides: FitSides,
    #[serde(flatten)]
    pub fit: FitConfig,
}

fn default_slope() -> f64 {
    0.1
}
fn default_lp() -> f64 {
    0.05
}
fn probability() -> FreeKernel {
    FreeKernel::Probability
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KatoBlock {
    /// Points per axis of each refinement level, coarse to fine.
    pub refinements: Vec<usize>,
    #[serde(default = "probability")]
    pub kernel: FreeKernel,
    #[serde(default = "default_slope")]
    pub epsilon_slope: f64,
    #[serde(default = "default_lp")]
    pub lp_tolerance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PositivityMode {
    #[default]
    FormBounded,
    HardyScan,
    GroundState,
    EnergyLadder,
}

fn default_slack() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityBlock {
    #[serde(default)]
    pub mode: PositivityMode,
    /// Points per axis of the spectral refinement levels.
    pub refinements: Vec<usize>,
    #[serde(flatten)]
    pub spectral: SpectralConfig,
    /// Couplings `a` of `a/|x|²` for the Hardy scan.
    #[serde(default)]
    pub couplings: Vec<f64>,
    /// Comparison window for the log round trip.
    #[serde(default)]
    pub window: Option<Window>,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NseBlock {
    pub flow: FlowFamily,
    /// Points per axis of each periodic refinement level.
    pub refinements: Vec<usize>,
    /// Classify the time-frozen `Q` on `{|w| ≥ 1}` over the time block.
    #[serde(default)]
    pub classify: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

fn default_prefix() -> String {
    "heatlab".into()
}
fn default_formats() -> Vec<Format> {
    vec![Format::Json]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_prefix")]
    pub prefix: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { prefix: default_prefix(), formats: default_formats() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub grid: Option<GridSpec>,
    pub time: Option<TimeBlock>,
    pub potential: Option<PotentialSpec>,
    pub ladder: Option<LadderBlock>,
    pub initial: Option<InitialData>,
    pub kernel: Option<KernelBlock>,
    pub bounds: Option<BoundsBlock>,
    pub kato: Option<KatoBlock>,
    pub positivity: Option<PositivityBlock>,
    pub nse: Option<NseBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

/// One catalog line per experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CatalogEntry {
    pub experiment: ExperimentKind,
    pub label: &'static str,
    pub summary: &'static str,
    pub required: &'static [&'static str],
}

pub fn catalog() -> Vec<CatalogEntry> {
    use ExperimentKind::*;
    vec![
        CatalogEntry {
            experiment: Solve,
            label: "Eq 1.1",
            summary: "Cauchy problem du/dt = Lap u + V u from initial data",
            required: &["grid", "time", "potential"],
        },
        CatalogEntry {
            experiment: Kernel,
            label: "Def 2.2",
            summary: "fundamental solution as the limit along a truncation ladder",
            required: &["grid", "time", "potential", "ladder", "kernel"],
        },
        CatalogEntry {
            experiment: Bounds,
            label: "Thm 2.2",
            summary: "Gaussian upper and lower envelopes fitted to a converged kernel",
            required: &["grid", "time", "potential", "ladder", "kernel"],
        },
        CatalogEntry {
            experiment: Kato,
            label: "Def 3.1",
            summary: "heat-bounded / almost-heat-bounded classification by refinement",
            required: &["grid", "time", "potential", "kato"],
        },
        CatalogEntry {
            experiment: Positivity,
            label: "Thm 2.1",
            summary: "form-boundedness spectral test, Hardy scan, ground-state log, energy ladder",
            required: &["grid", "potential", "positivity"],
        },
        CatalogEntry {
            experiment: Nse,
            label: "Thm 4.1",
            summary: "vortex-stretching quantity Q in both forms on synthetic flows",
            required: &["nse"],
        },
    ]
}

fn block<'a, T>(b: &'a Option<T>, name: &str, kind: ExperimentKind) -> Result<&'a T> {
    b.as_ref()
        .ok_or_else(|| Error::Config(format!("experiment '{}' requires a [{name}] block", kind.name())))
}

fn positive(value: f64, what: &str) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be positive, got {value}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Required blocks present and numeric fields in range.
    pub fn validate(&self) -> Result<()> {
        let kind = self.experiment;
        let entry = catalog().into_iter().find(|e| e.experiment == kind).expect("every kind is cataloged");
        for name in entry.required {
            let present = match *name {
                "grid" => self.grid.is_some(),
                "time" => self.time.is_some(),
                "potential" => self.potential.is_some(),
                "ladder" => self.ladder.is_some(),
                "kernel" => self.kernel.is_some(),
                "kato" => self.kato.is_some(),
                "positivity" => self.positivity.is_some(),
                "nse" => self.nse.is_some(),
                _ => true,
            };
            if !present {
                return Err(Error::Config(format!("experiment '{}' requires a [{name}] block", kind.name())));
            }
        }
        if let Some(g) = &self.grid {
            Grid::from_spec(g)?;
        }
        if let Some(t) = &self.time {
            t.solver.validate()?;
            positive(t.horizon, "time.horizon")?;
        }
        if let Some(l) = &self.ladder {
            l.build()?;
        }
        if let Some(k) = &self.kernel {
            positive(k.floor, "kernel.floor")?;
            positive(k.cauchy_tol, "kernel.cauchy_tol")?;
            positive(k.divergence_growth, "kernel.divergence_growth")?;
        }
        if let Some(b) = &self.bounds {
            positive(b.fit.kappa, "bounds.kappa")?;
            if b.fit.b_grid.is_empty() || b.fit.b_grid.iter().any(|b| !(*b > 0.0)) {
                return Err(Error::Config("bounds.b_grid must be a nonempty list of positive values".into()));
            }
        }
        for (name, levels) in [
            ("kato", self.kato.as_ref().map(|k| &k.refinements)),
            ("positivity", self.positivity.as_ref().map(|p| &p.refinements)),
            ("nse", self.nse.as_ref().map(|n| &n.refinements)),
        ] {
            if let Some(levels) = levels {
                if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config(format!("{name}.refinements must be strictly increasing")));
                }
            }
        }
        if let Some(k) = &self.kato {
            if k.refinements.len() < 3 {
                return Err(Error::Config("kato.refinements needs at least 3 levels".into()));
            }
            positive(k.epsilon_slope, "kato.epsilon_slope")?;
            positive(k.lp_tolerance, "kato.lp_tolerance")?;
        }
        if let Some(p) = &self.positivity {
            if p.mode == PositivityMode::HardyScan && p.couplings.is_empty() {
                return Err(Error::Config("hardy_scan needs a nonempty couplings list".into()));
            }
            if p.mode == PositivityMode::EnergyLadder && (self.time.is_none() || self.ladder.is_none() || p.window.is_none()) {
                return Err(Error::Config("energy_ladder needs [time], [ladder] and positivity.window".into()));
            }
        }
        if kind == ExperimentKind::Nse && self.nse.as_ref().is_some_and(|n| n.classify) && self.time.is_none() {
            return Err(Error::Config("nse classification needs a [time] block".into()));
        }
        if self.output.formats.is_empty() {
            return Err(Error::Config("output.formats must not be empty".into()));
        }
        Ok(())
    }

    fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

/// Paths of the artifacts written by a run.
#[derive(Clone, Debug, Default)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
}

struct Sink<'a> {
    dir: &'a Path,
    prefix: &'a str,
    files: Vec<PathBuf>,
}

impl Sink<'_> {
    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}", self.prefix))
    }

    fn csv<F>(&mut self, suffix: &str, write: F) -> Result<()>
    where
        F: FnOnce(BufWriter<File>) -> Result<()>,
    {
        let path = self.path(suffix);
        write(BufWriter::new(File::create(&path)?))?;
        self.files.push(path);
        Ok(())
    }

    fn json(&mut self, cfg: &ExperimentConfig, result: serde_json::Value) -> Result<()> {
        let path = self.path("report.json");
        let doc = json!({ "experiment": cfg.experiment, "config": cfg, "result": result });
        std::fs::write(&path, io::to_json(&doc)?)?;
        self.files.push(path);
        Ok(())
    }
}

/// Map a failure to the documented process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::HypothesisNotMet(_) => 4,
        Error::NonFinite(_)
        | Error::LinearSolve { .. }
        | Error::EigenSolve { .. }
        | Error::Monotonicity { .. }
        | Error::Divergence(_)
        | Error::NotConverged { .. }
        | Error::NonPositive { .. }
        | Error::EnergyBound { .. }
        | Error::EmptyMask(_) => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn grids_like(base: &Grid, points: &[usize]) -> Result<Vec<Grid>> {
    points.iter().map(|&n| base.with_points(n)).collect()
}

fn kernel_config(time: &TimeBlock, k: &KernelBlock) -> KernelConfig {
    KernelConfig {
        solver: time.solver,
        horizon: time.horizon,
        floor: k.floor,
        cauchy_tol: k.cauchy_tol,
        divergence_growth: k.divergence_growth,
    }
}

/// Run `cfg`, writing artifacts into `dir`.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<Artifacts> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let mut sink = Sink { dir, prefix: &cfg.output.prefix, files: Vec::new() };
    let kind = cfg.experiment;
    let csv = cfg.wants(Format::Csv);
    let result = match kind {
        ExperimentKind::Solve => {
            let grid = Grid::from_spec(block(&cfg.grid, "grid", kind)?)?;
            let time = block(&cfg.time, "time", kind)?;
            let spec = block(&cfg.potential, "potential", kind)?;
            let u0 = cfg.initial.clone().unwrap_or_default().sample(&grid)?;
            let v = potentials::realize(spec, &grid, time.solver.dt, time.horizon)?;
            let sol = solver::solve_cauchy(&u0, &v, &time.solver, time.horizon)?;
            if csv {
                sink.csv("solution.csv", |w| io::write_space_time_csv(w, &sol.field, "u"))?;
            }
            json!({
                "slices": sol.field.len(),
                "min_value": sol.min_value(),
                "max_value": sol.field.max_abs(),
                "linear_iterations": sol.linear_iterations,
                "norms": sol.diagnostics,
                "duhamel_residual": solver::duhamel_residual(&sol),
            })
        }
        ExperimentKind::Kernel | ExperimentKind::Bounds => {
            let grid = Grid::from_spec(block(&cfg.grid, "grid", kind)?)?;
            let time = block(&cfg.time, "time", kind)?;
            let spec = block(&cfg.potential, "potential", kind)?;
            let ladder = block(&cfg.ladder, "ladder", kind)?.build()?;
            let k = block(&cfg.kernel, "kernel", kind)?;
            let kcfg = kernel_config(time, k);
            let est = kernels::estimate_kernel(spec, &k.source, k.source_time, &ladder, &grid, &kcfg)?;
            if kind == ExperimentKind::Bounds || k.require_converged {
                est.require_converged()?;
            }
            if csv {
                sink.csv("kernel.csv", |w| io::write_kernel_csv(w, &est))?;
            }
            let summary = json!({
                "source": est.source,
                "source_time": est.source_time,
                "ladder": ladder.upper(),
                "gaps": est.gaps,
                "cauchy_gap": est.cauchy_gap,
                "converged": est.converged,
                "diagonal_peaks": est.diagonal_peaks,
                "top_growth": est.top_growth,
                "diverging": est.diverging,
                "t_min": est.t_min,
            });
            if kind == ExperimentKind::Kernel {
                summary
            } else {
                let b = cfg.bounds.clone().unwrap_or_default();
                let upper = match b.sides {
                    FitSides::Upper | FitSides::Both => Some(bounds::fit_gaussian_upper(&est, &b.fit)?),
                    FitSides::Lower => None,
                };
                let lower = match b.sides {
                    FitSides::Lower | FitSides::Both => Some(bounds::fit_gaussian_lower(&est, &b.fit)?),
                    FitSides::Upper => None,
                };
                json!({ "kernel": summary, "upper": upper, "lower": lower })
            }
        }
        ExperimentKind::Kato => {
            let base = Grid::from_spec(block(&cfg.grid, "grid", kind)?)?;
            let time = block(&cfg.time, "time", kind)?;
            let spec = block(&cfg.potential, "potential", kind)?;
            let k = block(&cfg.kato, "kato", kind)?;
            let grids = grids_like(&base, &k.refinements)?;
            let ccfg = ClassifyConfig {
                horizon: time.horizon,
                kernel: k.kernel,
                epsilon_slope: k.epsilon_slope,
                lp_tolerance: k.lp_tolerance,
            };
            let input = RealizedPotential { spec: spec.clone(), dt: time.solver.dt, horizon: time.horizon };
            let c = kato::classify(&input, &grids, &ccfg)?;
            if csv {
                sink.csv("refinement.csv", |w| {
                    let mut w = csv::Writer::from_writer(w);
                    w.write_record(["points", "spacing", "sup", "l2", "l4", "l8"])?;
                    for (i, row) in c.lp_trace.iter().enumerate() {
                        w.write_record([
                            c.points[i].to_string(),
                            c.spacings[i].to_string(),
                            c.sup_trace[i].to_string(),
                            row[0].to_string(),
                            row[1].to_string(),
                            row[2].to_string(),
                        ])?;
                    }
                    w.flush()?;
                    Ok(())
                })?;
            }
            serde_json::to_value(&c)?
        }
        ExperimentKind::Positivity => {
            let base = Grid::from_spec(block(&cfg.grid, "grid", kind)?)?;
            let spec = block(&cfg.potential, "potential", kind)?;
            let p = block(&cfg.positivity, "positivity", kind)?;
            let grids = grids_like(&base, &p.refinements)?;
            match p.mode {
                PositivityMode::FormBounded => serde_json::to_value(positivity::form_bounded_test(spec, &grids, &p.spectral)?)?,
                PositivityMode::HardyScan => {
                    let radius = spec.support.radius;
                    serde_json::to_value(positivity::hardy_threshold_scan(&p.couplings, radius, &grids, &p.spectral)?)?
                }
                PositivityMode::GroundState => {
                    let g = positivity::ground_state_log(spec, &base, &grids, &p.spectral)?;
                    if let (true, Some(u)) = (csv, &g.u) {
                        sink.csv("ground_state.csv", |w| io::write_field_csv(w, u, "u"))?;
                    }
                    serde_json::to_value(&g)?
                }
                PositivityMode::EnergyLadder => {
                    let time = block(&cfg.time, "time", kind)?;
                    let ladder = block(&cfg.ladder, "ladder", kind)?.build()?;
                    let window = p.window.ok_or_else(|| Error::Config("energy_ladder needs positivity.window".into()))?;
                    let u0 = cfg.initial.clone().unwrap_or_default().sample(&base)?;
                    serde_json::to_value(positivity::corollary1_experiment(
                        spec,
                        &u0,
                        &ladder,
                        &grids,
                        &p.spectral,
                        &time.solver,
                        time.horizon,
                        window,
                        p.slack,
                    )?)?
                }
            }
        }
        ExperimentKind::Nse => {
            let n = block(&cfg.nse, "nse", kind)?;
            let half = cfg.grid.map(|g| g.half_width).unwrap_or(std::f64::consts::PI);
            let grids = n
                .refinements
                .iter()
                .map(|&pts| Grid::new(3, half, pts, grid::Boundary::Periodic))
                .collect::<Result<Vec<_>>>()?;
            let mut levels = Vec::new();
            let mut finest = None;
            for g in &grids {
                let flow = nse::synthetic_flow(n.flow, g)?;
                let q = nse::compute_q(&flow)?;
                levels.push(json!({
                    "points": g.points(),
                    "div_residual": flow.div_residual,
                    "identity_gap": q.identity_gap,
                    "transport_term_max": q.transport_term_max,
                    "q_max": q.q_form_a.max_abs(),
                    "mask_fraction": q.mask.iter().filter(|m| **m).count() as f64 / g.len() as f64,
                }));
                finest = Some((flow, q));
            }
            let (flow, q) = finest.expect("at least one refinement");
            if csv {
                sink.csv("flow.csv", |w| io::write_flow_csv(w, &flow))?;
                sink.csv("q.csv", |w| io::write_q_csv(w, &q))?;
            }
            let classification = if n.classify {
                let time = block(&cfg.time, "time", kind)?;
                let steps = (time.horizon / time.solver.dt).round() as usize;
                let family = n.flow;
                let series = move |g: &Grid| -> Result<QSeries> {
                    let q = nse::compute_q(&nse::synthetic_flow(family, g)?)?;
                    Ok(QSeries { dt: time.solver.dt, fields: vec![q; steps + 1] })
                };
                let c = nse::q_heat_bounded_check(series, &grids, &ClassifyConfig::new(time.horizon))?;
                Some(c)
            } else {
                None
            };
            json!({ "levels": levels, "classification": classification })
        }
    };
    if cfg.wants(Format::Json) {
        sink.json(cfg, result)?;
    }
    Ok(Artifacts { files: sink.files })
}

#[cfg(test)]
mod tests {
    use super::*;

    const KERNEL: &str = r#"
experiment = "kernel"
[grid]
dim = 1
L = 4.0
N = 65
[time]
dt = 0.01
T = 0.2
[potential]
kind = "constant"
c = 0.0
[ladder]
start = 1.0
levels = 3
[kernel]
source = [0.0]
"#;

    #[test]
    fn parses_aliases_and_defaults() {
        let cfg = ExperimentConfig::from_toml(KERNEL).unwrap();
        assert_eq!(cfg.grid.unwrap().points, 65);
        assert_eq!(cfg.output.formats, vec![Format::Json]);
        assert_eq!(cfg.kernel.unwrap().floor, 1e3);
    }

    #[test]
    fn missing_block_is_a_validation_error() {
        let text = KERNEL.replace("[kernel]\nsource = [0.0]\n", "");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert_eq!(exit_code(&err), 2);
        assert!(err.to_string().contains("[kernel]"));
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = KERNEL.replace("dim = 1", "dim = 1\nspacing = 0.1");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn catalog_covers_every_kind() {
        let c = catalog();
        assert!(c.len() >= 6);
        for label in ["Thm 2.1", "Thm 2.2", "Def 3.1", "Thm 4.1"] {
            assert!(c.iter().any(|e| e.label == label));
        }
    }
}
