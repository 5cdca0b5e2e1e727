//! TOML scenario files: parsing, canonical export, and the run helpers the
//! CLI and examples share.
//!
//! The grammar is documented in `docs/scenario-format.md`. Parsing never
//! panics: syntax errors carry the line and key, semantic errors the dotted
//! key path (`layer[1].a`).

use std::path::Path;
use std::sync::Arc;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::measure_h2_growth;
use crate::expr::Expr;
use crate::grid::{GridFunction, GridSpec, NormKind};
use crate::model::{validate_hypotheses, FuelConcentration, FuelLayer, HypothesisReport, LayerParams, Model, MovingProfile, Field};
use crate::reaction::{GBounds, ReactionContext, SamplingConfig};
use crate::solver::{
    self, ContractionParams, GlobalOptions, GlobalOutcome, ModelProblem, PicardConfig, PicardOutcome,
    SolutionTrajectory, WindowChoices,
};

/// Fraction of the domain at each end where `phi` must be negligible.
pub const DECAY_BAND: f64 = 0.1;

/// Relative size `phi` may have on the outer band.
pub const DECAY_TOLERANCE: f64 = 1e-6;

/// A coefficient or initial-data field: a number, an expression, or a table
/// of nodal samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum FieldSpec {
    Const(f64),
    Expr(Expr),
    Table {
        #[serde(rename = "table")]
        values: Vec<f64>,
    },
}

impl FieldSpec {
    fn field(&self, grid: GridSpec, key: &str) -> Result<Field> {
        match self {
            FieldSpec::Const(c) => {
                if !c.is_finite() {
                    return Err(Error::scenario(key, "must be finite"));
                }
                Field::constant(grid, *c)
            }
            FieldSpec::Expr(e) => {
                e.validate().map_err(|m| Error::scenario(key, m))?;
                Field::from_expr(e, grid)
            }
            FieldSpec::Table { values } => {
                if values.len() != grid.nx() {
                    return Err(Error::scenario(
                        key,
                        format!("table has {} values, grid has {} nodes", values.len(), grid.nx()),
                    ));
                }
                let v = GridFunction::new(grid, values.clone()).map_err(|e| Error::scenario(key, e.to_string()))?;
                Ok(Field::from_samples(v))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    /// `q_i` between layer `i` and `i + 1`.
    pub couplings: Vec<f64>,
    /// `[qbar_1, qbar_2]`.
    pub heat_loss: [f64; 2],
    pub activation_energy: f64,
    #[serde(default)]
    pub external_temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    pub horizon: f64,
    /// Window cap for global continuation.
    #[serde(default = "default_windows")]
    pub windows: usize,
    #[serde(default)]
    pub upwind: bool,
}

fn default_theta() -> f64 {
    0.5
}
fn default_tol() -> f64 {
    PicardConfig::default().tol
}
fn default_max_iter() -> usize {
    PicardConfig::default().max_iter
}
fn default_windows() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    /// Ball radius; defaults to the H2 norm of the initial data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(flatten)]
    pub choices: WindowChoices,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_time_samples")]
    pub time_samples: usize,
    #[serde(default = "default_random_states")]
    pub random_states: usize,
}

fn default_time_samples() -> usize {
    SamplingConfig::default().time_samples
}
fn default_random_states() -> usize {
    SamplingConfig::default().random_states
}

impl Default for SamplingSection {
    fn default() -> Self {
        let s = SamplingConfig::default();
        Self {
            seed: s.seed,
            time_samples: s.time_samples,
            random_states: s.random_states,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FuelSpec {
    /// Profile translated with `speed`: `y(x, t) = expr(x - speed t)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<Expr>,
    #[serde(default)]
    pub speed: f64,
    /// Time-independent part added to the moving profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<FieldSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LayerSection {
    #[serde(rename = "K")]
    pub k: f64,
    pub a: FieldSpec,
    pub b: FieldSpec,
    pub c: FieldSpec,
    pub d: FieldSpec,
    pub lambda: FieldSpec,
    pub y: FuelSpec,
    pub phi: FieldSpec,
}

/// The file as written; `export` produces its canonical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub grid: GridSection,
    pub constants: ConstantsSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub window: WindowSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(rename = "layer")]
    pub layers: Vec<LayerSection>,
}

/// Key named on the line a TOML error points at, if any.
fn key_on_line(text: &str, line: usize) -> Option<String> {
    let l = text.lines().nth(line.checked_sub(1)?)?;
    let (key, _) = l.split_once('=')?;
    let key = key.trim().trim_start_matches('{').trim();
    (!key.is_empty()).then(|| key.to_string())
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
            let mut message = e.message().to_string();
            if let Some(key) = line.and_then(|l| key_on_line(text, l)) {
                message = format!("`{key}`: {message}");
            }
            Error::Parse { line, message }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical TOML; parsing it gives back an equal structure.
    pub fn export(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            line: None,
            message: e.to_string(),
        })
    }

    pub fn build(&self) -> Result<Scenario> {
        let g = &self.grid;
        let grid = GridSpec::new(g.x_min, g.x_max, g.nx).map_err(|e| Error::scenario("grid", e.to_string()))?;
        let s = &self.solver;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return Err(Error::scenario("solver.dt", "must be positive"));
        }
        if !(0.5..=1.0).contains(&s.theta) {
            return Err(Error::scenario("solver.theta", "must lie in [0.5, 1]"));
        }
        if !(s.tol > 0.0) {
            return Err(Error::scenario("solver.tol", "must be positive"));
        }
        if s.max_iter == 0 {
            return Err(Error::scenario("solver.max_iter", "must be at least 1"));
        }
        if !(s.horizon > 0.0 && s.horizon.is_finite()) {
            return Err(Error::scenario("solver.horizon", "must be positive"));
        }
        if let Some(rho) = self.window.rho {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(Error::scenario("window.rho", "must be positive"));
            }
        }
        if self.sampling.time_samples == 0 {
            return Err(Error::scenario("sampling.time_samples", "must be at least 1"));
        }

        let mut layers = Vec::new();
        let mut fuel = Vec::new();
        let mut phi = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let key = |name: &str| format!("layer[{i}].{name}");
            layers.push(LayerParams {
                a: l.a.field(grid, &key("a"))?,
                b: l.b.field(grid, &key("b"))?,
                c: l.c.field(grid, &key("c"))?,
                d: l.d.field(grid, &key("d"))?,
                lambda: l.lambda.field(grid, &key("lambda"))?,
                heat_release: l.k,
            });
            let fixed = l.y.fixed.as_ref().map(|f| f.field(grid, &key("y.fixed"))).transpose()?;
            if l.y.expr.is_none() && fixed.is_none() {
                return Err(Error::scenario(key("y"), "needs `expr` or `fixed`"));
            }
            fuel.push(FuelLayer {
                moving: l.y.expr.clone().map(|expr| MovingProfile { expr, speed: l.y.speed }),
                fixed,
            });
            phi.push(l.phi.field(grid, &key("phi"))?.value);
        }
        let c = &self.constants;
        let model = Model::new(
            grid,
            layers,
            FuelConcentration::new(grid, fuel)?,
            c.couplings.clone(),
            (c.heat_loss[0], c.heat_loss[1]),
            c.activation_energy,
            c.external_temperature,
        )?;
        check_decay(&phi)?;
        Ok(Scenario {
            name: self.name.clone(),
            model: Arc::new(model),
            phi,
            solver: *s,
            window: self.window,
            sampling: SamplingConfig {
                seed: self.sampling.seed,
                time_samples: self.sampling.time_samples,
                random_states: self.sampling.random_states,
            },
            file: self.clone(),
        })
    }
}

/// JSON Schema of the scenario file; shipped as `docs/scenario.schema.json`.
pub fn scenario_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(ScenarioFile)).expect("schema serialises")
}

/// The initial data must be negligible near the truncation boundary, where
/// the propagators impose homogeneous Dirichlet values.
pub fn check_decay(phi: &[GridFunction]) -> Result<()> {
    for (i, p) in phi.iter().enumerate() {
        let band = p.grid().edge_band(DECAY_BAND);
        let v = p.values();
        let edge = v[..band].iter().chain(&v[v.len() - band..]).fold(0.0f64, |m, x| m.max(x.abs()));
        if edge > DECAY_TOLERANCE * p.norm_sup().max(1.0) {
            return Err(Error::InvalidInitialData(format!(
                "layer {i}: |phi| = {edge:.3e} on the outer 10% of the domain"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Picard,
    Mol,
    Global,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "picard" => Ok(Method::Picard),
            "mol" => Ok(Method::Mol),
            "global" => Ok(Method::Global),
            _ => Err(format!("unknown method `{s}` (picard|mol|global)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Picard => "picard",
            Method::Mol => "mol",
            Method::Global => "global",
        })
    }
}

/// A built scenario: model, initial data and run configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: Arc<Model>,
    pub phi: Vec<GridFunction>,
    pub solver: SolverSection,
    pub window: WindowSection,
    pub sampling: SamplingConfig,
    /// The source file, for export and manifests.
    pub file: ScenarioFile,
}

/// Result of [`Scenario::run`].
#[derive(Debug, Clone)]
pub struct Run {
    pub method: Method,
    pub trajectory: SolutionTrajectory,
    pub report: HypothesisReport,
    pub window: Option<ContractionParams>,
    pub picard: Option<PicardOutcome>,
    pub global: Option<GlobalOutcome>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        ScenarioFile::load(path)?.build()
    }

    pub fn grid(&self) -> &GridSpec {
        self.model.grid()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sampling.seed = seed;
        self.file.sampling.seed = seed;
        self
    }

    pub fn picard_config(&self) -> PicardConfig {
        PicardConfig {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }

    /// Ball radius: the override, else the H2 norm of `phi`.
    pub fn rho(&self) -> f64 {
        self.window.rho.unwrap_or_else(|| {
            crate::grid::vector_norm(&self.phi, NormKind::H2)
                .unwrap_or(0.0)
                .max(solver::RHO_FLOOR)
        })
    }

    /// Coefficient, fuel and parabolicity checks over the horizon.
    pub fn validate(&self) -> HypothesisReport {
        let times = self.model.sample_times(self.solver.horizon, self.solver.dt);
        let mut report = validate_hypotheses(&self.model, &times, GBounds::for_activation(self.model.activation_energy));
        report.rho = self.rho();
        report.horizon = self.solver.horizon;
        report
    }

    pub fn context(&self) -> Result<ReactionContext> {
        ReactionContext::new(Arc::clone(&self.model), self.rho())
    }

    pub fn problem(&self, report: &HypothesisReport) -> Result<ModelProblem> {
        self.problem_with(&report.beta_accretivity)
    }

    /// `beta_accretivity` is recorded on the steppers but never enters a step.
    fn problem_with(&self, beta_accretivity: &[f64]) -> Result<ModelProblem> {
        let steppers = (0..self.model.n_layers())
            .map(|i| {
                Ok(crate::evolution::EvolutionStepper::new(
                    crate::evolution::ModelCoefficients::new(Arc::clone(&self.model), i),
                    self.solver.dt,
                    self.solver.theta,
                )?
                .with_upwind(self.solver.upwind)
                .with_beta_accretivity(beta_accretivity.get(i).copied().unwrap_or(0.0)))
            })
            .collect::<Result<Vec<_>>>()?;
        solver::Problem::new(steppers, self.context()?)
    }

    /// Measured H2 growth rate of the propagators over the horizon.
    pub fn beta_tilde(&self, problem: &ModelProblem) -> Result<f64> {
        let family = crate::evolution::h2_test_family(self.grid());
        let mut best = 0.0f64;
        for s in problem.steppers() {
            best = best.max(measure_h2_growth(s, &family, self.solver.horizon)?);
        }
        Ok(best)
    }

    /// `T'` and every constant entering it, with `kappa`, `mu` sampled at `R`.
    pub fn window_params(&self, report: &HypothesisReport, beta_tilde: f64) -> Result<(ContractionParams, HypothesisReport)> {
        let ctx = self.context()?;
        let (_, t, _, _) = solver::window_radii(report.beta_max(), beta_tilde, self.rho(), &self.window.choices)?;
        solver::derive_window(&ctx, report, beta_tilde, self.rho(), &self.window.choices, t, self.sampling)
    }

    pub fn global_options(&self) -> GlobalOptions {
        GlobalOptions {
            horizon: self.solver.horizon,
            max_windows: self.solver.windows,
            picard: self.picard_config(),
            choices: self.window.choices,
        }
    }

    /// Solve with `method`. Picard covers one window `[0, T']`; mol and global
    /// cover the horizon (global stops early at the window cap).
    pub fn run(&self, method: Method) -> Result<Run> {
        let report = self.validate();
        let problem = self.problem(&report)?;
        let beta_tilde = self.beta_tilde(&problem)?;
        match method {
            Method::Picard => {
                let (params, report) = self.window_params(&report, beta_tilde)?;
                let out = solver::picard_solve(&problem, &self.phi, &params, self.picard_config())?;
                Ok(Run {
                    method,
                    trajectory: out.trajectory.clone(),
                    report,
                    window: Some(params),
                    picard: Some(out),
                    global: None,
                })
            }
            Method::Mol => {
                let mut report = report;
                report.beta_tilde = Some(beta_tilde);
                Ok(Run {
                    method,
                    trajectory: solver::mol_solve(&problem, &self.phi, self.solver.horizon)?,
                    report,
                    window: None,
                    picard: None,
                    global: None,
                })
            }
            Method::Global => {
                let ctx = self.context()?;
                let constants = solver::sampled_constants(&ctx, self.solver.horizon, self.sampling);
                let out = solver::global_solve(&problem, &self.phi, &report, beta_tilde, &self.global_options(), &constants)?;
                let mut report = report;
                report.beta_tilde = Some(beta_tilde);
                report.mu_source = Some(out.mu_max);
                Ok(Run {
                    method,
                    trajectory: out.trajectory.clone(),
                    report,
                    window: out.windows.first().map(|w| w.params),
                    picard: None,
                    global: Some(out),
                })
            }
        }
    }

    /// Method-of-lines solution on the same time grid as `trajectory`.
    pub fn mol_like(&self, trajectory: &SolutionTrajectory) -> Result<SolutionTrajectory> {
        let horizon = *trajectory.times.last().unwrap_or(&0.0);
        solver::mol_solve(&self.problem_with(&[])?, &self.phi, horizon)
    }

    /// Method-of-lines solution on `[0, horizon]` without a validation pass.
    pub fn solve_mol(&self) -> Result<SolutionTrajectory> {
        solver::mol_solve(&self.problem_with(&[])?, &self.phi, self.solver.horizon)
    }
}
