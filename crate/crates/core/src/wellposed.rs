//! Continuous dependence of the discrete solution on the initial data and on
//! the parameter fields.
//!
//! Every experiment solves the base scenario and one perturbed copy per
//! epsilon with the same discretisation, then reports the sup-in-time H2
//! distance against the size of the perturbation. The dependence constant is
//! fitted (largest observed ratio), not derived.

use std::sync::Arc;

use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Term};
use crate::grid::{GridFunction, GridSpec, NormKind};
use crate::model::{Field, FuelLayer, Model};
use crate::scenario::{check_decay, Method, Scenario};
use crate::solver::SolutionTrajectory;

/// What a plan perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    InitialData,
    A,
    B,
    /// The transport coefficient; perturbing `c` perturbs `c_x`.
    #[serde(rename = "c_x")]
    Cx,
    D,
    Lambda,
    Y,
}

impl Target {
    pub const PARAMETERS: [Target; 6] = [Target::A, Target::B, Target::Cx, Target::D, Target::Lambda, Target::Y];

    pub fn name(self) -> &'static str {
        match self {
            Target::InitialData => "initial_data",
            Target::A => "a",
            Target::B => "b",
            Target::Cx => "c_x",
            Target::D => "d",
            Target::Lambda => "lambda",
            Target::Y => "y",
        }
    }
}

/// Built-in perturbation directions, all decaying at the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// `exp(-(x/2)^2)`
    Gauss,
    /// `tanh(x + 3) - tanh(x - 3)`, a plateau with smooth edges.
    TanhBump,
    /// `sin(x/2) exp(-(x/4)^2)`
    WindowedSine,
}

fn leibniz(f: &Expr, g: &Expr, order: usize, x: f64) -> f64 {
    let binom = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
    (0..=order)
        .map(|k| binom[order][k] * f.derivative(k, x) * g.derivative(order - k, x))
        .sum()
}

impl Shape {
    /// The unnormalised shape with analytic derivatives.
    fn raw_field(self, grid: GridSpec) -> Result<Field> {
        match self {
            Shape::Gauss => Field::from_expr(&Expr::term(Term::gauss(0.0, 2.0, 1.0)), grid),
            Shape::TanhBump => Field::from_expr(
                &Expr::term(Term::tanh_ramp(-3.0, 1.0, 0.0, 2.0)).plus(Term::tanh_ramp(3.0, 1.0, 0.0, -2.0)),
                grid,
            ),
            Shape::WindowedSine => {
                let s = Expr::term(Term::sine(0.5, 1.0, 0.0));
                let w = Expr::term(Term::gauss(0.0, 4.0, 1.0));
                let d = |k: usize| GridFunction::from_fn(grid, |x| leibniz(&s, &w, k, x));
                Ok(Field {
                    value: d(0)?,
                    d1: d(1)?,
                    d2: d(2)?,
                    d3: d(3)?,
                    source: crate::model::DerivativeSource::Analytic,
                })
            }
        }
    }

    /// The shape scaled to unit discrete H2 norm.
    pub fn field(self, grid: GridSpec) -> Result<Field> {
        let f = self.raw_field(grid)?;
        let s = 1.0 / f.value.norm_h2();
        let zero = Field::constant(grid, 0.0)?;
        zero.axpy(s, &f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum LayerSelect {
    One(usize),
    All(AllLayers),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum AllLayers {
    All,
}

impl LayerSelect {
    fn layers(self, n: usize) -> Result<Vec<usize>> {
        match self {
            LayerSelect::All(_) => Ok((0..n).collect()),
            LayerSelect::One(i) if i < n => Ok(vec![i]),
            LayerSelect::One(i) => Err(Error::scenario("layer", format!("layer {i} out of range (n = {n})"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PerturbationPlan {
    pub target: Target,
    #[serde(default = "default_layer")]
    pub layer: LayerSelect,
    #[serde(default = "default_shape")]
    pub direction: Shape,
    /// Sign of the direction; `-1` flips it.
    #[serde(default = "default_sign")]
    pub sign: f64,
    pub epsilons: Vec<f64>,
    /// Append an `epsilon = 0` control run.
    #[serde(default = "default_true")]
    pub include_zero_control: bool,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Defaults to the scenario horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

fn default_layer() -> LayerSelect {
    LayerSelect::All(AllLayers::All)
}
fn default_shape() -> Shape {
    Shape::Gauss
}
fn default_sign() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_method() -> Method {
    Method::Mol
}

impl PerturbationPlan {
    pub fn new(target: Target, epsilons: Vec<f64>) -> Self {
        Self {
            target,
            layer: default_layer(),
            direction: default_shape(),
            sign: 1.0,
            epsilons,
            include_zero_control: true,
            method: Method::Mol,
            horizon: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1)),
            message: e.message().to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::scenario("epsilons", "at least one value required"));
        }
        if self.epsilons.iter().any(|&e| !(e > f64::MIN_POSITIVE && e.is_finite())) {
            return Err(Error::scenario("epsilons", "values must be positive and finite"));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::scenario("epsilons", "must be strictly decreasing"));
        }
        if self.sign.abs() != 1.0 {
            return Err(Error::scenario("sign", "must be 1 or -1"));
        }
        if matches!(self.method, Method::Picard) {
            return Err(Error::scenario("method", "use `mol` or `global`; picard covers one window only"));
        }
        Ok(())
    }

    fn run_epsilons(&self) -> Vec<f64> {
        let mut e = self.epsilons.clone();
        if self.include_zero_control {
            e.push(0.0);
        }
        e
    }
}

/// JSON Schema of the plan file; shipped as `docs/plan.schema.json`.
pub fn plan_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(PerturbationPlan)).expect("schema serialises")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DependenceRow {
    pub epsilon: f64,
    /// H2 size of the perturbation (vector norm over layers).
    pub input_distance: f64,
    /// `sup_t ||u_eps(t) - u(t)||_{H2}`.
    pub output_distance: f64,
    /// `sup_t ||d_t (u_eps - u)(t)||_{L2}`.
    pub time_derivative_distance: f64,
    /// `output_distance / input_distance`, 0 for the zero control.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DependenceReport {
    pub target: Target,
    pub direction: Shape,
    pub method: Method,
    pub horizon: f64,
    pub seed: u64,
    /// `sup_t ||u(t)||_{H2}` of the unperturbed solution.
    pub base_norm: f64,
    pub rows: Vec<DependenceRow>,
    pub fitted_kappa_tilde: f64,
    /// Spread of the ratios at the two smallest nonzero epsilons.
    pub ratio_spread: f64,
    pub passed: bool,
    pub notes: Vec<String>,
}

fn solve(s: &Scenario, method: Method, horizon: f64) -> Result<SolutionTrajectory> {
    let mut s = s.clone();
    s.solver.horizon = horizon;
    match method {
        Method::Mol => s.solve_mol(),
        _ => Ok(s.run(method)?.trajectory),
    }
}

fn row(epsilon: f64, input: f64, base: &SolutionTrajectory, other: &SolutionTrajectory) -> Result<DependenceRow> {
    let output_distance = other.sup_distance(base, NormKind::H2)?;
    Ok(DependenceRow {
        epsilon,
        input_distance: input,
        output_distance,
        time_derivative_distance: other.time_derivative_distance(base)?,
        ratio: if input > 0.0 { output_distance / input } else { 0.0 },
    })
}

/// Relative spread `|r1 - r2| / max(r1, r2)` of the two smallest nonzero
/// epsilons' ratios.
fn spread(rows: &[DependenceRow]) -> f64 {
    let mut r: Vec<&DependenceRow> = rows.iter().filter(|r| r.epsilon > 0.0).collect();
    r.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    match r.as_slice() {
        [a, b, ..] => {
            let m = a.ratio.max(b.ratio);
            if m > 0.0 {
                (a.ratio - b.ratio).abs() / m
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

/// Perturb `phi` by `epsilon * direction` on the selected layers.
pub fn perturb_initial(scenario: &Scenario, plan: &PerturbationPlan) -> Result<DependenceReport> {
    plan.validate()?;
    if plan.target != Target::InitialData {
        return Err(Error::scenario("target", "perturb_initial needs target = initial_data"));
    }
    let grid = *scenario.grid();
    let horizon = plan.horizon.unwrap_or(scenario.solver.horizon);
    let layers = plan.layer.layers(scenario.model.n_layers())?;
    let dir = plan.direction.field(grid)?.value.scaled(plan.sign)?;
    check_decay(std::slice::from_ref(&dir))?;

    // keep one ball for every run: enlarge rho to cover the largest phi_eps
    let mut base = scenario.clone();
    let eps_max = plan.epsilons[0];
    let mut rho = base.rho();
    for &e in &[eps_max, -eps_max] {
        let phi: Vec<GridFunction> = shifted(&base.phi, &layers, e, &dir)?;
        rho = rho.max(crate::grid::vector_norm(&phi, NormKind::H2)?);
    }
    base.window.rho = Some(rho);

    let base_tr = solve(&base, plan.method, horizon)?;
    let runs: Vec<Result<DependenceRow>> = plan
        .run_epsilons()
        .par_iter()
        .map(|&e| {
            let mut s = base.clone();
            s.phi = shifted(&base.phi, &layers, e, &dir)?;
            let tr = solve(&s, plan.method, horizon)?;
            let diff = crate::grid::vector_sub(&s.phi, &base.phi)?;
            row(e, crate::grid::vector_norm(&diff, NormKind::H2)?, &base_tr, &tr)
        })
        .collect();
    let rows = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(finish_initial(plan, &base, horizon, base_tr.sup_norm(NormKind::H2), rows))
}

fn shifted(phi: &[GridFunction], layers: &[usize], e: f64, dir: &GridFunction) -> Result<Vec<GridFunction>> {
    phi.iter()
        .enumerate()
        .map(|(i, p)| if layers.contains(&i) { p.axpy(e, dir) } else { Ok(p.clone()) })
        .collect()
}

fn finish_initial(plan: &PerturbationPlan, s: &Scenario, horizon: f64, base_norm: f64, rows: Vec<DependenceRow>) -> DependenceReport {
    let kappa = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let ratio_spread = spread(&rows);
    let mut notes = Vec::new();
    let control_ok = rows.iter().filter(|r| r.epsilon == 0.0).all(|r| r.output_distance == 0.0);
    if !control_ok {
        notes.push("zero control produced a nonzero distance".into());
    }
    let finite = rows.iter().all(|r| r.ratio.is_finite());
    if ratio_spread > 0.2 {
        notes.push(format!("ratios at the two smallest epsilons differ by {:.1}%", 100.0 * ratio_spread));
    }
    DependenceReport {
        target: plan.target,
        direction: plan.direction,
        method: plan.method,
        horizon,
        seed: s.sampling.seed,
        base_norm,
        rows,
        fitted_kappa_tilde: kappa,
        ratio_spread,
        passed: control_ok && finite && ratio_spread <= 0.2,
        notes,
    }
}

/// `model` with `target` on `layers` replaced by `field + epsilon * dir`.
pub fn perturbed_model(model: &Model, target: Target, layers: &[usize], epsilon: f64, dir: &Field) -> Result<Model> {
    let mut m = model.clone();
    for &i in layers {
        let l = &mut m.layers[i];
        let slot = match target {
            Target::A => &mut l.a,
            Target::B => &mut l.b,
            Target::Cx => &mut l.c,
            Target::D => &mut l.d,
            Target::Lambda => &mut l.lambda,
            Target::Y => {
                let fuel: &mut FuelLayer = &mut m.fuel.layers_mut()[i];
                fuel.fixed = Some(match &fuel.fixed {
                    Some(f) => f.axpy(epsilon, dir)?,
                    None => Field::constant(*dir.grid(), 0.0)?.axpy(epsilon, dir)?,
                });
                continue;
            }
            Target::InitialData => return Err(Error::scenario("target", "initial_data is not a parameter")),
        };
        *slot = slot.axpy(epsilon, dir)?;
    }
    Ok(m)
}

/// Perturb one parameter field and measure the solution response.
///
/// Every perturbed model is re-validated first; a violated clause aborts
/// the whole plan with [`Error::HypothesisViolatedByPerturbation`].
pub fn perturb_parameters(scenario: &Scenario, plan: &PerturbationPlan) -> Result<DependenceReport> {
    plan.validate()?;
    if plan.target == Target::InitialData {
        return Err(Error::scenario("target", "use perturb_initial for initial_data"));
    }
    let grid = *scenario.grid();
    let horizon = plan.horizon.unwrap_or(scenario.solver.horizon);
    let layers = plan.layer.layers(scenario.model.n_layers())?;
    let dir = Field::constant(grid, 0.0)?.axpy(plan.sign, &plan.direction.field(grid)?)?;

    let epsilons = plan.run_epsilons();
    let mut scenarios = Vec::with_capacity(epsilons.len());
    for &e in &epsilons {
        let model = perturbed_model(&scenario.model, plan.target, &layers, e, &dir)?;
        let mut s = scenario.clone();
        s.model = Arc::new(model);
        let report = s.validate();
        if !report.passed {
            let v = &report.violations[0];
            return Err(Error::HypothesisViolatedByPerturbation(format!(
                "{} = {} + {e:e} * {:?}: clause `{}` fails in layer {} (value {:.3e})",
                plan.target.name(),
                plan.target.name(),
                plan.direction,
                v.clause,
                v.layer,
                v.value
            )));
        }
        s.solver.horizon = horizon;
        scenarios.push(s);
    }

    let base_tr = solve(scenario, plan.method, horizon)?;
    let runs: Vec<Result<DependenceRow>> = scenarios
        .par_iter()
        .zip(&epsilons)
        .map(|(s, &e)| {
            let tr = solve(s, plan.method, horizon)?;
            // the parameter moved by e * dir, unit H2 on each selected layer
            let input = if e == 0.0 { 0.0 } else { e * dir.value.norm_h2() };
            row(e, input, &base_tr, &tr)
        })
        .collect();
    let rows = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let base_norm = base_tr.sup_norm(NormKind::H2);
    let kappa = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let mut nonzero: Vec<&DependenceRow> = rows.iter().filter(|r| r.epsilon > 0.0).collect();
    nonzero.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let decreasing = nonzero.windows(2).all(|w| w[1].output_distance <= w[0].output_distance);
    let smallest = nonzero.last().map_or(0.0, |r| r.output_distance);
    let small_enough = smallest <= 1e-3 * base_norm;
    let control_ok = rows.iter().filter(|r| r.epsilon == 0.0).all(|r| r.output_distance == 0.0);
    let mut notes = Vec::new();
    if !decreasing {
        notes.push("output distances do not decrease with epsilon".into());
    }
    if !small_enough {
        notes.push(format!(
            "smallest-epsilon distance {smallest:.3e} exceeds 1e-3 of the base norm {base_norm:.3e}"
        ));
    }
    if !control_ok {
        notes.push("zero control produced a nonzero distance".into());
    }
    let ratio_spread = spread(&rows);
    Ok(DependenceReport {
        target: plan.target,
        direction: plan.direction,
        method: plan.method,
        horizon,
        seed: scenario.sampling.seed,
        base_norm,
        rows,
        fitted_kappa_tilde: kappa,
        ratio_spread,
        passed: decreasing && small_enough && control_ok,
        notes,
    })
}

/// Dispatch on the plan's target.
pub fn run_plan(scenario: &Scenario, plan: &PerturbationPlan) -> Result<DependenceReport> {
    match plan.target {
        Target::InitialData => perturb_initial(scenario, plan),
        _ => perturb_parameters(scenario, plan),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatorConvergenceRow {
    pub epsilon: f64,
    /// `sup_psi ||A_eps psi - A psi||_{L2}` over the probe family.
    pub measured: f64,
    /// `sup_psi (||d alpha||_inf ||psi''|| + ||d beta||_inf ||psi'||)`.
    pub bound: f64,
    /// `||d alpha||_inf^2 + ||d beta||_inf^2`, the squared form.
    pub squared_bound: f64,
    /// Whether every probe satisfies the un-squared bound.
    pub holds: bool,
}

/// Unit-H2 probes; the last one is linear, so only the `beta` term acts on
/// it away from the boundary.
pub fn probe_family(grid: &GridSpec) -> Vec<GridFunction> {
    let mut family = crate::evolution::h2_test_family(grid);
    let linear = GridFunction::from_fn(*grid, |x| x).expect("finite");
    let s = 1.0 / linear.norm_h2();
    family.push(linear.scaled(s).expect("finite"));
    family
}

fn apply_a(alpha: &[f64], beta: &[f64], psi: &GridFunction) -> Vec<f64> {
    let d1 = psi.first_derivative();
    let d2 = psi.second_derivative();
    (0..psi.len())
        .map(|k| -alpha[k] * d2.values()[k] + beta[k] * d1.values()[k])
        .collect()
}

/// Distance between the perturbed and unperturbed operators
/// `A(t) = -alpha d_xx + beta d_x` in `B(H2, L2)`, sampled on a probe family
/// and the model's validation times, per epsilon of the plan.
pub fn operator_convergence_check(scenario: &Scenario, plan: &PerturbationPlan) -> Result<Vec<OperatorConvergenceRow>> {
    plan.validate()?;
    let grid = *scenario.grid();
    let dx = grid.dx();
    let layers = plan.layer.layers(scenario.model.n_layers())?;
    let dir = Field::constant(grid, 0.0)?.axpy(plan.sign, &plan.direction.field(grid)?)?;
    let probes = probe_family(&grid);
    let times = scenario.model.sample_times(scenario.solver.horizon, scenario.solver.dt);
    let times: Vec<f64> = if times.len() > 5 {
        (0..5).map(|k| times[k * (times.len() - 1) / 4]).collect()
    } else {
        times
    };
    plan.run_epsilons()
        .par_iter()
        .map(|&e| {
            let pm = perturbed_model(&scenario.model, plan.target, &layers, e, &dir)?;
            let mut out = OperatorConvergenceRow {
                epsilon: e,
                measured: 0.0,
                bound: 0.0,
                squared_bound: 0.0,
                holds: true,
            };
            for &t in &times {
                for &i in &layers {
                    let (a0, b0) = scenario.model.alpha_beta(i, t)?;
                    let (a1, b1) = pm.alpha_beta(i, t)?;
                    let da = a1.sub(&a0)?.norm_sup();
                    let db = b1.sub(&b0)?.norm_sup();
                    out.squared_bound = out.squared_bound.max(da * da + db * db);
                    for psi in &probes {
                        let x0 = apply_a(a0.values(), b0.values(), psi);
                        let x1 = apply_a(a1.values(), b1.values(), psi);
                        let diff: Vec<f64> = x1.iter().zip(&x0).map(|(p, q)| p - q).collect();
                        let measured = crate::grid::l2(&diff, dx);
                        let bound = da * psi.second_derivative().norm_l2() + db * psi.first_derivative().norm_l2();
                        out.measured = out.measured.max(measured);
                        out.bound = out.bound.max(bound);
                        if measured > bound * (1.0 + 1e-10) + 1e-14 {
                            out.holds = false;
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect()
}
