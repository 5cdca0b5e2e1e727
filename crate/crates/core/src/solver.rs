//! Mild solutions: the Picard map on the contraction set, the window
//! length `T'`, windowed continuation, and a method-of-lines oracle.
//!
//! Trajectories are stored on the evolution step grid. The Duhamel integral
//! uses the trapezoidal rule on that grid and is evaluated by the recursion
//!
//! ```text
//! w_0 = phi,   w_{k+1} = U_k (w_k + dt/2 F_k) + dt/2 F_{k+1}
//! ```
//!
//! so one Picard sweep costs one tridiagonal solve per step and layer.

use std::sync::Arc;

use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{Coefficients, EvolutionStepper, ModelCoefficients, StepOperator};
use crate::grid::{self, GridFunction, GridSpec, NormKind};
use crate::model::{HypothesisReport, Model};
use crate::reaction::{self, ReactionContext, SamplingConfig, Source};

/// Layer-major raw state: `state[layer][node]`.
pub type State = Vec<Vec<f64>>;

/// Default candidate horizon when `beta = 0` leaves `T` unconstrained.
pub const DEFAULT_T: f64 = 1.0;

/// Smallest ball radius used when a window starts from a (near) zero state.
pub const RHO_FLOOR: f64 = 1e-12;

/// Linear propagators for every layer plus the source.
pub struct Problem<C: Coefficients, S: Source> {
    steppers: Vec<EvolutionStepper<C>>,
    source: S,
}

pub type ModelProblem = Problem<ModelCoefficients, ReactionContext>;

impl<C: Coefficients, S: Source> Problem<C, S> {
    pub fn new(steppers: Vec<EvolutionStepper<C>>, source: S) -> Result<Self> {
        let Some(first) = steppers.first() else {
            return Err(Error::InvalidStepper("no layers".into()));
        };
        if source.n_layers() != steppers.len() {
            return Err(Error::LayerCountMismatch {
                expected: steppers.len(),
                got: source.n_layers(),
            });
        }
        if steppers.iter().any(|s| s.grid() != first.grid() || s.dt() != first.dt()) {
            return Err(Error::InvalidStepper("layers must share grid and dt".into()));
        }
        Ok(Self { steppers, source })
    }

    pub fn steppers(&self) -> &[EvolutionStepper<C>] {
        &self.steppers
    }

    pub fn source(&self) -> &S {
        &self.source
    }

    pub fn grid(&self) -> &GridSpec {
        self.steppers[0].grid()
    }

    pub fn dt(&self) -> f64 {
        self.steppers[0].dt()
    }

    pub fn n_layers(&self) -> usize {
        self.steppers.len()
    }

    fn check_phi(&self, phi: &[GridFunction]) -> Result<State> {
        if phi.len() != self.n_layers() {
            return Err(Error::LayerCountMismatch {
                expected: self.n_layers(),
                got: phi.len(),
            });
        }
        if phi.iter().any(|p| p.grid() != self.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(phi.iter().map(|p| p.values().to_vec()).collect())
    }

    fn operators(&self, k0: usize, steps: usize) -> Result<Vec<Vec<Arc<StepOperator>>>> {
        self.steppers
            .par_iter()
            .map(|s| s.step_operators(k0, k0 + steps))
            .collect()
    }

    /// `f(t, u)` with the boundary entries zeroed (they are Dirichlet data).
    fn eval_source(&self, t: f64, u: &State, out: &mut State) {
        self.source.eval_into(t, u, out);
        for o in out.iter_mut() {
            let last = o.len() - 1;
            o[0] = 0.0;
            o[last] = 0.0;
        }
    }
}

impl ModelProblem {
    /// Steppers for every layer of `model` and the model's own source.
    pub fn from_model(model: Arc<Model>, dt: f64, theta: f64, rho: f64, beta_accretivity: &[f64]) -> Result<Self> {
        let steppers = (0..model.n_layers())
            .map(|i| {
                Ok(EvolutionStepper::new(ModelCoefficients::new(Arc::clone(&model), i), dt, theta)?
                    .with_beta_accretivity(beta_accretivity.get(i).copied().unwrap_or(0.0)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(steppers, ReactionContext::new(model, rho)?)
    }
}

/// A source plus an explicit forcing term `g(t, layer, out)`; used for
/// manufactured solutions and state-independent drives.
pub struct Forced<S, F> {
    pub inner: S,
    pub forcing: F,
}

impl<S: Source, F: Fn(f64, usize, &mut [f64]) + Sync> Source for Forced<S, F> {
    fn n_layers(&self) -> usize {
        self.inner.n_layers()
    }

    fn eval_into(&self, t: f64, u: &[Vec<f64>], out: &mut [Vec<f64>]) {
        self.inner.eval_into(t, u, out);
        let mut extra = vec![0.0; out.first().map_or(0, Vec::len)];
        for (i, o) in out.iter_mut().enumerate() {
            (self.forcing)(t, i, &mut extra);
            for (a, b) in o.iter_mut().zip(&extra) {
                *a += b;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub l2: f64,
    pub h2: f64,
    pub window: usize,
    pub iterations: usize,
    /// Largest Picard defect ratio of the window; 0 when not applicable.
    pub contraction_ratio: f64,
    /// `||phi||_{L2} e^{(beta + mu) t}` when a Gronwall monitor ran.
    pub gronwall_bound: Option<f64>,
    /// `||u(t)||_{H2} / ||phi||_{H2}` when a monitor ran.
    pub h2_ratio: Option<f64>,
}

/// States on the step grid with per-time norm diagnostics.
#[derive(Debug, Clone)]
pub struct SolutionTrajectory {
    grid: GridSpec,
    pub times: Vec<f64>,
    states: Vec<State>,
    pub diagnostics: Vec<StepDiagnostics>,
}

fn vector_raw_norm(u: &State, dx: f64, kind: NormKind) -> f64 {
    u.iter()
        .map(|v| match kind {
            NormKind::L2 => grid::l2(v, dx),
            NormKind::H2 => grid::h2(v, dx),
            NormKind::Sup => grid::sup(v),
            NormKind::H1 => {
                let mut d = vec![0.0; v.len()];
                grid::first_derivative_into(v, dx, &mut d);
                (grid::l2(v, dx).powi(2) + grid::l2(&d, dx).powi(2)).sqrt()
            }
        })
        .fold(0.0, f64::max)
}

fn vector_raw_distance(a: &State, b: &State, dx: f64, kind: NormKind) -> f64 {
    let diff: State = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect();
    vector_raw_norm(&diff, dx, kind)
}

impl SolutionTrajectory {
    fn new(grid: GridSpec, times: Vec<f64>, states: Vec<State>, window: usize, iterations: usize, ratio: f64) -> Self {
        let dx = grid.dx();
        let diagnostics = times
            .iter()
            .zip(&states)
            .map(|(&t, u)| StepDiagnostics {
                t,
                l2: vector_raw_norm(u, dx, NormKind::L2),
                h2: vector_raw_norm(u, dx, NormKind::H2),
                window,
                iterations,
                contraction_ratio: ratio,
                gronwall_bound: None,
                h2_ratio: None,
            })
            .collect();
        Self {
            grid,
            times,
            states,
            diagnostics,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn raw(&self, k: usize) -> &State {
        &self.states[k]
    }

    pub fn state(&self, k: usize) -> Result<Vec<GridFunction>> {
        self.states[k]
            .iter()
            .map(|v| GridFunction::new(self.grid, v.clone()))
            .collect()
    }

    pub fn final_state(&self) -> Result<Vec<GridFunction>> {
        self.state(self.len() - 1)
    }

    /// `sup_t` of the vector norm of the state.
    pub fn sup_norm(&self, kind: NormKind) -> f64 {
        let dx = self.grid.dx();
        self.states
            .iter()
            .map(|u| vector_raw_norm(u, dx, kind))
            .fold(0.0, f64::max)
    }

    fn check_aligned(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.len() != other.len()
            || self
                .times
                .iter()
                .zip(&other.times)
                .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
        {
            return Err(Error::InvalidStepper("trajectories live on different time grids".into()));
        }
        Ok(())
    }

    /// `sup_t ||self(t) - other(t)||` in the vector norm of `kind`.
    pub fn sup_distance(&self, other: &Self, kind: NormKind) -> Result<f64> {
        self.check_aligned(other)?;
        let dx = self.grid.dx();
        Ok(self
            .states
            .par_iter()
            .zip(&other.states)
            .map(|(a, b)| vector_raw_distance(a, b, dx, kind))
            .reduce(|| 0.0, f64::max))
    }

    /// `sup_t ||d_t (self - other)||_{L2}` by forward differences.
    pub fn time_derivative_distance(&self, other: &Self) -> Result<f64> {
        self.check_aligned(other)?;
        let dx = self.grid.dx();
        let mut best = 0.0f64;
        for k in 0..self.len().saturating_sub(1) {
            let dt = self.times[k + 1] - self.times[k];
            let diff: State = (0..self.states[k].len())
                .map(|i| {
                    (0..self.grid.nx())
                        .map(|x| {
                            let a = self.states[k + 1][i][x] - self.states[k][i][x];
                            let b = other.states[k + 1][i][x] - other.states[k][i][x];
                            (a - b) / dt
                        })
                        .collect()
                })
                .collect();
            best = best.max(vector_raw_norm(&diff, dx, NormKind::L2));
        }
        Ok(best)
    }

    /// Relative `sup_t` L2 distance, normalised by `sup_t ||self||_{L2}`.
    pub fn relative_distance(&self, other: &Self) -> Result<f64> {
        let d = self.sup_distance(other, NormKind::L2)?;
        let s = self.sup_norm(NormKind::L2);
        Ok(if s > 0.0 { d / s } else { d })
    }

    /// Append `other`, dropping its first state (the shared endpoint).
    fn extend_from(&mut self, other: SolutionTrajectory) {
        self.times.extend(other.times.into_iter().skip(1));
        self.states.extend(other.states.into_iter().skip(1));
        self.diagnostics.extend(other.diagnostics.into_iter().skip(1));
    }
}

/// Overrides for `M`, `R` and the candidate horizon `T`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct WindowChoices {
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

/// Every quantity entering the window bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionParams {
    pub rho: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub beta: f64,
    pub beta_tilde: f64,
    pub mu: f64,
    pub kappa: f64,
    #[serde(rename = "T")]
    pub t: f64,
    /// `(1/beta) ln(M/rho)`; infinite when `beta = 0`.
    pub t_max: f64,
    /// The four terms of the min: `T`, `M/(mu e^{beta T})`,
    /// `1/(kappa e^{beta T})`, `(R e^{-beta~ T} - rho)/mu`.
    pub bound_terms: [f64; 4],
    pub t_prime: f64,
    /// `T' kappa e^{beta T}`, the contraction factor of the Picard map.
    pub contraction_bound: f64,
}

impl ContractionParams {
    /// Whole steps of size `dt` that fit in `T'`.
    pub fn steps(&self, dt: f64) -> usize {
        (self.t_prime / dt * (1.0 + 1e-12)).floor() as usize
    }
}

/// `(M, T, T_max, R)` for a ball radius `rho`.
///
/// `M` defaults to `2 rho`; `T` is the user horizon (default 1) capped by
/// `T_max = (1/beta) ln(M/rho)`; `R` defaults to `1.1 rho e^{beta~ T}`.
pub fn window_radii(beta: f64, beta_tilde: f64, rho: f64, choices: &WindowChoices) -> Result<(f64, f64, f64, f64)> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InfeasibleWindow(format!("rho must be positive, got {rho}")));
    }
    let m = choices.m.unwrap_or(2.0 * rho);
    if !(m > rho) {
        return Err(Error::InfeasibleWindow(format!("M = {m} must exceed rho = {rho}")));
    }
    let t_max = if beta > 0.0 { (m / rho).ln() / beta } else { f64::INFINITY };
    let t = choices.t.unwrap_or(DEFAULT_T).min(t_max);
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InfeasibleWindow(format!("candidate horizon T = {t} is not positive")));
    }
    let floor = rho * (beta_tilde * t).exp();
    let r = choices.r.unwrap_or(1.1 * floor);
    if !(r > floor) {
        return Err(Error::InfeasibleWindow(format!(
            "R = {r} must exceed rho e^(beta~ T) = {floor}"
        )));
    }
    Ok((m, t, t_max, r))
}

/// The window `T' = 0.9 min{...}` from a report carrying `kappa` and `mu`.
/// Terms with a zero denominator count as infinite.
pub fn compute_window(
    report: &HypothesisReport,
    beta_tilde: f64,
    rho: f64,
    choices: &WindowChoices,
) -> Result<ContractionParams> {
    let kappa = report
        .kappa
        .ok_or_else(|| Error::InfeasibleWindow("kappa has not been sampled".into()))?;
    let mu = report
        .mu_source
        .ok_or_else(|| Error::InfeasibleWindow("mu has not been sampled".into()))?;
    let beta = report.beta_max();
    let (m, t, t_max, r) = window_radii(beta, beta_tilde, rho, choices)?;
    let growth = (beta * t).exp();
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { f64::INFINITY };
    let bound_terms = [
        t,
        ratio(m, mu * growth),
        ratio(1.0, kappa * growth),
        ratio(r / (beta_tilde * t).exp() - rho, mu),
    ];
    let min = bound_terms.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0 && min.is_finite()) {
        return Err(Error::InfeasibleWindow(format!(
            "window bound min{{{:.3e}, {:.3e}, {:.3e}, {:.3e}}} is not positive",
            bound_terms[0], bound_terms[1], bound_terms[2], bound_terms[3]
        )));
    }
    let t_prime = 0.9 * min;
    Ok(ContractionParams {
        rho,
        m,
        r,
        beta,
        beta_tilde,
        mu,
        kappa,
        t,
        t_max,
        bound_terms,
        t_prime,
        contraction_bound: t_prime * kappa * growth,
    })
}

/// Sample `kappa` and `mu` on the radius-`R` ball, then compute the window.
pub fn derive_window(
    ctx: &ReactionContext,
    report: &HypothesisReport,
    beta_tilde: f64,
    rho: f64,
    choices: &WindowChoices,
    horizon: f64,
    sampling: SamplingConfig,
) -> Result<(ContractionParams, HypothesisReport)> {
    let (_, _, _, r) = window_radii(report.beta_max(), beta_tilde, rho, choices)?;
    let mut report = report.clone();
    report.kappa = Some(reaction::lipschitz_estimate(ctx, r, horizon, sampling).value);
    report.mu_source = Some(reaction::source_h2_bound(ctx, r, horizon, sampling).value);
    report.beta_tilde = Some(beta_tilde);
    report.rho = rho;
    let params = compute_window(&report, beta_tilde, rho, choices)?;
    Ok((params, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50 }
    }
}

/// Membership of one iterate in the contraction set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Membership {
    pub iteration: usize,
    /// `sup_t ||u^k(t)||_{H2}`, to compare with `R`.
    pub sup_h2: f64,
    /// `sup_t ||u^k(t) - U(t,0) phi||_{L2}`, to compare with `M`.
    pub sup_free_distance: f64,
    pub inside: bool,
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub trajectory: SolutionTrajectory,
    pub iterations: usize,
    /// `sup_t ||u^{k+1} - u^k||_{L2}` per iteration.
    pub defects: Vec<f64>,
    /// Consecutive defect ratios.
    pub ratios: Vec<f64>,
    pub final_defect: f64,
    pub membership: Vec<Membership>,
    pub steps: usize,
}

impl PicardOutcome {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Fixed point of the Picard map on `[0, T']` (`T'` snapped down to the step
/// grid).
pub fn picard_solve<C: Coefficients, S: Source>(
    problem: &Problem<C, S>,
    phi: &[GridFunction],
    params: &ContractionParams,
    cfg: PicardConfig,
) -> Result<PicardOutcome> {
    let steps = params.steps(problem.dt());
    if steps == 0 {
        return Err(Error::InfeasibleWindow(format!(
            "T' = {:.3e} is shorter than one step dt = {}",
            params.t_prime,
            problem.dt()
        )));
    }
    let phi = problem.check_phi(phi)?;
    picard_window(problem, &phi, 0, steps, cfg, Some(params), None)
}

/// Picard iteration over steps `k0 .. k0 + steps` starting from `phi` at
/// `t = k0 dt`. The initial guess defaults to the free evolution.
pub fn picard_window<C: Coefficients, S: Source>(
    problem: &Problem<C, S>,
    phi: &State,
    k0: usize,
    steps: usize,
    cfg: PicardConfig,
    params: Option<&ContractionParams>,
    guess: Option<&[State]>,
) -> Result<PicardOutcome> {
    let n = problem.n_layers();
    let nx = problem.grid().nx();
    let dx = problem.grid().dx();
    let dt = problem.dt();
    let half = 0.5 * dt;
    let ops = problem.operators(k0, steps)?;
    let times: Vec<f64> = (0..=steps).map(|k| (k0 + k) as f64 * dt).collect();

    // free evolution U(t, t0) phi, layer by layer
    let free_layers: Vec<Vec<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut scratch = Vec::new();
            let mut v = phi[i].clone();
            let mut out = Vec::with_capacity(steps + 1);
            out.push(v.clone());
            for op in &ops[i] {
                op.apply(&mut v, None, &mut scratch);
                out.push(v.clone());
            }
            out
        })
        .collect();
    let free: Vec<State> = (0..=steps)
        .map(|k| (0..n).map(|i| free_layers[i][k].clone()).collect())
        .collect();

    let mut current: Vec<State> = match guess {
        Some(g) => {
            if g.len() != steps + 1 {
                return Err(Error::InvalidStepper(format!(
                    "initial guess has {} states, window has {}",
                    g.len(),
                    steps + 1
                )));
            }
            g.to_vec()
        }
        None => free.clone(),
    };
    let mut defects = Vec::new();
    let mut ratios = Vec::new();
    let mut membership = Vec::new();
    let mut forcing: Vec<State> = vec![vec![vec![0.0; nx]; n]; steps + 1];

    for iteration in 1..=cfg.max_iter {
        forcing
            .par_iter_mut()
            .zip(&current)
            .zip(&times)
            .for_each(|((f, u), &t)| problem.eval_source(t, u, f));

        let next_layers: Vec<Vec<Vec<f64>>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut scratch = Vec::new();
                let mut out = Vec::with_capacity(steps + 1);
                let mut w = phi[i].clone();
                out.push(w.clone());
                for k in 0..steps {
                    for (a, f) in w.iter_mut().zip(&forcing[k][i]) {
                        *a += half * f;
                    }
                    ops[i][k].apply(&mut w, None, &mut scratch);
                    for (a, f) in w.iter_mut().zip(&forcing[k + 1][i]) {
                        *a += half * f;
                    }
                    out.push(w.clone());
                }
                out
            })
            .collect();
        let next: Vec<State> = (0..=steps)
            .map(|k| (0..n).map(|i| next_layers[i][k].clone()).collect())
            .collect();

        let defect = next
            .par_iter()
            .zip(&current)
            .map(|(a, b)| vector_raw_distance(a, b, dx, NormKind::L2))
            .reduce(|| 0.0, f64::max);
        if let Some(&prev) = defects.last() {
            if prev > 0.0 {
                ratios.push(defect / prev);
            }
        }
        defects.push(defect);

        let sup_h2 = next
            .par_iter()
            .map(|u| vector_raw_norm(u, dx, NormKind::H2))
            .reduce(|| 0.0, f64::max);
        let sup_free_distance = next
            .par_iter()
            .zip(&free)
            .map(|(a, b)| vector_raw_distance(a, b, dx, NormKind::L2))
            .reduce(|| 0.0, f64::max);
        membership.push(Membership {
            iteration,
            sup_h2,
            sup_free_distance,
            inside: params.is_none_or(|p| sup_h2 <= p.r && sup_free_distance <= p.m),
        });

        current = next;
        if defect < cfg.tol {
            let ratio = ratios.iter().copied().fold(0.0, f64::max);
            let trajectory = SolutionTrajectory::new(*problem.grid(), times, current, 0, iteration, ratio);
            return Ok(PicardOutcome {
                trajectory,
                iterations: iteration,
                defects,
                ratios,
                final_defect: defect,
                membership,
                steps,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        defect: defects.last().copied().unwrap_or(f64::NAN),
        ratio: ratios.last().copied().unwrap_or(f64::NAN),
    })
}

/// Residual `sup_t ||u(t) - (Phi u)(t)||_{L2}` of a trajectory on the step
/// grid starting at `k0`.
pub fn fixed_point_residual<C: Coefficients, S: Source>(
    problem: &Problem<C, S>,
    trajectory: &SolutionTrajectory,
    k0: usize,
) -> Result<f64> {
    let states: Vec<State> = (0..trajectory.len()).map(|k| trajectory.raw(k).clone()).collect();
    let phi = states[0].clone();
    let cfg = PicardConfig { tol: f64::INFINITY, max_iter: 1 };
    let out = picard_window(problem, &phi, k0, states.len() - 1, cfg, None, Some(&states))?;
    Ok(out.defects[0])
}

/// Method-of-lines oracle on `[0, horizon]`: the linear part as in the
/// propagators, the source by second-order Adams-Bashforth (Heun for the
/// first step).
pub fn mol_solve<C: Coefficients, S: Source>(
    problem: &Problem<C, S>,
    phi: &[GridFunction],
    horizon: f64,
) -> Result<SolutionTrajectory> {
    let phi = problem.check_phi(phi)?;
    let (steps, _) = problem.steppers[0].step_index(horizon);
    mol_window(problem, &phi, 0, steps)
}

pub fn mol_window<C: Coefficients, S: Source>(
    problem: &Problem<C, S>,
    phi: &State,
    k0: usize,
    steps: usize,
) -> Result<SolutionTrajectory> {
    let n = problem.n_layers();
    let nx = problem.grid().nx();
    let dt = problem.dt();
    let time = |k: usize| (k0 + k) as f64 * dt;
    let mut times = vec![time(0)];
    let mut states = vec![phi.clone()];
    let mut u = phi.clone();
    let mut f_prev: State = vec![vec![0.0; nx]; n];
    let mut f_now: State = vec![vec![0.0; nx]; n];
    let mut rhs: State = vec![vec![0.0; nx]; n];
    let mut scratch = Vec::new();
    problem.eval_source(time(0), &u, &mut f_now);
    for k in 0..steps {
        let ops: Vec<Arc<StepOperator>> = problem
            .steppers
            .iter()
            .map(|s| s.step_operator(k0 + k))
            .collect::<Result<_>>()?;
        if k == 0 {
            let mut pred = u.clone();
            for i in 0..n {
                for x in 0..nx {
                    rhs[i][x] = dt * f_now[i][x];
                }
                ops[i].apply(&mut pred[i], Some(&rhs[i]), &mut scratch);
            }
            let mut f_pred: State = vec![vec![0.0; nx]; n];
            problem.eval_source(time(1), &pred, &mut f_pred);
            for i in 0..n {
                for x in 0..nx {
                    rhs[i][x] = 0.5 * dt * (f_now[i][x] + f_pred[i][x]);
                }
            }
        } else {
            for i in 0..n {
                for x in 0..nx {
                    rhs[i][x] = dt * (1.5 * f_now[i][x] - 0.5 * f_prev[i][x]);
                }
            }
        }
        for i in 0..n {
            ops[i].apply(&mut u[i], Some(&rhs[i]), &mut scratch);
        }
        std::mem::swap(&mut f_prev, &mut f_now);
        problem.eval_source(time(k + 1), &u, &mut f_now);
        times.push(time(k + 1));
        states.push(u.clone());
    }
    Ok(SolutionTrajectory::new(*problem.grid(), times, states, 0, 0, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalOptions {
    pub horizon: f64,
    pub max_windows: usize,
    pub picard: PicardConfig,
    pub choices: WindowChoices,
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowRecord {
    pub index: usize,
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
    pub params: ContractionParams,
    pub iterations: usize,
    pub defects: Vec<f64>,
    pub ratios: Vec<f64>,
    pub membership_ok: bool,
}

#[derive(Debug, Clone)]
pub struct GlobalOutcome {
    pub trajectory: SolutionTrajectory,
    pub windows: Vec<WindowRecord>,
    /// Running maximum of the sampled `mu` over all windows.
    pub mu_max: f64,
    /// Times where the H2 ratio was not finite.
    pub psi_flags: Vec<f64>,
}

/// Windowed continuation: Picard on successive windows of length `T'`,
/// each re-deriving `rho` from its start state, with the L2 Gronwall
/// monitor `||u(t)|| <= ||phi|| e^{(beta + mu) t}` checked at every step.
///
/// `constants(R)` returns `(kappa, mu)` sampled on the radius-`R` ball.
pub fn global_solve<C: Coefficients, S: Source>(
    problem: &Problem<C, S>,
    phi: &[GridFunction],
    report: &HypothesisReport,
    beta_tilde: f64,
    opts: &GlobalOptions,
    constants: &(dyn Fn(f64) -> (f64, f64) + Sync),
) -> Result<GlobalOutcome> {
    let phi_raw = problem.check_phi(phi)?;
    let dx = problem.grid().dx();
    let dt = problem.dt();
    let total_steps = (opts.horizon / dt).round() as usize;
    let beta = report.beta_max();
    let phi_l2 = vector_raw_norm(&phi_raw, dx, NormKind::L2);
    let phi_h2 = vector_raw_norm(&phi_raw, dx, NormKind::H2);

    let mut k = 0usize;
    let mut state = phi_raw;
    let mut trajectory: Option<SolutionTrajectory> = None;
    let mut windows = Vec::new();
    let mut mu_max = 0.0f64;
    let mut psi_flags = Vec::new();

    while windows.len() < opts.max_windows && k < total_steps {
        let index = windows.len();
        let t0 = k as f64 * dt;
        let infeasible = |e: Error| Error::WindowInfeasible {
            window: index,
            t0,
            reason: e.to_string(),
        };
        let rho = vector_raw_norm(&state, dx, NormKind::H2).max(RHO_FLOOR);
        let (_, _, _, r) = window_radii(beta, beta_tilde, rho, &opts.choices).map_err(infeasible)?;
        let (kappa, mu) = constants(r);
        let mut rep = report.clone();
        rep.kappa = Some(kappa);
        rep.mu_source = Some(mu);
        let params = compute_window(&rep, beta_tilde, rho, &opts.choices).map_err(infeasible)?;
        let steps = params.steps(dt).min(total_steps - k);
        if steps == 0 {
            return Err(infeasible(Error::InfeasibleWindow(format!(
                "T' = {:.3e} is shorter than one step",
                params.t_prime
            ))));
        }
        let mut out = picard_window(problem, &state, k, steps, opts.picard, Some(&params), None)?;
        mu_max = mu_max.max(mu);
        let ratio = out.max_ratio();
        for (j, d) in out.trajectory.diagnostics.iter_mut().enumerate() {
            d.window = index;
            d.iterations = out.iterations;
            d.contraction_ratio = ratio;
            let bound = phi_l2 * ((beta + mu_max) * d.t).exp();
            d.gronwall_bound = Some(bound);
            let psi = if phi_h2 > 0.0 { d.h2 / phi_h2 } else { 0.0 };
            d.h2_ratio = Some(psi);
            if !psi.is_finite() {
                psi_flags.push(d.t);
            }
            if d.l2 > bound * (1.0 + 1e-12) && !(index > 0 && j == 0) {
                return Err(Error::BoundViolated {
                    t: d.t,
                    value: d.l2,
                    bound,
                });
            }
        }
        state = out.trajectory.raw(steps).clone();
        windows.push(WindowRecord {
            index,
            t0,
            t1: (k + steps) as f64 * dt,
            steps,
            params,
            iterations: out.iterations,
            defects: out.defects.clone(),
            ratios: out.ratios.clone(),
            membership_ok: out.membership.iter().all(|m| m.inside),
        });
        k += steps;
        match trajectory.as_mut() {
            None => trajectory = Some(out.trajectory),
            Some(tr) => tr.extend_from(out.trajectory),
        }
    }
    let trajectory = trajectory.ok_or_else(|| Error::InvalidStepper("global horizon shorter than one step".into()))?;
    Ok(GlobalOutcome {
        trajectory,
        windows,
        mu_max,
        psi_flags,
    })
}

/// `constants(R)` for [`global_solve`] backed by the model's own source.
pub fn sampled_constants(
    ctx: &ReactionContext,
    horizon: f64,
    sampling: SamplingConfig,
) -> impl Fn(f64) -> (f64, f64) + Sync + '_ {
    move |r| {
        (
            reaction::lipschitz_estimate(ctx, r, horizon, sampling).value,
            reaction::source_h2_bound(ctx, r, horizon, sampling).value,
        )
    }
}
