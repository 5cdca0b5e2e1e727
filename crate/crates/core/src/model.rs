//! Layer parameter fields, fuel concentration and the hypothesis report.
//!
//! A [`Model`] holds everything that defines the linear operators
//! `A_i(t) v = -alpha_i v_xx + beta_i v_x` and the source `f`. Validation
//! computes the tightest constants the data satisfies (`k1`, `k2`, `k3`),
//! the parabolicity bounds `mu0`, `mu1`, the per-layer accretivity constant
//! and the `R_i` bounds, and lists every violated inequality with its
//! location instead of failing.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{self, GridFunction, GridSpec};
use crate::reaction::GBounds;

/// How the derivative samples of a [`Field`] were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    Analytic,
    Stencil,
}

/// A coefficient field with its first three derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub value: GridFunction,
    pub d1: GridFunction,
    pub d2: GridFunction,
    pub d3: GridFunction,
    pub source: DerivativeSource,
}

impl Field {
    pub fn from_expr(expr: &Expr, grid: GridSpec) -> Result<Self> {
        Ok(Self {
            value: expr.sample(grid, 0)?,
            d1: expr.sample(grid, 1)?,
            d2: expr.sample(grid, 2)?,
            d3: expr.sample(grid, 3)?,
            source: DerivativeSource::Analytic,
        })
    }

    pub fn constant(grid: GridSpec, c: f64) -> Result<Self> {
        Self::from_expr(&Expr::constant(c), grid)
    }

    /// Tabulated field; derivatives come from the grid stencils.
    pub fn from_samples(value: GridFunction) -> Self {
        let d1 = value.first_derivative();
        let d2 = value.second_derivative();
        let d3 = d2.first_derivative();
        Self {
            value,
            d1,
            d2,
            d3,
            source: DerivativeSource::Stencil,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.value.grid()
    }

    pub fn derivative(&self, order: usize) -> &GridFunction {
        match order {
            0 => &self.value,
            1 => &self.d1,
            2 => &self.d2,
            3 => &self.d3,
            _ => panic!("derivative order {order} not stored"),
        }
    }

    /// `self + eps * other`, derivative by derivative.
    pub fn axpy(&self, eps: f64, other: &Field) -> Result<Self> {
        let source = if self.source == DerivativeSource::Analytic
            && other.source == DerivativeSource::Analytic
        {
            DerivativeSource::Analytic
        } else {
            DerivativeSource::Stencil
        };
        Ok(Self {
            value: self.value.axpy(eps, &other.value)?,
            d1: self.d1.axpy(eps, &other.d1)?,
            d2: self.d2.axpy(eps, &other.d2)?,
            d3: self.d3.axpy(eps, &other.d3)?,
            source,
        })
    }

    fn sup(&self, order: usize) -> f64 {
        self.derivative(order).norm_sup()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub a: Field,
    pub b: Field,
    pub c: Field,
    pub d: Field,
    pub lambda: Field,
    /// Reaction heat constant `K_i >= 0`.
    pub heat_release: f64,
}

impl LayerParams {
    pub fn constant(grid: GridSpec, a: f64, b: f64, c: f64, d: f64, lambda: f64, k: f64) -> Result<Self> {
        Ok(Self {
            a: Field::constant(grid, a)?,
            b: Field::constant(grid, b)?,
            c: Field::constant(grid, c)?,
            d: Field::constant(grid, d)?,
            lambda: Field::constant(grid, lambda)?,
            heat_release: k,
        })
    }

    fn fields(&self) -> [(&'static str, &Field); 5] {
        [
            ("a", &self.a),
            ("b", &self.b),
            ("c", &self.c),
            ("d", &self.d),
            ("lambda", &self.lambda),
        ]
    }

    pub fn derivative_sources(&self) -> Vec<(&'static str, DerivativeSource)> {
        self.fields().iter().map(|(n, f)| (*n, f.source)).collect()
    }
}

/// A profile translated with constant speed: `expr(x - speed * t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingProfile {
    pub expr: Expr,
    pub speed: f64,
}

/// Fuel concentration of one layer: `moving(x - s t) + fixed(x)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FuelLayer {
    pub moving: Option<MovingProfile>,
    pub fixed: Option<Field>,
}

impl FuelLayer {
    pub fn moving(expr: Expr, speed: f64) -> Self {
        Self {
            moving: Some(MovingProfile { expr, speed }),
            fixed: None,
        }
    }

    pub fn fixed(field: Field) -> Self {
        Self {
            moving: None,
            fixed: Some(field),
        }
    }

    pub fn is_autonomous(&self) -> bool {
        self.moving.as_ref().is_none_or(|m| m.speed == 0.0)
    }
}

/// Samples of `y` and the derivatives the hypotheses ask about.
#[derive(Debug, Clone)]
pub struct FuelSample {
    pub y: Vec<f64>,
    pub y_x: Vec<f64>,
    pub y_xx: Vec<f64>,
    pub y_t: Vec<f64>,
    pub y_tx: Vec<f64>,
    pub y_txx: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuelConcentration {
    grid: GridSpec,
    layers: Vec<FuelLayer>,
}

impl FuelConcentration {
    pub fn new(grid: GridSpec, layers: Vec<FuelLayer>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if let Some(f) = &l.fixed {
                if *f.grid() != grid {
                    return Err(Error::GridMismatch);
                }
            }
            if let Some(m) = &l.moving {
                m.expr
                    .validate()
                    .map_err(|e| Error::scenario(format!("layer[{i}].y"), e))?;
                if !m.speed.is_finite() {
                    return Err(Error::scenario(format!("layer[{i}].y.speed"), "must be finite"));
                }
            }
        }
        Ok(Self { grid, layers })
    }

    pub fn layers(&self) -> &[FuelLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [FuelLayer] {
        &mut self.layers
    }

    pub fn is_autonomous(&self) -> bool {
        self.layers.iter().all(FuelLayer::is_autonomous)
    }

    pub fn sample(&self, layer: usize, t: f64) -> FuelSample {
        let n = self.grid.nx();
        let mut s = FuelSample {
            y: vec![0.0; n],
            y_x: vec![0.0; n],
            y_xx: vec![0.0; n],
            y_t: vec![0.0; n],
            y_tx: vec![0.0; n],
            y_txx: vec![0.0; n],
        };
        let l = &self.layers[layer];
        if let Some(m) = &l.moving {
            let mut d3 = vec![0.0; n];
            m.expr.sample_shifted_into(
                &self.grid,
                m.speed * t,
                &mut [&mut s.y, &mut s.y_x, &mut s.y_xx, &mut d3],
            );
            if m.speed != 0.0 {
                for (i, d3) in d3.iter().enumerate() {
                    s.y_t[i] = -m.speed * s.y_x[i];
                    s.y_tx[i] = -m.speed * s.y_xx[i];
                    s.y_txx[i] = -m.speed * d3;
                }
            }
        }
        if let Some(f) = &l.fixed {
            for i in 0..n {
                s.y[i] += f.value.values()[i];
                s.y_x[i] += f.d1.values()[i];
                s.y_xx[i] += f.d2.values()[i];
            }
        }
        s
    }
}

/// The full n-layer system.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    grid: GridSpec,
    pub layers: Vec<LayerParams>,
    pub fuel: FuelConcentration,
    /// `q_i`, heat exchange between layers `i` and `i + 1` (length `n - 1`).
    pub couplings: Vec<f64>,
    /// `(qbar_1, qbar_2)`: heat loss of the first and last layer.
    pub heat_loss: (f64, f64),
    pub activation_energy: f64,
    pub external_temperature: f64,
}

impl Model {
    pub fn new(
        grid: GridSpec,
        layers: Vec<LayerParams>,
        fuel: FuelConcentration,
        couplings: Vec<f64>,
        heat_loss: (f64, f64),
        activation_energy: f64,
        external_temperature: f64,
    ) -> Result<Self> {
        let n = layers.len();
        if n < 2 {
            return Err(Error::scenario("layer", format!("need at least 2 layers, got {n}")));
        }
        if fuel.layers.len() != n {
            return Err(Error::LayerCountMismatch {
                expected: n,
                got: fuel.layers.len(),
            });
        }
        if couplings.len() != n - 1 {
            return Err(Error::scenario(
                "constants.couplings",
                format!("need {} values for {n} layers, got {}", n - 1, couplings.len()),
            ));
        }
        if fuel.grid != grid {
            return Err(Error::GridMismatch);
        }
        for (i, l) in layers.iter().enumerate() {
            if l.fields().iter().any(|(_, f)| *f.grid() != grid) {
                return Err(Error::GridMismatch);
            }
            if !(l.heat_release >= 0.0 && l.heat_release.is_finite()) {
                return Err(Error::scenario(format!("layer[{i}].K"), "must be finite and >= 0"));
            }
        }
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !couplings.iter().all(|&q| nonneg(q)) {
            return Err(Error::scenario("constants.couplings", "must be finite and >= 0"));
        }
        if !(nonneg(heat_loss.0) && nonneg(heat_loss.1)) {
            return Err(Error::scenario("constants.heat_loss", "must be finite and >= 0"));
        }
        if !nonneg(activation_energy) {
            return Err(Error::scenario(
                "constants.activation_energy",
                "must be finite and >= 0",
            ));
        }
        if !external_temperature.is_finite() {
            return Err(Error::scenario("constants.external_temperature", "must be finite"));
        }
        Ok(Self {
            grid,
            layers,
            fuel,
            couplings,
            heat_loss,
            activation_energy,
            external_temperature,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// `(q_{i-1}, q_i)` seen from layer `i`; boundary layers get 0 on the
    /// missing side.
    pub fn transfer(&self, layer: usize) -> (f64, f64) {
        let left = if layer == 0 { 0.0 } else { self.couplings[layer - 1] };
        let right = self.couplings.get(layer).copied().unwrap_or(0.0);
        (left, right)
    }

    /// Heat loss coefficient of `layer` (nonzero only for the outer layers).
    pub fn loss(&self, layer: usize) -> f64 {
        let n = self.n_layers();
        let mut q = 0.0;
        if layer == 0 {
            q += self.heat_loss.0;
        }
        if layer == n - 1 {
            q += self.heat_loss.1;
        }
        q
    }

    /// Pointwise coefficients of `layer` at time `t`.
    pub fn snapshot(&self, layer: usize, t: f64) -> LayerSnapshot {
        let p = &self.layers[layer];
        let fuel = self.fuel.sample(layer, t);
        LayerSnapshot::compute(p, &fuel)
    }

    pub fn alpha_beta(&self, layer: usize, t: f64) -> Result<(GridFunction, GridFunction)> {
        let fuel = self.fuel.sample(layer, t);
        compute_alpha_beta(&self.layers[layer], &fuel, layer, t)
    }

    /// Sample times for validation: every step time plus both endpoints,
    /// collapsed to the endpoints when the fuel does not depend on time.
    pub fn sample_times(&self, horizon: f64, dt: f64) -> Vec<f64> {
        if self.fuel.is_autonomous() || horizon <= 0.0 {
            return vec![0.0, horizon.max(0.0)];
        }
        let steps = (horizon / dt).ceil() as usize;
        let mut times: Vec<f64> = (0..steps).map(|k| k as f64 * dt).collect();
        times.push(horizon);
        times
    }
}

/// Derived pointwise quantities of one layer at one time.
#[derive(Debug, Clone)]
pub struct LayerSnapshot {
    pub denom: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub alpha_xx: Vec<f64>,
    pub beta_x: Vec<f64>,
    /// `(c_i)_x`
    pub c_x: Vec<f64>,
    /// `K_i b_i`
    pub k_b: Vec<f64>,
    pub d: Vec<f64>,
    pub y: Vec<f64>,
}

impl LayerSnapshot {
    fn compute(p: &LayerParams, fuel: &FuelSample) -> Self {
        let n = fuel.y.len();
        let mut s = Self {
            denom: vec![0.0; n],
            alpha: vec![0.0; n],
            beta: vec![0.0; n],
            alpha_xx: vec![0.0; n],
            beta_x: vec![0.0; n],
            c_x: p.c.d1.values().to_vec(),
            k_b: p.b.value.values().iter().map(|b| p.heat_release * b).collect(),
            d: p.d.value.values().to_vec(),
            y: fuel.y.clone(),
        };
        let (a, a1, a2) = (p.a.value.values(), p.a.d1.values(), p.a.d2.values());
        let (b, b1, b2) = (p.b.value.values(), p.b.d1.values(), p.b.d2.values());
        let (l, l1, l2) = (
            p.lambda.value.values(),
            p.lambda.d1.values(),
            p.lambda.d2.values(),
        );
        let (c, c1) = (p.c.value.values(), p.c.d1.values());
        for i in 0..n {
            let (y, y1, y2) = (fuel.y[i], fuel.y_x[i], fuel.y_xx[i]);
            let den = a[i] + b[i] * y;
            let den1 = a1[i] + b1[i] * y + b[i] * y1;
            let den2 = a2[i] + b2[i] * y + 2.0 * b1[i] * y1 + b[i] * y2;
            let inv = 1.0 / den;
            s.denom[i] = den;
            s.alpha[i] = l[i] * inv;
            s.beta[i] = c[i] * inv;
            s.alpha_xx[i] = l2[i] * inv - 2.0 * l1[i] * den1 * inv * inv - l[i] * den2 * inv * inv
                + 2.0 * l[i] * den1 * den1 * inv * inv * inv;
            s.beta_x[i] = c1[i] * inv - c[i] * den1 * inv * inv;
        }
        s
    }
}

/// `alpha = lambda / (a + b y)`, `beta = c / (a + b y)`.
///
/// Fails with [`Error::DenominatorTooSmall`] when `a + b y` drops below half
/// of the layer's `min(a, lambda)`, which only happens for corrupted input.
pub fn compute_alpha_beta(
    params: &LayerParams,
    fuel: &FuelSample,
    layer: usize,
    t: f64,
) -> Result<(GridFunction, GridFunction)> {
    let grid = *params.a.grid();
    let k1 = params
        .a
        .value
        .values()
        .iter()
        .chain(params.lambda.value.values())
        .fold(f64::INFINITY, |m, &v| m.min(v));
    let a = params.a.value.values();
    let b = params.b.value.values();
    let mut alpha = Vec::with_capacity(a.len());
    let mut beta = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        let den = a[i] + b[i] * fuel.y[i];
        if !(den >= 0.5 * k1) {
            return Err(Error::DenominatorTooSmall {
                layer,
                index: i,
                t,
                value: den,
            });
        }
        alpha.push(params.lambda.value.values()[i] / den);
        beta.push(params.c.value.values()[i] / den);
    }
    Ok((GridFunction::new(grid, alpha)?, GridFunction::new(grid, beta)?))
}

/// `1/2 (sup |alpha_xx| + sup |beta_x|)` over every supplied sample.
pub fn accretivity_constant(alpha_xx: &[GridFunction], beta_x: &[GridFunction]) -> f64 {
    let sup = |fs: &[GridFunction]| fs.iter().map(GridFunction::norm_sup).fold(0.0, f64::max);
    0.5 * (sup(alpha_xx) + sup(beta_x))
}

/// Per-layer `R_i` and their maximum `R~`.
///
/// `R_i` is the largest of the sup norms of `a, b, d` and their first two
/// derivatives, `c` and its first three derivatives, `y` and its first two
/// space derivatives over the sampled times, and the bounds on `g, g', g''`.
pub fn r_constants(model: &Model, times: &[f64], g: GBounds) -> (Vec<f64>, f64) {
    let per_layer: Vec<f64> = (0..model.n_layers())
        .map(|i| {
            let p = &model.layers[i];
            let mut r = g.g0.max(g.g1).max(g.g2);
            for k in 0..=2 {
                r = r
                    .max(p.a.sup(k))
                    .max(p.b.sup(k))
                    .max(p.d.sup(k))
                    .max(p.c.sup(k + 1));
            }
            r = r.max(p.c.sup(0));
            for &t in times {
                let s = model.fuel.sample(i, t);
                r = r
                    .max(grid::sup(&s.y))
                    .max(grid::sup(&s.y_x))
                    .max(grid::sup(&s.y_xx));
            }
            r
        })
        .collect();
    let tilde = per_layer.iter().copied().fold(0.0, f64::max);
    (per_layer, tilde)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseGroup {
    /// bounds and regularity of `a, b, c, d, lambda`
    Coefficients,
    /// range and regularity of the fuel concentration
    Fuel,
    /// uniform parabolicity of the layer operators
    Parabolicity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub group: ClauseGroup,
    pub clause: String,
    pub layer: usize,
    pub index: Option<usize>,
    pub t: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub beta_accretivity: Vec<f64>,
    pub r_per_layer: Vec<f64>,
    pub r_tilde: f64,
    /// Lipschitz constant of the source; filled in by the reaction module.
    pub kappa: Option<f64>,
    /// H2 bound of the source on the ball of radius `rho`.
    pub mu_source: Option<f64>,
    /// Measured H2 growth rate of the propagators.
    pub beta_tilde: Option<f64>,
    pub rho: f64,
    pub horizon: f64,
    pub sample_times: usize,
    pub derivative_sources: Vec<Vec<(String, DerivativeSource)>>,
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl HypothesisReport {
    pub fn beta_max(&self) -> f64 {
        self.beta_accretivity.iter().copied().fold(0.0, f64::max)
    }

    pub fn violates(&self, clause: &str) -> bool {
        self.violations.iter().any(|v| v.clause == clause)
    }
}

struct LayerScan {
    min_a: (f64, usize),
    min_lambda: (f64, usize),
    max_coeff: f64,
    min_b: (f64, usize),
    min_c: (f64, usize),
    min_y: (f64, usize, f64),
    max_y: (f64, usize, f64),
    alpha_range: (f64, f64),
    alpha_xx_sup: f64,
    beta_x_sup: f64,
    fuel_derivative_sup: f64,
    y_txx_l2: (f64, f64),
}

fn argmin(v: &[f64]) -> (f64, usize) {
    v.iter()
        .enumerate()
        .fold((f64::INFINITY, 0), |(m, k), (i, &x)| if x < m { (x, i) } else { (m, k) })
}

fn argmax(v: &[f64]) -> (f64, usize) {
    v.iter()
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |(m, k), (i, &x)| if x > m { (x, i) } else { (m, k) })
}

fn scan_layer(model: &Model, layer: usize, times: &[f64]) -> LayerScan {
    let p = &model.layers[layer];
    let min_a = argmin(p.a.value.values());
    let min_lambda = argmin(p.lambda.value.values());
    let max_coeff = [&p.a, &p.lambda, &p.b, &p.c]
        .iter()
        .map(|f| argmax(f.value.values()).0)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut scan = LayerScan {
        min_a,
        min_lambda,
        max_coeff,
        min_b: argmin(p.b.value.values()),
        min_c: argmin(p.c.value.values()),
        min_y: (f64::INFINITY, 0, 0.0),
        max_y: (f64::NEG_INFINITY, 0, 0.0),
        alpha_range: (f64::INFINITY, f64::NEG_INFINITY),
        alpha_xx_sup: 0.0,
        beta_x_sup: 0.0,
        fuel_derivative_sup: 0.0,
        y_txx_l2: (0.0, 0.0),
    };
    let dx = model.grid().dx();
    for &t in times {
        let fuel = model.fuel.sample(layer, t);
        let (lo, ilo) = argmin(&fuel.y);
        if lo < scan.min_y.0 {
            scan.min_y = (lo, ilo, t);
        }
        let (hi, ihi) = argmax(&fuel.y);
        if hi > scan.max_y.0 {
            scan.max_y = (hi, ihi, t);
        }
        for v in [&fuel.y_x, &fuel.y_xx, &fuel.y_t, &fuel.y_tx] {
            scan.fuel_derivative_sup = scan.fuel_derivative_sup.max(grid::sup(v));
        }
        let txx = grid::l2(&fuel.y_txx, dx);
        if txx > scan.y_txx_l2.0 || !txx.is_finite() {
            scan.y_txx_l2 = (txx, t);
        }
        let snap = LayerSnapshot::compute(p, &fuel);
        for &a in &snap.alpha {
            scan.alpha_range.0 = scan.alpha_range.0.min(a);
            scan.alpha_range.1 = scan.alpha_range.1.max(a);
        }
        scan.alpha_xx_sup = scan.alpha_xx_sup.max(grid::sup(&snap.alpha_xx));
        scan.beta_x_sup = scan.beta_x_sup.max(grid::sup(&snap.beta_x));
    }
    scan
}

/// Check every coefficient and fuel inequality on the given sample times.
///
/// `k1`, `k2`, `k3` are the tightest constants the data satisfies, so a
/// violation of `k1 <= a_i` means `a_i` is not bounded away from zero.
pub fn validate_hypotheses(model: &Model, times: &[f64], g: GBounds) -> HypothesisReport {
    let n = model.n_layers();
    let scans: Vec<LayerScan> = (0..n)
        .into_par_iter()
        .map(|i| scan_layer(model, i, times))
        .collect();

    let k1 = scans
        .iter()
        .map(|s| s.min_a.0.min(s.min_lambda.0))
        .fold(f64::INFINITY, f64::min);
    let k2 = scans.iter().map(|s| s.max_coeff).fold(f64::NEG_INFINITY, f64::max);
    let k3 = scans.iter().map(|s| s.max_y.0.abs().max(s.min_y.0.abs())).fold(0.0, f64::max);
    let mu0 = k1 / (k2 * (1.0 + k3));
    let mu1 = k2 / k1;

    let mut violations = Vec::new();
    let mut push = |group, clause: &str, layer, index, t, value| {
        violations.push(Violation {
            group,
            clause: clause.to_string(),
            layer,
            index,
            t,
            value,
        })
    };
    use ClauseGroup::*;
    for (i, s) in scans.iter().enumerate() {
        if s.min_a.0 <= 0.0 {
            push(Coefficients, "k1 <= a_i", i, Some(s.min_a.1), None, s.min_a.0);
        }
        if s.min_lambda.0 <= 0.0 {
            push(Coefficients, "k1 <= lambda_i", i, Some(s.min_lambda.1), None, s.min_lambda.0);
        }
        if s.min_b.0 < 0.0 {
            push(Coefficients, "0 <= b_i", i, Some(s.min_b.1), None, s.min_b.0);
        }
        if s.min_c.0 < 0.0 {
            push(Coefficients, "0 <= c_i", i, Some(s.min_c.1), None, s.min_c.0);
        }
        let p = &model.layers[i];
        let coeff_sup = p
            .fields()
            .iter()
            .flat_map(|(_, f)| (0..=3).map(move |k| f.sup(k)))
            .fold(0.0, f64::max);
        if !coeff_sup.is_finite() {
            push(Coefficients, "bounded coefficient derivatives", i, None, None, coeff_sup);
        }
        if s.min_y.0 < 0.0 {
            push(Fuel, "0 <= y_i", i, Some(s.min_y.1), Some(s.min_y.2), s.min_y.0);
        }
        if s.max_y.0 > 1.0 {
            push(Fuel, "y_i <= 1", i, Some(s.max_y.1), Some(s.max_y.2), s.max_y.0);
        }
        if !s.fuel_derivative_sup.is_finite() {
            push(Fuel, "bounded fuel derivatives", i, None, None, s.fuel_derivative_sup);
        }
        if !s.y_txx_l2.0.is_finite() {
            push(Fuel, "(y_i)_txx square integrable", i, None, Some(s.y_txx_l2.1), s.y_txx_l2.0);
        }
    }
    if !(k1 < k2) {
        push(Coefficients, "k1 < k2", 0, None, None, k2 - k1);
    }
    if k1 > 0.0 && k1 < k2 {
        for (i, s) in scans.iter().enumerate() {
            let tol = 1e-12 * mu1;
            if s.alpha_range.0 < mu0 - tol || s.alpha_range.1 > mu1 + tol {
                push(
                    Parabolicity,
                    "mu0 <= alpha_i <= mu1",
                    i,
                    None,
                    None,
                    s.alpha_range.0,
                );
            }
        }
    }

    let beta_accretivity = scans
        .iter()
        .map(|s| 0.5 * (s.alpha_xx_sup + s.beta_x_sup))
        .collect();
    let (r_per_layer, r_tilde) = r_constants(model, times, g);
    let horizon = times.iter().copied().fold(0.0, f64::max);
    HypothesisReport {
        k1,
        k2,
        k3,
        mu0,
        mu1,
        beta_accretivity,
        r_per_layer,
        r_tilde,
        kappa: None,
        mu_source: None,
        beta_tilde: None,
        rho: 0.0,
        horizon,
        sample_times: times.len(),
        derivative_sources: model
            .layers
            .iter()
            .map(|l| {
                l.derivative_sources()
                    .into_iter()
                    .map(|(n, s)| (n.to_string(), s))
                    .collect()
            })
            .collect(),
        passed: violations.is_empty(),
        violations,
    }
}
