//! Discrete propagators `U_i(t, s)` for `v_t = alpha v_xx - beta v_x`.
//!
//! Theta-method in time with coefficients frozen at each step midpoint,
//! central differences in space, homogeneous Dirichlet data at both ends.
//! Times live on the step grid `t_k = k dt`; off-grid requests are snapped
//! to the nearest step and the snap distance is reported.

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{self, GridFunction, GridSpec};
use crate::model::Model;

/// Time-samplable `alpha`, `beta` for one layer.
pub trait Coefficients: Send + Sync {
    fn grid(&self) -> &GridSpec;

    fn eval(&self, t: f64, alpha: &mut [f64], beta: &mut [f64]) -> Result<()>;

    /// True when `eval` ignores `t`; lets steppers reuse one factorization.
    fn is_autonomous(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantCoefficients {
    pub grid: GridSpec,
    pub alpha: f64,
    pub beta: f64,
}

impl Coefficients for ConstantCoefficients {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn eval(&self, _t: f64, alpha: &mut [f64], beta: &mut [f64]) -> Result<()> {
        alpha.fill(self.alpha);
        beta.fill(self.beta);
        Ok(())
    }

    fn is_autonomous(&self) -> bool {
        true
    }
}

/// Time-independent tabulated coefficients.
#[derive(Debug, Clone)]
pub struct FieldCoefficients {
    pub alpha: GridFunction,
    pub beta: GridFunction,
}

impl Coefficients for FieldCoefficients {
    fn grid(&self) -> &GridSpec {
        self.alpha.grid()
    }

    fn eval(&self, _t: f64, alpha: &mut [f64], beta: &mut [f64]) -> Result<()> {
        alpha.copy_from_slice(self.alpha.values());
        beta.copy_from_slice(self.beta.values());
        Ok(())
    }

    fn is_autonomous(&self) -> bool {
        true
    }
}

/// `alpha_i`, `beta_i` of one layer of a [`Model`].
#[derive(Debug, Clone)]
pub struct ModelCoefficients {
    model: Arc<Model>,
    layer: usize,
}

impl ModelCoefficients {
    pub fn new(model: Arc<Model>, layer: usize) -> Self {
        Self { model, layer }
    }
}

impl Coefficients for ModelCoefficients {
    fn grid(&self) -> &GridSpec {
        self.model.grid()
    }

    fn eval(&self, t: f64, alpha: &mut [f64], beta: &mut [f64]) -> Result<()> {
        let (a, b) = self.model.alpha_beta(self.layer, t)?;
        alpha.copy_from_slice(a.values());
        beta.copy_from_slice(b.values());
        Ok(())
    }

    fn is_autonomous(&self) -> bool {
        self.model.fuel.layers()[self.layer].is_autonomous()
    }
}

/// One factored step `(I - theta dt L)^{-1} (I + (1 - theta) dt L)` on the
/// interior nodes.
#[derive(Debug, Clone)]
pub struct StepOperator {
    e_lo: Vec<f64>,
    e_di: Vec<f64>,
    e_up: Vec<f64>,
    a: Vec<f64>,
    inv_m: Vec<f64>,
    cp: Vec<f64>,
}

impl StepOperator {
    fn build(alpha: &[f64], beta: &[f64], dx: f64, dt: f64, theta: f64, upwind: bool) -> Result<Self> {
        let m = alpha.len() - 2;
        let mut op = Self {
            e_lo: vec![0.0; m],
            e_di: vec![0.0; m],
            e_up: vec![0.0; m],
            a: vec![0.0; m],
            inv_m: vec![0.0; m],
            cp: vec![0.0; m],
        };
        let inv_dx2 = 1.0 / (dx * dx);
        let inv_2dx = 0.5 / dx;
        let (ex, im) = ((1.0 - theta) * dt, theta * dt);
        let mut prev_cp = 0.0;
        for j in 0..m {
            let (al, be) = (alpha[j + 1], beta[j + 1]);
            if !(al > 0.0) {
                return Err(Error::InvalidStepper(format!(
                    "alpha = {al} at node {} is not positive",
                    j + 1
                )));
            }
            let (mut lo, mut di, mut up) = (al * inv_dx2, -2.0 * al * inv_dx2, al * inv_dx2);
            if upwind {
                if be > 0.0 {
                    lo += be / dx;
                    di -= be / dx;
                } else {
                    up -= be / dx;
                    di += be / dx;
                }
            } else {
                lo += be * inv_2dx;
                up -= be * inv_2dx;
            }
            op.e_lo[j] = ex * lo;
            op.e_di[j] = ex * di;
            op.e_up[j] = ex * up;
            let a = -im * lo;
            let b = 1.0 - im * di;
            let c = -im * up;
            let piv = if j == 0 { b } else { b - a * prev_cp };
            if !(piv.abs() > 1e-14 * (a.abs() + b.abs() + c.abs())) {
                return Err(Error::LinearSolveFailure { row: j + 1, pivot: piv });
            }
            op.a[j] = a;
            op.inv_m[j] = 1.0 / piv;
            op.cp[j] = c / piv;
            prev_cp = op.cp[j];
        }
        Ok(op)
    }

    /// Advance `v` by one step in place; `forcing` (interior entries of a
    /// full-length vector) is added to the right-hand side unscaled.
    pub fn apply(&self, v: &mut [f64], forcing: Option<&[f64]>, scratch: &mut Vec<f64>) {
        let m = self.a.len();
        scratch.resize(m, 0.0);
        let d = scratch.as_mut_slice();
        for j in 0..m {
            let left = if j == 0 { 0.0 } else { v[j] };
            let right = if j + 1 == m { 0.0 } else { v[j + 2] };
            let mut r = v[j + 1] + self.e_lo[j] * left + self.e_di[j] * v[j + 1] + self.e_up[j] * right;
            if let Some(f) = forcing {
                r += f[j + 1];
            }
            d[j] = if j == 0 {
                r * self.inv_m[0]
            } else {
                (r - self.a[j] * d[j - 1]) * self.inv_m[j]
            };
        }
        for j in (0..m - 1).rev() {
            d[j] -= self.cp[j] * d[j + 1];
        }
        v[0] = 0.0;
        v[m + 1] = 0.0;
        v[1..=m].copy_from_slice(d);
    }
}

/// Result of a propagation, with how far the requested times were snapped.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub value: GridFunction,
    pub steps: usize,
    pub snap: f64,
}

#[derive(Debug)]
pub struct EvolutionStepper<C: Coefficients> {
    coeffs: C,
    dt: f64,
    theta: f64,
    upwind: bool,
    beta_accretivity: f64,
    frozen: OnceLock<Arc<StepOperator>>,
}

impl<C: Coefficients + Clone> Clone for EvolutionStepper<C> {
    fn clone(&self) -> Self {
        Self {
            coeffs: self.coeffs.clone(),
            dt: self.dt,
            theta: self.theta,
            upwind: self.upwind,
            beta_accretivity: self.beta_accretivity,
            frozen: OnceLock::new(),
        }
    }
}

impl<C: Coefficients> EvolutionStepper<C> {
    pub fn new(coeffs: C, dt: f64, theta: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidStepper(format!("dt must be positive, got {dt}")));
        }
        if !(0.5..=1.0).contains(&theta) {
            return Err(Error::InvalidStepper(format!("theta must lie in [0.5, 1], got {theta}")));
        }
        Ok(Self {
            coeffs,
            dt,
            theta,
            upwind: false,
            beta_accretivity: 0.0,
            frozen: OnceLock::new(),
        })
    }

    pub fn with_upwind(mut self, upwind: bool) -> Self {
        self.upwind = upwind;
        self.frozen = OnceLock::new();
        self
    }

    pub fn with_beta_accretivity(mut self, beta: f64) -> Self {
        self.beta_accretivity = beta;
        self
    }

    pub fn grid(&self) -> &GridSpec {
        self.coeffs.grid()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn beta_accretivity(&self) -> f64 {
        self.beta_accretivity
    }

    pub fn coefficients(&self) -> &C {
        &self.coeffs
    }

    /// Nearest step index to `t` and the distance snapped.
    pub fn step_index(&self, t: f64) -> (usize, f64) {
        let k = (t / self.dt).round().max(0.0);
        (k as usize, (t - k * self.dt).abs())
    }

    pub fn step_time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    fn build(&self, t_mid: f64) -> Result<StepOperator> {
        let nx = self.grid().nx();
        let (mut alpha, mut beta) = (vec![0.0; nx], vec![0.0; nx]);
        self.coeffs.eval(t_mid, &mut alpha, &mut beta)?;
        StepOperator::build(&alpha, &beta, self.grid().dx(), self.dt, self.theta, self.upwind)
    }

    /// Operator for the step `t_k -> t_{k+1}`.
    pub fn step_operator(&self, k: usize) -> Result<Arc<StepOperator>> {
        if self.coeffs.is_autonomous() {
            if let Some(op) = self.frozen.get() {
                return Ok(Arc::clone(op));
            }
            let op = Arc::new(self.build(0.0)?);
            return Ok(Arc::clone(self.frozen.get_or_init(|| op)));
        }
        Ok(Arc::new(self.build((k as f64 + 0.5) * self.dt)?))
    }

    /// Operators for steps `k0 .. k1`.
    pub fn step_operators(&self, k0: usize, k1: usize) -> Result<Vec<Arc<StepOperator>>> {
        (k0..k1).map(|k| self.step_operator(k)).collect()
    }

    /// Advance raw values from step `k0` to step `k1`.
    pub fn advance(&self, v: &mut [f64], k0: usize, k1: usize) -> Result<()> {
        let mut scratch = Vec::new();
        for k in k0..k1 {
            self.step_operator(k)?.apply(v, None, &mut scratch);
        }
        Ok(())
    }

    pub fn propagate_snapped(&self, phi: &GridFunction, s: f64, t: f64) -> Result<Propagation> {
        if *phi.grid() != *self.grid() {
            return Err(Error::GridMismatch);
        }
        if !(s <= t) {
            return Err(Error::InvalidStepper(format!("propagate needs s <= t, got s = {s}, t = {t}")));
        }
        let (k0, snap_s) = self.step_index(s);
        let (k1, snap_t) = self.step_index(t);
        let snap = snap_s.max(snap_t);
        if k0 == k1 {
            return Ok(Propagation {
                value: phi.clone(),
                steps: 0,
                snap,
            });
        }
        let mut v = phi.values().to_vec();
        self.advance(&mut v, k0, k1)?;
        Ok(Propagation {
            value: GridFunction::new(*self.grid(), v)?,
            steps: k1 - k0,
            snap,
        })
    }

    /// `U(t, s) phi`; the identity when `s` and `t` snap to the same step.
    pub fn propagate(&self, phi: &GridFunction, s: f64, t: f64) -> Result<GridFunction> {
        Ok(self.propagate_snapped(phi, s, t)?.value)
    }
}

/// Snap-aware composition defect `||U(t,r) phi - U(t,s) U(s,r) phi||_{L2}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CompositionDefect {
    pub defect: f64,
    pub relative: f64,
    pub snap: f64,
}

pub fn composition_check<C: Coefficients>(
    stepper: &EvolutionStepper<C>,
    phi: &GridFunction,
    r: f64,
    s: f64,
    t: f64,
) -> Result<CompositionDefect> {
    let direct = stepper.propagate_snapped(phi, r, t)?;
    let mid = stepper.propagate_snapped(phi, r, s)?;
    let composed = stepper.propagate_snapped(&mid.value, s, t)?;
    let defect = direct.value.sub(&composed.value)?.norm_l2();
    let scale = direct.value.norm_l2();
    Ok(CompositionDefect {
        defect,
        relative: if scale > 0.0 { defect / scale } else { defect },
        snap: direct.snap.max(mid.snap).max(composed.snap),
    })
}

/// `||U(t,s) phi||_{L2} / ||phi||_{L2}`, 0 for the zero function.
pub fn norm_growth_check<C: Coefficients>(
    stepper: &EvolutionStepper<C>,
    phi: &GridFunction,
    s: f64,
    t: f64,
) -> Result<f64> {
    let n0 = phi.norm_l2();
    if n0 == 0.0 {
        return Ok(0.0);
    }
    Ok(stepper.propagate(phi, s, t)?.norm_l2() / n0)
}

/// Default probe family for the H2 growth measurement: Gaussians of three
/// widths at three positions and a modulated sine.
pub fn h2_test_family(grid: &GridSpec) -> Vec<GridFunction> {
    let l = grid.x_max() - grid.x_min();
    let mid = 0.5 * (grid.x_max() + grid.x_min());
    let mut out = Vec::new();
    for w in [0.5, 1.0, 2.0] {
        for c in [mid - l / 8.0, mid, mid + l / 8.0] {
            out.push(GridFunction::from_fn(*grid, |x| (-((x - c) / w).powi(2)).exp()).unwrap());
        }
    }
    out.push(
        GridFunction::from_fn(*grid, |x| ((x - mid) * 1.5).sin() * (-((x - mid) / 2.0).powi(2)).exp())
            .unwrap(),
    );
    out
}

/// Smallest `beta~ >= 0` with `||U(t,0) phi||_{H2} <= e^{beta~ t} ||phi||_{H2}`
/// at every step time up to `horizon`, over the nonzero family members.
pub fn measure_h2_growth<C: Coefficients>(
    stepper: &EvolutionStepper<C>,
    family: &[GridFunction],
    horizon: f64,
) -> Result<f64> {
    let (steps, _) = stepper.step_index(horizon);
    let dx = stepper.grid().dx();
    let ops = stepper.step_operators(0, steps)?;
    let mut beta_tilde = 0.0f64;
    let mut scratch = Vec::new();
    for phi in family {
        let h0 = phi.norm_h2();
        if h0 == 0.0 {
            continue;
        }
        let mut v = phi.values().to_vec();
        for (k, op) in ops.iter().enumerate() {
            op.apply(&mut v, None, &mut scratch);
            let t = stepper.step_time(k + 1);
            let rate = (grid::h2(&v, dx) / h0).ln() / t;
            beta_tilde = beta_tilde.max(rate);
        }
    }
    Ok(beta_tilde)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn heat(nx: usize, dt: f64) -> EvolutionStepper<ConstantCoefficients> {
        let grid = GridSpec::new(-10.0, 10.0, nx).unwrap();
        EvolutionStepper::new(ConstantCoefficients { grid, alpha: 1.0, beta: 0.0 }, dt, 0.5).unwrap()
    }

    fn gaussian(grid: GridSpec, var: f64, shift: f64) -> GridFunction {
        GridFunction::from_fn(grid, |x| (-(x - shift).powi(2) / (2.0 * var)).exp()).unwrap()
    }

    fn heat_error(nx: usize, dt: f64, nu: f64, c: f64, horizon: f64) -> f64 {
        let grid = GridSpec::new(-10.0, 10.0, nx).unwrap();
        let st = EvolutionStepper::new(ConstantCoefficients { grid, alpha: nu, beta: c }, dt, 0.5).unwrap();
        let mut v = gaussian(grid, 1.0, 0.0).into_values();
        let steps = (horizon / dt).round() as usize;
        let mut err = 0.0f64;
        for k in 0..steps {
            st.advance(&mut v, k, k + 1).unwrap();
            let t = (k + 1) as f64 * dt;
            let var = 1.0 + 2.0 * nu * t;
            let exact = gaussian(grid, var, c * t).scaled(1.0 / var.sqrt()).unwrap();
            let e: Vec<f64> = v.iter().zip(exact.values()).map(|(a, b)| a - b).collect();
            err = err.max(grid::l2(&e, grid.dx()));
        }
        err
    }

    #[test]
    fn rejects_bad_configuration() {
        let grid = GridSpec::new(0.0, 1.0, 11).unwrap();
        let c = ConstantCoefficients { grid, alpha: 1.0, beta: 0.0 };
        assert!(EvolutionStepper::new(c, 0.0, 0.5).is_err());
        assert!(EvolutionStepper::new(c, 0.1, 0.4).is_err());
        assert!(EvolutionStepper::new(c, 0.1, 1.1).is_err());
        let st = EvolutionStepper::new(ConstantCoefficients { grid, alpha: -1.0, beta: 0.0 }, 0.1, 0.5).unwrap();
        let phi = GridFunction::zeros(grid);
        assert!(st.propagate(&phi, 0.0, 0.1).is_err());
        assert!(st.propagate(&phi, 0.2, 0.1).is_err());
    }

    #[test]
    fn identity_is_bitwise() {
        let st = heat(201, 0.01);
        let phi = gaussian(*st.grid(), 1.0, 0.3);
        let out = st.propagate(&phi, 0.37, 0.37).unwrap();
        assert_eq!(out, phi);
    }

    #[test]
    fn heat_kernel_second_order() {
        let coarse = heat_error(201, 4e-3, 1.0, 0.0, 0.2);
        let fine = heat_error(401, 2e-3, 1.0, 0.0, 0.2);
        let ratio = coarse / fine;
        assert!(coarse < 5e-3, "{coarse}");
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn advected_gaussian_second_order() {
        let coarse = heat_error(201, 4e-3, 0.5, 1.0, 0.2);
        let fine = heat_error(401, 2e-3, 0.5, 1.0, 0.2);
        let ratio = coarse / fine;
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn fully_implicit_is_first_order_in_time() {
        let grid = GridSpec::new(-10.0, 10.0, 801).unwrap();
        let run = |dt: f64| {
            let st = EvolutionStepper::new(ConstantCoefficients { grid, alpha: 1.0, beta: 0.0 }, dt, 1.0).unwrap();
            let v = st.propagate(&gaussian(grid, 1.0, 0.0), 0.0, 0.4).unwrap();
            let exact = gaussian(grid, 1.8, 0.0).scaled(1.0 / 1.8f64.sqrt()).unwrap();
            v.sub(&exact).unwrap().norm_l2()
        };
        let ratio = run(0.04) / run(0.02);
        assert!((1.7..=2.3).contains(&ratio), "{ratio}");
    }

    #[test]
    fn composition_is_exact_on_aligned_and_snapped_times() {
        let st = heat(201, 0.01);
        let phi = gaussian(*st.grid(), 2.0, 1.0);
        let c = composition_check(&st, &phi, 0.0, 0.13, 0.4).unwrap();
        assert_eq!(c.defect, 0.0);
        let c = composition_check(&st, &phi, 0.0, 0.1234, 0.4).unwrap();
        assert_eq!(c.defect, 0.0);
        assert!((c.snap - 0.0034).abs() < 1e-12);
        let c = composition_check(&st, &phi, 0.1, 0.1, 0.4).unwrap();
        assert_eq!(c.defect, 0.0);
    }

    #[test]
    fn diffusion_contracts_l2_every_step() {
        let grid = GridSpec::new(-5.0, 5.0, 101).unwrap();
        let st = EvolutionStepper::new(ConstantCoefficients { grid, alpha: 0.3, beta: 2.0 }, 0.05, 0.5).unwrap();
        let mut v = GridFunction::from_fn(grid, |x| (3.0 * x).sin() * (-x * x).exp()).unwrap().into_values();
        let slack = 1.0 + 10.0 * f64::EPSILON * grid.nx() as f64;
        for k in 0..40 {
            let before = grid::l2(&v, grid.dx());
            st.advance(&mut v, k, k + 1).unwrap();
            assert!(grid::l2(&v, grid.dx()) <= before * slack);
        }
        assert_eq!(norm_growth_check(&st, &GridFunction::zeros(grid), 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn variable_coefficients_respect_accretivity_bound() {
        use crate::expr::{Expr, Term};
        let grid = GridSpec::new(-10.0, 10.0, 401).unwrap();
        let alpha_e = Expr::constant(1.0).plus(Term::gauss(0.0, 1.0, 0.5));
        let beta_e = Expr::term(Term::tanh_ramp(0.0, 1.0, -1.0, 1.0));
        let alpha = alpha_e.sample(grid, 0).unwrap();
        let beta = beta_e.sample(grid, 0).unwrap();
        let b = crate::model::accretivity_constant(
            &[alpha_e.sample(grid, 2).unwrap()],
            &[beta_e.sample(grid, 1).unwrap()],
        );
        let st = EvolutionStepper::new(FieldCoefficients { alpha, beta }, 1e-2, 0.5).unwrap();
        for phi in h2_test_family(&grid) {
            let r = norm_growth_check(&st, &phi, 0.0, 1.0).unwrap();
            assert!(r <= (b * 1.0f64).exp() * 1.05, "{r} vs {b}");
        }
    }

    #[test]
    fn h2_growth_is_zero_for_constant_diffusion() {
        let st = heat(401, 1e-2);
        let b = measure_h2_growth(&st, &h2_test_family(st.grid()), 1.0).unwrap();
        assert_eq!(b, 0.0);
        let zero = [GridFunction::zeros(*st.grid())];
        assert_eq!(measure_h2_growth(&st, &zero, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn h2_growth_increases_with_coefficient_slopes() {
        use crate::expr::{Expr, Term};
        let grid = GridSpec::new(-10.0, 10.0, 401).unwrap();
        let measure = |slope: f64| {
            let beta = Expr::term(Term::tanh_ramp(0.0, 1.0, -slope, slope)).sample(grid, 0).unwrap();
            let alpha = GridFunction::constant(grid, 1.0).unwrap();
            let st = EvolutionStepper::new(FieldCoefficients { alpha, beta }, 1e-2, 0.5).unwrap();
            measure_h2_growth(&st, &h2_test_family(&grid), 1.0).unwrap()
        };
        let (a, b) = (measure(0.5), measure(2.0));
        assert!(b >= a, "{a} {b}");
    }

    #[test]
    fn upwind_flag_changes_scheme_but_stays_stable() {
        let grid = GridSpec::new(-10.0, 10.0, 201).unwrap();
        let c = ConstantCoefficients { grid, alpha: 1e-4, beta: 1.0 };
        let central = EvolutionStepper::new(c, 0.05, 0.5).unwrap();
        let upwind = EvolutionStepper::new(c, 0.05, 0.5).unwrap().with_upwind(true);
        let phi = gaussian(grid, 0.5, -3.0);
        let a = central.propagate(&phi, 0.0, 2.0).unwrap();
        let b = upwind.propagate(&phi, 0.0, 2.0).unwrap();
        assert!(a.sub(&b).unwrap().norm_l2() > 1e-6);
        assert!(b.norm_l2() <= phi.norm_l2());
    }

    proptest! {
        #[test]
        fn propagate_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, shift in -2.0f64..2.0) {
            let st = heat(101, 0.02);
            let g = *st.grid();
            let f = gaussian(g, 1.0, shift);
            let h = GridFunction::from_fn(g, |x| (x * 0.7).sin() * (-x * x / 4.0).exp()).unwrap();
            let combo = f.scaled(a).unwrap().axpy(b, &h).unwrap();
            let lhs = st.propagate(&combo, 0.0, 0.3).unwrap();
            let rhs = st.propagate(&f, 0.0, 0.3).unwrap().scaled(a).unwrap()
                .axpy(b, &st.propagate(&h, 0.0, 0.3).unwrap()).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().norm_sup() <= 1e-13 * (1.0 + a.abs() + b.abs()));
        }

        #[test]
        fn composition_exact_for_any_split(s in 0.0f64..1.0, t_extra in 0.0f64..1.0) {
            let st = heat(101, 0.02);
            let phi = gaussian(*st.grid(), 1.0, 0.0);
            let c = composition_check(&st, &phi, 0.0, s, s + t_extra).unwrap();
            prop_assert!(c.relative <= 1e-12);
        }
    }
}
