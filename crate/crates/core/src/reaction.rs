//! Arrhenius kinetics, the coupled source `f = (f_1, ..., f_n)` and its
//! state Jacobian, plus the sampled constants `kappa` (Lipschitz in L2) and
//! `mu` (H2 bound on a ball).
//!
//! Both constants are empirical: they are maxima over a deterministic,
//! seeded family of states and times, never symbolic bounds.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{self, GridFunction, GridSpec};
use crate::model::Model;

/// Below `G_CUTOFF * E` the Arrhenius factor and its derivatives are 0.
pub const G_CUTOFF: f64 = 1e-3;

/// `g(theta) = exp(-E / theta)` for `theta > 0`, 0 otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrhenius {
    pub activation_energy: f64,
}

impl Arrhenius {
    pub fn new(activation_energy: f64) -> Self {
        Self { activation_energy }
    }

    #[inline]
    fn active(&self, theta: f64) -> bool {
        theta > 0.0 && theta > G_CUTOFF * self.activation_energy
    }

    #[inline]
    pub fn g(&self, theta: f64) -> f64 {
        if self.active(theta) {
            (-self.activation_energy / theta).exp()
        } else {
            0.0
        }
    }

    #[inline]
    pub fn d1(&self, theta: f64) -> f64 {
        if self.active(theta) {
            let e = self.activation_energy;
            e / (theta * theta) * (-e / theta).exp()
        } else {
            0.0
        }
    }

    #[inline]
    pub fn d2(&self, theta: f64) -> f64 {
        if self.active(theta) {
            let e = self.activation_energy;
            let t2 = theta * theta;
            (e * e / (t2 * t2) - 2.0 * e / (t2 * theta)) * (-e / theta).exp()
        } else {
            0.0
        }
    }

    pub fn bounds(&self) -> GBounds {
        GBounds::for_activation(self.activation_energy)
    }
}

/// Sup norms of `g`, `g'` and `g''` over the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GBounds {
    pub g0: f64,
    pub g1: f64,
    pub g2: f64,
}

impl GBounds {
    /// With `s = E / theta`: `g' = s^2 e^{-s} / E` peaks at `s = 2`, and
    /// `g'' = (s^4 - 2 s^3) e^{-s} / E^2` peaks in modulus at `s = 3 + sqrt 3`.
    pub fn for_activation(e: f64) -> Self {
        if e <= 0.0 {
            return Self { g0: 1.0, g1: 0.0, g2: 0.0 };
        }
        let s = 3.0 + 3f64.sqrt();
        let h = (-s).exp() * (s.powi(4) - 2.0 * s.powi(3));
        Self {
            g0: 1.0,
            g1: 4.0 * (-2.0f64).exp() / e,
            g2: h / (e * e),
        }
    }
}

/// Anything that can act as the nonlinear right-hand side of the system.
pub trait Source: Sync {
    fn n_layers(&self) -> usize;

    /// Write `f(t, u)` into `out`, layer by layer.
    fn eval_into(&self, t: f64, u: &[Vec<f64>], out: &mut [Vec<f64>]);
}

/// The zero source, for pure transport runs.
#[derive(Debug, Clone, Copy)]
pub struct ZeroSource {
    pub n: usize,
}

impl Source for ZeroSource {
    fn n_layers(&self) -> usize {
        self.n
    }

    fn eval_into(&self, _t: f64, _u: &[Vec<f64>], out: &mut [Vec<f64>]) {
        for o in out {
            o.fill(0.0);
        }
    }
}

#[derive(Debug, Clone)]
struct FrameLayer {
    inv_d: Vec<f64>,
    c_x: Vec<f64>,
    k_b: Vec<f64>,
    d: Vec<f64>,
    y: Vec<f64>,
    q_left: f64,
    q_right: f64,
    loss: f64,
}

/// Every time-dependent quantity the source needs, frozen at one time.
#[derive(Debug, Clone)]
pub struct SourceFrame {
    t: f64,
    layers: Vec<FrameLayer>,
    g: Arrhenius,
    u_e: f64,
}

impl SourceFrame {
    pub fn at(model: &Model, t: f64) -> Self {
        let layers = (0..model.n_layers())
            .map(|i| {
                let s = model.snapshot(i, t);
                let (q_left, q_right) = model.transfer(i);
                FrameLayer {
                    inv_d: s.denom.iter().map(|d| 1.0 / d).collect(),
                    c_x: s.c_x,
                    k_b: s.k_b,
                    d: s.d,
                    y: s.y,
                    q_left,
                    q_right,
                    loss: model.loss(i),
                }
            })
            .collect();
        Self {
            t,
            layers,
            g: Arrhenius::new(model.activation_energy),
            u_e: model.external_temperature,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// `f_i` at every node.
    pub fn eval_layer<V: AsRef<[f64]>>(&self, i: usize, u: &[V], out: &mut [f64]) {
        let l = &self.layers[i];
        let n = self.layers.len();
        let w = u[i].as_ref();
        let below = (i > 0).then(|| u[i - 1].as_ref());
        let above = (i + 1 < n).then(|| u[i + 1].as_ref());
        for x in 0..w.len() {
            let wi = w[x];
            let mut s = -l.c_x[x] * wi + (l.k_b[x] * wi + l.d[x]) * l.y[x] * self.g.g(wi)
                - l.loss * (wi - self.u_e);
            if let Some(b) = below {
                s -= l.q_left * (wi - b[x]);
            }
            if let Some(a) = above {
                s += l.q_right * (a[x] - wi);
            }
            out[x] = s * l.inv_d[x];
        }
    }

    /// Diagonal Jacobian entry `d f_i / d w_i` at node `x` when `w_i = w`.
    #[inline]
    fn diag(&self, i: usize, x: usize, w: f64) -> f64 {
        let l = &self.layers[i];
        let num = -l.c_x[x] + l.k_b[x] * l.y[x] * self.g.g(w)
            + (l.k_b[x] * w + l.d[x]) * l.y[x] * self.g.d1(w)
            - l.q_left
            - l.q_right
            - l.loss;
        num * l.inv_d[x]
    }

    /// Full `n x n` Jacobian at node `x`. Row `i` has `q_{i-1}/D_i` and
    /// `q_i/D_i` next to the diagonal and nothing else.
    pub fn jacobian_at<V: AsRef<[f64]>>(&self, u: &[V], x: usize) -> Vec<Vec<f64>> {
        let n = self.layers.len();
        let mut j = vec![vec![0.0; n]; n];
        for i in 0..n {
            let l = &self.layers[i];
            j[i][i] = self.diag(i, x, u[i].as_ref()[x]);
            if i > 0 {
                j[i][i - 1] = l.q_left * l.inv_d[x];
            }
            if i + 1 < n {
                j[i][i + 1] = l.q_right * l.inv_d[x];
            }
        }
        j
    }

    /// `max_i sum_j sup |J_ij|` where the sup runs over nodes and over
    /// `w_i` in `levels` (the diagonal entry depends on `w_i` only).
    fn row_sum_bound(&self, levels: &[f64]) -> f64 {
        (0..self.layers.len())
            .map(|i| {
                let l = &self.layers[i];
                let mut diag_sup = 0.0f64;
                let mut inv_d_sup = 0.0f64;
                for x in 0..l.inv_d.len() {
                    inv_d_sup = inv_d_sup.max(l.inv_d[x].abs());
                    for &w in levels {
                        diag_sup = diag_sup.max(self.diag(i, x, w).abs());
                    }
                }
                diag_sup + (l.q_left + l.q_right) * inv_d_sup
            })
            .fold(0.0, f64::max)
    }
}

/// The system source bound to a model and a ball radius.
#[derive(Debug)]
pub struct ReactionContext {
    model: Arc<Model>,
    rho: f64,
    frozen: OnceLock<SourceFrame>,
}

impl Clone for ReactionContext {
    fn clone(&self) -> Self {
        Self {
            model: Arc::clone(&self.model),
            rho: self.rho,
            frozen: OnceLock::new(),
        }
    }
}

impl ReactionContext {
    pub fn new(model: Arc<Model>, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidInitialData(format!(
                "ball radius must be positive, got {rho}"
            )));
        }
        Ok(Self {
            model,
            rho,
            frozen: OnceLock::new(),
        })
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(Arc::clone(&self.model), rho)
    }

    pub fn arrhenius(&self) -> Arrhenius {
        Arrhenius::new(self.model.activation_energy)
    }

    /// Frame at `t`; shared across calls when the fuel is time-independent.
    pub fn frame(&self, t: f64) -> std::borrow::Cow<'_, SourceFrame> {
        if self.model.fuel.is_autonomous() {
            std::borrow::Cow::Borrowed(self.frozen.get_or_init(|| SourceFrame::at(&self.model, 0.0)))
        } else {
            std::borrow::Cow::Owned(SourceFrame::at(&self.model, t))
        }
    }

    fn check_layers<V>(&self, w: &[V]) -> Result<()> {
        if w.len() != self.model.n_layers() {
            return Err(Error::LayerCountMismatch {
                expected: self.model.n_layers(),
                got: w.len(),
            });
        }
        Ok(())
    }

    fn sample_times(&self, horizon: f64, count: usize) -> Vec<f64> {
        if self.model.fuel.is_autonomous() || count < 2 || horizon <= 0.0 {
            return vec![0.0];
        }
        (0..count)
            .map(|k| horizon * k as f64 / (count - 1) as f64)
            .collect()
    }
}

impl Source for ReactionContext {
    fn n_layers(&self) -> usize {
        self.model.n_layers()
    }

    fn eval_into(&self, t: f64, u: &[Vec<f64>], out: &mut [Vec<f64>]) {
        let frame = self.frame(t);
        for (i, o) in out.iter_mut().enumerate() {
            frame.eval_layer(i, u, o);
        }
    }
}

pub fn source_eval(ctx: &ReactionContext, t: f64, w: &[GridFunction]) -> Result<Vec<GridFunction>> {
    ctx.check_layers(w)?;
    let grid = *ctx.model.grid();
    if w.iter().any(|f| *f.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    let frame = ctx.frame(t);
    (0..w.len())
        .map(|i| {
            let mut out = vec![0.0; grid.nx()];
            frame.eval_layer(i, w, &mut out);
            GridFunction::new(grid, out)
        })
        .collect()
}

/// Per-node Jacobians `J[x][i][j] = d f_i / d w_j`.
pub fn source_jacobian(ctx: &ReactionContext, t: f64, w: &[GridFunction]) -> Result<Vec<Vec<Vec<f64>>>> {
    ctx.check_layers(w)?;
    let frame = ctx.frame(t);
    Ok((0..ctx.model.grid().nx()).map(|x| frame.jacobian_at(w, x)).collect())
}

/// Deterministic sampling parameters; recorded in every report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingConfig {
    pub seed: u64,
    pub time_samples: usize,
    pub random_states: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            time_samples: 5,
            random_states: 8,
        }
    }
}

/// A sampled constant together with where it was attained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledConstant {
    pub value: f64,
    pub radius: f64,
    pub times: Vec<f64>,
    pub states: usize,
    pub config: SamplingConfig,
}

/// Geometric levels `2^(j/8)` up to the first one reaching `radius`.
///
/// The levels are absolute, so the family for a smaller radius is a prefix
/// of the family for a larger one.
pub fn radius_levels(radius: f64) -> Vec<f64> {
    if radius <= 0.0 {
        return Vec::new();
    }
    let j_top = (8.0 * radius.log2()).ceil() as i64;
    let j_min = j_top.min(-80);
    (j_min..=j_top).map(|j| 2f64.powf(j as f64 / 8.0)).collect()
}

/// Pointwise temperature levels in `[-s, s]`: the geometric ladder, 256
/// uniform levels, and the peak of `g'`.
fn scalar_levels(s: f64, e: f64) -> Vec<f64> {
    let mut pos = radius_levels(s);
    pos.retain(|&v| v <= s);
    pos.extend((1..=256).map(|k| s * k as f64 / 256.0));
    if e > 0.0 && 0.5 * e <= s {
        pos.push(0.5 * e);
    }
    let mut all: Vec<f64> = pos.iter().map(|v| -v).collect();
    all.push(0.0);
    all.extend(pos);
    all
}

/// Unit-shape library: Gaussians, tanh plateaus, and a sign-changing
/// modulated sine, each on the whole grid.
pub fn shape_library(grid: &GridSpec) -> Vec<Vec<f64>> {
    let l = grid.x_max() - grid.x_min();
    let mid = 0.5 * (grid.x_max() + grid.x_min());
    let mut shapes: Vec<Box<dyn Fn(f64) -> f64>> = Vec::new();
    for w in [0.5, 1.0, 2.0, 4.0] {
        shapes.push(Box::new(move |x| (-((x - mid) / w).powi(2)).exp()));
    }
    for c in [-0.25 * l, 0.25 * l] {
        shapes.push(Box::new(move |x| (-((x - mid - c) / 1.5).powi(2)).exp()));
    }
    for half in [l / 8.0, l / 4.0] {
        shapes.push(Box::new(move |x| {
            0.5 * (((x - mid + half) / 1.0).tanh() - ((x - mid - half) / 1.0).tanh())
        }));
    }
    shapes.push(Box::new(move |x| (x - mid).sin() * (-((x - mid) / 3.0).powi(2)).exp()));
    shapes
        .iter()
        .map(|f| grid.nodes().map(f).collect())
        .collect()
}

/// Vector states of unit vector H2 norm: uniform mixtures, rotated and
/// sign-alternating layer mixtures, and seeded random combinations.
pub fn state_family(grid: &GridSpec, n: usize, seed: u64, random_states: usize) -> Vec<Vec<Vec<f64>>> {
    let dx = grid.dx();
    let shapes = shape_library(grid);
    let m = shapes.len();
    let mut states: Vec<Vec<Vec<f64>>> = Vec::new();
    for k in 0..m {
        states.push(vec![shapes[k].clone(); n]);
        states.push((0..n).map(|i| shapes[(k + i) % m].clone()).collect());
        states.push(
            (0..n)
                .map(|i| {
                    let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                    shapes[k].iter().map(|v| s * v).collect()
                })
                .collect(),
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_states {
        let state = (0..n)
            .map(|_| {
                let mut v = vec![0.0; grid.nx()];
                for _ in 0..3 {
                    let k = rng.gen_range(0..m);
                    let c: f64 = rng.gen_range(-1.0..1.0);
                    for (a, b) in v.iter_mut().zip(&shapes[k]) {
                        *a += c * b;
                    }
                }
                v
            })
            .collect();
        states.push(state);
    }
    for s in &mut states {
        let norm = s.iter().map(|v| grid::h2(v, dx)).fold(0.0, f64::max);
        if norm > 0.0 {
            for v in s.iter_mut() {
                v.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
    states.retain(|s| s.iter().any(|v| v.iter().any(|x| *x != 0.0)));
    states
}

/// Empirical L2 Lipschitz constant on the ball of the given H2 radius.
///
/// The diagonal of the Jacobian depends on `w_i` alone, so a scan over
/// scalar levels `|w_i| <= radius` (which covers every state of H2 norm
/// up to the radius, since the discrete sup norm is below the H1 norm)
/// bounds every row at every node. The result is
/// `max_i sum_j sup_{x,t,w} |J_ij|`, the constant for the max-over-layers
/// product norm.
pub fn lipschitz_estimate(ctx: &ReactionContext, radius: f64, horizon: f64, cfg: SamplingConfig) -> SampledConstant {
    let times = ctx.sample_times(horizon, cfg.time_samples);
    let levels = scalar_levels(radius, ctx.model.activation_energy);
    let value = times
        .par_iter()
        .map(|&t| ctx.frame(t).row_sum_bound(&levels))
        .reduce(|| 0.0, f64::max);
    SampledConstant {
        value,
        radius,
        states: levels.len(),
        times,
        config: cfg,
    }
}

fn scaled_states(
    ctx: &ReactionContext,
    radius: f64,
    cfg: SamplingConfig,
) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
    let grid = ctx.model.grid();
    let family = state_family(grid, ctx.model.n_layers(), cfg.seed, cfg.random_states);
    (family, radius_levels(radius))
}

/// Empirical `sup ||f(t, w)||_{H2}` over the sampling family scaled to every
/// level up to `radius`, both signs.
pub fn source_h2_bound(ctx: &ReactionContext, radius: f64, horizon: f64, cfg: SamplingConfig) -> SampledConstant {
    let times = ctx.sample_times(horizon, cfg.time_samples);
    let (family, levels) = scaled_states(ctx, radius, cfg);
    let dx = ctx.model.grid().dx();
    let nx = ctx.model.grid().nx();
    let n = ctx.model.n_layers();
    let frames: Vec<_> = times.iter().map(|&t| ctx.frame(t).into_owned()).collect();
    let jobs: Vec<(usize, usize)> = (0..family.len())
        .flat_map(|s| (0..levels.len()).map(move |l| (s, l)))
        .collect();
    let value = jobs
        .par_iter()
        .map(|&(s, l)| {
            let mut best = 0.0f64;
            let mut w = vec![vec![0.0; nx]; n];
            let mut out = vec![0.0; nx];
            for sign in [1.0, -1.0] {
                for (wi, base) in w.iter_mut().zip(&family[s]) {
                    for (a, b) in wi.iter_mut().zip(base) {
                        *a = sign * levels[l] * b;
                    }
                }
                for f in &frames {
                    for i in 0..n {
                        f.eval_layer(i, &w, &mut out);
                        best = best.max(grid::h2(&out, dx));
                    }
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    SampledConstant {
        value,
        radius,
        times,
        states: 2 * family.len() * levels.len(),
        config: cfg,
    }
}

/// Empirical H2 Lipschitz constant: max of
/// `||f(w) - f(v)||_{H2} / ||w - v||_{H2}` over family pairs in the ball.
pub fn h2_lipschitz_estimate(ctx: &ReactionContext, radius: f64, horizon: f64, cfg: SamplingConfig) -> SampledConstant {
    let times = ctx.sample_times(horizon, cfg.time_samples);
    let (family, _) = scaled_states(ctx, radius, cfg);
    let dx = ctx.model.grid().dx();
    let nx = ctx.model.grid().nx();
    let n = ctx.model.n_layers();
    let frames: Vec<_> = times.iter().map(|&t| ctx.frame(t).into_owned()).collect();
    let m = family.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).filter(|(a, b)| a != b).collect();
    let value = pairs
        .par_iter()
        .map(|&(a, b)| {
            let w: Vec<Vec<f64>> = family[a].iter().map(|v| v.iter().map(|x| x * radius).collect()).collect();
            let v: Vec<Vec<f64>> = family[b].iter().map(|v| v.iter().map(|x| x * 0.5 * radius).collect()).collect();
            let dist = w
                .iter()
                .zip(&v)
                .map(|(p, q)| {
                    let d: Vec<f64> = p.iter().zip(q).map(|(x, y)| x - y).collect();
                    grid::h2(&d, dx)
                })
                .fold(0.0, f64::max);
            if dist == 0.0 {
                return 0.0;
            }
            let (mut fw, mut fv) = (vec![0.0; nx], vec![0.0; nx]);
            let mut best = 0.0f64;
            for f in &frames {
                let mut num = 0.0f64;
                for i in 0..n {
                    f.eval_layer(i, &w, &mut fw);
                    f.eval_layer(i, &v, &mut fv);
                    for (p, q) in fw.iter_mut().zip(&fv) {
                        *p -= q;
                    }
                    num = num.max(grid::h2(&fw, dx));
                }
                best = best.max(num / dist);
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    SampledConstant {
        value,
        radius,
        times,
        states: pairs.len(),
        config: cfg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Expr, Term};
    use crate::model::{Field, FuelConcentration, FuelLayer, LayerParams};

    fn grid() -> GridSpec {
        GridSpec::new(-10.0, 10.0, 201).unwrap()
    }

    fn model(
        n: usize,
        layer: LayerParams,
        y: Expr,
        q: f64,
        qbar: (f64, f64),
        e: f64,
        ue: f64,
    ) -> Arc<Model> {
        let g = *layer.a.grid();
        let fuel = FuelConcentration::new(g, vec![FuelLayer::moving(y, 0.0); n]).unwrap();
        Arc::new(Model::new(g, vec![layer; n], fuel, vec![q; n - 1], qbar, e, ue).unwrap())
    }

    fn arrhenius_model(n: usize) -> Arc<Model> {
        let g = grid();
        let mut p = LayerParams::constant(g, 1.0, 0.5, 0.3, 0.5, 1.5, 1.0).unwrap();
        p.c = Field::from_expr(&Expr::constant(0.3).plus(Term::gauss(0.0, 2.0, 0.2)), g).unwrap();
        let y = Expr::term(Term::tanh_ramp(1.0, 1.0, 0.1, 0.9));
        model(n, p, y, 0.5, (0.1, 0.2), 1.0, 0.0)
    }

    fn gf(g: GridSpec, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::from_fn(g, f).unwrap()
    }

    #[test]
    fn arrhenius_values_and_cutoff() {
        let g = Arrhenius::new(1.0);
        assert_eq!(g.g(-1.0), 0.0);
        assert_eq!(g.g(0.0), 0.0);
        assert_eq!(g.d1(0.0), 0.0);
        assert_eq!(g.d2(0.0), 0.0);
        for e in [0.5, 1.0, 7.0] {
            assert!((Arrhenius::new(e).g(e) - (-1.0f64).exp()).abs() < 1e-16);
        }
        for &theta in &[1e-3, 5e-4, 1e-6] {
            assert_eq!(g.g(theta), 0.0);
            assert_eq!(g.d1(theta), 0.0);
            assert_eq!(g.d2(theta), 0.0);
        }
    }

    #[test]
    fn arrhenius_derivatives_match_finite_differences() {
        for e in [0.2, 1.0, 3.0] {
            let g = Arrhenius::new(e);
            for &theta in &[0.02 * e, 0.1 * e, 0.3 * e, e, 4.0 * e] {
                let h = 1e-6 * theta;
                let fd1 = (g.g(theta + h) - g.g(theta - h)) / (2.0 * h);
                let fd2 = (g.d1(theta + h) - g.d1(theta - h)) / (2.0 * h);
                assert!((fd1 - g.d1(theta)).abs() <= 1e-4 * g.d1(theta).abs());
                assert!((fd2 - g.d2(theta)).abs() <= 1e-4 * g.d2(theta).abs() + 1e-300);
            }
        }
    }

    #[test]
    fn arrhenius_decays_monotonically_towards_zero() {
        let g = Arrhenius::new(1.0);
        let thetas: Vec<f64> = (1..200).map(|k| 0.25 * k as f64 / 200.0).collect();
        for w in thetas.windows(2) {
            assert!(g.g(w[0]) <= g.g(w[1]));
            assert!(g.d1(w[0]) <= g.d1(w[1]));
        }
        // g'' changes sign at theta = E/2; below 0.2 it increases towards 0 from 0
        for w in thetas.windows(2).filter(|w| w[1] < 0.2) {
            assert!(g.d2(w[0]).abs() <= g.d2(w[1]).abs());
        }
    }

    #[test]
    fn g_bounds_dominate_dense_scan() {
        for e in [0.3, 1.0, 5.0] {
            let g = Arrhenius::new(e);
            let b = g.bounds();
            let mut m = (0.0f64, 0.0f64, 0.0f64);
            for k in 1..200_000 {
                let theta = e * k as f64 / 10_000.0;
                m.0 = m.0.max(g.g(theta));
                m.1 = m.1.max(g.d1(theta).abs());
                m.2 = m.2.max(g.d2(theta).abs());
            }
            assert!(m.0 <= b.g0 && m.1 <= b.g1 * (1.0 + 1e-12) && m.2 <= b.g2 * (1.0 + 1e-12));
            assert!(m.1 > 0.999 * b.g1 && m.2 > 0.999 * b.g2);
        }
    }

    #[test]
    fn source_vanishes_without_drivers() {
        let g = grid();
        let p = LayerParams::constant(g, 1.0, 1.0, 1.0, 0.7, 2.0, 1.0).unwrap();
        let m = model(3, p, Expr::constant(0.5), 0.0, (0.0, 0.0), 1.0, 0.0);
        let ctx = ReactionContext::new(m, 1.0).unwrap();
        let w = vec![gf(g, |x| -(x * x) - 0.1); 3];
        for f in source_eval(&ctx, 0.0, &w).unwrap() {
            assert!(f.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn transfer_terms_cancel_on_equal_layers() {
        let g = grid();
        let p = LayerParams::constant(g, 1.0, 1.0, 1.0, 0.0, 2.0, 0.0).unwrap();
        let m = model(2, p, Expr::constant(0.5), 0.8, (0.0, 0.0), 1.0, 0.0);
        let ctx = ReactionContext::new(m, 1.0).unwrap();
        let w = vec![gf(g, |x| (-x * x).exp()); 2];
        for f in source_eval(&ctx, 0.0, &w).unwrap() {
            assert!(f.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_node_hand_evaluation() {
        let g = grid();
        let p = LayerParams::constant(g, 1.0, 1.0, 1.0, 0.0, 2.0, 2.0).unwrap();
        let m = model(3, p, Expr::constant(1.0), 0.0, (0.0, 0.0), 1.0, 0.0);
        let ctx = ReactionContext::new(m, 1.0).unwrap();
        let w = vec![GridFunction::constant(g, 1.0).unwrap(); 3];
        let f = source_eval(&ctx, 0.0, &w).unwrap();
        let expected = (-1.0f64).exp();
        for layer in &f {
            assert!((layer.values()[100] - expected).abs() < 1e-16);
        }
    }

    #[test]
    fn source_matches_scalar_oracle_per_layer_casing() {
        let m = arrhenius_model(3);
        let ctx = ReactionContext::new(Arc::clone(&m), 1.0).unwrap();
        let g = grid();
        let w = vec![
            gf(g, |x| 2.0 * (-(x * x) / 4.0).exp()),
            gf(g, |x| (x / 3.0).sin()),
            gf(g, |x| 1.5 * (-(x - 1.0).powi(2)).exp() - 0.2),
        ];
        let f = source_eval(&ctx, 0.0, &w).unwrap();
        let arr = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
        for x in (0..g.nx()).step_by(7) {
            let xv = g.x(x);
            let y = 0.1 + 0.8 * 0.5 * (1.0 + (xv - 1.0).tanh());
            let den = 1.0 + 0.5 * y;
            let cx = 0.2 * (-2.0 * xv / 4.0) * (-(xv / 2.0).powi(2)).exp();
            let u: Vec<f64> = w.iter().map(|l| l.values()[x]).collect();
            let react = |ui: f64| -cx * ui + (1.0 * 0.5 * ui + 0.5) * y * arr(ui);
            let f1 = (react(u[0]) + 0.5 * (u[1] - u[0]) - 0.1 * u[0]) / den;
            let f2 = (react(u[1]) - 0.5 * (u[1] - u[0]) + 0.5 * (u[2] - u[1])) / den;
            let f3 = (react(u[2]) - 0.5 * (u[2] - u[1]) - 0.2 * u[2]) / den;
            for (k, e) in [f1, f2, f3].iter().enumerate() {
                assert!((f[k].values()[x] - e).abs() < 1e-13, "layer {k} node {x}");
            }
        }
    }

    #[test]
    fn layer_count_is_checked() {
        let ctx = ReactionContext::new(arrhenius_model(2), 1.0).unwrap();
        let w = vec![GridFunction::zeros(grid())];
        assert!(matches!(
            source_eval(&ctx, 0.0, &w),
            Err(Error::LayerCountMismatch { expected: 2, got: 1 })
        ));
        assert!(ReactionContext::new(arrhenius_model(2), 0.0).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences_and_band() {
        let m = arrhenius_model(4);
        let ctx = ReactionContext::new(Arc::clone(&m), 1.0).unwrap();
        let g = grid();
        let w: Vec<GridFunction> = (0..4)
            .map(|i| gf(g, move |x| (1.0 + i as f64 * 0.3) * (-(x - i as f64).powi(2) / 5.0).exp()))
            .collect();
        let jac = source_jacobian(&ctx, 0.0, &w).unwrap();
        for x in (0..g.nx()).step_by(11) {
            for (i, row) in jac[x].iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if i.abs_diff(j) >= 2 {
                        assert_eq!(v, 0.0);
                    }
                }
            }
            for j in 0..4 {
                let h = 1e-6;
                let mut wp = w.clone();
                let mut wm = w.clone();
                let mut vp = wp[j].values().to_vec();
                vp[x] += h;
                wp[j] = GridFunction::new(g, vp).unwrap();
                let mut vm = wm[j].values().to_vec();
                vm[x] -= h;
                wm[j] = GridFunction::new(g, vm).unwrap();
                let fp = source_eval(&ctx, 0.0, &wp).unwrap();
                let fm = source_eval(&ctx, 0.0, &wm).unwrap();
                for i in 0..4 {
                    let fd = (fp[i].values()[x] - fm[i].values()[x]) / (2.0 * h);
                    let a = jac[x][i][j];
                    assert!((fd - a).abs() <= 1e-6 * a.abs().max(1.0), "{x} {i} {j}: {fd} vs {a}");
                }
            }
        }
    }

    #[test]
    fn zero_drivers_give_zero_constants() {
        let g = grid();
        let p = LayerParams::constant(g, 1.0, 1.0, 1.0, 0.0, 2.0, 0.0).unwrap();
        let m = model(2, p, Expr::constant(0.5), 0.0, (0.0, 0.0), 1.0, 0.0);
        let ctx = ReactionContext::new(m, 1.0).unwrap();
        let cfg = SamplingConfig::default();
        assert_eq!(lipschitz_estimate(&ctx, 2.0, 1.0, cfg).value, 0.0);
        assert_eq!(source_h2_bound(&ctx, 2.0, 1.0, cfg).value, 0.0);
    }

    #[test]
    fn pure_transfer_kappa_is_max_row_sum() {
        let g = grid();
        let p = LayerParams::constant(g, 1.0, 0.0, 0.0, 0.0, 2.0, 0.0).unwrap();
        let fuel = FuelConcentration::new(g, vec![FuelLayer::moving(Expr::constant(0.5), 0.0); 3]).unwrap();
        let m = Arc::new(Model::new(g, vec![p; 3], fuel, vec![0.5, 2.0], (0.25, 0.0), 1.0, 0.0).unwrap());
        let ctx = ReactionContext::new(m, 1.0).unwrap();
        // rows: [-(0.5+0.25), 0.5, 0], [0.5, -2.5, 2], [0, 2, -2]
        let k = lipschitz_estimate(&ctx, 3.0, 1.0, SamplingConfig::default());
        assert_eq!(k.value, 5.0);
        assert_eq!(k.times, vec![0.0]);
    }

    #[test]
    fn kappa_bounds_random_lipschitz_pairs() {
        let m = arrhenius_model(2);
        let ctx = ReactionContext::new(Arc::clone(&m), 1.0).unwrap();
        let radius = 2.0;
        let cfg = SamplingConfig::default();
        let kappa = lipschitz_estimate(&ctx, radius, 1.0, cfg).value;
        let g = grid();
        let family = state_family(&g, 2, 7, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = &family[rng.gen_range(0..family.len())];
            let b = &family[rng.gen_range(0..family.len())];
            let (ra, rb): (f64, f64) = (rng.gen_range(0.0..radius), rng.gen_range(0.0..radius));
            let w: Vec<GridFunction> = a.iter().map(|v| GridFunction::new(g, v.iter().map(|x| ra * x).collect()).unwrap()).collect();
            let v: Vec<GridFunction> = b.iter().map(|v| GridFunction::new(g, v.iter().map(|x| rb * x).collect()).unwrap()).collect();
            let fw = source_eval(&ctx, 0.0, &w).unwrap();
            let fv = source_eval(&ctx, 0.0, &v).unwrap();
            let lhs = grid::vector_norm(&grid::vector_sub(&fw, &fv).unwrap(), grid::NormKind::L2).unwrap();
            let rhs = grid::vector_norm(&grid::vector_sub(&w, &v).unwrap(), grid::NormKind::L2).unwrap();
            assert!(lhs <= kappa * rhs * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn mu_single_sample_and_monotone_in_radius() {
        let m = arrhenius_model(2);
        let ctx = ReactionContext::new(Arc::clone(&m), 1.0).unwrap();
        let cfg = SamplingConfig::default();
        let mut last = 0.0;
        for r in [0.1, 0.5, 1.0, 2.0, 4.0] {
            let mu = source_h2_bound(&ctx, r, 1.0, cfg).value;
            assert!(mu >= last);
            last = mu;
        }
        // a one-element family reduces to one evaluation
        let g = grid();
        let phi = vec![gf(g, |x| (-x * x).exp()); 2];
        let f = source_eval(&ctx, 0.0, &phi).unwrap();
        let direct = grid::vector_norm(&f, grid::NormKind::H2).unwrap();
        let frame = ctx.frame(0.0);
        let mut out = vec![0.0; g.nx()];
        let mut best = 0.0f64;
        for i in 0..2 {
            frame.eval_layer(i, &phi, &mut out);
            best = best.max(grid::h2(&out, g.dx()));
        }
        assert_eq!(best, direct);
    }

    #[test]
    fn kappa_independent_of_time_sampling_for_static_fuel() {
        let ctx = ReactionContext::new(arrhenius_model(2), 1.0).unwrap();
        let a = lipschitz_estimate(&ctx, 1.0, 1.0, SamplingConfig { time_samples: 2, ..Default::default() });
        let b = lipschitz_estimate(&ctx, 1.0, 1.0, SamplingConfig { time_samples: 9, ..Default::default() });
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn composite_with_sign_change_has_finite_h2() {
        let g = GridSpec::new(-5.0, 5.0, 2001).unwrap();
        let a = Arrhenius::new(1.0);
        let w = gf(g, |x| x);
        let comp = w.map(|t| a.g(t)).unwrap();
        assert!(comp.norm_h2().is_finite());
        let near_zero = comp.values()[1000..1006].iter().all(|&v| v < 1e-12);
        assert!(near_zero);
    }

    #[test]
    fn radius_levels_are_nested() {
        let a = radius_levels(0.7);
        let b = radius_levels(3.0);
        assert!(a.len() < b.len());
        assert_eq!(&b[..a.len()], &a[..]);
        assert!(*a.last().unwrap() >= 0.7);
    }
}
