//! Uniform truncated grid, finite-difference derivatives and discrete
//! Sobolev norms.
//!
//! The real line is replaced by `[x_min, x_max]` with homogeneous Dirichlet
//! data outside. Interior derivatives use centred second-order stencils,
//! the two end nodes use one-sided second-order stencils so a
//! [`GridFunction`] never needs ghost values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    x_min: f64,
    x_max: f64,
    nx: usize,
    dx: f64,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, nx: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x_min >= x_max {
            return Err(Error::InvalidGrid(format!(
                "x_min = {x_min} must be below x_max = {x_max}"
            )));
        }
        if nx < 5 {
            return Err(Error::InvalidGrid(format!("nx = {nx}, need at least 5")));
        }
        let dx = (x_max - x_min) / (nx - 1) as f64;
        Ok(Self {
            x_min,
            x_max,
            nx,
            dx,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.nx {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nx).map(|i| self.x(i))
    }

    /// Same grid with twice the resolution (`2 nx - 1` nodes, `dx / 2`).
    pub fn refined(&self) -> Self {
        Self::new(self.x_min, self.x_max, 2 * self.nx - 1).expect("refinement of a valid grid")
    }

    /// Number of nodes in each outer band covering `fraction` of the domain.
    pub fn edge_band(&self, fraction: f64) -> usize {
        (((self.nx - 1) as f64 * fraction).ceil() as usize).max(1)
    }
}

/// Real values sampled on every node of a [`GridSpec`]. Always finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nx() {
            return Err(Error::LengthMismatch {
                expected: grid.nx(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.nx()],
        }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.nx()])
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + s * b)
            .collect();
        Self::new(self.grid, values)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(1.0, other)
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| s * v).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn first_derivative(&self) -> Self {
        let mut out = vec![0.0; self.len()];
        first_derivative_into(&self.values, self.grid.dx(), &mut out);
        Self::new(self.grid, out).expect("derivative of finite data is finite")
    }

    pub fn second_derivative(&self) -> Self {
        let mut out = vec![0.0; self.len()];
        second_derivative_into(&self.values, self.grid.dx(), &mut out);
        Self::new(self.grid, out).expect("derivative of finite data is finite")
    }

    pub fn norm_l2(&self) -> f64 {
        l2(&self.values, self.grid.dx())
    }

    pub fn norm_h1(&self) -> f64 {
        let d1 = self.first_derivative();
        (sq(self.norm_l2()) + sq(d1.norm_l2())).sqrt()
    }

    pub fn norm_h2(&self) -> f64 {
        h2(&self.values, self.grid.dx())
    }

    pub fn norm_sup(&self) -> f64 {
        sup(&self.values)
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::L2 => self.norm_l2(),
            NormKind::H1 => self.norm_h1(),
            NormKind::H2 => self.norm_h2(),
            NormKind::Sup => self.norm_sup(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    L2,
    H1,
    H2,
    Sup,
}

/// Product norm on `n` layers: the maximum of the per-layer norms.
pub fn vector_norm(fs: &[GridFunction], kind: NormKind) -> Result<f64> {
    if let Some(first) = fs.first() {
        if fs.iter().any(|f| f.grid != first.grid) {
            return Err(Error::GridMismatch);
        }
    }
    Ok(fs.iter().map(|f| f.norm(kind)).fold(0.0, f64::max))
}

/// Layerwise difference `a - b`.
pub fn vector_sub(a: &[GridFunction], b: &[GridFunction]) -> Result<Vec<GridFunction>> {
    if a.len() != b.len() {
        return Err(Error::LayerCountMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    a.iter().zip(b).map(|(x, y)| x.sub(y)).collect()
}

/// `sup |f| / ||f||_{H1}`; 0 for the zero function.
pub fn sobolev_embedding_ratio(f: &GridFunction) -> f64 {
    let h1 = f.norm_h1();
    if h1 == 0.0 {
        0.0
    } else {
        f.norm_sup() / h1
    }
}

/// `||f'|| / (||f''||^{1/2} ||f||^{1/2})`, the smallest constant for which the
/// interpolation inequality holds on `f`; `None` when the denominator vanishes.
pub fn gagliardo_nirenberg_ratio(f: &GridFunction) -> Option<f64> {
    let d1 = f.first_derivative().norm_l2();
    let denom = (f.second_derivative().norm_l2() * f.norm_l2()).sqrt();
    (denom > 0.0).then(|| d1 / denom)
}

impl AsRef<[f64]> for GridFunction {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[inline]
fn sq(v: f64) -> f64 {
    v * v
}

pub(crate) fn l2(values: &[f64], dx: f64) -> f64 {
    (dx * values.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

pub(crate) fn sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Discrete H2 norm of raw node values.
pub(crate) fn h2(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    first_derivative_into(values, dx, &mut d1);
    second_derivative_into(values, dx, &mut d2);
    (sq(l2(values, dx)) + sq(l2(&d1, dx)) + sq(l2(&d2, dx))).sqrt()
}

pub(crate) fn first_derivative_into(f: &[f64], dx: f64, out: &mut [f64]) {
    let n = f.len();
    debug_assert!(n >= 3 && out.len() == n);
    let inv2 = 0.5 / dx;
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) * inv2;
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) * inv2;
    }
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) * inv2;
}

pub(crate) fn second_derivative_into(f: &[f64], dx: f64, out: &mut [f64]) {
    let n = f.len();
    debug_assert!(n >= 4 && out.len() == n);
    let inv = 1.0 / (dx * dx);
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) * inv;
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) * inv;
    }
    out[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) * inv;
}
