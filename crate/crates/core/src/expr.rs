//! Closed analytic vocabulary for coefficient fields and initial data.
//!
//! Every term has exact derivatives up to third order, so the derivative
//! bounds required of coefficient fields never go through a stencil.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{GridFunction, GridSpec};

/// Highest derivative order supported by [`Expr::derivative`].
pub const MAX_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Term {
    Const(f64),
    /// `amp * exp(-((x - center) / width)^2)`
    Gauss { center: f64, width: f64, amp: f64 },
    /// `lo + (hi - lo) * (1 + tanh((x - center) / width)) / 2`
    TanhRamp {
        center: f64,
        width: f64,
        lo: f64,
        hi: f64,
    },
    /// `amp * sin(freq * x + phase)`
    Sine { freq: f64, amp: f64, phase: f64 },
}

impl Term {
    pub fn gauss(center: f64, width: f64, amp: f64) -> Self {
        Term::Gauss { center, width, amp }
    }

    pub fn tanh_ramp(center: f64, width: f64, lo: f64, hi: f64) -> Self {
        Term::TanhRamp {
            center,
            width,
            lo,
            hi,
        }
    }

    pub fn sine(freq: f64, amp: f64, phase: f64) -> Self {
        Term::Sine { freq, amp, phase }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match *self {
            Term::Const(c) if !c.is_finite() => Err("constant must be finite".into()),
            Term::Gauss { center, width, amp } => {
                if !finite(&[center, width, amp]) || width <= 0.0 {
                    Err("gauss needs finite parameters and width > 0".into())
                } else {
                    Ok(())
                }
            }
            Term::TanhRamp {
                center,
                width,
                lo,
                hi,
            } => {
                if !finite(&[center, width, lo, hi]) || width <= 0.0 {
                    Err("tanh_ramp needs finite parameters and width > 0".into())
                } else {
                    Ok(())
                }
            }
            Term::Sine { freq, amp, phase } if !finite(&[freq, amp, phase]) => {
                Err("sine needs finite parameters".into())
            }
            _ => Ok(()),
        }
    }

    /// `order`-th derivative at `x`.
    pub fn derivative(&self, order: usize, x: f64) -> f64 {
        assert!(order <= MAX_ORDER, "derivative order {order} unsupported");
        match *self {
            Term::Const(c) => {
                if order == 0 {
                    c
                } else {
                    0.0
                }
            }
            Term::Gauss { center, width, amp } => {
                let z = (x - center) / width;
                let e = (-z * z).exp();
                // d^n/dz^n e^{-z^2} = (-1)^n H_n(z) e^{-z^2}
                let hermite = match order {
                    0 => 1.0,
                    1 => -2.0 * z,
                    2 => 4.0 * z * z - 2.0,
                    _ => -(8.0 * z * z * z - 12.0 * z),
                };
                amp * hermite * e / width.powi(order as i32)
            }
            Term::TanhRamp {
                center,
                width,
                lo,
                hi,
            } => {
                let s = ((x - center) / width).tanh();
                let sech2 = 1.0 - s * s;
                let dz = match order {
                    0 => return lo + (hi - lo) * 0.5 * (1.0 + s),
                    1 => sech2,
                    2 => -2.0 * s * sech2,
                    _ => sech2 * (6.0 * s * s - 2.0),
                };
                (hi - lo) * 0.5 * dz / width.powi(order as i32)
            }
            Term::Sine { freq, amp, phase } => {
                let arg = freq * x + phase;
                let trig = match order {
                    0 => arg.sin(),
                    1 => arg.cos(),
                    2 => -arg.sin(),
                    _ => -arg.cos(),
                };
                amp * trig * freq.powi(order as i32)
            }
        }
    }
}

/// Sum of [`Term`]s.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(transparent)]
pub struct Expr(pub Vec<Term>);

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr(vec![Term::Const(c)])
    }

    pub fn term(t: Term) -> Self {
        Expr(vec![t])
    }

    pub fn plus(mut self, t: Term) -> Self {
        self.0.push(t);
        self
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.0.iter().try_for_each(Term::validate)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.derivative(0, x)
    }

    pub fn derivative(&self, order: usize, x: f64) -> f64 {
        self.0.iter().map(|t| t.derivative(order, x)).sum()
    }

    /// Sample the `order`-th derivative on every node.
    pub fn sample(&self, grid: GridSpec, order: usize) -> Result<GridFunction> {
        GridFunction::from_fn(grid, |x| self.derivative(order, x))
    }

    /// Evaluate value and first `orders - 1` derivatives of `x - shift` into
    /// the given output slices.
    pub(crate) fn sample_shifted_into(&self, grid: &GridSpec, shift: f64, outs: &mut [&mut [f64]]) {
        for (order, out) in outs.iter_mut().enumerate() {
            for (i, slot) in out.iter_mut().enumerate() {
                *slot = self.derivative(order, grid.x(i) - shift);
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|t| matches!(t, Term::Const(_)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(e: &Expr, order: usize, x: f64) -> f64 {
        let h = 1e-4;
        (e.derivative(order, x + h) - e.derivative(order, x - h)) / (2.0 * h)
    }

    #[test]
    fn derivatives_agree_with_finite_differences() {
        let e = Expr::term(Term::gauss(0.3, 1.7, 2.0))
            .plus(Term::tanh_ramp(-1.0, 0.8, 0.2, 0.9))
            .plus(Term::sine(0.7, 0.4, 0.1))
            .plus(Term::Const(3.0));
        for &x in &[-3.0, -0.5, 0.0, 0.4, 2.2] {
            for order in 0..MAX_ORDER {
                let analytic = e.derivative(order + 1, x);
                let approx = fd(&e, order, x);
                assert!(
                    (analytic - approx).abs() < 1e-6 * (1.0 + analytic.abs()),
                    "order {} at {x}: {analytic} vs {approx}",
                    order + 1
                );
            }
        }
    }

    #[test]
    fn gaussian_values() {
        let g = Term::gauss(0.0, 1.0, 1.0);
        assert_eq!(g.derivative(0, 0.0), 1.0);
        assert_eq!(g.derivative(2, 0.0), -2.0);
        let r = Term::tanh_ramp(0.0, 1.0, 0.0, 2.0);
        assert_eq!(r.derivative(0, 0.0), 1.0);
        assert_eq!(r.derivative(1, 0.0), 1.0);
    }

    #[test]
    fn validation_rejects_zero_width() {
        assert!(Term::gauss(0.0, 0.0, 1.0).validate().is_err());
        assert!(Term::tanh_ramp(0.0, -1.0, 0.0, 1.0).validate().is_err());
        assert!(Term::Const(f64::NAN).validate().is_err());
        assert!(Expr::constant(1.0).validate().is_ok());
    }
}
