//! The discrete propagator on its own: compare against the exact heat kernel
//! for constant coefficients and check the evolution-family identities.
//!
//! cargo run --release --example evolution

use std::f64::consts::PI;
use std::sync::Arc;

use combsim::evolution::{composition_check, norm_growth_check, EvolutionStepper, ModelCoefficients};
use combsim::expr::{Expr, Term};
use combsim::model::{FuelConcentration, FuelLayer, LayerParams, Model};
use combsim::{GridFunction, GridSpec};

fn main() -> combsim::Result<()> {
    // alpha = lambda / (a + b y) = 0.5, beta = c / (a + b y) = 0.4
    let (alpha, beta) = (0.5, 0.4);
    let model_on = |grid: GridSpec| -> combsim::Result<Arc<Model>> {
        let params = LayerParams::constant(grid, 1.0, 1.0, 0.8, 0.5, 1.0, 1.0)?;
        let fuel = FuelConcentration::new(grid, vec![FuelLayer::moving(Expr::constant(1.0), 0.0); 2])?;
        Ok(Arc::new(Model::new(grid, vec![params.clone(), params], fuel, vec![0.0], (0.0, 0.0), 1.0, 0.0)?))
    };

    let w0 = 1.0;
    for nx in [301, 601, 1201] {
        let grid = GridSpec::new(-15.0, 15.0, nx)?;
        let phi = Expr::term(Term::gauss(0.0, w0, 1.0)).sample(grid, 0)?;
        let st = EvolutionStepper::new(ModelCoefficients::new(model_on(grid)?, 0), 0.005, 0.5)?;
        let t = 1.0;
        let u = st.propagate(&phi, 0.0, t)?;
        // exp(-x^2/w^2) spreads to width^2 = w^2 + 4 alpha t and drifts by beta t
        let w2 = w0 * w0 + 4.0 * alpha * t;
        let exact = GridFunction::from_fn(grid, |x| (w0 * w0 / w2).sqrt() * (-(x - beta * t).powi(2) / w2).exp())?;
        println!("nx {nx:<5} L2 error vs heat kernel {:.3e}", u.sub(&exact)?.norm_l2());
    }

    let grid = GridSpec::new(-15.0, 15.0, 1201)?;
    let model = model_on(grid)?;
    let st = EvolutionStepper::new(ModelCoefficients::new(model, 0), 0.01, 0.5)?;
    let probe = GridFunction::from_fn(grid, |x| (-(x * x) / 4.0).exp() * (PI * x / 3.0).sin())?;
    let c = composition_check(&st, &probe, 0.0, 0.37, 1.0)?;
    println!("U(1,0) - U(1,0.37)U(0.37,0): {:.3e} (relative {:.3e})", c.defect, c.relative);
    println!("||U(1,0)phi|| / ||phi|| = {:.6}", norm_growth_check(&st, &probe, 0.0, 1.0)?);
    Ok(())
}
