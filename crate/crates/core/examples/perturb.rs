//! Continuous dependence: perturb the initial data and then the diffusion
//! coefficient of one layer, and watch the output distance shrink with epsilon.
//!
//! cargo run --release --example perturb

use std::path::Path;

use combsim::scenario::Scenario;
use combsim::wellposed::{run_plan, DependenceReport, LayerSelect, PerturbationPlan, Shape, Target};

fn show(r: &DependenceReport) {
    println!("{} along {:?}, horizon {:.3}", r.target.name(), r.direction, r.horizon);
    println!("  {:>9} {:>11} {:>11} {:>11} {:>8}", "eps", "input", "output", "d/dt", "ratio");
    for row in &r.rows {
        println!(
            "  {:>9.1e} {:>11.3e} {:>11.3e} {:>11.3e} {:>8.4}",
            row.epsilon, row.input_distance, row.output_distance, row.time_derivative_distance, row.ratio
        );
    }
    println!("  fitted constant {:.4}, spread {:.2e}, passed {}", r.fitted_kappa_tilde, r.ratio_spread, r.passed);
}

fn main() -> combsim::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/constant_2layer.toml");
    let s = Scenario::load(&path)?;

    let mut plan = PerturbationPlan::new(Target::InitialData, vec![1e-1, 1e-2, 1e-3]);
    plan.horizon = Some(0.25);
    show(&run_plan(&s, &plan)?);

    let mut plan = PerturbationPlan::new(Target::Lambda, vec![1e-2, 1e-3, 1e-4]);
    plan.layer = LayerSelect::One(0);
    plan.direction = Shape::TanhBump;
    plan.horizon = Some(0.25);
    show(&run_plan(&s, &plan)?);
    Ok(())
}
