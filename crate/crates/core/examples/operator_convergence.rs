//! Distance between perturbed and unperturbed generators in B(H2, L2),
//! measured on unit-H2 probes against the sup-norm coefficient bound.
//!
//! cargo run --release --example operator_convergence

use std::path::Path;

use combsim::scenario::Scenario;
use combsim::wellposed::{operator_convergence_check, PerturbationPlan, Target};

fn main() -> combsim::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/arrhenius_2layer.toml");
    let s = Scenario::load(&path)?;
    for target in [Target::A, Target::B, Target::Cx, Target::Lambda, Target::Y] {
        let plan = PerturbationPlan::new(target, vec![1e-1, 1e-2, 1e-3]);
        println!("{}", target.name());
        for row in operator_convergence_check(&s, &plan)? {
            println!(
                "  eps {:>7.1e}  measured {:.3e}  bound {:.3e}  squared {:.3e}  {}",
                row.epsilon,
                row.measured,
                row.bound,
                row.squared_bound,
                if row.holds { "ok" } else { "VIOLATED" }
            );
        }
    }
    Ok(())
}
